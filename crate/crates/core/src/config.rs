//! Run configuration: a single JSON document.
//!
//! Physical inputs (`params`, `grid`, `horizon`, `dt`, `noise`,
//! `initial_condition`) have no defaults. Solver tolerances default to
//! `picard_tol = 1e-10`, `picard_max_iters = 100`, `contraction_target = 0.5`,
//! an initial Picard window equal to the whole horizon, no truncation,
//! `scheme = "picard"` and `seed = 0`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exponents::ModelParams;
use crate::grid::{ComplexField, Grid};
use crate::noise::{make_noise_model, CoefficientSpec, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Picard,
    Splitstep,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(Scheme::Picard),
            "splitstep" => Ok(Scheme::Splitstep),
            other => Err(Error::Config(format!("unknown scheme {other:?}; expected picard or splitstep"))),
        }
    }
}

/// Coefficient fields `e_m` and linear multipliers `b_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub coefficients: Vec<CoefficientSpec>,
    #[serde(default)]
    pub linear: Vec<CoefficientSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `A·exp(−|x−c|²/(2w²))·e^{ik·x}`; `center` and `momentum` default to 0.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
    },
    /// `A·e^{ik·x}`
    PlaneWave { amplitude: f64, wavevector: Vec<f64> },
    /// Field in the binary layout of [`ComplexField::to_bytes`].
    File { path: String },
}

impl InitialCondition {
    pub fn build(&self, grid: Grid, base: Option<&Path>) -> Result<ComplexField> {
        let d = grid.d();
        let vector = |name: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![0.0; d]),
                Some(v) if v.len() == d && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
                Some(v) => Err(Error::Config(format!("{name} must hold {d} finite numbers, got {v:?}"))),
            }
        };
        match self {
            InitialCondition::Gaussian { amplitude, width, center, momentum } => {
                if !(*width > 0.0) || !amplitude.is_finite() {
                    return Err(Error::Config(format!(
                        "gaussian needs a finite amplitude and positive width, got {amplitude} and {width}"
                    )));
                }
                let c = vector("center", center)?;
                let k = vector("momentum", momentum)?;
                ComplexField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                    let phase: f64 = x.iter().zip(&k).map(|(a, b)| a * b).sum();
                    Complex64::from_polar(amplitude * (-r2 / (2.0 * width * width)).exp(), phase)
                })
            }
            InitialCondition::PlaneWave { amplitude, wavevector } => {
                let k = vector("wavevector", &Some(wavevector.clone()))?;
                ComplexField::from_fn(grid, |x| {
                    Complex64::from_polar(*amplitude, x.iter().zip(&k).map(|(a, b)| a * b).sum())
                })
            }
            InitialCondition::File { path } => {
                let full = resolve(base, path);
                let field = ComplexField::from_bytes(&std::fs::read(&full)?)?;
                if *field.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(field)
            }
        }
    }
}

fn resolve(base: Option<&Path>, path: &str) -> PathBuf {
    let p = Path::new(path);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    100
}
fn default_target() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}

/// Everything needed to reproduce one solve (the Brownian path is derived
/// from `seed` and a path index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct SimConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub noise: NoiseSpec,
    pub initial_condition: InitialCondition,
    /// `None` runs without truncation (`θ ≡ 1`).
    pub truncation_level: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub contraction_target: f64,
    /// First Picard window length; `None` means the whole horizon.
    pub initial_window: Option<f64>,
    pub seed: u64,
    /// `false` zeroes the Laplacian (`U(t) = I`).
    pub dispersion: bool,
    /// `false` removes the `λ|u|^{α−1}u` term.
    pub nonlinearity: bool,
    /// Directory against which relative file paths resolve; not serialised.
    pub base_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    params: ModelParams,
    grid: Grid,
    horizon: f64,
    dt: f64,
    #[serde(default)]
    scheme: Scheme,
    noise: NoiseSpec,
    initial_condition: InitialCondition,
    #[serde(default)]
    truncation_level: Option<f64>,
    #[serde(default = "default_tol")]
    picard_tol: f64,
    #[serde(default = "default_max_iters")]
    picard_max_iters: usize,
    #[serde(default = "default_target")]
    contraction_target: f64,
    #[serde(default)]
    initial_window: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "yes")]
    dispersion: bool,
    #[serde(default = "yes")]
    nonlinearity: bool,
}

impl TryFrom<RawConfig> for SimConfig {
    type Error = Error;
    fn try_from(r: RawConfig) -> Result<Self> {
        let c = SimConfig {
            params: r.params,
            grid: r.grid,
            horizon: r.horizon,
            dt: r.dt,
            scheme: r.scheme,
            noise: r.noise,
            initial_condition: r.initial_condition,
            truncation_level: r.truncation_level,
            picard_tol: r.picard_tol,
            picard_max_iters: r.picard_max_iters,
            contraction_target: r.contraction_target,
            initial_window: r.initial_window,
            seed: r.seed,
            dispersion: r.dispersion,
            nonlinearity: r.nonlinearity,
            base_dir: None,
        };
        c.validate()?;
        Ok(c)
    }
}

impl From<SimConfig> for RawConfig {
    fn from(c: SimConfig) -> Self {
        RawConfig {
            params: c.params,
            grid: c.grid,
            horizon: c.horizon,
            dt: c.dt,
            scheme: c.scheme,
            noise: c.noise,
            initial_condition: c.initial_condition,
            truncation_level: c.truncation_level,
            picard_tol: c.picard_tol,
            picard_max_iters: c.picard_max_iters,
            contraction_target: c.contraction_target,
            initial_window: c.initial_window,
            seed: c.seed,
            dispersion: c.dispersion,
            nonlinearity: c.nonlinearity,
        }
    }
}

/// Number of `dt` steps in `len`, if `dt` divides it (to 1e-9 relative).
fn whole_steps(len: f64, dt: f64) -> Option<usize> {
    let k = (len / dt).round();
    (k >= 1.0 && (k * dt - len).abs() <= 1e-9 * len && k < 1e12).then_some(k as usize)
}

impl SimConfig {
    /// Defaults for everything except the physical inputs.
    pub fn new(
        params: ModelParams,
        grid: Grid,
        horizon: f64,
        dt: f64,
        noise: NoiseSpec,
        initial_condition: InitialCondition,
    ) -> Result<Self> {
        let c = SimConfig {
            params,
            grid,
            horizon,
            dt,
            scheme: Scheme::Picard,
            noise,
            initial_condition,
            truncation_level: None,
            picard_tol: default_tol(),
            picard_max_iters: default_max_iters(),
            contraction_target: default_target(),
            initial_window: None,
            seed: 0,
            dispersion: true,
            nonlinearity: true,
            base_dir: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid.d() != self.params.d() as usize {
            return bad(format!("grid dimension {} differs from d = {}", self.grid.d(), self.params.d()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon T = {} must be positive and finite", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive and finite", self.dt));
        }
        if whole_steps(self.horizon, self.dt).is_none() {
            return bad(format!("dt = {} must divide T = {}", self.dt, self.horizon));
        }
        if let Some(level) = self.truncation_level {
            if !(level > 0.0) {
                return bad(format!("truncation_level = {level} must be positive"));
            }
        }
        if !(self.picard_tol > 0.0 && self.picard_tol.is_finite()) {
            return bad(format!("picard_tol = {} must be positive", self.picard_tol));
        }
        if self.picard_max_iters == 0 {
            return bad("picard_max_iters must be at least 1".into());
        }
        if !(self.contraction_target > 0.0 && self.contraction_target < 1.0) {
            return bad(format!("contraction_target = {} must lie in (0, 1)", self.contraction_target));
        }
        if let Some(w) = self.initial_window {
            if !(w > 0.0 && w <= self.horizon * (1.0 + 1e-12)) || whole_steps(w, self.dt).is_none() {
                return bad(format!("initial_window = {w} must be a multiple of dt within (0, T]"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        whole_steps(self.horizon, self.dt).expect("validated")
    }

    pub(crate) fn initial_window_steps(&self) -> usize {
        self.initial_window.and_then(|w| whole_steps(w, self.dt)).unwrap_or_else(|| self.steps())
    }

    pub fn truncation(&self) -> f64 {
        self.truncation_level.unwrap_or(f64::INFINITY)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::from_json(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact serialisation, hex-encoded.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn build_noise(&self) -> Result<NoiseModel> {
        make_noise_model(&self.noise.coefficients, &self.noise.linear, self.grid, self.base_dir.as_deref())
    }

    pub fn build_initial(&self) -> Result<ComplexField> {
        self.initial_condition.build(self.grid, self.base_dir.as_deref())
    }
}
