//! Finite-mode multiplicative noise.
//!
//! The noise is `−i Σ_m (φ e_m |u|^{γ−1}u dβ_m + b_m u dβ'_m)` with bounded
//! coefficient fields `e_m` and optional linear multipliers `b_m`, each driven
//! by its own Brownian motion. The Itô form carries the correction drift
//! `−½ Σ|e_m|² φ |u|^{2(γ−1)}u − ½ Σ|b_m|² u`.
//!
//! Brownian increments are counter-addressed: the increment of mode `m` at
//! step `l` of path `path_index` depends only on `(seed, path_index, m, l)`.

use std::path::Path;

use num_complex::Complex64;
use num_rational::Rational64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::to_f64;
use crate::grid::{ComplexField, Grid};

const MAX_STEPS_LOG2: u32 = 40;
const MAX_MODES: usize = 1 << 24;

/// Stateless uniform/Gaussian source addressed by `(seed, stream, slot)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    rng: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        CounterRng { rng }
    }

    /// Positions the generator at `slot`; each slot spans two 64-bit words.
    pub fn seek(&mut self, slot: u128) {
        self.rng.set_word_pos(slot * 4);
    }

    /// Uniform in `(0, 1]`.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One standard normal per slot (Box–Muller, cosine branch).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn mode_slot(mode: usize, step: usize) -> u128 {
    ((mode as u128) << MAX_STEPS_LOG2) | step as u128
}

/// Standard normal for `(seed, path_index, mode, step)`, by random access.
pub fn standard_normal_at(seed: u64, path_index: u64, mode: usize, step: usize) -> f64 {
    let mut rng = CounterRng::new(seed, path_index);
    rng.seek(mode_slot(mode, step));
    rng.next_gaussian()
}

/// Uniform time mesh `0, T/steps, …, T`.
pub fn uniform_mesh(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|j| horizon * j as f64 / steps as f64).collect()
}

/// Increments `Δβ_m(t_l) ~ N(0, t_{l+1} − t_l)` of independent Brownian motions.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    mesh: Vec<f64>,
    /// `increments[m][l]`
    increments: Vec<Vec<f64>>,
    seed: u64,
    path_index: u64,
}

pub fn sample_brownian_path(mesh: &[f64], modes: usize, seed: u64, path_index: u64) -> Result<BrownianPath> {
    check_mesh(mesh)?;
    if modes > MAX_MODES {
        return Err(Error::OutOfRange(format!("{modes} noise modes exceeds {MAX_MODES}")));
    }
    let steps = mesh.len().saturating_sub(1);
    if steps as u128 >= 1u128 << MAX_STEPS_LOG2 {
        return Err(Error::OutOfRange(format!("{steps} steps exceeds 2^{MAX_STEPS_LOG2}")));
    }
    let mut rng = CounterRng::new(seed, path_index);
    let increments = (0..modes)
        .map(|m| {
            rng.seek(mode_slot(m, 0));
            mesh.windows(2).map(|w| (w[1] - w[0]).sqrt() * rng.next_gaussian()).collect()
        })
        .collect();
    Ok(BrownianPath { mesh: mesh.to_vec(), increments, seed, path_index })
}

fn check_mesh(mesh: &[f64]) -> Result<()> {
    if !mesh.iter().all(|t| t.is_finite()) || mesh.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::MeshMismatch("mesh must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl BrownianPath {
    /// Builds a path from explicit increments (one row per mode).
    pub fn from_increments(mesh: Vec<f64>, increments: Vec<Vec<f64>>) -> Result<Self> {
        check_mesh(&mesh)?;
        let steps = mesh.len().saturating_sub(1);
        if let Some(row) = increments.iter().find(|r| r.len() != steps) {
            return Err(Error::LengthMismatch { expected: steps, got: row.len() });
        }
        Ok(BrownianPath { mesh, increments, seed: 0, path_index: 0 })
    }

    pub fn zeros(mesh: Vec<f64>, modes: usize) -> Result<Self> {
        let steps = mesh.len().saturating_sub(1);
        Self::from_increments(mesh, vec![vec![0.0; steps]; modes])
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }
    pub fn modes(&self) -> usize {
        self.increments.len()
    }
    pub fn steps(&self) -> usize {
        self.mesh.len().saturating_sub(1)
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn path_index(&self) -> u64 {
        self.path_index
    }
    pub fn increments(&self, mode: usize) -> &[f64] {
        &self.increments[mode]
    }

    /// `(Δβ_0(t_l), …, Δβ_{M−1}(t_l))`.
    pub fn increments_at(&self, step: usize) -> Vec<f64> {
        self.increments.iter().map(|row| row[step]).collect()
    }

    pub(crate) fn fill_increments_at(&self, step: usize, out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.increments) {
            *o = row[step];
        }
    }

    /// `β_m(t) = Σ_{t_l < t} Δβ_m(t_l)` (left-point; `t` on the mesh).
    pub fn value_at(&self, mode: usize, t: f64) -> f64 {
        let tol = 1e-12 * t.abs().max(1.0);
        self.mesh
            .iter()
            .zip(&self.increments[mode])
            .take_while(|(tl, _)| **tl < t - tol)
            .map(|(_, db)| db)
            .sum()
    }

    /// Path on every `factor`-th mesh point with summed increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::MeshMismatch(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.steps()
            )));
        }
        let mesh = self.mesh.iter().step_by(factor).copied().collect();
        let increments =
            self.increments.iter().map(|row| row.chunks(factor).map(|c| c.iter().sum()).collect()).collect();
        Ok(BrownianPath { mesh, increments, seed: self.seed, path_index: self.path_index })
    }

    /// The antithetic path `−β`.
    pub fn negated(&self) -> Self {
        let increments = self.increments.iter().map(|row| row.iter().map(|x| -x).collect()).collect();
        BrownianPath { increments, ..self.clone() }
    }

    /// Keeps modes `range`, used to split coefficient and linear drivers.
    pub fn select_modes(&self, keep: &[usize]) -> Self {
        let increments = keep.iter().map(|&m| self.increments[m].clone()).collect();
        BrownianPath { increments, ..self.clone() }
    }
}

/// Construction recipe for a coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `(re + i·im)·exp(−|x − center|² / (2 width²))`
    GaussianBump {
        re: f64,
        #[serde(default)]
        im: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Field stored in the binary layout of [`ComplexField::to_bytes`].
    File { path: String },
}

impl CoefficientSpec {
    /// Samples the coefficient on `grid`; relative file paths resolve against `base`.
    pub fn build(&self, grid: Grid, base: Option<&Path>) -> Result<ComplexField> {
        match self {
            CoefficientSpec::Constant { re, im } => {
                let z = Complex64::new(*re, *im);
                ComplexField::from_fn(grid, |_| z)
            }
            CoefficientSpec::GaussianBump { re, im, center, width } => {
                if center.len() != grid.d() {
                    return Err(Error::Config(format!(
                        "gaussian_bump center has {} coordinates, grid has dimension {}",
                        center.len(),
                        grid.d()
                    )));
                }
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("gaussian_bump width {width} must be positive")));
                }
                let z = Complex64::new(*re, *im);
                ComplexField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                    z * (-r2 / (2.0 * width * width)).exp()
                })
            }
            CoefficientSpec::File { path } => {
                let p = Path::new(path);
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                let field = ComplexField::from_bytes(&std::fs::read(&full)?)?;
                if *field.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(field)
            }
        }
    }
}

/// Coefficient fields `e_m` and linear multipliers `b_m` on a common grid.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: Grid,
    coeffs: Vec<ComplexField>,
    linear: Vec<ComplexField>,
    conservative: bool,
    linear_conservative: bool,
    coeff_sup_sq_sum: f64,
    linear_sup_sq_sum: f64,
    /// Σ_m |e_m(x)|²
    coeff_abs_sq: Vec<f64>,
    /// Σ_m |b_m(x)|²
    linear_abs_sq: Vec<f64>,
}

/// Tolerance on imaginary parts for a coefficient to count as real.
pub const REAL_TOLERANCE: f64 = 1e-14;

fn is_real(f: &ComplexField) -> bool {
    f.values().iter().all(|z| z.im.abs() <= REAL_TOLERANCE)
}

fn abs_sq_sum(grid: &Grid, fields: &[ComplexField]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for f in fields {
        for (o, z) in out.iter_mut().zip(f.values()) {
            *o += z.norm_sqr();
        }
    }
    out
}

impl NoiseModel {
    pub fn new(grid: Grid, coeffs: Vec<ComplexField>, linear: Vec<ComplexField>) -> Result<Self> {
        for (index, f) in coeffs.iter().chain(&linear).enumerate() {
            if *f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            if !f.is_finite() {
                return Err(Error::UnboundedCoefficient { index });
            }
        }
        let sup_sq = |fs: &[ComplexField]| fs.iter().map(|f| f.lp_norm(f64::INFINITY).powi(2)).sum::<f64>();
        Ok(NoiseModel {
            grid,
            conservative: coeffs.iter().all(is_real),
            linear_conservative: linear.iter().all(is_real),
            coeff_sup_sq_sum: sup_sq(&coeffs),
            linear_sup_sq_sum: sup_sq(&linear),
            coeff_abs_sq: abs_sq_sum(&grid, &coeffs),
            linear_abs_sq: abs_sq_sum(&grid, &linear),
            coeffs,
            linear,
        })
    }

    /// No noise at all.
    pub fn none(grid: Grid) -> Self {
        Self::new(grid, Vec::new(), Vec::new()).expect("empty model is valid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn coeffs(&self) -> &[ComplexField] {
        &self.coeffs
    }
    pub fn linear_coeffs(&self) -> &[ComplexField] {
        &self.linear
    }
    /// Every `e_m` is real-valued.
    pub fn is_conservative(&self) -> bool {
        self.conservative
    }
    /// Every `e_m` and every `b_m` is real-valued: the Stratonovich noise is
    /// then a pointwise phase rotation.
    pub fn is_fully_conservative(&self) -> bool {
        self.conservative && self.linear_conservative
    }
    /// `Σ_m ‖e_m‖∞²`
    pub fn coeff_sup_sq_sum(&self) -> f64 {
        self.coeff_sup_sq_sum
    }
    /// `Σ_m ‖b_m‖∞²`
    pub fn linear_sup_sq_sum(&self) -> f64 {
        self.linear_sup_sq_sum
    }
    /// Number of driving Brownian motions, `M + M'`.
    pub fn total_modes(&self) -> usize {
        self.coeffs.len() + self.linear.len()
    }
    pub fn is_empty(&self) -> bool {
        self.total_modes() == 0
    }

    fn check(&self, u: &ComplexField) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `out += scale · [−½ Σ|e_m|² φ |u|^{2(γ−1)}u − ½ Σ|b_m|² u]`
    pub(crate) fn add_drift(&self, u: &[Complex64], gamma: f64, phi: f64, scale: f64, out: &mut [Complex64]) {
        let has_coeffs = !self.coeffs.is_empty() && phi != 0.0;
        let has_linear = !self.linear.is_empty();
        if !has_coeffs && !has_linear {
            return;
        }
        let linear_gamma = gamma == 1.0;
        for i in 0..u.len() {
            let z = u[i];
            let mut factor = 0.0;
            if has_coeffs {
                let w = if linear_gamma { 1.0 } else { z.norm().powf(2.0 * (gamma - 1.0)) };
                factor += self.coeff_abs_sq[i] * phi * w;
            }
            if has_linear {
                factor += self.linear_abs_sq[i];
            }
            out[i] += z * (-0.5 * factor * scale);
        }
    }

    /// `out += −i Σ e_m φ |u|^{γ−1}u Δβ_m − i Σ b_m u Δβ'_m`
    pub(crate) fn add_noise(&self, u: &[Complex64], gamma: f64, phi: f64, increments: &[f64], out: &mut [Complex64]) {
        let m = self.coeffs.len();
        let minus_i = Complex64::new(0.0, -1.0);
        let linear_gamma = gamma == 1.0;
        for i in 0..u.len() {
            let z = u[i];
            let mut acc = Complex64::new(0.0, 0.0);
            if phi != 0.0 {
                let mut s = Complex64::new(0.0, 0.0);
                for (e, db) in self.coeffs.iter().zip(&increments[..m]) {
                    s += e.values()[i] * *db;
                }
                let w = if linear_gamma { 1.0 } else { z.norm().powf(gamma - 1.0) };
                acc += s * (phi * w);
            }
            for (b, db) in self.linear.iter().zip(&increments[m..]) {
                acc += b.values()[i] * *db;
            }
            out[i] += minus_i * acc * z;
        }
    }

    /// Pointwise phase `Σ e_m |u|^{γ−1} Δβ_m + Σ b_m Δβ'_m` (real for a fully
    /// conservative model); `u ↦ u·exp(−i·phase)` is the exact Stratonovich flow.
    pub(crate) fn phase_rotate(&self, u: &mut [Complex64], gamma: f64, increments: &[f64]) {
        let m = self.coeffs.len();
        let linear_gamma = gamma == 1.0;
        for (i, slot) in u.iter_mut().enumerate() {
            let z = *slot;
            let mut phase = 0.0;
            if m > 0 {
                let mut s = 0.0;
                for (e, db) in self.coeffs.iter().zip(&increments[..m]) {
                    s += e.values()[i].re * db;
                }
                let w = if linear_gamma { 1.0 } else { z.norm().powf(gamma - 1.0) };
                phase += s * w;
            }
            for (b, db) in self.linear.iter().zip(&increments[m..]) {
                phase += b.values()[i].re * db;
            }
            *slot = z * Complex64::from_polar(1.0, -phase);
        }
    }
}

/// Builds a model from specs; conservativity and summability sums are derived.
pub fn make_noise_model(
    coeffs: &[CoefficientSpec],
    linear: &[CoefficientSpec],
    grid: Grid,
    base: Option<&Path>,
) -> Result<NoiseModel> {
    let build = |specs: &[CoefficientSpec], offset: usize| -> Result<Vec<ComplexField>> {
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| match s.build(grid, base) {
                Err(Error::NonFinite(_)) => Err(Error::UnboundedCoefficient { index: offset + i }),
                other => other,
            })
            .collect()
    };
    let c = build(coeffs, 0)?;
    let l = build(linear, coeffs.len())?;
    NoiseModel::new(grid, c, l)
}

/// `−½ (Σ|e_m|²) φ |u|^{2(γ−1)}u − ½ (Σ|b_m|²) u`
pub fn stratonovich_drift(u: &ComplexField, model: &NoiseModel, gamma: Rational64, phi: f64) -> Result<ComplexField> {
    model.check(u)?;
    let mut out = vec![Complex64::new(0.0, 0.0); u.values().len()];
    model.add_drift(u.values(), to_f64(gamma), phi, 1.0, &mut out);
    Ok(ComplexField::from_values_unchecked(*u.grid(), out))
}

/// `−i Σ e_m φ |u|^{γ−1}u Δβ_m − i Σ b_m u Δβ'_m`; `increments` lists the
/// `M` coefficient modes followed by the `M'` linear modes.
pub fn noise_term(
    u: &ComplexField,
    model: &NoiseModel,
    gamma: Rational64,
    phi: f64,
    increments: &[f64],
) -> Result<ComplexField> {
    model.check(u)?;
    if increments.len() != model.total_modes() {
        return Err(Error::LengthMismatch { expected: model.total_modes(), got: increments.len() });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); u.values().len()];
    model.add_noise(u.values(), to_f64(gamma), phi, increments, &mut out);
    Ok(ComplexField::from_values_unchecked(*u.grid(), out))
}

/// Exact pathwise solution of the noise-only Stratonovich dynamics,
/// `u(t,x) = u₀(x)·exp(−i Σ e_m(x)|u₀(x)|^{γ−1} β_m(t) − i Σ b_m(x) β'_m(t))`.
///
/// Valid because real coefficients make the flow a pointwise phase rotation,
/// so `|u(t,x)| = |u₀(x)|` and the phase velocity is frozen.
pub fn diffusion_only_exact(
    u0: &ComplexField,
    model: &NoiseModel,
    gamma: Rational64,
    path: &BrownianPath,
    t: f64,
) -> Result<ComplexField> {
    model.check(u0)?;
    if !model.is_fully_conservative() {
        return Err(Error::NotConservative);
    }
    if path.modes() != model.total_modes() {
        return Err(Error::LengthMismatch { expected: model.total_modes(), got: path.modes() });
    }
    let betas: Vec<f64> = (0..path.modes()).map(|m| path.value_at(m, t)).collect();
    let mut values = u0.values().to_vec();
    model.phase_rotate(&mut values, to_f64(gamma), &betas);
    Ok(ComplexField::from_values_unchecked(*u0.grid(), values))
}

/// Euler–Maruyama for the Itô form of the noise-only dynamics, returning the
/// state at the last mesh point of `path`.
pub fn euler_maruyama_diffusion_only(
    u0: &ComplexField,
    model: &NoiseModel,
    gamma: Rational64,
    path: &BrownianPath,
) -> Result<ComplexField> {
    model.check(u0)?;
    if path.modes() != model.total_modes() {
        return Err(Error::LengthMismatch { expected: model.total_modes(), got: path.modes() });
    }
    let gamma = to_f64(gamma);
    let mut u = u0.values().to_vec();
    let mut next = u.clone();
    let mut incs = vec![0.0; path.modes()];
    for (l, w) in path.mesh().windows(2).enumerate() {
        let dt = w[1] - w[0];
        path.fill_increments_at(l, &mut incs);
        next.copy_from_slice(&u);
        model.add_drift(&u, gamma, 1.0, dt, &mut next);
        model.add_noise(&u, gamma, 1.0, &incs, &mut next);
        std::mem::swap(&mut u, &mut next);
    }
    ComplexField::from_values(*u0.grid(), u)
}
