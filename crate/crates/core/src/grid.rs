//! Periodic box grids, complex fields and the discrete Lebesgue/Bochner norms
//! behind the running norm process `Z_t`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{ModelParams, ZExponents};

/// Periodic box `[−L/2, L/2)^d` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct Grid {
    d: usize,
    n: usize,
    length: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    d: usize,
    n: usize,
    length: f64,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;
    fn try_from(r: RawGrid) -> Result<Self> {
        Grid::new(r.d, r.n, r.length)
    }
}

impl From<Grid> for RawGrid {
    fn from(g: Grid) -> Self {
        RawGrid { d: g.d, n: g.n, length: g.length }
    }
}

/// Largest total point count accepted for a grid (2^24).
pub const MAX_POINTS: usize = 1 << 24;

impl Grid {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("points per axis {n} must be a power of two >= 2")));
        }
        if n.checked_pow(d as u32).is_none_or(|total| total > MAX_POINTS) {
            return Err(Error::InvalidGrid(format!("{n}^{d} points exceeds {MAX_POINTS}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("side length {length} must be positive and finite")));
        }
        Ok(Grid { d, n, length })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Coordinate of index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    /// Wavenumber of FFT bin `i`, in `(2π/L)·{−n/2, …, n/2−1}`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n as isize;
        let i = i as isize;
        let m = if i < n / 2 { i } else { i - n };
        2.0 * std::f64::consts::PI / self.length * m as f64
    }

    /// Per-axis indices of a row-major flat index (last axis fastest).
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.d).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.d {
            x[axis] = self.coordinate(idx[axis]);
        }
        x
    }

    /// `|k|²` for every flat index.
    pub fn wavenumber_squares(&self) -> Vec<f64> {
        (0..self.len())
            .map(|flat| {
                let idx = self.unravel(flat);
                (0..self.d).map(|a| self.wavenumber(idx[a]).powi(2)).sum()
            })
            .collect()
    }

    /// Whether `|x_a| ≥ L/4` on some axis, i.e. outside the central half-box.
    pub fn is_outer(&self, flat: usize) -> bool {
        let x = self.point(flat);
        (0..self.d).any(|a| x[a].abs() >= 0.25 * self.length)
    }
}

/// Complex field sampled on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

const HEADER_BYTES: usize = 24;

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        ComplexField { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(ComplexField { grid, values })
    }

    /// Samples `f` at every grid point; `f` receives the first `d` coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|flat| {
                let x = grid.point(flat);
                f(&x[..grid.d])
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ComplexField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `(Σ|f_i|^p h^d)^{1/p}`, or `max|f_i|` for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_slice(&self.values, p, self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// Discrete mass `‖f‖₂²`.
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Mass carried outside the central half-box.
    pub fn outer_mass(&self) -> f64 {
        let h = self.grid.cell_volume();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_outer(*i))
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            * h
    }

    pub fn distance_l2(&self, other: &ComplexField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    /// `‖self − other‖_p`.
    pub fn distance_lp(&self, other: &ComplexField, p: f64) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let diff: Vec<Complex64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(lp_norm_slice(&diff, p, self.grid.cell_volume()))
    }

    pub fn scaled(&self, c: Complex64) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|z| z * c).collect() }
    }

    /// Binary layout: `d`, `n` as little-endian u64, `L` as little-endian f64,
    /// then interleaved `(re, im)` little-endian f64 in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 16 * self.values.len());
        out.extend_from_slice(&(self.grid.d as u64).to_le_bytes());
        out.extend_from_slice(&(self.grid.n as u64).to_le_bytes());
        out.extend_from_slice(&self.grid.length.to_le_bytes());
        for z in &self.values {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Decode(format!("field header needs {HEADER_BYTES} bytes, got {}", bytes.len())));
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8-byte slice") };
        let d = u64::from_le_bytes(word(0));
        let n = u64::from_le_bytes(word(1));
        let length = f64::from_le_bytes(word(2));
        let d = usize::try_from(d).map_err(|_| Error::Decode(format!("dimension {d} too large")))?;
        let n = usize::try_from(n).map_err(|_| Error::Decode(format!("size {n} too large")))?;
        let grid = Grid::new(d, n, length).map_err(|e| Error::Decode(e.to_string()))?;
        let body = &bytes[HEADER_BYTES..];
        if body.len() != 16 * grid.len() {
            return Err(Error::Decode(format!(
                "field body has {} bytes, expected {}",
                body.len(),
                16 * grid.len()
            )));
        }
        let values = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Self::from_values(grid, values).map_err(|e| Error::Decode(e.to_string()))
    }
}

pub(crate) fn lp_norm_slice(values: &[Complex64], p: f64, cell_volume: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    if p == 2.0 {
        let s: f64 = values.iter().map(|z| z.norm_sqr()).sum();
        return (s * cell_volume).sqrt();
    }
    let s: f64 = values.iter().map(|z| z.norm().powf(p)).sum();
    (s * cell_volume).powf(1.0 / p)
}

/// Floating-point copies of the exponents in `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormExponents {
    pub p: f64,
    pub q: f64,
    pub p_tilde: f64,
    /// `f64::INFINITY` for the running-sup component.
    pub q_tilde: f64,
}

impl From<ZExponents> for NormExponents {
    fn from(z: ZExponents) -> Self {
        use crate::exponents::to_f64;
        NormExponents {
            p: to_f64(z.p),
            q: to_f64(z.q),
            p_tilde: to_f64(z.p_tilde),
            q_tilde: z.q_tilde.to_f64(),
        }
    }
}

impl NormExponents {
    pub fn for_params(params: &ModelParams) -> Result<Self> {
        params.z_exponents().map(Self::from)
    }
}

/// Raw left-endpoint sums `Σ‖u(t_l)‖^q Δt_l` for both components of `Z_t`
/// (a running max for an infinite time exponent).
///
/// Two accumulators over adjacent intervals merge by adding sums, which is
/// exactly the window-chaining rule for `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZAccumulator {
    q: f64,
    q_tilde: f64,
    sum: f64,
    sum_tilde: f64,
}

fn accumulate(sum: f64, norm: f64, q: f64, dt: f64) -> f64 {
    if q.is_infinite() {
        sum.max(norm)
    } else {
        sum + norm.powf(q) * dt
    }
}

fn finish(sum: f64, q: f64) -> f64 {
    if q.is_infinite() {
        sum
    } else {
        sum.powf(1.0 / q)
    }
}

impl ZAccumulator {
    pub fn new(exps: &NormExponents) -> Self {
        ZAccumulator { q: exps.q, q_tilde: exps.q_tilde, sum: 0.0, sum_tilde: 0.0 }
    }

    /// Adds one left-endpoint cell `[t_l, t_l + dt)` with the spatial norms
    /// `‖u(t_l)‖_{α+1}` and `‖u(t_l)‖_{2γ}`.
    pub fn push(&mut self, norm_p: f64, norm_p_tilde: f64, dt: f64) {
        self.sum = accumulate(self.sum, norm_p, self.q, dt);
        self.sum_tilde = accumulate(self.sum_tilde, norm_p_tilde, self.q_tilde, dt);
    }

    pub fn pushed(mut self, norm_p: f64, norm_p_tilde: f64, dt: f64) -> Self {
        self.push(norm_p, norm_p_tilde, dt);
        self
    }

    /// Accumulator over the concatenation of `self`'s interval and `later`'s.
    pub fn chain(&self, later: &ZAccumulator) -> ZAccumulator {
        let merge = |a: f64, b: f64, q: f64| if q.is_infinite() { a.max(b) } else { a + b };
        ZAccumulator {
            q: self.q,
            q_tilde: self.q_tilde,
            sum: merge(self.sum, later.sum, self.q),
            sum_tilde: merge(self.sum_tilde, later.sum_tilde, self.q_tilde),
        }
    }

    pub fn components(&self) -> (f64, f64) {
        (finish(self.sum, self.q), finish(self.sum_tilde, self.q_tilde))
    }

    pub fn value(&self) -> f64 {
        let (a, b) = self.components();
        a + b
    }
}

/// Time-stamped states together with running mass and `Z_t` components.
#[derive(Debug, Clone)]
pub struct Trajectory {
    exps: NormExponents,
    times: Vec<f64>,
    states: Vec<ComplexField>,
    /// `(‖u(t_j)‖_{α+1}, ‖u(t_j)‖_{2γ})`
    spatial_norms: Vec<(f64, f64)>,
    running_mass: Vec<f64>,
    z_components: Vec<(f64, f64)>,
    acc: ZAccumulator,
    keep_states: bool,
}

impl Trajectory {
    pub fn new(exps: NormExponents, initial: ComplexField) -> Self {
        Self::starting_at(exps, 0.0, initial)
    }

    /// Records norms, masses and `Z` at every time but keeps only the latest state.
    pub fn lean(exps: NormExponents, initial: ComplexField) -> Self {
        let mut t = Self::new(exps, initial);
        t.keep_states = false;
        t
    }

    /// Whether every state is retained.
    pub fn keeps_states(&self) -> bool {
        self.keep_states
    }

    pub(crate) fn starting_at(exps: NormExponents, t0: f64, initial: ComplexField) -> Self {
        let norms = (initial.lp_norm(exps.p), initial.lp_norm(exps.p_tilde));
        let mass = initial.mass();
        Trajectory {
            exps,
            times: vec![t0],
            states: vec![initial],
            spatial_norms: vec![norms],
            running_mass: vec![mass],
            z_components: vec![(0.0, 0.0)],
            acc: ZAccumulator::new(&exps),
            keep_states: true,
        }
    }

    /// Appends `u(t)`; `t` must exceed the last time and `u` must share the grid.
    pub fn push(&mut self, t: f64, state: ComplexField) -> Result<()> {
        let last_t = *self.times.last().expect("trajectory is never empty");
        if !(t > last_t) {
            return Err(Error::MeshMismatch(format!("time {t} does not exceed {last_t}")));
        }
        self.states[0].ensure_same_grid(&state)?;
        let (np, npt) = *self.spatial_norms.last().expect("non-empty");
        self.acc.push(np, npt, t - last_t);
        self.times.push(t);
        self.spatial_norms.push((state.lp_norm(self.exps.p), state.lp_norm(self.exps.p_tilde)));
        self.running_mass.push(state.mass());
        self.z_components.push(self.acc.components());
        if self.keep_states {
            self.states.push(state);
        } else {
            self.states[0] = state;
        }
        Ok(())
    }

    pub fn exponents(&self) -> &NormExponents {
        &self.exps
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    /// All states, or only the latest for a lean trajectory.
    pub fn states(&self) -> &[ComplexField] {
        &self.states
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn last_state(&self) -> &ComplexField {
        self.states.last().expect("non-empty")
    }
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }
    /// Discrete masses `‖u(t_j)‖₂²`.
    pub fn running_mass(&self) -> &[f64] {
        &self.running_mass
    }
    /// `(‖u‖_{L^q(0,t_j;L^{α+1})}, ‖u‖_{L^{q̃}(0,t_j;L^{2γ})})` at each mesh time.
    pub fn z_components(&self) -> &[(f64, f64)] {
        &self.z_components
    }
    pub fn spatial_norms(&self) -> &[(f64, f64)] {
        &self.spatial_norms
    }
    /// Accumulator over the cells `[t_l, t_{l+1})` with `t_{l+1} ≤ t`.
    pub fn accumulator_until(&self, t: f64) -> Result<ZAccumulator> {
        let end = self.final_time();
        let tol = 1e-12 * end.abs().max(1.0);
        if !(t >= self.times[0] - tol && t <= end + tol) {
            return Err(Error::TimeOutOfRange { t, end });
        }
        let mut acc = ZAccumulator::new(&self.exps);
        for (w, (np, npt)) in self.times.windows(2).zip(&self.spatial_norms) {
            if w[1] > t + tol {
                break;
            }
            acc.push(*np, *npt, w[1] - w[0]);
        }
        Ok(acc)
    }

    /// Accumulator over the whole recorded interval.
    pub fn accumulator(&self) -> &ZAccumulator {
        &self.acc
    }

    pub fn z_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.z_components.iter().map(|(a, b)| a + b)
    }

    pub fn sup_l2(&self) -> f64 {
        self.running_mass.iter().copied().fold(0.0, f64::max).sqrt()
    }

    /// Index of the last mesh time `≤ t` (mesh times within 1e-12 relative count as equal).
    pub fn index_at_or_before(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        let k = self.times.partition_point(|&s| s <= t + tol);
        k.checked_sub(1)
    }
}

/// `(Σ_j ‖u(t_j)‖_p^q Δt_j)^{1/q}` over `[0, t_end]` with left-endpoint
/// cells clipped at `t_end`; the running max of `‖u(t_j)‖_p`, `t_j < t_end`,
/// for `q = ∞`.
pub fn bochner_norm(traj: &Trajectory, q: f64, p: f64, t_end: f64) -> Result<f64> {
    let times = traj.times();
    if times.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let start = times[0];
    let end = traj.final_time();
    let tol = 1e-12 * end.abs().max(1.0);
    if !(t_end >= start - tol && t_end <= end + tol) {
        return Err(Error::TimeOutOfRange { t: t_end, end });
    }
    if !traj.keeps_states() {
        return Err(Error::InvalidParams("trajectory does not retain its states".into()));
    }
    let t_end = t_end.min(end);
    let mut sum = 0.0;
    for (j, &t) in times.iter().enumerate() {
        if t >= t_end {
            break;
        }
        let next = times.get(j + 1).copied().unwrap_or(t_end).min(t_end);
        let norm = traj.states()[j].lp_norm(p);
        sum = accumulate(sum, norm, q, next - t);
    }
    Ok(finish(sum, q))
}

/// `Z_t = ‖u‖_{L^q(0,t;L^{α+1})} + ‖u‖_{L^{q̃}(0,t;L^{2γ})}`.
pub fn z_process(traj: &Trajectory, t: f64, params: &ModelParams) -> Result<f64> {
    let e = NormExponents::for_params(params)?;
    Ok(bochner_norm(traj, e.q, e.p, t)? + bochner_norm(traj, e.q_tilde, e.p_tilde, t)?)
}
