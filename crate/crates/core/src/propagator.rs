//! Free Schrödinger group `U(t) = e^{itΔ}` on the periodic grid, and the
//! deterministic and stochastic Duhamel convolutions built from it.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exponents::StrichartzPair;
use crate::grid::{lp_norm_slice, ComplexField, Grid};
use crate::noise::{BrownianPath, CounterRng};

/// Spectral data for one grid: FFT plans and `|k|²` in FFT ordering.
#[derive(Clone)]
pub struct SpectralPlan {
    grid: Grid,
    k2: Vec<f64>,
    dispersion: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).field("dispersion", &self.dispersion).finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        SpectralPlan {
            grid,
            k2: grid.wavenumber_squares(),
            dispersion: true,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    /// Plan with the Laplacian switched off, so `U(t)` is the identity.
    pub fn without_dispersion(grid: Grid) -> Self {
        SpectralPlan { dispersion: false, ..Self::new(grid) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn has_dispersion(&self) -> bool {
        self.dispersion
    }

    fn transform(&self, values: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let d = self.grid.d();
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(values, &mut scratch);
        if d == 1 {
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..d - 1 {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for chunk in values.chunks_mut(block) {
                for offset in 0..stride {
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = chunk[offset + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        chunk[offset + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalised forward DFT over all axes.
    pub fn forward(&self, values: &mut [Complex64]) {
        self.transform(values, &self.forward);
    }

    /// Unnormalised inverse DFT over all axes.
    pub fn inverse(&self, values: &mut [Complex64]) {
        self.transform(values, &self.inverse);
    }

    /// Fourier multiplier `e^{−i|k|²t}` of `U(t)`.
    pub fn multiplier(&self, t: f64) -> Vec<Complex64> {
        self.k2.iter().map(|k2| Complex64::from_polar(1.0, -k2 * t)).collect()
    }

    /// `U(t)` with its multiplier (and the inverse-DFT normalisation) cached.
    pub fn propagator(&self, t: f64) -> Propagator<'_> {
        let scale = 1.0 / self.grid.len() as f64;
        let phases = if self.dispersion {
            self.k2.iter().map(|k2| Complex64::from_polar(scale, -k2 * t)).collect()
        } else {
            Vec::new()
        };
        Propagator { plan: self, phases }
    }

    /// `U(t)f`; `t` may be negative.
    pub fn free_evolve(&self, f: &ComplexField, t: f64) -> Result<ComplexField> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        let mut values = f.values().to_vec();
        self.propagator(t).apply(&mut values);
        Ok(ComplexField::from_values_unchecked(self.grid, values))
    }

    /// `∫₀ᵗ U(t−s) F(s) ds` as the left-endpoint sum `Σ_{t_l<t} U(t−t_l) F(t_l) Δt_l`.
    ///
    /// `times` is the mesh, `forcing[l]` is `F(t_l)` for each cell, and `t` must
    /// be a mesh point.
    pub fn duhamel_convolution(&self, times: &[f64], forcing: &[ComplexField], t: f64) -> Result<ComplexField> {
        DuhamelCache::new(self, times, forcing)?.evaluate(t)
    }

    /// `∫₀ᵗ U(t−s) Σ_m G_m(s) dβ_m(s)` as the Itô sum
    /// `Σ_{t_l<t} U(t−t_l) Σ_m G_m(t_l) Δβ_m(t_l)`.
    ///
    /// `integrand[l][m]` is `G_m(t_l)`; the path mesh must have one more point
    /// than there are integrand rows and the same number of modes.
    pub fn stochastic_convolution(
        &self,
        integrand: &[Vec<ComplexField>],
        path: &BrownianPath,
        t: f64,
    ) -> Result<ComplexField> {
        if integrand.len() != path.steps() {
            return Err(Error::MeshMismatch(format!(
                "{} integrand rows for a path with {} steps",
                integrand.len(),
                path.steps()
            )));
        }
        let mut forcing = Vec::with_capacity(integrand.len());
        for (l, row) in integrand.iter().enumerate() {
            if row.len() != path.modes() {
                return Err(Error::MeshMismatch(format!(
                    "integrand row {l} has {} modes, path has {}",
                    row.len(),
                    path.modes()
                )));
            }
            let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
            for (m, g) in row.iter().enumerate() {
                if *g.grid() != self.grid {
                    return Err(Error::GridMismatch);
                }
                let db = path.increments(m)[l];
                for (a, z) in acc.iter_mut().zip(g.values()) {
                    *a += z * db;
                }
            }
            forcing.push(ComplexField::from_values_unchecked(self.grid, acc));
        }
        // The increments already carry the time scaling, so every weight is 1.
        let ones: Vec<f64> = vec![1.0; forcing.len()];
        DuhamelCache::with_weights(self, path.mesh(), &forcing, &ones)?.evaluate(t)
    }
}

/// Cached `U(t)` for a fixed `t`.
pub struct Propagator<'a> {
    plan: &'a SpectralPlan,
    phases: Vec<Complex64>,
}

impl Propagator<'_> {
    /// Applies `U(t)` in place.
    pub fn apply(&self, values: &mut [Complex64]) {
        if !self.plan.dispersion {
            return;
        }
        self.plan.forward(values);
        for (v, p) in values.iter_mut().zip(&self.phases) {
            *v *= p;
        }
        self.plan.inverse(values);
    }
}

/// Spectral transforms of a forcing sequence, reusable for many end times.
pub struct DuhamelCache<'a> {
    plan: &'a SpectralPlan,
    times: Vec<f64>,
    /// `Δt_l · F̂(t_l)` (or the weighted transform)
    spectra: Vec<Vec<Complex64>>,
}

impl<'a> DuhamelCache<'a> {
    pub fn new(plan: &'a SpectralPlan, times: &[f64], forcing: &[ComplexField]) -> Result<Self> {
        let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        Self::with_weights(plan, times, forcing, &dts)
    }

    fn with_weights(plan: &'a SpectralPlan, times: &[f64], forcing: &[ComplexField], weights: &[f64]) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::MeshMismatch("mesh must be finite and strictly increasing".into()));
        }
        if times.len() != forcing.len() + 1 && !(times.is_empty() && forcing.is_empty()) {
            return Err(Error::MeshMismatch(format!(
                "{} forcing values for a mesh of {} points",
                forcing.len(),
                times.len()
            )));
        }
        let spectra = forcing
            .iter()
            .zip(weights)
            .map(|(f, w)| {
                if *f.grid() != plan.grid {
                    return Err(Error::GridMismatch);
                }
                let mut v: Vec<Complex64> = f.values().iter().map(|z| z * w).collect();
                if plan.dispersion {
                    plan.forward(&mut v);
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Ok(DuhamelCache { plan, times: times.to_vec(), spectra })
    }

    /// Value of the convolution at the mesh time `t`.
    pub fn evaluate(&self, t: f64) -> Result<ComplexField> {
        let grid = self.plan.grid;
        let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
        if self.times.is_empty() {
            return Ok(ComplexField::from_values_unchecked(grid, acc));
        }
        let tol = 1e-12 * t.abs().max(1.0);
        let end = *self.times.last().expect("non-empty");
        if !(t >= self.times[0] - tol && t <= end + tol) {
            return Err(Error::TimeOutOfRange { t, end });
        }
        if !self.times.iter().any(|s| (s - t).abs() <= tol) {
            return Err(Error::MeshMismatch(format!("time {t} is not a mesh point")));
        }
        for (tl, spec) in self.times.iter().zip(&self.spectra) {
            if *tl >= t - tol {
                break;
            }
            if self.plan.dispersion {
                for ((a, s), k2) in acc.iter_mut().zip(spec).zip(&self.plan.k2) {
                    *a += s * Complex64::from_polar(1.0, -k2 * (t - tl));
                }
            } else {
                for (a, s) in acc.iter_mut().zip(spec) {
                    *a += s;
                }
            }
        }
        if self.plan.dispersion {
            self.plan.inverse(&mut acc);
            let scale = 1.0 / grid.len() as f64;
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        Ok(ComplexField::from_values_unchecked(grid, acc))
    }
}

/// Random unit-`L²` test datum: a sum of three modulated Gaussian packets at
/// scales fixed relative to the box.
pub fn random_packet(grid: Grid, rng: &mut CounterRng) -> ComplexField {
    let len = grid.length();
    let d = grid.d();
    let packets: Vec<(Vec<f64>, Vec<f64>, f64, Complex64)> = (0..3)
        .map(|_| {
            let center: Vec<f64> = (0..d).map(|_| (rng.next_uniform() - 0.5) * len / 4.0).collect();
            let momentum: Vec<f64> =
                (0..d).map(|_| (rng.next_uniform() - 0.5) * 16.0 * std::f64::consts::PI / len).collect();
            let width = len / 40.0 * (1.0 + rng.next_uniform());
            let amp = Complex64::from_polar(rng.next_uniform(), 2.0 * std::f64::consts::PI * rng.next_uniform());
            (center, momentum, width, amp)
        })
        .collect();
    let f = ComplexField::from_fn(grid, |x| {
        packets
            .iter()
            .map(|(c, k, w, a)| {
                let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                let phase: f64 = x.iter().zip(k).map(|(xi, ki)| xi * ki).sum();
                a * Complex64::from_polar((-r2 / (2.0 * w * w)).exp(), phase)
            })
            .sum()
    })
    .expect("packets are finite");
    let norm = f.l2_norm();
    f.scaled(Complex64::new(1.0 / norm, 0.0))
}

/// `‖U(·)x‖_{L^q(0,T;L^p)}` by left-endpoint quadrature on `steps` cells.
pub fn free_strichartz_norm(plan: &SpectralPlan, x: &ComplexField, pair: &StrichartzPair, horizon: f64, steps: usize) -> Result<f64> {
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidParams(format!("need steps > 0 and T > 0, got {steps} and {horizon}")));
    }
    if *x.grid() != plan.grid {
        return Err(Error::GridMismatch);
    }
    let p = pair.p().to_f64();
    let q = crate::exponents::to_f64(pair.q());
    let dt = horizon / steps as f64;
    let step = plan.propagator(dt);
    let mut u = x.values().to_vec();
    let cell = plan.grid.cell_volume();
    let mut sum = 0.0f64;
    for j in 0..steps {
        if j > 0 {
            step.apply(&mut u);
        }
        let norm = lp_norm_slice(&u, p, cell);
        sum = if q.is_infinite() { sum.max(norm) } else { sum + norm.powf(q) * dt };
    }
    Ok(if q.is_infinite() { sum } else { sum.powf(1.0 / q) })
}

/// Lower estimate of the homogeneous Strichartz constant: the maximum of
/// `‖U(·)x‖_{L^q(0,T;L^p)}` over `samples` random unit data. The maximum over
/// the first `k` samples does not depend on `samples`.
pub fn estimate_strichartz_constant(
    grid: Grid,
    pair: &StrichartzPair,
    horizon: f64,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if pair.d() as usize != grid.d() {
        return Err(Error::InvalidParams(format!(
            "pair dimension {} differs from grid dimension {}",
            pair.d(),
            grid.d()
        )));
    }
    let plan = SpectralPlan::new(grid);
    let mut best = 0.0f64;
    for s in 0..samples {
        let mut rng = CounterRng::new(seed, s as u64);
        let x = random_packet(grid, &mut rng);
        best = best.max(free_strichartz_norm(&plan, &x, pair, horizon, steps)?);
    }
    Ok(best)
}
