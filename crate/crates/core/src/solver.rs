//! Time integrators on a fixed Brownian path.
//!
//! [`picard_solve`] iterates the truncated mild equation
//! `u = U(·)u(a) + K_det u + K_Strat u + K_stoch u` window by window, with
//! left-endpoint Duhamel and Itô sums. The recursion
//! `u_{j+1} = U(Δt)(u_j + G_j(u))` used for each iterate reproduces those sums
//! exactly, so the fixed point is the exponential Euler–Maruyama scheme.
//!
//! [`splitstep_solve`] is a Strang splitting whose nonlinear and conservative
//! noise sub-steps are exact phase rotations. It solves the untruncated
//! equation.

use num_complex::Complex64;
use serde::Serialize;

pub use crate::config::{Scheme, SimConfig};
use crate::dynamics::{first_crossing, power, theta};
use crate::error::{Error, Result};
use crate::exponents::{to_f64, ModelParams, YBranch};
use crate::grid::{lp_norm_slice, ComplexField, Grid, NormExponents, Trajectory, ZAccumulator};
use crate::noise::{sample_brownian_path, uniform_mesh, BrownianPath, NoiseModel};
use crate::propagator::SpectralPlan;

/// One accepted Picard window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRecord {
    pub start: f64,
    pub length: f64,
    pub steps: usize,
    pub iterations: usize,
    /// Largest ratio `‖u^{k+1}−u^k‖_E / ‖u^k−u^{k−1}‖_E` over the iterations that
    /// had not yet reached tolerance.
    pub contraction_ratio: f64,
    /// Times this window was halved before being accepted.
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub trajectory: Trajectory,
    /// First mesh time with `Z_t ≥ n` (or `T`); `T` when there is no truncation level.
    pub tau: f64,
    pub windows: Vec<WindowRecord>,
    pub truncation_ever_active: bool,
    /// Largest relative change of `‖u‖₂²` over a single step.
    pub max_step_mass_change: f64,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn final_state(&self) -> &ComplexField {
        self.trajectory.last_state()
    }
}

/// A validated configuration with its grid operators built once, shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct Problem {
    config: SimConfig,
    plan: SpectralPlan,
    model: NoiseModel,
    u0: ComplexField,
    mesh: Vec<f64>,
    exps: NormExponents,
}

impl Problem {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let plan = if config.dispersion { SpectralPlan::new(grid) } else { SpectralPlan::without_dispersion(grid) };
        Ok(Problem {
            plan,
            model: config.build_noise()?,
            u0: config.build_initial()?,
            mesh: uniform_mesh(config.horizon, config.steps()),
            exps: NormExponents::for_params(&config.params)?,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }
    pub fn params(&self) -> &ModelParams {
        &self.config.params
    }
    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }
    pub fn model(&self) -> &NoiseModel {
        &self.model
    }
    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }
    pub fn initial(&self) -> &ComplexField {
        &self.u0
    }
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    /// Brownian path number `path_index` for this configuration's seed.
    pub fn sample_path(&self, path_index: u64) -> Result<BrownianPath> {
        sample_brownian_path(&self.mesh, self.model.total_modes(), self.config.seed, path_index)
    }

    /// Same problem with a different initial datum.
    pub fn with_initial(&self, u0: ComplexField) -> Result<Self> {
        if *u0.grid() != self.config.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Problem { u0, ..self.clone() })
    }

    fn check_path(&self, path: &BrownianPath) -> Result<()> {
        if path.modes() != self.model.total_modes() {
            return Err(Error::MeshMismatch(format!(
                "path has {} modes, noise model needs {}",
                path.modes(),
                self.model.total_modes()
            )));
        }
        let mesh = path.mesh();
        let tol = 1e-12 * self.config.horizon;
        if mesh.len() != self.mesh.len() || mesh.iter().zip(&self.mesh).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::MeshMismatch(format!(
                "path mesh ({} points) differs from the solver mesh ({} points of step {})",
                mesh.len(),
                self.mesh.len(),
                self.config.dt
            )));
        }
        Ok(())
    }

    fn warnings(&self) -> Vec<String> {
        let p = &self.config.params;
        let mut w = Vec::new();
        if p.is_alpha_critical() && p.lambda().sign() < 0.0 {
            w.push("focusing mass-critical nonlinearity: only local existence is expected".into());
        }
        w
    }

    fn new_trajectory(&self, keep_states: bool) -> Trajectory {
        if keep_states {
            Trajectory::new(self.exps, self.u0.clone())
        } else {
            Trajectory::lean(self.exps, self.u0.clone())
        }
    }

    fn stopping_time(&self, traj: &Trajectory) -> f64 {
        first_crossing(traj, self.config.truncation()).unwrap_or(self.config.horizon)
    }

    pub fn solve(&self, path: &BrownianPath, keep_states: bool) -> Result<SolveReport> {
        match self.config.scheme {
            Scheme::Picard => self.picard(path, keep_states),
            Scheme::Splitstep => self.splitstep(path, keep_states),
        }
    }

    /// Truncated Picard iteration with window halving.
    pub fn picard(&self, path: &BrownianPath, keep_states: bool) -> Result<SolveReport> {
        self.check_path(path)?;
        let steps = self.mesh.len() - 1;
        let mut traj = self.new_trajectory(keep_states);
        let mut windows = Vec::new();
        let mut ever_active = false;
        let mut start = 0;
        let mut length = self.config.initial_window_steps().min(steps);
        let mut halvings = 0;
        let mut worker = PicardWorker::new(self);
        while start < steps {
            length = length.min(steps - start);
            let prefix = *traj.accumulator();
            let u_start = traj.last_state().clone();
            match worker.window(&u_start, &prefix, path, start, length)? {
                WindowOutcome::Converged { states, iterations, ratio, active } => {
                    ever_active |= active;
                    for (j, s) in states.into_iter().enumerate().skip(1) {
                        traj.push(self.mesh[start + j], ComplexField::from_values_unchecked(self.config.grid, s))?;
                    }
                    windows.push(WindowRecord {
                        start: self.mesh[start],
                        length: self.mesh[start + length] - self.mesh[start],
                        steps: length,
                        iterations,
                        contraction_ratio: ratio,
                        halvings,
                    });
                    start += length;
                    halvings = 0;
                }
                WindowOutcome::Expanding { ratio } => {
                    if length == 1 {
                        return Err(Error::NoContraction { t: self.mesh[start], ratio });
                    }
                    length /= 2;
                    halvings += 1;
                }
            }
        }
        let max_step_mass_change = max_step_mass_change(traj.running_mass());
        Ok(SolveReport {
            scheme: Scheme::Picard,
            tau: self.stopping_time(&traj),
            trajectory: traj,
            windows,
            truncation_ever_active: ever_active,
            max_step_mass_change,
            warnings: self.warnings(),
        })
    }

    /// Strang splitting: half free step, nonlinear phase, noise, half free step.
    pub fn splitstep(&self, path: &BrownianPath, keep_states: bool) -> Result<SolveReport> {
        self.check_path(path)?;
        let cfg = &self.config;
        let alpha_m1 = to_f64(cfg.params.alpha()) - 1.0;
        let gamma = to_f64(cfg.params.gamma());
        let lambda = cfg.params.lambda().sign();
        let exact_noise = self.model.is_fully_conservative();
        let mut traj = self.new_trajectory(keep_states);
        let mut u = self.u0.values().to_vec();
        let mut incs = vec![0.0; path.modes()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); u.len()];
        let mut cached: Option<(f64, crate::propagator::Propagator<'_>)> = None;
        for l in 0..self.mesh.len() - 1 {
            let dt = self.mesh[l + 1] - self.mesh[l];
            if cached.as_ref().is_none_or(|(h, _)| (*h - dt).abs() > 1e-15 * dt) {
                cached = Some((dt, self.plan.propagator(0.5 * dt)));
            }
            let half = &cached.as_ref().expect("set above").1;
            half.apply(&mut u);
            if cfg.nonlinearity {
                for z in u.iter_mut() {
                    let r = z.norm();
                    let w = if alpha_m1 == 0.0 { 1.0 } else if r == 0.0 { 0.0 } else { r.powf(alpha_m1) };
                    *z *= Complex64::from_polar(1.0, -lambda * w * dt);
                }
            }
            if !self.model.is_empty() {
                path.fill_increments_at(l, &mut incs);
                if exact_noise {
                    self.model.phase_rotate(&mut u, gamma, &incs);
                } else {
                    scratch.copy_from_slice(&u);
                    self.model.add_drift(&scratch, gamma, 1.0, dt, &mut u);
                    self.model.add_noise(&scratch, gamma, 1.0, &incs, &mut u);
                }
            }
            half.apply(&mut u);
            if u.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFinite("split-step state"));
            }
            traj.push(self.mesh[l + 1], ComplexField::from_values_unchecked(cfg.grid, u.clone()))?;
        }
        let max_step_mass_change = max_step_mass_change(traj.running_mass());
        Ok(SolveReport {
            scheme: Scheme::Splitstep,
            tau: self.stopping_time(&traj),
            trajectory: traj,
            windows: Vec::new(),
            truncation_ever_active: false,
            max_step_mass_change,
            warnings: self.warnings(),
        })
    }
}

fn max_step_mass_change(masses: &[f64]) -> f64 {
    masses
        .windows(2)
        .map(|w| if w[0] > 0.0 { (w[1] - w[0]).abs() / w[0] } else { w[1].abs() })
        .fold(0.0, f64::max)
}

enum WindowOutcome {
    Converged { states: Vec<Vec<Complex64>>, iterations: usize, ratio: f64, active: bool },
    Expanding { ratio: f64 },
}

/// Reusable buffers for the Picard iteration.
struct PicardWorker<'a> {
    problem: &'a Problem,
    step: crate::propagator::Propagator<'a>,
    dt: f64,
    alpha_m1: f64,
    gamma: f64,
    lambda: f64,
    branch: YBranch,
}

impl<'a> PicardWorker<'a> {
    fn new(problem: &'a Problem) -> Self {
        let cfg = &problem.config;
        PicardWorker {
            problem,
            step: problem.plan.propagator(cfg.dt),
            dt: cfg.dt,
            alpha_m1: to_f64(cfg.params.alpha()) - 1.0,
            gamma: to_f64(cfg.params.gamma()),
            lambda: cfg.params.lambda().sign(),
            branch: cfg.params.y_branch(),
        }
    }

    /// Cutoff values `φ_j = θ(Z_{t_j})` along an iterate, with `Z` continued
    /// from `prefix`.
    fn phis(&self, iterate: &[Vec<Complex64>], prefix: &ZAccumulator) -> Vec<f64> {
        let level = self.problem.config.truncation();
        let n = iterate.len() - 1;
        if level.is_infinite() {
            return vec![1.0; n];
        }
        let exps = &self.problem.exps;
        let cell = self.problem.config.grid.cell_volume();
        let mut acc = *prefix;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            if j > 0 {
                let prev = &iterate[j - 1];
                acc.push(lp_norm_slice(prev, exps.p, cell), lp_norm_slice(prev, exps.p_tilde, cell), self.dt);
            }
            out.push(theta(acc.value(), level));
        }
        out
    }

    /// One application of the Picard map: `out_{j+1} = U(Δt)(out_j + G_j(input))`.
    fn apply_map(
        &self,
        u_start: &[Complex64],
        input: &[Vec<Complex64>],
        phis: &[f64],
        path: &BrownianPath,
        first_step: usize,
        out: &mut [Vec<Complex64>],
    ) {
        let cfg = &self.problem.config;
        let model = &self.problem.model;
        let minus_i_lambda_dt = Complex64::new(0.0, -self.lambda * self.dt);
        let mut incs = vec![0.0; path.modes()];
        out[0].copy_from_slice(u_start);
        for j in 0..input.len() - 1 {
            let (head, tail) = out.split_at_mut(j + 1);
            let next = &mut tail[0];
            next.copy_from_slice(&head[j]);
            let v = &input[j];
            let phi = phis[j];
            if cfg.nonlinearity && phi != 0.0 {
                for (o, z) in next.iter_mut().zip(v) {
                    *o += minus_i_lambda_dt * phi * power(*z, self.alpha_m1);
                }
            }
            if !model.is_empty() {
                path.fill_increments_at(first_step + j, &mut incs);
                model.add_drift(v, self.gamma, phi, self.dt, next);
                model.add_noise(v, self.gamma, phi, &incs, next);
            }
            self.step.apply(next);
        }
    }

    /// `sup_j ‖a_j − b_j‖₂ + ‖a − b‖_Y` over the window, and the same norm of `a`.
    fn e_distance(&self, a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> (f64, f64) {
        let exps = &self.problem.exps;
        let cell = self.problem.config.grid.cell_volume();
        let (p, q) = match self.branch {
            YBranch::Alpha => (exps.p, exps.q),
            YBranch::Gamma => (exps.p_tilde, exps.q_tilde),
        };
        let mut sup = 0.0f64;
        let mut sum = 0.0f64;
        let mut sup_a = 0.0f64;
        let mut sum_a = 0.0f64;
        let mut diff = vec![Complex64::new(0.0, 0.0); a[0].len()];
        let n = a.len() - 1;
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            for ((d, xi), yi) in diff.iter_mut().zip(x).zip(y) {
                *d = xi - yi;
            }
            sup = sup.max(lp_norm_slice(&diff, 2.0, cell));
            sup_a = sup_a.max(lp_norm_slice(x, 2.0, cell));
            if j < n {
                sum += lp_norm_slice(&diff, p, cell).powf(q) * self.dt;
                sum_a += lp_norm_slice(x, p, cell).powf(q) * self.dt;
            }
        }
        (sup + sum.powf(1.0 / q), sup_a + sum_a.powf(1.0 / q))
    }

    fn window(
        &mut self,
        u_start: &ComplexField,
        prefix: &ZAccumulator,
        path: &BrownianPath,
        first_step: usize,
        length: usize,
    ) -> Result<WindowOutcome> {
        let cfg = &self.problem.config;
        let start = u_start.values();
        // Zeroth iterate: free evolution of the window's initial datum.
        let mut current: Vec<Vec<Complex64>> = Vec::with_capacity(length + 1);
        current.push(start.to_vec());
        for j in 0..length {
            let mut next = current[j].clone();
            self.step.apply(&mut next);
            current.push(next);
        }
        let mut next = current.clone();
        let mut prev_diff: Option<f64> = None;
        let mut max_ratio = 0.0f64;
        for iteration in 1..=cfg.picard_max_iters {
            let phis = self.phis(&current, prefix);
            self.apply_map(start, &current, &phis, path, first_step, &mut next);
            let (diff, scale) = self.e_distance(&next, &current);
            if !diff.is_finite() {
                return Ok(WindowOutcome::Expanding { ratio: f64::NAN });
            }
            // Differences at the rounding floor of the iterate count as converged.
            let converged = diff < cfg.picard_tol || diff <= 64.0 * f64::EPSILON * scale;
            if let (Some(pd), false) = (prev_diff, converged) {
                let ratio = if pd > 0.0 { diff / pd } else { 0.0 };
                if ratio > cfg.contraction_target {
                    return Ok(WindowOutcome::Expanding { ratio });
                }
                max_ratio = max_ratio.max(ratio);
            }
            std::mem::swap(&mut current, &mut next);
            if converged {
                let active = self.phis(&current, prefix).iter().any(|&p| p < 1.0);
                return Ok(WindowOutcome::Converged { states: current, iterations: iteration, ratio: max_ratio, active });
            }
            prev_diff = Some(diff);
        }
        let diff = prev_diff.unwrap_or(f64::NAN);
        Err(Error::MaxItersExceeded { t: self.problem.mesh[first_step], iters: cfg.picard_max_iters, diff })
    }
}

pub fn picard_solve(config: &SimConfig, path: &BrownianPath) -> Result<SolveReport> {
    Problem::new(config)?.picard(path, true)
}

pub fn splitstep_solve(config: &SimConfig, path: &BrownianPath) -> Result<SolveReport> {
    Problem::new(config)?.splitstep(path, true)
}

/// Largest relative `L²` gap between Picard solutions at truncation levels
/// `n1 < n2` on the same path, over mesh times `t ≤ τ_{n1}`.
pub fn path_coincidence_check(config: &SimConfig, path: &BrownianPath, levels: [f64; 2]) -> Result<f64> {
    let [n1, n2] = levels;
    if !(n1 > 0.0 && n1 < n2) {
        return Err(Error::InvalidParams(format!("levels must satisfy 0 < n1 < n2, got {n1}, {n2}")));
    }
    let run = |level: f64| {
        let mut c = config.clone();
        c.truncation_level = Some(level);
        picard_solve(&c, path)
    };
    let a = run(n1)?;
    let b = run(n2)?;
    let tol = 1e-12 * config.horizon;
    let mut worst = 0.0f64;
    for ((t, x), y) in a.trajectory.times().iter().zip(a.trajectory.states()).zip(b.trajectory.states()) {
        if *t > a.tau + tol {
            break;
        }
        let gap = x.distance_l2(y)?;
        let norm = x.l2_norm().max(y.l2_norm());
        worst = worst.max(if norm > 0.0 { gap / norm } else { gap });
    }
    Ok(worst)
}
