//! Power nonlinearities, the cutoff `θ_n` applied to the running norm `Z_t`,
//! and stopping-time detection.

use num_complex::Complex64;
use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::exponents::{bootstrap_exponents, to_f64, ModelParams, YBranch};
use crate::grid::{z_process, ComplexField, NormExponents, Trajectory, ZAccumulator};

/// `G(u) = |u|^{σ−1}u` pointwise, with `G(0) = 0`.
pub fn power_nonlinearity(u: &ComplexField, sigma: Rational64) -> Result<ComplexField> {
    if sigma < Rational64::from_integer(1) {
        return Err(Error::InvalidParams(format!("sigma = {sigma} must be at least 1")));
    }
    let s = to_f64(sigma) - 1.0;
    let values = u.values().iter().map(|z| power(*z, s)).collect();
    Ok(ComplexField::from_values_unchecked(*u.grid(), values))
}

/// `|z|^{s} z`, zero at the origin for every `s ≥ 0`.
#[inline]
pub(crate) fn power(z: Complex64, s: f64) -> Complex64 {
    if s == 0.0 {
        return z;
    }
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z * r.powf(s)
    }
}

/// `1` on `[0, n]`, `2 − x/n` on `[n, 2n]`, `0` beyond. An infinite level
/// switches the cutoff off.
pub fn theta(x: f64, level: f64) -> f64 {
    if level.is_infinite() || x <= level {
        1.0
    } else if x >= 2.0 * level {
        0.0
    } else {
        2.0 - x / level
    }
}

/// Cutoff level and the most recent value of `φ = θ_level(Z_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationState {
    level: f64,
    active: bool,
    current_phi: f64,
}

impl TruncationState {
    /// `level` must be positive; `f64::INFINITY` disables truncation.
    pub fn new(level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return Err(Error::InvalidParams(format!("truncation level {level} must be positive")));
        }
        Ok(TruncationState { level, active: false, current_phi: 1.0 })
    }

    pub fn disabled() -> Self {
        TruncationState { level: f64::INFINITY, active: false, current_phi: 1.0 }
    }

    pub fn level(&self) -> f64 {
        self.level
    }
    /// Whether the cutoff is currently below 1.
    pub fn is_active(&self) -> bool {
        self.active
    }
    pub fn phi(&self) -> f64 {
        self.current_phi
    }

    /// Records `φ = θ_level(z)` and returns it.
    pub fn update(&mut self, z: f64) -> f64 {
        self.current_phi = theta(z, self.level);
        self.active = self.current_phi < 1.0;
        self.current_phi
    }
}

fn check_exponents(traj: &Trajectory, params: &ModelParams) -> Result<()> {
    if *traj.exponents() != NormExponents::for_params(params)? {
        return Err(Error::InvalidParams("trajectory was recorded with different exponents".into()));
    }
    Ok(())
}

/// `φ(t) = θ_level(Z_t)` on a trajectory starting at time 0.
pub fn evaluate_phi(traj: &Trajectory, t: f64, trunc: &TruncationState, params: &ModelParams) -> Result<f64> {
    Ok(theta(z_process(traj, t, params)?, trunc.level()))
}

/// `φ` at time `t` of a window trajectory whose predecessors are summarised
/// by `prefix`: each component of `Z` combines as `(prefix^q + window^q)^{1/q}`.
pub fn evaluate_phi_chained(prefix: &ZAccumulator, window: &Trajectory, t: f64, trunc: &TruncationState) -> Result<f64> {
    let acc = prefix.chain(&window.accumulator_until(t)?);
    Ok(theta(acc.value(), trunc.level()))
}

/// `τ = min{t_j : Z_{t_j} ≥ level} ∧ T`, resolved to mesh times.
pub fn detect_stopping_time(traj: &Trajectory, level: f64, horizon: f64, params: &ModelParams) -> Result<f64> {
    check_exponents(traj, params)?;
    Ok(first_crossing(traj, level).unwrap_or(horizon).min(horizon))
}

pub(crate) fn first_crossing(traj: &Trajectory, level: f64) -> Option<f64> {
    traj.times().iter().zip(traj.z_values()).find(|(_, z)| *z >= level).map(|(t, _)| *t)
}

/// Both sides of the interpolation embedding on one trajectory, with all
/// norms taken as left-endpoint time sums.
///
/// With `Y = L^q L^{α+1}` (when `α+1 ≥ 2γ`) the other component obeys
/// `‖u‖_{L^{q̃}L^{2γ}} ≤ ‖u‖_{L^∞L²}^{1−θ} ‖u‖_{L^q L^{α+1}}^θ`, and the roles
/// swap for `Y = L^{q̃}L^{2γ}`. Both components are then at most
/// `‖u‖_E = ‖u‖_{L^∞L²} + ‖u‖_Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationCheck {
    pub branch: YBranch,
    /// `‖u‖_{L^q L^{α+1}}`
    pub norm_alpha: f64,
    /// `‖u‖_{L^{q̃} L^{2γ}}`
    pub norm_gamma: f64,
    pub sup_l2: f64,
    pub theta: f64,
    /// The interpolated component.
    pub interpolated: f64,
    /// `‖u‖_{L^∞L²}^{1−θ} ‖u‖_Y^θ`
    pub interpolation_bound: f64,
    pub e_norm: f64,
}

impl InterpolationCheck {
    /// Both inequalities hold up to a relative slack `rel`.
    pub fn holds(&self, rel: f64) -> bool {
        self.interpolated <= self.interpolation_bound * (1.0 + rel)
            && self.norm_alpha + self.norm_gamma <= 2.0 * self.e_norm * (1.0 + rel)
    }
}

pub fn interpolation_check(traj: &Trajectory, params: &ModelParams) -> Result<InterpolationCheck> {
    check_exponents(traj, params)?;
    let (norm_alpha, norm_gamma) = traj.accumulator().components();
    let sup_l2 = traj.sup_l2();
    let branch = params.y_branch();
    let half = Rational64::new(1, 2);
    let one = Rational64::from_integer(1);
    let (alpha, gamma) = (params.alpha(), params.gamma());
    let (theta, y, interpolated) = match branch {
        YBranch::Alpha => (to_f64(bootstrap_exponents(params).theta_interp), norm_alpha, norm_gamma),
        YBranch::Gamma => {
            // 1/(α+1) = θ/(2γ) + (1−θ)/2
            let t = (half - one / (alpha + one)) / (half - one / (Rational64::from_integer(2) * gamma));
            (to_f64(t), norm_gamma, norm_alpha)
        }
    };
    Ok(InterpolationCheck {
        branch,
        norm_alpha,
        norm_gamma,
        sup_l2,
        theta,
        interpolated,
        interpolation_bound: sup_l2.powf(1.0 - theta) * y.powf(theta),
        e_norm: sup_l2 + y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::Lambda;
    use crate::grid::Grid;
    use crate::noise::CounterRng;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn power_examples() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let u = ComplexField::from_fn(g, |x| Complex64::new(x[0], -0.5)).unwrap();
        assert_eq!(power_nonlinearity(&u, r(1, 1)).unwrap(), u);
        let two = ComplexField::from_fn(g, |_| Complex64::new(2.0, 0.0)).unwrap();
        let p = power_nonlinearity(&two, r(3, 1)).unwrap();
        assert!(p.values().iter().all(|z| *z == Complex64::new(8.0, 0.0)));
        let zero = ComplexField::zeros(g);
        assert_eq!(power_nonlinearity(&zero, r(1001, 1000)).unwrap(), zero);
        assert!(power_nonlinearity(&u, r(1, 2)).is_err());
        let s = r(7, 3);
        let p = power_nonlinearity(&u, s).unwrap();
        for (a, b) in p.values().iter().zip(u.values()) {
            assert!((a.norm() - b.norm().powf(7.0 / 3.0)).abs() <= 1e-13 * a.norm().max(1.0));
        }
    }

    #[test]
    fn power_local_lipschitz() {
        // Pointwise ||u|^{σ-1}u − |v|^{σ-1}v| ≤ σ max(|u|,|v|)^{σ-1}|u−v| and
        // Hölder give the constant σ for r = α+1, r/σ with σ = α.
        let g = Grid::new(1, 64, 8.0).unwrap();
        let mut rng = CounterRng::new(12, 0);
        for sigma in [r(3, 2), r(2, 1), r(3, 1)] {
            let sf = to_f64(sigma);
            let rr = sf + 1.0;
            let mut worst = 0.0f64;
            for _ in 0..500 {
                let mut field = || {
                    let scale = 3.0 * rng.next_uniform();
                    let vals = (0..g.len())
                        .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()) * scale)
                        .collect();
                    ComplexField::from_values(g, vals).unwrap()
                };
                let u = field();
                let v = field();
                let gu = power_nonlinearity(&u, sigma).unwrap();
                let gv = power_nonlinearity(&v, sigma).unwrap();
                let diff = gu.distance_lp(&gv, rr / sf).unwrap();
                let rhs = (u.lp_norm(rr) + v.lp_norm(rr)).powf(sf - 1.0) * u.distance_lp(&v, rr).unwrap();
                worst = worst.max(diff / rhs);
            }
            assert!(worst <= sf, "sigma {sigma}: fitted constant {worst}");
        }
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(4.0, 4.0), 1.0);
        assert_eq!(theta(8.0, 4.0), 0.0);
        assert_eq!(theta(6.0, 4.0), 0.5);
        assert_eq!(theta(0.0, 4.0), 1.0);
        assert_eq!(theta(1e300, f64::INFINITY), 1.0);
        assert_eq!(theta(12.0, 4.0), 0.0);
    }

    #[test]
    fn truncation_state() {
        assert!(TruncationState::new(0.0).is_err());
        let mut t = TruncationState::new(2.0).unwrap();
        assert_eq!(t.update(1.0), 1.0);
        assert!(!t.is_active());
        assert_eq!(t.update(3.0), 0.5);
        assert!(t.is_active());
    }

    fn params() -> ModelParams {
        ModelParams::new(1, r(3, 1), r(3, 2), Lambda::Defocusing).unwrap()
    }

    fn random_trajectory(rng: &mut CounterRng, steps: usize, scale: f64) -> Trajectory {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let exps = NormExponents::for_params(&params()).unwrap();
        let field = |rng: &mut CounterRng| {
            let vals = (0..g.len()).map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()) * scale).collect();
            ComplexField::from_values(g, vals).unwrap()
        };
        let mut traj = Trajectory::new(exps, field(rng));
        let mut t = 0.0;
        for _ in 0..steps {
            t += 0.01 + 0.1 * rng.next_uniform();
            traj.push(t, field(rng)).unwrap();
        }
        traj
    }

    #[test]
    fn phi_examples() {
        let p = params();
        let mut rng = CounterRng::new(3, 0);
        let traj = random_trajectory(&mut rng, 10, 1.0);
        let trunc = TruncationState::new(1.0).unwrap();
        assert_eq!(evaluate_phi(&traj, 0.0, &trunc, &p).unwrap(), 1.0);
        let z = z_process(&traj, traj.final_time(), &p).unwrap();
        let frozen = TruncationState::new(z / 3.0).unwrap();
        assert_eq!(evaluate_phi(&traj, traj.final_time(), &frozen, &p).unwrap(), 0.0);
        // Non-increasing along the trajectory.
        let mid = TruncationState::new(z / 1.5).unwrap();
        let mut last = 1.0;
        for &t in traj.times() {
            let phi = evaluate_phi(&traj, t, &mid, &p).unwrap();
            assert!(phi <= last);
            last = phi;
        }
    }

    #[test]
    fn chained_phi_matches_concatenation() {
        let p = params();
        let exps = NormExponents::for_params(&p).unwrap();
        let mut rng = CounterRng::new(8, 1);
        for case in 0..50 {
            let full = random_trajectory(&mut rng, 12, 0.5 + case as f64 * 0.05);
            let split = 3 + case % 8;
            let mut window = Trajectory::starting_at(exps, full.times()[split], full.states()[split].clone());
            for j in split + 1..full.len() {
                window.push(full.times()[j], full.states()[j].clone()).unwrap();
            }
            let prefix = full.accumulator_until(full.times()[split]).unwrap();
            let z_end = z_process(&full, full.final_time(), &p).unwrap();
            let trunc = TruncationState::new(z_end / 1.7).unwrap();
            for j in split..full.len() {
                let t = full.times()[j];
                let chained = evaluate_phi_chained(&prefix, &window, t, &trunc).unwrap();
                let direct = evaluate_phi(&full, t, &trunc, &p).unwrap();
                assert!((chained - direct).abs() <= 1e-12, "case {case}, t {t}: {chained} vs {direct}");
            }
        }
    }

    #[test]
    fn stopping_time_examples() {
        let p = params();
        let exps = NormExponents::for_params(&p).unwrap();
        let g = Grid::new(1, 16, 4.0).unwrap();
        let mut zero = Trajectory::new(exps, ComplexField::zeros(g));
        for j in 1..=10 {
            zero.push(j as f64 * 0.1, ComplexField::zeros(g)).unwrap();
        }
        assert_eq!(detect_stopping_time(&zero, 1.0, 1.0, &p).unwrap(), 1.0);

        let mut rng = CounterRng::new(5, 0);
        let traj = random_trajectory(&mut rng, 10, 1.0);
        let tiny = detect_stopping_time(&traj, 1e-300, 5.0, &p).unwrap();
        assert_eq!(tiny, traj.times()[1]);

        for _ in 0..100 {
            let scale = 0.2 + rng.next_uniform();
            let traj = random_trajectory(&mut rng, 15, scale);
            let horizon = traj.final_time();
            let mut last = 0.0;
            for level in [0.1, 0.3, 1.0, 3.0, 10.0] {
                let tau = detect_stopping_time(&traj, level, horizon, &p).unwrap();
                assert!(tau >= last);
                if tau == horizon && traj.z_values().last().unwrap() < level {
                    for &t in traj.times() {
                        let trunc = TruncationState::new(level).unwrap();
                        assert_eq!(evaluate_phi(&traj, t, &trunc, &p).unwrap(), 1.0);
                    }
                }
                last = tau;
            }
        }
    }

    #[test]
    fn interpolation_holds_on_both_branches() {
        let mut rng = CounterRng::new(2, 0);
        let g = Grid::new(1, 16, 4.0).unwrap();
        for p in [
            params(),
            ModelParams::new(1, r(3, 2), r(3, 1), Lambda::Focusing).unwrap(),
            ModelParams::new(1, r(2, 1), r(1, 1), Lambda::Defocusing).unwrap(),
        ] {
            let exps = NormExponents::for_params(&p).unwrap();
            for _ in 0..20 {
                let field = |rng: &mut CounterRng| {
                    let vals = (0..g.len()).map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian())).collect();
                    ComplexField::from_values(g, vals).unwrap()
                };
                let mut traj = Trajectory::new(exps, field(&mut rng));
                for j in 1..=8 {
                    traj.push(j as f64 * 0.05, field(&mut rng)).unwrap();
                }
                let c = interpolation_check(&traj, &p).unwrap();
                assert!(c.holds(1e-12), "{c:?}");
            }
        }
    }
}
