//! Fixed-seed invariant suites run by `snls verify`.

use num_complex::Complex64;
use num_rational::Rational64;
use serde::Serialize;

use crate::config::{InitialCondition, NoiseSpec, Scheme, SimConfig};
use crate::dynamics::{evaluate_phi, evaluate_phi_chained, theta, TruncationState};
use crate::error::{Error, Result};
use crate::exponents::{strichartz_q, Exponent, Lambda, ModelParams, StrichartzPair};
use crate::grid::{ComplexField, Grid, NormExponents, Trajectory};
use crate::noise::{
    diffusion_only_exact, euler_maruyama_diffusion_only, make_noise_model, sample_brownian_path, uniform_mesh,
    CoefficientSpec, CounterRng,
};
use crate::propagator::{estimate_strichartz_constant, random_packet, SpectralPlan};
use crate::solver::Problem;

pub const SUITES: [&str; 6] = ["unitarity", "mass", "oracle-sde", "strichartz", "truncation", "exponents"];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

fn report(suite: &str, checks: Vec<Check>) -> SuiteReport {
    SuiteReport { suite: suite.to_string(), passed: checks.iter().all(|c| c.passed), checks }
}

/// Runs one named suite, or every suite for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<SuiteReport>> {
    match name {
        "all" => SUITES.iter().map(|s| run_one(s)).collect(),
        other => Ok(vec![run_one(other)?]),
    }
}

fn run_one(name: &str) -> Result<SuiteReport> {
    match name {
        "exponents" => exponents_suite(),
        "unitarity" => unitarity_suite(),
        "mass" => mass_suite(),
        "oracle-sde" => oracle_sde_suite(),
        "strichartz" => strichartz_suite(),
        "truncation" => truncation_suite(),
        other => Err(Error::Config(format!("unknown suite {other:?}; expected one of {SUITES:?} or all"))),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn exponents_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut bad = 0;
    let mut count = 0;
    for d in 1..=3u32 {
        let di = d as i64;
        for k in 1..=(32 / di) {
            let alpha = Rational64::new(8 + k, 8);
            if alpha > Rational64::from_integer(1) + Rational64::new(4, di) {
                break;
            }
            let p = alpha + 1;
            let q = strichartz_q(Exponent::Finite(p), d)?;
            let residual = Rational64::new(2, 1) / q + Rational64::from_integer(di) / p - Rational64::new(di, 2);
            count += 1;
            if residual != Rational64::from_integer(0) {
                bad += 1;
            }
            if alpha == Rational64::from_integer(1) + Rational64::new(4, di) && q != p {
                bad += 1;
            }
        }
    }
    checks.push(check("strichartz_scaling_exact", bad == 0, format!("{count} pairs, {bad} violations")));
    let pair = StrichartzPair::new(Exponent::Finite(Rational64::from_integer(4)), 1)?;
    checks.push(check("q(p=4,d=1)=8", pair.q() == Rational64::from_integer(8), format!("q = {}", pair.q())));
    Ok(report("exponents", checks))
}

fn unitarity_suite() -> Result<SuiteReport> {
    let g = Grid::new(1, 512, 40.0)?;
    let plan = SpectralPlan::new(g);
    let mut worst_norm = 0.0f64;
    let mut worst_group = 0.0f64;
    let mut worst_rev = 0.0f64;
    for k in 0..100u64 {
        let mut rng = CounterRng::new(0x5eed, k);
        let f = random_packet(g, &mut rng);
        let s = 2.0 * rng.next_uniform();
        let t = 2.0 * rng.next_uniform();
        let us = plan.free_evolve(&f, s)?;
        worst_norm = worst_norm.max((us.l2_norm() - f.l2_norm()).abs() / f.l2_norm());
        let ust = plan.free_evolve(&us, t)?;
        let direct = plan.free_evolve(&f, s + t)?;
        worst_group = worst_group.max(ust.distance_l2(&direct)? / f.l2_norm());
        worst_rev = worst_rev.max(plan.free_evolve(&us, -s)?.distance_l2(&f)? / f.l2_norm());
    }
    Ok(report(
        "unitarity",
        vec![
            check("norm_preserved", worst_norm < 1e-12, format!("max relative residual {worst_norm:.3e}")),
            check("group_law", worst_group < 1e-12, format!("max relative residual {worst_group:.3e}")),
            check("time_reversal", worst_rev < 1e-12, format!("max relative residual {worst_rev:.3e}")),
        ],
    ))
}

fn mass_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for gamma in [Rational64::from_integer(1), Rational64::new(3, 2)] {
        let params = ModelParams::new(1, Rational64::from_integer(3), gamma, Lambda::Defocusing)?;
        let grid = Grid::new(1, 256, 40.0)?;
        let noise = NoiseSpec {
            coefficients: vec![
                CoefficientSpec::GaussianBump { re: 0.8, im: 0.0, center: vec![0.0], width: 3.0 },
                CoefficientSpec::Constant { re: 0.4, im: 0.0 },
            ],
            linear: vec![],
        };
        let ic = InitialCondition::Gaussian { amplitude: 1.0, width: 1.0, center: None, momentum: Some(vec![1.0]) };
        let mut c = SimConfig::new(params, grid, 1.0, 1e-3, noise, ic)?;
        c.scheme = Scheme::Splitstep;
        let p = Problem::new(&c)?;
        let m0 = p.initial().mass();
        let mut worst = 0.0f64;
        for k in 0..5 {
            let rep = p.solve(&p.sample_path(k)?, false)?;
            for m in rep.trajectory.running_mass() {
                worst = worst.max((m - m0).abs() / m0);
            }
        }
        checks.push(check(
            &format!("splitstep_mass_gamma_{gamma}"),
            worst < 1e-10,
            format!("max relative mass drift over 1000 steps: {worst:.3e}"),
        ));
    }
    Ok(report("mass", checks))
}

/// Mean relative strong error of Euler–Maruyama against the exact
/// noise-only solution at each `T/2^k`, on paths coarsened from the finest level.
pub fn sde_strong_errors(
    gamma: Rational64,
    coefficient: f64,
    amplitude: f64,
    horizon: f64,
    levels: &[u32],
    n_paths: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let finest = *levels.iter().max().ok_or_else(|| Error::InvalidParams("no refinement levels".into()))?;
    let grid = Grid::new(1, 2, 1.0)?;
    let model = make_noise_model(&[CoefficientSpec::Constant { re: coefficient, im: 0.0 }], &[], grid, None)?;
    let u0 = ComplexField::from_fn(grid, |_| Complex64::new(amplitude, 0.0))?;
    let fine_mesh = uniform_mesh(horizon, 1 << finest);
    let mut errors = vec![0.0; levels.len()];
    for k in 0..n_paths {
        let fine = sample_brownian_path(&fine_mesh, 1, seed, k)?;
        let exact = diffusion_only_exact(&u0, &model, gamma, &fine, horizon)?;
        for (e, &lvl) in errors.iter_mut().zip(levels) {
            let path = fine.coarsen(1 << (finest - lvl))?;
            let approx = euler_maruyama_diffusion_only(&u0, &model, gamma, &path)?;
            *e += approx.distance_l2(&exact)? / u0.l2_norm();
        }
    }
    Ok(levels.iter().zip(errors).map(|(&l, e)| (horizon / (1u64 << l) as f64, e / n_paths as f64)).collect())
}

fn oracle_sde_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for (gamma, e, a) in [(Rational64::from_integer(1), 1.0, 1.0), (Rational64::from_integer(2), 1.0, 1.0)] {
        let errs = sde_strong_errors(gamma, e, a, 1.0, &[6, 7, 8, 9, 10], 100, 7)?;
        let slope = loglog_slope(&errs);
        checks.push(check(
            &format!("strong_order_gamma_{gamma}"),
            (0.4..=0.6).contains(&slope),
            format!("fitted order {slope:.3} from errors {errs:?}"),
        ));
    }
    Ok(report("oracle-sde", checks))
}

fn strichartz_suite() -> Result<SuiteReport> {
    let pair = StrichartzPair::new(Exponent::Finite(Rational64::from_integer(4)), 1)?;
    let mut values = Vec::new();
    for n in [256, 512, 1024] {
        let g = Grid::new(1, n, 40.0)?;
        values.push(estimate_strichartz_constant(g, &pair, 1.0, 200, 8, 3)?);
    }
    let spread = values.iter().copied().fold(0.0, f64::max) / values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut checks = vec![check(
        "homogeneous_constant_(4,8)",
        values.iter().all(|c| c.is_finite() && *c < 10.0) && spread < 1.05,
        format!("estimates {values:?} for n = 256, 512, 1024"),
    )];
    let stoch = stochastic_strichartz_ratio(200)?;
    checks.push(check(
        "stochastic_convolution_moment (reported)",
        true,
        format!(
            "E‖∫U(t−s)u dβ‖_{{L^8L^4}} / (E∫‖u‖₂²)^{{1/2}} = {:.4} ± {:.4} at 95%",
            stoch.0,
            1.96 * stoch.1
        ),
    ));
    Ok(report("strichartz", checks))
}

/// Monte Carlo ratio `E‖K_stoch‖_{L^q L^p} / (E ∫‖Φ‖₂² ds)^{1/2}` for the free
/// linear stochastic convolution with `Φ = −i u`, returned as mean and stderr.
pub fn stochastic_strichartz_ratio(n_paths: u64) -> Result<(f64, f64)> {
    let params = ModelParams::new(1, Rational64::from_integer(3), Rational64::from_integer(1), Lambda::Defocusing)?;
    let grid = Grid::new(1, 256, 40.0)?;
    let noise = NoiseSpec { coefficients: vec![CoefficientSpec::Constant { re: 1.0, im: 0.0 }], linear: vec![] };
    let ic = InitialCondition::Gaussian { amplitude: 1.0, width: 1.0, center: None, momentum: None };
    let mut c = SimConfig::new(params, grid, 1.0, 1.0 / 128.0, noise, ic)?;
    c.nonlinearity = false;
    let p = Problem::new(&c)?;
    let plan = p.plan();
    let mesh = p.mesh().to_vec();
    let steps = mesh.len() - 1;
    let dt = mesh[1];
    let mut samples = Vec::new();
    let exps = NormExponents { p: 4.0, q: 8.0, p_tilde: 2.0, q_tilde: f64::INFINITY };
    for k in 0..n_paths {
        let path = p.sample_path(k)?;
        let rep = p.solve(&path, true)?;
        let states = rep.trajectory.states();
        let mut conv = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut traj = Trajectory::new(exps, ComplexField::zeros(grid));
        let step = plan.propagator(dt);
        for l in 0..steps {
            let db = path.increments(0)[l];
            for (c, u) in conv.iter_mut().zip(states[l].values()) {
                *c += Complex64::new(0.0, -db) * u;
            }
            step.apply(&mut conv);
            traj.push(mesh[l + 1], ComplexField::from_values(grid, conv.clone())?)?;
        }
        samples.push(traj.accumulator().components().0);
    }
    // Conservative linear noise preserves ‖u‖₂, so E∫‖Φ‖₂² = T‖u₀‖₂².
    let scale = (p.config().horizon * p.initial().mass()).sqrt();
    let est = crate::montecarlo::Estimate::from_samples(&samples);
    Ok((est.mean / scale, est.stderr / scale))
}

fn truncation_suite() -> Result<SuiteReport> {
    let mut rng = CounterRng::new(91, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let level = 0.1 + 10.0 * rng.next_uniform();
        let x = 3.0 * level * rng.next_uniform();
        let y = 3.0 * level * rng.next_uniform();
        if x != y {
            worst = worst.max((theta(x, level) - theta(y, level)).abs() * level / (x - y).abs());
        }
    }
    let mut checks = vec![check("theta_lipschitz", worst <= 1.0 + 1e-12, format!("max |Δθ|·n/|Δx| = {worst:.6}"))];

    let params = ModelParams::new(1, Rational64::from_integer(3), Rational64::new(3, 2), Lambda::Defocusing)?;
    let exps = NormExponents::for_params(&params)?;
    let g = Grid::new(1, 32, 8.0)?;
    let mut worst_chain = 0.0f64;
    for case in 0..50u64 {
        let mut rng = CounterRng::new(17, case);
        let mut field = || {
            let vals = (0..g.len()).map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian())).collect();
            ComplexField::from_values(g, vals)
        };
        let mut full = Trajectory::new(exps, field()?);
        for j in 1..=16 {
            full.push(j as f64 / 16.0, field()?)?;
        }
        let split = 1 + (case as usize % 14);
        let mut window = Trajectory::new(exps, full.states()[split].clone());
        let offset = full.times()[split];
        let mut shifted = Vec::new();
        for j in split + 1..full.len() {
            window.push(full.times()[j] - offset, full.states()[j].clone())?;
            shifted.push(j);
        }
        let prefix = full.accumulator_until(offset)?;
        let level = full.z_values().last().unwrap_or(1.0) / 1.5;
        let trunc = TruncationState::new(level)?;
        for j in shifted {
            let chained = evaluate_phi_chained(&prefix, &window, full.times()[j] - offset, &trunc)?;
            let direct = evaluate_phi(&full, full.times()[j], &trunc, &params)?;
            worst_chain = worst_chain.max((chained - direct).abs());
        }
    }
    checks.push(check("window_chaining", worst_chain <= 1e-12, format!("max |φ_chained − φ_full| = {worst_chain:.3e}")));
    Ok(report("truncation", checks))
}
