//! Exact rational exponent algebra.
//!
//! Every exponent that enters the solver (Strichartz pairs, the time-gain
//! exponents δ and δ̃, interpolation weights, the global-existence bound on γ)
//! is computed here in `Ratio<i64>` arithmetic. Conversion to `f64` happens
//! only through [`to_f64`] at the solver boundary.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn to_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn q(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn int(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// Parses `"3"`, `"3/2"`, `"-1/4"` or a finite decimal such as `"1.125"`.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    let bad = || Error::Decode(format!("not a rational number: {s:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad())?;
        let den: i64 = den.trim().parse().map_err(|_| bad())?;
        // i64::MIN has no negation, which reducing the fraction may need
        if den == 0 || num == i64::MIN || den == i64::MIN {
            return Err(bad());
        }
        return Ok(Rational64::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = whole.strip_prefix(['-', '+']).unwrap_or(whole);
        if frac.is_empty() && digits.is_empty() {
            return Err(bad());
        }
        if !digits.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        if frac.len() > 15 {
            return Err(bad());
        }
        let scale = 10i64.pow(frac.len() as u32);
        let whole: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        let frac: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = whole
            .checked_mul(scale)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(bad)?;
        let r = Rational64::new(num, scale);
        return Ok(if negative { -r } else { r });
    }
    s.parse::<i64>().map(int).map_err(|_| bad())
}

/// Serde adapter: rationals travel as strings (`"3/2"`), and integers or
/// short decimals are accepted on input.
pub mod rational_serde {
    use super::*;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Rational64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational number as integer, decimal or \"p/q\" string")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rational64, E> {
                Ok(int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rational64, E> {
                i64::try_from(v).map(int).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rational64, E> {
                // Round-trip through the shortest decimal representation so
                // that 1.1 becomes 11/10 rather than a binary fraction.
                parse_rational(&format!("{v}")).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rational64, E> {
                parse_rational(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Sign λ of the power nonlinearity `−iλ|u|^{α−1}u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Lambda {
    Focusing,
    Defocusing,
}

impl Lambda {
    pub fn sign(self) -> f64 {
        match self {
            Lambda::Focusing => -1.0,
            Lambda::Defocusing => 1.0,
        }
    }
}

impl TryFrom<i64> for Lambda {
    type Error = String;
    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Lambda::Focusing),
            1 => Ok(Lambda::Defocusing),
            other => Err(format!("lambda must be -1 or +1, got {other}")),
        }
    }
}

impl From<Lambda> for i64 {
    fn from(l: Lambda) -> i64 {
        match l {
            Lambda::Focusing => -1,
            Lambda::Defocusing => 1,
        }
    }
}

/// Bound on numerator and denominator of α and γ; keeps every derived
/// exponent far away from `i64` overflow.
pub const MAX_TERM: i64 = 1_000_000;

/// Space dimension, nonlinearity power α, noise power γ and sign λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams", into = "RawModelParams")]
pub struct ModelParams {
    d: u32,
    alpha: Rational64,
    gamma: Rational64,
    lambda: Lambda,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelParams {
    d: u32,
    #[serde(with = "rational_serde")]
    alpha: Rational64,
    #[serde(with = "rational_serde")]
    gamma: Rational64,
    lambda: Lambda,
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawModelParams) -> Result<Self> {
        ModelParams::new(r.d, r.alpha, r.gamma, r.lambda)
    }
}

impl From<ModelParams> for RawModelParams {
    fn from(p: ModelParams) -> Self {
        RawModelParams { d: p.d, alpha: p.alpha, gamma: p.gamma, lambda: p.lambda }
    }
}

impl ModelParams {
    /// Validates `1 < α ≤ 1 + 4/d` and `1 ≤ γ ≤ 1 + 2/d`.
    pub fn new(d: u32, alpha: Rational64, gamma: Rational64, lambda: Lambda) -> Result<Self> {
        if d == 0 || d > 64 {
            return Err(Error::InvalidParams(format!("dimension d = {d} must be in 1..=64")));
        }
        for (name, r) in [("alpha", alpha), ("gamma", gamma)] {
            if r.numer().abs() > MAX_TERM || r.denom().abs() > MAX_TERM {
                return Err(Error::InvalidParams(format!(
                    "{name} = {r} has numerator or denominator above {MAX_TERM}"
                )));
            }
        }
        let di = d as i64;
        let alpha_max = int(1) + q(4, di);
        let gamma_max = int(1) + q(2, di);
        if alpha <= int(1) || alpha > alpha_max {
            return Err(Error::InvalidParams(format!(
                "alpha = {alpha} outside the local existence range (1, 1+4/d] = (1, {alpha_max}]"
            )));
        }
        if gamma < int(1) || gamma > gamma_max {
            return Err(Error::InvalidParams(format!(
                "gamma = {gamma} outside the local existence range [1, 1+2/d] = [1, {gamma_max}]"
            )));
        }
        Ok(ModelParams { d, alpha, gamma, lambda })
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn alpha(&self) -> Rational64 {
        self.alpha
    }
    pub fn gamma(&self) -> Rational64 {
        self.gamma
    }
    pub fn lambda(&self) -> Lambda {
        self.lambda
    }

    pub fn is_alpha_critical(&self) -> bool {
        self.alpha == int(1) + q(4, self.d as i64)
    }

    pub fn is_gamma_critical(&self) -> bool {
        self.gamma == int(1) + q(2, self.d as i64)
    }

    /// Which Bochner norm makes up the Y part of the fixed-point norm:
    /// `L^q L^{α+1}` when `α+1 ≥ 2γ` (ties included), `L^{q̃} L^{2γ}` otherwise.
    pub fn y_branch(&self) -> YBranch {
        if self.alpha + int(1) >= int(2) * self.gamma {
            YBranch::Alpha
        } else {
            YBranch::Gamma
        }
    }

    /// Time exponents used by the running norm process Z_t.
    pub fn z_exponents(&self) -> Result<ZExponents> {
        let p = self.alpha + int(1);
        let q = strichartz_q(Exponent::Finite(p), self.d)?;
        let p_tilde = int(2) * self.gamma;
        let q_tilde = if self.gamma == int(1) {
            // (∞, 2) is the energy pair: the second summand becomes sup_s ‖u(s)‖₂.
            Exponent::Infinite
        } else {
            Exponent::Finite(strichartz_q(Exponent::Finite(p_tilde), self.d)?)
        };
        Ok(ZExponents { p, q, p_tilde, q_tilde })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YBranch {
    Alpha,
    Gamma,
}

/// A Lebesgue exponent in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
}

impl Exponent {
    pub fn to_f64(self) -> f64 {
        match self {
            Exponent::Finite(r) => to_f64(r),
            Exponent::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(r) => write!(f, "{r}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            other => parse_rational(other).map(Exponent::Finite),
        }
    }
}

/// Spatial exponent `p` and temporal exponent `q` with `2/q + d/p = d/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrichartzPair {
    p: Exponent,
    q: Rational64,
    d: u32,
}

impl StrichartzPair {
    pub fn new(p: Exponent, d: u32) -> Result<Self> {
        let q = strichartz_q(p, d)?;
        Ok(StrichartzPair { p, q, d })
    }
    pub fn p(&self) -> Exponent {
        self.p
    }
    pub fn q(&self) -> Rational64 {
        self.q
    }
    pub fn d(&self) -> u32 {
        self.d
    }

    /// `2/q + d/p − d/2`, zero for every constructed pair.
    pub fn scaling_residual(&self) -> Rational64 {
        let dp = match self.p {
            Exponent::Finite(p) => int(self.d as i64) / p,
            Exponent::Infinite => Rational64::zero(),
        };
        int(2) / self.q + dp - q(self.d as i64, 2)
    }
}

/// Exponents of the two Bochner norms inside `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZExponents {
    /// Spatial exponent α+1.
    pub p: Rational64,
    pub q: Rational64,
    /// Spatial exponent 2γ.
    pub p_tilde: Rational64,
    /// Infinite exactly when γ = 1.
    pub q_tilde: Exponent,
}

/// Temporal Strichartz exponent q solving `2/q + d/p = d/2`.
///
/// Rejects `p < 2`, the trivial endpoint `p = 2` (which forces `q = ∞`), and
/// every `p` for which the scaling identity gives `q ≤ 2` (this covers the
/// forbidden `(q, p, d) = (2, ∞, 2)`).
pub fn strichartz_q(p: Exponent, d: u32) -> Result<Rational64> {
    if d == 0 {
        return Err(Error::NotAdmissible("dimension must be positive".into()));
    }
    let half_d = q(d as i64, 2);
    let rhs = match p {
        Exponent::Finite(p) => {
            if p < int(2) {
                return Err(Error::NotAdmissible(format!("p = {p} < 2")));
            }
            if p == int(2) {
                return Err(Error::NotAdmissible("p = 2 forces q = inf (trivial endpoint)".into()));
            }
            half_d - int(d as i64) / p
        }
        Exponent::Infinite => half_d,
    };
    // rhs = 2/q
    debug_assert!(rhs.is_positive());
    let qv = int(2) / rhs;
    if qv <= int(2) {
        return Err(Error::NotAdmissible(format!("p = {p} in d = {d} gives q = {qv} <= 2")));
    }
    Ok(qv)
}

/// Time-gain and interpolation exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapExponents {
    /// δ = 1 + d(1−α)/4.
    pub delta: Rational64,
    /// δ̃ = 1 + d(1−γ)/2.
    pub delta_tilde: Rational64,
    /// θ with 1/(2γ) = θ/(α+1) + (1−θ)/2.
    pub theta_interp: Rational64,
    /// θ = (α+1−2γ)/((α−1)γ), the weight on the L² factor.
    pub theta_global: Rational64,
    /// δ = 0.
    pub critical: bool,
    /// γ = 1: linear noise, where the γ-dependent interpolation step is not
    /// used; `theta_global` then holds its γ → 1 limit.
    pub theta_degenerate: bool,
    /// (2γ−1)θ, the power of ‖u₀‖₂ in the bootstrap constants.
    pub mass_power: Rational64,
}

pub fn bootstrap_exponents(params: &ModelParams) -> BootstrapExponents {
    let d = int(params.d as i64);
    let (alpha, gamma) = (params.alpha, params.gamma);
    let one = Rational64::one();
    let delta = one + d * (one - alpha) / int(4);
    let delta_tilde = one + d * (one - gamma) / int(2);
    let half = q(1, 2);
    // 1/(2γ) = θ/(α+1) + (1−θ)/2  ⇔  θ = (1/2 − 1/(2γ)) / (1/2 − 1/(α+1))
    let theta_interp = (half - one / (int(2) * gamma)) / (half - one / (alpha + one));
    let theta_global = (alpha + one - int(2) * gamma) / ((alpha - one) * gamma);
    BootstrapExponents {
        delta,
        delta_tilde,
        theta_interp,
        theta_global,
        critical: delta.is_zero(),
        theta_degenerate: gamma == one,
        mass_power: (int(2) * gamma - one) * theta_global,
    }
}

/// Exclusive upper bound on γ for global existence,
/// `(α−1)/(α+1) · (4+d(1−α))/(4α+d(1−α)) + 1`.
pub fn gamma_global_bound(d: u32, alpha: Rational64) -> Result<Rational64> {
    if d == 0 {
        return Err(Error::OutOfRange("dimension must be positive".into()));
    }
    let di = int(d as i64);
    let one = Rational64::one();
    if alpha <= one || alpha >= one + int(4) / di {
        return Err(Error::OutOfRange(format!(
            "alpha = {alpha} must be strictly subcritical, 1 < alpha < {}",
            one + int(4) / di
        )));
    }
    let a = (alpha - one) / (alpha + one);
    let b = (int(4) + di * (one - alpha)) / (int(4) * alpha + di * (one - alpha));
    Ok(a * b + one)
}

/// Window length σ = min(C₁^{−1/δ}(2^{α+1}K^{α−1})^{−1/δ}, T), which makes
/// `C₁ σ^δ K^{α−1} ≤ 2^{−(α+1)}`.
pub fn picard_window_length(
    k: f64,
    c1: f64,
    delta: Rational64,
    alpha: Rational64,
    horizon: f64,
) -> Result<f64> {
    if delta.is_zero() {
        return Err(Error::CriticalDelta);
    }
    if delta.is_negative() {
        return Err(Error::OutOfRange(format!("delta = {delta} < 0 (supercritical)")));
    }
    if !(c1 > 0.0) || !(k >= 0.0) || !(horizon > 0.0) {
        return Err(Error::OutOfRange(format!("need C1 > 0, K >= 0, T > 0 (got {c1}, {k}, {horizon})")));
    }
    let delta = to_f64(delta);
    let alpha = to_f64(alpha);
    let denom = c1 * 2f64.powf(alpha + 1.0) * k.powf(alpha - 1.0);
    if denom == 0.0 {
        return Ok(horizon);
    }
    let sigma = denom.powf(-1.0 / delta);
    Ok(sigma.min(horizon))
}

/// Bootstrap constants `(K_n, C₁)` of the global-existence argument:
///
/// ```text
/// K_n = C‖u₀‖₂ + C T^δ̃ ‖u₀‖₂^{(2γ−1)θ} Σ‖e_m‖∞² + ‖K_stoch u_n‖_{Y_T}
/// C₁  = C (1 + T^{δ̃−δ} ‖u₀‖₂^{(2γ−1)θ} Σ‖e_m‖∞²)
/// ```
///
/// `c` is a Strichartz constant (unknown analytically; see
/// `propagator::estimate_strichartz_constant` for an empirical lower bound).
pub fn bootstrap_constants(
    c: f64,
    u0_l2: f64,
    noise_sup_sq_sum: f64,
    stoch_conv_yt: f64,
    horizon: f64,
    exps: &BootstrapExponents,
) -> (f64, f64) {
    let delta = to_f64(exps.delta);
    let delta_tilde = to_f64(exps.delta_tilde);
    let mass_factor = u0_l2.powf(to_f64(exps.mass_power)) * noise_sup_sq_sum;
    let k_n = c * u0_l2 + c * horizon.powf(delta_tilde) * mass_factor + stoch_conv_yt;
    let c1 = c * (1.0 + horizon.powf(delta_tilde - delta) * mass_factor);
    (k_n, c1)
}

/// Outcome of the elementary-calculus dichotomy `x ≤ 1 + x^α/2^{α+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dichotomy {
    LowerBranch,
    UpperBranch,
    ViolatesPremise,
}

/// The two positive roots `c₁ < 2 < c₂` of `x = 1 + x^α / 2^{α+1}`.
pub fn dichotomy_roots(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::OutOfRange(format!("alpha = {alpha} must exceed 1")));
    }
    let scale = 2f64.powf(alpha + 1.0);
    let f = |x: f64| 1.0 + x.powf(alpha) / scale - x;
    // f(0) = 1 > 0, f(2) = -1/2 < 0.
    let c1 = bisect(f, 0.0, 2.0);
    let mut hi = 4.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::OutOfRange(format!("upper root for alpha = {alpha} overflows")));
        }
    }
    let c2 = bisect(f, hi / 2.0, hi);
    Ok((c1, c2))
}

/// Bisection on a sign change `f(lo) > 0 ≥ f(hi)` or `f(lo) ≤ 0 < f(hi)`,
/// run until the bracket stops shrinking in floating point.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_positive = f(lo) > 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-12 * 1e-4 * hi.abs().max(1.0) {
            return mid;
        }
        if (f(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

pub fn calculus_dichotomy_check(x: f64, alpha: f64) -> Result<Dichotomy> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange(format!("x = {x} must be non-negative")));
    }
    let (c1, c2) = dichotomy_roots(alpha)?;
    let premise = x <= 1.0 + x.powf(alpha) / 2f64.powf(alpha + 1.0);
    Ok(if !premise {
        Dichotomy::ViolatesPremise
    } else if x <= 0.5 * (c1 + c2) {
        Dichotomy::LowerBranch
    } else {
        Dichotomy::UpperBranch
    })
}
