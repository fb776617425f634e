//! Scalar denoising problem `min_γ y²/(b+γ) + log(b+γ)`: the four
//! closed-form iterations, their theoretical order/rate, empirical rate
//! estimation and the O(1/k) brackets at and below the threshold `y² = b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Errors below this are treated as having reached the floating-point floor.
pub const ERROR_FLOOR: f64 = 1e-12;
/// Number of ratios in the asymptotic window of [`empirical_rate`].
pub const RATE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseScalarProblem {
    y_sq: f64,
    b: f64,
}

impl DenoiseScalarProblem {
    pub fn new(y_sq: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(SblError::input(format!("b must be positive and finite, got {b}")));
        }
        if !(y_sq >= 0.0) || !y_sq.is_finite() {
            return Err(SblError::input(format!("y^2 must be nonnegative and finite, got {y_sq}")));
        }
        Ok(DenoiseScalarProblem { y_sq, b })
    }

    /// Problem with `y² = r·b`.
    pub fn from_ratio(r: f64, b: f64) -> Result<Self> {
        Self::new(r * b, b)
    }

    pub fn y_sq(&self) -> f64 {
        self.y_sq
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn ratio(&self) -> f64 {
        self.y_sq / self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarScheme {
    Em,
    Mk,
    Cb,
    /// Squared linearization, the `τ → 0`, `η = 1` limit of AMQ.
    Sq,
}

impl ScalarScheme {
    pub const ALL: [ScalarScheme; 4] =
        [ScalarScheme::Em, ScalarScheme::Mk, ScalarScheme::Cb, ScalarScheme::Sq];

    pub fn as_str(self) -> &'static str {
        match self {
            ScalarScheme::Em => "em",
            ScalarScheme::Mk => "mk",
            ScalarScheme::Cb => "cb",
            ScalarScheme::Sq => "sq",
        }
    }
}

impl fmt::Display for ScalarScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScalarScheme {
    type Err = SblError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(ScalarScheme::Em),
            "mk" | "mackay" => Ok(ScalarScheme::Mk),
            "cb" => Ok(ScalarScheme::Cb),
            "sq" => Ok(ScalarScheme::Sq),
            other => Err(SblError::input(format!(
                "unknown scalar scheme '{other}' (expected em, mk, cb or sq)"
            ))),
        }
    }
}

/// `γ* = max(y² − b, 0)`
pub fn closed_form_gamma(problem: &DenoiseScalarProblem) -> f64 {
    (problem.y_sq - problem.b).max(0.0)
}

/// One scalar update.
pub fn step_1d(alg: ScalarScheme, gamma: f64, problem: &DenoiseScalarProblem) -> f64 {
    let (y2, b) = (problem.y_sq, problem.b);
    let s = b + gamma;
    match alg {
        ScalarScheme::Em => {
            let w = gamma / s;
            y2 * w * w + b * w
        }
        ScalarScheme::Mk => y2 * gamma / s,
        ScalarScheme::Cb => gamma * (y2 / s).sqrt(),
        ScalarScheme::Sq => {
            let q = y2 / s;
            gamma * q * q
        }
    }
}

/// `[γ⁰, γ¹, …, γ^iters]`
pub fn trajectory(
    alg: ScalarScheme,
    problem: &DenoiseScalarProblem,
    gamma0: f64,
    iters: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(iters + 1);
    let mut g = gamma0;
    out.push(g);
    for _ in 0..iters {
        g = step_1d(alg, g, problem);
        out.push(g);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `y² > b`
    Above,
    /// `y² < b`
    Below,
    /// `y² = b`: O(1/k) convergence to zero.
    Boundary,
    /// EM with `y² ≥ b` (one formula covers the boundary too).
    EmAbove,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Above => "above",
            Regime::Below => "below",
            Regime::Boundary => "boundary",
            Regime::EmAbove => "em_above",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInfo {
    pub order: f64,
    pub rate: f64,
    pub regime: Regime,
}

impl RateInfo {
    /// `p = 1` with `ζ = 1`: slower than any linear rate.
    pub fn is_sublinear(&self) -> bool {
        self.order == 1.0 && self.rate >= 1.0
    }
}

/// Order and rate of convergence to `γ*` from the closed-form analysis.
/// The boundary `y² = b` is detected by exact equality.
pub fn theoretical_rate(alg: ScalarScheme, problem: &DenoiseScalarProblem) -> RateInfo {
    let (y2, b) = (problem.y_sq, problem.b);
    let linear = |rate, regime| RateInfo {
        order: 1.0,
        rate,
        regime,
    };
    if alg == ScalarScheme::Em {
        return if y2 >= b {
            linear(b * (2.0 * y2 - b) / (y2 * y2), Regime::EmAbove)
        } else {
            linear(1.0, Regime::Below)
        };
    }
    if y2 == b {
        return linear(1.0, Regime::Boundary);
    }
    let above = y2 > b;
    let regime = if above { Regime::Above } else { Regime::Below };
    match (alg, above) {
        (ScalarScheme::Mk, true) => linear(b / y2, regime),
        (ScalarScheme::Mk, false) => linear(y2 / b, regime),
        (ScalarScheme::Cb, true) => linear((b + y2) / (2.0 * y2), regime),
        (ScalarScheme::Cb, false) => linear((y2 / b).sqrt(), regime),
        (ScalarScheme::Sq, true) => linear((2.0 * b / y2 - 1.0).abs(), regime),
        (ScalarScheme::Sq, false) => RateInfo {
            order: 2.0,
            rate: (y2 / b).powi(2),
            regime,
        },
        (ScalarScheme::Em, _) => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRate {
    /// Least-squares slope of `log e_{k+1}` against `log e_k` over the window.
    pub order: f64,
    /// Geometric mean of `e_{k+1}/e_k` when the order rounds to 1, otherwise
    /// arithmetic mean of `e_{k+1}/e_k^p̂` with `p̂` the rounded order.
    pub rate: f64,
}

/// Estimates `(p, ζ)` from the last [`RATE_WINDOW`] error ratios of the
/// trajectory, stopping at the first error below [`ERROR_FLOOR`].
pub fn empirical_rate(
    alg: ScalarScheme,
    problem: &DenoiseScalarProblem,
    gamma0: f64,
    iters: usize,
) -> Result<EmpiricalRate> {
    let target = closed_form_gamma(problem);
    let mut errors = Vec::new();
    for g in trajectory(alg, problem, gamma0, iters) {
        let e = (g - target).abs();
        if !(e >= ERROR_FLOOR) {
            break;
        }
        errors.push(e);
    }
    estimate_from_errors(&errors)
}

/// Rate estimate from a usable error sequence (all entries positive).
pub fn estimate_from_errors(errors: &[f64]) -> Result<EmpiricalRate> {
    let available = errors.len().saturating_sub(1);
    if available < RATE_WINDOW {
        return Err(SblError::WindowTooShort {
            available,
            required: RATE_WINDOW,
        });
    }
    let tail = &errors[errors.len() - RATE_WINDOW - 1..];
    let xs: Vec<f64> = tail[..RATE_WINDOW].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = tail[1..].iter().map(|e| e.ln()).collect();
    let w = RATE_WINDOW as f64;
    let mx = xs.iter().sum::<f64>() / w;
    let my = ys.iter().sum::<f64>() / w;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    // constant errors give a degenerate regression; that is the ζ = 1 limit
    let order = if sxx > 0.0 { sxy / sxx } else { 1.0 };

    let p_hat = order.round().max(1.0);
    let rate = if p_hat == 1.0 {
        ((ys.iter().sum::<f64>() - xs.iter().sum::<f64>()) / w).exp()
    } else {
        tail.windows(2)
            .map(|pair| pair[1] / pair[0].powf(p_hat))
            .sum::<f64>()
            / w
    };
    Ok(EmpiricalRate { order, rate })
}

fn require_below(problem: &DenoiseScalarProblem) -> Result<()> {
    if problem.y_sq < problem.b {
        Ok(())
    } else {
        Err(SblError::input(format!(
            "bracket needs y^2 < b, got y^2 = {}, b = {}",
            problem.y_sq, problem.b
        )))
    }
}

fn require_boundary(problem: &DenoiseScalarProblem) -> Result<()> {
    if problem.y_sq == problem.b {
        Ok(())
    } else {
        Err(SblError::input(format!(
            "bracket needs y^2 = b, got y^2 = {}, b = {}",
            problem.y_sq, problem.b
        )))
    }
}

fn require_positive(gamma0: f64) -> Result<()> {
    if gamma0 > 0.0 && gamma0.is_finite() {
        Ok(())
    } else {
        Err(SblError::input(format!("gamma0 must be positive, got {gamma0}")))
    }
}

/// `c / (k + c/γ⁰)`
fn harmonic(c: f64, gamma0: f64, k: usize) -> f64 {
    c / (k as f64 + c / gamma0)
}

/// `c₀ = y² + b + b²/(b − y²)` of the EM bracket.
pub fn em_bracket_constant(problem: &DenoiseScalarProblem) -> f64 {
    let (y2, b) = (problem.y_sq, problem.b);
    y2 + b + b * b / (b - y2)
}

/// EM below the threshold: `b/(k + b/γ⁰) ≤ γᵏ ≤ c₀/(k + c₀/γ⁰)`.
pub fn em_bracket_1d(problem: &DenoiseScalarProblem, gamma0: f64, k: usize) -> Result<(f64, f64)> {
    require_below(problem)?;
    require_positive(gamma0)?;
    let c0 = em_bracket_constant(problem);
    Ok((harmonic(problem.b, gamma0, k), harmonic(c0, gamma0, k)))
}

/// MacKay at the boundary: exactly `γᵏ = b/(k + b/γ⁰)`.
pub fn mk_boundary_exact(problem: &DenoiseScalarProblem, gamma0: f64, k: usize) -> Result<f64> {
    require_boundary(problem)?;
    require_positive(gamma0)?;
    Ok(harmonic(problem.b, gamma0, k))
}

/// `c₀ = max(4b, sqrt(2bγ⁰))` of the CB bracket.
pub fn cb_bracket_constant(problem: &DenoiseScalarProblem, gamma0: f64) -> f64 {
    (4.0 * problem.b).max((2.0 * problem.b * gamma0).sqrt())
}

/// CB at the boundary: `2b/(k + 2b/γ⁰) ≤ γᵏ ≤ c₀/(k + c₀/γ⁰)`.
pub fn cb_bracket_1d(problem: &DenoiseScalarProblem, gamma0: f64, k: usize) -> Result<(f64, f64)> {
    require_boundary(problem)?;
    require_positive(gamma0)?;
    let c0 = cb_bracket_constant(problem, gamma0);
    Ok((harmonic(2.0 * problem.b, gamma0, k), harmonic(c0, gamma0, k)))
}

/// `c₀ = 2/b + γ⁰/b²` of the SQ bracket.
pub fn sq_bracket_constant(problem: &DenoiseScalarProblem, gamma0: f64) -> f64 {
    2.0 / problem.b + gamma0 / (problem.b * problem.b)
}

/// SQ at the boundary: `1/(c₀k + 1/γ⁰) ≤ γᵏ ≤ 1/(2k/b + 1/γ⁰)`.
pub fn sq_bracket_1d(problem: &DenoiseScalarProblem, gamma0: f64, k: usize) -> Result<(f64, f64)> {
    require_boundary(problem)?;
    require_positive(gamma0)?;
    let c0 = sq_bracket_constant(problem, gamma0);
    let k = k as f64;
    Ok((
        1.0 / (c0 * k + 1.0 / gamma0),
        1.0 / (2.0 * k / problem.b + 1.0 / gamma0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(y2: f64, b: f64) -> DenoiseScalarProblem {
        DenoiseScalarProblem::new(y2, b).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DenoiseScalarProblem::new(1.0, 0.0).is_err());
        assert!(DenoiseScalarProblem::new(-1.0, 1.0).is_err());
        assert_eq!(p(0.5, 2.0).ratio(), 0.25);
    }

    #[test]
    fn closed_form() {
        assert_eq!(closed_form_gamma(&p(4.0, 1.0)), 3.0);
        assert_eq!(closed_form_gamma(&p(0.5, 1.0)), 0.0);
        assert_eq!(closed_form_gamma(&p(1.0, 1.0)), 0.0);
    }

    #[test]
    fn single_steps() {
        assert_eq!(step_1d(ScalarScheme::Em, 1.0, &p(4.0, 1.0)), 1.5);
        assert_eq!(step_1d(ScalarScheme::Sq, 1.0, &p(4.0, 1.0)), 4.0);
        assert_eq!(step_1d(ScalarScheme::Mk, 1.0, &p(4.0, 1.0)), 2.0);
        assert_relative_eq!(step_1d(ScalarScheme::Cb, 1.0, &p(4.0, 1.0)), 2f64.sqrt());
        assert_eq!(step_1d(ScalarScheme::Mk, 1.0, &p(1.0, 1.0)), 0.5);
    }

    #[test]
    fn fixed_point_above_threshold() {
        let q = p(7.0, 2.0);
        for alg in ScalarScheme::ALL {
            assert_relative_eq!(step_1d(alg, 5.0, &q), 5.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn theoretical_values() {
        let r = theoretical_rate(ScalarScheme::Em, &p(4.0, 1.0));
        assert_eq!((r.order, r.rate, r.regime), (1.0, 0.4375, Regime::EmAbove));
        let r = theoretical_rate(ScalarScheme::Sq, &p(0.5, 1.0));
        assert_eq!((r.order, r.rate, r.regime), (2.0, 0.25, Regime::Below));
        let r = theoretical_rate(ScalarScheme::Cb, &p(0.5, 1.0));
        assert_relative_eq!(r.rate, 0.5f64.sqrt());
        assert!(theoretical_rate(ScalarScheme::Em, &p(0.5, 1.0)).is_sublinear());
        let r = theoretical_rate(ScalarScheme::Em, &p(1.0, 1.0));
        assert_eq!((r.rate, r.regime), (1.0, Regime::EmAbove));
        assert_eq!(theoretical_rate(ScalarScheme::Mk, &p(1.0, 1.0)).regime, Regime::Boundary);
        // r = 4 row
        let q = p(4.0, 1.0);
        assert_eq!(theoretical_rate(ScalarScheme::Mk, &q).rate, 0.25);
        assert_eq!(theoretical_rate(ScalarScheme::Cb, &q).rate, 0.625);
        assert_eq!(theoretical_rate(ScalarScheme::Sq, &q).rate, 0.5);
        assert_eq!(theoretical_rate(ScalarScheme::Sq, &p(2.0, 1.0)).rate, 0.0);
        assert_eq!(theoretical_rate(ScalarScheme::Sq, &p(0.25, 1.0)).rate, 0.0625);
    }

    #[test]
    fn mk_rate_estimate() {
        let est = empirical_rate(ScalarScheme::Mk, &p(4.0, 1.0), 1.0, 10_000).unwrap();
        assert_relative_eq!(est.rate, 0.25, max_relative = 0.05);
        assert_relative_eq!(est.order, 1.0, max_relative = 0.05);
    }

    #[test]
    fn em_below_is_sublinear() {
        let est = empirical_rate(ScalarScheme::Em, &p(0.5, 1.0), 1.0, 10_000).unwrap();
        assert!(est.rate > 0.999 && est.rate < 1.0);
    }

    #[test]
    fn estimator_recovers_synthetic_quadratic() {
        // e_{k+1} = 0.5·e_k²
        let mut e = vec![0.5];
        for _ in 0..6 {
            let last = *e.last().unwrap();
            e.push(0.5 * last * last);
        }
        let est = estimate_from_errors(&e).unwrap();
        assert_relative_eq!(est.order, 2.0, max_relative = 1e-9);
        assert_relative_eq!(est.rate, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn window_too_short() {
        // γ⁰ = γ* already
        let err = empirical_rate(ScalarScheme::Mk, &p(2.0, 1.0), 1.0, 100).unwrap_err();
        assert_eq!(
            err,
            SblError::WindowTooShort {
                available: 0,
                required: RATE_WINDOW
            }
        );
    }

    #[test]
    fn brackets() {
        let q = p(0.5, 1.0);
        assert_eq!(em_bracket_constant(&q), 3.5);
        assert_eq!(em_bracket_1d(&q, 1.0, 0).unwrap(), (1.0, 1.0));
        let (lo, hi) = em_bracket_1d(&q, 1.0, 100).unwrap();
        assert_relative_eq!(lo, 1.0 / 101.0);
        assert_relative_eq!(hi, 3.5 / 103.5);
        let g100 = trajectory(ScalarScheme::Em, &q, 1.0, 100)[100];
        assert!(lo <= g100 && g100 <= hi);
        assert!(em_bracket_1d(&p(1.0, 1.0), 1.0, 3).is_err());
        assert!(cb_bracket_1d(&q, 1.0, 3).is_err());
        assert_eq!(mk_boundary_exact(&p(1.0, 1.0), 1.0, 1).unwrap(), 0.5);
    }

    #[test]
    fn sq_oscillates_at_high_ratio() {
        let q = p(20.0, 1.0);
        let traj = trajectory(ScalarScheme::Sq, &q, 1.0, 200);
        let sign_changes = traj
            .windows(2)
            .filter(|w| (w[0] - 19.0).signum() != (w[1] - 19.0).signum())
            .count();
        assert!(sign_changes > 0);
    }
}
