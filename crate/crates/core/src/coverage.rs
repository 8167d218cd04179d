//! Evaluation coverage: the probability that an estimate falls inside an
//! autonomous interval `(Z_A − ω, Z_A + ω)` with `Z_A ~ N(θ₀, σ²)` and
//! `σ = ω/κ_α`, `κ_α` the `(1+α)/2` standard normal quantile.
//!
//! All closed forms specialize one kernel: an estimate `N(θ₀ + b, τ²)`
//! independent of `Z_A` is covered with probability
//! `Φ((b+ω)/ν) − Φ((b−ω)/ν)`, `ν² = σ² + τ²`.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::normal::{interval_prob, pdf, upper_quantile};
use crate::roots::bisect;

/// Two-sided 95% normal quantile used for coverage confidence intervals.
pub const CI_QUANTILE: f64 = 1.959_963_984_540_054;

/// `κ_α = Φ⁻¹((1+α)/2)`.
pub fn kappa_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::OutOfRange {
            name: "alpha",
            value: alpha,
            expected: "(0, 1)",
        });
    }
    // Solving on the upper tail keeps full precision as alpha → 1.
    upper_quantile((1.0 - alpha) / 2.0)
}

/// The `(α, ω)` pair defining the evaluation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScheme {
    alpha: f64,
    omega: f64,
    kappa: f64,
    sigma: f64,
}

impl EvalScheme {
    pub fn new(alpha: f64, omega: f64) -> Result<Self> {
        let kappa = kappa_quantile(alpha)?;
        if !(omega.is_finite() && omega > 0.0) {
            return Err(AuditError::OutOfRange {
                name: "omega",
                value: omega,
                expected: "positive and finite",
            });
        }
        Ok(Self {
            alpha,
            omega,
            kappa,
            sigma: omega / kappa,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Half-width of the evaluation interval.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Standard deviation of the interval center, `ω/κ`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Coverage of an estimate with bias `bias` and sampling variance
/// `variance`.
pub fn coverage_biased_noisy(bias: f64, variance: f64, scheme: &EvalScheme) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(AuditError::OutOfRange {
            name: "variance",
            value: variance,
            expected: ">= 0",
        });
    }
    let nu = (scheme.sigma * scheme.sigma + variance).sqrt();
    Ok(kernel(bias, nu, scheme.omega))
}

fn kernel(bias: f64, nu: f64, omega: f64) -> f64 {
    interval_prob((bias - omega) / nu, (bias + omega) / nu)
}

/// `c(θ*) = Φ(b/σ + κ) − Φ(b/σ − κ)` with `b = θ* − θ₀`.
pub fn coverage_of_constant(theta_star: f64, theta_true: f64, scheme: &EvalScheme) -> f64 {
    kernel(theta_star - theta_true, scheme.sigma, scheme.omega)
}

/// Coverage `2Φ(ω/τ) − 1`, `τ² = σ² + variance`, of an unbiased estimator.
pub fn coverage_of_unbiased(variance: f64, scheme: &EvalScheme) -> Result<f64> {
    coverage_biased_noisy(0.0, variance, scheme)
}

/// A coverage estimate with its delta-method variance and a clipped
/// normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub value: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when either interval bound was clipped to [0, 1].
    pub clipped: bool,
}

impl CoverageEstimate {
    fn with_interval(value: f64, variance: f64) -> Self {
        let half = CI_QUANTILE * variance.sqrt();
        let (lo, hi) = (value - half, value + half);
        Self {
            value,
            variance,
            ci_low: lo.max(0.0),
            ci_high: hi.min(1.0),
            clipped: lo < 0.0 || hi > 1.0,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(AuditError::OutOfRange {
            name,
            value,
            expected: ">= 0",
        });
    }
    Ok(())
}

/// Plug-in coverage of a zero-variance estimate `theta_star`, using the
/// audit estimate `theta_audit` in place of the unknown truth.
///
/// `V(ĉ*) ≈ V(θ̂_A)/σ² · (φ(u+κ) − φ(u−κ))²`, `u = (θ* − θ̂_A)/σ`.
pub fn estimate_coverage(
    theta_star: f64,
    theta_audit: f64,
    audit_variance: f64,
    scheme: &EvalScheme,
) -> Result<CoverageEstimate> {
    non_negative("audit variance", audit_variance)?;
    let value = coverage_of_constant(theta_star, theta_audit, scheme);
    let u = (theta_star - theta_audit) / scheme.sigma;
    let gradient = pdf(u + scheme.kappa) - pdf(u - scheme.kappa);
    let variance = audit_variance / (scheme.sigma * scheme.sigma) * gradient * gradient;
    Ok(CoverageEstimate::with_interval(value, variance))
}

/// Coverage of an unbiased estimator whose variance is itself estimated
/// by `audit_variance_estimate` (v̂) with variance `var_of_variance`.
///
/// `V̂(ĉ_s) ≈ (2φ(ω/τ̂))² · ω²/(4τ̂⁶) · V̂(v̂)`, from `∂(ω/τ̂)/∂v̂ = −ω/(2τ̂³)`.
pub fn estimate_unbiased_coverage(
    audit_variance_estimate: f64,
    var_of_variance: f64,
    scheme: &EvalScheme,
) -> Result<CoverageEstimate> {
    non_negative("audit variance estimate", audit_variance_estimate)?;
    non_negative("variance of variance", var_of_variance)?;
    let tau_sq = scheme.sigma * scheme.sigma + audit_variance_estimate;
    let tau = tau_sq.sqrt();
    let value = kernel(0.0, tau, scheme.omega);
    let density = 2.0 * pdf(scheme.omega / tau);
    let omega_sq = scheme.omega * scheme.omega;
    let variance =
        density * density * omega_sq / (4.0 * tau_sq * tau_sq * tau_sq) * var_of_variance;
    Ok(CoverageEstimate::with_interval(value, variance))
}

/// The same variance with `ω²/(4τ̂²)` in place of `ω²/(4τ̂⁶)`. Kept only to
/// compare against simulation; it is not the delta-method variance.
pub fn unbiased_coverage_variance_tau_squared(
    audit_variance_estimate: f64,
    var_of_variance: f64,
    scheme: &EvalScheme,
) -> f64 {
    let tau_sq = scheme.sigma * scheme.sigma + audit_variance_estimate;
    let density = 2.0 * pdf(scheme.omega / tau_sq.sqrt());
    density * density * scheme.omega * scheme.omega / (4.0 * tau_sq) * var_of_variance
}

/// `2 v̂² / (n − 1)`, the variance of a sample variance under normality.
pub fn default_variance_of_variance(
    audit_variance_estimate: f64,
    audit_households: usize,
) -> Result<f64> {
    if audit_households < 2 {
        return Err(AuditError::TooFew {
            what: "audit households",
            required: 2,
            found: audit_households,
        });
    }
    Ok(2.0 * audit_variance_estimate * audit_variance_estimate / (audit_households - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub value: f64,
    pub negative: bool,
}

/// Unbiased MSE estimate `(θ* − θ̂)² − V̂(θ̂)` of a zero-variance estimate.
/// Often negative when the audit variance dominates the squared bias.
pub fn mse_estimate(theta_star: f64, theta_audit: f64, audit_variance: f64) -> MseEstimate {
    let diff = theta_star - theta_audit;
    let value = diff * diff - audit_variance;
    MseEstimate {
        value,
        negative: value < 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakEven {
    /// Sampling variance at which an unbiased estimator has the target
    /// coverage.
    pub variance: f64,
    pub target_coverage: f64,
    /// True when the target is already at the maximum `α`; the variance
    /// is then zero.
    pub at_maximum: bool,
}

impl BreakEven {
    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Variance `v` with `coverage_of_unbiased(v) = target`.
pub fn break_even_for_coverage(target: f64, scheme: &EvalScheme) -> Result<BreakEven> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(AuditError::OutOfRange {
            name: "target coverage",
            value: target,
            expected: "(0, alpha)",
        });
    }
    let at_zero = coverage_of_unbiased(0.0, scheme)?;
    if target >= at_zero {
        return Ok(BreakEven {
            variance: 0.0,
            target_coverage: target,
            at_maximum: true,
        });
    }
    let f = |v: f64| kernel(0.0, (scheme.sigma * scheme.sigma + v).sqrt(), scheme.omega) - target;
    let mut hi = scheme.sigma * scheme.sigma;
    let mut doublings = 0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(AuditError::RootNotFound(format!(
                "no variance reaches coverage {target}"
            )));
        }
    }
    let variance = bisect(f, 0.0, hi, 1e-14, 0.0)?;
    Ok(BreakEven {
        variance,
        target_coverage: target,
        at_maximum: false,
    })
}

/// Sampling variance at which an unbiased estimator is covered as often
/// as the constant `theta_star`.
pub fn break_even_variance(
    theta_star: f64,
    theta_true: f64,
    scheme: &EvalScheme,
) -> Result<BreakEven> {
    let target = coverage_of_constant(theta_star, theta_true, scheme);
    if target >= scheme.alpha {
        return Ok(BreakEven {
            variance: 0.0,
            target_coverage: target,
            at_maximum: true,
        });
    }
    break_even_for_coverage(target, scheme)
}
