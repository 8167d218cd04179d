//! Monte Carlo checks of the closed forms.
//!
//! Every scenario draws replicate `r` from its own stream
//! `replicate_rng(seed, r)`, evaluates replicates with rayon, and reduces
//! the per-replicate values in index order. Results are therefore
//! bit-identical for a given plan regardless of the thread count.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{
    coverage_biased_noisy, coverage_of_constant, default_variance_of_variance, estimate_coverage,
    estimate_unbiased_coverage, mse_estimate, EvalScheme,
};
use crate::error::{AuditError, Result};
use crate::hypothesis::{b_test, z_test};
use crate::index::{PriceSeries, WeightVector};
use crate::normal::cdf;
use crate::rng::replicate_rng;
use crate::survey::{estimate_from_flat, HouseholdSampler};

/// Default replicate counts per scenario family.
pub const COVERAGE_REPLICATES: usize = 200_000;
pub const CALIBRATION_REPLICATES: usize = 10_000;
pub const POWER_REPLICATES: usize = 2_000;
pub const MSE_REPLICATES: usize = 100_000;
pub const DELTA_REPLICATES: usize = 50_000;

/// Synthetic survey setup: households are drawn around `true_weights`,
/// the proxy weights equal the truth unless a bias is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDesign {
    pub true_weights: Vec<f64>,
    /// Price panel, rows = groups.
    pub prices: Vec<Vec<f64>>,
    pub households: usize,
    pub dispersion: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDesign {
    pub survey: SurveyDesign,
    /// Direction of the proxy-weight bias; must sum to zero.
    pub direction: Vec<f64>,
    /// Bias magnitudes; proxy weights are `true_weights + bias * direction`.
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum DeltaDesign {
    /// Plug-in coverage of a constant at `u = (θ* − θ₀)/σ`, audit estimate
    /// with standard deviation `audit_sd_ratio · σ`.
    PlugIn {
        u: f64,
        audit_sd_ratio: f64,
        alpha: f64,
        omega: f64,
    },
    /// Coverage of an unbiased estimator with estimated variance: v̂ is a
    /// scaled χ² with `audit_households − 1` degrees of freedom around `variance`.
    Unbiased {
        variance: f64,
        audit_households: usize,
        alpha: f64,
        omega: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    CoverageConstant {
        bias: f64,
        alpha: f64,
        omega: f64,
    },
    CoverageUnbiased {
        variance: f64,
        alpha: f64,
        omega: f64,
    },
    CoverageBiasedNoisy {
        bias: f64,
        variance: f64,
        alpha: f64,
        omega: f64,
    },
    ZCalibration(SurveyDesign),
    BCalibration(SurveyDesign),
    PowerCurve(PowerDesign),
    MseUnbiasedness {
        bias: f64,
        audit_variance: f64,
        audit_households: usize,
    },
    DeltaMethodCheck(DeltaDesign),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CoverageConstant { .. } => "coverage_constant",
            Scenario::CoverageUnbiased { .. } => "coverage_unbiased",
            Scenario::CoverageBiasedNoisy { .. } => "coverage_biased_noisy",
            Scenario::ZCalibration(_) => "z_calibration",
            Scenario::BCalibration(_) => "b_calibration",
            Scenario::PowerCurve(_) => "power_curve",
            Scenario::MseUnbiasedness { .. } => "mse_unbiasedness",
            Scenario::DeltaMethodCheck(_) => "delta_method_check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub replicates: usize,
    pub seed: u64,
    pub scenario: Scenario,
}

impl SimulationPlan {
    pub fn new(replicates: usize, seed: u64, scenario: Scenario) -> Self {
        Self {
            replicates,
            seed,
            scenario,
        }
    }

    fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(AuditError::InvalidDesign(
                "replicates must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Evaluates `f` for each replicate with its own stream, in index order.
    fn map_replicates<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut crate::rng::AuditRng) -> T + Sync,
    {
        let seed = self.seed;
        (0..self.replicates as u64)
            .into_par_iter()
            .map(|r| f(&mut replicate_rng(seed, r)))
            .collect()
    }
}

/// An empirical estimate next to the closed-form value it checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub point: f64,
    pub mc_stderr: f64,
    pub target: f64,
    /// `(point − target)/mc_stderr`; absent when the standard error is zero.
    pub z_score: Option<f64>,
    pub replicates_used: usize,
}

impl SimulationOutcome {
    pub fn new(point: f64, mc_stderr: f64, target: f64, replicates_used: usize) -> Self {
        let z_score = if mc_stderr > 0.0 {
            Some((point - target) / mc_stderr)
        } else {
            None
        };
        Self {
            point,
            mc_stderr,
            target,
            z_score,
            replicates_used,
        }
    }

    fn rate(hits: usize, replicates: usize, target: f64) -> Self {
        let p = hits as f64 / replicates as f64;
        Self::new(
            p,
            (p * (1.0 - p) / replicates as f64).sqrt(),
            target,
            replicates,
        )
    }

    /// `|z| < limit`; a zero standard error passes only on exact agreement.
    pub fn within_sigmas(&self, limit: f64) -> bool {
        match self.z_score {
            Some(z) => z.abs() < limit,
            None => self.point == self.target,
        }
    }

    pub fn relative_error(&self) -> f64 {
        (self.point - self.target) / self.target
    }
}

fn scheme(alpha: f64, omega: f64) -> Result<EvalScheme> {
    EvalScheme::new(alpha, omega)
}

/// Fraction of replicates where the estimate lands inside `(Z_A − ω, Z_A + ω)`.
pub fn empirical_coverage(plan: &SimulationPlan) -> Result<SimulationOutcome> {
    plan.check()?;
    let (bias, variance, alpha, omega) = match plan.scenario {
        Scenario::CoverageConstant { bias, alpha, omega } => (bias, 0.0, alpha, omega),
        Scenario::CoverageUnbiased {
            variance,
            alpha,
            omega,
        } => (0.0, variance, alpha, omega),
        Scenario::CoverageBiasedNoisy {
            bias,
            variance,
            alpha,
            omega,
        } => (bias, variance, alpha, omega),
        ref other => {
            return Err(AuditError::WrongScenario {
                operation: "empirical_coverage",
                scenario: other.name(),
            })
        }
    };
    let scheme = scheme(alpha, omega)?;
    let target = coverage_biased_noisy(bias, variance, &scheme)?;
    let sigma = scheme.sigma();
    let tau = variance.sqrt();
    let hits = plan
        .map_replicates(|rng| {
            let centre: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let estimate = bias + tau * noise;
            (estimate - centre).abs() < omega
        })
        .into_iter()
        .filter(|&c| c)
        .count();
    Ok(SimulationOutcome::rate(hits, plan.replicates, target))
}

/// Kolmogorov–Smirnov distance of a sample from N(0, 1).
pub fn ks_distance_normal(sample: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

struct PreparedSurvey {
    prices: PriceSeries,
    truth: WeightVector,
    sampler: HouseholdSampler,
    households: usize,
    level: f64,
}

impl PreparedSurvey {
    fn new(design: &SurveyDesign) -> Result<Self> {
        if design.households < 2 {
            return Err(AuditError::InvalidDesign(
                "need at least two households".into(),
            ));
        }
        if !(design.level > 0.0 && design.level < 1.0) {
            return Err(AuditError::InvalidDesign(format!(
                "test level {}",
                design.level
            )));
        }
        let prices = PriceSeries::from_rows(design.prices.clone())
            .map_err(|e| AuditError::InvalidDesign(e.to_string()))?;
        let truth = WeightVector::new("truth", design.true_weights.clone())?;
        let sampler = HouseholdSampler::new(&truth, design.dispersion)?;
        Ok(Self {
            prices,
            truth,
            sampler,
            households: design.households,
            level: design.level,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<crate::survey::WeightEstimate> {
        let mut flat = vec![0.0; self.households * self.truth.len()];
        self.sampler.fill(rng, &mut flat);
        estimate_from_flat(&flat, self.truth.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    /// Rejection rate at the design level, against the level itself.
    pub rejection: SimulationOutcome,
    pub ks_distance: f64,
    pub statistic_mean: f64,
    pub statistic_sd: f64,
}

/// Null distribution of the Z- or B-test with proxy weights equal to the
/// population weights.
pub fn test_calibration(plan: &SimulationPlan) -> Result<CalibrationOutcome> {
    plan.check()?;
    let (design, use_b) = match &plan.scenario {
        Scenario::ZCalibration(d) => (d, false),
        Scenario::BCalibration(d) => (d, true),
        other => {
            return Err(AuditError::WrongScenario {
                operation: "test_calibration",
                scenario: other.name(),
            })
        }
    };
    let prepared = PreparedSurvey::new(design)?;
    let all = prepared.prices.all_periods();
    let stats = plan
        .map_replicates(|rng| {
            let est = prepared.draw(rng)?;
            let result = if use_b {
                b_test(&prepared.prices, &est, &prepared.truth)
            } else {
                z_test(&prepared.prices, &est, &prepared.truth, &all)
            };
            result
                .map(|r| (r.statistic, r.p_value))
                .map_err(|e| AuditError::InvalidDesign(format!("degenerate synthetic design: {e}")))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let statistics: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let rejections = stats.iter().filter(|s| s.1 < prepared.level).count();
    let (mean, sd) = mean_sd(&statistics);
    Ok(CalibrationOutcome {
        rejection: SimulationOutcome::rate(rejections, plan.replicates, prepared.level),
        ks_distance: ks_distance_normal(&statistics),
        statistic_mean: mean,
        statistic_sd: sd,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub bias: f64,
    pub z: SimulationOutcome,
    pub b: SimulationOutcome,
}

/// Rejection rates of both tests on identical survey draws, for each bias
/// magnitude along `direction`. Outcome targets are the nominal level.
pub fn power_curve(plan: &SimulationPlan) -> Result<Vec<PowerPoint>> {
    plan.check()?;
    let design = match &plan.scenario {
        Scenario::PowerCurve(d) => d,
        other => {
            return Err(AuditError::WrongScenario {
                operation: "power_curve",
                scenario: other.name(),
            })
        }
    };
    if design.biases.is_empty() {
        return Err(AuditError::InvalidDesign("empty bias grid".into()));
    }
    let prepared = PreparedSurvey::new(&design.survey)?;
    let m = prepared.truth.len();
    if design.direction.len() != m {
        return Err(AuditError::DimensionMismatch {
            context: "bias direction",
            expected: m,
            found: design.direction.len(),
        });
    }
    let dir_sum: f64 = design.direction.iter().sum();
    let dir_scale = design.direction.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if dir_sum.abs() > 1e-12 * dir_scale.max(1.0) {
        return Err(AuditError::InvalidDesign(
            "bias direction must sum to zero".into(),
        ));
    }
    let proxies = design
        .biases
        .iter()
        .map(|&bias| {
            let raw: Vec<f64> = prepared
                .truth
                .as_slice()
                .iter()
                .zip(&design.direction)
                .map(|(w, h)| w + bias * h)
                .collect();
            if raw.iter().any(|&w| w < 0.0) {
                return Err(AuditError::InvalidDesign(format!(
                    "bias {bias} makes a proxy weight negative"
                )));
            }
            WeightVector::new(format!("bias={bias}"), raw)
        })
        .collect::<Result<Vec<_>>>()?;
    let all = prepared.prices.all_periods();
    let level = prepared.level;
    let decisions = plan
        .map_replicates(|rng| -> Result<Vec<(bool, bool)>> {
            let est = prepared.draw(rng)?;
            proxies
                .iter()
                .map(|proxy| {
                    let z = z_test(&prepared.prices, &est, proxy, &all)?;
                    let b = b_test(&prepared.prices, &est, proxy)?;
                    Ok((z.p_value < level, b.p_value < level))
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(design
        .biases
        .iter()
        .enumerate()
        .map(|(k, &bias)| {
            let z_hits = decisions.iter().filter(|d| d[k].0).count();
            let b_hits = decisions.iter().filter(|d| d[k].1).count();
            PowerPoint {
                bias,
                z: SimulationOutcome::rate(z_hits, plan.replicates, level),
                b: SimulationOutcome::rate(b_hits, plan.replicates, level),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseOutcome {
    /// Mean MSE estimate against the true squared bias.
    pub mean: SimulationOutcome,
    pub negative_fraction: f64,
}

fn variance_draw<R: Rng + ?Sized>(
    rng: &mut R,
    chi: Option<&ChiSquared<f64>>,
    variance: f64,
    df: f64,
) -> f64 {
    match chi {
        Some(chi) => variance * chi.sample(rng) / df,
        None => 0.0,
    }
}

fn chi_for(variance: f64, households: usize) -> Result<Option<ChiSquared<f64>>> {
    if households < 2 {
        return Err(AuditError::InvalidDesign(
            "need at least two audit households".into(),
        ));
    }
    if variance == 0.0 {
        return Ok(None);
    }
    ChiSquared::new((households - 1) as f64)
        .map(Some)
        .map_err(|e| AuditError::InvalidDesign(e.to_string()))
}

/// Audit estimate `θ̂ ~ N(θ₀, v)` with independent unbiased `v̂`; compares
/// the mean of `(θ* − θ̂)² − v̂` with the true squared bias.
pub fn mse_unbiasedness(plan: &SimulationPlan) -> Result<MseOutcome> {
    plan.check()?;
    let (bias, variance, households) = match plan.scenario {
        Scenario::MseUnbiasedness {
            bias,
            audit_variance,
            audit_households,
        } => (bias, audit_variance, audit_households),
        ref other => {
            return Err(AuditError::WrongScenario {
                operation: "mse_unbiasedness",
                scenario: other.name(),
            })
        }
    };
    if !(variance >= 0.0) {
        return Err(AuditError::InvalidDesign(format!(
            "audit variance {variance}"
        )));
    }
    let chi = chi_for(variance, households)?;
    let df = (households - 1) as f64;
    let sd = variance.sqrt();
    let values = plan.map_replicates(|rng| {
        let audit = sd * rng.sample::<f64, _>(StandardNormal);
        let v_hat = variance_draw(rng, chi.as_ref(), variance, df);
        mse_estimate(bias, audit, v_hat).value
    });
    let (mean, spread) = mean_sd(&values);
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    Ok(MseOutcome {
        mean: SimulationOutcome::new(
            mean,
            spread / (values.len() as f64).sqrt(),
            bias * bias,
            plan.replicates,
        ),
        negative_fraction: negative as f64 / plan.replicates as f64,
    })
}

/// Empirical standard deviation of a coverage estimator against its
/// delta-method standard error at the true parameter values.
pub fn delta_method_check(plan: &SimulationPlan) -> Result<SimulationOutcome> {
    plan.check()?;
    let design = match &plan.scenario {
        Scenario::DeltaMethodCheck(d) => d,
        other => {
            return Err(AuditError::WrongScenario {
                operation: "delta_method_check",
                scenario: other.name(),
            })
        }
    };
    let (values, target) = match *design {
        DeltaDesign::PlugIn {
            u,
            audit_sd_ratio,
            alpha,
            omega,
        } => {
            let scheme = scheme(alpha, omega)?;
            let sd = audit_sd_ratio * scheme.sigma();
            let theta_star = u * scheme.sigma();
            let target = estimate_coverage(theta_star, 0.0, sd * sd, &scheme)?.std_error();
            let values = plan.map_replicates(|rng| {
                let audit = sd * rng.sample::<f64, _>(StandardNormal);
                coverage_of_constant(theta_star, audit, &scheme)
            });
            (values, target)
        }
        DeltaDesign::Unbiased {
            variance,
            audit_households,
            alpha,
            omega,
        } => {
            let scheme = scheme(alpha, omega)?;
            let chi = chi_for(variance, audit_households)?;
            let df = (audit_households - 1) as f64;
            let var_of_var = default_variance_of_variance(variance, audit_households)?;
            let target = estimate_unbiased_coverage(variance, var_of_var, &scheme)?.std_error();
            let values = plan
                .map_replicates(|rng| {
                    let v_hat = variance_draw(rng, chi.as_ref(), variance, df);
                    estimate_unbiased_coverage(v_hat, 0.0, &scheme).map(|c| c.value)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            (values, target)
        }
    };
    let n = values.len() as f64;
    let (mean, sd) = mean_sd(&values);
    // Large-sample standard error of a sample standard deviation.
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var_sd = if sd > 0.0 {
        ((m4 - sd.powi(4)) / (4.0 * sd * sd * n)).max(0.0)
    } else {
        0.0
    };
    Ok(SimulationOutcome::new(
        sd,
        var_sd.sqrt(),
        target,
        plan.replicates,
    ))
}

/// Component of `target` orthogonal to every vector in `against`
/// (Gram–Schmidt), scaled to unit max-norm.
pub fn orthogonal_direction(target: &[f64], against: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in against {
        let mut u = v.clone();
        for b in &basis {
            let proj: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in u.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(u.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut h = target.to_vec();
    for b in &basis {
        let proj: f64 = h.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in h.iter_mut().zip(b) {
            *x -= proj * y;
        }
    }
    let scale = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale < 1e-12 {
        return Err(AuditError::InvalidDesign(
            "direction vanishes after projection".into(),
        ));
    }
    Ok(h.into_iter().map(|x| x / scale).collect())
}

/// Four groups, 36 periods, distinct linear trends and distinct mean
/// levels, no residual variation.
pub fn trend_panel() -> Vec<Vec<f64>> {
    let levels = [101.0, 98.0, 102.0, 99.5];
    let trends = [-0.1, 0.1, 0.25, 0.45];
    let centers = crate::index::time_centers(36);
    levels
        .iter()
        .zip(&trends)
        .map(|(l, g)| centers.iter().map(|d| l + g * d).collect())
        .collect()
}

/// The trend panel plus a deterministic seasonal wiggle per group.
pub fn seasonal_panel() -> Vec<Vec<f64>> {
    let amplitudes = [0.8, -0.3, 0.5, 0.2];
    trend_panel()
        .into_iter()
        .zip(amplitudes)
        .map(|(row, a)| {
            row.into_iter()
                .enumerate()
                .map(|(t, p)| p + a * (std::f64::consts::TAU * t as f64 / 12.0).sin())
                .collect()
        })
        .collect()
}

pub fn default_survey_design(prices: Vec<Vec<f64>>) -> SurveyDesign {
    SurveyDesign {
        true_weights: vec![0.1, 0.2, 0.3, 0.4],
        prices,
        households: 1000,
        dispersion: 0.5,
        level: 0.05,
    }
}

/// Bias that tilts the proxy trend but leaves mean levels untouched.
pub fn trend_aligned_power_design() -> Result<PowerDesign> {
    let prices = trend_panel();
    let levels: Vec<f64> = prices
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let trends = [-0.1, 0.1, 0.25, 0.45];
    let direction = orthogonal_direction(&trends, &[vec![1.0; 4], levels])?;
    Ok(PowerDesign {
        survey: default_survey_design(prices),
        direction,
        biases: vec![0.0, 0.005, 0.01, 0.02, 0.04],
    })
}

/// Bias orthogonal to the mean levels and the trends, so every period's
/// source effect is zero in expectation.
pub fn trend_orthogonal_power_design() -> Result<PowerDesign> {
    let prices = trend_panel();
    let levels: Vec<f64> = prices
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let trends = vec![-0.1, 0.1, 0.25, 0.45];
    let direction = orthogonal_direction(&[1.0, -1.0, 1.0, -1.0], &[vec![1.0; 4], levels, trends])?;
    Ok(PowerDesign {
        survey: default_survey_design(prices),
        direction,
        biases: vec![0.0, 0.01, 0.02, 0.04],
    })
}

/// How a check decides pass/fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PassRule {
    /// Every outcome within this many Monte Carlo standard errors.
    ZScore { limit: f64 },
    /// Rejection rate inside a band and KS distance below a bound.
    Calibration { low: f64, high: f64, max_ks: f64 },
    /// Null point within `limit` σ of size, and some point where B-test
    /// power exceeds Z-test power by at least `min_gap`.
    PowerSeparation { limit: f64, min_gap: f64 },
    /// Every point within `limit` σ of size for both tests.
    PowerNull { limit: f64 },
    /// Mean within `limit` σ, and the negative fraction above `min_negative`.
    Mse {
        limit: f64,
        min_negative: Option<f64>,
    },
    /// Relative error of the standard deviation below `max_relative`.
    Relative { max_relative: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub plan: SimulationPlan,
    pub rule: PassRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedOutcome {
    pub label: String,
    pub outcome: SimulationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub scenario: String,
    pub replicates: usize,
    pub seed: u64,
    pub outcomes: Vec<NamedOutcome>,
    /// Extra statistics (KS distance, negative fraction, power gap).
    pub extras: Vec<(String, f64)>,
    pub rule: PassRule,
    pub passed: bool,
}

fn named(label: impl Into<String>, outcome: SimulationOutcome) -> NamedOutcome {
    NamedOutcome {
        label: label.into(),
        outcome,
    }
}

/// Runs one check and applies its rule.
pub fn run_check(check: &OracleCheck) -> Result<CheckReport> {
    let plan = &check.plan;
    let mut outcomes = Vec::new();
    let mut extras = Vec::new();
    let passed = match (&plan.scenario, &check.rule) {
        (
            Scenario::CoverageConstant { .. }
            | Scenario::CoverageUnbiased { .. }
            | Scenario::CoverageBiasedNoisy { .. },
            PassRule::ZScore { limit },
        ) => {
            let o = empirical_coverage(plan)?;
            outcomes.push(named("coverage", o));
            o.within_sigmas(*limit)
        }
        (
            Scenario::ZCalibration(_) | Scenario::BCalibration(_),
            PassRule::Calibration { low, high, max_ks },
        ) => {
            let c = test_calibration(plan)?;
            outcomes.push(named("rejection_rate", c.rejection));
            extras.push(("ks_distance".to_string(), c.ks_distance));
            extras.push(("statistic_mean".to_string(), c.statistic_mean));
            extras.push(("statistic_sd".to_string(), c.statistic_sd));
            c.rejection.point >= *low && c.rejection.point <= *high && c.ks_distance < *max_ks
        }
        (Scenario::PowerCurve(_), PassRule::PowerSeparation { limit, min_gap }) => {
            let points = power_curve(plan)?;
            let mut gap = f64::NEG_INFINITY;
            let mut null_ok = true;
            for p in &points {
                gap = gap.max(p.b.point - p.z.point);
                if p.bias == 0.0 {
                    null_ok &= p.z.within_sigmas(*limit) && p.b.within_sigmas(*limit);
                }
                outcomes.push(named(format!("z_power@{}", p.bias), p.z));
                outcomes.push(named(format!("b_power@{}", p.bias), p.b));
            }
            extras.push(("max_power_gap".to_string(), gap));
            null_ok && gap >= *min_gap
        }
        (Scenario::PowerCurve(_), PassRule::PowerNull { limit }) => {
            let points = power_curve(plan)?;
            let mut ok = true;
            for p in &points {
                ok &= p.z.within_sigmas(*limit) && p.b.within_sigmas(*limit);
                outcomes.push(named(format!("z_power@{}", p.bias), p.z));
                outcomes.push(named(format!("b_power@{}", p.bias), p.b));
            }
            ok
        }
        (
            Scenario::MseUnbiasedness { .. },
            PassRule::Mse {
                limit,
                min_negative,
            },
        ) => {
            let m = mse_unbiasedness(plan)?;
            outcomes.push(named("mean_mse", m.mean));
            extras.push(("negative_fraction".to_string(), m.negative_fraction));
            m.mean.within_sigmas(*limit) && min_negative.is_none_or(|f| m.negative_fraction > f)
        }
        (Scenario::DeltaMethodCheck(_), PassRule::Relative { max_relative }) => {
            let o = delta_method_check(plan)?;
            outcomes.push(named("std_dev", o));
            extras.push(("relative_error".to_string(), o.relative_error()));
            o.relative_error().abs() <= *max_relative
        }
        (scenario, _) => {
            return Err(AuditError::WrongScenario {
                operation: "run_check",
                scenario: scenario.name(),
            })
        }
    };
    Ok(CheckReport {
        name: check.name.clone(),
        scenario: plan.scenario.name().to_string(),
        replicates: plan.replicates,
        seed: plan.seed,
        outcomes,
        extras,
        rule: check.rule.clone(),
        passed,
    })
}

/// The standard verification battery. Each check gets its own derived seed.
pub fn verification_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    const ALPHA: f64 = 0.95;
    const OMEGA: f64 = 0.058;
    const SE: f64 = 0.029;
    let z3 = PassRule::ZScore { limit: 3.0 };
    let calibration = PassRule::Calibration {
        low: 0.04,
        high: 0.06,
        max_ks: 0.02,
    };
    let mut checks = vec![
        (
            "coverage of the truth".to_string(),
            COVERAGE_REPLICATES,
            Scenario::CoverageConstant {
                bias: 0.0,
                alpha: ALPHA,
                omega: OMEGA,
            },
            z3.clone(),
        ),
        (
            "coverage of a constant at half-width/2".to_string(),
            COVERAGE_REPLICATES,
            Scenario::CoverageConstant {
                bias: OMEGA / 2.0,
                alpha: ALPHA,
                omega: OMEGA,
            },
            z3.clone(),
        ),
        (
            "coverage of a survey-precision unbiased index".to_string(),
            COVERAGE_REPLICATES,
            Scenario::CoverageUnbiased {
                variance: SE * SE,
                alpha: ALPHA,
                omega: OMEGA,
            },
            z3.clone(),
        ),
        (
            "coverage of a survey-precision unbiased index, narrow interval".to_string(),
            COVERAGE_REPLICATES,
            Scenario::CoverageUnbiased {
                variance: SE * SE,
                alpha: ALPHA,
                omega: 0.02,
            },
            z3.clone(),
        ),
    ];
    for &(bias, sd) in &[(0.02, 0.01), (0.05, 0.03), (0.15, 0.05)] {
        checks.push((
            format!("coverage of a biased noisy estimator (bias {bias}, sd {sd})"),
            COVERAGE_REPLICATES,
            Scenario::CoverageBiasedNoisy {
                bias,
                variance: sd * sd,
                alpha: ALPHA,
                omega: OMEGA,
            },
            z3.clone(),
        ));
    }
    checks.push((
        "Z-test null calibration".to_string(),
        CALIBRATION_REPLICATES,
        Scenario::ZCalibration(default_survey_design(seasonal_panel())),
        calibration.clone(),
    ));
    checks.push((
        "B-test null calibration".to_string(),
        CALIBRATION_REPLICATES,
        Scenario::BCalibration(default_survey_design(seasonal_panel())),
        calibration,
    ));
    checks.push((
        "power under trend-aligned proxy bias".to_string(),
        POWER_REPLICATES,
        Scenario::PowerCurve(trend_aligned_power_design()?),
        PassRule::PowerSeparation {
            limit: 3.0,
            min_gap: 0.1,
        },
    ));
    checks.push((
        "power under trend-orthogonal proxy bias".to_string(),
        POWER_REPLICATES,
        Scenario::PowerCurve(trend_orthogonal_power_design()?),
        PassRule::PowerNull { limit: 3.0 },
    ));
    checks.push((
        "MSE estimator, no bias".to_string(),
        MSE_REPLICATES,
        Scenario::MseUnbiasedness {
            bias: 0.0,
            audit_variance: SE * SE,
            audit_households: 100,
        },
        PassRule::Mse {
            limit: 3.0,
            min_negative: Some(0.5),
        },
    ));
    checks.push((
        "MSE estimator, squared bias four times the audit variance".to_string(),
        MSE_REPLICATES,
        Scenario::MseUnbiasedness {
            bias: 2.0 * SE,
            audit_variance: SE * SE,
            audit_households: 100,
        },
        PassRule::Mse {
            limit: 3.0,
            min_negative: None,
        },
    ));
    for &u in &[0.3, 0.6, 1.0, 1.5] {
        checks.push((
            format!("delta-method SD of plug-in coverage (u {u})"),
            DELTA_REPLICATES,
            Scenario::DeltaMethodCheck(DeltaDesign::PlugIn {
                u,
                audit_sd_ratio: 0.1,
                alpha: ALPHA,
                omega: OMEGA,
            }),
            PassRule::Relative { max_relative: 0.15 },
        ));
    }
    for &omega in &[OMEGA, 0.02] {
        checks.push((
            format!("delta-method SD of unbiased-estimator coverage (omega {omega})"),
            DELTA_REPLICATES,
            Scenario::DeltaMethodCheck(DeltaDesign::Unbiased {
                variance: SE * SE,
                audit_households: 100,
                alpha: ALPHA,
                omega,
            }),
            PassRule::Relative { max_relative: 0.20 },
        ));
    }
    Ok(checks
        .into_iter()
        .enumerate()
        .map(|(i, (name, replicates, scenario, rule))| OracleCheck {
            name,
            plan: SimulationPlan::new(replicates, crate::rng::mix_seed(seed, i as u64), scenario),
            rule,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_z_score() {
        let o = SimulationOutcome::new(0.52, 0.01, 0.5, 100);
        assert!((o.z_score.unwrap() - 2.0).abs() < 1e-12);
        assert!(o.within_sigmas(3.0));
        let degenerate = SimulationOutcome::new(1.0, 0.0, 1.0, 10);
        assert_eq!(degenerate.z_score, None);
        assert!(degenerate.within_sigmas(3.0));
    }

    #[test]
    fn wrong_scenarios_are_rejected() {
        let plan = SimulationPlan::new(
            10,
            1,
            Scenario::MseUnbiasedness {
                bias: 0.0,
                audit_variance: 1.0,
                audit_households: 10,
            },
        );
        assert!(matches!(
            empirical_coverage(&plan),
            Err(AuditError::WrongScenario { .. })
        ));
        assert!(matches!(
            test_calibration(&plan),
            Err(AuditError::WrongScenario { .. })
        ));
        assert!(matches!(
            power_curve(&plan),
            Err(AuditError::WrongScenario { .. })
        ));
        assert!(matches!(
            delta_method_check(&plan),
            Err(AuditError::WrongScenario { .. })
        ));
        let zero = SimulationPlan::new(0, 1, plan.scenario.clone());
        assert!(mse_unbiasedness(&zero).is_err());
    }

    #[test]
    fn empty_power_grid_is_rejected() {
        let mut design = trend_aligned_power_design().unwrap();
        design.biases.clear();
        let plan = SimulationPlan::new(10, 1, Scenario::PowerCurve(design));
        assert!(matches!(
            power_curve(&plan),
            Err(AuditError::InvalidDesign(_))
        ));
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let sample: Vec<f64> = (0..n)
            .map(|i| crate::normal::quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        assert!(ks_distance_normal(&sample) <= 0.5 / n as f64 + 1e-12);
        let shifted: Vec<f64> = sample.iter().map(|x| x + 1.0).collect();
        assert!(ks_distance_normal(&shifted) > 0.3);
    }

    #[test]
    fn zero_audit_variance_mse_is_exact() {
        let plan = SimulationPlan::new(
            50,
            3,
            Scenario::MseUnbiasedness {
                bias: 0.3,
                audit_variance: 0.0,
                audit_households: 10,
            },
        );
        let out = mse_unbiasedness(&plan).unwrap();
        assert!((out.mean.point - 0.3 * 0.3).abs() < 1e-15);
        assert!(out.mean.mc_stderr < 1e-15);
        assert_eq!(out.negative_fraction, 0.0);
    }

    #[test]
    fn power_directions_are_orthogonal() {
        let prices = trend_panel();
        let levels: Vec<f64> = prices
            .iter()
            .map(|r| r.iter().sum::<f64>() / 36.0)
            .collect();
        let trends = [-0.1, 0.1, 0.25, 0.45];
        let aligned = trend_aligned_power_design().unwrap().direction;
        let orth = trend_orthogonal_power_design().unwrap().direction;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!(dot(&aligned, &[1.0; 4]).abs() < 1e-12);
        assert!(dot(&aligned, &levels).abs() < 1e-10);
        assert!(dot(&aligned, &trends).abs() > 0.1);
        assert!(dot(&orth, &levels).abs() < 1e-10);
        assert!(dot(&orth, &trends).abs() < 1e-12);
    }
}
