//! Tests for a non-zero expected source effect (Z-test) and for a unity
//! slope of the survey-weight index on the proxy-weight index (B-test).
//!
//! Proxy weights and price indices are treated as fixed; the only
//! randomness is the sampling error of the survey weights, so both test
//! variances are quadratic forms in `V̂(ŵ)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::index::{dot, mean_source_effect, PriceSeries, WeightVector};
use crate::normal::two_sided_p;
use crate::survey::WeightEstimate;

/// Variances below this multiple of `scale²` are treated as zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestKind {
    Z,
    B,
}

/// Survey group, proxy group and the periods a test was run over.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TestLabels {
    pub survey_group: String,
    pub proxy_group: String,
    pub first_period: String,
    pub last_period: String,
    pub n_periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// Δ for the Z-test, β̂ − 1 for the B-test.
    pub effect: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub variance: f64,
    pub labels: TestLabels,
}

impl TestResult {
    fn from_effect(kind: TestKind, effect: f64, variance: f64, labels: TestLabels) -> Self {
        let statistic = effect / variance.sqrt();
        Self {
            kind,
            effect,
            statistic,
            p_value: two_sided_p(statistic),
            variance,
            labels,
        }
    }

    /// The OLS slope β̂ for B-tests; `None` for Z-tests.
    pub fn slope(&self) -> Option<f64> {
        match self.kind {
            TestKind::B => Some(1.0 + self.effect),
            TestKind::Z => None,
        }
    }

    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn labels_for(
    prices: &PriceSeries,
    est: &WeightEstimate,
    proxy: &WeightVector,
    periods: &[usize],
) -> TestLabels {
    let names = prices.period_labels();
    TestLabels {
        survey_group: est.point().label().to_string(),
        proxy_group: proxy.label().to_string(),
        first_period: periods
            .first()
            .map(|&t| names[t].clone())
            .unwrap_or_default(),
        last_period: periods
            .last()
            .map(|&t| names[t].clone())
            .unwrap_or_default(),
        n_periods: periods.len(),
    }
}

fn check_variance(variance: f64, scale: f64) -> Result<()> {
    if !(variance > DEGENERATE_VARIANCE * scale * scale) {
        return Err(AuditError::DegenerateTest { variance });
    }
    Ok(())
}

/// Z-test of `E(Δ) = 0` on the mean price vector over `periods`.
///
/// A single period gives the monthly test on `Δ_t`.
pub fn z_test(
    prices: &PriceSeries,
    est: &WeightEstimate,
    proxy: &WeightVector,
    periods: &[usize],
) -> Result<TestResult> {
    prices.check_groups("weight estimate", est.len())?;
    prices.check_groups("proxy weights", proxy.len())?;
    let p_bar = prices.mean_column(periods)?;
    let effect = mean_source_effect(prices, est.point(), proxy, periods)?;
    let variance = est.quadratic_form(&p_bar)?;
    let scale = p_bar.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    check_variance(variance, scale)?;
    Ok(TestResult::from_effect(
        TestKind::Z,
        effect,
        variance,
        labels_for(prices, est, proxy, periods),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub beta_hat: f64,
    /// Loadings `d` with `β̂ = dᵀŵ`.
    pub loadings: Vec<f64>,
}

struct SlopeDesign {
    /// `p_t − p̄` for each period.
    deviations: Vec<Vec<f64>>,
    /// Centered proxy index `P*_t − P̄*`.
    proxy_centered: Vec<f64>,
    sxx: f64,
}

impl SlopeDesign {
    fn new(prices: &PriceSeries, proxy: &WeightVector) -> Result<Self> {
        prices.check_groups("proxy weights", proxy.len())?;
        let periods = prices.n_periods();
        if periods < 3 {
            return Err(AuditError::TooFew {
                what: "periods for a slope test",
                required: 3,
                found: periods,
            });
        }
        let p_bar = prices.mean_column(&prices.all_periods())?;
        let deviations: Vec<Vec<f64>> = (0..periods)
            .map(|t| {
                prices
                    .column(t)
                    .map(|c| c.iter().zip(&p_bar).map(|(p, m)| p - m).collect())
            })
            .collect::<Result<_>>()?;
        let proxy_centered: Vec<f64> = deviations
            .iter()
            .map(|d| dot(d, proxy.as_slice()))
            .collect();
        let sxx: f64 = proxy_centered.iter().map(|x| x * x).sum();
        let level = dot(&p_bar, proxy.as_slice()).abs();
        if !(sxx > DEGENERATE_VARIANCE * level * level * periods as f64) {
            return Err(AuditError::UndefinedSlope);
        }
        Ok(Self {
            deviations,
            proxy_centered,
            sxx,
        })
    }

    fn loadings(&self) -> Vec<f64> {
        let m = self.deviations[0].len();
        let mut d = vec![0.0; m];
        for (dev, x) in self.deviations.iter().zip(&self.proxy_centered) {
            for (acc, v) in d.iter_mut().zip(dev) {
                *acc += x * v;
            }
        }
        for v in &mut d {
            *v /= self.sxx;
        }
        d
    }

    /// Slope of `p_tᵀw` on the proxy index, evaluated as a ratio of sums so
    /// that `w = w*` returns exactly one.
    fn slope(&self, weights: &[f64]) -> f64 {
        let sxy: f64 = self
            .deviations
            .iter()
            .zip(&self.proxy_centered)
            .map(|(dev, x)| x * dot(dev, weights))
            .sum();
        sxy / self.sxx
    }
}

/// Loadings `d = Σ_t (P*_t − P̄*)(p_t − p̄) / Σ_t (P*_t − P̄*)²`, so that
/// the OLS slope of any index `p_tᵀw` on the proxy index is `dᵀw`.
pub fn slope_loadings(prices: &PriceSeries, proxy: &WeightVector) -> Result<Vec<f64>> {
    Ok(SlopeDesign::new(prices, proxy)?.loadings())
}

/// OLS slope `β̂ = dᵀŵ` of the survey-weight index on the proxy-weight index.
pub fn unity_slope_fit(
    prices: &PriceSeries,
    est: &WeightEstimate,
    proxy: &WeightVector,
) -> Result<SlopeFit> {
    prices.check_groups("weight estimate", est.len())?;
    let design = SlopeDesign::new(prices, proxy)?;
    Ok(SlopeFit {
        beta_hat: design.slope(est.point().as_slice()),
        loadings: design.loadings(),
    })
}

/// B-test of unity slope, `B = (β̂ − 1) / √(dᵀ V̂ d)`.
pub fn b_test(
    prices: &PriceSeries,
    est: &WeightEstimate,
    proxy: &WeightVector,
) -> Result<TestResult> {
    let fit = unity_slope_fit(prices, est, proxy)?;
    let variance = est.quadratic_form(&fit.loadings)?;
    let scale = fit.loadings.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    check_variance(variance, scale)?;
    Ok(TestResult::from_effect(
        TestKind::B,
        fit.beta_hat - 1.0,
        variance,
        labels_for(prices, est, proxy, &prices.all_periods()),
    ))
}

/// Which tests to run for every (survey group, proxy group) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryPlan {
    pub pairs: Vec<(String, String)>,
    /// Period sets for Z-tests (one test per set).
    pub z_windows: Vec<Vec<usize>>,
    /// Period sets for B-tests; each needs at least three periods.
    pub b_windows: Vec<Vec<usize>>,
}

impl BatteryPlan {
    /// Z- and B-test over the full panel for each pair.
    pub fn full_panel(pairs: Vec<(String, String)>, periods: usize) -> Self {
        let all: Vec<usize> = (0..periods).collect();
        Self {
            pairs,
            z_windows: vec![all.clone()],
            b_windows: vec![all],
        }
    }

    /// Adds one single-period Z-test per period.
    pub fn with_monthly_z(mut self, periods: usize) -> Self {
        self.z_windows.extend((0..periods).map(|t| vec![t]));
        self
    }
}

/// Sort key of a battery cell: survey group, proxy group, window, kind.
type CellKey = (String, String, Vec<usize>, TestKind);

/// Runs the requested Z- and B-tests for every pair and window. Output is
/// sorted by survey group, proxy group, window, then test kind.
pub fn cross_group_battery(
    prices: &PriceSeries,
    survey: &BTreeMap<String, WeightEstimate>,
    proxies: &BTreeMap<String, WeightVector>,
    plan: &BatteryPlan,
) -> Result<Vec<TestResult>> {
    if plan.pairs.is_empty() {
        return Err(AuditError::TooFew {
            what: "group pairs",
            required: 1,
            found: 0,
        });
    }
    let mut cells: Vec<(CellKey, TestResult)> = Vec::new();
    for (g, g_proxy) in &plan.pairs {
        let est = survey
            .get(g)
            .ok_or_else(|| AuditError::UnknownLabel(g.clone()))?;
        let proxy = proxies
            .get(g_proxy)
            .ok_or_else(|| AuditError::UnknownLabel(g_proxy.clone()))?;
        for window in &plan.z_windows {
            let mut r = z_test(prices, est, proxy, window)?;
            r.labels.survey_group = g.clone();
            r.labels.proxy_group = g_proxy.clone();
            cells.push(((g.clone(), g_proxy.clone(), window.clone(), TestKind::Z), r));
        }
        for window in &plan.b_windows {
            let sub = prices.select_periods(window)?;
            let mut r = b_test(&sub, est, proxy)?;
            r.labels.survey_group = g.clone();
            r.labels.proxy_group = g_proxy.clone();
            cells.push(((g.clone(), g_proxy.clone(), window.clone(), TestKind::B), r));
        }
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(cells.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(point: &[f64], cov: Vec<Vec<f64>>) -> WeightEstimate {
        WeightEstimate::new(WeightVector::new("s", point.to_vec()).unwrap(), cov, 100).unwrap()
    }

    fn cov3(s: f64) -> Vec<Vec<f64>> {
        // s² (I − 11ᵀ/3): PSD with zero row sums.
        (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| s * s * (if i == j { 1.0 } else { 0.0 } - 1.0 / 3.0))
                    .collect()
            })
            .collect()
    }

    fn panel() -> PriceSeries {
        PriceSeries::from_rows(vec![
            vec![100.0, 101.0, 103.0, 102.5, 104.0],
            vec![99.6, 99.5, 99.0, 98.0, 97.5],
            vec![100.3, 100.2, 100.1, 100.6, 100.3],
        ])
        .unwrap()
    }

    #[test]
    fn equal_weights_give_null_statistics() {
        let w = [0.2, 0.5, 0.3];
        let e = est(&w, cov3(0.01));
        let proxy = WeightVector::new("p", w.to_vec()).unwrap();
        let z = z_test(&panel(), &e, &proxy, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(z.effect, 0.0);
        assert_eq!(z.statistic, 0.0);
        assert_eq!(z.p_value, 1.0);
        let b = b_test(&panel(), &e, &proxy).unwrap();
        assert_eq!(b.effect, 0.0);
        assert_eq!(b.p_value, 1.0);
    }

    #[test]
    fn self_regression_slope_is_one() {
        let proxy = WeightVector::new("p", vec![0.25, 0.45, 0.3]).unwrap();
        let d = slope_loadings(&panel(), &proxy).unwrap();
        assert!((dot(&d, proxy.as_slice()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let w = [0.2, 0.5, 0.3];
        let e = est(&w, vec![vec![0.0; 3]; 3]);
        let proxy = WeightVector::new("p", vec![0.3, 0.4, 0.3]).unwrap();
        assert!(matches!(
            z_test(&panel(), &e, &proxy, &[0]),
            Err(AuditError::DegenerateTest { .. })
        ));
        assert!(matches!(
            b_test(&panel(), &e, &proxy),
            Err(AuditError::DegenerateTest { .. })
        ));
    }

    #[test]
    fn constant_proxy_index_has_no_slope() {
        let flat =
            PriceSeries::from_rows(vec![vec![100.0; 4], vec![100.0; 4], vec![100.0; 4]]).unwrap();
        let e = est(&[0.2, 0.5, 0.3], cov3(0.01));
        let proxy = WeightVector::new("p", vec![0.3, 0.4, 0.3]).unwrap();
        assert_eq!(
            unity_slope_fit(&flat, &e, &proxy).unwrap_err(),
            AuditError::UndefinedSlope
        );
        let short = panel().select_periods(&[0, 1]).unwrap();
        assert!(matches!(
            unity_slope_fit(&short, &e, &proxy),
            Err(AuditError::TooFew { .. })
        ));
    }

    #[test]
    fn statistic_sign_follows_effect() {
        let e = est(&[0.4, 0.3, 0.3], cov3(0.02));
        let proxy = WeightVector::new("p", vec![0.3, 0.4, 0.3]).unwrap();
        let z = z_test(&panel(), &e, &proxy, &[4]).unwrap();
        assert!(z.effect > 0.0 && z.statistic > 0.0);
        assert!((z.statistic - z.effect / z.variance.sqrt()).abs() < 1e-15);
        let b = b_test(&panel(), &e, &proxy).unwrap();
        assert_eq!(b.effect.signum(), b.statistic.signum());
        assert!(
            (b.slope().unwrap() - unity_slope_fit(&panel(), &e, &proxy).unwrap().beta_hat).abs()
                < 1e-12
        );
    }

    #[test]
    fn battery_identity_pairs_and_order() {
        let w = vec![0.2, 0.5, 0.3];
        let mut survey = BTreeMap::new();
        survey.insert("4".to_string(), est(&w, cov3(0.01)));
        survey.insert("1".to_string(), est(&w, cov3(0.01)));
        let mut proxies = BTreeMap::new();
        proxies.insert("4".to_string(), WeightVector::new("4", w.clone()).unwrap());
        proxies.insert("1".to_string(), WeightVector::new("1", w).unwrap());
        let plan = BatteryPlan::full_panel(
            vec![
                ("4".into(), "4".into()),
                ("1".into(), "4".into()),
                ("4".into(), "1".into()),
            ],
            5,
        )
        .with_monthly_z(5);
        let out = cross_group_battery(&panel(), &survey, &proxies, &plan).unwrap();
        assert_eq!(out.len(), 3 * 7);
        for r in &out {
            match r.kind {
                TestKind::Z => assert_eq!(r.statistic, 0.0),
                TestKind::B => assert!((r.slope().unwrap() - 1.0).abs() < 1e-13),
            }
        }
        assert_eq!(out[0].labels.survey_group, "1");
        assert_eq!(out.last().unwrap().labels.proxy_group, "4");
        let empty = BatteryPlan::default();
        assert!(cross_group_battery(&panel(), &survey, &proxies, &empty).is_err());
        let unknown = BatteryPlan::full_panel(vec![("9".into(), "4".into())], 5);
        assert_eq!(
            cross_group_battery(&panel(), &survey, &proxies, &unknown).unwrap_err(),
            AuditError::UnknownLabel("9".into())
        );
    }
}
