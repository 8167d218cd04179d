//! Weighted price-index arithmetic.
//!
//! A [`PriceSeries`] holds group price indices `p[i][t]` for `m` groups and
//! `T` periods. Indices can be on any scale (base 1 or base 100); nothing
//! here assumes one.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Group price indices, rows = groups, columns = periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    values: Vec<Vec<f64>>,
    group_labels: Vec<String>,
    period_labels: Vec<String>,
}

impl PriceSeries {
    pub fn new(
        group_labels: Vec<String>,
        period_labels: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if group_labels.len() < 2 {
            return Err(AuditError::TooFew {
                what: "groups",
                required: 2,
                found: group_labels.len(),
            });
        }
        if period_labels.is_empty() {
            return Err(AuditError::TooFew {
                what: "periods",
                required: 1,
                found: 0,
            });
        }
        if values.len() != group_labels.len() {
            return Err(AuditError::DimensionMismatch {
                context: "price rows",
                expected: group_labels.len(),
                found: values.len(),
            });
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != period_labels.len() {
                return Err(AuditError::DimensionMismatch {
                    context: "price columns",
                    expected: period_labels.len(),
                    found: row.len(),
                });
            }
            for (t, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(AuditError::InvalidPrice {
                        group: group_labels[i].clone(),
                        period: period_labels[t].clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            values,
            group_labels,
            period_labels,
        })
    }

    /// Convenience constructor with generated labels `g1..gm`, `t1..tT`.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.len();
        let periods = values.first().map_or(0, Vec::len);
        Self::new(
            (1..=m).map(|i| format!("g{i}")).collect(),
            (1..=periods).map(|t| format!("t{t}")).collect(),
            values,
        )
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels.len()
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn row(&self, group: usize) -> &[f64] {
        &self.values[group]
    }

    pub fn value(&self, group: usize, period: usize) -> f64 {
        self.values[group][period]
    }

    /// The price vector `p_t` across groups.
    pub fn column(&self, period: usize) -> Result<Vec<f64>> {
        self.check_period(period)?;
        Ok(self.values.iter().map(|row| row[period]).collect())
    }

    /// Unweighted mean of the price vectors over the selected periods.
    pub fn mean_column(&self, periods: &[usize]) -> Result<Vec<f64>> {
        if periods.is_empty() {
            return Err(AuditError::EmptyPeriods);
        }
        for &t in periods {
            self.check_period(t)?;
        }
        let n = periods.len() as f64;
        Ok(self
            .values
            .iter()
            .map(|row| periods.iter().map(|&t| row[t]).sum::<f64>() / n)
            .collect())
    }

    pub fn all_periods(&self) -> Vec<usize> {
        (0..self.n_periods()).collect()
    }

    /// Sub-panel restricted to the given periods, in the given order.
    pub fn select_periods(&self, periods: &[usize]) -> Result<Self> {
        if periods.is_empty() {
            return Err(AuditError::EmptyPeriods);
        }
        for &t in periods {
            self.check_period(t)?;
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .map(|row| periods.iter().map(|&t| row[t]).collect())
                .collect(),
            group_labels: self.group_labels.clone(),
            period_labels: periods
                .iter()
                .map(|&t| self.period_labels[t].clone())
                .collect(),
        })
    }

    /// Largest absolute index value.
    pub fn scale(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub(crate) fn check_period(&self, period: usize) -> Result<()> {
        if period >= self.n_periods() {
            return Err(AuditError::InvalidPeriod {
                index: period,
                len: self.n_periods(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_groups(&self, context: &'static str, found: usize) -> Result<()> {
        check_len(context, self.n_groups(), found)
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(AuditError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Normalized non-negative weights over the `m` groups.
///
/// Construction rescales the input to sum to one and keeps the original
/// sum, so callers can warn about shares that did not add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    label: String,
    weights: Vec<f64>,
    raw_sum: f64,
}

/// Raw sums further than this from one are reported as renormalized.
pub const RENORMALIZATION_TOLERANCE: f64 = 1e-6;

impl WeightVector {
    pub fn new(label: impl Into<String>, raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(AuditError::TooFew {
                what: "weights",
                required: 1,
                found: 0,
            });
        }
        for (i, &w) in raw.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(AuditError::InvalidWeight { group: i, value: w });
            }
        }
        let raw_sum: f64 = raw.iter().sum();
        if !(raw_sum > 0.0) {
            return Err(AuditError::DegenerateWeights(raw_sum));
        }
        let weights = raw.into_iter().map(|w| w / raw_sum).collect();
        Ok(Self {
            label: label.into(),
            weights,
            raw_sum,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the weights as supplied, before normalization.
    pub fn raw_sum(&self) -> f64 {
        self.raw_sum
    }

    pub fn was_renormalized(&self) -> bool {
        (self.raw_sum - 1.0).abs() > RENORMALIZATION_TOLERANCE
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The index `p_tᵀw` for one period.
pub fn weighted_index(prices: &PriceSeries, weights: &WeightVector, period: usize) -> Result<f64> {
    prices.check_groups("weights", weights.len())?;
    let column = prices.column(period)?;
    Ok(dot(&column, weights.as_slice()))
}

/// Index difference `pᵀ(ŵ − w*)` for an arbitrary price vector.
pub fn source_effect_at(
    prices: &[f64],
    survey: &WeightVector,
    proxy: &WeightVector,
) -> Result<f64> {
    check_len("survey weights", prices.len(), survey.len())?;
    check_len("proxy weights", prices.len(), proxy.len())?;
    Ok(prices
        .iter()
        .zip(survey.as_slice().iter().zip(proxy.as_slice()))
        .map(|(p, (s, q))| p * (s - q))
        .sum())
}

/// Source effect `Δ_t = p_tᵀ(ŵ − w*)` of replacing survey weights by proxy
/// weights in period `t`.
pub fn source_effect(
    prices: &PriceSeries,
    survey: &WeightVector,
    proxy: &WeightVector,
    period: usize,
) -> Result<f64> {
    prices.check_groups("survey weights", survey.len())?;
    source_effect_at(&prices.column(period)?, survey, proxy)
}

/// Source effect on the mean price vector over `periods`.
pub fn mean_source_effect(
    prices: &PriceSeries,
    survey: &WeightVector,
    proxy: &WeightVector,
    periods: &[usize],
) -> Result<f64> {
    prices.check_groups("survey weights", survey.len())?;
    source_effect_at(&prices.mean_column(periods)?, survey, proxy)
}

/// Relative weight differences `b_i = ŵ_i / w*_i − 1`.
pub fn relative_weight_diff(survey: &WeightVector, proxy: &WeightVector) -> Result<Vec<f64>> {
    check_len("survey weights", proxy.len(), survey.len())?;
    survey
        .as_slice()
        .iter()
        .zip(proxy.as_slice())
        .enumerate()
        .map(|(i, (&s, &q))| {
            if q == 0.0 {
                Err(AuditError::ZeroProxyWeight { group: i })
            } else {
                Ok(s / q - 1.0)
            }
        })
        .collect()
}

/// Covariance of `x` and `y` under the probability mass function `w`.
pub fn weighted_covariance(x: &[f64], y: &[f64], weights: &WeightVector) -> Result<f64> {
    let w = weights.as_slice();
    check_len("covariance x", w.len(), x.len())?;
    check_len("covariance y", w.len(), y.len())?;
    let mean_x = dot(w, x);
    let mean_y = dot(w, y);
    Ok(w.iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (xi, yi))| wi * (xi - mean_x) * (yi - mean_y))
        .sum())
}

/// `p_it = p̄_i + γ_i δ_t + e_it` with centered time `δ_t` and per-group
/// least-squares trends `γ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDecomposition {
    pub mean_prices: Vec<f64>,
    pub trends: Vec<f64>,
    pub time_centers: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
}

impl TrendDecomposition {
    pub fn n_groups(&self) -> usize {
        self.mean_prices.len()
    }

    pub fn n_periods(&self) -> usize {
        self.time_centers.len()
    }

    /// `p̄_i + γ_i δ_t + e_it`.
    pub fn recompose(&self, group: usize, period: usize) -> f64 {
        self.mean_prices[group]
            + self.trends[group] * self.time_centers[period]
            + self.residuals[group][period]
    }
}

/// Centered time index `δ_t = t − (T+1)/2` for `t = 1..T`.
pub fn time_centers(periods: usize) -> Vec<f64> {
    let mid = (periods as f64 + 1.0) / 2.0;
    (1..=periods).map(|t| t as f64 - mid).collect()
}

pub fn trend_decomposition(prices: &PriceSeries) -> Result<TrendDecomposition> {
    let n = prices.n_periods();
    if n < 2 {
        return Err(AuditError::TooFew {
            what: "periods for a trend",
            required: 2,
            found: n,
        });
    }
    let delta = time_centers(n);
    let delta_sq: f64 = delta.iter().map(|d| d * d).sum();
    let mut mean_prices = Vec::with_capacity(prices.n_groups());
    let mut trends = Vec::with_capacity(prices.n_groups());
    let mut residuals = Vec::with_capacity(prices.n_groups());
    for i in 0..prices.n_groups() {
        let row = prices.row(i);
        let mean = row.iter().sum::<f64>() / n as f64;
        let trend = dot(&delta, row) / delta_sq;
        residuals.push(
            row.iter()
                .zip(&delta)
                .map(|(p, d)| p - mean - trend * d)
                .collect(),
        );
        mean_prices.push(mean);
        trends.push(trend);
    }
    Ok(TrendDecomposition {
        mean_prices,
        trends,
        time_centers: delta,
        residuals,
    })
}

/// Weighted mean level, trend and residual series of an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAggregates {
    pub mean_index: f64,
    pub trend: f64,
    pub residuals: Vec<f64>,
}

pub fn weight_aggregates(
    decomp: &TrendDecomposition,
    weights: &WeightVector,
) -> Result<WeightAggregates> {
    check_len("weights", decomp.n_groups(), weights.len())?;
    let w = weights.as_slice();
    let residuals = (0..decomp.n_periods())
        .map(|t| {
            w.iter()
                .zip(&decomp.residuals)
                .map(|(wi, row)| wi * row[t])
                .sum()
        })
        .collect();
    Ok(WeightAggregates {
        mean_index: dot(w, &decomp.mean_prices),
        trend: dot(w, &decomp.trends),
        residuals,
    })
}
