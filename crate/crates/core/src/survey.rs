//! CPI weights and their sampling covariance from household micro-data.
//!
//! Shares are the ratio-of-totals estimator `ŵ_i = Σ_h x_hi / Σ_h s_h`.
//! The covariance is the with-replacement linearization of that ratio:
//!
//! ```text
//! z_h  = (x_h − ŵ s_h) / S̄
//! V̂(ŵ) = Σ_h (z_h − z̄)(z_h − z̄)ᵀ / (n (n − 1))
//! ```
//!
//! Because every `z_h` sums to zero across groups, so does every row of
//! `V̂(ŵ)`, and `pᵀ V̂ p` ignores constant shifts of `p`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::index::{check_len, PriceSeries, WeightVector};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub household_id: String,
    pub expenditures: Vec<f64>,
    pub stratum: Option<String>,
}

/// Estimated weights with their sampling covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate {
    point: WeightVector,
    covariance: Vec<Vec<f64>>,
    n_households: usize,
    dropped_households: usize,
}

impl WeightEstimate {
    /// Validates symmetry, positive semi-definiteness and zero row sums.
    pub fn new(
        point: WeightVector,
        covariance: Vec<Vec<f64>>,
        n_households: usize,
    ) -> Result<Self> {
        let m = point.len();
        check_len("covariance rows", m, covariance.len())?;
        for row in &covariance {
            check_len("covariance columns", m, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AuditError::InvalidCovariance("non-finite entry".into()));
            }
        }
        let trace: f64 = (0..m).map(|i| covariance[i][i]).sum();
        let max_abs = covariance
            .iter()
            .flatten()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..m {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs()
                    > 1e-12 * max_abs.max(f64::MIN_POSITIVE)
                {
                    return Err(AuditError::InvalidCovariance(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if max_abs > 0.0 {
            let row_tol = 1e-10 * trace.abs().max(max_abs);
            for (i, row) in covariance.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if s.abs() > row_tol {
                    return Err(AuditError::InvalidCovariance(format!(
                        "row {i} sums to {s}, shares must have zero-sum covariance rows"
                    )));
                }
            }
            let min_eig = min_eigenvalue(&covariance);
            if min_eig < -1e-10 * trace.abs().max(max_abs) {
                return Err(AuditError::InvalidCovariance(format!(
                    "not positive semi-definite, smallest eigenvalue {min_eig}"
                )));
            }
        }
        Ok(Self {
            point,
            covariance,
            n_households,
            dropped_households: 0,
        })
    }

    /// Relabels the point estimate, e.g. with the survey group it describes.
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.point = self.point.relabeled(label);
        self
    }

    pub fn point(&self) -> &WeightVector {
        &self.point
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    pub fn n_households(&self) -> usize {
        self.n_households
    }

    /// Households skipped because their total expenditure was zero.
    pub fn dropped_households(&self) -> usize {
        self.dropped_households
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    /// `vᵀ V̂ v`, clamped at zero when rounding pushes it slightly negative.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        quadratic_form(&self.covariance, v)
    }
}

fn min_eigenvalue(cov: &[Vec<f64>]) -> f64 {
    let m = cov.len();
    let mat = DMatrix::from_fn(m, m, |i, j| cov[i][j]);
    mat.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

pub(crate) fn quadratic_form(cov: &[Vec<f64>], v: &[f64]) -> Result<f64> {
    check_len("quadratic form", cov.len(), v.len())?;
    let mut value = 0.0;
    let mut scale = 0.0;
    for (i, row) in cov.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let term = v[i] * c * v[j];
            value += term;
            scale += term.abs();
        }
    }
    if value < 0.0 {
        if value < -1e-10 * scale {
            return Err(AuditError::NegativeVariance { value, scale });
        }
        return Ok(0.0);
    }
    Ok(value)
}

/// Ratio-of-totals shares and their linearized covariance.
pub fn estimate_weights(records: &[HouseholdRecord]) -> Result<WeightEstimate> {
    let m = records.first().map_or(0, |r| r.expenditures.len());
    let mut flat = Vec::with_capacity(records.len() * m);
    for r in records {
        if r.expenditures.len() != m {
            return Err(AuditError::RecordLength {
                household: r.household_id.clone(),
                expected: m,
                found: r.expenditures.len(),
            });
        }
        if let Some(&bad) = r
            .expenditures
            .iter()
            .find(|x| !(x.is_finite() && **x >= 0.0))
        {
            return Err(AuditError::InvalidExpenditure {
                household: r.household_id.clone(),
                value: bad,
            });
        }
        flat.extend_from_slice(&r.expenditures);
    }
    estimate_from_flat(&flat, m)
}

/// Same estimator over a row-major `n × m` expenditure block.
pub(crate) fn estimate_from_flat(flat: &[f64], m: usize) -> Result<WeightEstimate> {
    if m == 0 {
        return Err(AuditError::TooFew {
            what: "households",
            required: 2,
            found: 0,
        });
    }
    let mut kept: Vec<&[f64]> = Vec::with_capacity(flat.len() / m);
    let mut dropped = 0;
    for row in flat.chunks_exact(m) {
        if row.iter().sum::<f64>() > 0.0 {
            kept.push(row);
        } else {
            dropped += 1;
        }
    }
    let n = kept.len();
    if n < 2 {
        if n == 0 && dropped > 0 {
            return Err(AuditError::ZeroExpenditure);
        }
        return Err(AuditError::TooFew {
            what: "households with positive expenditure",
            required: 2,
            found: n,
        });
    }
    let mut totals = vec![0.0; m];
    let mut grand = 0.0;
    for row in &kept {
        for (acc, x) in totals.iter_mut().zip(row.iter()) {
            *acc += x;
        }
        grand += row.iter().sum::<f64>();
    }
    let shares: Vec<f64> = totals.iter().map(|t| t / grand).collect();
    let mean_total = grand / n as f64;

    let mut z = vec![0.0; n * m];
    let mut z_mean = vec![0.0; m];
    for (h, row) in kept.iter().enumerate() {
        let s_h: f64 = row.iter().sum();
        for i in 0..m {
            let v = (row[i] - shares[i] * s_h) / mean_total;
            z[h * m + i] = v;
            z_mean[i] += v;
        }
    }
    for v in &mut z_mean {
        *v /= n as f64;
    }
    let mut cov = vec![vec![0.0; m]; m];
    for h in 0..n {
        let zh = &z[h * m..(h + 1) * m];
        for i in 0..m {
            let di = zh[i] - z_mean[i];
            for j in 0..=i {
                cov[i][j] += di * (zh[j] - z_mean[j]);
            }
        }
    }
    let denom = (n * (n - 1)) as f64;
    for i in 0..m {
        for j in 0..=i {
            let v = cov[i][j] / denom;
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    let point = WeightVector::new("survey", shares)?;
    Ok(WeightEstimate {
        point,
        covariance: cov,
        n_households: n,
        dropped_households: dropped,
    })
}

/// Synthetic household micro-data with population shares `true_weights`.
///
/// Each household's total is log-normal with log-scale `dispersion` and
/// unit mean (times 1000 currency units); its allocation across groups is
/// Dirichlet with mean `true_weights` and concentration `1/dispersion²`.
/// Totals and allocations are independent, so expected totals per group
/// are exactly proportional to `true_weights`.
pub fn simulate_households(
    true_weights: &WeightVector,
    n: usize,
    dispersion: f64,
    seed: u64,
) -> Result<Vec<HouseholdRecord>> {
    let mut rng = seeded(seed);
    let flat = draw_expenditures(&mut rng, true_weights, n, dispersion)?;
    let m = true_weights.len();
    Ok(flat
        .chunks_exact(m)
        .enumerate()
        .map(|(h, row)| HouseholdRecord {
            household_id: format!("h{:06}", h + 1),
            expenditures: row.to_vec(),
            stratum: Some(true_weights.label().to_string()),
        })
        .collect())
}

pub(crate) struct HouseholdSampler {
    gammas: Vec<Option<Gamma<f64>>>,
    dispersion: f64,
}

impl HouseholdSampler {
    pub(crate) fn new(true_weights: &WeightVector, dispersion: f64) -> Result<Self> {
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(AuditError::OutOfRange {
                name: "dispersion",
                value: dispersion,
                expected: "positive and finite",
            });
        }
        let concentration = 1.0 / (dispersion * dispersion);
        let gammas = true_weights
            .as_slice()
            .iter()
            .map(|&w| {
                if w > 0.0 {
                    Gamma::new(concentration * w, 1.0).map(Some).map_err(|e| {
                        AuditError::InvalidDesign(format!("gamma shape {}: {e}", concentration * w))
                    })
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { gammas, dispersion })
    }

    pub(crate) fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let m = self.gammas.len();
        for row in out.chunks_exact_mut(m) {
            let z: f64 = StandardNormal.sample(rng);
            let total =
                1000.0 * (self.dispersion * z - 0.5 * self.dispersion * self.dispersion).exp();
            let mut sum = 0.0;
            for (slot, g) in row.iter_mut().zip(&self.gammas) {
                let v = g.as_ref().map_or(0.0, |g| g.sample(rng));
                *slot = v;
                sum += v;
            }
            if sum > 0.0 {
                for slot in row.iter_mut() {
                    *slot *= total / sum;
                }
            }
        }
    }
}

pub(crate) fn draw_expenditures<R: Rng + ?Sized>(
    rng: &mut R,
    true_weights: &WeightVector,
    n: usize,
    dispersion: f64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(AuditError::TooFew {
            what: "households",
            required: 1,
            found: 0,
        });
    }
    let sampler = HouseholdSampler::new(true_weights, dispersion)?;
    let mut flat = vec![0.0; n * true_weights.len()];
    sampler.fill(rng, &mut flat);
    Ok(flat)
}

/// Sampling variance `p_tᵀ V̂(ŵ) p_t` of the survey-weight index in period `t`.
pub fn index_variance(prices: &PriceSeries, est: &WeightEstimate, period: usize) -> Result<f64> {
    prices.check_groups("weight estimate", est.len())?;
    est.quadratic_form(&prices.column(period)?)
}
