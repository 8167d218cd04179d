use proptest::prelude::*;
use proxyaudit::{
    b_test, coverage_biased_noisy, coverage_of_constant, estimate_coverage, index_variance,
    relative_weight_diff, source_effect, trend_decomposition, unity_slope_fit, weight_aggregates,
    weighted_covariance, weighted_index, z_test, EvalScheme, PriceSeries, WeightEstimate,
    WeightVector,
};

fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn panel(m: usize, t: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(80.0f64..120.0, t), m)
}

/// PSD covariance with zero row sums: average of outer products of
/// centered vectors.
fn share_covariance(m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-0.01f64..0.01, m), m + 2).prop_map(move |zs| {
        let mut cov = vec![vec![0.0; m]; m];
        for z in &zs {
            let mean = z.iter().sum::<f64>() / m as f64;
            let c: Vec<f64> = z.iter().map(|x| x - mean).collect();
            for (row, ci) in cov.iter_mut().zip(&c) {
                for (v, cj) in row.iter_mut().zip(&c) {
                    *v += ci * cj / zs.len() as f64;
                }
            }
        }
        cov
    })
}

/// Prices, survey weights, proxy weights and a share covariance.
type Setup = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn setup(m: usize, t: usize) -> impl Strategy<Value = Setup> {
    (panel(m, t), simplex(m), simplex(m), share_covariance(m))
}

fn max_abs(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
}

proptest! {
    #[test]
    fn source_effect_is_weighted_covariance((rows, w, wp, _) in (3usize..7).prop_flat_map(|m| setup(m, 4))) {
        let prices = PriceSeries::from_rows(rows.clone()).unwrap();
        let survey = WeightVector::new("s", w).unwrap();
        let proxy = WeightVector::new("p", wp).unwrap();
        let b = relative_weight_diff(&survey, &proxy).unwrap();
        let mean_b: f64 = b.iter().zip(proxy.as_slice()).map(|(x, y)| x * y).sum();
        prop_assert!(mean_b.abs() < 1e-12);
        for t in 0..4 {
            let delta = source_effect(&prices, &survey, &proxy, t).unwrap();
            let cov = weighted_covariance(&b, &prices.column(t).unwrap(), &proxy).unwrap();
            prop_assert!((delta - cov).abs() <= 1e-12 * max_abs(&rows));
        }
    }

    #[test]
    fn weighted_index_is_permutation_invariant(
        (rows, w, _, _) in (2usize..7).prop_flat_map(|m| setup(m, 3)),
        seed in any::<u64>(),
    ) {
        let m = rows.len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = proxyaudit::rng::splitmix64(s);
            perm.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let prices = PriceSeries::from_rows(rows.clone()).unwrap();
        let weights = WeightVector::new("w", w.clone()).unwrap();
        let permuted = PriceSeries::from_rows(perm.iter().map(|&i| rows[i].clone()).collect()).unwrap();
        let pw = WeightVector::new("w", perm.iter().map(|&i| w[i]).collect()).unwrap();
        for t in 0..3 {
            let a = weighted_index(&prices, &weights, t).unwrap();
            let b = weighted_index(&permuted, &pw, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn decomposition_invariants(rows in (2usize..6, 2usize..15).prop_flat_map(|(m, t)| panel(m, t))) {
        let prices = PriceSeries::from_rows(rows.clone()).unwrap();
        let d = trend_decomposition(&prices).unwrap();
        prop_assert_eq!(d.time_centers.iter().sum::<f64>(), 0.0);
        let scale = max_abs(&rows);
        for (i, row) in rows.iter().enumerate() {
            let e = &d.residuals[i];
            prop_assert!(e.iter().sum::<f64>().abs() <= 1e-9 * scale);
            let orth: f64 = e.iter().zip(&d.time_centers).map(|(x, y)| x * y).sum();
            prop_assert!(orth.abs() <= 1e-9 * scale);
            for (t, &p) in row.iter().enumerate() {
                prop_assert!((d.recompose(i, t) - p).abs() <= 1e-12 * p);
            }
        }
    }

    #[test]
    fn aggregates_recompose_the_index((rows, w, _, _) in (2usize..6).prop_flat_map(|m| setup(m, 6))) {
        let prices = PriceSeries::from_rows(rows).unwrap();
        let weights = WeightVector::new("w", w).unwrap();
        let d = trend_decomposition(&prices).unwrap();
        let agg = weight_aggregates(&d, &weights).unwrap();
        for t in 0..6 {
            let rebuilt = agg.mean_index + agg.trend * d.time_centers[t] + agg.residuals[t];
            let direct = weighted_index(&prices, &weights, t).unwrap();
            prop_assert!((rebuilt - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn slope_law_on_zero_residual_panels(
        levels in prop::collection::vec(90.0f64..110.0, 4),
        trends in prop::collection::vec(0.1f64..1.0, 4),
        w in simplex(4),
        wp in simplex(4),
        t in 3usize..40,
    ) {
        let centers = proxyaudit::index::time_centers(t);
        let rows: Vec<Vec<f64>> = levels
            .iter()
            .zip(&trends)
            .map(|(l, g)| centers.iter().map(|d| l + g * d).collect())
            .collect();
        let prices = PriceSeries::from_rows(rows).unwrap();
        let est = WeightEstimate::new(WeightVector::new("s", w.clone()).unwrap(), vec![vec![0.0; 4]; 4], 10).unwrap();
        let proxy = WeightVector::new("p", wp.clone()).unwrap();
        let fit = unity_slope_fit(&prices, &est, &proxy).unwrap();
        let law = w.iter().zip(&trends).map(|(a, b)| a * b).sum::<f64>()
            / proxy.as_slice().iter().zip(&trends).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((fit.beta_hat - law).abs() <= 1e-12 * law.abs());
        let self_fit: f64 = fit.loadings.iter().zip(proxy.as_slice()).map(|(d, x)| d * x).sum();
        prop_assert!((self_fit - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn b_test_ignores_constant_shifts(
        (rows, w, wp, cov) in setup(4, 8),
        shift in -50.0f64..50.0,
    ) {
        let prices = PriceSeries::from_rows(rows.clone()).unwrap();
        let shifted = PriceSeries::from_rows(
            rows.iter().map(|r| r.iter().map(|p| p + shift).collect()).collect(),
        ).unwrap();
        let est = WeightEstimate::new(WeightVector::new("s", w).unwrap(), cov, 100).unwrap();
        let proxy = WeightVector::new("p", wp).unwrap();
        match (b_test(&prices, &est, &proxy), b_test(&shifted, &est, &proxy)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.effect - b.effect).abs() <= 1e-9 * (1.0 + a.effect.abs()));
                prop_assert!((a.variance - b.variance).abs() <= 1e-9 * a.variance);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
        for t in 0..8 {
            let a = index_variance(&prices, &est, t).unwrap();
            let b = index_variance(&shifted, &est, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * max_abs(&rows).powi(2) * est.covariance()[0][0].abs().max(1e-12));
        }
    }

    #[test]
    fn test_results_are_consistent((rows, w, wp, cov) in setup(3, 6)) {
        let prices = PriceSeries::from_rows(rows).unwrap();
        let est = WeightEstimate::new(WeightVector::new("s", w).unwrap(), cov, 100).unwrap();
        let proxy = WeightVector::new("p", wp).unwrap();
        let all = prices.all_periods();
        let mut results = vec![z_test(&prices, &est, &proxy, &all)];
        for t in 0..6 {
            let single = z_test(&prices, &est, &proxy, &[t]);
            let direct = source_effect(&prices, est.point(), &proxy, t).unwrap();
            if let Ok(r) = &single {
                prop_assert!((r.effect - direct).abs() <= 1e-12 * 120.0);
            }
            results.push(single);
        }
        results.push(b_test(&prices, &est, &proxy));
        for r in results.into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert_eq!(r.statistic.signum(), r.effect.signum());
            prop_assert!((r.statistic - r.effect / r.variance.sqrt()).abs() <= 1e-12 * r.statistic.abs().max(1.0));
            // The reference CDF is only good to about 1e-11 in the body.
            let expected = 2.0 * (1.0 - statrs_cdf(r.statistic.abs()));
            prop_assert!((r.p_value - expected).abs() < 1e-9,"z {} p {} statrs {}", r.statistic, r.p_value, expected);
        }
    }

    #[test]
    fn plug_in_coverage_is_symmetric(diff in -0.3f64..0.3, v in 0.0f64..0.01) {
        let s = EvalScheme::new(0.95, 0.058).unwrap();
        let a = estimate_coverage(100.0 + diff, 100.0, v, &s).unwrap();
        let b = estimate_coverage(100.0 - diff, 100.0, v, &s).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert!((a.variance - b.variance).abs() < 1e-12);
        prop_assert!(a.ci_low >= 0.0 && a.ci_high <= 1.0);
        prop_assert!(a.value <= 0.95 + 1e-12);
    }

    #[test]
    fn kernel_specializes(b in -0.5f64..0.5, v in 0.0f64..0.01, omega in 0.01f64..0.2) {
        let s = EvalScheme::new(0.9, omega).unwrap();
        prop_assert_eq!(coverage_biased_noisy(b, 0.0, &s).unwrap(), coverage_of_constant(b, 0.0, &s));
        let c = coverage_biased_noisy(b, v, &s).unwrap();
        prop_assert!((0.0..=0.9 + 1e-12).contains(&c));
    }
}

fn statrs_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(x)
}
