use std::collections::BTreeMap;

use proxyaudit::oracle::{orthogonal_direction, trend_panel};
use proxyaudit::{
    b_test, cross_group_battery, slope_loadings, source_effect, z_test, AuditError, BatteryPlan,
    PriceSeries, TestKind, WeightEstimate, WeightVector,
};

const PROXY: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

fn share_cov(sd: f64) -> Vec<Vec<f64>> {
    let m = 4;
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| sd * sd * (if i == j { 1.0 } else { 0.0 } - 1.0 / m as f64))
                .collect()
        })
        .collect()
}

fn survey(point: Vec<f64>, sd: f64) -> WeightEstimate {
    WeightEstimate::new(WeightVector::new("s", point).unwrap(), share_cov(sd), 1000).unwrap()
}

#[test]
fn level_blind_bias_is_caught_only_by_the_slope_test() {
    let prices = PriceSeries::from_rows(trend_panel()).unwrap();
    let p_bar = prices.mean_column(&prices.all_periods()).unwrap();
    let proxy = WeightVector::new("p", PROXY.to_vec()).unwrap();
    let d = slope_loadings(&prices, &proxy).unwrap();
    // A weight shift that leaves the mean index unchanged but tilts it
    // toward the fast-rising groups.
    let h = orthogonal_direction(&d, &[vec![1.0; 4], p_bar.clone()]).unwrap();
    let point: Vec<f64> = PROXY.iter().zip(&h).map(|(w, x)| w + 0.02 * x).collect();
    let est = survey(point, 0.002);

    let z = z_test(&prices, &est, &proxy, &prices.all_periods()).unwrap();
    assert!(z.effect.abs() < 1e-12, "{}", z.effect);
    assert!(z.p_value > 0.99);
    let b = b_test(&prices, &est, &proxy).unwrap();
    assert!(b.p_value < 0.001, "{b:?}");
    assert_eq!(b.kind, TestKind::B);
    assert!((b.slope().unwrap() - 1.0 - 0.02 * dot(&d, &h)).abs() < 1e-12);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn pooled_effect_is_the_mean_of_monthly_effects() {
    let prices = PriceSeries::from_rows(trend_panel()).unwrap();
    let proxy = WeightVector::new("p", PROXY.to_vec()).unwrap();
    let est = survey(vec![0.12, 0.19, 0.29, 0.40], 0.01);
    let all = prices.all_periods();
    let pooled = z_test(&prices, &est, &proxy, &all).unwrap();
    let monthly: f64 = all
        .iter()
        .map(|&t| source_effect(&prices, est.point(), &proxy, t).unwrap())
        .sum::<f64>()
        / all.len() as f64;
    assert!((pooled.effect - monthly).abs() < 1e-12);
    assert_eq!(pooled.labels.n_periods, 36);
    for &t in &all {
        let single = z_test(&prices, &est, &proxy, &[t]).unwrap();
        assert_eq!(single.labels.n_periods, 1);
        assert_eq!(single.labels.first_period, single.labels.last_period);
    }
}

#[test]
fn battery_is_sorted_and_labeled() {
    let prices = PriceSeries::from_rows(trend_panel()).unwrap();
    let mut surveys = BTreeMap::new();
    surveys.insert(
        "g2".to_string(),
        survey(vec![0.11, 0.2, 0.3, 0.39], 0.01).with_label("g2"),
    );
    surveys.insert(
        "g1".to_string(),
        survey(PROXY.to_vec(), 0.01).with_label("g1"),
    );
    let mut proxies = BTreeMap::new();
    proxies.insert(
        "x".to_string(),
        WeightVector::new("x", PROXY.to_vec()).unwrap(),
    );
    let pairs = vec![
        ("g2".to_string(), "x".to_string()),
        ("g1".to_string(), "x".to_string()),
    ];
    let plan = BatteryPlan::full_panel(pairs, 36).with_monthly_z(36);
    let results = cross_group_battery(&prices, &surveys, &proxies, &plan).unwrap();
    assert_eq!(results.len(), 2 * (1 + 36 + 1));
    assert!(results[..38].iter().all(|r| r.labels.survey_group == "g1"));
    assert!(results[38..].iter().all(|r| r.labels.survey_group == "g2"));
    // Identical weights: every statistic is exactly zero.
    assert!(results[..38]
        .iter()
        .all(|r| r.statistic == 0.0 && r.p_value == 1.0));
    assert!(results[38..].iter().any(|r| r.statistic != 0.0));

    let bad = BatteryPlan::full_panel(vec![("g3".into(), "x".into())], 36);
    assert!(matches!(
        cross_group_battery(&prices, &surveys, &proxies, &bad),
        Err(AuditError::UnknownLabel(_))
    ));
    let short = BatteryPlan {
        pairs: vec![("g1".into(), "x".into())],
        z_windows: vec![],
        b_windows: vec![vec![0, 1]],
    };
    assert!(cross_group_battery(&prices, &surveys, &proxies, &short).is_err());
}

#[test]
fn mismatched_inputs_are_errors() {
    let prices = PriceSeries::from_rows(trend_panel()).unwrap();
    let proxy = WeightVector::new("p", vec![0.5, 0.5]).unwrap();
    let est = survey(PROXY.to_vec(), 0.01);
    assert!(z_test(&prices, &est, &proxy, &[0]).is_err());
    assert!(b_test(&prices, &est, &proxy).is_err());
    let good = WeightVector::new("p", PROXY.to_vec()).unwrap();
    assert!(z_test(&prices, &est, &good, &[]).is_err());
    assert!(z_test(&prices, &est, &good, &[99]).is_err());
    let zero = WeightEstimate::new(good.clone(), vec![vec![0.0; 4]; 4], 10).unwrap();
    assert!(matches!(
        z_test(&prices, &zero, &good, &[0]),
        Err(AuditError::DegenerateTest { .. })
    ));
}
