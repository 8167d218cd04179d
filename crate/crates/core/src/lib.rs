//! Auditing zero-variance "big data" estimates against survey audit samples.
//!
//! The crate covers the full chain for proxy-weight price indices:
//!
//! * [`index`]: weighted index arithmetic, source effects and the
//!   trend rewrite of a price panel;
//! * [`survey`]: share estimates and their covariance from household
//!   micro-data, plus a synthetic household generator;
//! * [`hypothesis`]: the Z-test for the expected source effect and the
//!   unity-slope B-test;
//! * [`coverage`]: evaluation coverage, its audit-sample estimators with
//!   delta-method variances, the MSE estimator and the break-even solver;
//! * [`oracle`]: Monte Carlo checks of every closed form.

// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

/// Version of this library, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod coverage;
pub mod error;
pub mod hypothesis;
pub mod index;
pub mod normal;
pub mod oracle;
pub mod rng;
pub mod roots;
pub mod survey;

pub use coverage::{
    break_even_for_coverage, break_even_variance, coverage_biased_noisy, coverage_of_constant,
    coverage_of_unbiased, default_variance_of_variance, estimate_coverage,
    estimate_unbiased_coverage, kappa_quantile, mse_estimate, BreakEven, CoverageEstimate,
    EvalScheme, MseEstimate,
};
pub use error::{AuditError, Result};
pub use hypothesis::{
    b_test, cross_group_battery, slope_loadings, unity_slope_fit, z_test, BatteryPlan, SlopeFit,
    TestKind, TestLabels, TestResult,
};
pub use index::{
    mean_source_effect, relative_weight_diff, source_effect, trend_decomposition,
    weight_aggregates, weighted_covariance, weighted_index, PriceSeries, TrendDecomposition,
    WeightAggregates, WeightVector,
};
pub use oracle::{
    delta_method_check, empirical_coverage, mse_unbiasedness, power_curve, run_check,
    test_calibration, verification_suite, CheckReport, SimulationOutcome, SimulationPlan,
};
pub use survey::{
    estimate_weights, index_variance, simulate_households, HouseholdRecord, WeightEstimate,
};
