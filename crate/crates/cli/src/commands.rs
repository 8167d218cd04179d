use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use proxyaudit::oracle::{run_check, verification_suite, CheckReport};
use proxyaudit::rng::mix_seed;
use proxyaudit::{
    break_even_for_coverage, cross_group_battery, default_variance_of_variance, estimate_coverage,
    estimate_unbiased_coverage, index_variance, mse_estimate, simulate_households, weighted_index,
    z_test, AuditError, BatteryPlan, EvalScheme, PriceSeries, TestResult, WeightEstimate,
    WeightVector,
};

use crate::config::{
    BtestArgs, Command, CoverageArgs, DataArgs, MseArgs, PeriodRange, ReportArgs, SimulateArgs,
    VerifyArgs, ZtestArgs,
};
use crate::error::{CliError, Column, DataError, Location};
use crate::input::{read_estimate, read_micro, read_prices, read_weight_table};
use crate::report::{
    fixed, p_value, CoveragePeriod, CoverageSummary, MsePeriod, MseSummary, ReportDocument,
    ReportItem, SixNumber, Table, Warning, SCHEMA_VERSION,
};

/// What a command produced.
pub enum Output {
    Report(ReportDocument),
    /// Raw CSV, written as is.
    Csv(String),
}

pub struct Outcome {
    pub output: Output,
    /// Set by `verify` when a check misses its pass rule.
    pub verification_failed: bool,
}

impl Outcome {
    fn report(doc: ReportDocument) -> Self {
        Self {
            output: Output::Report(doc),
            verification_failed: false,
        }
    }
}

pub fn run_command(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Ztest(a) => ztest(a).map(Outcome::report),
        Command::Btest(a) => btest(a).map(Outcome::report),
        Command::Coverage(a) => coverage(a).map(Outcome::report),
        Command::Mse(a) => mse(a).map(Outcome::report),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a).map(Outcome::report),
    }
}

/// Everything the comparison commands share.
struct Inputs {
    prices: PriceSeries,
    /// Selected period indices.
    periods: Vec<usize>,
    survey: BTreeMap<String, WeightEstimate>,
    proxies: BTreeMap<String, WeightVector>,
    pairs: Vec<(String, String)>,
    warnings: Vec<Warning>,
    config: BTreeMap<String, String>,
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

fn select_periods(
    prices: &PriceSeries,
    range: Option<&PeriodRange>,
) -> Result<Vec<usize>, CliError> {
    let Some(range) = range else {
        return Ok(prices.all_periods());
    };
    let find = |label: &str| {
        prices
            .period_labels()
            .iter()
            .position(|p| p == label)
            .ok_or_else(|| CliError::Usage(format!("unknown period {label:?} in --periods")))
    };
    let (a, b) = (find(&range.first)?, find(&range.last)?);
    if a > b {
        return Err(CliError::Usage(format!(
            "--periods {}:{} runs backwards",
            range.first, range.last
        )));
    }
    Ok((a..=b).collect())
}

fn load(args: &DataArgs) -> Result<Inputs, CliError> {
    let mut warnings = Vec::new();
    let prices = read_prices(&args.prices)?;
    let groups = prices.group_labels().to_vec();
    let proxies = read_weight_table(&args.weights)?.align(&groups, &mut warnings)?;
    let mut config = BTreeMap::new();
    config.insert("prices".to_string(), path_text(&args.prices));
    config.insert("weights".to_string(), path_text(&args.weights));
    let survey = match (&args.micro, &args.estimate) {
        (Some(micro), _) => {
            config.insert("micro".to_string(), path_text(micro));
            read_micro(micro, &groups, &mut warnings)?
        }
        (None, Some(est)) => {
            config.insert("estimate".to_string(), path_text(est));
            read_estimate(est, &groups, &mut warnings)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --micro or --estimate is required".into(),
            ))
        }
    };
    let pairs: Vec<(String, String)> = if args.pairs.is_empty() {
        survey
            .keys()
            .flat_map(|g| proxies.keys().map(move |h| (g.clone(), h.clone())))
            .collect()
    } else {
        for p in &args.pairs {
            if !survey.contains_key(&p.survey) {
                return Err(DataError::new(
                    "unknown_label",
                    format!(
                        "survey group {} not found; available: {}",
                        p.survey,
                        join_keys(&survey)
                    ),
                )
                .into());
            }
            if !proxies.contains_key(&p.proxy) {
                return Err(DataError::new(
                    "unknown_label",
                    format!(
                        "proxy source {} not found; available: {}",
                        p.proxy,
                        join_keys(&proxies)
                    ),
                )
                .into());
            }
        }
        args.pairs
            .iter()
            .map(|p| (p.survey.clone(), p.proxy.clone()))
            .collect()
    };
    let pair_text: Vec<String> = pairs.iter().map(|(g, h)| format!("{g}:{h}")).collect();
    config.insert("pairs".to_string(), pair_text.join(","));
    let periods = select_periods(&prices, args.periods.as_ref())?;
    let labels = prices.period_labels();
    config.insert(
        "periods".to_string(),
        format!(
            "{}:{}",
            labels[periods[0]],
            labels[*periods.last().expect("non-empty selection")]
        ),
    );
    Ok(Inputs {
        prices,
        periods,
        survey,
        proxies,
        pairs,
        warnings,
        config,
    })
}

fn join_keys<V>(map: &BTreeMap<String, V>) -> String {
    map.keys().cloned().collect::<Vec<_>>().join(", ")
}

fn pair_label(g: &str, h: &str) -> String {
    format!("({g},{h})")
}

fn ztest(args: &ZtestArgs) -> Result<ReportDocument, CliError> {
    let inputs = load(&args.data)?;
    let plan = BatteryPlan {
        pairs: inputs.pairs.clone(),
        z_windows: vec![inputs.periods.clone()],
        b_windows: Vec::new(),
    };
    let mut results = cross_group_battery(&inputs.prices, &inputs.survey, &inputs.proxies, &plan)?;
    let mut config = inputs.config.clone();
    config.insert("monthly".to_string(), args.monthly.to_string());
    let mut doc = ReportDocument::new("ztest", config);
    doc.metadata.warnings = inputs.warnings.clone();
    let columns = ["(g,g')", "periods", "effect", "Z", "p-value"];
    let mut main = Table::new("Z-tests of the mean source effect", &columns);
    for r in &results {
        main.push(z_row(
            r,
            format!("{}..{}", r.labels.first_period, r.labels.last_period),
        ));
    }
    doc.tables.push(main);
    if args.monthly {
        // A period where every group has the same index (a base period)
        // has no variance; it is skipped rather than failing the run.
        let mut monthly = Table::new("Z-tests per period", &columns);
        for (g, h) in &inputs.pairs {
            for &t in &inputs.periods {
                match z_test(&inputs.prices, &inputs.survey[g], &inputs.proxies[h], &[t]) {
                    Ok(mut r) => {
                        r.labels.survey_group = g.clone();
                        r.labels.proxy_group = h.clone();
                        monthly.push(z_row(&r, r.labels.first_period.clone()));
                        results.push(r);
                    }
                    Err(e @ AuditError::DegenerateTest { .. }) => {
                        doc.metadata.warnings.push(Warning::new(
                            "degenerate_period",
                            format!(
                                "pair {g}:{h}, period {}: {e}",
                                inputs.prices.period_labels()[t]
                            ),
                        ))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        doc.tables.push(monthly);
    }
    doc.results = results.into_iter().map(ReportItem::Test).collect();
    Ok(doc)
}

fn z_row(r: &TestResult, periods: String) -> Vec<String> {
    vec![
        pair_label(&r.labels.survey_group, &r.labels.proxy_group),
        periods,
        fixed(r.effect, 6),
        fixed(r.statistic, 5),
        p_value(r.p_value),
    ]
}

fn btest(args: &BtestArgs) -> Result<ReportDocument, CliError> {
    let inputs = load(&args.data)?;
    let plan = BatteryPlan {
        pairs: inputs.pairs.clone(),
        z_windows: Vec::new(),
        b_windows: vec![inputs.periods.clone()],
    };
    let results = cross_group_battery(&inputs.prices, &inputs.survey, &inputs.proxies, &plan)?;
    let mut doc = ReportDocument::new("btest", inputs.config);
    doc.metadata.warnings = inputs.warnings;
    let mut table = Table::new("Unity-slope B-tests", &["(g,g')", "fit", "B", "p-value"]);
    for r in &results {
        table.push(vec![
            pair_label(&r.labels.survey_group, &r.labels.proxy_group),
            fixed(r.slope().unwrap_or(f64::NAN), 4),
            fixed(r.statistic, 4),
            p_value(r.p_value),
        ]);
    }
    doc.tables.push(table);
    doc.results = results.into_iter().map(ReportItem::Test).collect();
    Ok(doc)
}

/// Per-period proxy index, survey index and survey-index variance.
struct PeriodValues {
    period: String,
    theta_star: f64,
    theta_audit: f64,
    variance: f64,
}

fn period_values(inputs: &Inputs, g: &str, h: &str) -> Result<Vec<PeriodValues>, CliError> {
    let est = &inputs.survey[g];
    let proxy = &inputs.proxies[h];
    inputs
        .periods
        .iter()
        .map(|&t| {
            Ok(PeriodValues {
                period: inputs.prices.period_labels()[t].clone(),
                theta_star: weighted_index(&inputs.prices, proxy, t)?,
                theta_audit: weighted_index(&inputs.prices, est.point(), t)?,
                variance: index_variance(&inputs.prices, est, t)?,
            })
        })
        .collect()
}

fn coverage(args: &CoverageArgs) -> Result<ReportDocument, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    match (args.omega, args.omega_se_mult) {
        (Some(w), _) if !(w > 0.0 && w.is_finite()) => {
            return Err(CliError::Usage(format!(
                "--omega must be positive, got {w}"
            )))
        }
        (_, Some(k)) if !(k > 0.0 && k.is_finite()) => {
            return Err(CliError::Usage(format!(
                "--omega-se-mult must be positive, got {k}"
            )))
        }
        _ => {}
    }
    if args.audit_households.is_some_and(|n| n < 2) {
        return Err(CliError::Usage(
            "--audit-households must be at least 2".into(),
        ));
    }
    let inputs = load(&args.data)?;
    let mut config = inputs.config.clone();
    config.insert("alpha".to_string(), args.alpha.to_string());
    match (args.omega, args.omega_se_mult) {
        (Some(w), _) => config.insert("omega".to_string(), w.to_string()),
        (None, Some(k)) => config.insert("omega_se_mult".to_string(), k.to_string()),
        (None, None) => None,
    };
    if let Some(n) = args.audit_households {
        config.insert("audit_households".to_string(), n.to_string());
    }
    let mut doc = ReportDocument::new("coverage", config);
    doc.metadata.warnings = inputs.warnings.clone();
    doc.metadata.warnings.push(Warning::new(
        "default_variance_of_variance",
        "the variance of each audit variance estimate is taken as 2v^2/(n-1), assuming normal household totals",
    ));
    let mut clipped = 0;
    let mut summary_table = Table::new(
        "Estimated evaluation coverage over periods",
        &["(g,g')", "statistic", "proxy weights", "survey-equivalent"],
    );
    let mut detail = Table::new(
        "Evaluation coverage per period",
        &[
            "(g,g')",
            "period",
            "proxy index",
            "survey index",
            "survey se",
            "c*",
            "c* 95% CI",
            "c_s",
            "c_s 95% CI",
            "break-even se",
        ],
    );
    for (g, h) in &inputs.pairs {
        let values = period_values(&inputs, g, h)?;
        let omega = match (args.omega, args.omega_se_mult) {
            (Some(w), _) => w,
            (None, Some(k)) => {
                let ses: Vec<f64> = values.iter().map(|v| v.variance.sqrt()).collect();
                k * SixNumber::of(&ses).expect("at least one period").median
            }
            (None, None) => unreachable!("clap requires one of --omega and --omega-se-mult"),
        };
        let scheme = EvalScheme::new(args.alpha, omega)
            .map_err(|e| DataError::new(e.code(), format!("pair {g}:{h}: {e}")))?;
        let n = args
            .audit_households
            .unwrap_or(inputs.survey[g].n_households());
        let label = pair_label(g, h);
        let mut proxy_values = Vec::with_capacity(values.len());
        let mut survey_values = Vec::with_capacity(values.len());
        for v in &values {
            let proxy = estimate_coverage(v.theta_star, v.theta_audit, v.variance, &scheme)?;
            let var_of_var = default_variance_of_variance(v.variance, n)?;
            let survey = estimate_unbiased_coverage(v.variance, var_of_var, &scheme)?;
            clipped += usize::from(proxy.clipped) + usize::from(survey.clipped);
            let (break_even_variance, break_even_at_maximum) =
                match break_even_for_coverage(proxy.value, &scheme) {
                    Ok(b) => (b.variance, b.at_maximum),
                    Err(_) => (f64::INFINITY, false),
                };
            proxy_values.push(proxy.value);
            survey_values.push(survey.value);
            detail.push(vec![
                label.clone(),
                v.period.clone(),
                fixed(v.theta_star, 4),
                fixed(v.theta_audit, 4),
                fixed(v.variance.sqrt(), 4),
                fixed(proxy.value, 3),
                format!("[{}, {}]", fixed(proxy.ci_low, 3), fixed(proxy.ci_high, 3)),
                fixed(survey.value, 3),
                format!(
                    "[{}, {}]",
                    fixed(survey.ci_low, 3),
                    fixed(survey.ci_high, 3)
                ),
                if break_even_variance.is_finite() {
                    fixed(break_even_variance.sqrt(), 4)
                } else {
                    "none".to_string()
                },
            ]);
            doc.results.push(ReportItem::CoveragePeriod(CoveragePeriod {
                survey_group: g.clone(),
                proxy_group: h.clone(),
                period: v.period.clone(),
                theta_star: v.theta_star,
                theta_audit: v.theta_audit,
                audit_variance: v.variance,
                omega,
                proxy,
                survey,
                break_even_variance: break_even_variance
                    .is_finite()
                    .then_some(break_even_variance),
                break_even_at_maximum,
            }));
        }
        let proxy_summary = SixNumber::of(&proxy_values).expect("at least one period");
        let survey_summary = SixNumber::of(&survey_values).expect("at least one period");
        for ((name, a), (_, b)) in proxy_summary.rows().into_iter().zip(survey_summary.rows()) {
            summary_table.push(vec![
                label.clone(),
                name.to_string(),
                fixed(a, 3),
                fixed(b, 3),
            ]);
        }
        doc.results
            .push(ReportItem::CoverageSummary(CoverageSummary {
                survey_group: g.clone(),
                proxy_group: h.clone(),
                n_periods: values.len(),
                alpha: args.alpha,
                omega,
                proxy: proxy_summary,
                survey: survey_summary,
            }));
    }
    if clipped > 0 {
        doc.metadata.warnings.push(Warning::new(
            "ci_clipped",
            format!("{clipped} coverage intervals were clipped to [0, 1]"),
        ));
    }
    doc.tables.push(summary_table);
    doc.tables.push(detail);
    Ok(doc)
}

fn mse(args: &MseArgs) -> Result<ReportDocument, CliError> {
    let inputs = load(&args.data)?;
    let mut doc = ReportDocument::new("mse", inputs.config.clone());
    doc.metadata.warnings = inputs.warnings.clone();
    let mut table = Table::new(
        "MSE estimates of the proxy index",
        &[
            "(g,g')",
            "period",
            "proxy index",
            "survey index",
            "survey variance",
            "mse",
        ],
    );
    let mut summary = Table::new(
        "Negative MSE estimates",
        &["(g,g')", "periods", "negative", "mean mse"],
    );
    let mut negatives_total = 0;
    for (g, h) in &inputs.pairs {
        let values = period_values(&inputs, g, h)?;
        let label = pair_label(g, h);
        let mut negative = 0;
        let mut sum = 0.0;
        for v in &values {
            let m = mse_estimate(v.theta_star, v.theta_audit, v.variance);
            negative += usize::from(m.negative);
            sum += m.value;
            table.push(vec![
                label.clone(),
                v.period.clone(),
                fixed(v.theta_star, 4),
                fixed(v.theta_audit, 4),
                format!("{:.3e}", v.variance),
                format!("{:.3e}", m.value),
            ]);
            doc.results.push(ReportItem::MsePeriod(MsePeriod {
                survey_group: g.clone(),
                proxy_group: h.clone(),
                period: v.period.clone(),
                theta_star: v.theta_star,
                theta_audit: v.theta_audit,
                audit_variance: v.variance,
                mse: m.value,
                negative: m.negative,
            }));
        }
        let mean = sum / values.len() as f64;
        summary.push(vec![
            label,
            values.len().to_string(),
            negative.to_string(),
            format!("{mean:.3e}"),
        ]);
        doc.results.push(ReportItem::MseSummary(MseSummary {
            survey_group: g.clone(),
            proxy_group: h.clone(),
            n_periods: values.len(),
            negative_periods: negative,
            mean_mse: mean,
        }));
        negatives_total += negative;
    }
    if negatives_total > 0 {
        doc.metadata.warnings.push(Warning::new(
            "negative_mse",
            format!("{negatives_total} MSE estimates are negative: the audit variance exceeds the squared difference"),
        ));
    }
    doc.tables.push(summary);
    doc.tables.push(table);
    Ok(doc)
}

fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    if args.households == 0 {
        return Err(CliError::Usage("--households must be at least 1".into()));
    }
    if !(args.dispersion > 0.0 && args.dispersion.is_finite()) {
        return Err(CliError::Usage(format!(
            "--dispersion must be positive, got {}",
            args.dispersion
        )));
    }
    let table = read_weight_table(&args.weights)?;
    let mut warnings = Vec::new();
    let weights = table.align(&table.groups, &mut warnings)?;
    if let Some(source) = &args.source {
        if !weights.contains_key(source) {
            return Err(DataError::new(
                "unknown_label",
                format!(
                    "source {source} not found; available: {}",
                    join_keys(&weights)
                ),
            )
            .at(Location {
                file: path_text(&args.weights),
                line: None,
                column: None,
            })
            .into());
        }
    }
    let mut out = String::from("household_id,group,expenditure,stratum\n");
    // Each stratum's stream depends only on its position among all sources,
    // so selecting one source reproduces its rows from the full run.
    for (k, (source, w)) in weights.iter().enumerate() {
        if args.source.as_ref().is_some_and(|s| s != source) {
            continue;
        }
        let households = simulate_households(
            w,
            args.households,
            args.dispersion,
            mix_seed(args.seed, k as u64),
        )?;
        for h in households {
            for (group, x) in table.groups.iter().zip(&h.expenditures) {
                writeln!(out, "{source}-{},{group},{x},{source}", h.household_id)
                    .expect("writing to a String");
            }
        }
    }
    Ok(Outcome {
        output: Output::Csv(out),
        verification_failed: false,
    })
}

fn describe(check: &CheckReport) -> String {
    let mut parts = Vec::new();
    if let Some(first) = check.outcomes.first() {
        let o = &first.outcome;
        let z = o.z_score.map_or("n/a".to_string(), |z| fixed(z, 2));
        parts.push(format!(
            "{} {:.5} vs {:.5} (z {z})",
            first.label, o.point, o.target
        ));
    }
    for (name, value) in &check.extras {
        parts.push(format!("{name} {value:.4}"));
    }
    parts.join("; ")
}

fn verify(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let checks = verification_suite(args.seed)?;
    let mut config = BTreeMap::new();
    config.insert("seed".to_string(), args.seed.to_string());
    config.insert("checks".to_string(), checks.len().to_string());
    let mut doc = ReportDocument::new("verify", config);
    let mut table = Table::new(
        "Monte Carlo verification",
        &["check", "scenario", "replicates", "result", "summary"],
    );
    let mut failed = 0;
    for check in &checks {
        let report = run_check(check)?;
        failed += usize::from(!report.passed);
        table.push(vec![
            report.name.clone(),
            report.scenario.clone(),
            report.replicates.to_string(),
            if report.passed { "pass" } else { "FAIL" }.to_string(),
            describe(&report),
        ]);
        doc.results.push(ReportItem::OracleCheck(report));
    }
    if failed > 0 {
        doc.metadata.warnings.push(Warning::new(
            "verification_failed",
            format!("{failed} of {} checks failed", checks.len()),
        ));
    }
    doc.tables.push(table);
    Ok(Outcome {
        output: Output::Report(doc),
        verification_failed: failed > 0,
    })
}

fn report(args: &ReportArgs) -> Result<ReportDocument, CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let location = |line: usize, column: usize| Location {
        file: path_text(&args.input),
        line: Some(line as u64),
        column: Some(Column {
            index: column,
            name: "json".to_string(),
        }),
    };
    let doc = ReportDocument::from_machine(&text).map_err(|e| {
        DataError::new("invalid_report", format!("not a proxyaudit report: {e}"))
            .at(location(e.line(), e.column()))
    })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(DataError::new(
            "unsupported_schema_version",
            format!(
                "report schema {} is not supported (expected {SCHEMA_VERSION})",
                doc.schema_version
            ),
        )
        .into());
    }
    Ok(doc)
}
