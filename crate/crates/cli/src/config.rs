use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default directory for reports.
pub const OUT_DIR_ENV: &str = "PROXYAUDIT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "proxyaudit",
    version,
    about = "Audit proxy-weight price indices against survey audit samples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    /// Output file. Defaults to `$PROXYAUDIT_OUT_DIR/<command>.<ext>` when
    /// that variable is set, standard output otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for Monte Carlo work. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Stable-key JSON.
    Machine,
    /// Aligned plain text.
    Table,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Machine => "json",
            Format::Table => "txt",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Z-tests of the expected source effect.
    Ztest(ZtestArgs),
    /// Unity-slope B-tests.
    Btest(BtestArgs),
    /// Per-period evaluation coverage of the proxy index.
    Coverage(CoverageArgs),
    /// Per-period MSE estimates of the proxy index.
    Mse(MseArgs),
    /// Generate synthetic household micro-data.
    Simulate(SimulateArgs),
    /// Run the Monte Carlo verification suite.
    Verify(VerifyArgs),
    /// Re-render a machine report.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ztest(_) => "ztest",
            Command::Btest(_) => "btest",
            Command::Coverage(_) => "coverage",
            Command::Mse(_) => "mse",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
            Command::Report(_) => "report",
        }
    }
}

/// `g:g′`, a survey group and a proxy weight source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub survey: String,
    pub proxy: String,
}

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((g, h)) if !g.is_empty() && !h.is_empty() => Ok(Pair {
                survey: g.to_string(),
                proxy: h.to_string(),
            }),
            _ => Err(format!("expected SURVEY:PROXY, got {s:?}")),
        }
    }
}

/// An inclusive range of period labels, `first:last`, or a single label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodRange {
    pub first: String,
    pub last: String,
}

impl FromStr for PeriodRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').unwrap_or((s, s));
        if a.is_empty() || b.is_empty() {
            return Err(format!("expected FIRST:LAST, got {s:?}"));
        }
        Ok(PeriodRange {
            first: a.to_string(),
            last: b.to_string(),
        })
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Price indices, columns period,group,index.
    #[arg(long)]
    pub prices: PathBuf,

    /// Proxy weights, columns source,group,weight.
    #[arg(long)]
    pub weights: PathBuf,

    /// Household micro-data, columns household_id,group,expenditure[,stratum].
    #[arg(
        long,
        conflicts_with = "estimate",
        required_unless_present = "estimate"
    )]
    pub micro: Option<PathBuf>,

    /// Precomputed survey weights, columns source,row_group,col_group,value.
    #[arg(long)]
    pub estimate: Option<PathBuf>,

    /// Survey group and proxy source to compare; repeatable. Defaults to
    /// every combination.
    #[arg(long = "pair", value_name = "G:G'")]
    pub pairs: Vec<Pair>,

    /// Restrict to an inclusive period range.
    #[arg(long, value_name = "FIRST:LAST")]
    pub periods: Option<PeriodRange>,
}

#[derive(Debug, Args)]
pub struct ZtestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Also test every period on its own.
    #[arg(long)]
    pub monthly: bool,
}

#[derive(Debug, Args)]
pub struct BtestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Nominal level of the evaluation interval.
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,

    /// Half-width of the evaluation interval in index points.
    #[arg(
        long,
        conflicts_with = "omega_se_mult",
        required_unless_present = "omega_se_mult"
    )]
    pub omega: Option<f64>,

    /// Half-width as a multiple of the median audit-index standard error.
    #[arg(long)]
    pub omega_se_mult: Option<f64>,

    /// Audit households behind each estimate, for the variance of the
    /// variance estimate. Defaults to the survey's own count.
    #[arg(long)]
    pub audit_households: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Population weights, columns source,group,weight. One stratum is
    /// generated per source.
    #[arg(long)]
    pub weights: PathBuf,

    /// Only generate this source.
    #[arg(long)]
    pub source: Option<String>,

    /// Households per stratum.
    #[arg(long, default_value_t = 1000)]
    pub households: usize,

    /// Log-scale spread of household totals and allocations.
    #[arg(long, default_value_t = 0.5)]
    pub dispersion: f64,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A machine report written by an earlier run.
    pub input: PathBuf,
}
