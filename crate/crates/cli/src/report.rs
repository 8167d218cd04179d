//! Report document, its JSON form and the plain-text tables.

use std::collections::BTreeMap;

use proxyaudit::oracle::CheckReport;
use proxyaudit::{CoverageEstimate, TestResult};
use serde::{Deserialize, Serialize};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub results: Vec<ReportItem>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub tool_version: String,
    pub library_version: String,
    pub command: String,
    /// Echo of the options that determine the results.
    pub config: BTreeMap<String, String>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn renormalized(file: &str, source: &str, raw_sum: f64) -> Self {
        Self::new(
            "weights_renormalized",
            format!("{file}: weights for {source} summed to {raw_sum} and were rescaled to 1"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportItem {
    Test(TestResult),
    CoveragePeriod(CoveragePeriod),
    CoverageSummary(CoverageSummary),
    MsePeriod(MsePeriod),
    MseSummary(MseSummary),
    OracleCheck(CheckReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePeriod {
    pub survey_group: String,
    pub proxy_group: String,
    pub period: String,
    /// Proxy-weight index.
    pub theta_star: f64,
    /// Survey-weight index.
    pub theta_audit: f64,
    pub audit_variance: f64,
    pub omega: f64,
    /// Estimated coverage of the proxy index.
    pub proxy: CoverageEstimate,
    /// Estimated coverage of the survey index itself.
    pub survey: CoverageEstimate,
    /// Sampling variance at which an unbiased index matches the proxy's
    /// estimated coverage; absent when no finite variance does.
    pub break_even_variance: Option<f64>,
    pub break_even_at_maximum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub survey_group: String,
    pub proxy_group: String,
    pub n_periods: usize,
    pub alpha: f64,
    pub omega: f64,
    pub proxy: SixNumber,
    pub survey: SixNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsePeriod {
    pub survey_group: String,
    pub proxy_group: String,
    pub period: String,
    pub theta_star: f64,
    pub theta_audit: f64,
    pub audit_variance: f64,
    pub mse: f64,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSummary {
    pub survey_group: String,
    pub proxy_group: String,
    pub n_periods: usize,
    pub negative_periods: usize,
    pub mean_mse: f64,
}

/// Minimum, quartiles, median and mean, with sample quantiles
/// interpolated linearly between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SixNumber {
    pub minimum: f64,
    pub first_quartile: f64,
    pub median: f64,
    pub mean: f64,
    pub third_quartile: f64,
    pub maximum: f64,
}

impl SixNumber {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Some(Self {
            minimum: sorted[0],
            first_quartile: q(0.25),
            median: q(0.5),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            third_quartile: q(0.75),
            maximum: sorted[sorted.len() - 1],
        })
    }

    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("Minimum", self.minimum),
            ("1st quartile", self.first_quartile),
            ("Median", self.median),
            ("Mean", self.mean),
            ("3rd quartile", self.third_quartile),
            ("Maximum", self.maximum),
        ]
    }
}

/// A pre-formatted table for the text report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// First column left-aligned, the rest right-aligned.
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = String::new();
        out.push_str(&self.title);
        out.push('\n');
        out.push_str(&line(&self.columns));
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

impl ReportDocument {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            metadata: Metadata {
                tool: "proxyaudit".to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                library_version: proxyaudit::VERSION.to_string(),
                command: command.to_string(),
                config,
                warnings: Vec::new(),
            },
            results: Vec::new(),
            tables: Vec::new(),
        }
    }

    /// Pretty-printed JSON with a trailing newline. Keys follow struct
    /// order, maps are sorted, so equal documents give equal bytes.
    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are serializable");
        s.push('\n');
        s
    }

    pub fn from_machine(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_table(&self) -> String {
        let meta = &self.metadata;
        let mut out = format!(
            "proxyaudit {} {} (report schema {})\n",
            meta.command, meta.tool_version, self.schema_version
        );
        for (k, v) in &meta.config {
            out.push_str(&format!("  {k}: {v}\n"));
        }
        for w in &meta.warnings {
            out.push_str(&format!("warning[{}]: {}\n", w.code, w.message));
        }
        for table in &self.tables {
            out.push('\n');
            out.push_str(&table.render());
        }
        out
    }
}

pub fn fixed(value: f64, decimals: usize) -> String {
    format!("{value:.decimals$}")
}

/// p-values are always shown with three decimals.
pub fn p_value(p: f64) -> String {
    fixed(p, 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_number_matches_linear_interpolation() {
        let s = SixNumber::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.minimum, 1.0);
        assert_eq!(s.first_quartile, 1.75);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.third_quartile, 3.25);
        assert_eq!(s.maximum, 4.0);
        assert!(SixNumber::of(&[]).is_none());
        let one = SixNumber::of(&[0.7]).unwrap();
        assert_eq!(one.first_quartile, 0.7);
        assert_eq!(one.maximum, 0.7);
    }

    #[test]
    fn table_alignment() {
        let mut t = Table::new("T", &["group", "p-value"]);
        t.push(vec!["(4,4)".into(), p_value(0.96966)]);
        t.push(vec!["(4,10)".into(), p_value(0.0089961)]);
        let text = t.render();
        assert_eq!(
            text,
            "T\ngroup   p-value\n------  -------\n(4,4)     0.970\n(4,10)    0.009\n"
        );
    }

    #[test]
    fn empty_document_is_a_skeleton() {
        let doc = ReportDocument::new("verify", BTreeMap::new());
        let text = doc.to_machine();
        assert!(text.ends_with("}\n"));
        let back = ReportDocument::from_machine(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_machine(), text);
        assert!(doc.to_table().starts_with("proxyaudit verify"));
    }
}
