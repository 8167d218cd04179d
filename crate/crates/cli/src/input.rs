//! CSV ingestion with line and column diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use proxyaudit::{
    estimate_weights, AuditError, HouseholdRecord, PriceSeries, WeightEstimate, WeightVector,
};

use crate::error::{CliError, Column, DataError, Location};
use crate::report::Warning;

/// Label used for households without a stratum.
pub const POOLED_STRATUM: &str = "all";

/// Reserved `row_group` carrying the household count in weight_estimate.csv.
pub const HOUSEHOLDS_ROW: &str = "n_households";

struct Row {
    line: u64,
    record: StringRecord,
}

/// A parsed CSV file with a validated header.
struct Sheet {
    file: String,
    columns: Vec<String>,
    rows: Vec<Row>,
}

impl Sheet {
    fn read(path: &Path, required: &[&str], optional: &[&str]) -> Result<Self, CliError> {
        let file = path.display().to_string();
        let mut reader = ReaderBuilder::new()
            .trim(Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => CliError::io(path, io),
                other => DataError::new("malformed_csv", format!("{other:?}")).into(),
            })?;
        let malformed = |e: csv::Error, file: &str| -> CliError {
            let line = e.position().map(|p| p.line());
            DataError::new("malformed_csv", e.to_string())
                .at(Location {
                    file: file.to_string(),
                    line,
                    column: None,
                })
                .into()
        };
        let header = reader.headers().map_err(|e| malformed(e, &file))?.clone();
        let columns: Vec<String> = header.iter().map(str::to_string).collect();
        let header_loc = |column: Option<Column>| Location {
            file: file.clone(),
            line: Some(1),
            column,
        };
        for (i, name) in columns.iter().enumerate() {
            if !required.contains(&name.as_str()) && !optional.contains(&name.as_str()) {
                return Err(DataError::new(
                    "unexpected_column",
                    format!("unexpected column {name:?}"),
                )
                .at(header_loc(Some(Column {
                    index: i + 1,
                    name: name.clone(),
                })))
                .into());
            }
            if columns[..i].contains(name) {
                return Err(DataError::new(
                    "duplicate_column",
                    format!("column {name:?} appears twice"),
                )
                .at(header_loc(Some(Column {
                    index: i + 1,
                    name: name.clone(),
                })))
                .into());
            }
        }
        for name in required {
            if !columns.iter().any(|c| c == name) {
                return Err(DataError::new(
                    "missing_column",
                    format!(
                        "missing required column {name:?}; expected {}",
                        required.join(",")
                    ),
                )
                .at(header_loc(None))
                .into());
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| malformed(e, &file))?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push(Row { line, record });
        }
        if rows.is_empty() {
            return Err(DataError::new("empty_file", "no data rows")
                .at(header_loc(None))
                .into());
        }
        Ok(Self {
            file,
            columns,
            rows,
        })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn location(&self, row: &Row, column: Option<&str>) -> Location {
        Location {
            file: self.file.clone(),
            line: Some(row.line),
            column: column.and_then(|c| {
                self.index(c).map(|i| Column {
                    index: i + 1,
                    name: c.to_string(),
                })
            }),
        }
    }

    fn error(
        &self,
        row: &Row,
        column: Option<&str>,
        code: &'static str,
        message: String,
    ) -> CliError {
        DataError::new(code, message)
            .at(self.location(row, column))
            .into()
    }

    /// Field text; empty for absent optional columns.
    fn text<'a>(&self, row: &'a Row, column: &str) -> &'a str {
        self.index(column)
            .and_then(|i| row.record.get(i))
            .unwrap_or("")
    }

    fn label(&self, row: &Row, column: &str) -> Result<String, CliError> {
        let s = self.text(row, column);
        if s.is_empty() {
            return Err(self.error(
                row,
                Some(column),
                "missing_value",
                format!("empty {column}"),
            ));
        }
        Ok(s.to_string())
    }

    fn number(&self, row: &Row, column: &str) -> Result<f64, CliError> {
        let s = self.text(row, column);
        s.parse::<f64>().map_err(|_| {
            self.error(
                row,
                Some(column),
                "invalid_number",
                format!("{column} {s:?} is not a number"),
            )
        })
    }
}

fn position(labels: &mut Vec<String>, label: &str) -> usize {
    match labels.iter().position(|l| l == label) {
        Some(i) => i,
        None => {
            labels.push(label.to_string());
            labels.len() - 1
        }
    }
}

/// prices.csv: `period,group,index`, one row per cell. Groups and periods
/// keep the order of first appearance.
pub fn read_prices(path: &Path) -> Result<PriceSeries, CliError> {
    let sheet = Sheet::read(path, &["period", "group", "index"], &[])?;
    let mut periods = Vec::new();
    let mut groups = Vec::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for row in &sheet.rows {
        let period = sheet.label(row, "period")?;
        let group = sheet.label(row, "group")?;
        let value = sheet.number(row, "index")?;
        if !(value.is_finite() && value > 0.0) {
            return Err(sheet.error(
                row,
                Some("index"),
                "invalid_price",
                format!("price index for group {group} in period {period} must be positive, got {value}"),
            ));
        }
        let key = (
            position(&mut periods, &period),
            position(&mut groups, &group),
        );
        if cells.insert(key, value).is_some() {
            return Err(sheet.error(
                row,
                None,
                "duplicate_entry",
                format!("second price for group {group} in period {period}"),
            ));
        }
    }
    let mut values = vec![vec![0.0; periods.len()]; groups.len()];
    for (i, g) in groups.iter().enumerate() {
        for (t, p) in periods.iter().enumerate() {
            values[i][t] = *cells.get(&(t, i)).ok_or_else(|| {
                DataError::new(
                    "missing_entry",
                    format!("no price for group {g} in period {p}"),
                )
                .at(Location {
                    file: sheet.file.clone(),
                    line: None,
                    column: None,
                })
            })?;
        }
    }
    PriceSeries::new(groups, periods, values).map_err(|e| domain_at(e, &sheet.file, None))
}

fn domain_at(e: AuditError, file: &str, context: Option<&str>) -> CliError {
    let message = match context {
        Some(c) => format!("{c}: {e}"),
        None => e.to_string(),
    };
    DataError::new(e.code(), message)
        .at(Location {
            file: file.to_string(),
            line: None,
            column: None,
        })
        .into()
}

/// Weights per source, in file order of groups.
pub struct WeightTable {
    file: String,
    pub groups: Vec<String>,
    pub sources: BTreeMap<String, BTreeMap<String, (f64, u64)>>,
}

/// weights.csv: `source,group,weight`.
pub fn read_weight_table(path: &Path) -> Result<WeightTable, CliError> {
    let sheet = Sheet::read(path, &["source", "group", "weight"], &[])?;
    let mut groups = Vec::new();
    let mut sources: BTreeMap<String, BTreeMap<String, (f64, u64)>> = BTreeMap::new();
    for row in &sheet.rows {
        let source = sheet.label(row, "source")?;
        let group = sheet.label(row, "group")?;
        let weight = sheet.number(row, "weight")?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(sheet.error(
                row,
                Some("weight"),
                "invalid_weight",
                format!("weight for group {group} in source {source} must be non-negative, got {weight}"),
            ));
        }
        position(&mut groups, &group);
        let entry = sources.entry(source.clone()).or_default();
        if entry.insert(group.clone(), (weight, row.line)).is_some() {
            return Err(sheet.error(
                row,
                None,
                "duplicate_entry",
                format!("second weight for group {group} in source {source}"),
            ));
        }
    }
    Ok(WeightTable {
        file: sheet.file,
        groups,
        sources,
    })
}

impl WeightTable {
    /// Weight vectors in `groups` order; every source must cover exactly
    /// those groups.
    pub fn align(
        &self,
        groups: &[String],
        warnings: &mut Vec<Warning>,
    ) -> Result<BTreeMap<String, WeightVector>, CliError> {
        let mut out = BTreeMap::new();
        for (source, entries) in &self.sources {
            for (group, (_, line)) in entries {
                if !groups.contains(group) {
                    return Err(DataError::new(
                        "unknown_group",
                        format!(
                            "group {group} in source {source} does not appear in the price file"
                        ),
                    )
                    .at(Location {
                        file: self.file.clone(),
                        line: Some(*line),
                        column: Some(Column {
                            index: 2,
                            name: "group".to_string(),
                        }),
                    })
                    .into());
                }
            }
            let raw = groups
                .iter()
                .map(|g| {
                    entries.get(g).map(|e| e.0).ok_or_else(|| {
                        CliError::from(
                            DataError::new(
                                "missing_entry",
                                format!("source {source} has no weight for group {g}"),
                            )
                            .at(Location {
                                file: self.file.clone(),
                                line: None,
                                column: None,
                            }),
                        )
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let w = WeightVector::new(source.clone(), raw)
                .map_err(|e| domain_at(e, &self.file, Some(&format!("source {source}"))))?;
            if w.was_renormalized() {
                warnings.push(Warning::renormalized(&self.file, source, w.raw_sum()));
            }
            out.insert(source.clone(), w);
        }
        Ok(out)
    }
}

/// ces_micro.csv: `household_id,group,expenditure[,stratum]`, long form.
/// Groups a household never reports count as zero expenditure. Returns
/// one estimate per stratum.
pub fn read_micro(
    path: &Path,
    groups: &[String],
    warnings: &mut Vec<Warning>,
) -> Result<BTreeMap<String, WeightEstimate>, CliError> {
    let sheet = Sheet::read(
        path,
        &["household_id", "group", "expenditure"],
        &["stratum"],
    )?;
    let m = groups.len();
    let mut order: Vec<String> = Vec::new();
    let mut households: HashMap<String, (String, Vec<Option<f64>>)> = HashMap::new();
    for row in &sheet.rows {
        let id = sheet.label(row, "household_id")?;
        let group = sheet.label(row, "group")?;
        let value = sheet.number(row, "expenditure")?;
        let stratum = match sheet.text(row, "stratum") {
            "" => POOLED_STRATUM.to_string(),
            s => s.to_string(),
        };
        let i = groups.iter().position(|g| *g == group).ok_or_else(|| {
            sheet.error(
                row,
                Some("group"),
                "unknown_group",
                format!("group {group} does not appear in the price file"),
            )
        })?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(sheet.error(
                row,
                Some("expenditure"),
                "invalid_expenditure",
                format!("expenditure of household {id} on group {group} must be non-negative, got {value}"),
            ));
        }
        let entry = households.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (stratum.clone(), vec![None; m])
        });
        if entry.0 != stratum {
            return Err(sheet.error(
                row,
                Some("stratum"),
                "inconsistent_stratum",
                format!("household {id} appears in strata {} and {stratum}", entry.0),
            ));
        }
        if entry.1[i].replace(value).is_some() {
            return Err(sheet.error(
                row,
                None,
                "duplicate_entry",
                format!("second expenditure of household {id} on group {group}"),
            ));
        }
    }
    let mut by_stratum: BTreeMap<String, Vec<HouseholdRecord>> = BTreeMap::new();
    for id in order {
        let (stratum, values) = households.remove(&id).expect("household recorded in order");
        by_stratum
            .entry(stratum.clone())
            .or_default()
            .push(HouseholdRecord {
                household_id: id,
                expenditures: values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
                stratum: Some(stratum),
            });
    }
    let mut out = BTreeMap::new();
    for (stratum, records) in by_stratum {
        let est = estimate_weights(&records)
            .map_err(|e| domain_at(e, &sheet.file, Some(&format!("survey group {stratum}"))))?
            .with_label(stratum.clone());
        if est.dropped_households() > 0 {
            warnings.push(Warning::new(
                "households_dropped",
                format!(
                    "survey group {stratum}: {} households with zero total expenditure were dropped",
                    est.dropped_households()
                ),
            ));
        }
        out.insert(stratum, est);
    }
    Ok(out)
}

#[derive(Default)]
struct PartialEstimate {
    point: Vec<Option<f64>>,
    covariance: Vec<Vec<Option<f64>>>,
    households: Option<usize>,
}

/// weight_estimate.csv: `source,row_group,col_group,value`. A row with an
/// empty `col_group` is a point weight, a row with both groups is a
/// covariance entry (one triangle is enough), and the reserved row group
/// `n_households` carries the household count.
pub fn read_estimate(
    path: &Path,
    groups: &[String],
    warnings: &mut Vec<Warning>,
) -> Result<BTreeMap<String, WeightEstimate>, CliError> {
    let sheet = Sheet::read(path, &["source", "row_group", "col_group", "value"], &[])?;
    let m = groups.len();
    let mut partial: BTreeMap<String, PartialEstimate> = BTreeMap::new();
    let group_index = |row: &Row, column: &str, name: &str| -> Result<usize, CliError> {
        groups.iter().position(|g| g == name).ok_or_else(|| {
            sheet.error(
                row,
                Some(column),
                "unknown_group",
                format!("group {name} does not appear in the price file"),
            )
        })
    };
    for row in &sheet.rows {
        let source = sheet.label(row, "source")?;
        let row_group = sheet.label(row, "row_group")?;
        let col_group = sheet.text(row, "col_group");
        let value = sheet.number(row, "value")?;
        let entry = partial
            .entry(source.clone())
            .or_insert_with(|| PartialEstimate {
                point: vec![None; m],
                covariance: vec![vec![None; m]; m],
                households: None,
            });
        let duplicate = || {
            sheet.error(
                row,
                None,
                "duplicate_entry",
                format!("repeated entry for source {source}"),
            )
        };
        if row_group == HOUSEHOLDS_ROW {
            if !col_group.is_empty() || !(value >= 2.0 && value.fract() == 0.0 && value.is_finite())
            {
                return Err(sheet.error(
                    row,
                    Some("value"),
                    "invalid_households",
                    format!("{HOUSEHOLDS_ROW} must be a whole number of at least 2 with an empty col_group"),
                ));
            }
            if entry.households.replace(value as usize).is_some() {
                return Err(duplicate());
            }
            continue;
        }
        if !value.is_finite() {
            return Err(sheet.error(
                row,
                Some("value"),
                "invalid_number",
                format!("value {value} is not finite"),
            ));
        }
        let i = group_index(row, "row_group", &row_group)?;
        if col_group.is_empty() {
            if entry.point[i].replace(value).is_some() {
                return Err(duplicate());
            }
        } else {
            let j = group_index(row, "col_group", col_group)?;
            if entry.covariance[i][j].replace(value).is_some() {
                return Err(duplicate());
            }
        }
    }
    let file_loc = || Location {
        file: sheet.file.clone(),
        line: None,
        column: None,
    };
    let mut out = BTreeMap::new();
    for (source, p) in partial {
        let point = p
            .point
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    CliError::from(
                        DataError::new(
                            "missing_entry",
                            format!(
                                "source {source} has no point weight for group {}",
                                groups[i]
                            ),
                        )
                        .at(file_loc()),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = p.households.ok_or_else(|| {
            CliError::from(
                DataError::new(
                    "missing_entry",
                    format!("source {source} has no {HOUSEHOLDS_ROW} row"),
                )
                .at(file_loc()),
            )
        })?;
        let mut cov = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                cov[i][j] = match (p.covariance[i][j], p.covariance[j][i]) {
                    (Some(a), _) => a,
                    (None, Some(b)) => b,
                    (None, None) => 0.0,
                };
            }
        }
        let context = format!("survey group {source}");
        let w = WeightVector::new(source.clone(), point)
            .map_err(|e| domain_at(e, &sheet.file, Some(&context)))?;
        if w.was_renormalized() {
            warnings.push(Warning::renormalized(&sheet.file, &source, w.raw_sum()));
        }
        let est = WeightEstimate::new(w, cov, n)
            .map_err(|e| domain_at(e, &sheet.file, Some(&context)))?;
        out.insert(source, est);
    }
    Ok(out)
}
