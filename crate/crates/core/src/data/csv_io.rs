use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::{FanError, Label, Result};

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub feature_cols: Vec<String>,
    pub group_col: String,
    pub label_col: String,
}

impl CsvSchema {
    /// Schema matching the layout produced by [`write_csv`].
    pub fn written(feature_dim: usize) -> Self {
        Self {
            feature_cols: (0..feature_dim).map(|j| format!("f{j}")).collect(),
            group_col: "group".into(),
            label_col: "label".into(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FanError::io(path, e))?;
    read_csv(file, schema)
}

/// Reads a headered UTF-8 CSV.
///
/// Feature columns whose every value parses as a number are kept as is; any
/// other feature column is one-hot encoded over its distinct values in
/// lexicographic order. Group values map to contiguous ids, numerically
/// ordered when all of them are non-negative integers and lexicographically
/// otherwise. Labels must be `0` or `1`.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(FanError::EmptyInput("csv has no header".into()));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FanError::Schema(format!("column `{name}` not found in header")))
    };
    let feature_idx: Vec<usize> = schema.feature_cols.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let group_idx = column(&schema.group_col)?;
    let label_idx = column(&schema.label_col)?;

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(FanError::EmptyInput("csv has no data rows".into()));
    }

    let mut labels: Vec<Label> = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let raw = rec.get(label_idx).unwrap_or("").trim();
        let label = match raw {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(FanError::Parse {
                    row: i + 1,
                    column: schema.label_col.clone(),
                    message: format!("label `{raw}` is not 0 or 1"),
                })
            }
        };
        labels.push(label);
    }

    let group_values: Vec<&str> = records.iter().map(|r| r.get(group_idx).unwrap_or("").trim()).collect();
    if let Some(i) = group_values.iter().position(|v| v.is_empty()) {
        return Err(FanError::Parse {
            row: i + 1,
            column: schema.group_col.clone(),
            message: "empty group value".into(),
        });
    }
    let group_ids = contiguous_ids(&group_values);

    let mut encoders = Vec::with_capacity(feature_idx.len());
    for (&col, name) in feature_idx.iter().zip(&schema.feature_cols) {
        let values: Vec<&str> = records.iter().map(|r| r.get(col).unwrap_or("").trim()).collect();
        if let Some(i) = values.iter().position(|v| v.is_empty()) {
            return Err(FanError::Parse {
                row: i + 1,
                column: name.clone(),
                message: "empty feature value".into(),
            });
        }
        encoders.push(ColumnEncoder::fit(&values));
    }

    let n_groups = group_ids.values().copied().max().map_or(0, |m| m + 1);
    let samples = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut features = Vec::new();
            for (enc, &col) in encoders.iter().zip(&feature_idx) {
                enc.encode(rec.get(col).unwrap_or("").trim(), &mut features);
            }
            Sample {
                features,
                group: group_ids[group_values[i]],
                label: labels[i],
            }
        })
        .collect();
    Dataset::new(samples, n_groups)
}

pub fn write_csv(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dataset.feature_dim()).map(|j| format!("f{j}")).collect();
    header.push("group".into());
    header.push("label".into());
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut row: Vec<String> = s.features.iter().map(|v| format!("{v:?}")).collect();
        row.push(s.group.to_string());
        row.push(s.label.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| FanError::io("<csv writer>", e))?;
    Ok(())
}

fn contiguous_ids<'a>(values: &[&'a str]) -> BTreeMap<&'a str, usize> {
    let distinct: BTreeSet<&str> = values.iter().copied().collect();
    let mut ordered: Vec<&str> = distinct.into_iter().collect();
    if ordered.iter().all(|v| v.parse::<u64>().is_ok()) {
        ordered.sort_by_key(|v| v.parse::<u64>().unwrap());
    }
    ordered.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
}

enum ColumnEncoder {
    Numeric,
    OneHot(Vec<String>),
}

impl ColumnEncoder {
    fn fit(values: &[&str]) -> Self {
        if values.iter().all(|v| v.parse::<f64>().is_ok()) {
            ColumnEncoder::Numeric
        } else {
            let categories: BTreeSet<&str> = values.iter().copied().collect();
            ColumnEncoder::OneHot(categories.into_iter().map(String::from).collect())
        }
    }

    fn encode(&self, value: &str, out: &mut Vec<f64>) {
        match self {
            ColumnEncoder::Numeric => out.push(value.parse().expect("validated numeric column")),
            ColumnEncoder::OneHot(categories) => {
                out.extend(categories.iter().map(|c| if c == value { 1.0 } else { 0.0 }))
            }
        }
    }
}
