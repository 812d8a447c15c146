//! Tabular ingestion: CSV loading, categorical encoding, train/test split and
//! z-score standardization.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell contents treated as missing. Rows holding any of them are dropped.
const MISSING_MARKERS: &[&str] = &["", "?", "NA", "N/A", "NaN", "nan", "null"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} has no header row")]
    MissingHeader { path: PathBuf },
    #[error("duplicate column {0:?} in header")]
    DuplicateColumn(String),
    #[error("configured column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("column {column:?}: value {value:?} is not numeric (row {row})")]
    NonNumeric {
        column: String,
        value: String,
        row: usize,
    },
    #[error("{column:?}: configured value {value:?} never occurs")]
    UnseenValue { column: String, value: String },
    #[error("target column {column:?} has {count} distinct values; binary target required")]
    NonBinaryTarget { column: String, count: usize },
    #[error("dataset too small: {0}")]
    TooSmall(String),
    #[error("dataset has no rows left after dropping {dropped} rows with missing values")]
    Empty { dropped: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

fn default_split_fraction() -> f64 {
    0.8
}

fn default_seed() -> u64 {
    42
}

/// Describes how to turn a CSV file into a [`Dataset`].
///
/// The sensitive column is binarized either by equality with
/// `privileged_value` or, for numeric attributes such as age, by
/// `privileged_above` (values strictly greater are privileged). Exactly one of
/// the two must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub csv_path: PathBuf,
    pub target_column: String,
    pub favorable_label: String,
    pub sensitive_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privileged_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privileged_above: Option<f64>,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl DatasetConfig {
    /// Reads a JSON config. A relative `csv_path` is resolved against the
    /// directory holding the config file.
    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: DatasetConfig = serde_json::from_str(&text)
            .map_err(|e| DataError::InvalidConfig(format!("{}: {e}", path.display())))?;
        if config.csv_path.is_relative() {
            if let Some(dir) = path.parent() {
                config.csv_path = dir.join(&config.csv_path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidConfig(msg));
        if self.target_column == self.sensitive_column {
            return bad("target_column and sensitive_column must differ".into());
        }
        for protected in [&self.target_column, &self.sensitive_column] {
            if self.drop_columns.contains(protected) {
                return bad(format!("drop_columns may not include {protected:?}"));
            }
            if self.categorical_columns.contains(protected) {
                return bad(format!(
                    "{protected:?} is mapped by the config and cannot also be categorical"
                ));
            }
        }
        match (&self.privileged_value, self.privileged_above) {
            (Some(_), None) => {}
            (None, Some(t)) if t.is_finite() => {}
            (None, Some(_)) => return bad("privileged_above must be finite".into()),
            _ => return bad("set exactly one of privileged_value, privileged_above".into()),
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!(
                "split_fraction must lie in (0,1), got {}",
                self.split_fraction
            ));
        }
        Ok(())
    }

    fn is_privileged(&self, raw: &str) -> Option<bool> {
        match (&self.privileged_value, self.privileged_above) {
            (Some(v), _) => Some(raw == v),
            (None, Some(t)) => raw.parse::<f64>().ok().map(|x| x > t),
            (None, None) => None,
        }
    }
}

/// Parsed CSV with cells kept as trimmed strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Loads the CSV named by `config` and removes its `drop_columns`.
pub fn load_dataset(config: &DatasetConfig) -> Result<RawTable, DataError> {
    config.validate()?;
    let path = &config.csv_path;
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| DataError::Csv {
        path: path.clone(),
        source,
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(DataError::MissingHeader { path: path.clone() });
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != headers.len() {
            return Err(DataError::RaggedRow {
                row: i + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    let table = RawTable { headers, rows };

    let configured = [&config.target_column, &config.sensitive_column]
        .into_iter()
        .chain(&config.categorical_columns)
        .chain(&config.drop_columns);
    for name in configured {
        if table.column_index(name).is_none() {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }
    Ok(drop_columns(table, &config.drop_columns))
}

fn drop_columns(table: RawTable, drop: &[String]) -> RawTable {
    if drop.is_empty() {
        return table;
    }
    let keep: Vec<usize> = (0..table.headers.len())
        .filter(|&j| !drop.contains(&table.headers[j]))
        .collect();
    RawTable {
        headers: keep.iter().map(|&j| table.headers[j].clone()).collect(),
        rows: table
            .rows
            .into_iter()
            .map(|row| keep.iter().map(|&j| row[j].clone()).collect())
            .collect(),
    }
}

/// How one original column maps onto encoded feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Numeric {
        name: String,
        index: usize,
    },
    /// One-hot block occupying `start..start + categories.len()`.
    Categorical {
        name: String,
        start: usize,
        categories: Vec<String>,
    },
    Sensitive {
        name: String,
        index: usize,
    },
}

/// Column layout recorded at encoding time, enough to rebuild raw rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    /// Original column order, target excluded.
    pub columns: Vec<ColumnEncoding>,
    pub target_column: String,
    pub favorable_label: String,
    /// Raw target value seen for the unfavorable class.
    pub unfavorable_label: String,
    /// Raw sensitive values observed for each group, sorted.
    pub privileged_values: Vec<String>,
    pub unprivileged_values: Vec<String>,
}

/// Encoded dataset: dense row-major features plus binary target and group.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub target: Vec<u8>,
    pub sensitive: Vec<u8>,
    pub weights: Vec<f64>,
    pub sensitive_index: usize,
    pub schema: EncodingSchema,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Row counts per `(sensitive, target)` cell, indexed `[a][y]`.
    pub fn group_counts(&self) -> [[usize; 2]; 2] {
        let mut counts = [[0usize; 2]; 2];
        for (&a, &y) in self.sensitive.iter().zip(&self.target) {
            counts[a as usize][y as usize] += 1;
        }
        counts
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            sensitive_index: self.sensitive_index,
            schema: self.schema.clone(),
        }
    }

    /// Validates that row-aligned vectors agree and weights are positive.
    pub fn check(&self) -> Result<(), DataError> {
        let n = self.target.len();
        if self.features.len() != n || self.sensitive.len() != n || self.weights.len() != n {
            return Err(DataError::LengthMismatch(format!(
                "features {}, target {n}, sensitive {}, weights {}",
                self.features.len(),
                self.sensitive.len(),
                self.weights.len()
            )));
        }
        if let Some(row) = self
            .features
            .iter()
            .find(|r| r.len() != self.feature_count())
        {
            return Err(DataError::LengthMismatch(format!(
                "row has {} features, expected {}",
                row.len(),
                self.feature_count()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(DataError::InvalidConfig(format!(
                "weights must be positive and finite, found {w}"
            )));
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell)
}

/// One-hot encodes categoricals, binarizes the sensitive column and maps the
/// favorable target label to 1.
///
/// Rows with missing cells are dropped and the count is logged. One-hot
/// categories are ordered lexicographically and named `"<col>=<value>"`.
pub fn encode(table: &RawTable, config: &DatasetConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let column = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
    };
    let target_col = column(&config.target_column)?;
    let sensitive_col = column(&config.sensitive_column)?;
    for name in &config.categorical_columns {
        column(name)?;
    }

    let rows: Vec<(usize, &Vec<String>)> = table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| !row.iter().any(|c| is_missing(c)))
        .collect();
    let dropped = table.rows.len() - rows.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    if rows.is_empty() {
        return Err(DataError::Empty { dropped });
    }

    // Target: exactly two distinct raw values, one of them favorable.
    let target_values: BTreeSet<&str> = rows.iter().map(|(_, r)| r[target_col].as_str()).collect();
    if !target_values.contains(config.favorable_label.as_str()) {
        return Err(DataError::UnseenValue {
            column: config.target_column.clone(),
            value: config.favorable_label.clone(),
        });
    }
    if target_values.len() > 2 {
        return Err(DataError::NonBinaryTarget {
            column: config.target_column.clone(),
            count: target_values.len(),
        });
    }
    let unfavorable_label = target_values
        .iter()
        .find(|v| **v != config.favorable_label)
        .map(|v| v.to_string())
        .unwrap_or_default();

    let mut sensitive = Vec::with_capacity(rows.len());
    let mut privileged_values = BTreeSet::new();
    let mut unprivileged_values = BTreeSet::new();
    for &(i, row) in &rows {
        let raw = row[sensitive_col].as_str();
        let privileged = config
            .is_privileged(raw)
            .ok_or_else(|| DataError::NonNumeric {
                column: config.sensitive_column.clone(),
                value: raw.to_owned(),
                row: i + 1,
            })?;
        if privileged {
            privileged_values.insert(raw.to_owned());
        } else {
            unprivileged_values.insert(raw.to_owned());
        }
        sensitive.push(u8::from(privileged));
    }
    if privileged_values.is_empty() {
        let value = match (&config.privileged_value, config.privileged_above) {
            (Some(v), _) => v.clone(),
            (None, Some(t)) => format!("> {t}"),
            (None, None) => String::new(),
        };
        return Err(DataError::UnseenValue {
            column: config.sensitive_column.clone(),
            value,
        });
    }

    let mut columns = Vec::new();
    let mut feature_names = Vec::new();
    let mut sensitive_index = 0;
    for (j, name) in table.headers.iter().enumerate() {
        if j == target_col {
            continue;
        }
        let start = feature_names.len();
        if j == sensitive_col {
            sensitive_index = start;
            feature_names.push(name.clone());
            columns.push(ColumnEncoding::Sensitive {
                name: name.clone(),
                index: start,
            });
        } else if config.categorical_columns.contains(name) {
            let categories: Vec<String> = rows
                .iter()
                .map(|(_, r)| r[j].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            feature_names.extend(categories.iter().map(|c| format!("{name}={c}")));
            columns.push(ColumnEncoding::Categorical {
                name: name.clone(),
                start,
                categories,
            });
        } else {
            feature_names.push(name.clone());
            columns.push(ColumnEncoding::Numeric {
                name: name.clone(),
                index: start,
            });
        }
    }
    let mut unique = HashSet::new();
    if let Some(dup) = feature_names.iter().find(|n| !unique.insert(n.as_str())) {
        return Err(DataError::DuplicateColumn(dup.clone()));
    }

    let mut features = Vec::with_capacity(rows.len());
    let mut target = Vec::with_capacity(rows.len());
    let mut raw_col = 0usize;
    for (r, &(i, row)) in rows.iter().enumerate() {
        let mut encoded = vec![0.0; feature_names.len()];
        raw_col = 0;
        for (j, cell) in row.iter().enumerate() {
            if j == target_col {
                continue;
            }
            match &columns[raw_col] {
                ColumnEncoding::Sensitive { index, .. } => {
                    encoded[*index] = f64::from(sensitive[r])
                }
                ColumnEncoding::Categorical {
                    start, categories, ..
                } => {
                    let pos = categories
                        .binary_search(cell)
                        .expect("category collected from the same rows");
                    encoded[start + pos] = 1.0;
                }
                ColumnEncoding::Numeric { name, index } => {
                    encoded[*index] = cell
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| DataError::NonNumeric {
                            column: name.clone(),
                            value: cell.clone(),
                            row: i + 1,
                        })?;
                }
            }
            raw_col += 1;
        }
        features.push(encoded);
        target.push(u8::from(row[target_col] == config.favorable_label));
    }
    debug_assert!(rows.is_empty() || raw_col == columns.len());

    let n = target.len();
    Ok(Dataset {
        features,
        feature_names,
        target,
        sensitive,
        weights: vec![1.0; n],
        sensitive_index,
        schema: EncodingSchema {
            columns,
            target_column: config.target_column.clone(),
            favorable_label: config.favorable_label.clone(),
            unfavorable_label,
            privileged_values: privileged_values.into_iter().collect(),
            unprivileged_values: unprivileged_values.into_iter().collect(),
        },
    })
}

/// Rebuilds a raw table from an unstandardized encoded dataset.
///
/// Sensitive values come back as the first observed raw value of each group,
/// so only group membership survives the round trip for many-to-one mappings.
pub fn decode(dataset: &Dataset) -> RawTable {
    let schema = &dataset.schema;
    let mut headers: Vec<String> = schema
        .columns
        .iter()
        .map(|c| match c {
            ColumnEncoding::Numeric { name, .. }
            | ColumnEncoding::Categorical { name, .. }
            | ColumnEncoding::Sensitive { name, .. } => name.clone(),
        })
        .collect();
    headers.push(schema.target_column.clone());
    let group_label = |a: u8| {
        let values = if a == 1 {
            &schema.privileged_values
        } else {
            &schema.unprivileged_values
        };
        values.first().cloned().unwrap_or_else(|| a.to_string())
    };
    let rows = dataset
        .features
        .iter()
        .zip(&dataset.target)
        .zip(&dataset.sensitive)
        .map(|((x, &y), &a)| {
            let mut row: Vec<String> = schema
                .columns
                .iter()
                .map(|c| match c {
                    ColumnEncoding::Numeric { index, .. } => x[*index].to_string(),
                    ColumnEncoding::Sensitive { .. } => group_label(a),
                    ColumnEncoding::Categorical {
                        start, categories, ..
                    } => {
                        let hot = (0..categories.len())
                            .max_by(|&p, &q| x[start + p].total_cmp(&x[start + q]).then(q.cmp(&p)))
                            .unwrap_or(0);
                        categories[hot].clone()
                    }
                })
                .collect();
            row.push(if y == 1 {
                schema.favorable_label.clone()
            } else {
                schema.unfavorable_label.clone()
            });
            row
        })
        .collect();
    RawTable { headers, rows }
}

/// Row indices of a seeded uniform shuffle, split at `round(fraction * n)`.
pub fn split_indices(
    n: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(DataError::InvalidConfig(format!(
            "split_fraction must lie in (0,1), got {split_fraction}"
        )));
    }
    let n_train = (split_fraction * n as f64).round() as usize;
    if n < 2 || n_train == 0 || n_train == n {
        return Err(DataError::TooSmall(format!(
            "{n} rows cannot be split {split_fraction} into two nonempty parts"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split(
    dataset: &Dataset,
    split_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(dataset.len(), split_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Per-column z-score parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    /// Population standard deviations. Zero-variance columns get mean 0 and
    /// divisor 1, so they pass through unchanged.
    pub std_devs: Vec<f64>,
}

impl StandardizationParams {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

pub fn fit_standardizer(train: &Dataset) -> Result<StandardizationParams, DataError> {
    fit_columns(&train.features, train.feature_count())
}

pub(crate) fn fit_columns(
    rows: &[Vec<f64>],
    width: usize,
) -> Result<StandardizationParams, DataError> {
    if rows.is_empty() {
        return Err(DataError::TooSmall(
            "cannot standardize an empty split".into(),
        ));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; width];
    for row in rows {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut std_devs = vec![0.0; width];
    for row in rows {
        for ((s, x), m) in std_devs.iter_mut().zip(row).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    for (s, m) in std_devs.iter_mut().zip(means.iter_mut()) {
        *s = (*s / n).sqrt();
        // Rounding in the mean leaves constant columns with a tiny spread.
        if *s <= 1e-12 * m.abs().max(1.0) {
            *s = 1.0;
            *m = 0.0;
        }
    }
    Ok(StandardizationParams { means, std_devs })
}

/// Standardizes features. `sensitive` keeps the original {0,1} group labels.
pub fn apply_standardizer(params: &StandardizationParams, dataset: &Dataset) -> Dataset {
    Dataset {
        features: dataset
            .features
            .iter()
            .map(|r| params.transform_row(r))
            .collect(),
        ..dataset.clone()
    }
}
