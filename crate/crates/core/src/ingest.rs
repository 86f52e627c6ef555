//! Delimited-text ingestion.
//!
//! Column bindings are always supplied by the caller through a
//! [`DatasetSchema`]; nothing is inferred from header names.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Metric;

/// Group value substituted for empty attribute cells.
pub const UNKNOWN_GROUP: &str = "UNKNOWN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_column: Option<String>,
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id_column: Option<String>,
    pub attribute_columns: Vec<String>,
}

impl DatasetSchema {
    pub fn check(&self) -> Result<(), IngestError> {
        if self.attribute_columns.is_empty() {
            return Err(IngestError::InvalidSchema(
                "at least one attribute column is required".into(),
            ));
        }
        if self.score_column.is_none() && self.decision_column.is_none() {
            return Err(IngestError::InvalidSchema(
                "either a score column or a decision column is required".into(),
            ));
        }
        let mut bound: HashSet<&str> = HashSet::new();
        let singles = [
            self.score_column.as_deref(),
            Some(self.label_column.as_str()),
            self.decision_column.as_deref(),
            self.entity_id_column.as_deref(),
        ];
        for name in singles.into_iter().flatten() {
            if !bound.insert(name) {
                return Err(IngestError::InvalidSchema(format!(
                    "column {name:?} is bound to more than one role"
                )));
            }
        }
        let mut seen = HashSet::new();
        for attr in &self.attribute_columns {
            if bound.contains(attr.as_str()) {
                return Err(IngestError::InvalidSchema(format!(
                    "attribute column {attr:?} is also bound as score, label, decision or id"
                )));
            }
            if !seen.insert(attr.as_str()) {
                return Err(IngestError::InvalidSchema(format!(
                    "attribute column {attr:?} listed twice"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: String,
    pub score: Option<f64>,
    pub decision: Option<u8>,
    pub label: u8,
    pub attributes: BTreeMap<String, String>,
}

impl EntityRecord {
    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

/// An immutable, validated table of scored and labeled entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    records: Vec<EntityRecord>,
}

impl Dataset {
    /// Builds a dataset from already-typed records, enforcing the same
    /// invariants as [`parse_csv`].
    pub fn from_records(
        schema: DatasetSchema,
        records: Vec<EntityRecord>,
    ) -> Result<Self, IngestError> {
        schema.check()?;
        let mut ids = HashSet::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            if !ids.insert(rec.entity_id.as_str()) {
                return Err(IngestError::DuplicateEntityId(rec.entity_id.clone()));
            }
            if rec.label > 1 {
                return Err(IngestError::BadLabelValue {
                    row,
                    cell: rec.label.to_string(),
                });
            }
            if let Some(d) = rec.decision {
                if d > 1 {
                    return Err(IngestError::BadDecisionValue {
                        row,
                        cell: d.to_string(),
                    });
                }
            }
            if let Some(s) = rec.score {
                if !s.is_finite() {
                    return Err(IngestError::BadScoreValue {
                        row,
                        cell: s.to_string(),
                    });
                }
            }
            let keys_match = rec.attributes.len() == schema.attribute_columns.len()
                && schema
                    .attribute_columns
                    .iter()
                    .all(|a| rec.attributes.contains_key(a));
            if !keys_match {
                return Err(IngestError::InvalidSchema(format!(
                    "record {} does not carry exactly the schema's attribute columns",
                    rec.entity_id
                )));
            }
        }
        Ok(Dataset { schema, records })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn row_count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct values of `attribute`, sorted.
    pub fn distinct_values(&self, attribute: &str) -> BTreeSet<&str> {
        self.records
            .iter()
            .filter_map(|r| r.attribute(attribute))
            .collect()
    }

    /// Writes the bound columns back out as CSV.
    ///
    /// Parsing the output with the same schema yields an equal dataset.
    pub fn to_csv(&self, delimiter: u8) -> Vec<u8> {
        let mut out = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        let schema = &self.schema;
        let mut header: Vec<&str> = Vec::new();
        header.extend(schema.entity_id_column.as_deref());
        header.extend(schema.score_column.as_deref());
        header.extend(schema.decision_column.as_deref());
        header.push(&schema.label_column);
        header.extend(schema.attribute_columns.iter().map(String::as_str));
        // Writes into a Vec cannot fail.
        out.write_record(&header).expect("in-memory write");
        for rec in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if schema.entity_id_column.is_some() {
                row.push(rec.entity_id.clone());
            }
            if schema.score_column.is_some() {
                row.push(rec.score.map(|s| s.to_string()).unwrap_or_default());
            }
            if schema.decision_column.is_some() {
                row.push(rec.decision.map(|d| d.to_string()).unwrap_or_default());
            }
            row.push(rec.label.to_string());
            for attr in &schema.attribute_columns {
                row.push(rec.attributes[attr].clone());
            }
            out.write_record(&row).expect("in-memory write");
        }
        out.into_inner().expect("in-memory flush")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseOptions {
    #[serde(with = "delimiter_char")]
    pub delimiter: u8,
    pub truthy: Vec<String>,
    pub falsy: Vec<String>,
    /// Attributes with more distinct values than this are rejected; they are
    /// almost always continuous columns that need bucketing first.
    pub max_distinct_values: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: b',',
            truthy: ["1", "true", "t", "yes"].map(String::from).to_vec(),
            falsy: ["0", "false", "f", "no"].map(String::from).to_vec(),
            max_distinct_values: 50,
        }
    }
}

impl ParseOptions {
    fn parse_binary(&self, cell: &str) -> Option<u8> {
        let cell = cell.trim();
        if self.truthy.iter().any(|t| t.eq_ignore_ascii_case(cell)) {
            Some(1)
        } else if self.falsy.iter().any(|t| t.eq_ignore_ascii_case(cell)) {
            Some(0)
        } else {
            None
        }
    }
}

/// Delimiters travel as one-character strings in JSON (`","`, `"\t"`).
mod delimiter_char {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_char(char::from(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_bytes() {
            [b] if b.is_ascii() => Ok(*b),
            _ => Err(D::Error::custom(format!("delimiter must be one ASCII character, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("row {row}: label value {cell:?} is not a recognised 0/1 token")]
    BadLabelValue { row: usize, cell: String },
    #[error("row {row}: decision value {cell:?} is not a recognised 0/1 token")]
    BadDecisionValue { row: usize, cell: String },
    #[error("row {row}: score value {cell:?} is not a finite number")]
    BadScoreValue { row: usize, cell: String },
    #[error("duplicate entity id {0:?}")]
    DuplicateEntityId(String),
    #[error("dataset has a header but no data rows")]
    EmptyDataset,
    #[error(
        "attribute column {column:?} has {distinct} distinct values (cap {cap}); \
         continuous attributes must be bucketed before auditing"
    )]
    TooManyGroups {
        column: String,
        distinct: usize,
        cap: usize,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl IngestError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::MissingColumn(_) => "MissingColumn",
            IngestError::BadLabelValue { .. } => "BadLabelValue",
            IngestError::BadDecisionValue { .. } => "BadDecisionValue",
            IngestError::BadScoreValue { .. } => "BadScoreValue",
            IngestError::DuplicateEntityId(_) => "DuplicateEntityId",
            IngestError::EmptyDataset => "EmptyDataset",
            IngestError::TooManyGroups { .. } => "TooManyGroups",
            IngestError::InvalidSchema(_) => "InvalidSchema",
            IngestError::Csv(_) => "MalformedCsv",
        }
    }
}

impl From<csv::Error> for IngestError {
    fn from(err: csv::Error) -> Self {
        IngestError::Csv(err.to_string())
    }
}

fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

/// Parses UTF-8 CSV text with a header row into a [`Dataset`].
///
/// Empty attribute cells become [`UNKNOWN_GROUP`]. Row numbers in errors are
/// 1-based line numbers in the input, so the header is line 1.
pub fn parse_csv(
    raw: &[u8],
    schema: &DatasetSchema,
    options: &ParseOptions,
) -> Result<Dataset, IngestError> {
    schema.check()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .from_reader(raw);
    let header = reader.headers()?.clone();
    // A UTF-8 BOM would otherwise end up glued to the first column name.
    let header: csv::StringRecord = header
        .iter()
        .enumerate()
        .map(|(i, h)| if i == 0 { h.trim_start_matches('\u{feff}') } else { h })
        .collect();

    let label_idx = column_index(&header, &schema.label_column)?;
    let score_idx = schema
        .score_column
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let decision_idx = schema
        .decision_column
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let id_idx = schema
        .entity_id_column
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let attr_idx = schema
        .attribute_columns
        .iter()
        .map(|c| column_index(&header, c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut distinct: Vec<HashSet<String>> = vec![HashSet::new(); attr_idx.len()];
    for (ordinal, result) in reader.records().enumerate() {
        let row = result?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(ordinal + 2);
        let cell = |i: usize| row.get(i).unwrap_or("");

        let label = options
            .parse_binary(cell(label_idx))
            .ok_or_else(|| IngestError::BadLabelValue {
                row: line,
                cell: cell(label_idx).to_string(),
            })?;
        let decision = decision_idx
            .map(|i| {
                options
                    .parse_binary(cell(i))
                    .ok_or_else(|| IngestError::BadDecisionValue {
                        row: line,
                        cell: cell(i).to_string(),
                    })
            })
            .transpose()?;
        let score = score_idx
            .map(|i| {
                cell(i)
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| IngestError::BadScoreValue {
                        row: line,
                        cell: cell(i).to_string(),
                    })
            })
            .transpose()?;
        let entity_id = match id_idx {
            Some(i) => cell(i).to_string(),
            None => ordinal.to_string(),
        };
        if !ids.insert(entity_id.clone()) {
            return Err(IngestError::DuplicateEntityId(entity_id));
        }

        let mut attributes = BTreeMap::new();
        for (slot, (name, &i)) in schema.attribute_columns.iter().zip(&attr_idx).enumerate() {
            let raw_value = cell(i).trim();
            let value = if raw_value.is_empty() {
                UNKNOWN_GROUP.to_string()
            } else {
                raw_value.to_string()
            };
            let seen = &mut distinct[slot];
            if !seen.contains(&value) {
                seen.insert(value.clone());
                if seen.len() > options.max_distinct_values {
                    return Err(IngestError::TooManyGroups {
                        column: name.clone(),
                        distinct: seen.len(),
                        cap: options.max_distinct_values,
                    });
                }
            }
            attributes.insert(name.clone(), value);
        }

        records.push(EntityRecord {
            entity_id,
            score,
            decision,
            label,
            attributes,
        });
    }

    if records.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    Ok(Dataset {
        schema: schema.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    /// Groups smaller than this are reported. The default of 1 disables the check.
    pub min_group_size: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { min_group_size: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Diagnostic {
    SingleValuedAttribute {
        attribute: String,
    },
    SmallGroup {
        attribute: String,
        group: String,
        size: usize,
        min_size: usize,
    },
    UndefinedMetricAhead {
        attribute: String,
        group: String,
        metric: Metric,
    },
    KExceedsRows {
        k: usize,
        rows: usize,
    },
    ZeroRows,
    NoDecisionSource,
}

impl Diagnostic {
    pub fn severity(&self) -> Severity {
        match self {
            Diagnostic::ZeroRows | Diagnostic::NoDecisionSource => Severity::Error,
            _ => Severity::Warning,
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::SingleValuedAttribute { attribute } => {
                write!(f, "attribute {attribute:?} has a single value; no disparities can be measured")
            }
            Diagnostic::SmallGroup {
                attribute,
                group,
                size,
                min_size,
            } => write!(
                f,
                "group {attribute}={group} has {size} rows, below the minimum of {min_size}"
            ),
            Diagnostic::UndefinedMetricAhead {
                attribute,
                group,
                metric,
            } => write!(f, "{metric} will be undefined for {attribute}={group}"),
            Diagnostic::KExceedsRows { k, rows } => {
                write!(f, "k = {k} exceeds the {rows} rows; every row is selected")
            }
            Diagnostic::ZeroRows => write!(f, "dataset has no rows"),
            Diagnostic::NoDecisionSource => {
                write!(f, "schema has neither a score nor a decision column")
            }
        }
    }
}

pub fn validate(dataset: &Dataset) -> Vec<Diagnostic> {
    validate_with(dataset, &ValidationOptions::default())
}

pub fn validate_with(dataset: &Dataset, options: &ValidationOptions) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if dataset.is_empty() {
        out.push(Diagnostic::ZeroRows);
        return out;
    }
    let has_scores = dataset.records().iter().all(|r| r.score.is_some());
    let has_decisions = dataset.records().iter().all(|r| r.decision.is_some());
    if !has_scores && !has_decisions {
        out.push(Diagnostic::NoDecisionSource);
    }

    for attr in &dataset.schema().attribute_columns {
        // (size, labeled positive) per group, in group-value order.
        let mut groups: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for rec in dataset.records() {
            let entry = groups.entry(&rec.attributes[attr]).or_default();
            entry.0 += 1;
            entry.1 += rec.label as usize;
        }
        if groups.len() == 1 {
            out.push(Diagnostic::SingleValuedAttribute {
                attribute: attr.clone(),
            });
        }
        for (group, (size, lp)) in groups {
            if size < options.min_group_size {
                out.push(Diagnostic::SmallGroup {
                    attribute: attr.clone(),
                    group: group.to_string(),
                    size,
                    min_size: options.min_group_size,
                });
            }
            if lp == size {
                out.push(Diagnostic::UndefinedMetricAhead {
                    attribute: attr.clone(),
                    group: group.to_string(),
                    metric: Metric::Fpr,
                });
            }
            if lp == 0 {
                out.push(Diagnostic::UndefinedMetricAhead {
                    attribute: attr.clone(),
                    group: group.to_string(),
                    metric: Metric::Fnr,
                });
            }
        }
    }
    out
}
