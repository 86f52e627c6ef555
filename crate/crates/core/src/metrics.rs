//! Thresholding, confusion crosstabs and group-level rates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, Diagnostic};

/// The rate metrics that can be compared across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "PPrev")]
    Pprev,
    #[serde(rename = "PPR")]
    Ppr,
    #[serde(rename = "FDR")]
    Fdr,
    #[serde(rename = "FOR")]
    For,
    #[serde(rename = "FPR")]
    Fpr,
    #[serde(rename = "FNR")]
    Fnr,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Pprev,
        Metric::Ppr,
        Metric::Fdr,
        Metric::For,
        Metric::Fpr,
        Metric::Fnr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Pprev => "PPrev",
            Metric::Ppr => "PPR",
            Metric::Fdr => "FDR",
            Metric::For => "FOR",
            Metric::Fpr => "FPR",
            Metric::Fnr => "FNR",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown metric {0:?} (expected one of PPrev, PPR, FDR, FOR, FPR, FNR)")]
pub struct UnknownMetric(pub String);

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMetric(s.to_string()))
    }
}

/// Parses a comma-separated metric list into canonical order, dropping duplicates.
pub fn parse_metric_list(list: &str) -> Result<Vec<Metric>, UnknownMetric> {
    let mut out = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Metric>, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Exactly `k` positives; ties at the cutoff are broken by ascending entity id.
    #[default]
    ExactK,
    /// Every entity scoring at least the k-th score is positive.
    IncludeAllTies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    PreBinarized,
    TopK {
        k: usize,
        #[serde(default)]
        ties: TieMode,
    },
    TopPercent {
        p: f64,
        #[serde(default)]
        ties: TieMode,
    },
    ScoreCutoff {
        c: f64,
    },
}

impl ThresholdPolicy {
    pub fn check(&self) -> Result<(), PolicyError> {
        match *self {
            ThresholdPolicy::TopK { k: 0, .. } => {
                Err(PolicyError::InvalidPolicy("top-k requires k >= 1".into()))
            }
            ThresholdPolicy::TopPercent { p, .. } if !(p > 0.0 && p <= 1.0) => Err(
                PolicyError::InvalidPolicy(format!("top-percent requires p in (0, 1], got {p}")),
            ),
            ThresholdPolicy::ScoreCutoff { c } if !c.is_finite() => Err(
                PolicyError::InvalidPolicy("score cutoff must be finite".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("threshold policy does not fit dataset: {0}")]
    PolicyDatasetMismatch(String),
    #[error("{0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarizationResult {
    /// One decision per record, in dataset order.
    pub decisions: Vec<u8>,
    /// The realised k-th score or the supplied cutoff; `None` for pre-binarized input.
    pub cutoff_score: Option<f64>,
    pub num_positive: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Number of positives for a top-percent policy: `ceil(p * n)`.
///
/// The product is snapped to the nearest integer when it is within 1e-9 of
/// it, so that `0.1 * 30` selects 3 rather than 4.
pub fn top_percent_k(p: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let raw = p * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (k as usize).clamp(1, n)
}

pub fn binarize(dataset: &Dataset, policy: &ThresholdPolicy) -> Result<BinarizationResult, PolicyError> {
    policy.check()?;
    let records = dataset.records();
    let n = records.len();

    if let ThresholdPolicy::PreBinarized = policy {
        let decisions = records
            .iter()
            .map(|r| r.decision)
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| {
                PolicyError::PolicyDatasetMismatch(
                    "pre-binarized policy requires a decision column".into(),
                )
            })?;
        let num_positive = decisions.iter().filter(|&&d| d == 1).count();
        return Ok(BinarizationResult {
            decisions,
            cutoff_score: None,
            num_positive,
            diagnostics: Vec::new(),
        });
    }

    let scores = records
        .iter()
        .map(|r| r.score)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| {
            PolicyError::PolicyDatasetMismatch("score-based policy requires a score column".into())
        })?;

    let (k, ties) = match *policy {
        ThresholdPolicy::ScoreCutoff { c } => {
            let decisions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= c)).collect();
            let num_positive = decisions.iter().filter(|&&d| d == 1).count();
            return Ok(BinarizationResult {
                decisions,
                cutoff_score: Some(c),
                num_positive,
                diagnostics: Vec::new(),
            });
        }
        ThresholdPolicy::TopK { k, ties } => (k, ties),
        ThresholdPolicy::TopPercent { p, ties } => (top_percent_k(p, n), ties),
        ThresholdPolicy::PreBinarized => unreachable!("handled above"),
    };

    let mut diagnostics = Vec::new();
    if k > n {
        diagnostics.push(Diagnostic::KExceedsRows { k, rows: n });
    }
    let k = k.min(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| records[a].entity_id.cmp(&records[b].entity_id))
    });

    let mut decisions = vec![0u8; n];
    let cutoff_score = if k == 0 {
        None
    } else {
        Some(scores[order[k - 1]])
    };
    for &i in &order[..k] {
        decisions[i] = 1;
    }
    if let (TieMode::IncludeAllTies, Some(cut)) = (ties, cutoff_score) {
        for &i in &order[k..] {
            if scores[i] >= cut {
                decisions[i] = 1;
            } else {
                break;
            }
        }
    }
    let num_positive = decisions.iter().filter(|&&d| d == 1).count();
    Ok(BinarizationResult {
        decisions,
        cutoff_score,
        num_positive,
        diagnostics,
    })
}

/// Confusion and population counts for one group.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub attribute: String,
    #[serde(rename = "group")]
    pub group_value: String,
    pub size: u64,
    pub pp: u64,
    pub pn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
    pub tn: u64,
    pub lp: u64,
    pub ln: u64,
}

impl GroupCounts {
    fn tally(&mut self, decision: u8, label: u8) {
        self.size += 1;
        match (decision, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
        self.pp = self.tp + self.fp;
        self.pn = self.tn + self.fn_;
        self.lp = self.tp + self.fn_;
        self.ln = self.tn + self.fp;
    }

    /// Checks the confusion identities.
    pub fn is_consistent(&self) -> bool {
        self.pp + self.pn == self.size
            && self.lp + self.ln == self.size
            && self.tp + self.fp == self.pp
            && self.tn + self.fn_ == self.pn
            && self.tp + self.fn_ == self.lp
            && self.tn + self.fp == self.ln
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCrosstab {
    pub attribute: String,
    pub groups: Vec<GroupCounts>,
    pub total_predicted_positive: u64,
}

impl AttributeCrosstab {
    pub fn group(&self, value: &str) -> Option<&GroupCounts> {
        self.groups.iter().find(|g| g.group_value == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrosstabError {
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("decisions cover {decisions} rows but the dataset has {rows}")]
    Misaligned { decisions: usize, rows: usize },
}

/// Groups ordered by descending size, then ascending group value.
pub fn crosstab(
    dataset: &Dataset,
    decisions: &BinarizationResult,
    attribute: &str,
) -> Result<AttributeCrosstab, CrosstabError> {
    if !dataset
        .schema()
        .attribute_columns
        .iter()
        .any(|a| a == attribute)
    {
        return Err(CrosstabError::UnknownAttribute(attribute.to_string()));
    }
    if decisions.decisions.len() != dataset.row_count() {
        return Err(CrosstabError::Misaligned {
            decisions: decisions.decisions.len(),
            rows: dataset.row_count(),
        });
    }
    let mut by_group: BTreeMap<&str, GroupCounts> = BTreeMap::new();
    for (rec, &d) in dataset.records().iter().zip(&decisions.decisions) {
        let value = rec.attributes[attribute].as_str();
        by_group
            .entry(value)
            .or_insert_with(|| GroupCounts {
                attribute: attribute.to_string(),
                group_value: value.to_string(),
                ..GroupCounts::default()
            })
            .tally(d, rec.label);
    }
    let mut groups: Vec<GroupCounts> = by_group.into_values().collect();
    groups.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then_with(|| a.group_value.cmp(&b.group_value))
    });
    let total_predicted_positive = groups.iter().map(|g| g.pp).sum();
    Ok(AttributeCrosstab {
        attribute: attribute.to_string(),
        groups,
        total_predicted_positive,
    })
}

/// Group rates. `None` means the defining denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub attribute: String,
    pub group_value: String,
    pub prev: Option<f64>,
    pub pprev: Option<f64>,
    pub ppr: Option<f64>,
    pub fdr: Option<f64>,
    pub for_: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

impl GroupMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Pprev => self.pprev,
            Metric::Ppr => self.ppr,
            Metric::Fdr => self.fdr,
            Metric::For => self.for_,
            Metric::Fpr => self.fpr,
            Metric::Fnr => self.fnr,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn compute_group_metrics(counts: &GroupCounts, k_total: u64) -> GroupMetrics {
    GroupMetrics {
        attribute: counts.attribute.clone(),
        group_value: counts.group_value.clone(),
        prev: ratio(counts.lp, counts.size),
        pprev: ratio(counts.pp, counts.size),
        ppr: ratio(counts.pp, k_total),
        fdr: ratio(counts.fp, counts.pp),
        for_: ratio(counts.fn_, counts.pn),
        fpr: ratio(counts.fp, counts.ln),
        fnr: ratio(counts.fn_, counts.lp),
    }
}

/// Human-readable reason a rate is undefined, e.g. `"denominator LN=0"`.
pub fn undefined_reason(metric: Option<Metric>) -> &'static str {
    match metric {
        None => "denominator size=0",
        Some(Metric::Pprev) => "denominator size=0",
        Some(Metric::Ppr) => "denominator K=0",
        Some(Metric::Fdr) => "denominator PP=0",
        Some(Metric::For) => "denominator PN=0",
        Some(Metric::Fpr) => "denominator LN=0",
        Some(Metric::Fnr) => "denominator LP=0",
    }
}
