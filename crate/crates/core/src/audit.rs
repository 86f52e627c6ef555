//! End-to-end audit: binarize, crosstab each attribute, compute rates,
//! pick references, compare and summarize.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disparity::{
    check_tau, compute_disparities, select_reference, summarize_attribute,
    AttributeParitySummary, DisparityRow, IndeterminatePolicy, ParityConfig, ReferenceError,
    ReferenceStrategy, TriState,
};
use crate::ingest::Dataset;
use crate::metrics::{
    binarize, compute_group_metrics, crosstab, AttributeCrosstab, BinarizationResult,
    CrosstabError, GroupMetrics, Metric, PolicyError, ThresholdPolicy,
};
use crate::tree::{self, TreeError};

fn default_tau() -> f64 {
    0.8
}

/// Audit settings as supplied by a caller (CLI flags or an API body).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub reference: ReferenceStrategy,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Explicit metric selection. Mutually exclusive with `tree_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<Metric>>,
    /// Fairness-tree answer ids; the terminal's metrics are audited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_path: Option<Vec<String>>,
    #[serde(default)]
    pub indeterminate_policy: IndeterminatePolicy,
    /// Subset of the schema's attribute columns; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<String>>,
}

impl AuditConfig {
    pub fn new(threshold: ThresholdPolicy) -> Self {
        AuditConfig {
            threshold,
            reference: ReferenceStrategy::Majority,
            tau: default_tau(),
            metrics: None,
            tree_path: None,
            indeterminate_policy: IndeterminatePolicy::ReportOnly,
            attributes: None,
        }
    }

    /// Checks the configuration against a dataset and fills in defaults.
    pub fn resolve(&self, dataset: &Dataset) -> Result<ResolvedConfig, AuditError> {
        check_tau(self.tau).map_err(|e| AuditError::InvalidConfig(e.to_string()))?;
        self.threshold.check()?;

        let metrics = match (&self.metrics, &self.tree_path) {
            (Some(_), Some(_)) => {
                return Err(AuditError::InvalidConfig(
                    "give either metrics or tree_path, not both".into(),
                ))
            }
            (Some(list), None) => {
                if list.is_empty() {
                    return Err(AuditError::InvalidConfig("metric list is empty".into()));
                }
                let mut list = list.clone();
                list.sort();
                list.dedup();
                list
            }
            (None, Some(path)) => tree::recommended_metrics(&tree::builtin().replay(path)?)?,
            (None, None) => Metric::ALL.to_vec(),
        };

        let schema_attrs = &dataset.schema().attribute_columns;
        let attributes = match &self.attributes {
            None => schema_attrs.clone(),
            Some(list) => {
                if list.is_empty() {
                    return Err(AuditError::InvalidConfig("attribute list is empty".into()));
                }
                for a in list {
                    if !schema_attrs.contains(a) {
                        return Err(AuditError::UnknownAttribute(a.clone()));
                    }
                }
                list.clone()
            }
        };
        if let ReferenceStrategy::Fixed { groups } = &self.reference {
            if let Some(missing) = attributes.iter().find(|a| !groups.contains_key(*a)) {
                return Err(ReferenceError::FixedAttributeMissing(missing.clone()).into());
            }
        }

        Ok(ResolvedConfig {
            threshold: self.threshold.clone(),
            reference: self.reference.clone(),
            parity: ParityConfig {
                tau: self.tau,
                metrics,
                indeterminate_policy: self.indeterminate_policy,
            },
            tree_path: self.tree_path.clone(),
            attributes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub threshold: ThresholdPolicy,
    pub reference: ReferenceStrategy,
    pub parity: ParityConfig,
    pub tree_path: Option<Vec<String>>,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Crosstab(#[from] CrosstabError),
}

impl AuditError {
    pub fn code(&self) -> &'static str {
        match self {
            AuditError::InvalidConfig(_) => "InvalidConfig",
            AuditError::UnknownAttribute(_) => "UnknownAttribute",
            AuditError::Policy(PolicyError::PolicyDatasetMismatch(_)) => "PolicyDatasetMismatch",
            AuditError::Policy(PolicyError::InvalidPolicy(_)) => "InvalidPolicy",
            AuditError::Reference(e) => e.code(),
            AuditError::Tree(e) => e.code(),
            AuditError::Crosstab(CrosstabError::UnknownAttribute(_)) => "UnknownAttribute",
            AuditError::Crosstab(CrosstabError::Misaligned { .. }) => "Misaligned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeAudit {
    pub crosstab: AttributeCrosstab,
    pub metrics: Vec<GroupMetrics>,
    pub references: BTreeMap<Metric, String>,
    pub disparities: Vec<DisparityRow>,
    pub summary: AttributeParitySummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResults {
    pub config: ResolvedConfig,
    pub binarization: BinarizationResult,
    pub attributes: Vec<AttributeAudit>,
}

impl AuditResults {
    /// Fail if any audited row fails, pass if all pass, else indeterminate.
    pub fn overall_verdict(&self) -> TriState {
        self.attributes
            .iter()
            .map(|a| a.summary.overall_for_selected_metrics)
            .fold(TriState::Pass, TriState::and)
    }

    pub fn disparities(&self) -> impl Iterator<Item = &DisparityRow> {
        self.attributes.iter().flat_map(|a| a.disparities.iter())
    }
}

/// Audits one attribute given decisions for the whole dataset.
///
/// Under `MinMetric`, a metric that is undefined for every group has no
/// minimum; the majority group stands in as reference so the rows are still
/// emitted (all of them indeterminate).
pub fn audit_attribute(
    dataset: &Dataset,
    decisions: &BinarizationResult,
    attribute: &str,
    reference: &ReferenceStrategy,
    parity: &ParityConfig,
) -> Result<AttributeAudit, AuditError> {
    let crosstab = crosstab(dataset, decisions, attribute)?;
    let metrics: Vec<GroupMetrics> = crosstab
        .groups
        .iter()
        .map(|g| compute_group_metrics(g, crosstab.total_predicted_positive))
        .collect();
    let mut references = BTreeMap::new();
    for &metric in &parity.metrics {
        let group = match select_reference(&crosstab, &metrics, reference, metric) {
            Err(ReferenceError::NoDefinedMetric { .. }) => {
                select_reference(&crosstab, &metrics, &ReferenceStrategy::Majority, metric)?
            }
            other => other?,
        };
        references.insert(metric, group);
    }
    let disparities = compute_disparities(&metrics, &references, parity);
    let mut summary = summarize_attribute(&disparities, parity);
    summary.attribute = attribute.to_string();
    Ok(AttributeAudit {
        crosstab,
        metrics,
        references,
        disparities,
        summary,
    })
}

pub fn run_audit(dataset: &Dataset, config: &AuditConfig) -> Result<AuditResults, AuditError> {
    let config = config.resolve(dataset)?;
    let binarization = binarize(dataset, &config.threshold)?;
    let attributes = config
        .attributes
        .iter()
        .map(|attr| audit_attribute(dataset, &binarization, attr, &config.reference, &config.parity))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AuditResults {
        config,
        binarization,
        attributes,
    })
}
