//! Disparity ratios against reference groups and the τ parity band.
//!
//! A group is within parity on a metric when `τ <= ratio <= 1/τ`; with
//! τ = 0.8 this is the familiar 80% rule.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{AttributeCrosstab, GroupMetrics, Metric};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceStrategy {
    /// Largest group; ties go to the smaller group value.
    #[default]
    Majority,
    /// Group with the lowest defined value of each metric.
    MinMetric,
    /// A fixed group per attribute.
    Fixed { groups: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error("reference group {attribute}={group} does not occur in the data")]
    FixedGroupAbsent { attribute: String, group: String },
    #[error("fixed reference strategy has no group for attribute {0:?}")]
    FixedAttributeMissing(String),
    #[error("no group of {attribute} has a defined {metric}")]
    NoDefinedMetric { attribute: String, metric: Metric },
    #[error("attribute {0:?} has no groups")]
    EmptyCrosstab(String),
}

impl ReferenceError {
    pub fn code(&self) -> &'static str {
        match self {
            ReferenceError::FixedGroupAbsent { .. } => "FixedGroupAbsent",
            ReferenceError::FixedAttributeMissing(_) => "FixedAttributeMissing",
            ReferenceError::NoDefinedMetric { .. } => "NoDefinedMetric",
            ReferenceError::EmptyCrosstab(_) => "EmptyCrosstab",
        }
    }
}

pub fn select_reference(
    crosstab: &AttributeCrosstab,
    metrics_table: &[GroupMetrics],
    strategy: &ReferenceStrategy,
    metric: Metric,
) -> Result<String, ReferenceError> {
    let attribute = &crosstab.attribute;
    if crosstab.groups.is_empty() {
        return Err(ReferenceError::EmptyCrosstab(attribute.clone()));
    }
    match strategy {
        ReferenceStrategy::Majority => {
            let best = crosstab
                .groups
                .iter()
                .min_by(|a, b| {
                    b.size
                        .cmp(&a.size)
                        .then_with(|| a.group_value.cmp(&b.group_value))
                })
                .expect("non-empty");
            Ok(best.group_value.clone())
        }
        ReferenceStrategy::MinMetric => metrics_table
            .iter()
            .filter_map(|m| m.get(metric).map(|v| (v, &m.group_value)))
            .min_by(|(va, ga), (vb, gb)| va.total_cmp(vb).then_with(|| ga.cmp(gb)))
            .map(|(_, g)| g.clone())
            .ok_or_else(|| ReferenceError::NoDefinedMetric {
                attribute: attribute.clone(),
                metric,
            }),
        ReferenceStrategy::Fixed { groups } => {
            let group = groups
                .get(attribute)
                .ok_or_else(|| ReferenceError::FixedAttributeMissing(attribute.clone()))?;
            if crosstab.group(group).is_none() {
                return Err(ReferenceError::FixedGroupAbsent {
                    attribute: attribute.clone(),
                    group: group.clone(),
                });
            }
            Ok(group.clone())
        }
    }
}

/// A disparity ratio. Serialized as a JSON number, the string `"Infinity"`,
/// or `null` when indeterminate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    PositiveInfinity,
    Indeterminate,
}

impl Ratio {
    /// Ratio of a group rate to a reference rate.
    ///
    /// `0/0` is treated as equal rates (ratio 1) and `x/0` with `x > 0` as
    /// unbounded disparity.
    pub fn between(group_rate: Option<f64>, ref_rate: Option<f64>) -> Ratio {
        match (group_rate, ref_rate) {
            (Some(g), Some(r)) if r > 0.0 => Ratio::Finite(g / r),
            (Some(0.0), Some(_)) => Ratio::Finite(1.0),
            (Some(_), Some(_)) => Ratio::PositiveInfinity,
            _ => Ratio::Indeterminate,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            Ratio::PositiveInfinity => Some(f64::INFINITY),
            Ratio::Indeterminate => None,
        }
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Ratio::Finite(v) if v > 1.0 => Some(Direction::Above),
            Ratio::Finite(v) if v < 1.0 => Some(Direction::Below),
            Ratio::Finite(_) => Some(Direction::Equal),
            Ratio::PositiveInfinity => Some(Direction::Above),
            Ratio::Indeterminate => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(v) => write!(f, "{v}"),
            Ratio::PositiveInfinity => f.write_str("Infinity"),
            Ratio::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::PositiveInfinity => s.serialize_str("Infinity"),
            Ratio::Indeterminate => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RatioVisitor;

        impl<'de> Visitor<'de> for RatioVisitor {
            type Value = Ratio;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"Infinity\" or null")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ratio, E> {
                Ok(Ratio::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ratio, E> {
                Ok(Ratio::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ratio, E> {
                Ok(Ratio::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Ratio, E> {
                match v {
                    "Infinity" => Ok(Ratio::PositiveInfinity),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }

            fn visit_none<E: de::Error>(self) -> Result<Ratio, E> {
                Ok(Ratio::Indeterminate)
            }

            fn visit_unit<E: de::Error>(self) -> Result<Ratio, E> {
                Ok(Ratio::Indeterminate)
            }
        }

        d.deserialize_any(RatioVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    Below,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndeterminatePolicy {
    TreatAsFail,
    TreatAsPass,
    #[default]
    ReportOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityConfig {
    pub tau: f64,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub indeterminate_policy: IndeterminatePolicy,
}

impl Default for ParityConfig {
    fn default() -> Self {
        ParityConfig {
            tau: 0.8,
            metrics: Metric::ALL.to_vec(),
            indeterminate_policy: IndeterminatePolicy::ReportOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("tau must lie in (0, 1], got {0}")]
pub struct InvalidTau(pub f64);

pub fn check_tau(tau: f64) -> Result<(), InvalidTau> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(InvalidTau(tau))
    }
}

/// Applies the inclusive band `τ <= ratio <= 1/τ`.
pub fn parity_test(ratio: Ratio, tau: f64, policy: IndeterminatePolicy) -> Verdict {
    match ratio {
        Ratio::Finite(r) => {
            if in_band(r, tau) {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Ratio::PositiveInfinity => Verdict::Fail,
        Ratio::Indeterminate => match policy {
            IndeterminatePolicy::TreatAsFail => Verdict::Fail,
            IndeterminatePolicy::TreatAsPass => Verdict::Pass,
            IndeterminatePolicy::ReportOnly => Verdict::Indeterminate,
        },
    }
}

pub fn in_band(ratio: f64, tau: f64) -> bool {
    tau <= ratio && ratio <= 1.0 / tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityRow {
    pub attribute: String,
    #[serde(rename = "group")]
    pub group_value: String,
    pub metric: Metric,
    pub group_rate: Option<f64>,
    pub ref_group: String,
    pub ref_rate: Option<f64>,
    pub ratio: Ratio,
    pub direction: Option<Direction>,
    pub verdict: Verdict,
}

/// One row per (metric in `config.metrics`, group), metric-major, groups in
/// metrics-table order.
pub fn compute_disparities(
    metrics_table: &[GroupMetrics],
    references: &BTreeMap<Metric, String>,
    config: &ParityConfig,
) -> Vec<DisparityRow> {
    let mut rows = Vec::with_capacity(metrics_table.len() * config.metrics.len());
    for &metric in &config.metrics {
        let Some(ref_group) = references.get(&metric) else {
            continue;
        };
        let ref_rate = metrics_table
            .iter()
            .find(|m| &m.group_value == ref_group)
            .and_then(|m| m.get(metric));
        for m in metrics_table {
            let group_rate = m.get(metric);
            let (ratio, verdict) = if &m.group_value == ref_group {
                (Ratio::Finite(1.0), Verdict::Reference)
            } else {
                let ratio = Ratio::between(group_rate, ref_rate);
                (ratio, parity_test(ratio, config.tau, config.indeterminate_policy))
            };
            rows.push(DisparityRow {
                attribute: m.attribute.clone(),
                group_value: m.group_value.clone(),
                metric,
                group_rate,
                ref_group: ref_group.clone(),
                ref_rate,
                ratio,
                direction: ratio.direction(),
                verdict,
            });
        }
    }
    rows
}

/// Three-valued outcome of a conjunction of verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Pass,
    Fail,
    Indeterminate,
}

impl TriState {
    pub fn and(self, other: TriState) -> TriState {
        match (self, other) {
            (TriState::Fail, _) | (_, TriState::Fail) => TriState::Fail,
            (TriState::Pass, TriState::Pass) => TriState::Pass,
            _ => TriState::Indeterminate,
        }
    }

    /// Folds row verdicts; the reference row counts as a pass.
    pub fn all<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> TriState {
        verdicts
            .into_iter()
            .map(|v| match v {
                Verdict::Pass | Verdict::Reference => TriState::Pass,
                Verdict::Fail => TriState::Fail,
                Verdict::Indeterminate => TriState::Indeterminate,
            })
            .fold(TriState::Pass, TriState::and)
    }
}

impl fmt::Display for TriState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriState::Pass => "PASS",
            TriState::Fail => "FAIL",
            TriState::Indeterminate => "INDETERMINATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeParitySummary {
    pub attribute: String,
    pub statistical_parity: TriState,
    pub impact_parity: TriState,
    pub type1_parity: TriState,
    pub type2_parity: TriState,
    pub unsupervised: TriState,
    pub supervised: TriState,
    pub overall_for_selected_metrics: TriState,
}

/// Composite parity over `rows` of a single attribute.
///
/// A composite whose constituent metrics were not all audited is
/// indeterminate.
pub fn summarize_attribute(rows: &[DisparityRow], config: &ParityConfig) -> AttributeParitySummary {
    let composite = |metrics: &[Metric]| {
        if !metrics.iter().all(|m| config.metrics.contains(m)) {
            return TriState::Indeterminate;
        }
        TriState::all(
            rows.iter()
                .filter(|r| metrics.contains(&r.metric))
                .map(|r| &r.verdict),
        )
    };
    let statistical_parity = composite(&[Metric::Ppr]);
    let impact_parity = composite(&[Metric::Pprev]);
    let type1_parity = composite(&[Metric::Fdr, Metric::Fpr]);
    let type2_parity = composite(&[Metric::For, Metric::Fnr]);
    AttributeParitySummary {
        attribute: rows.first().map(|r| r.attribute.clone()).unwrap_or_default(),
        statistical_parity,
        impact_parity,
        type1_parity,
        type2_parity,
        unsupervised: statistical_parity.and(impact_parity),
        supervised: type1_parity.and(type2_parity),
        overall_for_selected_metrics: TriState::all(
            rows.iter()
                .filter(|r| config.metrics.contains(&r.metric))
                .map(|r| &r.verdict),
        ),
    }
}
