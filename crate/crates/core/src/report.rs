//! Audit report assembly and rendering.
//!
//! The JSON form is the contract with the web console and is versioned by
//! [`REPORT_VERSION`]. Integer counts are the source of truth; every rate and
//! ratio in a report can be recomputed from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::AuditResults;
use crate::disparity::{
    AttributeParitySummary, DisparityRow, IndeterminatePolicy, Ratio, ReferenceStrategy,
    TriState, Verdict,
};
use crate::ingest::{Dataset, DatasetSchema, Diagnostic};
use crate::metrics::{undefined_reason, GroupCounts, GroupMetrics, Metric, ThresholdPolicy, TieMode};

pub const REPORT_VERSION: &str = "1";
pub const TOOL_NAME: &str = "parityd";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (json, markdown, csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub row_count: u64,
    /// SHA-256 over the canonical CSV rendering of the bound columns.
    pub content_hash: String,
}

impl DatasetFingerprint {
    pub fn of(dataset: &Dataset) -> Self {
        let digest = Sha256::digest(dataset.to_csv(b','));
        DatasetFingerprint {
            row_count: dataset.row_count() as u64,
            content_hash: format!("sha256:{}", hex::encode(digest)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub schema: DatasetSchema,
    pub threshold: ThresholdPolicy,
    pub reference: ReferenceStrategy,
    pub tau: f64,
    pub metrics: Vec<Metric>,
    pub indeterminate_policy: IndeterminatePolicy,
    pub tree_path: Option<Vec<String>>,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationSummary {
    pub cutoff_score: Option<f64>,
    pub num_positive: u64,
    pub warnings: Vec<Diagnostic>,
}

/// A rate that may be undefined; undefined rates carry the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Rate {
    fn new(value: Option<f64>, metric: Option<Metric>) -> Self {
        Rate {
            value,
            reason: value.is_none().then(|| undefined_reason(metric).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub prev: Rate,
    pub pprev: Rate,
    pub ppr: Rate,
    pub fdr: Rate,
    #[serde(rename = "for")]
    pub for_: Rate,
    pub fpr: Rate,
    pub fnr: Rate,
}

impl GroupRates {
    fn from_metrics(m: &GroupMetrics) -> Self {
        GroupRates {
            prev: Rate::new(m.prev, None),
            pprev: Rate::new(m.pprev, Some(Metric::Pprev)),
            ppr: Rate::new(m.ppr, Some(Metric::Ppr)),
            fdr: Rate::new(m.fdr, Some(Metric::Fdr)),
            for_: Rate::new(m.for_, Some(Metric::For)),
            fpr: Rate::new(m.fpr, Some(Metric::Fpr)),
            fnr: Rate::new(m.fnr, Some(Metric::Fnr)),
        }
    }

    pub fn get(&self, metric: Metric) -> &Rate {
        match metric {
            Metric::Pprev => &self.pprev,
            Metric::Ppr => &self.ppr,
            Metric::Fdr => &self.fdr,
            Metric::For => &self.for_,
            Metric::Fpr => &self.fpr,
            Metric::Fnr => &self.fnr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
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

impl From<&GroupCounts> for Counts {
    fn from(g: &GroupCounts) -> Self {
        Counts {
            size: g.size,
            pp: g.pp,
            pn: g.pn,
            fp: g.fp,
            fn_: g.fn_,
            tp: g.tp,
            tn: g.tn,
            lp: g.lp,
            ln: g.ln,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSection {
    pub group: String,
    pub counts: Counts,
    pub rates: GroupRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSection {
    pub attribute: String,
    pub total_predicted_positive: u64,
    pub references: BTreeMap<Metric, String>,
    pub groups: Vec<GroupSection>,
    pub disparities: Vec<DisparityRow>,
    pub parity: AttributeParitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub report_version: String,
    pub tool: ToolInfo,
    pub dataset: DatasetFingerprint,
    pub config: ConfigEcho,
    pub binarization: BinarizationSummary,
    pub attributes: Vec<AttributeSection>,
    pub overall_verdict: TriState,
    /// RFC 3339 generation time. Omitted for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl AuditReport {
    pub fn new(dataset: &Dataset, results: &AuditResults, generated_at: Option<String>) -> Self {
        let cfg = &results.config;
        AuditReport {
            report_version: REPORT_VERSION.to_string(),
            tool: ToolInfo {
                name: TOOL_NAME.to_string(),
                version: TOOL_VERSION.to_string(),
            },
            dataset: DatasetFingerprint::of(dataset),
            config: ConfigEcho {
                schema: dataset.schema().clone(),
                threshold: cfg.threshold.clone(),
                reference: cfg.reference.clone(),
                tau: cfg.parity.tau,
                metrics: cfg.parity.metrics.clone(),
                indeterminate_policy: cfg.parity.indeterminate_policy,
                tree_path: cfg.tree_path.clone(),
                attributes: cfg.attributes.clone(),
            },
            binarization: BinarizationSummary {
                cutoff_score: results.binarization.cutoff_score,
                num_positive: results.binarization.num_positive as u64,
                warnings: results.binarization.diagnostics.clone(),
            },
            attributes: results
                .attributes
                .iter()
                .map(|a| AttributeSection {
                    attribute: a.crosstab.attribute.clone(),
                    total_predicted_positive: a.crosstab.total_predicted_positive,
                    references: a.references.clone(),
                    groups: a
                        .crosstab
                        .groups
                        .iter()
                        .zip(&a.metrics)
                        .map(|(c, m)| GroupSection {
                            group: c.group_value.clone(),
                            counts: c.into(),
                            rates: GroupRates::from_metrics(m),
                        })
                        .collect(),
                    disparities: a.disparities.clone(),
                    parity: a.summary.clone(),
                })
                .collect(),
            overall_verdict: results.overall_verdict(),
            generated_at,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report is always serializable");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    pub fn failing_rows(&self) -> impl Iterator<Item = &DisparityRow> {
        self.attributes
            .iter()
            .flat_map(|a| a.disparities.iter())
            .filter(|r| r.verdict == Verdict::Fail)
    }
}

pub fn build_report(report: &AuditReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
        ReportFormat::Csv => render_csv(report),
    }
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_ratio(r: Ratio) -> String {
    match r {
        Ratio::Finite(v) => format!("{v:.4}"),
        Ratio::PositiveInfinity => "inf".into(),
        Ratio::Indeterminate => "n/a".into(),
    }
}

fn verdict_cell(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Indeterminate => "INDETERMINATE",
        Verdict::Reference => "REF",
    }
}

fn describe_threshold(policy: &ThresholdPolicy) -> String {
    let ties = |t: TieMode| match t {
        TieMode::ExactK => "exactly k, ties by id",
        TieMode::IncludeAllTies => "all ties included",
    };
    match policy {
        ThresholdPolicy::PreBinarized => "pre-binarized decisions".into(),
        ThresholdPolicy::TopK { k, ties: t } => format!("top {k} by score ({})", ties(*t)),
        ThresholdPolicy::TopPercent { p, ties: t } => {
            format!("top {}% by score ({})", p * 100.0, ties(*t))
        }
        ThresholdPolicy::ScoreCutoff { c } => format!("score >= {c}"),
    }
}

fn describe_reference(strategy: &ReferenceStrategy) -> String {
    match strategy {
        ReferenceStrategy::Majority => "majority (largest group)".into(),
        ReferenceStrategy::MinMetric => "lowest value of each metric".into(),
        ReferenceStrategy::Fixed { groups } => {
            let pairs: Vec<String> = groups.iter().map(|(a, g)| format!("{a}={g}")).collect();
            format!("fixed ({})", pairs.join(", "))
        }
    }
}

fn join_metrics(metrics: &[Metric]) -> String {
    metrics.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
}

fn render_markdown(report: &AuditReport) -> String {
    let cfg = &report.config;
    let mut md = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(md, "# Fairness audit report\n");
    let _ = writeln!(md, "- Rows: {}", report.dataset.row_count);
    let _ = writeln!(md, "- Content hash: `{}`", report.dataset.content_hash);
    let _ = writeln!(md, "- Threshold: {}", describe_threshold(&cfg.threshold));
    let _ = writeln!(
        md,
        "- Predicted positive: {}{}",
        report.binarization.num_positive,
        report
            .binarization
            .cutoff_score
            .map(|c| format!(" (cutoff score {c})"))
            .unwrap_or_default()
    );
    let _ = writeln!(md, "- Reference: {}", describe_reference(&cfg.reference));
    let _ = writeln!(
        md,
        "- Tau: {} (pass band [{:.4}, {:.4}])",
        cfg.tau,
        cfg.tau,
        1.0 / cfg.tau
    );
    let _ = writeln!(md, "- Metrics: {}", join_metrics(&cfg.metrics));
    if let Some(path) = &cfg.tree_path {
        let _ = writeln!(md, "- Fairness tree path: {}", path.join(" > "));
    }
    let _ = writeln!(md, "- Overall verdict: **{}**", report.overall_verdict);

    for section in &report.attributes {
        let p = &section.parity;
        let _ = writeln!(md, "\n## {}\n", section.attribute);
        let _ = writeln!(
            md,
            "Parity: statistical {}, impact {}, type I {}, type II {}, \
             unsupervised {}, supervised {}, selected metrics **{}**\n",
            p.statistical_parity,
            p.impact_parity,
            p.type1_parity,
            p.type2_parity,
            p.unsupervised,
            p.supervised,
            p.overall_for_selected_metrics
        );

        let _ = writeln!(md, "### Group metrics\n");
        let _ = writeln!(
            md,
            "| Group | Size | PP | PN | TP | FP | TN | FN | Prev | PPrev | PPR | FDR | FOR | FPR | FNR |"
        );
        let _ = writeln!(md, "|---|{}", "---:|".repeat(14));
        for g in &section.groups {
            let c = &g.counts;
            let r = &g.rates;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                g.group,
                c.size,
                c.pp,
                c.pn,
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                fmt_rate(r.prev.value),
                fmt_rate(r.pprev.value),
                fmt_rate(r.ppr.value),
                fmt_rate(r.fdr.value),
                fmt_rate(r.for_.value),
                fmt_rate(r.fpr.value),
                fmt_rate(r.fnr.value),
            );
        }

        let _ = writeln!(md, "\n### Disparities\n");
        let _ = writeln!(md, "| Metric | Group | Rate | Reference | Ref. rate | Ratio | Direction | Verdict |");
        let _ = writeln!(md, "|---|---|---:|---|---:|---:|---|---|");
        for row in &section.disparities {
            let direction = match row.direction {
                Some(d) => serde_json::to_value(d)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                None => "n/a".into(),
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                row.metric,
                row.group_value,
                fmt_rate(row.group_rate),
                row.ref_group,
                fmt_rate(row.ref_rate),
                fmt_ratio(row.ratio),
                direction,
                verdict_cell(row.verdict),
            );
        }
    }
    md
}

/// Column order of the flat disparity export.
pub const CSV_COLUMNS: [&str; 8] = [
    "attribute", "group", "metric", "rate", "ref_group", "ref_rate", "ratio", "verdict",
];

fn render_csv(report: &AuditReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for row in report.attributes.iter().flat_map(|a| &a.disparities) {
        let ratio = match row.ratio {
            Ratio::Finite(v) => v.to_string(),
            Ratio::PositiveInfinity => "Infinity".into(),
            Ratio::Indeterminate => String::new(),
        };
        let verdict = serde_json::to_value(row.verdict)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        w.write_record([
            row.attribute.as_str(),
            row.group_value.as_str(),
            row.metric.as_str(),
            &opt(row.group_rate),
            row.ref_group.as_str(),
            &opt(row.ref_rate),
            &ratio,
            &verdict,
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarColor {
    Green,
    Red,
    Gray,
    Reference,
}

impl From<Verdict> for BarColor {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => BarColor::Green,
            Verdict::Fail => BarColor::Red,
            Verdict::Indeterminate => BarColor::Gray,
            Verdict::Reference => BarColor::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBar {
    pub group: String,
    /// Disparity ratio against the reference group.
    pub value: Ratio,
    pub rate: Option<f64>,
    pub color: BarColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub attribute: String,
    pub metric: Metric,
    pub ref_group: String,
    pub bars: Vec<ChartBar>,
}

/// One series per (attribute, audited metric), bars in crosstab group order.
pub fn chart_data(report: &AuditReport) -> Vec<ChartSeries> {
    let mut out = Vec::new();
    for section in &report.attributes {
        for &metric in &report.config.metrics {
            let rows: Vec<&DisparityRow> = section
                .disparities
                .iter()
                .filter(|r| r.metric == metric)
                .collect();
            let bars = section
                .groups
                .iter()
                .filter_map(|g| rows.iter().find(|r| r.group_value == g.group))
                .map(|r| ChartBar {
                    group: r.group_value.clone(),
                    value: r.ratio,
                    rate: r.group_rate,
                    color: r.verdict.into(),
                })
                .collect();
            out.push(ChartSeries {
                attribute: section.attribute.clone(),
                metric,
                ref_group: section.references.get(&metric).cloned().unwrap_or_default(),
                bars,
            });
        }
    }
    out
}
