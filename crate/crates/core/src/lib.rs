//! Bias and fairness audit engine.
//!
//! Takes scored, labeled, attribute-tagged predictions and produces
//! group-level confusion counts and rates, disparity ratios against a
//! reference group, and parity verdicts under a τ band.
//!
//! ```
//! use parityd_core::{parse_csv, run_audit, AuditConfig, DatasetSchema, ParseOptions, ThresholdPolicy};
//!
//! let schema = DatasetSchema {
//!     score_column: Some("score".into()),
//!     label_column: "label".into(),
//!     decision_column: None,
//!     entity_id_column: Some("id".into()),
//!     attribute_columns: vec!["sex".into()],
//! };
//! let csv = b"id,score,label,sex\na,0.9,1,f\nb,0.2,0,f\nc,0.8,0,m\nd,0.1,1,m\n";
//! let dataset = parse_csv(csv, &schema, &ParseOptions::default()).unwrap();
//! let results = run_audit(&dataset, &AuditConfig::new(ThresholdPolicy::TopK {
//!     k: 2,
//!     ties: Default::default(),
//! }))
//! .unwrap();
//! assert_eq!(results.binarization.num_positive, 2);
//! ```

pub mod audit;
pub mod disparity;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod tree;

pub use audit::{run_audit, AttributeAudit, AuditConfig, AuditError, AuditResults, ResolvedConfig};
pub use disparity::{
    compute_disparities, parity_test, select_reference, summarize_attribute,
    AttributeParitySummary, Direction, DisparityRow, IndeterminatePolicy, ParityConfig, Ratio,
    ReferenceError, ReferenceStrategy, TriState, Verdict,
};
pub use ingest::{
    parse_csv, validate, validate_with, Dataset, DatasetSchema, Diagnostic, EntityRecord,
    IngestError, ParseOptions, Severity, ValidationOptions, UNKNOWN_GROUP,
};
pub use metrics::{
    binarize, compute_group_metrics, crosstab, AttributeCrosstab, BinarizationResult,
    GroupCounts, GroupMetrics, Metric, PolicyError, ThresholdPolicy, TieMode,
};
pub use report::{build_report, chart_data, AuditReport, ChartSeries, ReportFormat};
pub use tree::{FairnessTree, TreeError, TreeState};
