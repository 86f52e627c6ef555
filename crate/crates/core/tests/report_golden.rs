//! Golden files pin the JSON, Markdown and CSV layouts. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p parityd-core --test report_golden`.

mod support;

use std::path::PathBuf;

use parityd_core::report::{Counts, Rate};
use parityd_core::{
    build_report, chart_data, parse_csv, run_audit, AuditConfig, AuditReport, DatasetSchema,
    Metric, ParseOptions, Ratio, ReferenceStrategy, ReportFormat, ThresholdPolicy, TieMode,
    Verdict,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn small_report() -> AuditReport {
    let schema = DatasetSchema {
        score_column: Some("score".into()),
        label_column: "label".into(),
        decision_column: None,
        entity_id_column: Some("id".into()),
        attribute_columns: vec!["race".into(), "sex".into()],
    };
    let bytes = std::fs::read(fixture("fixtures/small.csv")).unwrap();
    let ds = parse_csv(&bytes, &schema, &ParseOptions::default()).unwrap();
    let mut cfg = AuditConfig::new(ThresholdPolicy::TopK {
        k: 6,
        ties: TieMode::ExactK,
    });
    cfg.reference = ReferenceStrategy::Fixed {
        groups: [("race", "white"), ("sex", "male")]
            .into_iter()
            .map(|(a, g)| (a.to_string(), g.to_string()))
            .collect(),
    };
    let res = run_audit(&ds, &cfg).unwrap();
    AuditReport::new(&ds, &res, None)
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = fixture("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden file:\n{}",
        String::from_utf8_lossy(actual)
    );
}

#[test]
fn golden_json() {
    check_golden("small_report.json", &build_report(&small_report(), ReportFormat::Json));
}

#[test]
fn golden_markdown() {
    check_golden("small_report.md", &build_report(&small_report(), ReportFormat::Markdown));
}

#[test]
fn golden_csv() {
    check_golden("small_report.csv", &build_report(&small_report(), ReportFormat::Csv));
}

#[test]
fn golden_chart_series() {
    let series = chart_data(&small_report());
    let mut json = serde_json::to_vec_pretty(&series).unwrap();
    json.push(b'\n');
    check_golden("small_chart.json", &json);
}

#[test]
fn missing_attribute_becomes_unknown_group() {
    let report = small_report();
    let race = &report.attributes[0];
    assert!(race.groups.iter().any(|g| g.group == "UNKNOWN" && g.counts.size == 1));
}

#[test]
fn json_reparse_rerender_is_byte_identical() {
    let bytes = small_report().to_json();
    assert_eq!(AuditReport::from_json(&bytes).unwrap().to_json(), bytes);
}

fn rate_of(c: &Counts, k: u64, metric: Option<Metric>) -> Option<f64> {
    let d = |a: u64, b: u64| (b != 0).then(|| a as f64 / b as f64);
    match metric {
        None => d(c.lp, c.size),
        Some(Metric::Pprev) => d(c.pp, c.size),
        Some(Metric::Ppr) => d(c.pp, k),
        Some(Metric::Fdr) => d(c.fp, c.pp),
        Some(Metric::For) => d(c.fn_, c.pn),
        Some(Metric::Fpr) => d(c.fp, c.ln),
        Some(Metric::Fnr) => d(c.fn_, c.lp),
    }
}

/// Re-derives every stored rate and ratio from the report's integer counts.
fn assert_recomputable(report: &AuditReport) {
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    };
    for section in &report.attributes {
        let k = section.total_predicted_positive;
        assert_eq!(k, section.groups.iter().map(|g| g.counts.pp).sum::<u64>());
        for g in &section.groups {
            let check = |rate: &Rate, metric: Option<Metric>| {
                assert!(close(rate.value, rate_of(&g.counts, k, metric)), "{} {metric:?}", g.group);
                assert_eq!(rate.value.is_none(), rate.reason.is_some());
            };
            check(&g.rates.prev, None);
            for m in Metric::ALL {
                check(g.rates.get(m), Some(m));
            }
        }
        for row in &section.disparities {
            let counts = |name: &str| &section.groups.iter().find(|g| g.group == name).unwrap().counts;
            let gr = rate_of(counts(&row.group_value), k, Some(row.metric));
            let rr = rate_of(counts(&row.ref_group), k, Some(row.metric));
            assert!(close(row.group_rate, gr));
            assert!(close(row.ref_rate, rr));
            if row.verdict == Verdict::Reference {
                assert_eq!(row.ratio, Ratio::Finite(1.0));
                continue;
            }
            match (gr, rr, row.ratio) {
                (Some(g), Some(r), Ratio::Finite(v)) if r > 0.0 => assert!((v - g / r).abs() <= 1e-12),
                (Some(g), Some(_), Ratio::Finite(v)) => assert!(g == 0.0 && v == 1.0),
                (Some(g), Some(r), Ratio::PositiveInfinity) => assert!(g > 0.0 && r == 0.0),
                (g, r, Ratio::Indeterminate) => assert!(g.is_none() || r.is_none()),
                other => panic!("inconsistent ratio {other:?}"),
            }
        }
    }
}

#[test]
fn stored_values_recompute_from_counts() {
    assert_recomputable(&small_report());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let ds = oracle::random_dataset(&mut rng);
        let mut cfg = AuditConfig::new(oracle::random_policy(&mut rng, ds.row_count(), i));
        cfg.reference = oracle::random_reference(&mut rng, &ds, i);
        let res = run_audit(&ds, &cfg).unwrap();
        let report = AuditReport::new(&ds, &res, None);
        assert_recomputable(&report);
        let again = AuditReport::new(&ds, &run_audit(&ds, &cfg).unwrap(), None);
        assert_eq!(report.to_json(), again.to_json());
        let reparsed = AuditReport::from_json(&report.to_json()).unwrap();
        assert_eq!(reparsed.to_json(), report.to_json());
    }
}

#[test]
fn overall_verdict_follows_rows() {
    let report = small_report();
    let any_fail = report.failing_rows().next().is_some();
    assert_eq!(report.overall_verdict == parityd_core::TriState::Fail, any_fail);
}
