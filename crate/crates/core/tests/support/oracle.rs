//! Naive reference implementation used to cross-check the engine.
//!
//! Everything here is deliberately written the slow way: one pass over all
//! rows per (group, cell), rank by counting predecessors, references by
//! linear scan. It shares no code with the engine beyond the input types.

#![allow(dead_code)]

use std::collections::BTreeMap;

use parityd_core::{
    Dataset, DatasetSchema, EntityRecord, Metric, ReferenceStrategy, ThresholdPolicy, TieMode,
};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NaiveCounts {
    pub size: u64,
    pub pp: u64,
    pub pn: u64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub lp: u64,
    pub ln: u64,
}

fn precedes(a: &EntityRecord, b: &EntityRecord) -> bool {
    let (sa, sb) = (a.score.unwrap(), b.score.unwrap());
    sa > sb || (sa == sb && a.entity_id < b.entity_id)
}

pub fn naive_k(p: f64, n: usize) -> usize {
    let mut k = 0usize;
    while (k as f64) < p * n as f64 - 1e-9 {
        k += 1;
    }
    k.max(usize::from(n > 0)).min(n)
}

pub fn naive_decisions(ds: &Dataset, policy: &ThresholdPolicy) -> Vec<u8> {
    let recs = ds.records();
    let n = recs.len();
    let top = |k: usize, ties: TieMode| -> Vec<u8> {
        let k = k.min(n);
        let rank: Vec<usize> = recs
            .iter()
            .map(|r| recs.iter().filter(|o| precedes(o, r)).count())
            .collect();
        match ties {
            TieMode::ExactK => rank.iter().map(|&rk| u8::from(rk < k)).collect(),
            TieMode::IncludeAllTies => {
                if k == 0 {
                    return vec![0; n];
                }
                let mut sorted: Vec<f64> = recs.iter().map(|r| r.score.unwrap()).collect();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let kth = sorted[k - 1];
                recs.iter().map(|r| u8::from(r.score.unwrap() >= kth)).collect()
            }
        }
    };
    match *policy {
        ThresholdPolicy::PreBinarized => recs.iter().map(|r| r.decision.unwrap()).collect(),
        ThresholdPolicy::ScoreCutoff { c } => {
            recs.iter().map(|r| u8::from(r.score.unwrap() >= c)).collect()
        }
        ThresholdPolicy::TopK { k, ties } => top(k, ties),
        ThresholdPolicy::TopPercent { p, ties } => top(naive_k(p, n), ties),
    }
}

pub fn naive_counts(ds: &Dataset, decisions: &[u8], attr: &str) -> BTreeMap<String, NaiveCounts> {
    let recs = ds.records();
    let mut values: Vec<String> = recs.iter().map(|r| r.attributes[attr].clone()).collect();
    values.sort();
    values.dedup();
    let count = |g: &str, pred: &dyn Fn(u8, u8) -> bool| -> u64 {
        recs.iter()
            .zip(decisions)
            .filter(|(r, &d)| r.attributes[attr] == g && pred(d, r.label))
            .count() as u64
    };
    values
        .into_iter()
        .map(|g| {
            let c = NaiveCounts {
                size: count(&g, &|_, _| true),
                pp: count(&g, &|d, _| d == 1),
                pn: count(&g, &|d, _| d == 0),
                tp: count(&g, &|d, y| d == 1 && y == 1),
                fp: count(&g, &|d, y| d == 1 && y == 0),
                tn: count(&g, &|d, y| d == 0 && y == 0),
                fn_: count(&g, &|d, y| d == 0 && y == 1),
                lp: count(&g, &|_, y| y == 1),
                ln: count(&g, &|_, y| y == 0),
            };
            (g, c)
        })
        .collect()
}

pub fn div(a: u64, b: u64) -> Option<f64> {
    if b == 0 {
        None
    } else {
        Some(a as f64 / b as f64)
    }
}

pub fn naive_rate(c: &NaiveCounts, k_total: u64, metric: Metric) -> Option<f64> {
    match metric {
        Metric::Pprev => div(c.pp, c.size),
        Metric::Ppr => div(c.pp, k_total),
        Metric::Fdr => div(c.fp, c.pp),
        Metric::For => div(c.fn_, c.pn),
        Metric::Fpr => div(c.fp, c.ln),
        Metric::Fnr => div(c.fn_, c.lp),
    }
}

pub fn naive_reference(
    counts: &BTreeMap<String, NaiveCounts>,
    k_total: u64,
    strategy: &ReferenceStrategy,
    attr: &str,
    metric: Metric,
) -> String {
    let majority = || {
        let mut best: Option<(&String, u64)> = None;
        // BTreeMap iterates in ascending value order, so strict > keeps the
        // smallest name among equal sizes.
        for (g, c) in counts {
            if best.is_none_or(|(_, s)| c.size > s) {
                best = Some((g, c.size));
            }
        }
        best.unwrap().0.clone()
    };
    match strategy {
        ReferenceStrategy::Majority => majority(),
        ReferenceStrategy::Fixed { groups } => groups[attr].clone(),
        ReferenceStrategy::MinMetric => {
            let mut best: Option<(&String, f64)> = None;
            for (g, c) in counts {
                if let Some(v) = naive_rate(c, k_total, metric) {
                    if best.is_none_or(|(_, b)| v < b) {
                        best = Some((g, v));
                    }
                }
            }
            best.map(|(g, _)| g.clone()).unwrap_or_else(majority)
        }
    }
}

/// `None` = indeterminate, `Some(INFINITY)` = unbounded.
pub fn naive_ratio(group: Option<f64>, reference: Option<f64>) -> Option<f64> {
    let (g, r) = (group?, reference?);
    if r > 0.0 {
        Some(g / r)
    } else if g == 0.0 {
        Some(1.0)
    } else {
        Some(f64::INFINITY)
    }
}

/// Random dataset with `n` in 1..=200, up to 3 attributes of up to 5 values,
/// scores drawn from a coarse grid so ties are common.
pub fn random_dataset(rng: &mut impl RngCore) -> Dataset {
    let n = rng.random_range(1..=200usize);
    let n_attrs = rng.random_range(1..=3usize);
    let attrs: Vec<String> = (0..n_attrs).map(|i| format!("attr{i}")).collect();
    let cardinality: Vec<usize> = (0..n_attrs).map(|_| rng.random_range(1..=5usize)).collect();
    let coarse = rng.random_bool(0.5);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let records = (0..n)
        .map(|i| {
            let score = if coarse {
                rng.random_range(0..10u32) as f64 / 10.0
            } else {
                rng.random::<f64>()
            };
            EntityRecord {
                entity_id: format!("e{}", ids[i]),
                score: Some(score),
                decision: Some(rng.random_range(0..=1u8)),
                label: rng.random_range(0..=1u8),
                attributes: attrs
                    .iter()
                    .zip(&cardinality)
                    .map(|(a, &c)| (a.clone(), format!("v{}", rng.random_range(0..c))))
                    .collect(),
            }
        })
        .collect();
    let schema = DatasetSchema {
        score_column: Some("score".into()),
        label_column: "label".into(),
        decision_column: Some("decision".into()),
        entity_id_column: Some("id".into()),
        attribute_columns: attrs,
    };
    Dataset::from_records(schema, records).unwrap()
}

pub fn random_policy(rng: &mut impl RngCore, n: usize, which: usize) -> ThresholdPolicy {
    let ties = if rng.random_bool(0.5) {
        TieMode::ExactK
    } else {
        TieMode::IncludeAllTies
    };
    match which % 4 {
        0 => ThresholdPolicy::PreBinarized,
        1 => ThresholdPolicy::TopK {
            k: rng.random_range(1..=n + 5),
            ties,
        },
        2 => ThresholdPolicy::TopPercent {
            p: rng.random_range(0.01..=1.0),
            ties,
        },
        _ => ThresholdPolicy::ScoreCutoff {
            c: rng.random_range(-0.1..1.1),
        },
    }
}

pub fn random_reference(rng: &mut impl RngCore, ds: &Dataset, which: usize) -> ReferenceStrategy {
    match which % 3 {
        0 => ReferenceStrategy::Majority,
        1 => ReferenceStrategy::MinMetric,
        _ => ReferenceStrategy::Fixed {
            groups: ds
                .schema()
                .attribute_columns
                .iter()
                .map(|a| {
                    let values: Vec<&str> = ds.distinct_values(a).into_iter().collect();
                    (a.clone(), values[rng.random_range(0..values.len())].to_string())
                })
                .collect(),
        },
    }
}

/// Runs the engine and the oracle on the same input and reports the first
/// mismatch. Counts must match exactly, rates and ratios within `tol`.
pub fn check_against_oracle(
    ds: &Dataset,
    config: &parityd_core::AuditConfig,
    tol: f64,
) -> Result<(), String> {
    use parityd_core::{parity_test, Ratio, Verdict};

    let res = parityd_core::run_audit(ds, config).map_err(|e| format!("engine error: {e}"))?;
    let decisions = naive_decisions(ds, &config.threshold);
    if decisions != res.binarization.decisions {
        return Err(format!("decisions differ under {:?}", config.threshold));
    }
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) if x.is_infinite() || y.is_infinite() => x == y,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    };
    for audit in &res.attributes {
        let attr = &audit.crosstab.attribute;
        let counts = naive_counts(ds, &decisions, attr);
        let k_total: u64 = counts.values().map(|c| c.pp).sum();
        if k_total != audit.crosstab.total_predicted_positive {
            return Err(format!("{attr}: K differs"));
        }
        if audit.crosstab.groups.len() != counts.len() {
            return Err(format!("{attr}: group count differs"));
        }
        for (g, m) in audit.crosstab.groups.iter().zip(&audit.metrics) {
            let c = counts
                .get(&g.group_value)
                .ok_or_else(|| format!("{attr}: unexpected group {}", g.group_value))?;
            let engine = NaiveCounts {
                size: g.size,
                pp: g.pp,
                pn: g.pn,
                tp: g.tp,
                fp: g.fp,
                tn: g.tn,
                fn_: g.fn_,
                lp: g.lp,
                ln: g.ln,
            };
            if &engine != c {
                return Err(format!("{attr}={}: counts {engine:?} vs oracle {c:?}", g.group_value));
            }
            if !close(m.prev, div(c.lp, c.size)) {
                return Err(format!("{attr}={}: prev differs", g.group_value));
            }
            for metric in Metric::ALL {
                if !close(m.get(metric), naive_rate(c, k_total, metric)) {
                    return Err(format!("{attr}={}: {metric} differs", g.group_value));
                }
            }
        }
        let parity = &res.config.parity;
        let expected_rows = parity.metrics.len() * counts.len();
        if audit.disparities.len() != expected_rows {
            return Err(format!("{attr}: {} rows, expected {expected_rows}", audit.disparities.len()));
        }
        for row in &audit.disparities {
            let reference =
                naive_reference(&counts, k_total, &res.config.reference, attr, row.metric);
            if row.ref_group != reference {
                return Err(format!(
                    "{attr}/{}: reference {} vs oracle {reference}",
                    row.metric, row.ref_group
                ));
            }
            let g_rate = naive_rate(&counts[&row.group_value], k_total, row.metric);
            let r_rate = naive_rate(&counts[&reference], k_total, row.metric);
            if !close(row.group_rate, g_rate) || !close(row.ref_rate, r_rate) {
                return Err(format!("{attr}={}/{}: rates differ", row.group_value, row.metric));
            }
            let (expected_ratio, expected_verdict) = if row.group_value == reference {
                (Some(1.0), Verdict::Reference)
            } else {
                let ratio = naive_ratio(g_rate, r_rate);
                let verdict = match ratio {
                    None => parity_test(Ratio::Indeterminate, parity.tau, parity.indeterminate_policy),
                    Some(r) if parity.tau <= r && r <= 1.0 / parity.tau => Verdict::Pass,
                    Some(_) => Verdict::Fail,
                };
                (ratio, verdict)
            };
            if !close(row.ratio.value(), expected_ratio) {
                return Err(format!(
                    "{attr}={}/{}: ratio {:?} vs oracle {expected_ratio:?}",
                    row.group_value, row.metric, row.ratio
                ));
            }
            // Verdicts are only compared away from the band edges, where a
            // last-bit difference in the ratio could legitimately flip them.
            let near_edge = expected_ratio.is_some_and(|r| {
                (r - parity.tau).abs() <= tol || (r - 1.0 / parity.tau).abs() <= tol
            });
            if !near_edge && row.verdict != expected_verdict {
                return Err(format!(
                    "{attr}={}/{}: verdict {:?} vs oracle {expected_verdict:?}",
                    row.group_value, row.metric, row.verdict
                ));
            }
        }
    }
    Ok(())
}
