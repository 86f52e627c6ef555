mod support;

use std::collections::BTreeSet;

use parityd_core::{
    binarize, crosstab, parse_csv, run_audit, AuditConfig, Dataset, EntityRecord, Metric,
    ParseOptions, ReferenceStrategy, ThresholdPolicy, TieMode,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    any::<u64>().prop_map(|seed| oracle::random_dataset(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn policy_strategy() -> impl Strategy<Value = ThresholdPolicy> {
    let ties = prop_oneof![Just(TieMode::ExactK), Just(TieMode::IncludeAllTies)];
    prop_oneof![
        Just(ThresholdPolicy::PreBinarized),
        (1usize..250, ties.clone()).prop_map(|(k, ties)| ThresholdPolicy::TopK { k, ties }),
        (0.01f64..=1.0, ties).prop_map(|(p, ties)| ThresholdPolicy::TopPercent { p, ties }),
        (-0.1f64..1.1).prop_map(|c| ThresholdPolicy::ScoreCutoff { c }),
    ]
}

fn with_scores(ds: &Dataset, f: impl Fn(f64) -> f64) -> Dataset {
    let records: Vec<EntityRecord> = ds
        .records()
        .iter()
        .map(|r| EntityRecord {
            score: r.score.map(&f),
            ..r.clone()
        })
        .collect();
    Dataset::from_records(ds.schema().clone(), records).unwrap()
}

fn positive_ids(ds: &Dataset, decisions: &[u8]) -> BTreeSet<String> {
    ds.records()
        .iter()
        .zip(decisions)
        .filter(|(_, &d)| d == 1)
        .map(|(r, _)| r.entity_id.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn confusion_identities_and_ppr_sum(ds in dataset_strategy(), policy in policy_strategy()) {
        let bin = binarize(&ds, &policy).unwrap();
        prop_assert_eq!(bin.num_positive, bin.decisions.iter().filter(|&&d| d == 1).count());
        for attr in &ds.schema().attribute_columns {
            let ct = crosstab(&ds, &bin, attr).unwrap();
            for g in &ct.groups {
                prop_assert!(g.is_consistent(), "{:?}", g);
            }
            prop_assert_eq!(ct.groups.iter().map(|g| g.size).sum::<u64>(), ds.row_count() as u64);
            prop_assert_eq!(ct.total_predicted_positive, bin.num_positive as u64);
            if ct.total_predicted_positive > 0 {
                let total: f64 = ct
                    .groups
                    .iter()
                    .map(|g| parityd_core::compute_group_metrics(g, ct.total_predicted_positive).ppr.unwrap())
                    .sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_k_selects_min_k_n(ds in dataset_strategy(), k in 1usize..250) {
        let bin = binarize(&ds, &ThresholdPolicy::TopK { k, ties: TieMode::ExactK }).unwrap();
        prop_assert_eq!(bin.num_positive, k.min(ds.row_count()));
    }

    #[test]
    fn cutoff_matches_inequality(ds in dataset_strategy(), c in -0.1f64..1.1) {
        let bin = binarize(&ds, &ThresholdPolicy::ScoreCutoff { c }).unwrap();
        for (r, &d) in ds.records().iter().zip(&bin.decisions) {
            prop_assert_eq!(d == 1, r.score.unwrap() >= c);
        }
    }

    #[test]
    fn rank_thresholds_ignore_monotone_transforms(
        ds in dataset_strategy(),
        k in 1usize..250,
        p in 0.01f64..=1.0,
        all_ties in any::<bool>(),
    ) {
        let ties = if all_ties { TieMode::IncludeAllTies } else { TieMode::ExactK };
        let transformed = with_scores(&ds, |s| (3.0 * s).exp() * 7.0 - 2.0);
        for policy in [ThresholdPolicy::TopK { k, ties }, ThresholdPolicy::TopPercent { p, ties }] {
            let a = binarize(&ds, &policy).unwrap();
            let b = binarize(&transformed, &policy).unwrap();
            prop_assert_eq!(a.decisions, b.decisions);
        }
    }

    #[test]
    fn exact_k_is_order_independent(ds in dataset_strategy(), k in 1usize..250, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut records = ds.records().to_vec();
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = Dataset::from_records(ds.schema().clone(), records).unwrap();
        let policy = ThresholdPolicy::TopK { k, ties: TieMode::ExactK };
        let a = binarize(&ds, &policy).unwrap();
        let b = binarize(&shuffled, &policy).unwrap();
        prop_assert_eq!(positive_ids(&ds, &a.decisions), positive_ids(&shuffled, &b.decisions));
    }

    #[test]
    fn csv_round_trip_and_determinism(ds in dataset_strategy(), tab in any::<bool>()) {
        let delimiter = if tab { b'\t' } else { b',' };
        let bytes = ds.to_csv(delimiter);
        let opts = ParseOptions { delimiter, ..ParseOptions::default() };
        let parsed = parse_csv(&bytes, ds.schema(), &opts).unwrap();
        prop_assert_eq!(&parsed, &ds);
        prop_assert_eq!(parse_csv(&bytes, ds.schema(), &opts).unwrap(), parsed.clone());
        for r in parsed.records() {
            let keys: Vec<&String> = r.attributes.keys().collect();
            let mut expected: Vec<&String> = ds.schema().attribute_columns.iter().collect();
            expected.sort();
            prop_assert_eq!(keys, expected);
        }
    }

    #[test]
    fn reference_rows_are_identity(ds in dataset_strategy(), policy in policy_strategy(), which in 0usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = AuditConfig::new(policy);
        cfg.reference = oracle::random_reference(&mut rng, &ds, which);
        let res = run_audit(&ds, &cfg).unwrap();
        for a in &res.attributes {
            for m in Metric::ALL {
                let reference = &a.references[&m];
                let row = a.disparities.iter().find(|r| r.metric == m && &r.group_value == reference).unwrap();
                prop_assert_eq!(row.ratio, parityd_core::Ratio::Finite(1.0));
                prop_assert_eq!(row.verdict, parityd_core::Verdict::Reference);
            }
            if cfg.reference == ReferenceStrategy::MinMetric {
                for row in &a.disparities {
                    if let Some(v) = row.ratio.value() {
                        prop_assert!(v >= 1.0);
                    }
                }
            }
        }
    }
}

#[test]
fn engine_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..200 {
        let ds = oracle::random_dataset(&mut rng);
        let mut cfg = AuditConfig::new(oracle::random_policy(&mut rng, ds.row_count(), i));
        cfg.reference = oracle::random_reference(&mut rng, &ds, i / 4);
        cfg.tau = [0.5, 0.8, 0.9, 1.0][i % 4];
        if let Err(msg) = oracle::check_against_oracle(&ds, &cfg, 1e-12) {
            panic!("case {i}: {msg}");
        }
    }
}
