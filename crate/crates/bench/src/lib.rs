//! Synthetic datasets for the benchmarks.

use std::collections::BTreeMap;

use parityd_core::{Dataset, DatasetSchema, EntityRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `rows` entities with a score, a decision, a label correlated with the
/// score, and `attributes` attributes of `groups` values each.
pub fn synthetic(rows: usize, attributes: usize, groups: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..attributes).map(|a| format!("attr{a}")).collect();
    let records = (0..rows)
        .map(|i| {
            let score: f64 = rng.random();
            let label = u8::from(rng.random::<f64>() < 0.2 + 0.6 * score);
            let attrs: BTreeMap<String, String> = names
                .iter()
                .map(|n| (n.clone(), format!("g{}", rng.random_range(0..groups))))
                .collect();
            EntityRecord {
                entity_id: i.to_string(),
                score: Some(score),
                decision: Some(u8::from(score >= 0.5)),
                label,
                attributes: attrs,
            }
        })
        .collect();
    let schema = DatasetSchema {
        score_column: Some("score".into()),
        label_column: "label".into(),
        decision_column: Some("decision".into()),
        entity_id_column: Some("id".into()),
        attribute_columns: names,
    };
    Dataset::from_records(schema, records).expect("synthetic dataset is valid")
}
