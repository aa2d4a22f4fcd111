//! Randomized properties over the library's core contracts: persistence
//! round-trips, similarity algebra, normalization idempotence, ranking and
//! ordering rules, and metric bounds.

use std::collections::BTreeSet;

use exemplar::{
    cosine_similarity, diversity_distinct_dbs, exact_match, load_bank, normalize_logical_form,
    recall_at_n, save_bank, select_knn, select_random, sketch_keywords, sketch_similarity,
    EmbeddingVector, Example, ExampleBank, SelectionConfig, Strategy as SelectionStrategy,
};
use proptest::prelude::*;

fn vector(values: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector {
        values,
        model_id: "prop".to_string(),
    }
}

fn nonzero_values(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
        .prop_filter("needs a usable norm", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn example_rows() -> impl Strategy<Value = Vec<Example>> {
    prop::collection::btree_map(
        "[a-z]{1,8}",
        ("[ -~]{1,40}", "[ -~]{1,40}", prop::option::of("[a-z]{1,6}")),
        1..8,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(id, (question, target, db_id))| Example {
                id,
                question: format!("q {question}"),
                schema: None,
                target: format!("t {target}"),
                db_id,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn bank_save_load_round_trips(rows in example_rows()) {
        let bank = ExampleBank::new(rows, "text_to_sql").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        save_bank(&bank, &path).unwrap();
        let loaded = load_bank(&path, "text_to_sql").unwrap();
        prop_assert_eq!(loaded.examples(), bank.examples());
        prop_assert_eq!(&loaded.task_tag, &bank.task_tag);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in nonzero_values(8),
        b in nonzero_values(8),
    ) {
        let va = vector(a);
        let vb = vector(b);
        let ab = cosine_similarity(&va, &vb).unwrap();
        let ba = cosine_similarity(&vb, &va).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn cosine_ignores_positive_scaling(
        a in nonzero_values(8),
        b in nonzero_values(8),
        c in 1e-3f64..1e3,
    ) {
        let plain = cosine_similarity(&vector(a.clone()), &vector(b.clone())).unwrap();
        let scaled_a: Vec<f64> = a.iter().map(|x| x * c).collect();
        let scaled = cosine_similarity(&vector(scaled_a), &vector(b)).unwrap();
        prop_assert!((plain - scaled).abs() < 1e-9, "plain {plain} vs scaled {scaled}");
    }

    // scaling by a power of two perturbs no mantissa, so the ranked ids must
    // come out identical, ties included
    #[test]
    fn ranking_is_invariant_under_power_of_two_scaling(
        bank in prop::collection::vec(nonzero_values(8), 2..20),
        query in nonzero_values(8),
        exponent in -4i32..=4,
    ) {
        let c = (2.0f64).powi(exponent);
        let k = bank.len().min(5);
        let plain_bank: Vec<(String, EmbeddingVector)> = bank
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("ex{i:02}"), vector(v.clone())))
            .collect();
        let scaled_bank: Vec<(String, EmbeddingVector)> = bank
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("ex{i:02}"), vector(v.iter().map(|x| x * c).collect())))
            .collect();
        let scaled_query: Vec<f64> = query.iter().map(|x| x * c).collect();

        let plain = select_knn("q", &vector(query), &plain_bank, k).unwrap();
        let scaled = select_knn("q", &vector(scaled_query), &scaled_bank, k).unwrap();
        let ids = |r: &exemplar::SelectionResult| -> Vec<String> {
            r.ranked.iter().map(|s| s.example_id.clone()).collect()
        };
        prop_assert_eq!(ids(&plain), ids(&scaled));
    }

    #[test]
    fn normalization_is_idempotent(s in ".{0,80}") {
        let once = normalize_logical_form(&s);
        prop_assert_eq!(normalize_logical_form(&once), once.clone());
    }

    #[test]
    fn exact_match_is_reflexive_and_symmetric(a in ".{0,40}", b in ".{0,40}") {
        prop_assert!(exact_match(&a, &a));
        prop_assert_eq!(exact_match(&a, &b), exact_match(&b, &a));
    }

    #[test]
    fn recall_is_monotone_in_n(
        samples in prop::collection::vec("[a-e]", 1..25),
        target in "[a-f]",
    ) {
        let mut previous = false;
        for n in 1..=samples.len() + 1 {
            let now = recall_at_n(&samples, n, &target);
            prop_assert!(!(previous && !now), "recall dropped at n={n}");
            previous = now;
        }
    }

    #[test]
    fn sketch_overlap_is_symmetric_and_bounded(a in ".{0,60}", b in ".{0,60}") {
        let ab = sketch_similarity(&a, &b);
        prop_assert_eq!(ab, sketch_similarity(&b, &a));
        let ka = sketch_keywords(&a);
        let kb = sketch_keywords(&b);
        prop_assert!(ab <= ka.len().min(kb.len()));
        prop_assert!(ka.len() <= 32);
    }

    #[test]
    fn prompt_order_reverses_ranked(
        bank in prop::collection::vec(nonzero_values(8), 1..15),
        query in nonzero_values(8),
    ) {
        let k = bank.len().min(4);
        let bank_vecs: Vec<(String, EmbeddingVector)> = bank
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("ex{i:02}"), vector(v)))
            .collect();
        let result = select_knn("q", &vector(query), &bank_vecs, k).unwrap();
        let mut reversed: Vec<String> =
            result.ranked.iter().map(|s| s.example_id.clone()).collect();
        reversed.reverse();
        prop_assert_eq!(result.prompt_order, reversed);
    }

    #[test]
    fn random_trials_reproduce_and_draw_distinct_ids(
        rows in example_rows(),
        seed in any::<u64>(),
    ) {
        let bank = ExampleBank::new(rows, "text_to_sql").unwrap();
        let cfg = SelectionConfig {
            k: bank.len().min(3),
            strategy: SelectionStrategy::Random,
            seed,
            trials: 2,
        };
        let first = select_random(&bank, &cfg, "q").unwrap();
        let second = select_random(&bank, &cfg, "q").unwrap();
        prop_assert_eq!(&first, &second);
        for result in &first {
            let ids: BTreeSet<&str> =
                result.ranked.iter().map(|s| s.example_id.as_str()).collect();
            prop_assert_eq!(ids.len(), cfg.k, "draws must be distinct");
        }
    }

    #[test]
    fn diversity_stays_within_bounds(
        dbs in prop::collection::vec(prop::option::of("[a-c]"), 1..10),
    ) {
        let examples: Vec<Example> = dbs
            .iter()
            .enumerate()
            .map(|(i, db_id)| Example {
                id: format!("ex{i}"),
                question: "q".to_string(),
                schema: None,
                target: "t".to_string(),
                db_id: db_id.clone(),
            })
            .collect();
        let refs: Vec<&Example> = examples.iter().collect();
        let distinct = diversity_distinct_dbs(&refs);
        prop_assert!(distinct >= 1);
        prop_assert!(distinct <= refs.len());
    }
}
