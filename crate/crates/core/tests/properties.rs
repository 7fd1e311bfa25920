//! Property-based tests for the metric and estimator invariants.

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use anondq::anonymizer::{anonymize, to_pair, verify_k_anonymity, AnonymizeConfig};
use anondq::gtree::{GTree, GTreeSpec};
use anondq::info_theory::{entropy_nats, estimate_mi_seeded, scale_nmiv1};
use anondq::justification::{roc_auc_rank, roc_auc_trapezoid};
use anondq::quality::{self, ThresholdConfig};
use anondq::info_theory::NmiConfig;
use anondq::tabular::{align_pair, ColumnData, ColumnRole, ColumnSchema, Table};

proptest! {
    #[test]
    fn scale_is_bounded_forgiving_and_monotone(
        n in 0.0f64..=1.0,
        e in 0.0f64..=64.0,
        dn in 0.0f64..0.5,
        de in 0.0f64..8.0,
    ) {
        let v = scale_nmiv1(n, e);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(v >= n - 1e-12, "scaling must never punish below the raw ratio");
        let n2 = (n + dn).min(1.0);
        prop_assert!(scale_nmiv1(n2, e) >= v - 1e-12);
        prop_assert!(scale_nmiv1(n, e + de) >= v - 1e-12);
    }

    #[test]
    fn entropy_and_mi_are_non_negative(values in prop::collection::vec(-1e6f64..1e6, 10..200)) {
        let h = entropy_nats(&values);
        prop_assert!(h >= 0.0);
        let mi = estimate_mi_seeded(&values, &values, 3, 7).unwrap();
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= h * 1.1 + 1e-9, "MI(x, x) = {mi} exceeds H(x) = {h} beyond estimator noise");
    }

    #[test]
    fn auc_formulations_agree(
        raw in prop::collection::vec((0u8..=10, prop::bool::ANY), 20..150)
    ) {
        let pairs: Vec<(f64, bool)> = raw.iter().map(|&(s, l)| (f64::from(s) / 10.0, l)).collect();
        let n_pos = pairs.iter().filter(|(_, l)| *l).count();
        prop_assume!(n_pos > 0 && n_pos < pairs.len());
        let a = roc_auc_trapezoid(&pairs);
        let b = roc_auc_rank(&pairs);
        prop_assert!((a - b).abs() < 1e-9, "trapezoid {a} vs rank {b}");
    }

    #[test]
    fn pearson_invariant_under_positive_affine(
        values in prop::collection::vec(-100f64..100.0, 5..60),
        slope in 0.1f64..50.0,
        intercept in -100f64..100.0,
    ) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        let schema = vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)];
        let ids: Vec<u64> = (0..values.len() as u64).collect();
        let original = Table::new(
            schema.clone(),
            vec![ColumnData::Numerical(values.iter().map(|&v| Some(v)).collect())],
            ids.clone(),
        ).unwrap();
        let transformed = Table::new(
            schema,
            vec![ColumnData::Numerical(values.iter().map(|&v| Some(slope * v + intercept)).collect())],
            ids,
        ).unwrap();
        let pair = align_pair(&original, &transformed, &BTreeSet::new()).unwrap();
        let rho = quality::pearson_rho(&pair, "x").unwrap().value().unwrap();
        prop_assert!((rho - 1.0).abs() < 1e-6, "rho = {rho}");
    }

    #[test]
    fn lca_size_grows_with_token_set(
        sizes in prop::collection::vec(0.1f64..100.0, 2..6),
        pick in prop::collection::vec(0usize..20, 1..8),
    ) {
        // chain of nested subtrees; leaves l0..l19 distributed across levels
        let mut node = GTreeSpec { label: "leaf-bottom".into(), size: 0.0, children: vec![] };
        let mut cumulative = 0.0;
        for (level, s) in sizes.iter().enumerate() {
            cumulative += s;
            let leaves: Vec<GTreeSpec> = (0..4)
                .map(|i| GTreeSpec { label: format!("l{}", level * 4 + i), size: 0.0, children: vec![] })
                .collect();
            let mut children = vec![node];
            children.extend(leaves);
            node = GTreeSpec { label: format!("n{level}"), size: cumulative, children };
        }
        let tree = GTree::from_spec(&node).unwrap();
        let labels: Vec<String> = tree.leaf_labels();
        let tokens: Vec<&str> = pick.iter().map(|&i| labels[i % labels.len()].as_str()).collect();

        let full = tree.lca(tokens.iter().copied()).unwrap();
        // any subset generalizes no higher than the full set
        for cut in 1..tokens.len() {
            let sub = tree.lca(tokens[..cut].iter().copied()).unwrap();
            prop_assert!(sub.size <= full.size + 1e-12);
        }
        // adding an already-covered token changes nothing
        let again = tree.lca(tokens.iter().copied().chain([tokens[0]])).unwrap();
        prop_assert_eq!(again.index, full.index);
    }

    #[test]
    fn anonymizer_partitions_and_stays_k_anonymous(
        raw in prop::collection::vec((0u8..6, 0u8..4), 8..60),
        k in 2usize..5,
    ) {
        let n = raw.len();
        let table = Table::new(
            vec![
                ColumnSchema::numerical("a", ColumnRole::QuasiIdentifier),
                ColumnSchema::categorical("b", ColumnRole::QuasiIdentifier),
            ],
            vec![
                ColumnData::Numerical(raw.iter().map(|&(a, _)| Some(f64::from(a))).collect()),
                ColumnData::Categorical(raw.iter().map(|&(_, b)| Some(format!("c{b}"))).collect()),
            ],
            (0..n as u64).collect(),
        ).unwrap();
        let qids = vec!["a".to_string(), "b".to_string()];
        let mut trees = HashMap::new();
        anondq::anonymizer::ensure_gtrees(&table, &qids, &mut trees).unwrap();
        let result = anonymize(&table, &qids, &trees, &AnonymizeConfig::new(k)).unwrap();

        // partition: every row id exactly once across classes + suppressed
        let mut seen: Vec<u64> = result.suppressed_row_ids.iter().copied().collect();
        for class in &result.classes {
            prop_assert!(class.len() >= k);
            seen.extend(&class.row_ids);
        }
        seen.sort_unstable();
        let expected: Vec<u64> = (0..n as u64).collect();
        prop_assert_eq!(seen, expected);

        // micro-aggregation preserves class means
        let idx = table.id_index();
        let col = table.numerical_column("a").unwrap();
        for class in &result.classes {
            let vals: Vec<f64> = class.row_ids.iter().map(|id| col[idx[id]].unwrap()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            match &class.generalized_values["a"] {
                anondq::anonymizer::GeneralizedValue::Number(v) => {
                    prop_assert!((v - mean).abs() < 1e-9);
                }
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }

        if result.n_anonymized() > 0 {
            let pair = to_pair(&table, &result).unwrap();
            prop_assert!(verify_k_anonymity(&pair.anonymized, &qids, k).unwrap());

            // every metric lands in [0, 1]
            let report = quality::evaluate(
                &pair,
                &result,
                &trees,
                &ThresholdConfig::default(),
                &NmiConfig::default(),
            ).unwrap();
            for m in &report.per_column {
                if let Some(v) = m.value.value() {
                    prop_assert!((0.0..=1.0).contains(&v), "{}({}) = {v}", m.metric, m.column);
                }
            }
            prop_assert!((0.0..=1.0).contains(&report.pctns));
        }
    }

    #[test]
    fn aligned_vectors_have_equal_length(
        n in 5usize..40,
        missing_mask in prop::collection::vec(prop::bool::ANY, 40),
        suppress_mask in prop::collection::vec(prop::bool::ANY, 40),
    ) {
        let schema = vec![
            ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier),
            ColumnSchema::numerical("y", ColumnRole::QuasiIdentifier),
        ];
        let xs: Vec<Option<f64>> = (0..n).map(|i| if missing_mask[i] { None } else { Some(i as f64) }).collect();
        let ys: Vec<Option<f64>> = (0..n).map(|i| Some(2.0 * i as f64)).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let original = Table::new(schema, vec![ColumnData::Numerical(xs), ColumnData::Numerical(ys)], ids).unwrap();

        let suppressed: BTreeSet<u64> = (0..n).filter(|&i| suppress_mask[i]).map(|i| i as u64).collect();
        let keep: Vec<usize> = (0..n).filter(|&i| !suppress_mask[i]).collect();
        let anonymized = original.select_rows(&keep).unwrap();
        let pair = align_pair(&original, &anonymized, &suppressed).unwrap();
        for col in ["x", "y"] {
            let (a, b) = pair.aligned_numerical(col).unwrap();
            prop_assert_eq!(a.len(), b.len());
        }
    }
}
