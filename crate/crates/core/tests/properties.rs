//! Property-based checks over randomly generated specs, measures, and
//! words.

use proptest::collection::vec;
use proptest::prelude::*;

use moran::codetree::{ConstructionSpec, LevelSpec, SpecKind, TailRule, Word};
use moran::measure::MoranMeasure;

fn arb_spec() -> impl Strategy<Value = ConstructionSpec> {
    // 1..=4 explicit levels with branching 2..=3 and ratios small enough
    // to embed, followed by a periodic tail.
    let level = vec(0.05f64..0.3, 2..=3).prop_map(LevelSpec::new);
    (vec(level.clone(), 1..=4), level).prop_map(|(levels, tail)| {
        ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            levels,
            TailRule::Periodic { block: vec![tail] },
        )
        .unwrap()
    })
}

/// A spec together with a valid word of the given length range.
fn spec_and_word(len: std::ops::Range<usize>) -> impl Strategy<Value = (ConstructionSpec, Word)> {
    (arb_spec(), vec(0u32..16, len)).prop_map(|(spec, raw)| {
        let indices: Vec<u32> = raw
            .iter()
            .enumerate()
            .map(|(pos, &r)| 1 + r % spec.branching(pos + 1) as u32)
            .collect();
        let word = Word::from(indices);
        (spec, word)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_diameter_telescopes_over_prefixes((spec, word) in spec_and_word(1..8)) {
        // diam(uv) = diam(u) * ratio-product(v), in log form: the log
        // diameter along the word equals the parent's plus the last ratio.
        let full = spec.cylinder_log_diameter(&word).unwrap();
        let parent = spec.cylinder_log_diameter(&word.parent().unwrap()).unwrap();
        let step = spec.ratio(word.len(), word.last().unwrap()).ln();
        prop_assert!((full - parent - step).abs() < 1e-12);
    }

    #[test]
    fn ultrametric_holds_for_random_leaf_triples(
        (spec, a) in spec_and_word(5..6),
        rb in vec(0u32..16, 5),
        rc in vec(0u32..16, 5),
    ) {
        let materialize = |raw: &[u32]| {
            Word::from(
                raw.iter()
                    .enumerate()
                    .map(|(pos, &r)| 1 + r % spec.branching(pos + 1) as u32)
                    .collect::<Vec<u32>>(),
            )
        };
        let b = materialize(&rb);
        let c = materialize(&rc);
        let rho_ac = spec.rho_distance(&a, &c).unwrap();
        let rho_ab = spec.rho_distance(&a, &b).unwrap();
        let rho_bc = spec.rho_distance(&b, &c).unwrap();
        prop_assert!(rho_ac <= rho_ab.max(rho_bc) + 1e-12);
        prop_assert!((rho_ac - spec.rho_distance(&c, &a).unwrap()).abs() == 0.0);
    }

    #[test]
    fn masses_are_conserved_under_offspring_splits((spec, word) in spec_and_word(0..6)) {
        let measure = MoranMeasure::uniform(spec.clone());
        let parent = measure.cylinder_log_mass(&word).unwrap().exp();
        let children: f64 = spec
            .offsprings(&word)
            .unwrap()
            .iter()
            .map(|w| measure.cylinder_log_mass(w).unwrap().exp())
            .sum();
        prop_assert!((children - parent).abs() <= 1e-12 * parent.max(1.0));
    }

    #[test]
    fn word_prefix_and_concat_are_consistent((spec, word) in spec_and_word(2..8)) {
        let _ = &spec;
        let k = word.len() / 2;
        let head = word.prefix(k);
        let tail_indices: Vec<u32> = word.indices()[k..].to_vec();
        let rebuilt = head.concat(&Word::from(tail_indices));
        prop_assert_eq!(rebuilt.clone(), word.clone());
        prop_assert!(head.is_prefix_of(&word));
        prop_assert_eq!(head.common_prefix_len(&word), k);
    }

    #[test]
    fn spec_serde_round_trip(spec in arb_spec()) {
        let json = serde_json::to_string(&spec).unwrap();
        let back: ConstructionSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn word_serde_round_trip((_, word) in spec_and_word(0..8)) {
        let json = serde_json::to_string(&word).unwrap();
        let back: Word = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, word);
    }

    #[test]
    fn sampled_paths_are_valid_words((spec, _) in spec_and_word(0..1), seed in 0u64..1000) {
        let m = MoranMeasure::uniform(spec.clone());
        for path in m.sample_paths(6, 4, seed).unwrap() {
            prop_assert!(spec.validate_word(&path).is_ok());
            prop_assert_eq!(path.len(), 6);
        }
    }
}
