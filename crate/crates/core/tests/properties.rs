//! Randomized invariant checks for the text pipeline and split handling.

use std::collections::HashSet;

use proptest::prelude::*;

use botdistill_core::corpus::{
    split_dataset, trim_edges, trim_labels, Dataset, HeteroGraph, Label, SplitAssignment,
    UserRecord,
};
use botdistill_core::serialize::{
    build_vocabulary, denoise_text, scan_tokens, serialize_user, user_token_strings,
    SectionDrop, SerializeConfig, HASHTAG, MARK_DESC, MARK_META, MARK_TWEET, MENTION, SEP,
    SPECIAL_TOKENS, URL,
};

// --- strategies ---------------------------------------------------------------------

/// Social-media-shaped text: words, URLs, mentions, hashtags, punctuation,
/// and non-ASCII words, in random interleavings.
fn social_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[a-zA-Z0-9_]{1,10}",
        Just("https://t.co/Ab3x".to_string()),
        Just("HTTP://caps.example/q".to_string()),
        Just("t.co/q1".to_string()),
        "#[a-z0-9]{1,6}",
        "@[a-z_]{1,6}",
        "[!?.,:;()'\"#@-]{1,3}",
        "[\\u{C0}-\\u{17F}]{1,6}", // accented latin words
        Just("don't".to_string()),
        Just("3.5x".to_string()),
    ];
    proptest::collection::vec(piece, 0..12).prop_map(|ws| ws.join(" "))
}

fn metadata_fields() -> impl Strategy<Value = Vec<(String, String)>> {
    proptest::collection::vec(("[a-z_]{2,10}", "[a-zA-Z0-9 .#@-]{0,12}"), 0..6)
}

fn record_strategy() -> impl Strategy<Value = UserRecord> {
    (
        metadata_fields(),
        social_text(),
        proptest::collection::vec(social_text(), 0..6),
    )
        .prop_map(|(metadata, description, tweets)| UserRecord {
            user_id: "u0".into(),
            metadata,
            description,
            tweets,
            label: None,
        })
}

fn labeled_dataset(n: usize) -> Dataset {
    let records = (0..n)
        .map(|i| UserRecord {
            user_id: format!("u{i:04}"),
            metadata: vec![],
            description: String::new(),
            tweets: vec![],
            label: Some(if i % 2 == 0 { Label::Bot } else { Label::Human }),
        })
        .collect();
    Dataset { name: "prop".into(), records, graph: None, schema: vec![] }
}

fn edge_graph() -> impl Strategy<Value = HeteroGraph> {
    let edges = proptest::collection::vec((0usize..20, 0usize..20), 1..40);
    proptest::collection::btree_map("[a-z]{3,8}", edges, 1..3)
        .prop_map(|relations| HeteroGraph { relations })
}

// --- properties ---------------------------------------------------------------------

proptest! {
    #[test]
    fn denoise_is_idempotent_on_arbitrary_input(raw in any::<String>()) {
        let once = denoise_text(&raw);
        prop_assert_eq!(denoise_text(&once), once);
    }

    #[test]
    fn denoise_is_idempotent_on_social_text(raw in social_text()) {
        let once = denoise_text(&raw);
        prop_assert_eq!(denoise_text(&once), once);
    }

    #[test]
    fn denoised_tokens_contain_no_raw_noise(raw in social_text()) {
        for tok in scan_tokens(&raw) {
            let lower = tok.to_ascii_lowercase();
            if lower.starts_with("http://") || lower.starts_with("https://")
                || lower.starts_with("t.co/")
            {
                prop_assert_eq!(&tok, URL);
            }
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some('@'), Some(c)) if c.is_alphanumeric() || c == '_' => {
                    prop_assert_eq!(&tok, MENTION)
                }
                (Some('#'), Some(c)) if c.is_alphanumeric() => {
                    prop_assert_eq!(&tok, HASHTAG)
                }
                _ => {}
            }
            prop_assert!(!tok.chars().any(char::is_whitespace), "token {tok:?} has whitespace");
            prop_assert!(!tok.is_empty());
        }
    }

    #[test]
    fn rendering_keeps_marker_order_and_budget(
        rec in record_strategy(),
        max_length in 16usize..200,
    ) {
        let full = user_token_strings(&rec, SectionDrop::default());

        // structural markers appear exactly once each, in section order
        for marker in [MARK_META, MARK_DESC, MARK_TWEET] {
            prop_assert_eq!(full.iter().filter(|t| *t == marker).count(), 1);
        }
        let pos = |m: &str| full.iter().position(|t| t == m).unwrap();
        prop_assert!(pos(MARK_META) < pos(MARK_DESC));
        prop_assert!(pos(MARK_DESC) < pos(MARK_TWEET));

        // the truncated sequence is a budget-compliant prefix of the full one
        let vocab = build_vocabulary(vec![full.clone()], 1);
        let cfg = SerializeConfig { max_length, ..Default::default() };
        let seq = serialize_user(&rec, &vocab, &cfg, SectionDrop::default());
        prop_assert!(seq.len() <= max_length);
        let full_ids: Vec<usize> = full.iter().map(|t| vocab.id_or_unk(t)).collect();
        prop_assert_eq!(&seq.token_ids[..], &full_ids[..seq.len()]);
        prop_assert!(seq.token_ids.iter().all(|&id| id < vocab.len()));

        // surface and ids describe the same tokens
        prop_assert_eq!(seq.surface.split_whitespace().count(), seq.len());

        // marker positions index the markers they claim
        if let Some(i) = seq.markers.metadata {
            prop_assert_eq!(seq.token_ids[i], vocab.id(MARK_META).unwrap());
        }
        if let Some(i) = seq.markers.tweets {
            prop_assert_eq!(seq.token_ids[i], vocab.id(MARK_TWEET).unwrap());
        }
    }

    #[test]
    fn dropped_sections_leave_no_trace(rec in record_strategy()) {
        let toks = user_token_strings(&rec, SectionDrop { tweets: true, ..Default::default() });
        prop_assert!(!toks.contains(&MARK_TWEET.to_string()));
        let drop_all = SectionDrop { metadata: true, description: true, tweets: true };
        prop_assert!(user_token_strings(&rec, drop_all).is_empty());
    }

    #[test]
    fn vocabulary_pins_specials_and_honors_min_count(
        lists in proptest::collection::vec(
            proptest::collection::vec("[a-f]{1,3}", 0..20),
            1..10,
        ),
        min_count in 1usize..4,
    ) {
        let vocab = build_vocabulary(lists.clone(), min_count);
        for (i, spec) in SPECIAL_TOKENS.iter().enumerate() {
            prop_assert_eq!(vocab.id(spec), Some(i));
        }
        let mut counts = std::collections::HashMap::new();
        for list in &lists {
            for tok in list {
                *counts.entry(tok.clone()).or_insert(0usize) += 1;
            }
        }
        for (tok, count) in counts {
            prop_assert_eq!(
                vocab.id(&tok).is_some(),
                count >= min_count,
                "token {} count {}", tok, count
            );
        }
    }

    #[test]
    fn split_partitions_the_labeled_set(
        n in 12usize..120,
        ratios in (1u32..5, 1u32..5, 1u32..5),
        seed in any::<u64>(),
    ) {
        let dataset = labeled_dataset(n);
        let total = u64::from(ratios.0) + u64::from(ratios.1) + u64::from(ratios.2);
        let split = match split_dataset(&dataset, ratios, seed) {
            Ok(s) => s,
            // tiny n with lopsided ratios can leave a part empty; that must
            // error rather than return a degenerate split
            Err(_) => {
                let n_train = (n as u64 * u64::from(ratios.0) / total) as usize;
                let n_valid = (n as u64 * u64::from(ratios.1) / total) as usize;
                prop_assert!(n_train == 0 || n_valid == 0 || n_train + n_valid == n);
                return Ok(());
            }
        };

        prop_assert_eq!(split.train.len(), (n as u64 * u64::from(ratios.0) / total) as usize);
        prop_assert_eq!(split.valid.len(), (n as u64 * u64::from(ratios.1) / total) as usize);
        prop_assert_eq!(split.train.len() + split.valid.len() + split.test.len(), n);

        let mut seen = HashSet::new();
        for &i in split.train.iter().chain(&split.valid).chain(&split.test) {
            prop_assert!(seen.insert(i), "index {} assigned twice", i);
            prop_assert!(i < n);
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn label_trim_keeps_a_train_subset(
        fraction in 0.05f64..=1.0,
        seed in any::<u64>(),
        n_train in 1usize..60,
    ) {
        let split = SplitAssignment {
            train: (0..n_train).collect(),
            valid: vec![100],
            test: vec![101],
            seed: 0,
        };
        let trimmed = trim_labels(&split, fraction, seed).unwrap();
        prop_assert_eq!(trimmed.train.len(), (fraction * n_train as f64).ceil() as usize);
        let base: HashSet<usize> = split.train.iter().copied().collect();
        prop_assert!(trimmed.train.iter().all(|i| base.contains(i)));
        prop_assert_eq!(trimmed.valid, split.valid);
        prop_assert_eq!(trimmed.test, split.test);
    }

    #[test]
    fn edge_trim_keeps_per_relation_fraction(
        graph in edge_graph(),
        fraction in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let trimmed = trim_edges(&graph, fraction, seed).unwrap();
        prop_assert_eq!(trimmed.relations.len(), graph.relations.len());
        for (name, edges) in &graph.relations {
            let kept = &trimmed.relations[name];
            prop_assert_eq!(kept.len(), (fraction * edges.len() as f64).ceil() as usize);
            // kept edges are originals; order-preserving index sampling means
            // multiset containment can be checked by counting
            for e in kept {
                let in_orig = edges.iter().filter(|o| *o == e).count();
                let in_kept = kept.iter().filter(|o| *o == e).count();
                prop_assert!(in_kept <= in_orig, "edge {:?} multiplied", e);
            }
        }
        // full fraction is the identity
        let all = trim_edges(&graph, 1.0, seed).unwrap();
        prop_assert_eq!(all.relations, graph.relations);
    }

    #[test]
    fn separator_tokens_never_leak_between_sections(rec in record_strategy()) {
        // every SEP sits strictly inside the metadata or tweet section
        let toks = user_token_strings(&rec, SectionDrop::default());
        let desc = toks.iter().position(|t| t == MARK_DESC).unwrap();
        let tweet = toks.iter().position(|t| t == MARK_TWEET).unwrap();
        for (i, tok) in toks.iter().enumerate() {
            if tok == SEP {
                prop_assert!(i < desc || i > tweet, "SEP at {} inside description", i);
            }
        }
    }
}
