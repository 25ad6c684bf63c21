//! Property tests for the corpus and metric layers.

use proptest::prelude::*;

use kdlab_core::align::SentenceAlignment;
use kdlab_core::corpus::{load_pipe, write_pipe, LoadOptions, ParallelCorpus};
use kdlab_core::metrics::{
    complexity, faithfulness, fuzzy_reordering, histogram, lex_counts, ComplexityOptions,
    CountSource, FaithfulnessOptions,
};

fn token() -> impl Strategy<Value = String> {
    "[a-e]{1,2}".prop_map(|s| s)
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(token(), 1..6)
}

fn corpus_lines() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    prop::collection::vec((sentence(), sentence()), 1..12)
}

fn build_corpus(lines: &[(Vec<String>, Vec<String>)]) -> ParallelCorpus {
    let text: String = lines
        .iter()
        .map(|(s, t)| format!("{} ||| {}\n", s.join(" "), t.join(" ")))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, text).unwrap();
    load_pipe(&path, &LoadOptions::default()).unwrap()
}

/// Identity-length corpus: target forced to the source's length.
fn square_corpus(lines: &[(Vec<String>, Vec<String>)]) -> ParallelCorpus {
    let squared: Vec<(Vec<String>, Vec<String>)> = lines
        .iter()
        .map(|(s, t)| {
            let tgt: Vec<String> = s
                .iter()
                .enumerate()
                .map(|(i, _)| t[i % t.len()].clone())
                .collect();
            (s.clone(), tgt)
        })
        .collect();
    build_corpus(&squared)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_is_identity(lines in corpus_lines()) {
        let corpus = build_corpus(&lines);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_pipe(&corpus, &path).unwrap();
        let reloaded = load_pipe(&path, &LoadOptions::default()).unwrap();
        prop_assert_eq!(corpus, reloaded);
    }

    #[test]
    fn entropy_bounds_hold(lines in corpus_lines()) {
        let corpus = square_corpus(&lines);
        let counts = lex_counts(&corpus, CountSource::Identity).unwrap();
        let report = complexity(&counts, &ComplexityOptions::default()).unwrap();
        for word in &report.per_word {
            prop_assert!(word.entropy >= 0.0);
            // H <= ln(support size)
            let id = corpus.src_vocab.id(&word.token).unwrap();
            let support = counts.row(id).len() as f64;
            prop_assert!(word.entropy <= support.ln() + 1e-9);
        }
        prop_assert!(report.complexity >= 0.0);
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal(lines in corpus_lines()) {
        let corpus = square_corpus(&lines);
        let counts = lex_counts(&corpus, CountSource::Identity).unwrap();
        let report = faithfulness(&counts, &counts, &FaithfulnessOptions::default()).unwrap();
        prop_assert!(report.faithfulness.abs() < 1e-12);
        for word in &report.per_word {
            prop_assert!(word.kl >= 0.0);
        }
    }

    #[test]
    fn faithfulness_nonnegative_across_corpora(a in corpus_lines(), b in corpus_lines()) {
        let ca = square_corpus(&a);
        let cb = square_corpus(&b);
        let counts_a = lex_counts(&ca, CountSource::Identity).unwrap();
        let counts_b = lex_counts(&cb, CountSource::Identity).unwrap();
        if let Ok(report) = faithfulness(&counts_a, &counts_b, &FaithfulnessOptions::default()) {
            for word in &report.per_word {
                prop_assert!(word.kl >= 0.0);
            }
            prop_assert!(report.faithfulness >= 0.0);
        }
    }

    #[test]
    fn monotone_chains_score_one(links in prop::collection::vec(0u32..6, 1..12)) {
        // Build a monotone many-to-one-extended chain: each link repeats or
        // increments the previous one.
        let mut s = Vec::new();
        let mut current = 0u32;
        for step in links {
            current += u32::from(step % 2 == 1);
            s.push(Some(current));
        }
        let alignment = SentenceAlignment { links: s };
        let f = fuzzy_reordering(&alignment);
        prop_assert!((f.score - 1.0).abs() < 1e-12);
        prop_assert_eq!(f.chunks, 1);
    }

    #[test]
    fn fuzzy_score_in_unit_interval(raw in prop::collection::vec(prop::option::of(0u32..10), 0..16)) {
        let f = fuzzy_reordering(&SentenceAlignment { links: raw });
        prop_assert!((0.0..=1.0).contains(&f.score));
    }

    #[test]
    fn histogram_accounting(values in prop::collection::vec(-1.0f64..3.0, 0..40), bins in 1usize..8) {
        let h = histogram(&values, bins, (0.0, 2.0)).unwrap();
        let counted: u64 = h.counts.iter().sum();
        prop_assert_eq!(counted as usize, h.in_range);
        let expected = values.iter().filter(|&&v| (0.0..=2.0).contains(&v)).count();
        prop_assert_eq!(h.in_range, expected);
        if !values.is_empty() {
            let width = (h.hi - h.lo) / h.bins as f64;
            let integral: f64 = h.densities.iter().map(|d| d * width).sum();
            let fraction = h.in_range as f64 / values.len() as f64;
            prop_assert!((integral - fraction).abs() < 1e-9);
        }
    }
}
