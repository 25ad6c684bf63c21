//! EM behavior over random corpora: likelihood monotonicity at fixed tension
//! and invariance of trained models to worker-thread count.

use kdlab_core::align::{corpus_log_likelihood, train_alignment, AlignConfig};
use kdlab_core::corpus::ParallelCorpus;
use kdlab_core::rng;
use rand::Rng as _;

/// Random corpus over small vocabularies; a planted dictionary with noise so
/// EM has structure to find.
fn random_corpus(seed: u64) -> ParallelCorpus {
    let mut rng = rng::stream_rng(seed, 0);
    let src_words: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
    let tgt_words: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
    let mut lines = String::new();
    for _ in 0..rng.random_range(20..60) {
        let len = rng.random_range(1..8);
        let mut src = Vec::new();
        let mut tgt = Vec::new();
        for _ in 0..len {
            let w = rng.random_range(0..src_words.len());
            src.push(src_words[w].clone());
            // mostly the planted translation, sometimes noise
            let t = if rng.random::<f64>() < 0.8 {
                w
            } else {
                rng.random_range(0..tgt_words.len())
            };
            tgt.push(tgt_words[t].clone());
        }
        lines.push_str(&format!("{} ||| {}\n", src.join(" "), tgt.join(" ")));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, lines).unwrap();
    kdlab_core::corpus::load_pipe(&path, &Default::default()).unwrap()
}

#[test]
fn log_likelihood_never_decreases_at_fixed_tension() {
    for seed in 0..20 {
        let corpus = random_corpus(seed);
        let cfg = AlignConfig {
            em_iters: 8,
            ..Default::default()
        };
        let (model, trace) = train_alignment(&corpus, &cfg).unwrap();
        for w in trace.log_likelihood.windows(2) {
            let slack = 1e-9 * w[0].abs();
            assert!(
                w[1] >= w[0] - slack,
                "seed {seed}: log-likelihood fell from {} to {}",
                w[0],
                w[1]
            );
        }
        // the final model is at least as good as the last recorded iterate
        let last = *trace.log_likelihood.last().unwrap();
        let final_ll = corpus_log_likelihood(&model, &corpus);
        assert!(final_ll >= last - 1e-9 * last.abs());
    }
}

#[test]
fn training_is_thread_count_invariant() {
    let corpus = random_corpus(99);
    let cfg = AlignConfig::default();
    let (reference, ref_trace) = train_alignment(&corpus, &cfg).unwrap();
    for threads in [1, 2, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let (model, trace) = pool.install(|| train_alignment(&corpus, &cfg).unwrap());
        assert_eq!(model.ttable, reference.ttable, "{threads} threads");
        assert_eq!(trace.log_likelihood, ref_trace.log_likelihood);
        let ll = pool.install(|| corpus_log_likelihood(&model, &corpus));
        assert_eq!(ll, corpus_log_likelihood(&reference, &corpus));
    }
}
