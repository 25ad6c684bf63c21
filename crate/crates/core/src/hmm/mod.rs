//! Synthetic HMM laboratory: random teachers with exact Bayes-optimal
//! decoders, distillation dataset construction, born-again loops, and a
//! brute-force enumeration oracle for all of the dynamic programs.

mod brute;
mod decode;
mod dp;

pub use brute::{brute_force, BruteForce, ENUMERATION_LIMIT};
pub use decode::{
    decode, distill, interpolate_select, reborn_loop, DecodeStrategy, RebornStep, RebornTrace,
};
pub use dp::{exact_seq_entropy, forward_backward, marginal_argmax, posterior_marginals, viterbi};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, SentencePair, Vocab};
use crate::error::Error;
use crate::metrics::{self, ComplexityOptions, CountSource};
use crate::rng::{self, Rng};
use crate::Result;

const HMM_SCHEMA: &str = "kdlab-hmm-1";

/// Discrete HMM over `K` hidden labels and `V` observation symbols.
/// All rows are normalized probability distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hmm {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "V")]
    pub v: usize,
    pub init: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub emit: Vec<Vec<f64>>,
}

impl Hmm {
    /// Checks shape and row normalization (1e-12 per row).
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.v == 0 {
            return Err(Error::InvalidHmmShape { k: self.k, v: self.v });
        }
        let ok = |row: &[f64], len: usize| {
            row.len() == len
                && row.iter().all(|&p| p >= 0.0)
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        };
        let valid = ok(&self.init, self.k)
            && self.trans.len() == self.k
            && self.trans.iter().all(|r| ok(r, self.k))
            && self.emit.len() == self.k
            && self.emit.iter().all(|r| ok(r, self.v));
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidHmmShape { k: self.k, v: self.v })
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct HmmFile<'a> {
            schema_version: &'a str,
            #[serde(flatten)]
            hmm: &'a Hmm,
        }
        let json = serde_json::to_string(&HmmFile {
            schema_version: HMM_SCHEMA,
            hmm: self,
        })
        .expect("hmm serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Hmm> {
        #[derive(Deserialize)]
        struct HmmFile {
            schema_version: String,
            #[serde(flatten)]
            hmm: Hmm,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: HmmFile = serde_json::from_str(&text).map_err(|e| Error::MalformedModel {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if file.schema_version != HMM_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: HMM_SCHEMA.to_string(),
                found: file.schema_version,
            });
        }
        file.hmm.validate()?;
        Ok(file.hmm)
    }
}

/// One observation sequence with its label sequence (equal lengths).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSeq {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl LabeledSeq {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// A labeled dataset with a provenance tag (`real`, `viterbi`, `tok`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmDataset {
    pub seqs: Vec<LabeledSeq>,
    pub provenance: String,
    pub k: usize,
    pub v: usize,
}

impl HmmDataset {
    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.seqs.iter().map(|s| s.len()).sum()
    }

    /// Checks that every symbol/label is in range.
    pub fn validate(&self) -> Result<()> {
        if self.seqs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (index, seq) in self.seqs.iter().enumerate() {
            if let Some(&symbol) = seq.x.iter().find(|&&s| s >= self.v) {
                return Err(Error::SymbolOutOfRange {
                    index,
                    symbol,
                    v: self.v,
                });
            }
            if let Some(&label) = seq.y.iter().find(|&&l| l >= self.k) {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    k: self.k,
                });
            }
        }
        Ok(())
    }

    /// Re-encodes as a parallel corpus of integer tokens (x side = source),
    /// directly consumable by the corpus/metrics modules with identity
    /// alignments.
    pub fn to_parallel_corpus(&self) -> ParallelCorpus {
        let mut src_vocab = Vocab::with_null();
        let mut tgt_vocab = Vocab::new();
        let pairs = self
            .seqs
            .iter()
            .map(|seq| SentencePair {
                src: seq.x.iter().map(|s| src_vocab.add_occurrence(&s.to_string())).collect(),
                tgt: seq.y.iter().map(|l| tgt_vocab.add_occurrence(&l.to_string())).collect(),
            })
            .collect();
        ParallelCorpus {
            pairs,
            src_vocab,
            tgt_vocab,
        }
    }

    /// Writes one `x0 x1 ... ||| y0 y1 ...` line per sequence.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for seq in &self.seqs {
            let xs: Vec<String> = seq.x.iter().map(|s| s.to_string()).collect();
            let ys: Vec<String> = seq.y.iter().map(|l| l.to_string()).collect();
            writeln!(out, "{} ||| {}", xs.join(" "), ys.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a dataset written by [`save`](HmmDataset::save); `K`/`V` are
    /// inferred as one past the largest label/symbol seen.
    pub fn load(path: &Path, provenance: &str) -> Result<HmmDataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut seqs = Vec::new();
        let (mut k, mut v) = (0usize, 0usize);
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                msg,
            };
            let (xs, ys) = line
                .split_once("|||")
                .ok_or_else(|| parse_err("missing ||| separator".into()))?;
            let parse_side = |side: &str| -> std::result::Result<Vec<usize>, Error> {
                side.split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
                    .collect()
            };
            let x = parse_side(xs)?;
            let y = parse_side(ys)?;
            if x.is_empty() || y.is_empty() {
                return Err(parse_err("empty side".into()));
            }
            if x.len() != y.len() {
                return Err(parse_err(format!(
                    "side lengths differ: {} vs {}",
                    x.len(),
                    y.len()
                )));
            }
            v = v.max(x.iter().max().unwrap() + 1);
            k = k.max(y.iter().max().unwrap() + 1);
            seqs.push(LabeledSeq { x, y });
        }
        if seqs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(HmmDataset {
            seqs,
            provenance: provenance.to_string(),
            k,
            v,
        })
    }
}

fn normalized_row(rng: &mut Rng, len: usize, bound: f64) -> Vec<f64> {
    // Uniform over (0, bound]: 1 - u maps [0,1) onto (0,1].
    let mut row: Vec<f64> = (0..len).map(|_| (1.0 - rng.random::<f64>()) * bound).collect();
    let sum: f64 = row.iter().sum();
    for w in &mut row {
        *w /= sum;
    }
    row
}

/// Builds a random HMM: raw initial/transition weights uniform in `(0, a]`,
/// emission weights uniform in `(0, b]`, each row normalized. Deterministic
/// per seed.
pub fn random_hmm(k: usize, v: usize, a: f64, b: f64, rng_seed: u64) -> Result<Hmm> {
    if k == 0 || v == 0 {
        return Err(Error::InvalidHmmShape { k, v });
    }
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::InvalidSamplingBounds { a, b });
    }
    let mut rng = rng::stream_rng(rng_seed, 0);
    let init = normalized_row(&mut rng, k, a);
    let trans = (0..k).map(|_| normalized_row(&mut rng, k, a)).collect();
    let emit = (0..k).map(|_| normalized_row(&mut rng, v, b)).collect();
    let hmm = Hmm {
        k,
        v,
        init,
        trans,
        emit,
    };
    hmm.validate()?;
    Ok(hmm)
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Ancestral sampling of `n` labeled sequences; each sequence draws its
/// length uniformly from `[len_range.0, len_range.1]` and then samples
/// `y_1 ~ init`, `y_t ~ trans[y_{t-1}]`, `x_t ~ emit[y_t]`. Per-sequence RNG
/// streams derive from `(rng_seed, index)`, so results are reproducible and
/// independent of evaluation order.
pub fn sample_dataset(hmm: &Hmm, n: usize, len_range: (usize, usize), rng_seed: u64) -> Result<HmmDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (lo, hi) = len_range;
    if lo < 1 || lo > hi {
        return Err(Error::InvalidLengthRange { lo, hi });
    }
    let seqs = (0..n)
        .map(|i| {
            let mut rng = rng::stream_rng(rng_seed, i as u64);
            let t = rng.random_range(lo..=hi);
            let mut x = Vec::with_capacity(t);
            let mut y = Vec::with_capacity(t);
            let mut state = sample_categorical(&hmm.init, &mut rng);
            for step in 0..t {
                if step > 0 {
                    state = sample_categorical(&hmm.trans[state], &mut rng);
                }
                y.push(state);
                x.push(sample_categorical(&hmm.emit[state], &mut rng));
            }
            LabeledSeq { x, y }
        })
        .collect();
    Ok(HmmDataset {
        seqs,
        provenance: "real".to_string(),
        k: hmm.k,
        v: hmm.v,
    })
}

/// Supervised maximum-likelihood fit with add-alpha smoothing: labels are
/// observed, so init/trans/emit come from relative frequencies. Rows with no
/// observations fall back to uniform.
pub fn fit_supervised(dataset: &HmmDataset, smoothing_alpha: f64) -> Result<Hmm> {
    dataset.validate()?;
    let (k, v) = (dataset.k, dataset.v);
    let mut init = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    let mut emit = vec![vec![0.0; v]; k];
    for seq in &dataset.seqs {
        init[seq.y[0]] += 1.0;
        for t in 1..seq.len() {
            trans[seq.y[t - 1]][seq.y[t]] += 1.0;
        }
        for (&label, &symbol) in seq.y.iter().zip(&seq.x) {
            emit[label][symbol] += 1.0;
        }
    }
    let normalize = |row: &[f64], alpha: f64| -> Vec<f64> {
        let total: f64 = row.iter().sum();
        let denom = total + alpha * row.len() as f64;
        if denom <= 0.0 {
            vec![1.0 / row.len() as f64; row.len()]
        } else {
            row.iter().map(|&c| (c + alpha) / denom).collect()
        }
    };
    let hmm = Hmm {
        k,
        v,
        init: normalize(&init, smoothing_alpha),
        trans: trans.iter().map(|r| normalize(r, smoothing_alpha)).collect(),
        emit: emit.iter().map(|r| normalize(r, smoothing_alpha)).collect(),
    };
    hmm.validate()?;
    Ok(hmm)
}

/// Complexity `C(d)` of a labeled dataset under identity alignments
/// (position `t` of `x` aligned to position `t` of `y`), in nats.
pub fn dataset_complexity(dataset: &HmmDataset) -> Result<f64> {
    let corpus = dataset.to_parallel_corpus();
    let counts = metrics::lex_counts(&corpus, CountSource::Identity)?;
    Ok(metrics::complexity(&counts, &ComplexityOptions::default())?.complexity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    #[test]
    fn single_state_hmm_is_deterministic() {
        let hmm = random_hmm(1, 1, 1.0, 1.0, 7).unwrap();
        assert_eq!(hmm.init, vec![1.0]);
        assert_eq!(hmm.trans, vec![vec![1.0]]);
        assert_eq!(hmm.emit, vec![vec![1.0]]);
    }

    #[test]
    fn same_seed_same_hmm() {
        let a = random_hmm(4, 6, 1.0, 0.5, 123).unwrap();
        let b = random_hmm(4, 6, 1.0, 0.5, 123).unwrap();
        assert_eq!(a, b);
        let c = random_hmm(4, 6, 1.0, 0.5, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rows_normalize_over_many_draws() {
        for seed in 0..1000 {
            let hmm = random_hmm(3, 4, 2.0, 0.25, seed).unwrap();
            hmm.validate().unwrap();
            // strict positivity per the (0, a] sampling rule
            assert!(hmm.init.iter().all(|&p| p > 0.0));
            assert!(hmm.trans.iter().flatten().all(|&p| p > 0.0));
            assert!(hmm.emit.iter().flatten().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn invalid_shapes_and_bounds_error() {
        assert!(matches!(random_hmm(0, 3, 1.0, 1.0, 0), Err(Error::InvalidHmmShape { .. })));
        assert!(matches!(
            random_hmm(2, 2, 0.0, 1.0, 0),
            Err(Error::InvalidSamplingBounds { .. })
        ));
    }

    #[test]
    fn degenerate_sampling() {
        let hmm = random_hmm(1, 1, 1.0, 1.0, 3).unwrap();
        let ds = sample_dataset(&hmm, 5, (2, 4), 9).unwrap();
        for seq in &ds.seqs {
            assert!(seq.x.iter().all(|&s| s == 0));
            assert!(seq.y.iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let hmm = random_hmm(3, 5, 1.0, 1.0, 11).unwrap();
        let a = sample_dataset(&hmm, 50, (4, 10), 21).unwrap();
        let b = sample_dataset(&hmm, 50, (4, 10), 21).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            sample_dataset(&hmm, 5, (3, 2), 0),
            Err(Error::InvalidLengthRange { .. })
        ));
    }

    #[test]
    fn empirical_initial_frequencies_match() {
        // Multinomial check: first labels should track init within 3σ.
        let hmm = random_hmm(5, 10, 1.0, 1.0, 42).unwrap();
        let n = 50_000;
        let ds = sample_dataset(&hmm, n, (4, 10), 1).unwrap();
        let mut freq = vec![0.0; hmm.k];
        for seq in &ds.seqs {
            freq[seq.y[0]] += 1.0;
        }
        for (k, &p) in hmm.init.iter().enumerate() {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let diff = (freq[k] / n as f64 - p).abs();
            assert!(diff <= 3.0 * sigma, "state {k}: diff {diff} > 3σ {}", 3.0 * sigma);
        }
    }

    #[test]
    fn supervised_fit_recovers_deterministic_chain() {
        // Cyclic deterministic HMM with one-hot emissions.
        let hmm = Hmm {
            k: 3,
            v: 3,
            init: vec![1.0, 0.0, 0.0],
            trans: vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
            emit: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        };
        let ds = sample_dataset(&hmm, 200, (4, 9), 5).unwrap();
        let fit = fit_supervised(&ds, 0.0).unwrap();
        assert_eq!(fit.init, hmm.init);
        assert_eq!(fit.trans, hmm.trans);
        assert_eq!(fit.emit, hmm.emit);
    }

    #[test]
    fn supervised_fit_smoothing_gives_positive_rows() {
        let hmm = random_hmm(3, 4, 1.0, 1.0, 2).unwrap();
        let ds = sample_dataset(&hmm, 20, (3, 6), 3).unwrap();
        let fit = fit_supervised(&ds, 0.5).unwrap();
        fit.validate().unwrap();
        assert!(fit.trans.iter().flatten().all(|&p| p > 0.0));
        assert!(fit.emit.iter().flatten().all(|&p| p > 0.0));
    }

    #[test]
    fn supervised_fit_consistency_at_large_n() {
        let hmm = random_hmm(4, 6, 1.0, 1.0, 77).unwrap();
        let ds = sample_dataset(&hmm, 100_000, (4, 10), 78).unwrap();
        let fit = fit_supervised(&ds, 0.0).unwrap();
        let linf = hmm
            .trans
            .iter()
            .flatten()
            .zip(fit.trans.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(linf <= 0.02, "L∞(trans) = {linf}");
    }

    #[test]
    fn dataset_file_round_trip() {
        let hmm = random_hmm(3, 5, 1.0, 1.0, 6).unwrap();
        let ds = sample_dataset(&hmm, 25, (2, 7), 8).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.txt");
        ds.save(&path).unwrap();
        let back = HmmDataset::load(&path, "real").unwrap();
        assert_eq!(ds.seqs, back.seqs);
        assert!(back.k <= hmm.k && back.v <= hmm.v);
    }

    #[test]
    fn dataset_load_rejects_ragged_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.txt");
        std::fs::write(&path, "0 1 ||| 0\n").unwrap();
        assert!(matches!(
            HmmDataset::load(&path, "real"),
            Err(Error::ParseLine { line: 1, .. })
        ));
    }

    #[test]
    fn parallel_corpus_bridge_counts_identity() {
        let ds = HmmDataset {
            seqs: vec![
                LabeledSeq {
                    x: vec![0, 1],
                    y: vec![1, 0],
                },
                LabeledSeq {
                    x: vec![0],
                    y: vec![1],
                },
            ],
            provenance: "real".into(),
            k: 2,
            v: 2,
        };
        let corpus = ds.to_parallel_corpus();
        assert_eq!(corpus.len(), 2);
        let c = dataset_complexity(&ds).unwrap();
        // symbol 0 -> always label 1, symbol 1 -> always label 0: C = 0
        assert_relative_eq!(c, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hmm_json_round_trip() {
        let hmm = random_hmm(4, 7, 1.0, 0.3, 15).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("hmm.json");
        hmm.save(&path).unwrap();
        let back = Hmm::load(&path).unwrap();
        assert_eq!(hmm, back);
    }
}
