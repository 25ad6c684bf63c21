//! Lexical word alignment: a reparameterized IBM Model 2 with a diagonal
//! link prior, trained by EM.
//!
//! Generative story per target token `y_j` of a pair with source length `m`
//! and target length `n`: a link is drawn over `{NULL} ∪ {0..m-1}` with
//! `p(NULL) = p0` and `p(i) ∝ (1 - p0) · exp(-λ·|(i+1)/m - (j+1)/n|)`,
//! then `y_j` is emitted from the lexical table `t(y | x_link)`. The E-step
//! parallelizes over fixed-size sentence chunks whose partial counts merge in
//! chunk order, so trained tables are bit-identical at any thread count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, SentencePair, NULL_ID};
use crate::error::Error;
use crate::Result;

const CHUNK: usize = 512;
/// Lexical probability floor for unknown words at inference time.
const UNKNOWN_FLOOR: f64 = 1e-9;
const MODEL_SCHEMA: &str = "kdlab-align-model-1";

/// Sparse lexical translation table `t(y | x)`, one row per source id.
/// Rows are sorted by target id and each sums to 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranslationTable {
    rows: Vec<Vec<(u32, f64)>>,
}

impl TranslationTable {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, src: u32) -> &[(u32, f64)] {
        static EMPTY: &[(u32, f64)] = &[];
        self.rows.get(src as usize).map_or(EMPTY, |r| r.as_slice())
    }

    pub fn prob(&self, src: u32, tgt: u32) -> Option<f64> {
        let row = self.row(src);
        row.binary_search_by_key(&tgt, |&(t, _)| t)
            .ok()
            .map(|i| row[i].1)
    }

    /// Iterates `(src, tgt, prob)` in (src, tgt) order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |&(t, p)| (s as u32, t, p)))
    }
}

/// Trained alignment model: lexical table, diagonal tension λ, null-link mass.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub ttable: TranslationTable,
    pub tension: f64,
    pub null_prob: f64,
    known_targets: Vec<u32>,
}

impl AlignmentModel {
    pub fn new(ttable: TranslationTable, tension: f64, null_prob: f64) -> Result<Self> {
        if tension <= 0.0 {
            return Err(Error::NonPositiveTension(tension));
        }
        if !(0.0..1.0).contains(&null_prob) {
            return Err(Error::InvalidNullProb(null_prob));
        }
        let mut known: Vec<u32> = ttable.iter().map(|(_, t, _)| t).collect();
        known.sort_unstable();
        known.dedup();
        Ok(Self {
            ttable,
            tension,
            null_prob,
            known_targets: known,
        })
    }

    /// True when the target id appeared anywhere in training.
    pub fn knows_target(&self, tgt: u32) -> bool {
        self.known_targets.binary_search(&tgt).is_ok()
    }

    fn lex(&self, src: u32, tgt: u32) -> f64 {
        self.ttable.prob(src, tgt).unwrap_or(UNKNOWN_FLOOR)
    }
}

/// One link (or NULL) per target position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceAlignment {
    /// `links[j] = Some(i)` ties target position j to source position i.
    pub links: Vec<Option<u32>>,
}

impl SentenceAlignment {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// EM training configuration. Defaults follow the reference aligner:
/// λ = 4.0, p0 = 0.08, 5 iterations, add-α = 0.01.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignConfig {
    pub em_iters: usize,
    pub tension: f64,
    pub null_prob: f64,
    /// Re-estimate λ each iteration by moment matching (bisection). Off by
    /// default; the fixed-tension path has provably non-decreasing likelihood.
    pub update_tension: bool,
    pub add_alpha: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            em_iters: 5,
            tension: 4.0,
            null_prob: 0.08,
            update_tension: false,
            add_alpha: 0.01,
        }
    }
}

/// Per-iteration training record.
#[derive(Debug, Clone, Serialize)]
pub struct EmTrace {
    /// Corpus log-likelihood under the model entering each iteration.
    pub log_likelihood: Vec<f64>,
    /// Tension value entering each iteration.
    pub tension: Vec<f64>,
}

fn diagonal_weights(tension: f64, m: usize, n: usize, j: usize) -> Vec<f64> {
    let jr = (j + 1) as f64 / n as f64;
    (0..m)
        .map(|i| (-tension * ((i + 1) as f64 / m as f64 - jr).abs()).exp())
        .collect()
}

/// Unnormalized link scores for target position `j`: sources 0..m, NULL last.
fn link_scores(model: &AlignmentModel, pair: &SentencePair, j: usize) -> Vec<f64> {
    let m = pair.src.len();
    let y = pair.tgt[j];
    let weights = diagonal_weights(model.tension, m, pair.tgt.len(), j);
    let z: f64 = weights.iter().sum();
    let mut scores = Vec::with_capacity(m + 1);
    for (i, w) in weights.iter().enumerate() {
        scores.push((1.0 - model.null_prob) * w / z * model.lex(pair.src[i], y));
    }
    scores.push(model.null_prob * model.lex(NULL_ID, y));
    scores
}

/// Trains the alignment model by EM. Returns the model together with the
/// per-iteration likelihood trace (the likelihood of the model *entering*
/// each iteration, so `em_iters` values).
pub fn train_alignment(corpus: &ParallelCorpus, cfg: &AlignConfig) -> Result<(AlignmentModel, EmTrace)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.tension <= 0.0 {
        return Err(Error::NonPositiveTension(cfg.tension));
    }
    if !(0.0..1.0).contains(&cfg.null_prob) {
        return Err(Error::InvalidNullProb(cfg.null_prob));
    }

    // Support: every (source word, target word) co-occurrence; NULL co-occurs
    // with every target word. Uniform initialization over each row.
    let vs = corpus.src_vocab.len();
    let mut support: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); vs];
    for pair in &corpus.pairs {
        for &y in &pair.tgt {
            support[NULL_ID as usize].insert(y);
            for &x in &pair.src {
                support[x as usize].insert(y);
            }
        }
    }
    let rows: Vec<Vec<(u32, f64)>> = support
        .iter()
        .map(|ys| {
            let p = if ys.is_empty() { 0.0 } else { 1.0 / ys.len() as f64 };
            ys.iter().map(|&y| (y, p)).collect()
        })
        .collect();
    let mut model = AlignmentModel::new(TranslationTable { rows }, cfg.tension, cfg.null_prob)?;

    let mut trace = EmTrace {
        log_likelihood: Vec::with_capacity(cfg.em_iters),
        tension: Vec::with_capacity(cfg.em_iters),
    };

    for _ in 0..cfg.em_iters {
        let partials: Vec<EStep> = corpus
            .pairs
            .par_chunks(CHUNK)
            .map(|chunk| e_step(&model, chunk))
            .collect();
        // Merge in chunk order: results are independent of thread count.
        let mut counts: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); vs];
        let mut loglik = 0.0;
        let mut dist_sum = 0.0;
        let mut dist_mass = 0.0;
        for part in partials {
            loglik += part.loglik;
            dist_sum += part.dist_sum;
            dist_mass += part.dist_mass;
            for (x, row) in part.counts.into_iter().enumerate() {
                for (y, c) in row {
                    *counts[x].entry(y).or_insert(0.0) += c;
                }
            }
        }
        trace.log_likelihood.push(loglik);
        trace.tension.push(model.tension);

        let rows: Vec<Vec<(u32, f64)>> = counts
            .iter()
            .map(|row| {
                let total: f64 = row.values().sum();
                let denom = total + cfg.add_alpha * row.len() as f64;
                row.iter()
                    .map(|(&y, &c)| (y, (c + cfg.add_alpha) / denom))
                    .collect()
            })
            .collect();
        let tension = if cfg.update_tension {
            fit_tension(corpus, dist_sum / dist_mass.max(f64::MIN_POSITIVE))
        } else {
            model.tension
        };
        model = AlignmentModel::new(TranslationTable { rows }, tension, cfg.null_prob)?;
    }

    Ok((model, trace))
}

struct EStep {
    counts: Vec<BTreeMap<u32, f64>>,
    loglik: f64,
    dist_sum: f64,
    dist_mass: f64,
}

fn e_step(model: &AlignmentModel, pairs: &[SentencePair]) -> EStep {
    let mut counts: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); model.ttable.num_rows()];
    let mut loglik = 0.0;
    let mut dist_sum = 0.0;
    let mut dist_mass = 0.0;
    for pair in pairs {
        let m = pair.src.len();
        let n = pair.tgt.len();
        for j in 0..n {
            let scores = link_scores(model, pair, j);
            let total: f64 = scores.iter().sum();
            loglik += total.ln();
            let y = pair.tgt[j];
            let jr = (j + 1) as f64 / n as f64;
            for i in 0..m {
                let post = scores[i] / total;
                *counts[pair.src[i] as usize].entry(y).or_insert(0.0) += post;
                dist_sum += post * ((i + 1) as f64 / m as f64 - jr).abs();
                dist_mass += post;
            }
            *counts[NULL_ID as usize].entry(y).or_insert(0.0) += scores[m] / total;
        }
    }
    EStep {
        counts,
        loglik,
        dist_sum,
        dist_mass,
    }
}

/// Expected diagonal distance under the link prior alone, averaged over all
/// target positions of the corpus. Monotonically decreasing in λ.
fn prior_moment(shapes: &BTreeMap<(usize, usize), usize>, tension: f64) -> f64 {
    let mut sum = 0.0;
    let mut positions = 0usize;
    for (&(m, n), &count) in shapes {
        let mut shape_sum = 0.0;
        for j in 0..n {
            let jr = (j + 1) as f64 / n as f64;
            let mut z = 0.0;
            let mut zd = 0.0;
            for i in 0..m {
                let d = ((i + 1) as f64 / m as f64 - jr).abs();
                let w = (-tension * d).exp();
                z += w;
                zd += w * d;
            }
            shape_sum += zd / z;
        }
        sum += shape_sum * count as f64;
        positions += n * count;
    }
    sum / positions as f64
}

fn fit_tension(corpus: &ParallelCorpus, observed: f64) -> f64 {
    let mut shapes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for pair in &corpus.pairs {
        *shapes.entry((pair.src.len(), pair.tgt.len())).or_insert(0) += 1;
    }
    let (mut lo, mut hi) = (1e-3, 1e3);
    if observed >= prior_moment(&shapes, lo) {
        return lo;
    }
    if observed <= prior_moment(&shapes, hi) {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if prior_moment(&shapes, mid) > observed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hard Viterbi alignment: each target token links to the argmax of its link
/// posterior. Ties break toward the diagonal, then to the smaller source
/// index; target words unseen in training fall back to NULL.
pub fn viterbi_align(model: &AlignmentModel, pair: &SentencePair) -> SentenceAlignment {
    let m = pair.src.len();
    let n = pair.tgt.len();
    let mut links = Vec::with_capacity(n);
    for j in 0..n {
        if !model.knows_target(pair.tgt[j]) {
            links.push(None);
            continue;
        }
        let scores = link_scores(model, pair, j);
        let jr = (j + 1) as f64 / n as f64;
        let dist = |i: usize| ((i + 1) as f64 / m as f64 - jr).abs();
        // NULL loses exact ties against any source position.
        let mut best: Option<u32> = None;
        let mut best_score = scores[m];
        for (i, &s) in scores[..m].iter().enumerate() {
            let better = match best {
                _ if s > best_score => true,
                None => s == best_score,
                Some(b) => s == best_score && dist(i) < dist(b as usize),
            };
            if better {
                best = Some(i as u32);
                best_score = s;
            }
        }
        links.push(best);
    }
    SentenceAlignment { links }
}

/// Normalized link posteriors, one row per target position. Row layout is
/// `[source 0, ..., source m-1, NULL]`; every row sums to 1. Rows for target
/// words unseen in training are one-hot on NULL, matching [`viterbi_align`].
pub fn posterior_links(model: &AlignmentModel, pair: &SentencePair) -> Vec<Vec<f64>> {
    let m = pair.src.len();
    (0..pair.tgt.len())
        .map(|j| {
            if !model.knows_target(pair.tgt[j]) {
                let mut row = vec![0.0; m + 1];
                row[m] = 1.0;
                return row;
            }
            let mut row = link_scores(model, pair, j);
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            row
        })
        .collect()
}

/// Corpus log-likelihood under the model (sum over target tokens of the
/// log marginal link-and-emit probability).
pub fn corpus_log_likelihood(model: &AlignmentModel, corpus: &ParallelCorpus) -> f64 {
    let partials: Vec<f64> = corpus
        .pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|pair| {
                    (0..pair.tgt.len())
                        .map(|j| link_scores(model, pair, j).iter().sum::<f64>().ln())
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

/// Aligns every pair of the corpus (parallel, order-preserving).
pub fn align_corpus(model: &AlignmentModel, corpus: &ParallelCorpus) -> Vec<SentenceAlignment> {
    corpus
        .pairs
        .par_iter()
        .map(|pair| viterbi_align(model, pair))
        .collect()
}

/// Writes alignments in Pharaoh format: `i-j` pairs per line (0-based source
/// index i, target index j); NULL links are omitted.
pub fn write_pharaoh(alignments: &[SentenceAlignment], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for alignment in alignments {
        let mut first = true;
        for (j, link) in alignment.links.iter().enumerate() {
            if let Some(i) = link {
                if !first {
                    out.write_all(b" ").map_err(|e| Error::io(path, e))?;
                }
                out.write_all(format!("{i}-{j}").as_bytes())
                    .map_err(|e| Error::io(path, e))?;
                first = false;
            }
        }
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a Pharaoh alignment file against its corpus, producing one
/// [`SentenceAlignment`] per pair. Positions not mentioned stay NULL;
/// duplicate or out-of-range links are data errors naming the pair.
pub fn read_pharaoh(path: &Path, corpus: &ParallelCorpus) -> Result<Vec<SentenceAlignment>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    if lines.len() != corpus.len() {
        return Err(Error::AlignmentCountMismatch {
            expected: corpus.len(),
            got: lines.len(),
        });
    }
    let mut result = Vec::with_capacity(lines.len());
    for (index, (line, pair)) in lines.iter().zip(&corpus.pairs).enumerate() {
        let mut links = vec![None; pair.tgt.len()];
        for tok in line.split_whitespace() {
            let (i, j) = tok
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| Error::ParseLine {
                    path: path.to_path_buf(),
                    line: index + 1,
                    msg: format!("bad link token {tok:?}"),
                })?;
            if i >= pair.src.len() || j >= pair.tgt.len() {
                return Err(Error::AlignmentOutOfRange { index });
            }
            if links[j].is_some() {
                return Err(Error::DuplicateLink { index, position: j });
            }
            links[j] = Some(i as u32);
        }
        result.push(SentenceAlignment { links });
    }
    Ok(result)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: String,
    tension: f64,
    null_prob: f64,
    /// Sparse triples (src_id, tgt_id, prob) in (src, tgt) order.
    ttable: Vec<(u32, u32, f64)>,
}

/// Serializes the model as versioned JSON.
pub fn save_model(model: &AlignmentModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA.to_string(),
        tension: model.tension,
        null_prob: model.null_prob,
        ttable: model.ttable.iter().collect(),
    };
    let json = serde_json::to_string(&file).expect("model serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<AlignmentModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::MalformedModel {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if file.schema_version != MODEL_SCHEMA {
        return Err(Error::SchemaVersion {
            expected: MODEL_SCHEMA.to_string(),
            found: file.schema_version,
        });
    }
    let max_src = file.ttable.iter().map(|&(s, _, _)| s).max().unwrap_or(0);
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); max_src as usize + 1];
    for (s, t, p) in file.ttable {
        rows[s as usize].push((t, p));
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|&(t, _)| t);
    }
    AlignmentModel::new(TranslationTable { rows }, file.tension, file.null_prob)
}
