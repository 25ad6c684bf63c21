//! Quantitative measures of parallel data: corpus complexity (mean
//! conditional entropy of aligned target words), faithfulness (mean KL
//! divergence of lexical distributions against a reference corpus),
//! per-sentence conditional entropy with histograms, and the chunk-based
//! fuzzy reordering score.
//!
//! All entropies and divergences are in nats unless `log2` is requested.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::align::SentenceAlignment;
use crate::corpus::{ParallelCorpus, SentencePair, Vocab, NULL_ID};
use crate::error::Error;
use crate::Result;

/// Expected lexical co-occurrence counts: for each source word, how often
/// (possibly fractionally) each target word was aligned to it. Carries the
/// vocabularies so distributions can be compared across corpora by token.
#[derive(Debug, Clone)]
pub struct LexCounts {
    rows: Vec<BTreeMap<u32, f64>>,
    totals: Vec<f64>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
}

impl LexCounts {
    pub fn row(&self, src: u32) -> &BTreeMap<u32, f64> {
        &self.rows[src as usize]
    }

    pub fn total(&self, src: u32) -> f64 {
        self.totals[src as usize]
    }

    pub fn num_source_words(&self) -> usize {
        self.rows.len()
    }
}

/// How target tokens are attributed to source words.
pub enum CountSource<'a> {
    /// One full count per hard link; NULL links count under the null word.
    Viterbi(&'a [SentenceAlignment]),
    /// Fractional counts from link posterior rows `[T_y][T_x + 1]`.
    Posterior(&'a [Vec<Vec<f64>>]),
    /// Position-to-position links; requires equal lengths per pair.
    Identity,
}

/// Accumulates lexical counts for a corpus under the given attribution mode.
pub fn lex_counts(corpus: &ParallelCorpus, source: CountSource) -> Result<LexCounts> {
    let vs = corpus.src_vocab.len();
    let mut rows: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); vs];
    match source {
        CountSource::Viterbi(alignments) => {
            if alignments.len() != corpus.len() {
                return Err(Error::AlignmentCountMismatch {
                    expected: corpus.len(),
                    got: alignments.len(),
                });
            }
            for (pair, alignment) in corpus.pairs.iter().zip(alignments) {
                for (j, &y) in pair.tgt.iter().enumerate() {
                    let x = match alignment.links[j] {
                        Some(i) => pair.src[i as usize],
                        None => NULL_ID,
                    };
                    *rows[x as usize].entry(y).or_insert(0.0) += 1.0;
                }
            }
        }
        CountSource::Posterior(posteriors) => {
            if posteriors.len() != corpus.len() {
                return Err(Error::AlignmentCountMismatch {
                    expected: corpus.len(),
                    got: posteriors.len(),
                });
            }
            for (pair, rows_j) in corpus.pairs.iter().zip(posteriors) {
                let m = pair.src.len();
                for (j, &y) in pair.tgt.iter().enumerate() {
                    let row = &rows_j[j];
                    for i in 0..m {
                        if row[i] > 0.0 {
                            *rows[pair.src[i] as usize].entry(y).or_insert(0.0) += row[i];
                        }
                    }
                    if row[m] > 0.0 {
                        *rows[NULL_ID as usize].entry(y).or_insert(0.0) += row[m];
                    }
                }
            }
        }
        CountSource::Identity => {
            for (index, pair) in corpus.pairs.iter().enumerate() {
                if pair.src.len() != pair.tgt.len() {
                    return Err(Error::IdentityLengthMismatch {
                        index,
                        src_len: pair.src.len(),
                        tgt_len: pair.tgt.len(),
                    });
                }
                for (&x, &y) in pair.src.iter().zip(&pair.tgt) {
                    *rows[x as usize].entry(y).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    let totals = rows.iter().map(|r| r.values().sum()).collect();
    Ok(LexCounts {
        rows,
        totals,
        src_vocab: corpus.src_vocab.clone(),
        tgt_vocab: corpus.tgt_vocab.clone(),
    })
}

fn row_entropy(row: &BTreeMap<u32, f64>, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in row.values() {
        if c > 0.0 {
            let p = c / total;
            h -= p * p.ln();
        }
    }
    h.max(0.0)
}

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityOptions {
    /// Source words with total (possibly fractional) count below this are
    /// left out of the average.
    pub min_count: f64,
    /// Leave the null pseudo-word out of the average (it is not lexical).
    pub exclude_null: bool,
    /// Report in bits instead of nats.
    pub log2: bool,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        Self {
            min_count: 1.0,
            exclude_null: true,
            log2: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WordEntropy {
    pub token: String,
    pub total: f64,
    pub entropy: f64,
}

/// Per-sentence conditional entropy plus a count of source tokens that had
/// no lexical counts (they contribute zero).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SentenceEntropy {
    pub value: f64,
    pub unknown_tokens: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    /// Corpus complexity: unweighted mean of per-word entropies.
    pub complexity: f64,
    pub counted_vocab: usize,
    pub per_word: Vec<WordEntropy>,
    pub options: ComplexityOptions,
    /// Filled by [`with_sentences`](ComplexityReport::with_sentences).
    pub sentences: Vec<SentenceEntropy>,
    pub histogram: Option<Histogram>,
}

impl ComplexityReport {
    pub const SCHEMA_VERSION: &'static str = "kdlab-complexity-1";

    /// Adds per-sentence entropies and their histogram.
    pub fn with_sentences(mut self, corpus: &ParallelCorpus, counts: &LexCounts, bins: usize) -> Result<Self> {
        self.sentences = corpus
            .pairs
            .iter()
            .map(|p| {
                let mut s = sentence_entropy(p, counts);
                if self.options.log2 {
                    s.value /= LN_2;
                }
                s
            })
            .collect();
        let values: Vec<f64> = self.sentences.iter().map(|s| s.value).collect();
        let hi = values.iter().cloned().fold(0.0_f64, f64::max);
        self.histogram = Some(histogram(&values, bins, (0.0, hi.max(1e-9)))?);
        Ok(self)
    }
}

/// Corpus complexity: for every counted source word, the entropy of its
/// aligned-target distribution; the corpus value is the unweighted mean.
pub fn complexity(counts: &LexCounts, opts: &ComplexityOptions) -> Result<ComplexityReport> {
    let mut per_word = Vec::new();
    for (id, row) in counts.rows.iter().enumerate() {
        if opts.exclude_null && id as u32 == NULL_ID {
            continue;
        }
        let total = counts.totals[id];
        if total <= 0.0 || total < opts.min_count {
            continue;
        }
        let mut entropy = row_entropy(row, total);
        if opts.log2 {
            entropy /= LN_2;
        }
        per_word.push(WordEntropy {
            token: counts.src_vocab.token(id as u32).to_string(),
            total,
            entropy,
        });
    }
    if per_word.is_empty() {
        return Err(Error::NoCountedWords);
    }
    let complexity = per_word.iter().map(|w| w.entropy).sum::<f64>() / per_word.len() as f64;
    Ok(ComplexityReport {
        complexity,
        counted_vocab: per_word.len(),
        per_word,
        options: opts.clone(),
        sentences: Vec::new(),
        histogram: None,
    })
}

/// Conditional entropy of one sentence: the sum over source tokens of the
/// entropy of their aligned-target distribution (nats). Source tokens with
/// no counts contribute zero and are tallied in `unknown_tokens`.
pub fn sentence_entropy(pair: &SentencePair, counts: &LexCounts) -> SentenceEntropy {
    let mut value = 0.0;
    let mut unknown = 0;
    for &x in &pair.src {
        let idx = x as usize;
        if idx >= counts.rows.len() || counts.totals[idx] <= 0.0 {
            unknown += 1;
            continue;
        }
        value += row_entropy(&counts.rows[idx], counts.totals[idx]);
    }
    SentenceEntropy {
        value,
        unknown_tokens: unknown,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FaithfulnessOptions {
    /// Additive smoothing applied to both distributions over the union of
    /// their supports before the KL term. With `alpha = 0` the divergence is
    /// infinite whenever the altered corpus drops a translation.
    pub alpha: f64,
    pub exclude_null: bool,
    pub log2: bool,
}

impl Default for FaithfulnessOptions {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            exclude_null: true,
            log2: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WordKl {
    pub token: String,
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaithfulnessReport {
    /// Mean per-word KL divergence over the evaluated vocabulary.
    pub faithfulness: f64,
    pub evaluated_words: usize,
    /// Source words present on only one side.
    pub skipped_words: usize,
    pub per_word: Vec<WordKl>,
    pub options: FaithfulnessOptions,
}

impl FaithfulnessReport {
    pub const SCHEMA_VERSION: &'static str = "kdlab-faithfulness-1";
}

fn token_distribution<'a>(counts: &'a LexCounts, id: u32) -> BTreeMap<&'a str, f64> {
    let total = counts.total(id);
    counts
        .row(id)
        .iter()
        .filter(|(_, &c)| c > 0.0)
        .map(|(&y, &c)| (counts.tgt_vocab.token(y), c / total))
        .collect()
}

/// Faithfulness of an altered corpus to the reference: for every source word
/// present in both, KL(p_real(·|x) ‖ p_alt(·|x)) with both distributions
/// add-alpha smoothed over the union of their supports, averaged unweighted.
/// Distributions are matched by token, so the corpora may use different ids.
pub fn faithfulness(
    real: &LexCounts,
    alt: &LexCounts,
    opts: &FaithfulnessOptions,
) -> Result<FaithfulnessReport> {
    let mut per_word = Vec::new();
    let mut skipped = 0usize;
    for (id, _) in real.rows.iter().enumerate() {
        let id = id as u32;
        if opts.exclude_null && id == NULL_ID {
            continue;
        }
        if real.total(id) <= 0.0 {
            continue;
        }
        let token = real.src_vocab.token(id);
        let alt_id = match alt.src_vocab.id(token) {
            Some(a) if alt.total(a) > 0.0 => a,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let p_real = token_distribution(real, id);
        let p_alt = token_distribution(alt, alt_id);
        let mut union: Vec<&str> = p_real.keys().chain(p_alt.keys()).copied().collect();
        union.sort_unstable();
        union.dedup();
        let norm = 1.0 + opts.alpha * union.len() as f64;
        let mut kl = 0.0;
        for y in &union {
            let qr = (p_real.get(y).copied().unwrap_or(0.0) + opts.alpha) / norm;
            let qd = (p_alt.get(y).copied().unwrap_or(0.0) + opts.alpha) / norm;
            if qr > 0.0 {
                kl += if qd > 0.0 {
                    qr * (qr / qd).ln()
                } else {
                    f64::INFINITY
                };
            }
        }
        let mut kl = kl.max(0.0);
        if opts.log2 {
            kl /= LN_2;
        }
        per_word.push(WordKl {
            token: token.to_string(),
            kl,
        });
    }
    // Words only in the altered corpus are skipped too.
    for (id, _) in alt.rows.iter().enumerate() {
        let id = id as u32;
        if opts.exclude_null && id == NULL_ID {
            continue;
        }
        if alt.total(id) > 0.0 {
            let token = alt.src_vocab.token(id);
            match real.src_vocab.id(token) {
                Some(r) if real.total(r) > 0.0 => {}
                _ => skipped += 1,
            }
        }
    }
    if per_word.is_empty() {
        return Err(Error::NoCountedWords);
    }
    let faithfulness = per_word.iter().map(|w| w.kl).sum::<f64>() / per_word.len() as f64;
    Ok(FaithfulnessReport {
        faithfulness,
        evaluated_words: per_word.len(),
        skipped_words: skipped,
        per_word,
        options: opts.clone(),
    })
}

/// Fuzzy reordering score of one alignment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FuzzyScore {
    /// 1 = fully monotone, 0 = fully reversed.
    pub score: f64,
    pub chunks: usize,
    /// Number of aligned (non-NULL) target positions.
    pub aligned: usize,
}

/// Chunk-based monotonicity: walk linked source indices in target order and
/// start a new chunk whenever the next index is neither a repeat nor an
/// increment of the current one; the score is `1 - (C - 1)/(M - 1)`.
pub fn fuzzy_reordering(alignment: &SentenceAlignment) -> FuzzyScore {
    let s: Vec<u32> = alignment.links.iter().filter_map(|l| *l).collect();
    let m = s.len();
    if m <= 1 {
        return FuzzyScore {
            score: 1.0,
            chunks: m,
            aligned: m,
        };
    }
    let mut chunks = 1usize;
    for k in 0..m - 1 {
        if s[k + 1] != s[k] && s[k + 1] != s[k] + 1 {
            chunks += 1;
        }
    }
    FuzzyScore {
        score: 1.0 - (chunks - 1) as f64 / (m - 1) as f64,
        chunks,
        aligned: m,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReorderingReport {
    pub mean_score: f64,
    pub per_sentence: Vec<FuzzyScore>,
}

impl ReorderingReport {
    pub const SCHEMA_VERSION: &'static str = "kdlab-reordering-1";
}

pub fn reordering_report(alignments: &[SentenceAlignment]) -> Result<ReorderingReport> {
    if alignments.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let per_sentence: Vec<FuzzyScore> = alignments.iter().map(fuzzy_reordering).collect();
    let mean_score = per_sentence.iter().map(|f| f.score).sum::<f64>() / per_sentence.len() as f64;
    Ok(ReorderingReport {
        mean_score,
        per_sentence,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Normalized so the integral over the range equals the in-range fraction.
    pub densities: Vec<f64>,
    pub total_values: usize,
    pub in_range: usize,
}

impl Histogram {
    pub const SCHEMA_VERSION: &'static str = "kdlab-histogram-1";

    pub fn bin_center(&self, i: usize) -> f64 {
        let width = (self.hi - self.lo) / self.bins as f64;
        self.lo + (i as f64 + 0.5) * width
    }
}

/// Fixed-width histogram over `[lo, hi]`; the final bin is closed at `hi`.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::ZeroBins);
    }
    if !(lo < hi) {
        return Err(Error::InvertedRange { lo, hi });
    }
    let mut counts = vec![0u64; bins];
    let mut in_range = 0usize;
    for &v in values {
        if v < lo || v > hi || v.is_nan() {
            continue;
        }
        let idx = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
        in_range += 1;
    }
    let width = (hi - lo) / bins as f64;
    let densities = counts
        .iter()
        .map(|&c| {
            if values.is_empty() {
                0.0
            } else {
                c as f64 / (values.len() as f64 * width)
            }
        })
        .collect();
    Ok(Histogram {
        bins,
        lo,
        hi,
        counts,
        densities,
        total_values: values.len(),
        in_range,
    })
}
