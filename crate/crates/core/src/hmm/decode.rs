//! Decoding strategies over an HMM teacher and the dataset-level operations
//! built on them: distillation (target replacement), sequence-level
//! interpolation against a reference, and the born-again refit loop.
//!
//! Stepwise strategies factor the posterior exactly:
//! `p(y_t | y_{t-1}, x) ∝ trans[y_{t-1}][y_t] · emit[y_t][x_t] · β_t(y_t)`
//! (with the init row at t = 1), where β are the scaled backward messages.
//! Greedy takes the per-step argmax; beam keeps at most one hypothesis per
//! end label scored by the exact prefix log-probability given x, so a beam of
//! width K is exact and equals Viterbi. Sampling draws from the exact
//! posterior by forward-filter/backward-sampling; top-k sampling renormalizes
//! the k most probable entries of each step conditional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dp::{argmax_smallest, forward_backward, marginal_argmax, viterbi, ForwardBackward};
use super::{dataset_complexity, fit_supervised, sample_categorical, Hmm, HmmDataset, LabeledSeq};
use crate::error::Error;
use crate::rng::{self, Rng};
use crate::Result;

/// How distillation labels are produced from the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeStrategy {
    /// Sequence-level Bayes classifier: the posterior mode.
    Viterbi,
    /// Token-level Bayes classifier: per-position argmax of the marginals.
    MarginalArgmax,
    /// Per-step argmax of the exact conditional.
    Greedy,
    /// Beam search with one hypothesis per end label; `Beam(K)` is exact.
    Beam(usize),
    /// Exact posterior sample (forward-filter, backward-sample).
    Sample,
    /// Sample each step from the renormalized top-k of the conditional.
    TopkSample(usize),
}

impl DecodeStrategy {
    /// Validates width bounds against the teacher.
    pub fn validate(&self, hmm: &Hmm) -> Result<()> {
        match *self {
            DecodeStrategy::Beam(w) if w == 0 => Err(Error::ZeroBeamWidth),
            DecodeStrategy::TopkSample(k) if k == 0 || k > hmm.k => {
                Err(Error::InvalidTopK { got: k, k: hmm.k })
            }
            _ => Ok(()),
        }
    }

    /// Whether decoding consumes randomness.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, DecodeStrategy::Sample | DecodeStrategy::TopkSample(_))
    }

    /// Provenance tag used on distilled datasets.
    pub fn tag(&self) -> String {
        match *self {
            DecodeStrategy::Viterbi => "viterbi".into(),
            DecodeStrategy::MarginalArgmax => "tok".into(),
            DecodeStrategy::Greedy => "greedy".into(),
            DecodeStrategy::Beam(w) => format!("beam:{w}"),
            DecodeStrategy::Sample => "sample".into(),
            DecodeStrategy::TopkSample(k) => format!("topk:{k}"),
        }
    }
}

/// Step conditionals backed by one forward-backward pass.
struct Conditionals<'a> {
    hmm: &'a Hmm,
    x: &'a [usize],
    fb: ForwardBackward,
}

impl<'a> Conditionals<'a> {
    fn new(hmm: &'a Hmm, x: &'a [usize]) -> Self {
        Self {
            hmm,
            x,
            fb: forward_backward(hmm, x),
        }
    }

    /// Normalized `p(y_t | y_{t-1} = prev, x)`; `prev` is `None` at t = 0.
    fn step(&self, t: usize, prev: Option<usize>) -> Vec<f64> {
        let base: &[f64] = match prev {
            None => &self.hmm.init,
            Some(p) => &self.hmm.trans[p],
        };
        let mut row: Vec<f64> = (0..self.hmm.k)
            .map(|s| base[s] * self.hmm.emit[s][self.x[t]] * self.fb.beta[t][s])
            .collect();
        let sum: f64 = row.iter().sum();
        // zero mass means an impossible prefix; leave the zeros in place
        if sum > 0.0 {
            for v in &mut row {
                *v /= sum;
            }
        }
        row
    }
}

fn greedy(hmm: &Hmm, x: &[usize]) -> Vec<usize> {
    let cond = Conditionals::new(hmm, x);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = None;
    for t in 0..x.len() {
        let row = cond.step(t, prev);
        let s = argmax_smallest(&row);
        out.push(s);
        prev = Some(s);
    }
    out
}

#[derive(Clone)]
struct Hypothesis {
    path: Vec<usize>,
    /// Joint prefix log-probability `ln p(y_{1..t}, x_{1..t})`, accumulated
    /// with the same operations as the Viterbi recurrence.
    joint: f64,
    /// Exact prefix log-posterior `ln p(y_{1..t} | x)`.
    cond: f64,
}

/// All surviving beam hypotheses after the final step, best first. At most
/// one hypothesis per end label survives each step. Within an end label the
/// conditional and joint prefix scores rank identically (they differ by a
/// factor that depends only on the end label and `x`), so the per-label
/// winner uses the joint recurrence bit-for-bit as Viterbi does; pruning to
/// `width` ranks across labels by the exact prefix posterior. With
/// `width >= K` nothing is pruned and the search is exact.
fn beam_all(hmm: &Hmm, x: &[usize], width: usize) -> Vec<Hypothesis> {
    let cond = Conditionals::new(hmm, x);
    let k = hmm.k;
    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    // slot per end label, rebuilt each step
    let mut beam: Vec<Option<Hypothesis>> = vec![None; k];
    for t in 0..x.len() {
        let mut next: Vec<Option<Hypothesis>> = vec![None; k];
        for s in 0..k {
            let (prev, joint_base) = if t == 0 {
                (None, ln(hmm.init[s]))
            } else {
                // smallest argmax predecessor, as in the Viterbi backtrace
                let mut best_prev = None;
                let mut best = f64::NEG_INFINITY;
                for (p, slot) in beam.iter().enumerate() {
                    if let Some(hyp) = slot {
                        let cand = hyp.joint + ln(hmm.trans[p][s]);
                        if cand > best || best_prev.is_none() {
                            best = cand;
                            best_prev = Some(p);
                        }
                    }
                }
                match best_prev {
                    Some(p) => (Some(p), best),
                    None => continue,
                }
            };
            let joint = joint_base + ln(hmm.emit[s][x[t]]);
            let row = cond.step(t, prev);
            let prev_cond = prev.map_or(0.0, |p| beam[p].as_ref().unwrap().cond);
            let cond_score = prev_cond + ln(row[s]);
            let mut path = prev.map_or_else(Vec::new, |p| beam[p].as_ref().unwrap().path.clone());
            path.push(s);
            next[s] = Some(Hypothesis {
                path,
                joint,
                cond: cond_score,
            });
        }
        if width < k {
            // prune across end labels by prefix posterior, label asc on ties
            let mut order: Vec<usize> = (0..k).filter(|&s| next[s].is_some()).collect();
            order.sort_by(|&a, &b| {
                let ca = next[a].as_ref().unwrap().cond;
                let cb = next[b].as_ref().unwrap().cond;
                cb.partial_cmp(&ca).unwrap().then(a.cmp(&b))
            });
            for &s in order.iter().skip(width) {
                next[s] = None;
            }
        }
        beam = next;
    }
    // final ranking: joint (== posterior up to a shared constant) desc,
    // end label asc — the same winner Viterbi's final scan picks
    let mut survivors: Vec<Hypothesis> = beam.into_iter().flatten().collect();
    survivors.sort_by(|a, b| {
        b.joint
            .partial_cmp(&a.joint)
            .unwrap()
            .then_with(|| a.path.last().cmp(&b.path.last()))
    });
    survivors
}

fn beam_decode(hmm: &Hmm, x: &[usize], width: usize) -> Vec<usize> {
    beam_all(hmm, x, width)
        .into_iter()
        .next()
        .expect("beam never empties")
        .path
}

/// Forward-filter/backward-sample: an exact draw from `p(y | x)`.
fn posterior_sample(hmm: &Hmm, x: &[usize], rng: &mut Rng) -> Vec<usize> {
    let fb = forward_backward(hmm, x);
    let t_len = x.len();
    let mut out = vec![0usize; t_len];
    out[t_len - 1] = sample_categorical(&fb.gamma[t_len - 1], rng);
    for t in (0..t_len - 1).rev() {
        let next = out[t + 1];
        let mut row: Vec<f64> = (0..hmm.k)
            .map(|s| fb.alpha[t][s] * hmm.trans[s][next])
            .collect();
        let sum: f64 = row.iter().sum();
        for v in &mut row {
            *v /= sum;
        }
        out[t] = sample_categorical(&row, rng);
    }
    out
}

fn topk_sample(hmm: &Hmm, x: &[usize], k_top: usize, rng: &mut Rng) -> Vec<usize> {
    let cond = Conditionals::new(hmm, x);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = None;
    for t in 0..x.len() {
        let row = cond.step(t, prev);
        // order by probability descending, label ascending on ties
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        order.truncate(k_top);
        let mass: f64 = order.iter().map(|&s| row[s]).sum();
        let probs: Vec<f64> = order.iter().map(|&s| row[s] / mass).collect();
        let s = order[sample_categorical(&probs, rng)];
        out.push(s);
        prev = Some(s);
    }
    out
}

/// Decodes one sequence with the given strategy. Deterministic strategies
/// ignore the RNG.
pub fn decode(hmm: &Hmm, x: &[usize], strategy: &DecodeStrategy, rng: &mut Rng) -> Vec<usize> {
    match *strategy {
        DecodeStrategy::Viterbi => viterbi(hmm, x),
        DecodeStrategy::MarginalArgmax => marginal_argmax(hmm, x),
        DecodeStrategy::Greedy => greedy(hmm, x),
        DecodeStrategy::Beam(w) => beam_decode(hmm, x, w),
        DecodeStrategy::Sample => posterior_sample(hmm, x, rng),
        DecodeStrategy::TopkSample(k) => topk_sample(hmm, x, k, rng),
    }
}

/// Replaces every label sequence with the teacher's decode of its
/// observations. Observation sides are preserved exactly; the result is
/// tagged with the strategy name. Per-sequence RNG streams derive from
/// `(rng_seed, index)`, so the output is reproducible at any thread count.
pub fn distill(
    hmm: &Hmm,
    dataset: &HmmDataset,
    strategy: &DecodeStrategy,
    rng_seed: u64,
) -> Result<HmmDataset> {
    strategy.validate(hmm)?;
    dataset.validate()?;
    if dataset.v > hmm.v {
        return Err(Error::DatasetShapeMismatch {
            k1: hmm.k,
            v1: hmm.v,
            k2: dataset.k,
            v2: dataset.v,
        });
    }
    let seqs: Vec<LabeledSeq> = dataset
        .seqs
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut rng = rng::stream_rng(rng_seed, i as u64);
            LabeledSeq {
                x: seq.x.clone(),
                y: decode(hmm, &seq.x, strategy, &mut rng),
            }
        })
        .collect();
    Ok(HmmDataset {
        seqs,
        provenance: strategy.tag(),
        k: hmm.k,
        v: dataset.v,
    })
}

/// Sequence-level interpolation: among the `beam_k` best hypotheses of an
/// exact width-K beam, returns the one with the most per-position matches
/// against `y_ref`; ties keep the higher model score. With `beam_k = 1` this
/// is exactly the Viterbi output.
pub fn interpolate_select(hmm: &Hmm, x: &[usize], y_ref: &[usize], beam_k: usize) -> Result<Vec<usize>> {
    if beam_k == 0 {
        return Err(Error::ZeroBeamWidth);
    }
    let mut hyps = beam_all(hmm, x, hmm.k);
    hyps.truncate(beam_k);
    let overlap = |y: &[usize]| y.iter().zip(y_ref).filter(|(a, b)| a == b).count();
    let best = hyps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            overlap(&a.path)
                .cmp(&overlap(&b.path))
                // hyps are score-descending: prefer the earlier on ties
                .then(ib.cmp(ia))
        })
        .expect("beam never empties");
    Ok(best.1.path.clone())
}

/// One step of the born-again trace.
#[derive(Debug, Clone)]
pub struct RebornStep {
    pub iteration: usize,
    pub complexity: f64,
    pub dataset: HmmDataset,
}

/// Trace of the born-again loop; step 0 is the input dataset itself.
#[derive(Debug, Clone)]
pub struct RebornTrace {
    pub steps: Vec<RebornStep>,
}

impl RebornTrace {
    pub fn complexities(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.complexity).collect()
    }
}

/// Born-again self-distillation: each iteration refits a supervised teacher
/// on the previous dataset, re-decodes every observation sequence with
/// `strategy`, and records the complexity of the result. `true_hmm` fixes the
/// label/symbol spaces; its own parameters are not consulted after iteration
/// 0, matching self-distillation.
pub fn reborn_loop(
    true_hmm: &Hmm,
    dataset: &HmmDataset,
    iters: usize,
    strategy: &DecodeStrategy,
    refit_alpha: f64,
    rng_seed: u64,
) -> Result<RebornTrace> {
    if iters == 0 {
        return Err(Error::NoIterations);
    }
    if dataset.k > true_hmm.k || dataset.v > true_hmm.v {
        return Err(Error::DatasetShapeMismatch {
            k1: true_hmm.k,
            v1: true_hmm.v,
            k2: dataset.k,
            v2: dataset.v,
        });
    }
    let mut current = dataset.clone();
    current.k = true_hmm.k;
    current.v = true_hmm.v;
    let mut steps = vec![RebornStep {
        iteration: 0,
        complexity: dataset_complexity(&current)?,
        dataset: current.clone(),
    }];
    for iteration in 1..=iters {
        let teacher = fit_supervised(&current, refit_alpha)?;
        current = distill(&teacher, &current, strategy, rng::sub_seed(rng_seed, iteration as u64))?;
        steps.push(RebornStep {
            iteration,
            complexity: dataset_complexity(&current)?,
            dataset: current.clone(),
        });
    }
    Ok(RebornTrace { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{random_hmm, sample_dataset};
    use approx::assert_relative_eq;

    fn identity_hmm(k: usize) -> Hmm {
        let eye = |i: usize| {
            let mut row = vec![0.0; k];
            row[i] = 1.0;
            row
        };
        Hmm {
            k,
            v: k,
            init: vec![1.0 / k as f64; k],
            trans: vec![vec![1.0 / k as f64; k]; k],
            emit: (0..k).map(eye).collect(),
        }
    }

    #[test]
    fn topk_one_equals_greedy() {
        for seed in 0..30 {
            let hmm = random_hmm(4, 5, 1.0, 1.0, seed).unwrap();
            let x: Vec<usize> = (0..8).map(|i| (i + seed as usize) % hmm.v).collect();
            let mut rng = rng::stream_rng(seed, 99);
            let topk = decode(&hmm, &x, &DecodeStrategy::TopkSample(1), &mut rng);
            let mut rng2 = rng::stream_rng(seed, 100);
            let greedy = decode(&hmm, &x, &DecodeStrategy::Greedy, &mut rng2);
            assert_eq!(topk, greedy, "seed {seed}");
        }
    }

    #[test]
    fn beam_one_equals_greedy() {
        for seed in 0..30 {
            let hmm = random_hmm(4, 5, 1.0, 1.0, seed).unwrap();
            let x: Vec<usize> = (0..8).map(|i| (i * 2 + seed as usize) % hmm.v).collect();
            let mut rng = rng::stream_rng(0, 0);
            let beam = decode(&hmm, &x, &DecodeStrategy::Beam(1), &mut rng);
            let greedy = decode(&hmm, &x, &DecodeStrategy::Greedy, &mut rng);
            assert_eq!(beam, greedy, "seed {seed}");
        }
    }

    #[test]
    fn full_beam_equals_viterbi() {
        for seed in 0..50 {
            let hmm = random_hmm(5, 6, 1.0, 1.0, seed).unwrap();
            let x: Vec<usize> = (0..9).map(|i| (i * 5 + seed as usize) % hmm.v).collect();
            let mut rng = rng::stream_rng(0, 0);
            let beam = decode(&hmm, &x, &DecodeStrategy::Beam(hmm.k), &mut rng);
            let vit = decode(&hmm, &x, &DecodeStrategy::Viterbi, &mut rng);
            assert_eq!(beam, vit, "seed {seed}");
        }
    }

    #[test]
    fn strategy_validation() {
        let hmm = random_hmm(3, 3, 1.0, 1.0, 0).unwrap();
        assert!(DecodeStrategy::Beam(0).validate(&hmm).is_err());
        assert!(DecodeStrategy::TopkSample(0).validate(&hmm).is_err());
        assert!(DecodeStrategy::TopkSample(4).validate(&hmm).is_err());
        assert!(DecodeStrategy::TopkSample(3).validate(&hmm).is_ok());
    }

    #[test]
    fn distill_preserves_observations_and_is_idempotent() {
        let hmm = identity_hmm(3);
        let ds = sample_dataset(&hmm, 30, (3, 7), 4).unwrap();
        let once = distill(&hmm, &ds, &DecodeStrategy::Viterbi, 0).unwrap();
        // deterministic emission: labels are recoverable, dataset unchanged
        assert_eq!(once.seqs, ds.seqs);
        let twice = distill(&hmm, &once, &DecodeStrategy::Viterbi, 1).unwrap();
        assert_eq!(once.seqs, twice.seqs);
        assert_eq!(once.provenance, "viterbi");
    }

    #[test]
    fn distill_is_thread_invariant() {
        let hmm = random_hmm(4, 6, 1.0, 1.0, 8).unwrap();
        let ds = sample_dataset(&hmm, 64, (4, 9), 9).unwrap();
        let a = distill(&hmm, &ds, &DecodeStrategy::Sample, 7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| distill(&hmm, &ds, &DecodeStrategy::Sample, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sample_matches_enumeration_distribution() {
        // Tiny instance: compare empirical frequencies of full sequences
        // against enumeration probabilities within 3σ.
        let hmm = random_hmm(2, 3, 1.0, 1.0, 13).unwrap();
        let x = vec![0, 2, 1];
        let bf = crate::hmm::brute_force(&hmm, &x).unwrap();
        let draws = 100_000;
        let mut freq = std::collections::BTreeMap::new();
        let mut rng = rng::stream_rng(31, 0);
        for _ in 0..draws {
            let y = posterior_sample(&hmm, &x, &mut rng);
            *freq.entry(y).or_insert(0usize) += 1;
        }
        for (y, p) in &bf.table {
            let observed = freq.get(y).copied().unwrap_or(0) as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (observed - p).abs() <= 3.0 * sigma + 1e-12,
                "seq {y:?}: observed {observed}, want {p}"
            );
        }
    }

    #[test]
    fn topk_full_width_matches_enumeration_distribution() {
        let hmm = random_hmm(2, 3, 1.0, 1.0, 17).unwrap();
        let x = vec![1, 0];
        let bf = crate::hmm::brute_force(&hmm, &x).unwrap();
        let draws = 100_000;
        let mut freq = std::collections::BTreeMap::new();
        let mut rng = rng::stream_rng(37, 0);
        for _ in 0..draws {
            let y = topk_sample(&hmm, &x, hmm.k, &mut rng);
            *freq.entry(y).or_insert(0usize) += 1;
        }
        for (y, p) in &bf.table {
            let observed = freq.get(y).copied().unwrap_or(0) as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (observed - p).abs() <= 3.0 * sigma + 1e-12,
                "seq {y:?}: observed {observed}, want {p}"
            );
        }
    }

    #[test]
    fn interpolation_prefers_reference_candidate() {
        let hmm = random_hmm(4, 5, 1.0, 1.0, 23).unwrap();
        let x = vec![0, 3, 1, 4, 2];
        // beam_k = 1 is viterbi
        let vit = viterbi(&hmm, &x);
        let picked = interpolate_select(&hmm, &x, &[0, 0, 0, 0, 0], 1).unwrap();
        assert_eq!(picked, vit);
        // a reference equal to some candidate selects that candidate
        let hyps = beam_all(&hmm, &x, hmm.k);
        let second = hyps[1].path.clone();
        let picked = interpolate_select(&hmm, &x, &second, 3).unwrap();
        assert_eq!(picked, second);
        assert!(matches!(
            interpolate_select(&hmm, &x, &second, 0),
            Err(Error::ZeroBeamWidth)
        ));
    }

    #[test]
    fn reborn_on_deterministic_teacher_is_constant() {
        let hmm = identity_hmm(3);
        let ds = sample_dataset(&hmm, 40, (3, 6), 2).unwrap();
        let trace = reborn_loop(&hmm, &ds, 3, &DecodeStrategy::Viterbi, 0.0, 0).unwrap();
        let c: Vec<f64> = trace.complexities();
        for w in c.windows(2) {
            assert_relative_eq!(w[0], w[1], epsilon = 1e-12);
        }
        assert_relative_eq!(c[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reborn_single_iteration_is_refit_distill() {
        let hmm = random_hmm(3, 5, 1.0, 1.0, 3).unwrap();
        let ds = sample_dataset(&hmm, 60, (4, 8), 4).unwrap();
        let trace = reborn_loop(&hmm, &ds, 1, &DecodeStrategy::Viterbi, 1e-3, 0).unwrap();
        let teacher = fit_supervised(&ds, 1e-3).unwrap();
        let manual = distill(&teacher, &ds, &DecodeStrategy::Viterbi, 0).unwrap();
        assert_eq!(trace.steps[1].dataset.seqs, manual.seqs);
        assert_eq!(trace.steps.len(), 2);
    }
}
