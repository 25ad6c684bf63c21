//! Exact dynamic programs over an HMM: Viterbi (log space), scaled
//! forward-backward, per-position posterior marginals, and the exact
//! conditional entropy of the label sequence given the observations.
//!
//! Ties everywhere break toward the smallest label id so that results are
//! deterministic and directly comparable with the enumeration oracle.

use super::Hmm;

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Most probable label sequence `argmax_y p(y, x)` (equivalently
/// `argmax p(y|x)`). Ties break to the smallest label id at each backtrace
/// step.
pub fn viterbi(hmm: &Hmm, x: &[usize]) -> Vec<usize> {
    assert!(!x.is_empty(), "viterbi needs a non-empty sequence");
    assert!(x.iter().all(|&s| s < hmm.v), "symbol out of range");
    let k = hmm.k;
    let t_len = x.len();
    let mut delta: Vec<f64> = (0..k)
        .map(|s| ln(hmm.init[s]) + ln(hmm.emit[s][x[0]]))
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; k];
        let mut arg = vec![0usize; k];
        for s in 0..k {
            let emit = ln(hmm.emit[s][x[t]]);
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for (prev, &d) in delta.iter().enumerate() {
                let cand = d + ln(hmm.trans[prev][s]);
                if cand > best {
                    best = cand;
                    best_prev = prev;
                }
            }
            next[s] = best + emit;
            arg[s] = best_prev;
        }
        back.push(arg);
        delta = next;
    }
    let mut state = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (s, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            state = s;
        }
    }
    let mut path = vec![state; t_len];
    for t in (1..t_len).rev() {
        state = back[t - 1][state];
        path[t - 1] = state;
    }
    path
}

/// Scaled forward-backward pass.
pub struct ForwardBackward {
    /// `alpha[t][s] = p(y_t = s | x_{1..t})`.
    pub alpha: Vec<Vec<f64>>,
    /// Scaled backward messages with `beta[T-1] = 1`.
    pub beta: Vec<Vec<f64>>,
    /// `gamma[t][s] = p(y_t = s | x)`; every row sums to 1.
    pub gamma: Vec<Vec<f64>>,
    /// Per-step scale factors `c_t = p(x_t | x_{1..t-1})`.
    pub scale: Vec<f64>,
    pub log_likelihood: f64,
}

pub fn forward_backward(hmm: &Hmm, x: &[usize]) -> ForwardBackward {
    assert!(!x.is_empty(), "forward-backward needs a non-empty sequence");
    assert!(x.iter().all(|&s| s < hmm.v), "symbol out of range");
    let k = hmm.k;
    let t_len = x.len();
    let mut alpha = vec![vec![0.0; k]; t_len];
    let mut scale = vec![0.0; t_len];

    for s in 0..k {
        alpha[0][s] = hmm.init[s] * hmm.emit[s][x[0]];
    }
    scale[0] = alpha[0].iter().sum();
    for v in &mut alpha[0] {
        *v /= scale[0];
    }
    for t in 1..t_len {
        for s in 0..k {
            let mut acc = 0.0;
            for prev in 0..k {
                acc += alpha[t - 1][prev] * hmm.trans[prev][s];
            }
            alpha[t][s] = acc * hmm.emit[s][x[t]];
        }
        scale[t] = alpha[t].iter().sum();
        for v in &mut alpha[t] {
            *v /= scale[t];
        }
    }

    let mut beta = vec![vec![1.0; k]; t_len];
    for t in (0..t_len - 1).rev() {
        for s in 0..k {
            let mut acc = 0.0;
            for next in 0..k {
                acc += hmm.trans[s][next] * hmm.emit[next][x[t + 1]] * beta[t + 1][next];
            }
            beta[t][s] = acc / scale[t + 1];
        }
    }

    let gamma = (0..t_len)
        .map(|t| {
            let mut row: Vec<f64> = (0..k).map(|s| alpha[t][s] * beta[t][s]).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            row
        })
        .collect();

    let log_likelihood = scale.iter().map(|&c| c.ln()).sum();
    ForwardBackward {
        alpha,
        beta,
        gamma,
        scale,
        log_likelihood,
    }
}

/// Per-position posterior marginals `p(y_t | x)`, rows summing to 1.
pub fn posterior_marginals(hmm: &Hmm, x: &[usize]) -> Vec<Vec<f64>> {
    forward_backward(hmm, x).gamma
}

pub(crate) fn argmax_smallest(row: &[f64]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}

/// Position-wise most probable labels (the token-level Bayes classifier).
/// Ties break to the smallest label id.
pub fn marginal_argmax(hmm: &Hmm, x: &[usize]) -> Vec<usize> {
    posterior_marginals(hmm, x)
        .iter()
        .map(|row| argmax_smallest(row))
        .collect()
}

fn entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h.max(0.0)
}

/// Exact conditional entropy `H(Y | X = x)` in nats, via the chain rule
/// `H = H(y_1|x) + Σ_t E_{y_{t-1}}[H(y_t | y_{t-1}, x)]`. The step
/// conditionals come from the backward messages, so the cost is `O(T·K²)`
/// rather than enumeration.
pub fn exact_seq_entropy(hmm: &Hmm, x: &[usize]) -> f64 {
    let fb = forward_backward(hmm, x);
    let k = hmm.k;
    let mut h = entropy(&fb.gamma[0]);
    for t in 1..x.len() {
        for prev in 0..k {
            let weight = fb.gamma[t - 1][prev];
            if weight <= 0.0 {
                continue;
            }
            // p(y_t | y_{t-1} = prev, x) ∝ trans[prev]·emit[·][x_t]·beta_t
            let mut row: Vec<f64> = (0..k)
                .map(|s| hmm.trans[prev][s] * hmm.emit[s][x[t]] * fb.beta[t][s])
                .collect();
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                continue;
            }
            for v in &mut row {
                *v /= sum;
            }
            h += weight * entropy(&row);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::random_hmm;
    use approx::assert_relative_eq;

    fn identity_hmm(k: usize) -> Hmm {
        // One-hot emissions: observation reveals the label.
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

    fn uniform_hmm(k: usize, v: usize) -> Hmm {
        Hmm {
            k,
            v,
            init: vec![1.0 / k as f64; k],
            trans: vec![vec![1.0 / k as f64; k]; k],
            emit: vec![vec![1.0 / v as f64; v]; k],
        }
    }

    #[test]
    fn deterministic_emission_recovers_input() {
        let hmm = identity_hmm(4);
        let x = vec![2, 0, 3, 1, 1];
        assert_eq!(viterbi(&hmm, &x), x);
        assert_eq!(marginal_argmax(&hmm, &x), x);
        for (t, row) in posterior_marginals(&hmm, &x).iter().enumerate() {
            assert_relative_eq!(row[x[t]], 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(exact_seq_entropy(&hmm, &x), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_hmm_ties_break_to_zero() {
        let hmm = uniform_hmm(3, 2);
        let x = vec![0, 1, 0, 1];
        assert_eq!(viterbi(&hmm, &x), vec![0; 4]);
        assert_eq!(marginal_argmax(&hmm, &x), vec![0; 4]);
        for row in posterior_marginals(&hmm, &x) {
            for p in row {
                assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uniform_two_state_single_step_entropy() {
        let hmm = uniform_hmm(2, 3);
        assert_relative_eq!(exact_seq_entropy(&hmm, &[1]), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn marginal_rows_sum_to_one() {
        for seed in 0..50 {
            let hmm = random_hmm(4, 5, 1.0, 1.0, seed).unwrap();
            let x: Vec<usize> = (0..7).map(|i| (i * 3 + seed as usize) % hmm.v).collect();
            for row in posterior_marginals(&hmm, &x) {
                assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            }
        }
    }
}
