//! Exhaustive enumeration over all `K^T` label sequences. This is the test
//! oracle for the dynamic programs: it shares no code with them beyond the
//! model struct itself.

use super::Hmm;
use crate::error::Error;
use crate::Result;

/// Instances with `K^T` beyond this are refused.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Exact quantities from full enumeration.
pub struct BruteForce {
    /// Mode of `p(y|x)`. Exactly tied maximizers (which arise from
    /// label-swap symmetries when observations repeat) resolve to the
    /// sequence that is lexicographically smallest read from the end, the
    /// same order Viterbi's smallest-label backtrace produces.
    pub mode: Vec<usize>,
    pub mode_prob: f64,
    /// `marginals[t][s] = p(y_t = s | x)`.
    pub marginals: Vec<Vec<f64>>,
    /// `H(Y | X = x)` in nats.
    pub entropy: f64,
    /// Every label sequence with its conditional probability, in
    /// lexicographic order.
    pub table: Vec<(Vec<usize>, f64)>,
}

/// Enumerates all label sequences for `x`, computing the full conditional
/// distribution, its mode, per-position marginals, and entropy.
pub fn brute_force(hmm: &Hmm, x: &[usize]) -> Result<BruteForce> {
    assert!(!x.is_empty(), "enumeration needs a non-empty sequence");
    let k = hmm.k;
    let t_len = x.len();
    let total = (k as u64).checked_pow(t_len as u32).unwrap_or(u64::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge {
            states: k,
            len: t_len,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut table = Vec::with_capacity(total as usize);
    let mut labels = vec![0usize; t_len];
    let mut evidence = 0.0;
    loop {
        let mut p = hmm.init[labels[0]] * hmm.emit[labels[0]][x[0]];
        for t in 1..t_len {
            p *= hmm.trans[labels[t - 1]][labels[t]] * hmm.emit[labels[t]][x[t]];
        }
        evidence += p;
        table.push((labels.clone(), p));
        // lexicographic odometer
        let mut pos = t_len;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
        if labels.iter().all(|&l| l == 0) {
            break;
        }
    }

    let reversed_lex_less = |a: &[usize], b: &[usize]| -> bool {
        for (x, y) in a.iter().rev().zip(b.iter().rev()) {
            if x != y {
                return x < y;
            }
        }
        false
    };
    let mut marginals = vec![vec![0.0; k]; t_len];
    let mut entropy = 0.0;
    let mut mode = 0usize;
    let mut mode_prob = -1.0;
    for (idx, (labels, p)) in table.iter_mut().enumerate() {
        *p /= evidence;
        let p = *p;
        if p > mode_prob {
            mode_prob = p;
            mode = idx;
        }
        if p > 0.0 {
            entropy -= p * p.ln();
        }
        for (t, &label) in labels.iter().enumerate() {
            marginals[t][label] += p;
        }
    }
    for (idx, (labels, p)) in table.iter().enumerate() {
        if *p == mode_prob && reversed_lex_less(labels, &table[mode].0) {
            mode = idx;
        }
    }

    Ok(BruteForce {
        mode: table[mode].0.clone(),
        mode_prob,
        marginals,
        entropy: entropy.max(0.0),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_state_is_certain() {
        let hmm = Hmm {
            k: 1,
            v: 2,
            init: vec![1.0],
            trans: vec![vec![1.0]],
            emit: vec![vec![0.25, 0.75]],
        };
        let bf = brute_force(&hmm, &[0, 1, 1]).unwrap();
        assert_eq!(bf.mode, vec![0, 0, 0]);
        assert_relative_eq!(bf.mode_prob, 1.0, epsilon = 1e-12);
        assert_eq!(bf.table.len(), 1);
    }

    #[test]
    fn marginal_rows_sum_to_one() {
        let hmm = crate::hmm::random_hmm(3, 4, 1.0, 1.0, 5).unwrap();
        let bf = brute_force(&hmm, &[0, 2, 1, 3]).unwrap();
        for row in &bf.marginals {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        let total: f64 = bf.table.iter().map(|(_, p)| p).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn refuses_oversized_instances() {
        let hmm = crate::hmm::random_hmm(10, 2, 1.0, 1.0, 5).unwrap();
        let x = vec![0usize; 10]; // 10^10 sequences
        assert!(matches!(
            brute_force(&hmm, &x),
            Err(Error::InstanceTooLarge { .. })
        ));
    }
}
