//! Token-level Bayes language identification and simplex analysis.
//!
//! Profiles are smoothed unigram models fit per language; a sentence's
//! posterior over languages is the average over tokens of the per-token
//! posterior under a uniform language prior. For three languages the
//! posterior embeds into the 2-simplex for ternary scatter plots.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::Error;
use crate::Result;

/// Unigram model for one language.
#[derive(Debug, Clone, Serialize)]
pub struct LangProfile {
    pub label: String,
    /// Training token count.
    pub token_count: u64,
    /// Probability per joint-vocabulary index.
    probs: Vec<f64>,
    /// Mass assigned to any unseen token.
    unk: f64,
}

/// Profiles for all languages over a shared (sorted) joint vocabulary.
#[derive(Debug, Clone)]
pub struct LangProfiles {
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
    pub langs: Vec<LangProfile>,
    pub alpha: f64,
}

impl LangProfiles {
    pub fn num_languages(&self) -> usize {
        self.langs.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.langs.iter().map(|l| l.label.as_str()).collect()
    }

    /// `p(token | language)` with the alpha floor for unseen tokens.
    pub fn token_prob(&self, lang: usize, token: &str) -> f64 {
        match self.index.get(token) {
            Some(&i) => self.langs[lang].probs[i],
            None => self.langs[lang].unk,
        }
    }
}

/// Fits smoothed unigram profiles:
/// `p(token|l) = (count + alpha) / (total + alpha·(|V_joint| + 1))`,
/// where the `+ 1` reserves one slot of smoothing mass for unseen tokens.
pub fn fit_profiles(corpora: &[(String, Vec<Vec<String>>)], alpha: f64) -> Result<LangProfiles> {
    if corpora.len() < 2 {
        return Err(Error::TooFewLanguages(corpora.len()));
    }
    let mut vocab: Vec<String> = corpora
        .iter()
        .flat_map(|(_, sents)| sents.iter().flatten().cloned())
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    let mut langs = Vec::with_capacity(corpora.len());
    for (label, sents) in corpora {
        let mut counts = vec![0u64; vocab.len()];
        let mut total = 0u64;
        for sent in sents {
            for tok in sent {
                counts[index[tok]] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyLanguage(label.clone()));
        }
        let denom = total as f64 + alpha * (vocab.len() as f64 + 1.0);
        langs.push(LangProfile {
            label: label.clone(),
            token_count: total,
            probs: counts.iter().map(|&c| (c as f64 + alpha) / denom).collect(),
            unk: alpha / denom,
        });
    }
    Ok(LangProfiles {
        vocab,
        index,
        langs,
        alpha,
    })
}

/// Posterior over languages for one sentence: the average over token
/// occurrences of `p(y_t|l) / Σ_k p(y_t|l_k)` (the uniform prior cancels).
/// Tokens with zero probability everywhere contribute a uniform vector.
pub fn sentence_posterior(profiles: &LangProfiles, sentence: &[String]) -> Result<Vec<f64>> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    let k = profiles.num_languages();
    let mut acc = vec![0.0; k];
    for tok in sentence {
        let probs: Vec<f64> = (0..k).map(|l| profiles.token_prob(l, tok)).collect();
        let denom: f64 = probs.iter().sum();
        if denom > 0.0 {
            for (a, p) in acc.iter_mut().zip(&probs) {
                *a += p / denom;
            }
        } else {
            for a in acc.iter_mut() {
                *a += 1.0 / k as f64;
            }
        }
    }
    let t = sentence.len() as f64;
    for a in acc.iter_mut() {
        *a /= t;
    }
    Ok(acc)
}

/// Affine embedding of a 3-way posterior into the plane: vertices at
/// (0,0), (1,0) and (1/2, √3/2); the uniform posterior maps to the centroid.
pub fn ternary_coordinates(posterior: &[f64]) -> Result<(f64, f64)> {
    if posterior.len() != 3 {
        return Err(Error::TernaryNeedsThree(posterior.len()));
    }
    let x = posterior[1] + 0.5 * posterior[2];
    let y = (3.0_f64.sqrt() / 2.0) * posterior[2];
    Ok((x, y))
}

#[derive(Debug, Clone, Serialize)]
pub struct SentenceVerdict {
    pub posterior: Vec<f64>,
    pub argmax: usize,
    pub label: String,
    /// Present only for three languages.
    pub ternary: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimplexReport {
    pub labels: Vec<String>,
    pub per_sentence: Vec<SentenceVerdict>,
    /// How many sentences each language won.
    pub argmax_counts: Vec<usize>,
    /// Mean of the maximum posterior entry: 1 = every sentence at a vertex.
    pub purity: f64,
}

impl SimplexReport {
    pub const SCHEMA_VERSION: &'static str = "kdlab-simplex-1";
}

/// Scores every sentence and aggregates argmax counts and purity.
pub fn simplex_report(profiles: &LangProfiles, sentences: &[Vec<String>]) -> Result<SimplexReport> {
    let k = profiles.num_languages();
    let mut per_sentence = Vec::with_capacity(sentences.len());
    let mut argmax_counts = vec![0usize; k];
    let mut purity_sum = 0.0;
    for sentence in sentences {
        let posterior = sentence_posterior(profiles, sentence)?;
        let (argmax, &max) = posterior
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap().then(std::cmp::Ordering::Greater))
            .expect("non-empty posterior");
        argmax_counts[argmax] += 1;
        purity_sum += max;
        let ternary = if k == 3 {
            Some(ternary_coordinates(&posterior)?)
        } else {
            None
        };
        per_sentence.push(SentenceVerdict {
            label: profiles.langs[argmax].label.clone(),
            posterior,
            argmax,
            ternary,
        });
    }
    let purity = if sentences.is_empty() {
        0.0
    } else {
        purity_sum / sentences.len() as f64
    };
    Ok(SimplexReport {
        labels: profiles.langs.iter().map(|l| l.label.clone()).collect(),
        per_sentence,
        argmax_counts,
        purity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn three_langs(alpha: f64) -> LangProfiles {
        let corpora = vec![
            ("de".to_string(), vec![toks(&["da", "db"]), toks(&["da"])]),
            ("es".to_string(), vec![toks(&["ea", "eb", "ea"])]),
            ("fr".to_string(), vec![toks(&["fa", "fb"])]),
        ];
        fit_profiles(&corpora, alpha).unwrap()
    }

    #[test]
    fn single_token_language_unsmoothed() {
        let corpora = vec![
            ("l1".to_string(), vec![toks(&["x"]); 10]),
            ("l2".to_string(), vec![toks(&["y"]); 10]),
        ];
        let profiles = fit_profiles(&corpora, 0.0).unwrap();
        assert_relative_eq!(profiles.token_prob(0, "x"), 1.0);
        assert_relative_eq!(profiles.token_prob(0, "y"), 0.0);
    }

    #[test]
    fn profiles_normalize_over_vocab_and_unk() {
        let profiles = three_langs(0.5);
        for (l, lang) in profiles.langs.iter().enumerate() {
            let sum: f64 = profiles
                .vocab
                .iter()
                .map(|t| profiles.token_prob(l, t))
                .sum::<f64>()
                + lang.unk;
            assert_relative_eq!(sum, 1.0, epsilon = 1e-9);
            // smoothing gives every vocabulary token positive mass
            assert!(profiles.vocab.iter().all(|t| profiles.token_prob(l, t) > 0.0));
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let a = three_langs(0.5);
        let b = three_langs(0.5);
        for l in 0..3 {
            assert_eq!(a.langs[l].probs, b.langs[l].probs);
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let one = vec![("l1".to_string(), vec![toks(&["x"])])];
        assert!(matches!(fit_profiles(&one, 0.5), Err(Error::TooFewLanguages(1))));
        let with_empty = vec![
            ("l1".to_string(), vec![toks(&["x"])]),
            ("l2".to_string(), vec![]),
        ];
        assert!(matches!(
            fit_profiles(&with_empty, 0.5),
            Err(Error::EmptyLanguage(_))
        ));
    }

    #[test]
    fn exclusive_token_hits_vertex() {
        let profiles = three_langs(0.0);
        let p = sentence_posterior(&profiles, &toks(&["da"])).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[1] + p[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shared_token_is_uniform() {
        let corpora = vec![
            ("a".to_string(), vec![toks(&["w", "w"])]),
            ("b".to_string(), vec![toks(&["w", "w"])]),
            ("c".to_string(), vec![toks(&["w", "w"])]),
        ];
        let profiles = fit_profiles(&corpora, 0.0).unwrap();
        let p = sentence_posterior(&profiles, &toks(&["w"])).unwrap();
        for v in &p {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_sentence_averages() {
        let profiles = three_langs(0.0);
        let p = sentence_posterior(&profiles, &toks(&["da", "ea"])).unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_is_order_invariant_and_normalized() {
        let profiles = three_langs(0.5);
        let a = sentence_posterior(&profiles, &toks(&["da", "ea", "fa", "fb"])).unwrap();
        let b = sentence_posterior(&profiles, &toks(&["fb", "da", "fa", "ea"])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
        assert_relative_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn count_scaling_leaves_posterior_unchanged() {
        let base = vec![
            ("a".to_string(), vec![toks(&["x", "y"])]),
            ("b".to_string(), vec![toks(&["y", "z"])]),
        ];
        let scaled = vec![
            ("a".to_string(), vec![toks(&["x", "y"]); 7]),
            ("b".to_string(), vec![toks(&["y", "z"]); 7]),
        ];
        let p1 = sentence_posterior(&fit_profiles(&base, 0.0).unwrap(), &toks(&["y"])).unwrap();
        let p2 = sentence_posterior(&fit_profiles(&scaled, 0.0).unwrap(), &toks(&["y"])).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn centroid_ternary_coordinates() {
        let third = 1.0 / 3.0;
        let (x, y) = ternary_coordinates(&[third, third, third]).unwrap();
        assert_relative_eq!(x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(y, 3.0_f64.sqrt() / 6.0, epsilon = 1e-12);
        assert!(matches!(
            ternary_coordinates(&[0.5, 0.5]),
            Err(Error::TernaryNeedsThree(2))
        ));
    }

    #[test]
    fn disjoint_vocabulary_report_is_pure() {
        let profiles = three_langs(0.0);
        let sentences = vec![toks(&["da", "db"]), toks(&["ea", "eb"]), toks(&["fa", "fb"])];
        let report = simplex_report(&profiles, &sentences).unwrap();
        assert!(report.purity >= 0.99);
        assert_eq!(report.argmax_counts, vec![1, 1, 1]);
        assert_eq!(report.per_sentence[2].label, "fr");
    }

    #[test]
    fn purity_matches_direct_recomputation() {
        let profiles = three_langs(0.5);
        let sentences = vec![
            toks(&["da", "ea"]),
            toks(&["fa", "fb", "da"]),
            toks(&["ea", "eb", "eb"]),
        ];
        let report = simplex_report(&profiles, &sentences).unwrap();
        let mut expect = 0.0;
        for s in &sentences {
            let p = sentence_posterior(&profiles, s).unwrap();
            expect += p.iter().cloned().fold(f64::MIN, f64::max);
        }
        expect /= sentences.len() as f64;
        assert_relative_eq!(report.purity, expect, epsilon = 1e-12);
    }
}
