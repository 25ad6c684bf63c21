//! Parallel-corpus ingest, encoding, and persistence.
//!
//! Corpora are integer-encoded against per-side vocabularies. Tokenization is
//! plain whitespace splitting; runs of whitespace collapse on load, so the
//! canonical written form uses single spaces. Two interchange formats are
//! supported: one pair per line separated by a `|||` token, and two
//! line-aligned files. Loading is pure and deterministic; all values are
//! immutable after construction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// Reserved source-side pseudo-word for null alignment links. Always id 0 on
/// the source side and never appears in text output.
pub const NULL_TOKEN: &str = "<NULL>";
/// Source-side id of [`NULL_TOKEN`].
pub const NULL_ID: u32 = 0;

const SEPARATOR: &str = "|||";

/// Token inventory with dense ids and per-id occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    freq: Vec<u64>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Source-side vocabulary: id 0 is reserved for the null word.
    pub fn with_null() -> Self {
        let mut v = Self::new();
        v.token_to_id.insert(NULL_TOKEN.to_string(), NULL_ID);
        v.id_to_token.push(NULL_TOKEN.to_string());
        v.freq.push(0);
        v
    }

    /// Interns `token` and counts one occurrence.
    pub fn add_occurrence(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            self.freq[id as usize] += 1;
            id
        } else {
            let id = self.id_to_token.len() as u32;
            self.token_to_id.insert(token.to_string(), id);
            self.id_to_token.push(token.to_string());
            self.freq.push(1);
            id
        }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn freq(&self, id: u32) -> u64 {
        self.freq[id as usize]
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Total token occurrences recorded across all ids.
    pub fn total_tokens(&self) -> u64 {
        self.freq.iter().sum()
    }
}

/// One integer-encoded sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

/// Integer-encoded sentence pairs plus their vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Decodes the source side of pair `index` back to tokens.
    pub fn src_tokens(&self, index: usize) -> Vec<&str> {
        self.pairs[index]
            .src
            .iter()
            .map(|&id| self.src_vocab.token(id))
            .collect()
    }

    /// Decodes the target side of pair `index` back to tokens.
    pub fn tgt_tokens(&self, index: usize) -> Vec<&str> {
        self.pairs[index]
            .tgt
            .iter()
            .map(|&id| self.tgt_vocab.token(id))
            .collect()
    }
}

/// Loader options shared by both formats.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Pairs with either side longer than this are dropped (with a logged count).
    pub max_len: usize,
    pub lowercase: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_len: 250,
            lowercase: false,
        }
    }
}

struct CorpusBuilder {
    pairs: Vec<SentencePair>,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    dropped: usize,
    max_len: usize,
}

impl CorpusBuilder {
    fn new(max_len: usize) -> Self {
        Self {
            pairs: Vec::new(),
            src_vocab: Vocab::with_null(),
            tgt_vocab: Vocab::new(),
            dropped: 0,
            max_len,
        }
    }

    fn push(&mut self, src_tokens: &[&str], tgt_tokens: &[&str], lowercase: bool) {
        if src_tokens.len() > self.max_len || tgt_tokens.len() > self.max_len {
            self.dropped += 1;
            return;
        }
        let encode = |vocab: &mut Vocab, tokens: &[&str]| {
            tokens
                .iter()
                .map(|t| {
                    if lowercase {
                        vocab.add_occurrence(&t.to_lowercase())
                    } else {
                        vocab.add_occurrence(t)
                    }
                })
                .collect()
        };
        let src = encode(&mut self.src_vocab, src_tokens);
        let tgt = encode(&mut self.tgt_vocab, tgt_tokens);
        self.pairs.push(SentencePair { src, tgt });
    }

    fn finish(self) -> ParallelCorpus {
        if self.dropped > 0 {
            log::warn!("dropped {} pairs exceeding max_len {}", self.dropped, self.max_len);
        }
        ParallelCorpus {
            pairs: self.pairs,
            src_vocab: self.src_vocab,
            tgt_vocab: self.tgt_vocab,
        }
    }
}

/// Loads a pipe-delimited corpus: one `src ||| tgt` pair per line, UTF-8.
pub fn load_pipe(path: &Path, opts: &LoadOptions) -> Result<ParallelCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = CorpusBuilder::new(opts.max_len);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue; // blank lines are skipped
        }
        let seps: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == SEPARATOR)
            .map(|(i, _)| i)
            .collect();
        if seps.len() != 1 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
            });
        }
        let (src, rest) = tokens.split_at(seps[0]);
        let tgt = &rest[1..];
        if src.is_empty() {
            return Err(Error::EmptySide {
                path: path.to_path_buf(),
                line: lineno,
                side: "source",
            });
        }
        if tgt.is_empty() {
            return Err(Error::EmptySide {
                path: path.to_path_buf(),
                line: lineno,
                side: "target",
            });
        }
        builder.push(src, tgt, opts.lowercase);
    }
    Ok(builder.finish())
}

/// Loads a corpus from two line-aligned files.
pub fn load_two_file(src_path: &Path, tgt_path: &Path, opts: &LoadOptions) -> Result<ParallelCorpus> {
    let read_lines = |path: &Path| -> Result<Vec<String>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))
    };
    let src_lines = read_lines(src_path)?;
    let tgt_lines = read_lines(tgt_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::LineCountMismatch {
            src_path: src_path.to_path_buf(),
            src_lines: src_lines.len(),
            tgt_path: tgt_path.to_path_buf(),
            tgt_lines: tgt_lines.len(),
        });
    }
    let mut builder = CorpusBuilder::new(opts.max_len);
    for (idx, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
        let lineno = idx + 1;
        let src: Vec<&str> = s.split_whitespace().collect();
        let tgt: Vec<&str> = t.split_whitespace().collect();
        if src.is_empty() {
            return Err(Error::EmptySide {
                path: src_path.to_path_buf(),
                line: lineno,
                side: "source",
            });
        }
        if tgt.is_empty() {
            return Err(Error::EmptySide {
                path: tgt_path.to_path_buf(),
                line: lineno,
                side: "target",
            });
        }
        builder.push(&src, &tgt, opts.lowercase);
    }
    Ok(builder.finish())
}

/// Writes the pipe-delimited form; loading it back reproduces the corpus.
pub fn write_pipe(corpus: &ParallelCorpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for i in 0..corpus.len() {
        let line = format!(
            "{} ||| {}\n",
            corpus.src_tokens(i).join(" "),
            corpus.tgt_tokens(i).join(" ")
        );
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes the two-file form (line-aligned source and target files).
pub fn write_two_file(corpus: &ParallelCorpus, src_path: &Path, tgt_path: &Path) -> Result<()> {
    let write_side = |path: &Path, side: &dyn Fn(usize) -> String| -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for i in 0..corpus.len() {
            out.write_all(side(i).as_bytes()).map_err(|e| Error::io(path, e))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    };
    write_side(src_path, &|i| corpus.src_tokens(i).join(" "))?;
    write_side(tgt_path, &|i| corpus.tgt_tokens(i).join(" "))
}

/// Replaces the target side of every pair, rebuilding the target vocabulary.
/// Sources (and the source vocabulary) are unchanged.
pub fn replace_targets(corpus: &ParallelCorpus, new_targets: &[Vec<String>]) -> Result<ParallelCorpus> {
    if new_targets.len() != corpus.len() {
        return Err(Error::TargetCountMismatch {
            expected: corpus.len(),
            got: new_targets.len(),
        });
    }
    if let Some(index) = new_targets.iter().position(|t| t.is_empty()) {
        return Err(Error::EmptyTarget { index });
    }
    let mut tgt_vocab = Vocab::new();
    let pairs = corpus
        .pairs
        .iter()
        .zip(new_targets)
        .map(|(pair, tokens)| SentencePair {
            src: pair.src.clone(),
            tgt: tokens.iter().map(|t| tgt_vocab.add_occurrence(t)).collect(),
        })
        .collect();
    Ok(ParallelCorpus {
        pairs,
        src_vocab: corpus.src_vocab.clone(),
        tgt_vocab,
    })
}
