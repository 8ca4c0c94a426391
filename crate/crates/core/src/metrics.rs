//! Corpus metrics: BLEU, ROUGE F-measures, Distinct-N and a lexicon
//! toxicity rate.
//!
//! All metrics share one tokenization: lowercase, then split on whitespace.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replaces zero n-gram precisions so the geometric mean stays finite.
pub const BLEU_EPSILON: f64 = 1e-9;

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(String::from)
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n.max(1)).filter(move |_| n > 0)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in ngrams(tokens, n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub candidate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCorpus {
    pub items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new(items: Vec<EvalItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidCorpus("corpus has no items".into()));
        }
        if let Some(i) = items.iter().position(|item| item.references.is_empty()) {
            return Err(Error::InvalidCorpus(format!("item {i} has no references")));
        }
        Ok(Self { items })
    }

    /// Pairs candidates with reference lists by position.
    pub fn from_pairs(candidates: Vec<String>, references: Vec<Vec<String>>) -> Result<Self> {
        if candidates.len() != references.len() {
            return Err(Error::LengthMismatch {
                generations: candidates.len(),
                references: references.len(),
            });
        }
        let items = candidates
            .into_iter()
            .zip(references)
            .map(|(candidate, references)| EvalItem {
                candidate,
                references,
            })
            .collect();
        Self::new(items)
    }

    /// Parses JSONL lines of `{"candidate": ..., "references": [...]}`.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let item: EvalItem = serde_json::from_str(line)
                .map_err(|e| Error::MalformedFile(format!("eval line {}: {e}", i + 1)))?;
            items.push(item);
        }
        Self::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn candidates(&self) -> Vec<&str> {
        self.items
            .iter()
            .map(|item| item.candidate.as_str())
            .collect()
    }
}

/// Pooled distinct n-grams over total n-grams. N-grams never span two
/// candidates. An empty corpus scores 0.
pub fn distinct_n<S: AsRef<str>>(candidates: &[S], n: usize) -> f64 {
    let tokenized: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c.as_ref())).collect();
    let mut distinct: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    for tokens in &tokenized {
        for gram in ngrams(tokens, n) {
            distinct.insert(gram);
            total += 1;
        }
    }
    distinct.len() as f64 / total.max(1) as f64
}

/// Corpus BLEU statistics: clipped matches and totals per order, plus the
/// candidate and effective reference lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn collect(corpus: &EvalCorpus, max_n: usize) -> Self {
        let mut stats = Self {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            candidate_len: 0,
            reference_len: 0,
        };
        for item in &corpus.items {
            let cand = tokenize(&item.candidate);
            let refs: Vec<Vec<String>> = item.references.iter().map(|r| tokenize(r)).collect();
            stats.candidate_len += cand.len();
            // closest reference length, shorter on ties
            stats.reference_len += refs
                .iter()
                .map(Vec::len)
                .min_by_key(|&len| (len.abs_diff(cand.len()), len))
                .unwrap_or(0);
            for n in 1..=max_n {
                let mut max_ref: HashMap<&[String], usize> = HashMap::new();
                for r in &refs {
                    for (gram, count) in ngram_counts(r, n) {
                        let slot = max_ref.entry(gram).or_insert(0);
                        *slot = (*slot).max(count);
                    }
                }
                for (gram, count) in ngram_counts(&cand, n) {
                    stats.matches[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
                }
                stats.totals[n - 1] += cand.len().saturating_sub(n - 1);
            }
        }
        stats
    }

    /// Modified precision for order `n` (1-based), floored at [`BLEU_EPSILON`].
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if m == 0 || t == 0 {
            BLEU_EPSILON
        } else {
            m as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len > self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// `100 * BP * exp(sum_i w_i ln p_i)`.
    pub fn score(&self, weights: &[f64]) -> f64 {
        let log_mean: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.precision(i + 1).ln())
            .sum();
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScores {
    /// Cumulative BLEU-1..BLEU-max_n with uniform weights.
    pub cumulative: Vec<f64>,
    /// The composite column.
    pub bleu: f64,
}

/// Cumulative BLEU-n for n = 1..=max_n; the composite uses `weights`
/// (uniform over four orders by default).
pub fn bleu_with_weights(corpus: &EvalCorpus, max_n: usize, weights: &[f64]) -> BleuScores {
    let orders = max_n.max(weights.len());
    let stats = BleuStats::collect(corpus, orders);
    let cumulative = (1..=max_n)
        .map(|n| stats.score(&vec![1.0 / n as f64; n]))
        .collect();
    BleuScores {
        cumulative,
        bleu: stats.score(weights),
    }
}

pub fn bleu(corpus: &EvalCorpus, max_n: usize) -> BleuScores {
    bleu_with_weights(corpus, max_n, &[0.25; 4])
}

fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn rouge_n_f1(cand: &[String], reference: &[String], n: usize) -> f64 {
    let cand_counts = ngram_counts(cand, n);
    let ref_counts = ngram_counts(reference, n);
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let cand_total = cand.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    f_measure(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    )
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn rouge_l_f1(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(cand, reference) as f64;
    f_measure(lcs / cand.len() as f64, lcs / reference.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

/// Per-item F1 against the best reference (per measure), averaged over items.
pub fn rouge(corpus: &EvalCorpus) -> RougeScores {
    let mut sums = [0.0; 3];
    for item in &corpus.items {
        let cand = tokenize(&item.candidate);
        let mut best = [0.0f64; 3];
        for reference in &item.references {
            let r = tokenize(reference);
            best[0] = best[0].max(rouge_n_f1(&cand, &r, 1));
            best[1] = best[1].max(rouge_n_f1(&cand, &r, 2));
            best[2] = best[2].max(rouge_l_f1(&cand, &r));
        }
        for (sum, b) in sums.iter_mut().zip(best) {
            *sum += b;
        }
    }
    let n = corpus.items.len().max(1) as f64;
    RougeScores {
        rouge_1: sums[0] / n,
        rouge_2: sums[1] / n,
        rouge_l: sums[2] / n,
    }
}

/// Case-insensitive whole-word matcher for a word list.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pattern: Regex,
}

impl Lexicon {
    pub fn new<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let alternatives: Vec<String> = words
            .iter()
            .map(|w| w.as_ref().trim())
            .filter(|w| !w.is_empty())
            .map(regex::escape)
            .collect();
        if alternatives.is_empty() {
            return Err(Error::EmptyWordList);
        }
        let pattern = Regex::new(&format!(r"(?i)\b(?:{})\b", alternatives.join("|")))
            .map_err(|e| Error::InvalidConfig(format!("word list pattern: {e}")))?;
        Ok(Self { pattern })
    }

    pub fn matches(&self, text: &str) -> bool {
        self.pattern.is_match(text)
    }

    /// Fraction of texts containing at least one listed word.
    pub fn rate<S: AsRef<str>>(&self, texts: &[S]) -> f64 {
        if texts.is_empty() {
            return 0.0;
        }
        texts.iter().filter(|t| self.matches(t.as_ref())).count() as f64 / texts.len() as f64
    }
}

pub fn lexical_toxicity<S: AsRef<str>, W: AsRef<str>>(
    candidates: &[S],
    words: &[W],
) -> Result<f64> {
    Ok(Lexicon::new(words)?.rate(candidates))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub toxicity_rate: f64,
    pub n_items: usize,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "B-1", "B-2", "B-3", "B-4", "B", "R-1", "R-2", "R-L", "D-1", "D-2", "Toxicity",
];

impl MetricReport {
    pub fn evaluate<W: AsRef<str>>(corpus: &EvalCorpus, toxic_words: &[W]) -> Result<Self> {
        Self::evaluate_weighted(corpus, toxic_words, &[0.25; 4])
    }

    pub fn evaluate_weighted<W: AsRef<str>>(
        corpus: &EvalCorpus,
        toxic_words: &[W],
        bleu_weights: &[f64],
    ) -> Result<Self> {
        let lexicon = Lexicon::new(toxic_words)?;
        let candidates = corpus.candidates();
        let b = bleu_with_weights(corpus, 4, bleu_weights);
        let r = rouge(corpus);
        Ok(Self {
            bleu_1: b.cumulative[0],
            bleu_2: b.cumulative[1],
            bleu_3: b.cumulative[2],
            bleu_4: b.cumulative[3],
            bleu: b.bleu,
            rouge_1: r.rouge_1,
            rouge_2: r.rouge_2,
            rouge_l: r.rouge_l,
            distinct_1: distinct_n(&candidates, 1),
            distinct_2: distinct_n(&candidates, 2),
            toxicity_rate: lexicon.rate(&candidates),
            n_items: corpus.items.len(),
        })
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.bleu_1,
            self.bleu_2,
            self.bleu_3,
            self.bleu_4,
            self.bleu,
            self.rouge_1,
            self.rouge_2,
            self.rouge_l,
            self.distinct_1,
            self.distinct_2,
            self.toxicity_rate,
        ]
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Values in table column order, six decimals.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}
