//! Deterministic next-token scorers.
//!
//! [`LogitSource`] is what the decoder consumes. Three implementations are
//! provided: an add-alpha smoothed n-gram model, a lookup-table model used as
//! a test oracle, and a wrapper that adds a constant offset to chosen ids to
//! emulate a model that over-produces them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{check_ids, TokenId, Vocabulary};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_TOXIC_BIAS: f64 = 4.0;

/// Scores the next token given everything generated so far.
pub trait LogitSource {
    fn vocab_size(&self) -> usize;

    /// The id that ends a sequence.
    fn eos(&self) -> TokenId;

    /// Unnormalized log-scores for every vocabulary entry. Always finite.
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

impl<T: LogitSource + ?Sized> LogitSource for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).score(prefix)
    }
}

impl<T: LogitSource + ?Sized> LogitSource for Box<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).score(prefix)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Fixed-order n-gram model with add-alpha smoothing.
///
/// Contexts are the last `order - 1` ids of the bos-padded prefix, so every
/// context has the same length and no backoff is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    order: usize,
    alpha: f64,
    vocab_size: usize,
    bos: TokenId,
    eos: TokenId,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl NgramLm {
    /// Counts n-grams over `corpus`, padding each sequence with `order - 1`
    /// bos ids and terminating it with eos.
    pub fn train(
        corpus: &[Vec<TokenId>],
        order: usize,
        alpha: f64,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        Self::train_raw(corpus, order, alpha, vocab.len(), vocab.bos(), vocab.eos())
    }

    pub fn train_raw(
        corpus: &[Vec<TokenId>],
        order: usize,
        alpha: f64,
        vocab_size: usize,
        bos: TokenId,
        eos: TokenId,
    ) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidOrder(order));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        check_ids(&[bos, eos], vocab_size)?;
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for seq in corpus {
            check_ids(seq, vocab_size)?;
            let mut padded = vec![bos; order - 1];
            padded.extend_from_slice(seq);
            padded.push(eos);
            for window in padded.windows(order) {
                let (context, next) = window.split_at(order - 1);
                let entry = counts.entry(context.to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(next[0]).or_default() += 1;
            }
        }
        Ok(Self {
            order,
            alpha,
            vocab_size,
            bos,
            eos,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The length-`order - 1` context for a prefix.
    pub fn context(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let width = self.order - 1;
        let mut context = vec![self.bos; width.saturating_sub(prefix.len())];
        context.extend_from_slice(&prefix[prefix.len().saturating_sub(width)..]);
        context
    }

    /// Observed count of `next` after `context`.
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u64 {
        self.counts
            .get(context)
            .and_then(|c| c.next.get(&next))
            .copied()
            .unwrap_or(0)
    }

    /// Smoothed probability `(count + alpha) / (total + alpha * |V|)`.
    pub fn prob(&self, context: &[TokenId], next: TokenId) -> f64 {
        let total = self.counts.get(context).map_or(0, |c| c.total);
        (self.count(context, next) as f64 + self.alpha)
            / (total as f64 + self.alpha * self.vocab_size as f64)
    }

    pub fn num_contexts(&self) -> usize {
        self.counts.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// JSON with contexts keyed by comma-joined ids, sorted for stable output.
    pub fn to_json(&self) -> String {
        let counts: BTreeMap<String, BTreeMap<String, u64>> = self
            .counts
            .iter()
            .map(|(context, c)| {
                let next = c.next.iter().map(|(id, n)| (id.to_string(), *n)).collect();
                (join_ids(context), next)
            })
            .collect();
        let file = NgramFile {
            order: self.order,
            alpha: self.alpha,
            vocab_size: self.vocab_size,
            bos: self.bos,
            eos: self.eos,
            counts,
        };
        let mut out = serde_json::to_string(&file).expect("n-gram model serializes");
        out.push('\n');
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NgramFile = serde_json::from_str(text)
            .map_err(|e| Error::MalformedFile(format!("n-gram model: {e}")))?;
        if file.order < 1 {
            return Err(Error::InvalidOrder(file.order));
        }
        if !(file.alpha.is_finite() && file.alpha > 0.0) {
            return Err(Error::InvalidAlpha(file.alpha));
        }
        check_ids(&[file.bos, file.eos], file.vocab_size)?;
        let mut counts = HashMap::with_capacity(file.counts.len());
        for (key, next) in file.counts {
            let context = split_ids(&key)?;
            if context.len() != file.order - 1 {
                return Err(Error::MalformedFile(format!(
                    "context {key:?} has the wrong length"
                )));
            }
            check_ids(&context, file.vocab_size)?;
            let mut entry = ContextCounts::default();
            for (id, n) in next {
                let id: TokenId = id
                    .parse()
                    .map_err(|_| Error::MalformedFile(format!("bad token id {id:?}")))?;
                check_ids(&[id], file.vocab_size)?;
                if n == 0 {
                    return Err(Error::MalformedFile(format!(
                        "zero count stored under {key:?}"
                    )));
                }
                entry.total += n;
                entry.next.insert(id, n);
            }
            counts.insert(context, entry);
        }
        Ok(Self {
            order: file.order,
            alpha: file.alpha,
            vocab_size: file.vocab_size,
            bos: file.bos,
            eos: file.eos,
            counts,
        })
    }
}

impl LogitSource for NgramLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_ids(prefix, self.vocab_size)?;
        let context = self.context(prefix);
        let (total, next) = match self.counts.get(&context) {
            Some(c) => (c.total as f64, Some(&c.next)),
            None => (0.0, None),
        };
        let denom = (total + self.alpha * self.vocab_size as f64).ln();
        let floor = self.alpha.ln() - denom;
        let mut logits = vec![floor; self.vocab_size];
        for (&id, &n) in next.into_iter().flatten() {
            logits[id as usize] = (n as f64 + self.alpha).ln() - denom;
        }
        Ok(logits)
    }
}

#[derive(Serialize, Deserialize)]
struct NgramFile {
    order: usize,
    alpha: f64,
    vocab_size: usize,
    bos: TokenId,
    eos: TokenId,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

fn join_ids(ids: &[TokenId]) -> String {
    ids.iter()
        .map(TokenId::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn split_ids(key: &str) -> Result<Vec<TokenId>> {
    if key.is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| Error::MalformedFile(format!("bad context key {key:?}")))
        })
        .collect()
}

/// Table-driven scorer: exact prefix lookup with a default vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedLm {
    eos: TokenId,
    table: HashMap<Vec<TokenId>, Vec<f64>>,
    default: Vec<f64>,
}

impl ScriptedLm {
    pub fn new(default: Vec<f64>, eos: TokenId) -> Result<Self> {
        validate_logits(&default, default.len())?;
        check_ids(&[eos], default.len())?;
        Ok(Self {
            eos,
            table: HashMap::new(),
            default,
        })
    }

    pub fn with(mut self, prefix: impl Into<Vec<TokenId>>, logits: Vec<f64>) -> Result<Self> {
        self.insert(prefix, logits)?;
        Ok(self)
    }

    pub fn insert(&mut self, prefix: impl Into<Vec<TokenId>>, logits: Vec<f64>) -> Result<()> {
        validate_logits(&logits, self.default.len())?;
        let prefix = prefix.into();
        check_ids(&prefix, self.default.len())?;
        self.table.insert(prefix, logits);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl LogitSource for ScriptedLm {
    fn vocab_size(&self) -> usize {
        self.default.len()
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_ids(prefix, self.default.len())?;
        Ok(self.table.get(prefix).unwrap_or(&self.default).clone())
    }
}

fn validate_logits(logits: &[f64], len: usize) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::InvalidLogits("empty logit vector".into()));
    }
    if logits.len() != len {
        return Err(Error::InvalidLogits(format!(
            "expected {len} entries, got {}",
            logits.len()
        )));
    }
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidLogits(format!("non-finite entry {x}")));
    }
    Ok(())
}

/// Adds a finite offset to the logits of chosen ids.
///
/// There is deliberately no way to pass an infinite offset; removing tokens
/// is done by the decoder's prune mask.
#[derive(Debug, Clone)]
pub struct BiasWrapper<S> {
    inner: S,
    biased_ids: BTreeSet<TokenId>,
    bias: f64,
}

impl<S: LogitSource> BiasWrapper<S> {
    pub fn new(inner: S, biased_ids: impl IntoIterator<Item = TokenId>, bias: f64) -> Result<Self> {
        if !bias.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bias must be finite, got {bias}"
            )));
        }
        let biased_ids: BTreeSet<TokenId> = biased_ids.into_iter().collect();
        check_ids(
            &biased_ids.iter().copied().collect::<Vec<_>>(),
            inner.vocab_size(),
        )?;
        Ok(Self {
            inner,
            biased_ids,
            bias,
        })
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn biased_ids(&self) -> &BTreeSet<TokenId> {
        &self.biased_ids
    }
}

impl<S: LogitSource> LogitSource for BiasWrapper<S> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn eos(&self) -> TokenId {
        self.inner.eos()
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut logits = self.inner.score(prefix)?;
        for &id in &self.biased_ids {
            logits[id as usize] += self.bias;
        }
        Ok(logits)
    }
}
