//! Prune sets: banned token ids derived from a word list.
//!
//! Ids are collected across every word's subword expansion, shuffled with a
//! seeded RNG starting from ascending order, and a prefix of length
//! `ceil(fraction * N)` is kept. Smaller fractions are therefore always
//! subsets of larger ones for the same seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Vocabulary, WordExpansion};

/// Banned token ids plus where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSet {
    pub ids: BTreeSet<TokenId>,
    pub source_words: Vec<String>,
    pub fraction: f64,
    pub selection_seed: u64,
    pub vocab_fingerprint: String,
    /// Number of prunable subwords at fraction 1.0.
    pub full_size: usize,
    /// Special ids (bos/eos/unk) found in the expansion and left out.
    pub dropped_special_count: usize,
}

impl PruneSet {
    /// A prune set that bans nothing; the unpruned baseline.
    pub fn empty(vocab_fingerprint: impl Into<String>) -> Self {
        Self {
            ids: BTreeSet::new(),
            source_words: Vec::new(),
            fraction: 0.0,
            selection_seed: 0,
            vocab_fingerprint: vocab_fingerprint.into(),
            full_size: 0,
            dropped_special_count: 0,
        }
    }

    /// Wraps an explicit id set. Ids listed in `reserved` are removed and
    /// counted, mirroring how special tokens are handled by [`build_prune_set`].
    pub fn from_ids(
        ids: impl IntoIterator<Item = TokenId>,
        reserved: &[TokenId],
        vocab_fingerprint: impl Into<String>,
    ) -> Self {
        let all: BTreeSet<TokenId> = ids.into_iter().collect();
        let ids: BTreeSet<TokenId> = all
            .iter()
            .copied()
            .filter(|id| !reserved.contains(id))
            .collect();
        Self {
            full_size: ids.len(),
            fraction: if ids.is_empty() { 0.0 } else { 1.0 },
            dropped_special_count: all.len() - ids.len(),
            ids,
            source_words: Vec::new(),
            selection_seed: 0,
            vocab_fingerprint: vocab_fingerprint.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.ids.contains(&id)
    }

    /// SHA-256 of the serialized prune set, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// The `pruneset.json` representation, ids ascending.
    pub fn to_json(&self) -> String {
        let file = PruneSetFile {
            ids: self.ids.iter().copied().collect(),
            fraction: self.fraction,
            seed: self.selection_seed,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            full_size: self.full_size,
            source_words: self.source_words.clone(),
            dropped_special_count: self.dropped_special_count,
        };
        let mut out = serde_json::to_string(&file).expect("prune set serializes");
        out.push('\n');
        out
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, vocab)
    }

    /// Parses and validates a prune set against the vocabulary it must
    /// have been built from.
    pub fn from_json(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let file: PruneSetFile = serde_json::from_str(text)
            .map_err(|e| Error::MalformedFile(format!("pruneset.json: {e}")))?;
        let expected = vocab.fingerprint();
        if file.vocab_fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected,
                found: file.vocab_fingerprint,
            });
        }
        let malformed = |msg: String| Err(Error::MalformedFile(format!("pruneset.json: {msg}")));
        if file.ids.is_empty() {
            return malformed("ids is empty".into());
        }
        if !(file.fraction > 0.0 && file.fraction <= 1.0) {
            return malformed(format!("fraction {} is not in (0, 1]", file.fraction));
        }
        if file.ids.windows(2).any(|w| w[0] >= w[1]) {
            return malformed("ids are not strictly ascending".into());
        }
        if let Some(&id) = file
            .ids
            .iter()
            .find(|&&id| id as usize >= vocab.len() || vocab.is_special(id))
        {
            return malformed(format!("id {id} is out of range or special"));
        }
        if file.ids.len() != selection_size(file.fraction, file.full_size) {
            return malformed(format!(
                "{} ids do not match fraction {} of full size {}",
                file.ids.len(),
                file.fraction,
                file.full_size
            ));
        }
        Ok(Self {
            ids: file.ids.into_iter().collect(),
            source_words: file.source_words,
            fraction: file.fraction,
            selection_seed: file.seed,
            vocab_fingerprint: file.vocab_fingerprint,
            full_size: file.full_size,
            dropped_special_count: file.dropped_special_count,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PruneSetFile {
    ids: Vec<TokenId>,
    fraction: f64,
    seed: u64,
    vocab_fingerprint: String,
    full_size: usize,
    source_words: Vec<String>,
    dropped_special_count: usize,
}

/// `ceil(fraction * full_size)`, exact at fraction 1.0.
pub fn selection_size(fraction: f64, full_size: usize) -> usize {
    if fraction >= 1.0 {
        return full_size;
    }
    let raw = fraction * full_size as f64;
    // absorb float noise such as 0.29 * 100 = 28.999999999999996
    let rounded = raw.round();
    let n = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (n as usize).min(full_size)
}

/// Distinct non-special subword ids in the seeded selection order.
pub fn selection_order(
    expansion: &WordExpansion,
    seed: u64,
    vocab: &Vocabulary,
) -> (Vec<TokenId>, usize) {
    let all = expansion.all_ids();
    let mut order: Vec<TokenId> = all
        .iter()
        .copied()
        .filter(|&id| !vocab.is_special(id))
        .collect();
    let dropped = all.len() - order.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    (order, dropped)
}

pub fn build_prune_set(
    expansion: &WordExpansion,
    fraction: f64,
    seed: u64,
    vocab: &Vocabulary,
) -> Result<PruneSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    if expansion.is_empty() || expansion.all_ids().is_empty() {
        return Err(Error::EmptyExpansion);
    }
    vocab.check_ids(&expansion.all_ids().into_iter().collect::<Vec<_>>())?;
    let (order, dropped) = selection_order(expansion, seed, vocab);
    if order.is_empty() {
        return Err(Error::AllSpecialTokens);
    }
    let full_size = order.len();
    let take = selection_size(fraction, full_size);
    Ok(PruneSet {
        ids: order[..take].iter().copied().collect(),
        source_words: expansion.words(),
        fraction,
        selection_seed: seed,
        vocab_fingerprint: vocab.fingerprint(),
        full_size,
        dropped_special_count: dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCoverage {
    pub pruned_subwords: usize,
    pub total_subwords: usize,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_words: usize,
    pub fully_pruned_words: usize,
    pub coverage: f64,
    pub per_word: BTreeMap<String, WordCoverage>,
}

/// A word is blocked when every one of its canonical tokenizations holds at
/// least one pruned id.
pub fn coverage_report(prune: &PruneSet, expansion: &WordExpansion) -> CoverageReport {
    let mut per_word = BTreeMap::new();
    let mut blocked_words = 0;
    for entry in &expansion.entries {
        let subwords = entry.subwords();
        let pruned = subwords.iter().filter(|id| prune.ids.contains(id)).count();
        let blocked = !entry.variants.is_empty()
            && entry
                .variants
                .iter()
                .all(|variant| variant.iter().any(|id| prune.ids.contains(id)));
        blocked_words += usize::from(blocked);
        per_word.insert(
            entry.word.clone(),
            WordCoverage {
                pruned_subwords: pruned,
                total_subwords: subwords.len(),
                blocked,
            },
        );
    }
    let total_words = expansion.len();
    CoverageReport {
        total_words,
        fully_pruned_words: blocked_words,
        coverage: if total_words == 0 {
            0.0
        } else {
            blocked_words as f64 / total_words as f64
        },
        per_word,
    }
}

/// Reads a word list: one word per line, `#` comments and blank lines skipped.
pub fn load_wordlist(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let words = parse_wordlist(&text);
    if words.is_empty() {
        return Err(Error::EmptyWordList);
    }
    Ok(words)
}

pub fn parse_wordlist(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(String::from)
        .collect()
}
