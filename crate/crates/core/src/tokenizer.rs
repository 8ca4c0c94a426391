//! Character-level BPE with an explicit end-of-word marker.
//!
//! A word is split into characters, the marker is glued onto the last one,
//! and merges are replayed lowest rank first until none applies. Symbols
//! that are not in the vocabulary become `unk`.
//!
//! On disk a vocabulary is a JSON object mapping token strings to ids plus a
//! plain-text merges file with one `left right` pair per line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const DEFAULT_EOW: &str = "</w>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
const EOW_KEY: &str = "__eow__";

/// An immutable BPE vocabulary: token strings indexed by id, ranked merges,
/// the end-of-word marker and the three special ids.
#[derive(Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    eow: String,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.tokens.len())
            .field("merges", &self.merges.len())
            .field("eow", &self.eow)
            .finish()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order.
    pub fn new(
        tokens: Vec<String>,
        merges: Vec<(String, String)>,
        eow: impl Into<String>,
    ) -> Result<Self> {
        let eow = eow.into();
        if eow.is_empty() {
            return Err(Error::MalformedFile("end-of-word marker is empty".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id as TokenId).is_some() {
                return Err(Error::DuplicateToken(token.clone()));
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.iter().enumerate() {
            for symbol in [left.clone(), right.clone(), format!("{left}{right}")] {
                if !index.contains_key(&symbol) {
                    return Err(Error::UnknownMergeSymbol(symbol));
                }
            }
            // first occurrence keeps its rank
            ranks.entry((left.clone(), right.clone())).or_insert(rank);
        }
        let special = |name: &'static str| {
            index
                .get(name)
                .copied()
                .ok_or(Error::MissingSpecialToken(name))
        };
        let (bos, eos, unk) = (special(BOS)?, special(EOS)?, special(UNK)?);
        Ok(Self {
            tokens,
            index,
            merges,
            ranks,
            eow,
            bos,
            eos,
            unk,
        })
    }

    /// Loads `vocab.json` and `merges.txt`.
    pub fn load(vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Self> {
        let vocab_path = vocab_path.as_ref();
        let merges_path = merges_path.as_ref();
        let vocab_text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let merges_text = fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
        Self::from_texts(&vocab_text, &merges_text)
    }

    /// Parses the two file formats from memory.
    pub fn from_texts(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let (tokens, eow) = parse_vocab_json(vocab_json)?;
        let merges = parse_merges(merges_txt)?;
        Self::new(tokens, merges, eow)
    }

    pub fn save(&self, vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<()> {
        let vocab_path = vocab_path.as_ref();
        let merges_path = merges_path.as_ref();
        fs::write(vocab_path, self.to_vocab_json()).map_err(|e| Error::io(vocab_path, e))?;
        fs::write(merges_path, self.to_merges_txt()).map_err(|e| Error::io(merges_path, e))
    }

    /// Canonical `vocab.json` text, one entry per line in id order.
    pub fn to_vocab_json(&self) -> String {
        let mut lines: Vec<String> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(id, token)| format!("  {}: {}", json_string(token), id))
            .collect();
        if self.eow != DEFAULT_EOW {
            lines.push(format!(
                "  {}: {}",
                json_string(EOW_KEY),
                json_string(&self.eow)
            ));
        }
        format!("{{\n{}\n}}\n", lines.join(",\n"))
    }

    pub fn to_merges_txt(&self) -> String {
        let mut out = String::from("#version: toxprune-bpe\n");
        for (left, right) in &self.merges {
            out.push_str(left);
            out.push(' ');
            out.push_str(right);
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the canonical vocab and merges texts, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_vocab_json().as_bytes());
        hasher.update(b"\0");
        hasher.update(self.to_merges_txt().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn eow(&self) -> &str {
        &self.eow
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn special_ids(&self) -> [TokenId; 3] {
        [self.bos, self.eos, self.unk]
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id == self.bos || id == self.eos || id == self.unk
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        check_ids(ids, self.len())
    }

    /// Encodes whitespace-separated text. No bos/eos is added.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            ids.extend(self.encode_word(word));
        }
        ids
    }

    pub fn encode_word(&self, word: &str) -> Vec<TokenId> {
        self.merge_word(word, None)
            .iter()
            .map(|symbol| self.index.get(symbol).copied().unwrap_or(self.unk))
            .collect()
    }

    /// Final symbols of `word` plus the merge ranks in the order they fired.
    pub fn merge_trace(&self, word: &str) -> (Vec<String>, Vec<usize>) {
        let mut trace = Vec::new();
        let symbols = self.merge_word(word, Some(&mut trace));
        (symbols, trace)
    }

    fn merge_word(&self, word: &str, mut trace: Option<&mut Vec<usize>>) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        match symbols.last_mut() {
            Some(last) => last.push_str(&self.eow),
            None => return symbols,
        }
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|pair| self.ranks.get(&(pair[0].clone(), pair[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(rank);
            }
        }
        symbols
    }

    /// Concatenates token strings, turning each end-of-word marker into a
    /// space. bos/eos are dropped and the trailing space is trimmed.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        self.check_ids(ids)?;
        let mut out = String::new();
        for &id in ids {
            if id == self.bos || id == self.eos {
                continue;
            }
            out.push_str(&self.tokens[id as usize].replace(&self.eow, " "));
        }
        let trimmed = out.trim_end_matches(' ').len();
        out.truncate(trimmed);
        Ok(out)
    }

    /// Canonical tokenizations of every enabled surface variant of each word.
    pub fn expand_words<S: AsRef<str>>(
        &self,
        words: &[S],
        variants: SurfaceVariants,
    ) -> Result<WordExpansion> {
        if words.is_empty() {
            return Err(Error::EmptyWordList);
        }
        if !variants.lowercase && !variants.capitalized {
            return Err(Error::InvalidConfig("no surface variant enabled".into()));
        }
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for word in words {
            let word = word.as_ref().trim();
            if word.is_empty() {
                return Err(Error::InvalidConfig(
                    "word list contains an empty word".into(),
                ));
            }
            if !seen.insert(word.to_string()) {
                continue;
            }
            let mut forms: Vec<String> = Vec::new();
            let lower = word.to_lowercase();
            if variants.lowercase {
                forms.push(lower.clone());
            }
            if variants.capitalized {
                forms.push(capitalize(&lower));
            }
            let mut tokenizations: Vec<Vec<TokenId>> = Vec::new();
            for form in forms {
                let ids = self.encode(&form);
                if !tokenizations.contains(&ids) {
                    tokenizations.push(ids);
                }
            }
            entries.push(WordEntry {
                word: word.to_string(),
                variants: tokenizations,
            });
        }
        Ok(WordExpansion { entries })
    }
}

pub(crate) fn check_ids(ids: &[TokenId], vocab_size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::InvalidTokenId { id, vocab_size }),
        None => Ok(()),
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Which surface forms of a listed word get tokenized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceVariants {
    pub lowercase: bool,
    pub capitalized: bool,
}

impl Default for SurfaceVariants {
    fn default() -> Self {
        Self {
            lowercase: true,
            capitalized: true,
        }
    }
}

/// Word list expanded into subword sequences, in list order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordExpansion {
    pub entries: Vec<WordEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: String,
    pub variants: Vec<Vec<TokenId>>,
}

impl WordEntry {
    /// Distinct ids across all variants of the word.
    pub fn subwords(&self) -> BTreeSet<TokenId> {
        self.variants.iter().flatten().copied().collect()
    }
}

impl WordExpansion {
    pub fn from_map(map: BTreeMap<String, Vec<Vec<TokenId>>>) -> Self {
        let entries = map
            .into_iter()
            .map(|(word, variants)| WordEntry { word, variants })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&WordEntry> {
        self.entries.iter().find(|e| e.word == word)
    }

    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    /// Union of subword ids over every word and variant.
    pub fn all_ids(&self) -> BTreeSet<TokenId> {
        self.entries.iter().flat_map(WordEntry::subwords).collect()
    }
}

/// Collects the entries of a JSON object without collapsing duplicate keys.
struct RawEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for RawEntries {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl<'de> serde::de::Visitor<'de> for Visitor {
            type Value = RawEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object mapping token strings to ids")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<RawEntries, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry::<String, serde_json::Value>()? {
                    entries.push(entry);
                }
                Ok(RawEntries(entries))
            }
        }
        deserializer.deserialize_map(Visitor)
    }
}

fn parse_vocab_json(text: &str) -> Result<(Vec<String>, String)> {
    let RawEntries(entries) =
        serde_json::from_str(text).map_err(|e| Error::MalformedFile(format!("vocab.json: {e}")))?;
    let mut eow = DEFAULT_EOW.to_string();
    let mut seen = BTreeSet::new();
    let mut by_id: Vec<(usize, String)> = Vec::with_capacity(entries.len());
    for (token, value) in entries {
        if token == EOW_KEY {
            eow = value
                .as_str()
                .ok_or_else(|| Error::MalformedFile(format!("{EOW_KEY} must be a string")))?
                .to_string();
            continue;
        }
        let id = value.as_u64().ok_or_else(|| {
            Error::MalformedFile(format!("id of {token:?} is not a non-negative integer"))
        })?;
        if !seen.insert(token.clone()) {
            return Err(Error::DuplicateToken(token));
        }
        by_id.push((id as usize, token));
    }
    by_id.sort();
    let mut tokens = Vec::with_capacity(by_id.len());
    for (expected, (found, token)) in by_id.into_iter().enumerate() {
        if found != expected {
            return Err(Error::NonContiguousIds { expected, found });
        }
        tokens.push(token);
    }
    Ok((tokens, eow))
}

fn parse_merges(text: &str) -> Result<Vec<(String, String)>> {
    let mut merges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(left), Some(right), None) => merges.push((left.to_string(), right.to_string())),
            _ => {
                return Err(Error::MalformedFile(format!(
                    "merges line {}: expected \"left right\", got {line:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(merges)
}

/// Learns `num_merges` BPE merges from word frequencies. The most frequent
/// adjacent pair wins; ties go to the lexicographically smallest pair.
///
/// Returns the merges and the resulting token list: specials, then the
/// base alphabet (each character bare and with the marker), then one token
/// per merge.
pub fn learn_merges(
    word_counts: &BTreeMap<String, u64>,
    alphabet: &[char],
    num_merges: usize,
    eow: &str,
) -> (Vec<String>, Vec<(String, String)>) {
    let mut tokens: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
    for &c in alphabet {
        tokens.push(c.to_string());
    }
    for &c in alphabet {
        tokens.push(format!("{c}{eow}"));
    }
    let mut known: BTreeSet<String> = tokens.iter().cloned().collect();

    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, &count)| {
            let mut symbols: Vec<String> = w.chars().map(String::from).collect();
            symbols.last_mut().unwrap().push_str(eow);
            (symbols, count)
        })
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (symbols, count) in &words {
            for pair in symbols.windows(2) {
                *pairs.entry((pair[0].clone(), pair[1].clone())).or_default() += count;
            }
        }
        let Some(((left, right), _)) = pairs
            .into_iter()
            .filter(|((l, r), _)| !known.contains(&format!("{l}{r}")))
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        else {
            break;
        };
        let joined = format!("{left}{right}");
        for (symbols, _) in &mut words {
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(joined.clone());
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            *symbols = merged;
        }
        known.insert(joined.clone());
        tokens.push(joined);
        merges.push((left, right));
    }
    (tokens, merges)
}
