//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toxprune::prunelist::load_wordlist;
use toxprune::{data_dir, PruneSet, ScriptedLm, TokenId, Vocabulary};

pub fn toy_vocab() -> Vocabulary {
    let dir = data_dir();
    Vocabulary::load(dir.join("vocab.json"), dir.join("merges.txt")).unwrap()
}

pub fn toy_words() -> Vec<String> {
    load_wordlist(data_dir().join("toxic_words.txt")).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random logits. With `coarse`, values come from a handful of integers so
/// ties are common.
pub fn random_logits(rng: &mut impl Rng, len: usize, coarse: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if coarse {
                rng.random_range(-2..=2) as f64
            } else {
                rng.random_range(-6.0..6.0)
            }
        })
        .collect()
}

/// A scripted LM whose table covers every eos-free prefix shorter than
/// `depth`, so each reachable decoding state has its own random logits.
pub fn random_scripted_lm(
    rng: &mut impl Rng,
    vocab_size: usize,
    depth: usize,
    coarse: bool,
) -> ScriptedLm {
    let eos = rng.random_range(0..vocab_size) as TokenId;
    let mut lm = ScriptedLm::new(random_logits(rng, vocab_size, coarse), eos).unwrap();
    let mut frontier: Vec<Vec<TokenId>> = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for prefix in frontier {
            lm.insert(prefix.clone(), random_logits(rng, vocab_size, coarse))
                .unwrap();
            for id in 0..vocab_size as TokenId {
                if id != eos {
                    let mut longer = prefix.clone();
                    longer.push(id);
                    next.push(longer);
                }
            }
        }
        frontier = next;
    }
    lm
}

/// A scripted LM with sparse random table entries, cheap for large fuzz runs.
pub fn sparse_scripted_lm(rng: &mut impl Rng, vocab_size: usize, entries: usize) -> ScriptedLm {
    let eos = rng.random_range(0..vocab_size) as TokenId;
    let mut lm = ScriptedLm::new(random_logits(rng, vocab_size, false), eos).unwrap();
    for _ in 0..entries {
        let len = rng.random_range(0..4);
        let prefix: Vec<TokenId> = (0..len)
            .map(|_| rng.random_range(0..vocab_size) as TokenId)
            .collect();
        let coarse = rng.random_bool(0.3);
        lm.insert(prefix, random_logits(rng, vocab_size, coarse))
            .unwrap();
    }
    lm
}

/// A random prune set that never contains `eos` and leaves at least one id.
pub fn random_prune_set(rng: &mut impl Rng, vocab_size: usize, eos: TokenId) -> PruneSet {
    let density = rng.random_range(0.0..0.9);
    let ids: BTreeSet<TokenId> = (0..vocab_size as TokenId)
        .filter(|&id| id != eos && rng.random_bool(density))
        .collect();
    PruneSet::from_ids(ids, &[eos], "fuzz")
}
