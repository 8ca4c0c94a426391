//! Regenerates the bundled toy vocabulary from the bundled corpus.
//!
//! Word frequencies come from the n-gram training corpus plus the toxic word
//! list; BPE merges are learned greedily and written next to the corpus.
//!
//! ```bash
//! cargo run -p toxprune --example build_toy_assets -- [num_merges] [out_dir]
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use toxprune::prunelist::load_wordlist;
use toxprune::tokenizer::{learn_merges, DEFAULT_EOW};
use toxprune::Vocabulary;

/// More than the corpus can use, so merging runs until every word is one token.
const DEFAULT_MERGES: usize = 5000;

fn main() -> toxprune::Result<()> {
    let mut args = std::env::args().skip(1);
    let num_merges = args
        .next()
        .map_or(DEFAULT_MERGES, |n| n.parse().expect("merge count"));
    let out_dir = args.next().map_or_else(toxprune::data_dir, PathBuf::from);
    let data = toxprune::data_dir();

    let corpus = std::fs::read_to_string(data.join("corpus.txt")).expect("corpus.txt");
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for word in corpus.split_whitespace() {
        *counts.entry(word.to_string()).or_default() += 1;
    }
    for word in load_wordlist(data.join("toxic_words.txt"))? {
        *counts.entry(word).or_default() += 1;
    }

    let mut alphabet: Vec<char> = ".,!?'-".chars().collect();
    alphabet.extend('0'..='9');
    alphabet.extend('A'..='Z');
    alphabet.extend('a'..='z');

    let (tokens, merges) = learn_merges(&counts, &alphabet, num_merges, DEFAULT_EOW);
    let vocab = Vocabulary::new(tokens, merges, DEFAULT_EOW)?;
    vocab.save(out_dir.join("vocab.json"), out_dir.join("merges.txt"))?;
    println!(
        "{} tokens, {} merges, fingerprint {}",
        vocab.len(),
        vocab.merges().len(),
        vocab.fingerprint()
    );
    Ok(())
}
