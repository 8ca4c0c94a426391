//! Shows the prune mask at work on one next-token distribution and on full
//! generations from a toxicity-biased n-gram model.
//!
//! ```bash
//! cargo run -p toxprune --example masked_sampling
//! ```

use toxprune::cli::load_corpus;
use toxprune::prunelist::load_wordlist;
use toxprune::{
    apply_prune_mask, build_prune_set, data_dir, decode, lexical_toxicity, top_k_distribution,
    BiasWrapper, LogitSource, NgramLm, PruneSet, SamplingConfig, SurfaceVariants, Vocabulary,
};

fn main() -> toxprune::Result<()> {
    // A single step: the mask removes id 0 before the top-k window is taken.
    let logits = [2.0, 1.0, 0.0, -1.0];
    let prune = PruneSet::from_ids([0], &[], "demo");
    let plain = top_k_distribution(&logits, 2, 1.0)?;
    let masked = top_k_distribution(&apply_prune_mask(&logits, &prune)?, 2, 1.0)?;
    println!(
        "top-2 without mask: support {:?} probs {:.4?}",
        plain.support(),
        plain.probs()
    );
    println!(
        "top-2 with id 0 pruned: support {:?} probs {:.4?}",
        masked.support(),
        masked.probs()
    );

    // Whole generations from the toy "toxic" model.
    let dir = data_dir();
    let vocab = Vocabulary::load(dir.join("vocab.json"), dir.join("merges.txt"))?;
    let words = load_wordlist(dir.join("toxic_words.txt"))?;
    let corpus = load_corpus(dir.join("corpus.txt"), &vocab)?;
    let base = NgramLm::train(&corpus, 3, 0.001, &vocab)?;
    let lowercase = SurfaceVariants {
        lowercase: true,
        capitalized: false,
    };
    let toxic = vocab.expand_words(&words, lowercase)?.all_ids();
    let lm = BiasWrapper::new(base, toxic, 4.0)?;
    println!("\nbiased n-gram model over {} tokens", lm.vocab_size());

    let expansion = vocab.expand_words(&words, SurfaceVariants::default())?;
    let full = build_prune_set(&expansion, 1.0, 0, &vocab)?;
    let none = PruneSet::empty(vocab.fingerprint());
    let prompt = "what did you do this weekend ?";
    let ids = vocab.encode(prompt);
    println!("prompt: {prompt}");
    for (label, prune) in [("unpruned", &none), ("pruned", &full)] {
        let mut texts = Vec::new();
        for stream in 0..3 {
            let cfg = SamplingConfig::top_k(50).with_max_len(24).with_seed(1);
            let generation = decode(&lm, &ids, &cfg, prune, stream)?;
            texts.push(vocab.decode(&generation.output_ids)?);
        }
        println!(
            "{label:>9} (toxicity {:.2}):",
            lexical_toxicity(&texts, &words)?
        );
        for t in &texts {
            println!("           {t}");
        }
    }
    Ok(())
}
