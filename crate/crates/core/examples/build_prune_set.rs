//! Builds prune sets from the bundled toxic word list at several fractions
//! and reports how many words each one blocks.
//!
//! ```bash
//! cargo run -p toxprune --example build_prune_set -- [seed]
//! ```

use toxprune::prunelist::load_wordlist;
use toxprune::{build_prune_set, coverage_report, data_dir, SurfaceVariants, Vocabulary};

fn main() -> toxprune::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("seed"));
    let dir = data_dir();
    let vocab = Vocabulary::load(dir.join("vocab.json"), dir.join("merges.txt"))?;
    let words = load_wordlist(dir.join("toxic_words.txt"))?;
    let expansion = vocab.expand_words(&words, SurfaceVariants::default())?;

    println!(
        "{} words -> {} distinct subwords",
        words.len(),
        expansion.all_ids().len()
    );
    println!("fraction  pruned  blocked words  coverage");
    for fraction in [0.25, 0.5, 0.75, 1.0] {
        let prune = build_prune_set(&expansion, fraction, seed, &vocab)?;
        let coverage = coverage_report(&prune, &expansion);
        println!(
            "{fraction:>8.2}  {:>6}  {:>6}/{:<6}  {:.3}",
            prune.len(),
            coverage.fully_pruned_words,
            coverage.total_words,
            coverage.coverage
        );
    }

    let half = build_prune_set(&expansion, 0.5, seed, &vocab)?;
    let report = coverage_report(&half, &expansion);
    let open: Vec<&String> = report
        .per_word
        .iter()
        .filter(|(_, c)| !c.blocked)
        .map(|(w, _)| w)
        .take(8)
        .collect();
    println!("still generable at 0.50: {open:?} ...");

    let out = std::env::temp_dir().join("toxprune_pruneset.json");
    half.save(&out)?;
    println!("saved the 0.50 set to {}", out.display());
    Ok(())
}
