//! Scores a small set of responses with BLEU, ROUGE, Distinct-N and the
//! lexicon toxicity rate.
//!
//! ```bash
//! cargo run -p toxprune --example evaluate
//! ```

use toxprune::metrics::BleuStats;
use toxprune::prunelist::load_wordlist;
use toxprune::{data_dir, EvalCorpus, MetricReport};

fn main() -> toxprune::Result<()> {
    let dir = data_dir();
    let corpus = EvalCorpus::load(dir.join("golden/eval_fixture.jsonl"))?;
    let words = load_wordlist(dir.join("toxic_words.txt"))?;

    for item in &corpus.items {
        println!("{:<32} vs {:?}", item.candidate, item.references);
    }
    let stats = BleuStats::collect(&corpus, 4);
    println!(
        "\nclipped n-gram matches {:?} of {:?}",
        stats.matches, stats.totals
    );
    println!(
        "candidate length {}, reference length {}, BP {:.4}",
        stats.candidate_len,
        stats.reference_len,
        stats.brevity_penalty()
    );

    let report = MetricReport::evaluate(&corpus, &words)?;
    println!("\n{}", MetricReport::csv_header());
    println!("{}", report.csv_row());
    Ok(())
}
