//! Beam search on a small scripted model: the pruned token's branch never
//! enters the beam, and finished hypotheses shrink the beam one at a time.
//!
//! ```bash
//! cargo run -p toxprune --example beam_search
//! ```

use toxprune::{beam_search, PruneSet, SamplingConfig, ScriptedLm, Strategy};

const NAMES: [&str; 5] = ["<eos>", "you", "are", "great", "jerk"];

fn show(ids: &[u32]) -> String {
    ids.iter()
        .map(|&id| NAMES[id as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> toxprune::Result<()> {
    // "you are jerk" is the model's favourite; "you are great" is close behind.
    let lm = ScriptedLm::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 0)?
        .with(vec![], vec![-2.0, 3.0, 0.0, 0.0, 1.0])?
        .with(vec![1], vec![-2.0, 0.0, 3.0, 0.0, 0.5])?
        .with(vec![1, 2], vec![-1.0, 0.0, 0.0, 2.0, 2.5])?
        .with(vec![1, 2, 3], vec![3.0, 0.0, 0.0, 0.0, 0.0])?
        .with(vec![1, 2, 4], vec![3.0, 0.0, 0.0, 0.0, 0.0])?;
    let cfg = SamplingConfig::new(Strategy::Beam {
        beam_width: 3,
        length_normalize: true,
    })
    .with_max_len(5);

    for (label, prune) in [
        ("no pruning", PruneSet::empty("demo")),
        ("\"jerk\" pruned", PruneSet::from_ids([4], &[], "demo")),
    ] {
        println!("{label}:");
        for h in beam_search(&lm, &[], &cfg, &prune)? {
            println!(
                "  {:<26} logprob {:>7.3}  per token {:>7.3}{}",
                show(&h.ids),
                h.logprob,
                h.score(true),
                if h.finished { "" } else { "  (unfinished)" }
            );
        }
    }
    Ok(())
}
