//! Toxic subword pruning for constrained decoding.
//!
//! A toxic word list is tokenized with a BPE vocabulary; the resulting
//! subword ids form a [`PruneSet`] that the decoder masks out of every
//! next-token distribution before greedy, top-k, top-p or beam-search
//! selection. Deterministic toy language models and the usual dialogue
//! metrics (BLEU, ROUGE, Distinct-N, a lexicon toxicity rate) make the effect
//! measurable on a laptop.
//!
//! ```
//! use toxprune::{apply_prune_mask, top_k_distribution, PruneSet};
//!
//! let prune = PruneSet::from_ids([0], &[], "doc");
//! let masked = apply_prune_mask(&[2.0, 1.0, 0.0, -1.0], &prune).unwrap();
//! let dist = top_k_distribution(&masked, 2, 1.0).unwrap();
//! assert_eq!(dist.support(), &[1, 2]);
//! assert_eq!(dist.prob(0), 0.0);
//! ```

pub mod cli;
pub mod decoding;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod prunelist;
pub mod tokenizer;

pub use decoding::{
    apply_prune_mask, argmax, beam_search, decode, full_distribution, generate, sample_next,
    top_k_distribution, top_p_distribution, BeamHypothesis, Generation, GenerationRecord,
    MaskedDistribution, SamplingConfig, Strategy,
};
pub use error::{Error, Result};
pub use lm::{BiasWrapper, LogitSource, NgramLm, ScriptedLm};
pub use metrics::{bleu, distinct_n, lexical_toxicity, rouge, EvalCorpus, EvalItem, MetricReport};
pub use prunelist::{build_prune_set, coverage_report, CoverageReport, PruneSet};
pub use tokenizer::{SurfaceVariants, TokenId, Vocabulary, WordExpansion};

use std::path::PathBuf;

/// Directory holding the bundled toy vocabulary, word list and dialogue fixtures.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}
