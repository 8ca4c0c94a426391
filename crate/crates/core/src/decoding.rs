//! Pruned decoding.
//!
//! Every step scores the prefix, sets pruned ids to `-inf`, applies the
//! temperature, and only then truncates (top-k / top-p) and renormalizes.
//! Masking before truncation means top-k still sees `k` live candidates when
//! at least `k` unpruned ids exist. Beam search uses log-probabilities of the
//! same masked, renormalized distribution, so pruned continuations score
//! `-inf` and never enter the beam.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LogitSource;
use crate::prunelist::PruneSet;
use crate::tokenizer::{check_ids, TokenId, Vocabulary};

pub const DEFAULT_MAX_LEN: usize = 64;

const RENORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    TopK {
        k: usize,
    },
    TopP {
        p: f64,
    },
    Beam {
        beam_width: usize,
        #[serde(default = "default_true")]
        length_normalize: bool,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::TopK { .. } => "top_k",
            Strategy::TopP { .. } => "top_p",
            Strategy::Beam { .. } => "beam",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => write!(f, "greedy"),
            Strategy::TopK { k } => write!(f, "top_k(k={k})"),
            Strategy::TopP { p } => write!(f, "top_p(p={p})"),
            Strategy::Beam {
                beam_width,
                length_normalize,
            } => {
                write!(
                    f,
                    "beam(width={beam_width}, length_normalize={length_normalize})"
                )
            }
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SamplingConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            max_len: DEFAULT_MAX_LEN,
            temperature: 1.0,
            rng_seed: 0,
        }
    }

    pub fn greedy() -> Self {
        Self::new(Strategy::Greedy)
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(Strategy::TopK { k })
    }

    pub fn top_p(p: f64) -> Self {
        Self::new(Strategy::TopP { p })
    }

    pub fn beam(beam_width: usize) -> Self {
        Self::new(Strategy::Beam {
            beam_width,
            length_normalize: true,
        })
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self.strategy {
            Strategy::TopK { k } if k < 1 => return bad(format!("k must be >= 1, got {k}")),
            Strategy::TopP { p } if !(p > 0.0 && p <= 1.0) => {
                return bad(format!("p must be in (0, 1], got {p}"))
            }
            Strategy::Beam { beam_width, .. } if beam_width < 1 => {
                return bad(format!("beam_width must be >= 1, got {beam_width}"))
            }
            _ => {}
        }
        if self.max_len < 1 {
            return bad("max_len must be >= 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            ));
        }
        Ok(())
    }
}

/// Sets every pruned id to `-inf`; other entries are left untouched.
pub fn apply_prune_mask(logits: &[f64], prune: &PruneSet) -> Result<Vec<f64>> {
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidLogits(format!(
            "non-finite logit {x} before masking"
        )));
    }
    let mut masked = logits.to_vec();
    for &id in &prune.ids {
        match masked.get_mut(id as usize) {
            Some(slot) => *slot = f64::NEG_INFINITY,
            None => {
                return Err(Error::InvalidTokenId {
                    id,
                    vocab_size: logits.len(),
                })
            }
        }
    }
    if masked.iter().all(|x| *x == f64::NEG_INFINITY) {
        return Err(Error::AllMasked);
    }
    Ok(masked)
}

/// A normalized distribution over the vocabulary after masking and truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDistribution {
    probs: Vec<f64>,
    support: Vec<TokenId>,
}

impl MaskedDistribution {
    /// Softmax at `temperature` over `kept` (finite logits only).
    fn from_kept(logits: &[f64], kept: &[TokenId], temperature: f64) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::NoCandidates);
        }
        let max = kept
            .iter()
            .map(|&id| logits[id as usize] / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; logits.len()];
        let mut sum = 0.0;
        for &id in kept {
            let e = (logits[id as usize] / temperature - max).exp();
            probs[id as usize] = e;
            sum += e;
        }
        let mut support = Vec::with_capacity(kept.len());
        for (id, p) in probs.iter_mut().enumerate() {
            if *p > 0.0 {
                *p /= sum;
                support.push(id as TokenId);
            }
        }
        Ok(Self { probs, support })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    /// Ids with non-zero probability, ascending.
    pub fn support(&self) -> &[TokenId] {
        &self.support
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

/// Unmasked ids ordered by logit descending, ties toward the lower id.
fn ranked_candidates(logits: &[f64]) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..logits.len() as TokenId)
        .filter(|&id| logits[id as usize].is_finite())
        .collect();
    ids.sort_by(|&a, &b| {
        logits[b as usize]
            .total_cmp(&logits[a as usize])
            .then(a.cmp(&b))
    });
    ids
}

/// Renormalized softmax over every unmasked id.
pub fn full_distribution(logits: &[f64], temperature: f64) -> Result<MaskedDistribution> {
    let kept: Vec<TokenId> = (0..logits.len() as TokenId)
        .filter(|&id| logits[id as usize].is_finite())
        .collect();
    MaskedDistribution::from_kept(logits, &kept, temperature)
}

/// Keeps the `k` highest unmasked logits (all of them if fewer remain).
pub fn top_k_distribution(
    logits: &[f64],
    k: usize,
    temperature: f64,
) -> Result<MaskedDistribution> {
    let mut kept = ranked_candidates(logits);
    kept.truncate(k);
    MaskedDistribution::from_kept(logits, &kept, temperature)
}

/// Keeps the smallest probability-ranked prefix whose mass reaches `p`.
pub fn top_p_distribution(logits: &[f64], p: f64, temperature: f64) -> Result<MaskedDistribution> {
    let full = full_distribution(logits, temperature)?;
    let ranked = ranked_candidates(logits);
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for id in ranked {
        kept.push(id);
        mass += full.prob(id);
        if mass >= p - RENORM_TOLERANCE {
            break;
        }
    }
    MaskedDistribution::from_kept(logits, &kept, temperature)
}

/// Highest unmasked logit, ties toward the lower id.
pub fn argmax(logits: &[f64]) -> Result<TokenId> {
    ranked_candidates(logits)
        .first()
        .copied()
        .ok_or(Error::NoCandidates)
}

/// Inverse-CDF draw over ascending ids.
pub fn sample_next<R: Rng + ?Sized>(dist: &MaskedDistribution, rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for &id in &dist.support {
        cumulative += dist.probs[id as usize];
        if u < cumulative {
            return id;
        }
    }
    *dist.support.last().expect("support is never empty")
}

/// RNG for one generation: `seed` selects the sequence, `stream` separates
/// independent generations under the same seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Output of one decoding run.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Emitted ids, without the prompt and without a trailing eos.
    pub output_ids: Vec<TokenId>,
    pub support_sizes: Vec<usize>,
    /// True when decoding stopped on eos rather than `max_len`.
    pub finished: bool,
}

fn check_inputs<S: LogitSource>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
) -> Result<()> {
    cfg.validate()?;
    check_ids(prompt, source.vocab_size())?;
    let eos = source.eos();
    if prune.contains(eos) {
        return Err(Error::EosPruned(eos));
    }
    Ok(())
}

fn masked_scores<S: LogitSource>(
    source: &S,
    prefix: &[TokenId],
    prune: &PruneSet,
) -> Result<Vec<f64>> {
    let logits = source.score(prefix)?;
    if logits.len() != source.vocab_size() {
        return Err(Error::InvalidLogits(format!(
            "scorer returned {} entries for vocabulary size {}",
            logits.len(),
            source.vocab_size()
        )));
    }
    apply_prune_mask(&logits, prune)
}

/// Autoregressive greedy / top-k / top-p decoding, seeded from `cfg.rng_seed`.
pub fn generate<S: LogitSource>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
) -> Result<Generation> {
    let mut rng = rng_for(cfg.rng_seed, 0);
    generate_with_rng(source, prompt, cfg, prune, &mut rng)
}

pub fn generate_with_rng<S: LogitSource, R: Rng + ?Sized>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
    rng: &mut R,
) -> Result<Generation> {
    check_inputs(source, prompt, cfg, prune)?;
    let eos = source.eos();
    let mut prefix = prompt.to_vec();
    let mut output_ids = Vec::new();
    let mut support_sizes = Vec::new();
    for _ in 0..cfg.max_len {
        let logits = masked_scores(source, &prefix, prune)?;
        let (next, support) = match cfg.strategy {
            Strategy::Greedy => (argmax(&logits)?, 1),
            Strategy::TopK { k } => {
                let dist = top_k_distribution(&logits, k, cfg.temperature)?;
                (sample_next(&dist, rng), dist.support_size())
            }
            Strategy::TopP { p } => {
                let dist = top_p_distribution(&logits, p, cfg.temperature)?;
                (sample_next(&dist, rng), dist.support_size())
            }
            Strategy::Beam { .. } => {
                return Err(Error::InvalidConfig(
                    "beam strategy is decoded by beam_search".into(),
                ))
            }
        };
        support_sizes.push(support);
        if next == eos {
            return Ok(Generation {
                output_ids,
                support_sizes,
                finished: true,
            });
        }
        output_ids.push(next);
        prefix.push(next);
    }
    Ok(Generation {
        output_ids,
        support_sizes,
        finished: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    /// Generated ids; ends with eos iff `finished`.
    pub ids: Vec<TokenId>,
    /// Sum of per-step log-probabilities under the masked distribution.
    pub logprob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Ranking score: mean per-token log-probability, or the raw sum.
    pub fn score(&self, length_normalize: bool) -> f64 {
        if length_normalize && !self.ids.is_empty() {
            self.logprob / self.ids.len() as f64
        } else {
            self.logprob
        }
    }
}

/// Log-softmax over unmasked entries; masked entries stay `-inf`.
pub fn log_softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let max = logits
        .iter()
        .map(|x| x / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoCandidates);
    }
    let lse = logits
        .iter()
        .map(|x| (x / temperature - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    Ok(logits.iter().map(|x| x / temperature - lse).collect())
}

/// Final ordering: score descending, then ids lexicographically.
pub fn rank_hypotheses(hyps: &mut [BeamHypothesis], length_normalize: bool) {
    hyps.sort_by(|a, b| {
        b.score(length_normalize)
            .total_cmp(&a.score(length_normalize))
            .then_with(|| a.ids.cmp(&b.ids))
    });
}

/// Beam search over the masked distribution.
///
/// Each step keeps the best `size` extensions of the active hypotheses.
/// Every selected eos moves its hypothesis to the finished list and shrinks
/// `size` by one; the search ends when the beam is empty or `max_len` steps
/// have run, in which case the surviving hypotheses are returned unfinished.
/// The result is ranked best first.
pub fn beam_search<S: LogitSource>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
) -> Result<Vec<BeamHypothesis>> {
    Ok(beam_search_traced(source, prompt, cfg, prune)?.0)
}

fn beam_search_traced<S: LogitSource>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
) -> Result<(Vec<BeamHypothesis>, Vec<usize>)> {
    check_inputs(source, prompt, cfg, prune)?;
    let Strategy::Beam {
        beam_width,
        length_normalize,
    } = cfg.strategy
    else {
        return Err(Error::InvalidConfig(format!(
            "beam_search needs the beam strategy, got {}",
            cfg.strategy
        )));
    };
    let eos = source.eos();
    let mut size = beam_width;
    let mut active = vec![BeamHypothesis {
        ids: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    let mut finished = Vec::new();
    let mut beam_sizes = Vec::new();

    for _ in 0..cfg.max_len {
        if active.is_empty() || size == 0 {
            break;
        }
        let mut candidates: Vec<(f64, usize, TokenId)> = Vec::new();
        for (parent, hyp) in active.iter().enumerate() {
            let mut prefix = prompt.to_vec();
            prefix.extend_from_slice(&hyp.ids);
            let logprobs = log_softmax(&masked_scores(source, &prefix, prune)?, cfg.temperature)?;
            for (id, lp) in logprobs.into_iter().enumerate() {
                if lp.is_finite() {
                    candidates.push((hyp.logprob + lp, parent, id as TokenId));
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        candidates.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => (a.1, a.2).cmp(&(b.1, b.2)),
            other => other,
        });
        candidates.truncate(size);

        let mut next = Vec::with_capacity(candidates.len());
        for (logprob, parent, id) in candidates {
            let mut ids = active[parent].ids.clone();
            ids.push(id);
            if id == eos {
                finished.push(BeamHypothesis {
                    ids,
                    logprob,
                    finished: true,
                });
                size -= 1;
            } else {
                next.push(BeamHypothesis {
                    ids,
                    logprob,
                    finished: false,
                });
            }
        }
        beam_sizes.push(next.len());
        active = next;
    }

    finished.extend(active);
    rank_hypotheses(&mut finished, length_normalize);
    Ok((finished, beam_sizes))
}

/// Runs any strategy. Beam search returns its best hypothesis, with the
/// per-step active beam size as the support trace.
pub fn decode<S: LogitSource>(
    source: &S,
    prompt: &[TokenId],
    cfg: &SamplingConfig,
    prune: &PruneSet,
    stream: u64,
) -> Result<Generation> {
    match cfg.strategy {
        Strategy::Beam { .. } => {
            let (hyps, beam_sizes) = beam_search_traced(source, prompt, cfg, prune)?;
            let best = hyps.into_iter().next().ok_or(Error::NoCandidates)?;
            let mut output_ids = best.ids;
            if best.finished {
                output_ids.pop();
            }
            Ok(Generation {
                output_ids,
                support_sizes: beam_sizes,
                finished: best.finished,
            })
        }
        _ => {
            let mut rng = rng_for(cfg.rng_seed, stream);
            generate_with_rng(source, prompt, cfg, prune, &mut rng)
        }
    }
}

/// One decoded response with its inputs, as written to JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt: String,
    pub output_text: String,
    pub output_ids: Vec<TokenId>,
    pub strategy: String,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub beam_width: Option<usize>,
    pub seed: u64,
    pub pruneset_fingerprint: String,
    pub support_sizes: Vec<usize>,
}

impl GenerationRecord {
    pub fn new(
        prompt: impl Into<String>,
        generation: Generation,
        cfg: &SamplingConfig,
        prune: &PruneSet,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let (k, p, beam_width) = match cfg.strategy {
            Strategy::Greedy => (None, None, None),
            Strategy::TopK { k } => (Some(k), None, None),
            Strategy::TopP { p } => (None, Some(p), None),
            Strategy::Beam { beam_width, .. } => (None, None, Some(beam_width)),
        };
        if let Some(&id) = generation.output_ids.iter().find(|&&id| prune.contains(id)) {
            return Err(Error::InvariantBreach(format!(
                "pruned id {id} was emitted"
            )));
        }
        Ok(Self {
            prompt: prompt.into(),
            output_text: vocab.decode(&generation.output_ids)?,
            output_ids: generation.output_ids,
            strategy: cfg.strategy.name().to_string(),
            k,
            p,
            beam_width,
            seed: cfg.rng_seed,
            pruneset_fingerprint: prune.fingerprint(),
            support_sizes: generation.support_sizes,
        })
    }

    pub fn to_jsonl_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}
