//! The pipeline commands behind the `toxprune` binary.
//!
//! Each command takes plain argument structs so it can be driven from tests
//! and examples as well as from the command line. Files are written through
//! a temporary sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoding::{decode, GenerationRecord, SamplingConfig};
use crate::error::{Error, Result};
use crate::lm::{
    BiasWrapper, LogitSource, NgramLm, DEFAULT_ALPHA, DEFAULT_ORDER, DEFAULT_TOXIC_BIAS,
};
use crate::metrics::{EvalCorpus, MetricReport};
use crate::prunelist::{build_prune_set, coverage_report, load_wordlist, CoverageReport, PruneSet};
use crate::tokenizer::{SurfaceVariants, TokenId, Vocabulary};

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

pub fn write_atomic(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines of a prompts file, trimmed.
pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(read(path.as_ref())?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Deserialize)]
struct ReferenceLine {
    references: Vec<String>,
}

/// Reference lists from JSONL lines carrying a `references` array.
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<ReferenceLine>(line)
                .map(|r| r.references)
                .map_err(|e| Error::MalformedFile(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Deserialize)]
struct CandidateLine {
    #[serde(alias = "candidate")]
    output_text: String,
}

/// Candidate texts from a generations JSONL (`output_text` or `candidate`).
pub fn load_candidates(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<CandidateLine>(line)
                .map(|c| c.output_text)
                .map_err(|e| Error::MalformedFile(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Reads a whitespace-tokenized text corpus into id sequences, one per line.
pub fn load_corpus(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    Ok(read(path.as_ref())?
        .lines()
        .map(|line| vocab.encode(line))
        .filter(|ids| !ids.is_empty())
        .collect())
}

#[derive(Debug, Clone)]
pub struct BuildPrunelistArgs {
    pub vocab: PathBuf,
    pub merges: PathBuf,
    pub wordlist: PathBuf,
    pub fraction: f64,
    pub seed: u64,
    pub variants: SurfaceVariants,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub prune: PruneSet,
    pub coverage: CoverageReport,
}

impl BuildSummary {
    pub fn render(&self) -> String {
        format!(
            "subwords: {}\npruned: {}\ndropped_special: {}\ncoverage: {:.4} ({}/{} words blocked)\n",
            self.prune.full_size,
            self.prune.len(),
            self.prune.dropped_special_count,
            self.coverage.coverage,
            self.coverage.fully_pruned_words,
            self.coverage.total_words,
        )
    }
}

pub fn cmd_build_prunelist(args: &BuildPrunelistArgs) -> Result<BuildSummary> {
    if !(args.fraction > 0.0 && args.fraction <= 1.0) {
        return Err(Error::InvalidFraction(args.fraction));
    }
    let vocab = Vocabulary::load(&args.vocab, &args.merges)?;
    let words = load_wordlist(&args.wordlist)?;
    let expansion = vocab.expand_words(&words, args.variants)?;
    let prune = build_prune_set(&expansion, args.fraction, args.seed, &vocab)?;
    let coverage = coverage_report(&prune, &expansion);
    write_atomic(&args.out, prune.to_json())?;
    Ok(BuildSummary { prune, coverage })
}

#[derive(Debug, Clone)]
pub struct TrainLmArgs {
    pub vocab: PathBuf,
    pub merges: PathBuf,
    pub corpus: PathBuf,
    pub order: usize,
    pub alpha: f64,
    pub out: PathBuf,
}

pub fn cmd_train_lm(args: &TrainLmArgs) -> Result<NgramLm> {
    let vocab = Vocabulary::load(&args.vocab, &args.merges)?;
    let corpus = load_corpus(&args.corpus, &vocab)?;
    let lm = NgramLm::train(&corpus, args.order, args.alpha, &vocab)?;
    write_atomic(&args.out, lm.to_json())?;
    Ok(lm)
}

/// Optional toxicity bias for `generate`: boost the subwords of a word list.
#[derive(Debug, Clone)]
pub struct BiasArgs {
    pub wordlist: PathBuf,
    pub bias: f64,
    pub variants: SurfaceVariants,
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub vocab: PathBuf,
    pub merges: PathBuf,
    pub model: PathBuf,
    pub prompts: PathBuf,
    pub pruneset: Option<PathBuf>,
    pub bias: Option<BiasArgs>,
    pub sampling: SamplingConfig,
    pub out: PathBuf,
}

/// Decodes every prompt; prompt `i` uses RNG stream `i` under the config seed.
pub fn generate_records<S: LogitSource>(
    source: &S,
    vocab: &Vocabulary,
    prompts: &[String],
    sampling: &SamplingConfig,
    prune: &PruneSet,
) -> Result<Vec<GenerationRecord>> {
    prompts
        .iter()
        .enumerate()
        .map(|(i, prompt)| {
            let ids = vocab.encode(prompt);
            let generation = decode(source, &ids, sampling, prune, i as u64)?;
            GenerationRecord::new(prompt.clone(), generation, sampling, prune, vocab)
        })
        .collect()
}

fn records_to_jsonl(records: &[GenerationRecord]) -> String {
    records
        .iter()
        .map(GenerationRecord::to_jsonl_line)
        .collect()
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Vec<GenerationRecord>> {
    args.sampling.validate()?;
    let vocab = Vocabulary::load(&args.vocab, &args.merges)?;
    let lm = NgramLm::load(&args.model)?;
    if lm.vocab_size() != vocab.len() {
        return Err(Error::MalformedFile(format!(
            "model vocabulary size {} does not match {}",
            lm.vocab_size(),
            vocab.len()
        )));
    }
    let prune = match &args.pruneset {
        Some(path) => PruneSet::load(path, &vocab)?,
        None => PruneSet::empty(vocab.fingerprint()),
    };
    let prompts = load_prompts(&args.prompts)?;
    let records = match &args.bias {
        Some(bias) => {
            let words = load_wordlist(&bias.wordlist)?;
            let toxic = vocab.expand_words(&words, bias.variants)?.all_ids();
            let toxic = toxic.into_iter().filter(|&id| !vocab.is_special(id));
            let source = BiasWrapper::new(&lm, toxic, bias.bias)?;
            generate_records(&source, &vocab, &prompts, &args.sampling, &prune)?
        }
        None => generate_records(&lm, &vocab, &prompts, &args.sampling, &prune)?,
    };
    write_atomic(&args.out, records_to_jsonl(&records))?;
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub generations: PathBuf,
    pub refs: PathBuf,
    pub wordlist: PathBuf,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricReport> {
    let candidates = load_candidates(&args.generations)?;
    let references = load_references(&args.refs)?;
    let corpus = EvalCorpus::from_pairs(candidates, references)?;
    let words = load_wordlist(&args.wordlist)?;
    let report = MetricReport::evaluate(&corpus, &words)?;
    if let Some(out) = &args.out {
        write_atomic(out, report.to_json())?;
    }
    if let Some(csv) = &args.csv {
        write_atomic(
            csv,
            format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row()),
        )?;
    }
    Ok(report)
}

fn default_fractions() -> Vec<f64> {
    DEFAULT_FRACTIONS.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_bias() -> f64 {
    DEFAULT_TOXIC_BIAS
}

fn default_sampling() -> SamplingConfig {
    SamplingConfig::top_k(50)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_bias")]
    pub toxic_bias: f64,
    /// Surface forms whose subwords receive the bias.
    #[serde(default = "lowercase_only")]
    pub bias_variants: SurfaceVariants,
}

fn lowercase_only() -> SurfaceVariants {
    SurfaceVariants {
        lowercase: true,
        capitalized: false,
    }
}

/// Everything a fraction sweep needs. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocab: PathBuf,
    pub merges: PathBuf,
    pub wordlist: PathBuf,
    pub prompts: PathBuf,
    pub refs: PathBuf,
    pub lm: LmConfig,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Sampling seeds; every prompt is decoded once per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed of the prune-set selection shuffle.
    #[serde(default)]
    pub selection_seed: u64,
    #[serde(default)]
    pub variants: SurfaceVariants,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingConfig,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = serde_json::from_str(&read(path)?).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.vocab,
            &mut cfg.merges,
            &mut cfg.wordlist,
            &mut cfg.prompts,
            &mut cfg.refs,
            &mut cfg.lm.corpus,
            &mut cfg.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::InvalidConfig("fractions is empty".into()));
        }
        if let Some(&f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::InvalidFraction(f));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds is empty".into()));
        }
        if matches!(
            self.sampling.strategy,
            crate::decoding::Strategy::Beam { .. }
        ) && self.seeds.len() > 1
        {
            return Err(Error::InvalidConfig(
                "beam search is deterministic; use a single seed".into(),
            ));
        }
        if !self.lm.toxic_bias.is_finite() {
            return Err(Error::InvalidConfig("toxic_bias must be finite".into()));
        }
        self.sampling.validate()
    }

    /// Baseline 0 followed by the configured fractions, ascending.
    pub fn sweep_fractions(&self) -> Vec<f64> {
        let mut fractions = vec![0.0];
        fractions.extend(self.fractions.iter().copied());
        fractions.sort_by(f64::total_cmp);
        fractions.dedup();
        fractions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub pruned_ids: usize,
    pub coverage: f64,
    pub report: MetricReport,
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("fraction,{}\n", MetricReport::csv_header());
    for row in rows {
        out.push_str(&format!("{:.2},{}\n", row.fraction, row.report.csv_row()));
    }
    out
}

fn stage<T>(name: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| e.in_stage(name))
}

/// Runs the fraction sweep: for the baseline and each fraction, build the
/// prune set, decode every prompt with the biased n-gram model, evaluate,
/// and write one directory per fraction plus `summary.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    stage("config", cfg.validate())?;
    let vocab = stage("load-vocab", Vocabulary::load(&cfg.vocab, &cfg.merges))?;
    let words = stage("load-wordlist", load_wordlist(&cfg.wordlist))?;
    let expansion = stage("expand-words", vocab.expand_words(&words, cfg.variants))?;

    let corpus = stage("load-corpus", load_corpus(&cfg.lm.corpus, &vocab))?;
    let base = stage(
        "train-lm",
        NgramLm::train(&corpus, cfg.lm.order, cfg.lm.alpha, &vocab),
    )?;
    let biased = stage(
        "expand-words",
        vocab.expand_words(&words, cfg.lm.bias_variants),
    )?
    .all_ids();
    let biased = biased.into_iter().filter(|&id| !vocab.is_special(id));
    let source = stage(
        "train-lm",
        BiasWrapper::new(base, biased, cfg.lm.toxic_bias),
    )?;

    let prompts = stage("load-prompts", load_prompts(&cfg.prompts))?;
    let references = stage("load-refs", load_references(&cfg.refs))?;
    if prompts.len() != references.len() {
        return Err(Error::LengthMismatch {
            generations: prompts.len(),
            references: references.len(),
        }
        .in_stage("load-refs"));
    }

    let mut rows = Vec::new();
    for fraction in cfg.sweep_fractions() {
        let dir = cfg.out_dir.join(format!("fraction_{fraction:.2}"));
        let prune = if fraction == 0.0 {
            PruneSet::empty(vocab.fingerprint())
        } else {
            stage(
                "build-prunelist",
                build_prune_set(&expansion, fraction, cfg.selection_seed, &vocab),
            )?
        };
        let coverage = coverage_report(&prune, &expansion);
        if !prune.is_empty() {
            stage(
                "write",
                write_atomic(dir.join("pruneset.json"), prune.to_json()),
            )?;
        }

        let mut records = Vec::new();
        let mut candidates = Vec::new();
        let mut refs = Vec::new();
        for &seed in &cfg.seeds {
            let sampling = cfg.sampling.with_seed(seed);
            let batch = stage(
                "generate",
                generate_records(&source, &vocab, &prompts, &sampling, &prune),
            )?;
            for (record, r) in batch.iter().zip(&references) {
                candidates.push(record.output_text.clone());
                refs.push(r.clone());
            }
            records.extend(batch);
        }
        stage(
            "write",
            write_atomic(dir.join("generations.jsonl"), records_to_jsonl(&records)),
        )?;

        let eval = stage("eval", EvalCorpus::from_pairs(candidates, refs))?;
        let report = stage("eval", MetricReport::evaluate(&eval, &words))?;
        stage(
            "write",
            write_atomic(dir.join("report.json"), report.to_json()),
        )?;
        rows.push(SweepRow {
            fraction,
            pruned_ids: prune.len(),
            coverage: coverage.coverage,
            report,
        });
    }
    stage(
        "write",
        write_atomic(cfg.out_dir.join("summary.csv"), summary_csv(&rows)),
    )?;
    Ok(rows)
}
