use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toxprune::cli::{self, BiasArgs, ExperimentConfig};
use toxprune::lm::{DEFAULT_ALPHA, DEFAULT_ORDER, DEFAULT_TOXIC_BIAS};
use toxprune::{SamplingConfig, Strategy, SurfaceVariants};

#[derive(Parser)]
#[command(
    name = "toxprune",
    version,
    about = "Toxic subword pruning for constrained decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    merges: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a word list into a prune set and report coverage.
    BuildPrunelist {
        #[command(flatten)]
        vocab: VocabArgs,
        #[arg(long)]
        wordlist: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only tokenize the lowercase form of each word.
        #[arg(long)]
        lowercase_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an add-alpha n-gram model on a text corpus.
    TrainLm {
        #[command(flatten)]
        vocab: VocabArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode one response per prompt line, writing JSONL records.
    Generate {
        #[command(flatten)]
        vocab: VocabArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        pruneset: Option<PathBuf>,
        /// Boost the lowercase subwords of this word list to emulate a toxic model.
        #[arg(long)]
        wordlist: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOXIC_BIAS)]
        toxic_bias: f64,
        #[arg(long, value_enum, default_value_t = StrategyArg::TopK)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        beam_width: usize,
        #[arg(long, default_value_t = toxprune::decoding::DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generations against references.
    Eval {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        wordlist: PathBuf,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the pruning-fraction sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Greedy,
    TopK,
    TopP,
    Beam,
}

fn run(command: Command) -> toxprune::Result<()> {
    match command {
        Command::BuildPrunelist {
            vocab,
            wordlist,
            fraction,
            seed,
            lowercase_only,
            out,
        } => {
            let variants = SurfaceVariants {
                lowercase: true,
                capitalized: !lowercase_only,
            };
            let summary = cli::cmd_build_prunelist(&cli::BuildPrunelistArgs {
                vocab: vocab.vocab,
                merges: vocab.merges,
                wordlist,
                fraction,
                seed,
                variants,
                out,
            })?;
            print!("{}", summary.render());
        }
        Command::TrainLm {
            vocab,
            corpus,
            order,
            alpha,
            out,
        } => {
            let lm = cli::cmd_train_lm(&cli::TrainLmArgs {
                vocab: vocab.vocab,
                merges: vocab.merges,
                corpus,
                order,
                alpha,
                out,
            })?;
            println!("contexts: {}", lm.num_contexts());
        }
        Command::Generate {
            vocab,
            model,
            prompts,
            pruneset,
            wordlist,
            toxic_bias,
            strategy,
            k,
            p,
            beam_width,
            max_len,
            temperature,
            seed,
            out,
        } => {
            let strategy = match strategy {
                StrategyArg::Greedy => Strategy::Greedy,
                StrategyArg::TopK => Strategy::TopK { k },
                StrategyArg::TopP => Strategy::TopP { p },
                StrategyArg::Beam => Strategy::Beam {
                    beam_width,
                    length_normalize: true,
                },
            };
            let sampling = SamplingConfig {
                strategy,
                max_len,
                temperature,
                rng_seed: seed,
            };
            // Boost the words as a toxic model would write them: lowercase.
            let bias = wordlist.map(|wordlist| BiasArgs {
                wordlist,
                bias: toxic_bias,
                variants: SurfaceVariants {
                    lowercase: true,
                    capitalized: false,
                },
            });
            let records = cli::cmd_generate(&cli::GenerateArgs {
                vocab: vocab.vocab,
                merges: vocab.merges,
                model,
                prompts,
                pruneset,
                bias,
                sampling,
                out,
            })?;
            println!("records: {}", records.len());
        }
        Command::Eval {
            generations,
            refs,
            wordlist,
            out,
            csv,
        } => {
            let print_json = out.is_none();
            let report = cli::cmd_eval(&cli::EvalArgs {
                generations,
                refs,
                wordlist,
                out,
                csv,
            })?;
            if print_json {
                print!("{}", report.to_json());
            }
            println!("{}", toxprune::MetricReport::csv_header());
            println!("{}", report.csv_row());
        }
        Command::Sweep { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let rows = cli::cmd_sweep(&cfg)?;
            print!("{}", cli::summary_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
