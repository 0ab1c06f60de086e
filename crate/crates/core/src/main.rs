use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use egofuse::data::{load_manifest, read_feature_table};
use egofuse::harness::{self, Classifier};
use egofuse::Error;

#[derive(Parser)]
#[command(name = "egofuse", version, about = "Egocentric activity recognition with multi-kernel fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract (or resume extracting) raw features for every segment.
    Extract {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the repeated-split evaluation and write results plus reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config; repeat or pass `all` for several.
        #[arg(long)]
        classifier: Vec<String>,
    },
    /// Generate the synthetic four-class corpus.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render report files from stored results.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRIALS: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::TooManyFailures { .. }) => EXIT_TRIALS,
        _ => EXIT_DATA,
    }
}

fn classifiers(cli: &[String], default: Classifier) -> anyhow::Result<Vec<Classifier>> {
    if cli.is_empty() {
        return Ok(vec![default]);
    }
    if cli.iter().any(|c| c == "all") {
        return Ok(Classifier::ALL.to_vec());
    }
    Ok(cli.iter().map(|c| c.parse::<Classifier>()).collect::<Result<_, _>>()?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract { config } => {
            let cfg = harness::load_config(&config)?;
            let manifest = load_manifest(&cfg.manifest)?;
            let (table, stats) = harness::extract(&cfg, &manifest)?;
            println!(
                "extracted {} segments ({} from cache) into {}",
                stats.computed + stats.cached,
                stats.cached,
                harness::features_path(&cfg.output_dir).display()
            );
            for (name, ch) in &table.channels {
                println!("  {name}: dim {}, {} rows", ch.dim, ch.rows.len());
            }
        }
        Command::Run { config, classifier } => {
            let cfg = harness::load_config(&config)?;
            let which = classifiers(&classifier, cfg.classifier)?;
            let manifest = load_manifest(&cfg.manifest)?;
            let cached = harness::features_path(&cfg.output_dir);
            let table = if cached.exists() {
                read_feature_table(&cached).with_context(|| format!("reading {}", cached.display()))?
            } else {
                harness::extract(&cfg, &manifest)?.0
            };
            let runs = harness::run_trials(&cfg, &manifest, &table, &which)?;
            harness::write_results(&cfg.output_dir, &runs)?;
            harness::report(&cfg.output_dir)?;
            print!("{}", harness::report::comparison_table(&runs));
            for r in &runs {
                if r.failed() > 0 {
                    eprintln!("{}: {} of {} trials failed", r.classifier, r.failed(), r.trials.len());
                }
                r.check_failures()?;
            }
        }
        Command::Synth { seed, out } => {
            let m = harness::synth_dataset(seed, &out)?;
            println!("wrote {} segments in {} classes to {}", m.segments.len(), m.num_classes(), out.display());
        }
        Command::Report { input } => {
            for p in harness::report(&input)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
