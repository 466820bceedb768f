use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use dagmm_ho::commands::{cmd_eval, cmd_score, cmd_synth, cmd_train, cmd_tune, write_scores};
use dagmm_ho::config::{key_help, PipelineConfig};
use dagmm_ho::report::{comparison_text, scores_tsv, tuning_text};
use dagmm_ho::Result;

/// Unsupervised acoustic anomaly detection with a deep autoencoding
/// Gaussian mixture model and automatic hyper-parameter selection.
#[derive(Debug, Parser)]
#[command(name = "dagmm-ho", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output location (directory or file, per command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic fan fixture (WAVs and manifest) to --out or
    /// paths.data_dir.
    Synth {
        /// Number of fans (overrides synth.fans).
        #[arg(long)]
        fans: Option<usize>,
    },
    /// Select K and c on normal training data; report goes to --out or
    /// paths.report_dir.
    Tune {
        /// Tune on a feature cache instead of the dataset.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Train DAGMM-HO on the normal training segments; model goes to --out
    /// or paths.model.
    Train {
        /// Number of GMM components (skips the gap statistic).
        #[arg(short = 'k', long)]
        components: Option<usize>,
        /// Bottleneck width (skips the variance curve).
        #[arg(short = 'c', long)]
        bottleneck: Option<usize>,
    },
    /// Per-segment energies of WAV files; listing goes to --out or stdout.
    Score {
        /// Model file (default paths.model).
        #[arg(long)]
        model: Option<PathBuf>,
        /// WAV files to score, one segment per synth.segment seconds.
        audio: Vec<PathBuf>,
    },
    /// Compare DAGMM-HO with the baselines; tables go to --out or
    /// paths.report_dir.
    Eval {
        /// Trained model to evaluate; trained here when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.sync_seeds();
    }
    let out = cli.out.as_deref();
    let say = |text: &str| {
        if !cli.quiet {
            print!("{text}");
            let _ = std::io::stdout().flush();
        }
    };
    match cli.command {
        Command::Synth { fans } => {
            if let Some(f) = fans {
                cfg.synth.fans = f;
            }
            let dir = out.unwrap_or(&cfg.data_dir);
            let manifest = cmd_synth(&cfg, dir)?;
            say(&format!("wrote {}\n", manifest.display()));
        }
        Command::Tune { features } => {
            let dir = out.unwrap_or(&cfg.report_dir);
            let t = cmd_tune(&cfg, features.as_deref(), dir)?;
            say(&tuning_text(&t));
        }
        Command::Train {
            components,
            bottleneck,
        } => {
            cfg.components = components.or(cfg.components);
            cfg.bottleneck = bottleneck.or(cfg.bottleneck);
            cfg.validate()?;
            let path = out.unwrap_or(&cfg.model).to_path_buf();
            let summary = cmd_train(&cfg, &path)?;
            say(&summary.text());
        }
        Command::Score { model, audio } => {
            let model = model.unwrap_or_else(|| cfg.model.clone());
            let rows = cmd_score(&cfg, &model, &audio)?;
            match out {
                Some(p) => write_scores(p, &rows)?,
                None => print!("{}", scores_tsv(&rows)),
            }
        }
        Command::Eval { model } => {
            let dir = out.unwrap_or(&cfg.report_dir);
            let rows = cmd_eval(&cfg, model.as_deref(), dir)?;
            say(&comparison_text(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(key_help());
    let parsed = command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            // Usage errors share the configuration exit code.
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
