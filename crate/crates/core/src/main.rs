use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use speechcode::app::{self, Config, DecodePaths, FinetunePaths, PretrainPaths};
use speechcode::pretrain::CodeTargets;

#[derive(Parser)]
#[command(name = "speechcode", version, about = "Pseudo-code speech pre-training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set d_model=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit k-means on frame features and write pseudo codes.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        kmeans_out: PathBuf,
        #[arg(long)]
        codes_out: PathBuf,
    },
    /// Pre-train on masked code prediction and code reconstruction.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "codes-file")]
        codes_file: PathBuf,
        /// Decoder targets: `reduced` or `repeated`.
        #[arg(long)]
        codes: Option<CodeTargets>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Initialize pre-net and encoder from a checkpoint.
        #[arg(long)]
        init_encoder: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Resume despite a config fingerprint mismatch.
        #[arg(long)]
        force: bool,
    },
    /// Fine-tune for character ASR.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Pre-training checkpoint; omitted means random init.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Train the character LM used for shallow fusion.
    TrainLm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Take the character vocabulary from this ASR checkpoint.
        #[arg(long)]
        vocab_from: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint CTC/attention decoding.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        nbest: Option<PathBuf>,
    },
    /// Sweep CTC and LM weights on a dev set.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Code/text correlation report.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "codes-file")]
        codes_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, extra: &[String]) -> speechcode::Result<Config> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    let cfg = app::parse_config(common.config.as_deref(), &overrides)?;
    log::info!("resolved config (fingerprint {}):\n{}", cfg.fingerprint(), cfg.to_text());
    Ok(cfg)
}

fn log_path(log: Option<PathBuf>, out: &std::path::Path) -> PathBuf {
    log.unwrap_or_else(|| out.with_extension("log"))
}

fn run(cli: Cli) -> speechcode::Result<()> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = resolve(&common, &[])?;
            let manifest = app::cmd_synth(&cfg, &out)?;
            println!("{}", manifest.display());
        }
        Command::Quantize {
            common,
            manifest,
            kmeans_out,
            codes_out,
        } => {
            let cfg = resolve(&common, &[])?;
            app::cmd_quantize(&cfg, &manifest, &kmeans_out, &codes_out)?;
        }
        Command::Pretrain {
            common,
            manifest,
            codes_file,
            codes,
            out,
            log,
            init_encoder,
            resume,
            force,
        } => {
            let extra: Vec<String> = codes
                .map(|c| match c {
                    CodeTargets::Reduced => "codes=reduced".to_string(),
                    CodeTargets::Repeated => "codes=repeated".to_string(),
                })
                .into_iter()
                .collect();
            let cfg = resolve(&common, &extra)?;
            let paths = PretrainPaths {
                manifest,
                codes: codes_file,
                log: log_path(log, &out),
                out,
                init_encoder,
                resume,
                force,
            };
            app::cmd_pretrain(&cfg, &paths)?;
        }
        Command::Finetune {
            common,
            manifest,
            init,
            out,
            log,
            resume,
            force,
        } => {
            let cfg = resolve(&common, &[])?;
            let paths = FinetunePaths {
                manifest,
                init,
                log: log_path(log, &out),
                out,
                resume,
                force,
            };
            app::cmd_finetune(&cfg, &paths)?;
        }
        Command::TrainLm {
            common,
            manifest,
            vocab_from,
            out,
        } => {
            let cfg = resolve(&common, &[])?;
            app::cmd_train_lm(&cfg, &manifest, vocab_from.as_deref(), &out)?;
        }
        Command::Decode {
            common,
            manifest,
            model,
            lm,
            out,
            nbest,
        } => {
            let cfg = resolve(&common, &[])?;
            let res = app::cmd_decode(
                &cfg,
                &DecodePaths {
                    manifest,
                    model,
                    lm,
                    out,
                    nbest,
                },
            )?;
            println!("wer={:.6}", res.wer);
        }
        Command::Sweep {
            common,
            manifest,
            model,
            lm,
            out,
        } => {
            let cfg = resolve(&common, &[])?;
            let res = app::cmd_sweep(&cfg, &manifest, &model, lm.as_deref(), &out)?;
            println!(
                "ctc_weight={} lm_weight={} wer={:.6}",
                res.best_ctc_weight, res.best_lm_weight, res.best_wer
            );
        }
        Command::Analyze {
            common,
            manifest,
            codes_file,
            out,
        } => {
            let cfg = resolve(&common, &[])?;
            let report = app::cmd_analyze(&cfg, &manifest, &codes_file, &out)?;
            println!("mean_purity={:.6}", report.mean_purity());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
