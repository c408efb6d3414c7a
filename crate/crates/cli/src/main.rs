use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};

use crashpipe::frame::load_clip;
use crashpipe::metric::{evaluate, read_predictions_file, write_predictions};
use crashpipe::pipeline::{
    frame_requests, predict_batch, write_synth_suite, write_trace, Classifier, PipelineConfig,
};
use crashpipe::{ClipManifest, Exec};

/// Exit status when some videos failed but the run finished.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "crashpipe", version, about = "Zero-shot traffic collision analysis")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch processing.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict collision time, impact point and class for each clip.
    Predict {
        /// Clip manifests (JSON).
        manifests: Vec<PathBuf>,
        /// Text file with one manifest path per line, relative to the file.
        #[arg(long)]
        list: Option<PathBuf>,
        /// Skip classification and write a placeholder class.
        #[arg(long)]
        no_classify: bool,
        #[arg(long)]
        prompt_bank: Option<PathBuf>,
        #[arg(long)]
        frame_bank: Option<PathBuf>,
        /// Prompt-set JSON (defaults to the bundled set).
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Prediction CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the frame indices each video needs embedded as JSON.
        #[arg(long, value_name = "PATH")]
        emit_frame_requests: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Report CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Render a synthetic clip suite with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Dump the detection signal, magnitude map and windows for one clip.
    Trace {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CRASHPIPE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Predict {
            mut manifests,
            list,
            no_classify,
            prompt_bank,
            frame_bank,
            prompts,
            out,
            emit_frame_requests,
        } => {
            if let Some(list) = list {
                manifests.extend(read_manifest_list(&list)?);
            }
            if manifests.is_empty() {
                Cli::command()
                    .error(
                        clap::error::ErrorKind::MissingRequiredArgument,
                        "predict needs at least one manifest (positional or --list)",
                    )
                    .exit();
            }
            cfg.prompt_bank = prompt_bank.or(cfg.prompt_bank);
            cfg.frame_bank = frame_bank.or(cfg.frame_bank);
            cfg.prompts = prompts.or(cfg.prompts);
            let banks_given = cfg.prompt_bank.is_some() || cfg.frame_bank.is_some();
            let classifier = if no_classify {
                log::warn!("classification disabled; class column is a placeholder");
                None
            } else if !banks_given && emit_frame_requests.is_some() {
                log::warn!("no embedding banks; class column is a placeholder");
                None
            } else {
                Some(Classifier::from_config(&cfg).context("loading embedding banks")?)
            };
            predict(&manifests, &cfg, classifier.as_ref(), out.as_deref(), emit_frame_requests.as_deref())
        }
        Command::Evaluate {
            predictions,
            ground_truth,
            out,
            json,
        } => {
            let preds = read_predictions_file(&predictions)?;
            let gts = read_predictions_file(&ground_truth)?;
            let report = evaluate(&preds, &gts, &cfg.score)?;
            match out {
                Some(p) => report.write_csv(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
                None => report.write_csv(io::stdout().lock())?,
            }
            if let Some(p) = json {
                fs::write(&p, report.to_json()? + "\n").with_context(|| format!("writing {}", p.display()))?;
            }
            eprintln!(
                "{} videos: T={:.4} S={:.4} C={:.4} H={:.4}",
                report.videos.len(),
                report.mean_t,
                report.mean_s,
                report.mean_c,
                report.mean_h
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, seed, count } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            let exec = if cfg.workers > 1 { Exec::Parallel } else { Exec::Sequential };
            let written = write_synth_suite(&out, seed, count, exec)?;
            eprintln!(
                "wrote {} clips, {} and {}",
                written.len(),
                out.join("gt.csv").display(),
                out.join("manifests.txt").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { manifest, out } => {
            let clip = load_clip(&ClipManifest::from_path(&manifest)?)?;
            let trace = write_trace(&clip, &cfg, &out, Exec::default())?;
            let o = &trace.outcome;
            eprintln!(
                "{}: peak frame {} ({:.2} s{}), impact ({:.3}, {:.3}){}",
                clip.id(),
                o.temporal.peak_frame,
                o.temporal.time_sec,
                if o.temporal.thresholded { "" } else { ", below threshold" },
                o.impact.cx,
                o.impact.cy,
                if o.impact.fallback { " fallback" } else { "" }
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_manifest_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn predict(
    manifests: &[PathBuf],
    cfg: &PipelineConfig,
    classifier: Option<&Classifier>,
    out: Option<&Path>,
    requests: Option<&Path>,
) -> Result<ExitCode> {
    let results = predict_batch(manifests, cfg, classifier)?;
    let mut rows = Vec::new();
    let mut ok = Vec::new();
    let mut failed = 0;
    for (m, r) in manifests.iter().zip(&results) {
        match r {
            Ok(o) => {
                rows.push(o.prediction.clone());
                ok.push((m.as_path(), o));
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", m.display());
            }
        }
    }
    match out {
        Some(p) => {
            let file = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_predictions(file, &rows)?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            write_predictions(&mut stdout, &rows)?;
            stdout.flush()?;
        }
    }
    if let Some(p) = requests {
        let json = serde_json::to_string_pretty(&frame_requests(ok))?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    if failed > 0 {
        eprintln!("{failed} of {} videos failed", manifests.len());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}
