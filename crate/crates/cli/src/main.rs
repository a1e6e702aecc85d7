use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sectionalign::pipeline::{
    evaluate_files, load_manifest, run_pipeline, write_metrics, write_outputs, Method, PipelineConfig,
};
use sectionalign::synthetic::{generate_series, SynthConfig};

#[derive(Parser)]
#[command(name = "sectionalign", version, about = "Align serial histology sections into a common frame")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    TwoStage,
    Stage1Only,
    Stage2Only,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::TwoStage => Method::TwoStage,
            MethodArg::Stage1Only => Method::Stage1Only,
            MethodArg::Stage2Only => Method::Stage2Only,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Register every section of a manifest into the middle section's frame.
    Register {
        #[arg(long)]
        manifest: PathBuf,
        /// Pipeline configuration JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        emit_warped: bool,
        #[arg(long)]
        emit_overlays: bool,
        /// Write per-pair stage-2 convergence traces.
        #[arg(long)]
        emit_traces: bool,
    },
    /// Score a saved registration against annotated glomerulus boxes.
    Evaluate {
        #[arg(long)]
        registration: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic case: section images, manifest, annotations and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Synthesis configuration JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sections: Option<usize>,
        #[arg(long)]
        occlusion: Option<f64>,
    },
}

fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Runs a subcommand; `Ok(true)` means some pairs fell back.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Register {
            manifest,
            config,
            out,
            method,
            seed,
            workers,
            emit_warped,
            emit_overlays,
            emit_traces,
        } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    PipelineConfig::from_json_str(&text, &path.display().to_string())?
                }
                None => PipelineConfig::default(),
            };
            if let Some(m) = method {
                cfg.method = m.into();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.worker_count = w;
            }
            cfg.outputs.warped_images |= emit_warped;
            cfg.outputs.overlays |= emit_overlays;
            cfg.outputs.traces |= emit_traces;
            cfg.validate()?;

            let manifest = load_manifest(&manifest)?;
            let outputs = run_pipeline(&manifest, &cfg)?;
            write_outputs(&outputs, &manifest, &cfg, &out)?;
            if let Some(m) = &outputs.metrics {
                log::info!("metrics: {}", serde_json::to_string(&m.summary)?);
            }
            let fallbacks = outputs.fallback_pairs();
            if !fallbacks.is_empty() {
                log::warn!("pairs fell back: {fallbacks:?}");
            }
            Ok(!fallbacks.is_empty())
        }
        Command::Evaluate {
            registration,
            annotations,
            out,
        } => {
            let report = evaluate_files(&registration, &annotations)?;
            write_metrics(&report, &out)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            Ok(false)
        }
        Command::Synth {
            out,
            config,
            seed,
            sections,
            occlusion,
        } => {
            let mut cfg: SynthConfig = match &config {
                Some(path) => read_synth_config(path)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.phantom.seed = s;
            }
            if let Some(n) = sections {
                cfg.sections = n;
            }
            if let Some(o) = occlusion {
                cfg.occlusion_fraction = o;
            }
            let series = generate_series(&cfg)?;
            let manifest = series.write_bundle(&cfg.case_id, cfg.phantom.spacing_um, &out)?;
            println!("{}", manifest.display());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
