use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gaugeatlas_cli::config::{self, RunConfig};
use gaugeatlas_cli::generate::{self, Preset};
use gaugeatlas_cli::ingest::Dtype;
use gaugeatlas_cli::pipeline::{self, AtlasCache, Stage};
use gaugeatlas_cli::sweep::{self, Axis};

#[derive(Parser)]
#[command(name = "gaugeatlas", version, about = "Chart-atlas diagnostics: jamming, proxy shearing and holonomy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the on-disk atlas cache under `<out>/cache`.
    #[arg(long)]
    no_cache: bool,
    /// Config overrides as `--key value` pairs, e.g. `--jamming.m 128`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Triangle,
    Rotated,
    Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    preset: Option<PresetName>,
    /// JSON synthetic-data spec instead of a preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "data")]
    stem: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeArg,
    #[arg(long)]
    no_gradients: bool,
    /// Net loop rotation of the triangle preset, in degrees.
    #[arg(long, default_value_t = 90.0)]
    net_degrees: f64,
    #[arg(long, default_value_t = 12)]
    charts: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 400)]
    n_per: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    anisotropy: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Validate the config and dataset without running any stage.
    Check(RunArgs),
    Atlas(RunArgs),
    Transport(RunArgs),
    Gauge(RunArgs),
    Shear(RunArgs),
    Jam(RunArgs),
    Bootstrap(RunArgs),
    Null(RunArgs),
    /// One run per axis value with a consolidated `sweep.csv`.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated values; `C_k` values read `C:k`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Full run as selected by the config flags.
    Report(RunArgs),
}

fn load(run: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let overrides = config::parse_override_args(&run.overrides)?;
    let cfg = config::load_config(&run.config, &overrides)?;
    let dir = run.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, dir))
}

fn cache_for(run: &RunArgs) -> AtlasCache {
    if run.no_cache {
        AtlasCache::in_memory()
    } else {
        AtlasCache::on_disk(&run.out.join("cache"))
    }
}

fn run_stage(name: &str, stages: Option<&[Stage]>, run: &RunArgs) -> Result<()> {
    let (cfg, dir) = load(run)?;
    let stages = stages.map(<[Stage]>::to_vec).unwrap_or_else(|| pipeline::full_run(&cfg));
    let (report, _) = pipeline::run_pipeline(name, &cfg, &dir, &stages, &run.out, &cache_for(run))?;
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    println!("wrote {} files and report.json to {}", report.outputs.len(), run.out.display());
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = match (&a.spec, a.preset) {
        (Some(p), _) => generate::read_spec(p)?,
        (None, Some(p)) => {
            let preset = match p {
                PresetName::Triangle => Preset::Triangle { net: a.net_degrees.to_radians() },
                PresetName::Rotated => Preset::Rotated { charts: a.charts, dim: a.dim, k: a.k, n_per: a.n_per },
                PresetName::Shared => Preset::Shared {
                    charts: a.charts,
                    dim: a.dim,
                    k: a.k,
                    n_per: a.n_per,
                    noise: a.noise,
                    anisotropy: a.anisotropy,
                },
            };
            preset.spec(a.seed)
        }
        (None, None) => anyhow::bail!("synth needs --preset or --spec"),
    };
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    let path = generate::write_synthetic(&a.out, &a.stem, &spec, dtype, !a.no_gradients)?;
    println!("{}", path.display());
    Ok(())
}

fn check(run: &RunArgs) -> Result<()> {
    let (cfg, dir) = load(run)?;
    let data = pipeline::load_inputs(&cfg, &dir)?;
    gaugeatlas::atlas::validate_params(&pipeline::atlas_params(&cfg), data.activations.rows(), data.activations.cols())
        .context("atlas settings do not fit the dataset")?;
    if cfg.jamming.enabled && data.gradients.is_none() {
        anyhow::bail!("jamming is enabled but the dataset has no gradients");
    }
    println!(
        "ok: {} samples, dim {}, gradients {}, digest {}",
        data.manifest.n_samples,
        data.manifest.dim,
        if data.gradients.is_some() { "present" } else { "absent" },
        pipeline::dataset_digest(&data)
    );
    Ok(())
}

fn sweep_cmd(axis: &str, values: &[String], run: &RunArgs) -> Result<()> {
    let axis = Axis::parse(axis)?;
    let (cfg, dir) = load(run)?;
    let data = pipeline::load_inputs(&cfg, &dir)?;
    let rows = sweep::run_sweep(&cfg, &data, axis, values, &run.out, &cache_for(run))?;
    println!("{} sweep points written to {}", rows.len(), run.out.join("sweep.csv").display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    use Command::*;
    match &cli.command {
        Synth(a) => synth(a),
        Check(r) => check(r),
        Atlas(r) => run_stage("atlas", Some(&[Stage::Atlas]), r),
        Transport(r) => run_stage("transport", Some(&[Stage::Transport]), r),
        Gauge(r) => run_stage("gauge", Some(&[Stage::Gauge]), r),
        Shear(r) => run_stage("shear", Some(&[Stage::Shear]), r),
        Jam(r) => run_stage("jam", Some(&[Stage::Jamming]), r),
        Bootstrap(r) => run_stage("bootstrap", Some(&[Stage::Bootstrap]), r),
        Null(r) => run_stage("null", Some(&[Stage::Null]), r),
        Sweep { axis, values, run } => sweep_cmd(axis, values, run),
        Report(r) => run_stage("report", None, r),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
