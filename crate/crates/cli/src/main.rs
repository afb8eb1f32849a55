use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nngibbs_core::harness::presets::{preset_configs, preset_names};
use nngibbs_core::harness::{
    analyze_traces, load_traces, prepare, run_experiment, DiagnosticsConfig, ExperimentConfig,
};
use nngibbs_core::model::{Split, Targets};

#[derive(Parser)]
#[command(
    name = "nngibbs",
    version,
    about = "Gibbs, HMC and MALA sampling of neural-network posteriors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset a config describes and write it as CSV.
    Generate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run an experiment: one chain per initialization, traces and a summary.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        seed: Option<u64>,
        /// Wall-clock cap per chain; traces are flushed when it is hit.
        #[arg(long, value_name = "S")]
        max_seconds: Option<f64>,
        /// Override the number of sweeps (or gradient steps) per chain.
        #[arg(long)]
        sweeps: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Stationarity, teacher–student merge and R-hat on traces from a run.
    Diagnose {
        /// Directory holding the `chain_*.csv` traces.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Take the diagnostics settings from this config instead of the
        /// `config.toml` stored next to the traces.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
    /// List or write the named configurations.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<Vec<ExperimentConfig>> {
        match (&self.config, &self.preset) {
            (Some(path), _) => Ok(vec![ExperimentConfig::load(path)?]),
            (None, Some(name)) => Ok(preset_configs(name)?),
            (None, None) => bail!("pass --config or --preset"),
        }
    }
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as TOML, or write one file per run into `--out`.
    Dump {
        name: String,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { source, seed, out } => {
            let configs = source.load()?;
            let nested = configs.len() > 1;
            for mut cfg in configs {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let dir = if nested { out.join(&cfg.name) } else { out.clone() };
                generate(&cfg, &dir)?;
            }
        }
        Command::Run {
            source,
            seed,
            max_seconds,
            sweeps,
            out,
        } => {
            let configs = source.load()?;
            let nested = configs.len() > 1;
            for mut cfg in configs {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if max_seconds.is_some() {
                    cfg.max_seconds = max_seconds;
                }
                if let Some(n) = sweeps {
                    cfg.sweeps = n;
                }
                cfg.validate()?;
                let dir = if nested { out.join(&cfg.name) } else { out.clone() };
                let summary = run_experiment(&cfg, &dir).with_context(|| format!("running `{}`", cfg.name))?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
        }
        Command::Diagnose { out, config } => diagnose(&out, config.as_deref())?,
        Command::Presets { action } => match action {
            PresetAction::List => {
                for (name, what) in preset_names() {
                    println!("{name:<32} {what}");
                }
            }
            PresetAction::Dump { name, out } => {
                let configs = preset_configs(&name)?;
                match out {
                    Some(dir) => {
                        std::fs::create_dir_all(&dir)?;
                        for cfg in &configs {
                            std::fs::write(dir.join(format!("{}.toml", cfg.name)), cfg.to_toml_string()?)?;
                        }
                    }
                    None => {
                        for cfg in &configs {
                            println!("{}", cfg.to_toml_string()?);
                        }
                    }
                }
            }
        },
    }
    Ok(())
}

fn generate(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let prep = prepare(cfg)?;
    std::fs::create_dir_all(dir)?;
    write_split(&prep.dataset.train, &dir.join("train.csv"))?;
    if let Some(test) = &prep.dataset.test {
        write_split(test, &dir.join("test.csv"))?;
    }
    if let Some(teacher) = &prep.dataset.teacher {
        for (k, (w, b)) in teacher.params.weights.iter().zip(&teacher.params.biases).enumerate() {
            let mut out = csv::Writer::from_path(dir.join(format!("teacher_layer{}.csv", k + 1)))?;
            // one row per output unit: bias, then the incoming weights
            for r in 0..w.nrows() {
                let mut row = vec![b.get(r).copied().unwrap_or(0.0).to_string()];
                row.extend(w.row(r).iter().map(f64::to_string));
                out.write_record(&row)?;
            }
            out.flush()?;
        }
    }
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    println!(
        "wrote {} training and {} test samples to {}",
        prep.dataset.n(),
        prep.dataset.test.as_ref().map_or(0, Split::len),
        dir.display()
    );
    Ok(())
}

fn write_split(split: &Split, path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    let d = split.inputs.ncols();
    let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    match &split.targets {
        Targets::Regression(y) => header.extend((0..y.ncols()).map(|j| format!("y_{j}"))),
        Targets::Classes(_) => header.push("label".into()),
    }
    out.write_record(&header)?;
    for mu in 0..split.len() {
        let mut row: Vec<String> = split.inputs.row(mu).iter().map(f64::to_string).collect();
        match &split.targets {
            Targets::Regression(y) => row.extend(y.row(mu).iter().map(f64::to_string)),
            Targets::Classes(c) => row.push(c[mu].to_string()),
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `chain_03_random.csv` → `random`.
fn init_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    stem.splitn(3, '_').nth(2).unwrap_or(stem).to_string()
}

fn diagnose(dir: &Path, config: Option<&Path>) -> Result<()> {
    let diag = match config {
        Some(p) => ExperimentConfig::load(p)?.diagnostics,
        None => {
            let stored = dir.join("config.toml");
            if stored.exists() {
                ExperimentConfig::load(&stored)?.diagnostics
            } else {
                DiagnosticsConfig::default()
            }
        }
    };
    let traces = load_traces(dir)?;
    if traces.is_empty() {
        bail!("no chain_*.csv traces in {}", dir.display());
    }
    let inits: Vec<String> = traces.iter().map(|(p, _)| init_label(p)).collect();
    let tables: Vec<_> = traces.into_iter().map(|(_, t)| t).collect();
    let analysis = analyze_traces(&tables, &inits, &diag)?;
    let text = serde_json::to_string_pretty(&analysis)?;
    std::fs::write(dir.join("diagnosis.json"), &text)?;
    println!("{text}");
    Ok(())
}
