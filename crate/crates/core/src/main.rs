use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparselut::harness::{
    connectivity_heatmap, read_mask, run_experiment, weight_heatmap, write_atomic, write_grid_csv, write_mask,
    ExperimentConfig,
};
use sparselut::lut::{compile_model, emit_rtl, format_table, write_rtl};
use sparselut::model::{derive_mask, retrain, SparsityMode, TrainedModel};
use sparselut::{Error, Result};

/// Number of worker threads; unset uses every core.
const THREADS_ENV: &str = "SPARSELUT_THREADS";

#[derive(Parser)]
#[command(name = "sparselut", version, about = "Learned fixed fan-in connectivity for LUT networks")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step 1: derive a connectivity mask.
    DeriveMask {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's mode.
        #[arg(long)]
        mode: Option<SparsityMode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Step 2: retrain a quantized network on a fixed mask.
    Retrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Enumerate truth tables and write Verilog.
    CompileRtl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Run every mode and seed and write the CSV report.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated modes; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<SparsityMode>,
        /// Number of seeds; defaults to the config's.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// First-layer heatmap as a side x side CSV grid.
    Heatmap {
        /// Connection counts per input pixel.
        #[arg(long, required_unless_present = "model", conflicts_with = "model")]
        mask: Option<PathBuf>,
        /// Mean absolute first-layer weight per input pixel.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        side: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DeriveMask { config, out, mode, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model_cfg = cfg.model_config(mode.unwrap_or(cfg.mode), seed.unwrap_or(cfg.seed))?;
            let data = cfg.load_data()?;
            let derived = derive_mask(&model_cfg, &data.train).map_err(|e| e.in_stage("derive-mask"))?;
            write_mask(&derived.mask, &out)?;
            println!("density {:.6}", derived.mask.density());
        }
        Command::Retrain { config, mask, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model_cfg = cfg.model_config(cfg.mode, seed.unwrap_or(cfg.seed))?;
            let mask = read_mask(&mask)?;
            let data = cfg.load_data()?;
            let outcome = retrain(&model_cfg, &mask, &data.train, Some(&data.test)).map_err(|e| e.in_stage("retrain"))?;
            let json = serde_json::to_vec(&outcome.model).expect("plain data");
            write_atomic(&out, &json)?;
            if let Some((epoch, acc)) = outcome.best() {
                println!("best test accuracy {acc:.6} at epoch {epoch}");
            }
            if let Some(acc) = outcome.final_accuracy() {
                println!("final test accuracy {acc:.6}");
            }
        }
        Command::CompileRtl { model, outdir } => {
            let model = load_model(&model)?;
            let compiled = compile_model(&model).map_err(|e| e.in_stage("compile"))?;
            write_rtl(&emit_rtl(&compiled.netlist, &compiled.tables)?, &outdir)?;
            for t in compiled.tables.iter().flatten() {
                let path = outdir.join("tables").join(format!("{}_{}.tbl", t.layer, t.neuron));
                write_atomic(&path, format_table(t).as_bytes())?;
            }
            println!(
                "{} neurons, {} table entries, pipeline depth {}",
                compiled.tables.iter().map(Vec::len).sum::<usize>(),
                compiled.total_entries(),
                compiled.netlist.pipeline_depth()
            );
        }
        Command::Report { config, modes, seeds, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !modes.is_empty() {
                cfg.modes = modes;
            }
            if let Some(n) = seeds {
                cfg.seeds = n;
            }
            cfg.validate()?;
            let data = cfg.load_data()?;
            let report = run_experiment(&cfg, &data, &out)?;
            print!("{}", report.to_csv());
        }
        Command::Heatmap { mask, model, side, out } => {
            let grid = match (mask, model) {
                (Some(mask), _) => connectivity_heatmap(&read_mask(&mask)?.layers[0], side)?,
                (None, Some(model)) => weight_heatmap(&load_model(&model)?.linear_weight_matrix(0), side)?,
                (None, None) => unreachable!("clap requires one of --mask/--model"),
            };
            write_grid_csv(&grid, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
