use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lut::{compile_model, emit_rtl, format_table, write_rtl};
use crate::model::{derive_mask, retrain, SparsityMode};
use crate::sparsity::FeatureMask;

use super::config::ExperimentConfig;
use super::dataset::Splits;
use super::io::{sha256_hex, write_atomic};
use super::mask_io::{format_mask, write_mask};

/// Outcome of one (mode, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub mode: SparsityMode,
    pub seed: u64,
    /// Best per-epoch test accuracy of the retrained model and its epoch.
    pub best_accuracy: f64,
    pub best_epoch: usize,
    pub final_accuracy: f64,
    /// Connection density at the end of every mask epoch.
    pub density: Vec<f64>,
    /// Test accuracy after every retraining epoch.
    pub accuracy: Vec<f64>,
    pub mask: FeatureMask,
    pub mask_sha256: String,
    /// Seconds spent in this run. Kept out of the CSV report so that reruns
    /// produce identical files.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.runs.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn runs_of(&self, mode: SparsityMode) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.mode == mode)
    }

    /// Mean best accuracy over the seeds of `mode`.
    pub fn mean_accuracy(&self, mode: SparsityMode) -> Option<f64> {
        let acc: Vec<f64> = self.runs_of(mode).map(|r| r.best_accuracy).collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,seed,best_accuracy,best_epoch,final_accuracy,final_density,mask_sha256\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{:.6},{:.6},{}",
                r.mode,
                r.seed,
                r.best_accuracy,
                r.best_epoch,
                r.final_accuracy,
                r.density.last().copied().unwrap_or(f64::NAN),
                r.mask_sha256
            );
        }
        out
    }

    fn series_csv(&self, header: &str, series: impl Fn(&RunRecord) -> &[f64]) -> String {
        let mut out = format!("mode,seed,epoch,{header}\n");
        for r in &self.runs {
            for (e, v) in series(r).iter().enumerate() {
                let _ = writeln!(out, "{},{},{e},{v:.6}", r.mode, r.seed);
            }
        }
        out
    }

    pub fn density_csv(&self) -> String {
        self.series_csv("density", |r| &r.density)
    }

    pub fn accuracy_csv(&self) -> String {
        self.series_csv("test_accuracy", |r| &r.accuracy)
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("mode,seed,wall_time_s\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{:.3}", r.mode, r.seed, r.wall_time);
        }
        out
    }
}

fn run_name(mode: SparsityMode, seed: u64) -> String {
    format!("{}-seed{seed}", mode.name())
}

fn run_one(cfg: &ExperimentConfig, data: &Splits, mode: SparsityMode, seed: u64, out_dir: &Path) -> Result<RunRecord> {
    let start = Instant::now();
    let name = run_name(mode, seed);
    let model_cfg = cfg.model_config(mode, seed)?;
    let derived = derive_mask(&model_cfg, &data.train).map_err(|e| e.in_stage(format!("{name}: derive-mask")))?;
    let outcome = retrain(&model_cfg, &derived.mask, &data.train, Some(&data.test))
        .map_err(|e| e.in_stage(format!("{name}: retrain")))?;
    let (best_epoch, best_accuracy) = outcome
        .best()
        .ok_or_else(|| Error::invalid_arg("retraining needs at least one epoch").in_stage(format!("{name}: retrain")))?;
    let accuracy: Vec<f64> = outcome.epochs.iter().filter_map(|e| e.test_accuracy).collect();

    write_mask(&derived.mask, &out_dir.join("masks").join(format!("{name}.mask")))
        .map_err(|e| e.in_stage(format!("{name}: write mask")))?;
    if cfg.compile_rtl {
        let stage = |e: Error| e.in_stage(format!("{name}: compile"));
        let compiled = compile_model(&outcome.model).map_err(stage)?;
        let dir = out_dir.join("rtl").join(&name);
        write_rtl(&emit_rtl(&compiled.netlist, &compiled.tables).map_err(stage)?, &dir).map_err(stage)?;
        for t in compiled.tables.iter().flatten() {
            let path = dir.join("tables").join(format!("{}_{}.tbl", t.layer, t.neuron));
            write_atomic(&path, format_table(t).as_bytes()).map_err(stage)?;
        }
    }
    Ok(RunRecord {
        mode,
        seed,
        best_accuracy,
        best_epoch,
        final_accuracy: outcome.final_accuracy().unwrap_or(best_accuracy),
        density: derived.density,
        accuracy,
        mask_sha256: sha256_hex(format_mask(&derived.mask).as_bytes()),
        mask: derived.mask,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs every (mode, seed) pair of `cfg` on `data` and writes masks,
/// `report.csv`, `density.csv`, `accuracy.csv` and `timing.csv` to `out_dir`
/// (plus truth tables and Verilog when `compile_rtl` is set). Runs execute in
/// parallel; rows are ordered by mode then seed.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Splits, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let jobs: Vec<(SparsityMode, u64)> = cfg
        .modes()
        .into_iter()
        .flat_map(|m| cfg.seed_list().into_iter().map(move |s| (m, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(mode, seed)| run_one(cfg, data, mode, seed, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport { runs };
    write_atomic(&out_dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&out_dir.join("density.csv"), report.density_csv().as_bytes())?;
    write_atomic(&out_dir.join("accuracy.csv"), report.accuracy_csv().as_bytes())?;
    write_atomic(&out_dir.join("timing.csv"), report.timing_csv().as_bytes())?;
    Ok(report)
}
