// SPDX-License-Identifier: Apache-2.0

//! Batch runs over (program, strategy, repeat) cells and their summary.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{parse_program, IrError, MiniProgram};
use crate::searcher::{engine_run, EngineConfig, EngineError, RunMetrics, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub programs: Vec<PathBuf>,
    pub strategies: Vec<String>,
    pub budget: usize,
    pub repeats: usize,
    /// Repeat `i` runs with seed `seed + i`.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_handler")]
    pub handler: bool,
}

fn default_handler() -> bool {
    true
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no strategies given")]
    NoStrategies,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("no programs given")]
    NoPrograms,
    #[error("unknown strategy `{0}`")]
    InvalidStrategy(String),
    #[error("cannot read program {path}: {source}")]
    MissingProgram { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: IrError },
    #[error("{program} under {strategy} (seed {seed}): {source}")]
    Engine { program: String, strategy: Strategy, seed: u64, source: EngineError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// Spec problems, as opposed to failures while running or writing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExperimentError::NoStrategies
                | ExperimentError::NoRepeats
                | ExperimentError::NoPrograms
                | ExperimentError::InvalidStrategy(_)
                | ExperimentError::MissingProgram { .. }
                | ExperimentError::Parse { .. }
        )
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<Vec<Strategy>, ExperimentError> {
        if self.programs.is_empty() {
            return Err(ExperimentError::NoPrograms);
        }
        self.strategies()
    }

    fn strategies(&self) -> Result<Vec<Strategy>, ExperimentError> {
        if self.strategies.is_empty() {
            return Err(ExperimentError::NoStrategies);
        }
        if self.repeats == 0 {
            return Err(ExperimentError::NoRepeats);
        }
        self.strategies.iter().map(|s| s.parse().map_err(|_| ExperimentError::InvalidStrategy(s.clone()))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub program: String,
    pub strategy: Strategy,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
}

impl RunRecord {
    /// File stem of the raw files written for this run.
    pub fn stem(&self) -> String {
        format!("{}__{}__{}", self.program, self.strategy, self.repeat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub program: String,
    pub strategy: Strategy,
    pub runs: usize,
    pub coverage: Stat,
    pub completed_paths: Stat,
    pub peak_live_states: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub budget: usize,
    pub repeats: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
}

impl Report {
    /// Aggregates raw runs by (program, strategy), keeping first-seen order.
    pub fn from_runs(budget: usize, repeats: usize, seed: u64, runs: &[RunRecord]) -> Report {
        let mut order: Vec<(String, Strategy)> = Vec::new();
        let mut by_cell: BTreeMap<(String, Strategy), Vec<&RunRecord>> = BTreeMap::new();
        for r in runs {
            let key = (r.program.clone(), r.strategy);
            if !by_cell.contains_key(&key) {
                order.push(key.clone());
            }
            by_cell.entry(key).or_default().push(r);
        }
        let cells = order
            .into_iter()
            .map(|key| {
                let rs = &by_cell[&key];
                let col = |f: &dyn Fn(&RunMetrics) -> f64| Stat::of(&rs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
                CellSummary {
                    program: key.0.clone(),
                    strategy: key.1,
                    runs: rs.len(),
                    coverage: col(&|m| m.coverage()),
                    completed_paths: col(&|m| m.completed_paths as f64),
                    peak_live_states: col(&|m| m.peak_live_states as f64),
                }
            })
            .collect();
        Report { budget, repeats, seed, cells }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: Report,
    pub runs: Vec<RunRecord>,
}

fn program_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Reads, parses and runs every cell of `spec` on `workers` threads, then
/// writes the outputs if `spec.out_dir` is set.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let mut programs = Vec::new();
    for path in &spec.programs {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::MissingProgram { path: path.clone(), source })?;
        let p = parse_program(&text).map_err(|source| ExperimentError::Parse { path: path.clone(), source })?;
        programs.push((program_name(path), p));
    }
    let out = run_programs(spec, &programs, workers)?;
    if let Some(dir) = &spec.out_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// Runs already-parsed programs; `spec.programs` is ignored.
pub fn run_programs(spec: &ExperimentSpec, programs: &[(String, MiniProgram)], workers: usize) -> Result<ExperimentOutput, ExperimentError> {
    let strategies = spec.strategies()?;
    let mut cells = Vec::new();
    for (pi, _) in programs.iter().enumerate() {
        for &s in &strategies {
            for i in 0..spec.repeats {
                cells.push((pi, s, i));
            }
        }
    }
    let exec = |&(pi, strategy, repeat): &(usize, Strategy, usize)| {
        let (name, p) = &programs[pi];
        let seed = spec.seed.wrapping_add(repeat as u64);
        let mut cfg = EngineConfig::new(strategy);
        cfg.budget = spec.budget;
        cfg.seed = seed;
        cfg.handler = spec.handler;
        engine_run(p, cfg)
            .map(|metrics| RunRecord { program: name.clone(), strategy, repeat, seed, metrics })
            .map_err(|source| ExperimentError::Engine { program: name.clone(), strategy, seed, source })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    let runs: Vec<RunRecord> = pool.install(|| cells.par_iter().map(exec).collect::<Result<_, _>>())?;
    let report = Report::from_runs(spec.budget, spec.repeats, spec.seed, &runs);
    Ok(ExperimentOutput { report, runs })
}

/// `report.json` plus `runs/<program>__<strategy>__<repeat>.{json,csv}`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<(), ExperimentError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let report_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(io_err(&report_path))?;
    for r in &out.runs {
        let json_path = runs_dir.join(format!("{}.json", r.stem()));
        fs::write(&json_path, serde_json::to_string_pretty(r).expect("run serializes") + "\n").map_err(io_err(&json_path))?;
        let csv_path = runs_dir.join(format!("{}.csv", r.stem()));
        fs::write(&csv_path, r.metrics.to_csv()).map_err(io_err(&csv_path))?;
    }
    Ok(())
}

/// Raw run records found under `dir/runs`, in file-name order.
pub fn read_runs(dir: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let runs_dir = dir.join("runs");
    let rd = fs::read_dir(&runs_dir).map_err(|source| ExperimentError::Io { path: runs_dir.clone(), source })?;
    let mut paths: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|source| ExperimentError::Io { path: p.clone(), source })?;
            serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Io { path: p.clone(), source: io::Error::new(io::ErrorKind::InvalidData, e) })
        })
        .collect()
}
