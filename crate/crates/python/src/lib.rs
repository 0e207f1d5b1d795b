// SPDX-License-Identifier: Apache-2.0

//! Python bindings: graphs go in as (vertex count, edge list), programs as
//! mini-IR text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use empc_core::corpus::{generate_corpus as gen_corpus, Shape, ShapeParams};
use empc_core::dependence::analyze;
use empc_core::enumerate::{enumerate_max_matchings_seeded, enumerate_mpcs as enum_mpcs};
use empc_core::experiment::{run_programs, ExperimentSpec};
use empc_core::graph::{Graph, VertexId};
use empc_core::icfg::{build_icfg, decompose as decompose_icfg};
use empc_core::ir::{parse_program, MiniProgram};
use empc_core::mpc::{self, BipartiteGraph, MpcError};
use empc_core::searcher::{engine_run, EngineConfig, RunMetrics, Strategy};

type Paths = Vec<Vec<VertexId>>;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn graph(vertices: usize, edges: Vec<(VertexId, VertexId)>) -> PyResult<Graph> {
    Graph::from_edges(vertices, &edges).map_err(value_err)
}

fn mpc_err(e: MpcError) -> PyErr {
    match e {
        MpcError::Cyclic => value_err(e),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A parsed mini-IR program.
#[pyclass(module = "empc", frozen)]
struct Program {
    inner: MiniProgram,
}

#[pymethods]
impl Program {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        parse_program(text).map(|inner| Program { inner }).map_err(value_err)
    }

    fn block_count(&self) -> usize {
        self.inner.block_count()
    }

    #[pyo3(signature = (strategy="empc", budget=100_000, seed=0, handler=true))]
    fn run(&self, strategy: &str, budget: usize, seed: u64, handler: bool) -> PyResult<Metrics> {
        let strategy: Strategy = strategy.parse().map_err(value_err)?;
        let mut cfg = EngineConfig::new(strategy);
        cfg.budget = budget;
        cfg.seed = seed;
        cfg.handler = handler;
        engine_run(&self.inner, cfg).map(|inner| Metrics { inner }).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Decomposition of the program's iCFG as a JSON string.
    fn decompose(&self) -> String {
        serde_json::to_string(&decompose_icfg(&build_icfg(&self.inner)).to_json()).expect("serializable")
    }

    /// Branch label -> (data dependences, potential dependences).
    fn dependences(&self) -> Vec<(String, Vec<String>, Vec<String>)> {
        let j = analyze(&self.inner).to_json(&build_icfg(&self.inner));
        let mut keys: Vec<&String> = j.data_dep.keys().chain(j.potential_dep.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| (k.clone(), j.data_dep.get(k).cloned().unwrap_or_default(), j.potential_dep.get(k).cloned().unwrap_or_default()))
            .collect()
    }
}

/// Metrics of one engine run.
#[pyclass(module = "empc", frozen)]
struct Metrics {
    inner: RunMetrics,
}

#[pymethods]
impl Metrics {
    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }
    #[getter]
    fn completed_paths(&self) -> usize {
        self.inner.completed_paths
    }
    #[getter]
    fn completed(&self) -> Vec<Vec<String>> {
        self.inner.completed.clone()
    }
    #[getter]
    fn covered_blocks(&self) -> Vec<String> {
        self.inner.covered_blocks.clone()
    }
    #[getter]
    fn reachable_blocks(&self) -> usize {
        self.inner.reachable_blocks
    }
    #[getter]
    fn coverage(&self) -> f64 {
        self.inner.coverage()
    }
    #[getter]
    fn peak_live_states(&self) -> usize {
        self.inner.peak_live_states
    }
    #[getter]
    fn covered_series(&self) -> Vec<usize> {
        self.inner.covered_series.clone()
    }
    #[getter]
    fn live_series(&self) -> Vec<usize> {
        self.inner.live_series.clone()
    }
    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
    fn __repr__(&self) -> String {
        format!(
            "Metrics(strategy={}, completed_paths={}, coverage={}/{})",
            self.inner.strategy,
            self.inner.completed_paths,
            self.inner.covered_blocks.len(),
            self.inner.reachable_blocks
        )
    }
}

#[pyfunction]
#[pyo3(signature = (vertices, edges, seed=0))]
fn compute_mpc(vertices: usize, edges: Vec<(VertexId, VertexId)>, seed: u64) -> PyResult<Paths> {
    mpc::compute_mpc(&graph(vertices, edges)?, seed).map(|c| c.paths).map_err(mpc_err)
}

/// Returns (covers, capped); `cap=None` disables the cap.
#[pyfunction]
#[pyo3(signature = (vertices, edges, cap=Some(64), seed=0))]
fn enumerate_mpcs(vertices: usize, edges: Vec<(VertexId, VertexId)>, cap: Option<usize>, seed: u64) -> PyResult<(Vec<Paths>, bool)> {
    let set = enum_mpcs(&graph(vertices, edges)?, cap, seed).map_err(mpc_err)?;
    Ok((set.covers.into_iter().map(|c| c.paths).collect(), set.capped))
}

#[pyfunction]
#[pyo3(signature = (left, right, edges, seed=0))]
fn hopcroft_karp(left: usize, right: usize, edges: Vec<(usize, usize)>, seed: u64) -> PyResult<Vec<(usize, usize)>> {
    if let Some(&(l, r)) = edges.iter().find(|&&(l, r)| l >= left || r >= right) {
        return Err(value_err(format!("edge ({l}, {r}) out of range")));
    }
    let b = BipartiteGraph::from_edges(left, right, &edges);
    Ok(mpc::hopcroft_karp(&b, seed).pairs().iter().copied().collect())
}

#[pyfunction]
#[pyo3(signature = (left, right, edges, cap=Some(64), seed=0))]
fn enumerate_max_matchings(
    left: usize,
    right: usize,
    edges: Vec<(usize, usize)>,
    cap: Option<usize>,
    seed: u64,
) -> PyResult<(Vec<Vec<(usize, usize)>>, bool)> {
    if let Some(&(l, r)) = edges.iter().find(|&&(l, r)| l >= left || r >= right) {
        return Err(value_err(format!("edge ({l}, {r}) out of range")));
    }
    let set = enumerate_max_matchings_seeded(&BipartiteGraph::from_edges(left, right, &edges), cap, seed);
    Ok((set.matchings.iter().map(|m| m.pairs().iter().copied().collect()).collect(), set.capped))
}

/// List of (name, mini-IR text).
#[pyfunction]
#[pyo3(signature = (seed, count, shape="mixed", branches=4, max_blocks=30))]
fn generate_corpus(seed: u64, count: usize, shape: &str, branches: usize, max_blocks: usize) -> PyResult<Vec<(String, String)>> {
    if count == 0 {
        return Err(value_err("count must be at least 1"));
    }
    let shape: Shape = shape.parse().map_err(PyValueError::new_err)?;
    Ok(gen_corpus(seed, count, &ShapeParams { shape, branches, max_blocks }).into_iter().map(|g| (g.name, g.text)).collect())
}

/// Runs every (program, strategy, repeat) cell and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (programs, strategies, budget=100_000, repeats=1, seed=0, workers=1, handler=true))]
fn run_experiment(
    py: Python<'_>,
    programs: Vec<(String, String)>,
    strategies: Vec<String>,
    budget: usize,
    repeats: usize,
    seed: u64,
    workers: usize,
    handler: bool,
) -> PyResult<String> {
    let parsed = programs
        .into_iter()
        .map(|(name, text)| parse_program(&text).map(|p| (name.clone(), p)).map_err(|e| value_err(format!("{name}: {e}"))))
        .collect::<PyResult<Vec<_>>>()?;
    let spec = ExperimentSpec { programs: Vec::new(), strategies, budget, repeats, seed, out_dir: None, handler };
    let out = py.allow_threads(|| run_programs(&spec, &parsed, workers)).map_err(|e| {
        if e.is_validation() {
            value_err(e)
        } else {
            PyRuntimeError::new_err(e.to_string())
        }
    })?;
    Ok(serde_json::to_string(&out.report).expect("serializable"))
}

#[pymodule]
fn empc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Program>()?;
    m.add_class::<Metrics>()?;
    m.add_function(wrap_pyfunction!(compute_mpc, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_mpcs, m)?)?;
    m.add_function(wrap_pyfunction!(hopcroft_karp, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_max_matchings, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
