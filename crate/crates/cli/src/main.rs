// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use empc_core::corpus::{generate_corpus, Shape, ShapeParams};
use empc_core::dependence::analyze;
use empc_core::enumerate::enumerate_mpcs;
use empc_core::experiment::{run_experiment, ExperimentError, ExperimentSpec};
use empc_core::graph::Graph;
use empc_core::icfg::{build_icfg, decompose, IcfgJson, ICfg};
use empc_core::ir::{parse_program, MiniProgram};
use empc_core::mpc::{compute_mpc, MpcError, PathCoverJson};
use empc_core::searcher::{engine_run, EngineConfig, Strategy};

#[derive(Parser)]
#[command(name = "empc", version, about = "Path-cover guided symbolic execution toolkit")]
struct Cli {
    /// Base seed for every randomized step (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory; stdout when omitted (where that makes sense).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for experiment cells.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimum path covers of a DAG.
    #[command(subcommand)]
    Mpc(MpcCmd),
    /// iCFG decomposition.
    #[command(subcommand)]
    Icfg(IcfgCmd),
    /// Dependence analysis.
    #[command(subcommand)]
    Dep(DepCmd),
    /// Symbolic execution runs.
    #[command(subcommand)]
    Sym(SymCmd),
    /// Synthetic programs.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Batch experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum MpcCmd {
    Compute {
        /// Graph as JSON or DOT.
        #[arg(long)]
        graph: PathBuf,
    },
    Enumerate {
        #[arg(long)]
        graph: PathBuf,
        /// Maximum number of covers; 0 disables the cap.
        #[arg(long, default_value_t = 64)]
        cap: usize,
    },
}

#[derive(Subcommand)]
enum IcfgCmd {
    Transform {
        /// iCFG JSON.
        #[arg(long = "in", conflicts_with = "program", required_unless_present = "program")]
        input: Option<PathBuf>,
        /// Build the iCFG from a program instead.
        #[arg(long)]
        program: Option<PathBuf>,
    },
    /// Writes the iCFG of a program as JSON.
    Build {
        #[arg(long)]
        program: PathBuf,
    },
}

#[derive(Subcommand)]
enum DepCmd {
    Analyze {
        #[arg(long)]
        program: PathBuf,
    },
}

#[derive(Subcommand)]
enum SymCmd {
    Run {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, default_value = "empc")]
        strategy: String,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        /// Disable the infeasible-path handler.
        #[arg(long)]
        no_handler: bool,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Generate {
        #[arg(long, default_value = "mixed")]
        shape: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        branches: usize,
        #[arg(long, default_value_t = 30)]
        max_blocks: usize,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long = "program")]
    programs: Vec<PathBuf>,
    /// Comma separated.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    no_handler: bool,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Engine(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Engine(_) => 3,
        }
    }
}

type Res<T> = Result<T, Failure>;

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn read_program(path: &Path) -> Res<MiniProgram> {
    parse_program(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Res<Graph> {
    Graph::parse(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn mpc_err(e: MpcError) -> Failure {
    match e {
        MpcError::Cyclic => Failure::Validation(e.to_string()),
        e => Failure::Engine(e.to_string()),
    }
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Res<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    match out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Engine(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Engine(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct MpcSetJson {
    covers: Vec<PathCoverJson>,
    capped: bool,
}

fn run(cli: Cli) -> Res<()> {
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::Mpc(MpcCmd::Compute { graph }) => {
            let g = read_graph(&graph)?;
            let cover = compute_mpc(&g, seed).map_err(mpc_err)?;
            emit(out, &cover.to_json())
        }
        Cmd::Mpc(MpcCmd::Enumerate { graph, cap }) => {
            let g = read_graph(&graph)?;
            let set = enumerate_mpcs(&g, (cap > 0).then_some(cap), seed).map_err(mpc_err)?;
            emit(out, &MpcSetJson { covers: set.covers.iter().map(|c| c.to_json()).collect(), capped: set.capped })
        }
        Cmd::Icfg(IcfgCmd::Transform { input, program }) => {
            let icfg = match (input, program) {
                (Some(p), _) => {
                    let j: IcfgJson =
                        serde_json::from_str(&read(&p)?).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
                    ICfg::from_json(&j).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
                }
                (None, Some(p)) => build_icfg(&read_program(&p)?),
                (None, None) => unreachable!("clap requires one of them"),
            };
            emit(out, &decompose(&icfg).to_json())
        }
        Cmd::Icfg(IcfgCmd::Build { program }) => emit(out, &build_icfg(&read_program(&program)?).to_json()),
        Cmd::Dep(DepCmd::Analyze { program }) => {
            let p = read_program(&program)?;
            emit(out, &analyze(&p).to_json(&build_icfg(&p)))
        }
        Cmd::Sym(SymCmd::Run { program, strategy, budget, no_handler }) => {
            let p = read_program(&program)?;
            let strategy: Strategy = strategy.parse().map_err(|e: empc_core::searcher::EngineError| Failure::Validation(e.to_string()))?;
            let mut cfg = EngineConfig::new(strategy);
            cfg.budget = budget;
            cfg.seed = seed;
            cfg.handler = !no_handler;
            let m = engine_run(&p, cfg).map_err(|e| Failure::Engine(e.to_string()))?;
            emit(out, &m)?;
            if let Some(o) = out {
                write(&o.with_extension("csv"), &m.to_csv())?;
            }
            Ok(())
        }
        Cmd::Corpus(CorpusCmd::Generate { shape, count, branches, max_blocks }) => {
            if count == 0 {
                return Err(Failure::Validation("count must be at least 1".into()));
            }
            let shape: Shape = shape.parse().map_err(Failure::Validation)?;
            let dir = out.ok_or_else(|| Failure::Validation("corpus generate needs --out <dir>".into()))?;
            for g in generate_corpus(seed, count, &ShapeParams { shape, branches, max_blocks }) {
                write(&dir.join(format!("{}.mir", g.name)), &g.text)?;
                println!("{}", g.name);
            }
            Ok(())
        }
        Cmd::Experiment(ExperimentCmd::Run(a)) => {
            let mut spec = match &a.spec {
                Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
                None => ExperimentSpec {
                    programs: Vec::new(),
                    strategies: Vec::new(),
                    budget: 100_000,
                    repeats: 1,
                    seed,
                    out_dir: None,
                    handler: true,
                },
            };
            if !a.programs.is_empty() {
                spec.programs = a.programs;
            }
            if !a.strategies.is_empty() {
                spec.strategies = a.strategies;
            }
            if let Some(b) = a.budget {
                spec.budget = b;
            }
            if let Some(r) = a.repeats {
                spec.repeats = r;
            }
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            if a.no_handler {
                spec.handler = false;
            }
            if let Some(o) = out {
                spec.out_dir = Some(o.to_path_buf());
            }
            let res = run_experiment(&spec, cli.workers).map_err(|e: ExperimentError| {
                if e.is_validation() {
                    Failure::Validation(e.to_string())
                } else {
                    Failure::Engine(e.to_string())
                }
            })?;
            if spec.out_dir.is_none() {
                emit(None, &res.report)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) | Failure::Engine(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
