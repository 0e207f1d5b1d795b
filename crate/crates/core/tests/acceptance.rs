// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria, one line each. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use empc_core::corpus::{generate_corpus, Shape, ShapeParams, FIG1, INFEASIBLE_SUITE};
use empc_core::dependence::{data_dependence, potential_dependence};
use empc_core::enumerate::enumerate_max_matchings;
use empc_core::graph::{Graph, VertexId};
use empc_core::icfg::{
    build_icfg, combined_mpc_size, max_k_through, max_k_through_edges, split_one_entry_one_exit, transform_loop,
    LoopInfo, Origin,
};
use empc_core::ir::{assignments, parse_program, run_concrete, MiniProgram};
use empc_core::mpc::{brute_force_mpc, compute_mpc, hopcroft_karp, mpc_to_matching, to_bipartite};
use empc_core::searcher::{engine_run, initial_groups, EngineConfig, RunMetrics, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AC1_TIME: Duration = Duration::from_secs(1);
const AC2_TIME: Duration = Duration::from_secs(60);
const STEP_BUDGET: usize = 100_000;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(p: &MiniProgram, strategy: Strategy, handler: bool) -> RunMetrics {
    let mut cfg = EngineConfig::new(strategy);
    cfg.budget = STEP_BUDGET;
    cfg.handler = handler;
    engine_run(p, cfg).expect("engine run")
}

fn ac1() -> Outcome {
    let t = Instant::now();
    let p = parse_program(FIG1).unwrap();
    let e = run(&p, Strategy::Empc, true);
    let b = run(&p, Strategy::Bfs, true);
    let elapsed = t.elapsed();
    let blocks = p.block_count();
    let detail = format!(
        "empc {} paths, {}/{} blocks; bfs {} paths; {:.0?}",
        e.completed_paths,
        e.covered_blocks.len(),
        blocks,
        b.completed_paths,
        elapsed
    );
    check(e.completed_paths == 3 && e.covered_blocks.len() == blocks && b.completed_paths == 6 && elapsed < AC1_TIME, detail)
}

fn random_dags(seed: u64, count: usize, max_n: usize) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_n);
            let d = rng.gen_range(0.1..=0.5);
            random_dag(&mut rng, n, d)
        })
        .collect()
}

fn ac2(dags: &[Graph]) -> Outcome {
    let t = Instant::now();
    let mut bad = 0;
    for (i, g) in dags.iter().enumerate() {
        let c = compute_mpc(g, i as u64).unwrap();
        bad += usize::from(!c.is_valid_expanded(g) || c.size() != brute_force_mpc(g, 12).unwrap().min_size);
    }
    let elapsed = t.elapsed();
    check(bad == 0 && elapsed < AC2_TIME, format!("{} DAGs, {bad} mismatches, {:.1?}", dags.len(), elapsed))
}

fn ac3(dags: &[Graph]) -> Outcome {
    let mut bad = 0;
    for (i, g) in dags.iter().enumerate() {
        let m = hopcroft_karp(&to_bipartite(g).unwrap(), i as u64);
        bad += usize::from(compute_mpc(g, i as u64).unwrap().size() != g.vertex_count() - m.len());
    }
    check(bad == 0, format!("{} graphs, {bad} mismatches", dags.len()))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac4);
    let mut bad = 0;
    let n = 250;
    for i in 0..n {
        let total = rng.gen_range(0..=14);
        let nl = rng.gen_range(0..=total);
        let d = rng.gen_range(0.1..0.7);
        let b = random_bipartite(&mut rng, nl, total - nl, d);
        let m = hopcroft_karp(&b, i);
        bad += usize::from(!is_matching_of(&m, &b) || m.len() != max_matching_size(&b));
    }
    check(bad == 0, format!("{n} bipartite graphs, {bad} mismatches"))
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac5);
    let n = 120;
    let mut bad = 0;
    for _ in 0..n {
        let size = rng.gen_range(3..=12);
        let inst = one_entry_one_exit_instance(&mut rng, size);
        let s = split_one_entry_one_exit(&inst.g, inst.entry, inst.exit).unwrap();
        let whole = brute_force_mpc(&inst.g, 12).unwrap().min_size;
        let rem = brute_force_mpc(&s.remainder, 12).unwrap().min_size;
        let sub = brute_force_mpc(&s.subgraph, 12).unwrap().min_size;
        let k = max_k_through(&s.remainder, s.merged_vertex, 12).unwrap();
        bad += usize::from(combined_mpc_size(rem, k, sub) != whole);
    }
    check(bad == 0, format!("{n} one-entry-one-exit instances, {bad} mismatches"))
}

fn ac6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac6);
    let n = 120;
    let (mut bad_edges, mut bad_vertex) = (0, 0);
    for _ in 0..n {
        let size = rng.gen_range(3..=11);
        let inst = loop_instance(&mut rng, size, true);
        let li = LoopInfo {
            header: inst.entry,
            body: inst.region.clone(),
            back_edges: BTreeSet::new(),
            exiting_edges: BTreeSet::new(),
            exit_nodes: BTreeSet::new(),
        };
        let s = transform_loop(&inst.g, &li).unwrap();
        let whole = brute_force_mpc(&inst.g, 12).unwrap().min_size;
        let rem = brute_force_mpc(&s.remainder, 12).unwrap().min_size;
        let sub = brute_force_mpc(&s.subgraph, 12).unwrap().min_size;
        let exits: Vec<VertexId> = s.exit_targets.iter().map(|x| s.rem_map[x]).collect();
        let k_edges = max_k_through_edges(&s.remainder, s.merged_vertex, &exits, 12).unwrap();
        let k_vertex = max_k_through(&s.remainder, s.merged_vertex, 12).unwrap();
        bad_edges += usize::from(combined_mpc_size(rem, k_edges, sub) != whole);
        bad_vertex += usize::from(combined_mpc_size(rem, k_vertex, sub) != whole);
    }
    check(
        bad_edges == 0,
        format!("{n} loop instances, {bad_edges} mismatches (k over exit edges), {bad_vertex} (k through merged vertex)"),
    )
}

fn ac7() -> Outcome {
    let dags = random_dags(0xac7, 120, 10);
    let (mut bad, mut covers) = (0, 0);
    for g in &dags {
        let b = to_bipartite(g).unwrap();
        let set: BTreeSet<_> = enumerate_max_matchings(&b, None).matchings.iter().map(as_set).collect();
        let best = max_matching_size(&b);
        for c in brute_force_mpc(g, 10).unwrap().all_covers {
            covers += 1;
            let m = mpc_to_matching(&c, g);
            bad += usize::from(!is_matching_of(&m, &b) || m.len() != best || !set.contains(&as_set(&m)));
        }
    }
    check(bad == 0, format!("{} DAGs, {covers} covers, {bad} failures", dags.len()))
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac8);
    let n = 250;
    let mut bad = 0;
    for _ in 0..n {
        let total = rng.gen_range(0..=12);
        let nl = rng.gen_range(0..=total);
        let d = rng.gen_range(0.2..0.7);
        let b = random_bipartite(&mut rng, nl, total - nl, d);
        let got = enumerate_max_matchings(&b, None);
        let list: Vec<_> = got.matchings.iter().map(as_set).collect();
        let set: BTreeSet<_> = list.iter().cloned().collect();
        bad += usize::from(got.capped || set.len() != list.len() || set != all_max_matchings(&b));
    }
    check(bad == 0, format!("{n} bipartite graphs, {bad} mismatches"))
}

fn as_sites(p: &MiniProgram, m: &BTreeMap<VertexId, BTreeSet<VertexId>>) -> BTreeMap<Site, BTreeSet<Site>> {
    let icfg = build_icfg(p);
    m.iter()
        .map(|(k, vs)| (icfg.block_of(*k).unwrap(), vs.iter().map(|v| icfg.block_of(*v).unwrap()).collect()))
        .collect()
}

fn ac9() -> Outcome {
    let mut programs = Vec::new();
    for (i, shape) in [Shape::Diamonds, Shape::Loops, Shape::MultiCaller, Shape::Mixed].into_iter().enumerate() {
        let params = ShapeParams { shape, branches: 5, max_blocks: 30 };
        programs.extend(generate_corpus(0xac9 + 100 * i as u64, 15, &params));
    }
    let mut bad = 0;
    for g in &programs {
        let p = &g.program;
        bad += usize::from(p.block_count() > 30);
        bad += usize::from(as_sites(p, &data_dependence(p)) != data_dependence_oracle(p));
        bad += usize::from(as_sites(p, &potential_dependence(p)) != potential_dependence_oracle(p));
    }
    check(bad == 0, format!("{} programs, {bad} mismatches", programs.len()))
}

/// A block reached by two different feasible prefixes, each of which can
/// continue along two different feasible suffixes.
fn has_merge_diamond(p: &MiniProgram) -> bool {
    let traces: BTreeSet<Vec<Site>> = assignments(p).map(|a| run_concrete(p, &a).unwrap().0.blocks).collect();
    let mut splits: BTreeMap<Site, BTreeSet<(Vec<Site>, Vec<Site>)>> = BTreeMap::new();
    for t in &traces {
        let mut seen = BTreeSet::new();
        for (i, &b) in t.iter().enumerate() {
            if seen.insert(b) {
                splits.entry(b).or_default().insert((t[..i].to_vec(), t[i + 1..].to_vec()));
            }
        }
    }
    splits.values().any(|pairs| {
        let pre: BTreeSet<&Vec<Site>> = pairs.iter().map(|x| &x.0).collect();
        let suf: BTreeSet<&Vec<Site>> = pairs.iter().map(|x| &x.1).collect();
        pre.iter().any(|a| {
            pre.iter().any(|b| {
                a < b
                    && suf.iter().any(|x| {
                        suf.iter().any(|y| {
                            x < y
                                && [(a, x), (a, y), (b, x), (b, y)]
                                    .iter()
                                    .all(|&(u, v)| pairs.contains(&((*u).clone(), (*v).clone())))
                        })
                    })
            })
        })
    })
}

fn ac10() -> Outcome {
    let params = ShapeParams { shape: Shape::Diamonds, branches: 4, max_blocks: 30 };
    let corpus = generate_corpus(0xac10, 20, &params);
    let (mut all_feasible, mut diamonds) = (0, 0);
    let mut fails = Vec::new();
    for g in &corpus {
        let p = &g.program;
        let e = run(p, Strategy::Empc, true);
        let b = run(p, Strategy::Bfs, true);
        if e.reachable_blocks == p.block_count() {
            all_feasible += 1;
            if !e.full_coverage() {
                fails.push(format!("{}: coverage {}/{}", g.name, e.covered_blocks.len(), e.reachable_blocks));
            }
        }
        if e.completed_paths > b.completed_paths {
            fails.push(format!("{}: {} > {} paths", g.name, e.completed_paths, b.completed_paths));
        }
        if has_merge_diamond(p) {
            diamonds += 1;
            if e.completed_paths >= b.completed_paths {
                fails.push(format!("{}: {} not < {} paths", g.name, e.completed_paths, b.completed_paths));
            }
        }
        let again = run(p, Strategy::Empc, true);
        if serde_json::to_vec(&e).unwrap() != serde_json::to_vec(&again).unwrap() {
            fails.push(format!("{}: rerun differs", g.name));
        }
    }
    let detail = format!(
        "{} programs, {all_feasible} fully feasible, {diamonds} with merge diamonds; {}",
        corpus.len(),
        if fails.is_empty() { "no violations".to_string() } else { fails.join("; ") }
    );
    check(fails.is_empty() && diamonds > 0 && all_feasible > 0, detail)
}

/// True if every cover of the main region holds a path no input follows.
fn covers_hold_infeasible_path(p: &MiniProgram) -> bool {
    let icfg = build_icfg(p);
    let traces: BTreeSet<Vec<VertexId>> = assignments(p)
        .map(|a| run_concrete(p, &a).unwrap().0.blocks.iter().map(|&(f, b)| icfg.vertex_of(f, b)).collect())
        .collect();
    let (dec, groups) = initial_groups(p, None, 0);
    let main = &dec.regions[dec.main];
    let g = &groups[&dec.main];
    let feasible = |i: usize| {
        let blocks: Vec<VertexId> = g.paths[i]
            .iter()
            .filter_map(|&v| match main.origins[v] {
                Origin::Block(b) => Some(b),
                _ => None,
            })
            .collect();
        traces.contains(&blocks)
    };
    g.covers.iter().all(|c| c.iter().any(|&i| !feasible(i)))
}

fn ac11() -> Outcome {
    let mut fails = Vec::new();
    for (name, text) in INFEASIBLE_SUITE {
        let p = parse_program(text).unwrap();
        if !covers_hold_infeasible_path(&p) {
            fails.push(format!("{name}: some cover is feasible"));
        }
        let on = run(&p, Strategy::Empc, true);
        let off = run(&p, Strategy::Empc, false);
        if on.reachable_blocks != p.block_count() || !on.full_coverage() || off.full_coverage() {
            fails.push(format!(
                "{name}: handler {}/{}, ablation {}/{}",
                on.covered_blocks.len(),
                on.reachable_blocks,
                off.covered_blocks.len(),
                off.reachable_blocks
            ));
        }
    }
    let detail = format!(
        "{} programs; {}",
        INFEASIBLE_SUITE.len(),
        if fails.is_empty() { "handler 100%, ablation below 100% on all".to_string() } else { fails.join("; ") }
    );
    check(fails.is_empty() && INFEASIBLE_SUITE.len() >= 5, detail)
}

fn main() -> ExitCode {
    let dags = random_dags(0xac2, 220, 12);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("fig1 reproduction", Box::new(ac1)),
        ("mpc minimality", Box::new(|| ac2(&dags))),
        ("size identity", Box::new(|| ac3(&dags))),
        ("hopcroft-karp maximum", Box::new(ac4)),
        ("one-entry-one-exit size", Box::new(ac5)),
        ("loop subgraph size", Box::new(ac6)),
        ("cover to matching roundtrip", Box::new(ac7)),
        ("matching enumeration", Box::new(ac8)),
        ("dependence oracles", Box::new(ac9)),
        ("strategy properties", Box::new(ac10)),
        ("infeasible-path handling", Box::new(ac11)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("AC{:<2} {tag} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
