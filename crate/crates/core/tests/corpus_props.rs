// SPDX-License-Identifier: Apache-2.0

use empc_core::corpus::{generate_corpus, Shape, ShapeParams, FIG1, INFEASIBLE_SUITE};
use empc_core::icfg::build_icfg;
use empc_core::ir::{parse_program, run_concrete, MiniProgram, Terminator};

fn ends_in_main_return(p: &MiniProgram, inputs: &[i64]) -> bool {
    let Ok((trace, _)) = run_concrete(p, inputs) else { return false };
    let main = p.entry_function;
    match trace.blocks.last() {
        Some(&(f, b)) => f == main && matches!(p.functions[f].blocks[b].term, Terminator::Return(_)),
        None => false,
    }
}

#[test]
fn fig1_shape_is_the_example() {
    let params = ShapeParams { shape: Shape::Fig1, branches: 0, max_blocks: 0 };
    let g = generate_corpus(0, 1, &params).remove(0);
    assert_eq!(g.text, FIG1);
    assert_eq!(g.program.block_count(), 9);
}

#[test]
fn fifty_programs_pass_the_pipeline() {
    let mut all = Vec::new();
    for (i, shape) in [Shape::Chain, Shape::Diamonds, Shape::Loops, Shape::MultiCaller, Shape::Mixed].into_iter().enumerate() {
        let params = ShapeParams { shape, branches: 4, max_blocks: 30 };
        all.extend(generate_corpus(1000 + i as u64, 10, &params));
    }
    assert_eq!(all.len(), 50);
    for g in &all {
        let p = parse_program(&g.text).unwrap();
        assert_eq!(&p, &g.program);
        let icfg = build_icfg(&p);
        assert_eq!(icfg.graph.vertex_count(), p.block_count(), "{}", g.name);
        let lows: Vec<i64> = p.inputs.iter().map(|i| i.lo).collect();
        assert!(ends_in_main_return(&p, &lows), "{}\n{}", g.name, g.text);
    }
}

#[test]
fn shapes_respect_block_limits() {
    for shape in [Shape::Diamonds, Shape::Loops, Shape::MultiCaller, Shape::Mixed] {
        let params = ShapeParams { shape, branches: 6, max_blocks: 30 };
        for g in generate_corpus(3, 10, &params) {
            let main = &g.program.functions[g.program.entry_function];
            assert!(main.blocks.len() <= 30, "{}: {}", g.name, main.blocks.len());
        }
    }
}

#[test]
fn infeasible_suite_has_reachable_blocks_only() {
    for (name, text) in INFEASIBLE_SUITE {
        let p = parse_program(text).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for a in empc_core::ir::assignments(&p) {
            let (t, _) = run_concrete(&p, &a).unwrap();
            seen.extend(t.blocks);
        }
        assert_eq!(seen.len(), p.block_count(), "{name}");
    }
}
