// SPDX-License-Identifier: Apache-2.0

//! Synthetic program corpus: the motivating fork-merge example plus random
//! programs built from branch chains, diamonds, bounded loops and helper
//! functions called from several sites.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{parse_program, MiniProgram};

/// Two forks whose three subpaths merge before a third fork: six complete
/// paths, three of which cover every block.
pub const FIG1: &str = "input x in [0, 2];
input y in [0, 1];
fn main() {
  br1: br x == 0 ? a : br2;
  a: u := 1; goto br3;
  br2: br x == 1 ? b : c;
  b: u := 2; goto br3;
  c: u := 3; goto br3;
  br3: br y == 0 ? d : e;
  d: v := u; goto exit;
  e: v := u + 1; goto exit;
  exit: return v;
}
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Fig1,
    /// Forks whose second arm returns early; no merges.
    Chain,
    Diamonds,
    Loops,
    MultiCaller,
    Mixed,
}

impl Shape {
    pub const ALL: [Shape; 6] = [Shape::Fig1, Shape::Chain, Shape::Diamonds, Shape::Loops, Shape::MultiCaller, Shape::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Fig1 => "fig1",
            Shape::Chain => "chain",
            Shape::Diamonds => "diamonds",
            Shape::Loops => "loops",
            Shape::MultiCaller => "multi-caller",
            Shape::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.name() == s)
            .ok_or_else(|| format!("unknown shape `{s}` (expected one of fig1, chain, diamonds, loops, multi-caller, mixed)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub shape: Shape,
    /// Number of forking segments.
    pub branches: usize,
    /// Soft limit on the number of blocks per program.
    pub max_blocks: usize,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams { shape: Shape::Mixed, branches: 4, max_blocks: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedProgram {
    pub name: String,
    pub text: String,
    pub program: MiniProgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seg {
    Straight,
    EarlyExit,
    Diamond,
    Fork3,
    Triangle,
    Loop,
    Call,
}

const INPUTS: [&str; 3] = ["a", "b", "c"];
const LOCALS: [&str; 2] = ["x", "y"];

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    blocks: Vec<String>,
    fresh: usize,
    loops: usize,
    helpers: usize,
    calls: usize,
}

impl Builder<'_> {
    fn label(&mut self, stem: &str) -> String {
        self.fresh += 1;
        format!("{stem}{}", self.fresh)
    }

    fn block(&mut self, label: &str, body: &str) {
        self.blocks.push(format!("  {label}: {body}"));
    }

    fn var(&mut self) -> &'static str {
        if self.rng.gen_bool(0.5) {
            INPUTS[self.rng.gen_range(0..INPUTS.len())]
        } else {
            LOCALS[self.rng.gen_range(0..LOCALS.len())]
        }
    }

    fn cond(&mut self) -> String {
        let v = self.var();
        let op = ["<", "<=", "==", "!="][self.rng.gen_range(0..4)];
        format!("{v} {op} {}", self.rng.gen_range(0..3))
    }

    fn assign(&mut self) -> String {
        let dest = LOCALS[self.rng.gen_range(0..LOCALS.len())];
        let k = self.rng.gen_range(0..3);
        match self.rng.gen_range(0..3) {
            0 => format!("{dest} := {k}; "),
            1 => format!("{dest} := {} + {k}; ", self.var()),
            _ => format!("{dest} := {} - {}; ", self.var(), self.var()),
        }
    }

    fn maybe_assign(&mut self) -> String {
        if self.rng.gen_bool(0.6) {
            self.assign()
        } else {
            String::new()
        }
    }

    fn emit(&mut self, seg: Seg, start: &str, next: &str) {
        match seg {
            Seg::Straight => {
                let s = self.assign();
                self.block(start, &format!("{s}goto {next};"));
            }
            Seg::EarlyExit => {
                let out = self.label("out");
                let c = self.cond();
                self.block(start, &format!("br {c} ? {next} : {out};"));
                let v = self.var();
                self.block(&out, &format!("return {v};"));
            }
            Seg::Diamond => {
                let (t, f) = (self.label("t"), self.label("f"));
                let c = self.cond();
                self.block(start, &format!("br {c} ? {t} : {f};"));
                let (st, sf) = (self.maybe_assign(), self.maybe_assign());
                self.block(&t, &format!("{st}goto {next};"));
                self.block(&f, &format!("{sf}goto {next};"));
            }
            Seg::Fork3 => {
                let (a, m, b, c) = (self.label("p"), self.label("q"), self.label("r"), self.label("s"));
                let c1 = self.cond();
                self.block(start, &format!("br {c1} ? {a} : {m};"));
                let c2 = self.cond();
                self.block(&m, &format!("br {c2} ? {b} : {c};"));
                for l in [a, b, c] {
                    let s = self.maybe_assign();
                    self.block(&l, &format!("{s}goto {next};"));
                }
            }
            Seg::Triangle => {
                let t = self.label("t");
                let c = self.cond();
                self.block(start, &format!("br {c} ? {t} : {next};"));
                let s = self.assign();
                self.block(&t, &format!("{s}goto {next};"));
            }
            Seg::Loop => {
                let i = format!("i{}", self.loops);
                self.loops += 1;
                let (h, body, latch) = (self.label("h"), self.label("body"), self.label("latch"));
                let bound = if self.rng.gen_bool(0.5) {
                    self.rng.gen_range(1..3).to_string()
                } else {
                    INPUTS[self.rng.gen_range(0..INPUTS.len())].to_string()
                };
                self.block(start, &format!("{i} := 0; goto {h};"));
                self.block(&h, &format!("br {i} < {bound} ? {body} : {next};"));
                if self.rng.gen_bool(0.5) {
                    let (t, f) = (self.label("t"), self.label("f"));
                    let c = if self.rng.gen_bool(0.5) { format!("{i} == 0") } else { self.cond() };
                    self.block(&body, &format!("br {c} ? {t} : {f};"));
                    let (st, sf) = (self.maybe_assign(), self.maybe_assign());
                    self.block(&t, &format!("{st}goto {latch};"));
                    self.block(&f, &format!("{sf}goto {latch};"));
                } else {
                    let s = self.assign();
                    self.block(&body, &format!("{s}goto {latch};"));
                }
                self.block(&latch, &format!("{i} := {i} + 1; goto {h};"));
            }
            Seg::Call => {
                let dest = LOCALS[self.rng.gen_range(0..LOCALS.len())];
                let callee = if self.helpers == 0 { 0 } else { self.rng.gen_range(0..self.helpers) };
                let arg = self.var();
                self.calls += 1;
                self.block(start, &format!("{dest} := call h{callee}({arg}); goto {next};"));
            }
        }
    }
}

fn helper(rng: &mut ChaCha8Rng, k: usize) -> String {
    let c = rng.gen_range(0..3);
    let op = ["<", "==", "!="][rng.gen_range(0..3)];
    let else_arm = if rng.gen_bool(0.5) { "r := 0; " } else { "r := p; " };
    format!(
        "fn h{k}(p) {{\n  e: br p {op} {c} ? s : t;\n  s: r := p + 1; goto j;\n  t: {else_arm}goto j;\n  j: return r;\n}}\n"
    )
}

fn segments(rng: &mut ChaCha8Rng, params: &ShapeParams) -> Vec<Seg> {
    let forks: &[Seg] = match params.shape {
        Shape::Fig1 => unreachable!(),
        Shape::Chain => &[Seg::EarlyExit],
        Shape::Diamonds => &[Seg::Diamond, Seg::Diamond, Seg::Fork3],
        Shape::Loops => &[Seg::Loop, Seg::Diamond, Seg::Triangle],
        Shape::MultiCaller => &[Seg::Diamond, Seg::Triangle],
        Shape::Mixed => &[Seg::Diamond, Seg::Fork3, Seg::Triangle, Seg::Loop, Seg::Call],
    };
    let mut out: Vec<Seg> = (0..params.branches).map(|_| *forks.choose(rng).unwrap()).collect();
    if params.shape == Shape::MultiCaller {
        out.extend([Seg::Call, Seg::Call]);
        out.shuffle(rng);
    }
    if params.shape != Shape::Chain {
        let extra = rng.gen_range(0..=params.branches / 2);
        for _ in 0..extra {
            let at = rng.gen_range(0..=out.len());
            out.insert(at, Seg::Straight);
        }
    }
    out
}

fn seg_blocks(seg: Seg) -> usize {
    match seg {
        Seg::Straight | Seg::Call => 1,
        Seg::EarlyExit | Seg::Triangle => 2,
        Seg::Diamond => 3,
        Seg::Fork3 => 5,
        Seg::Loop => 6,
    }
}

/// One random program of the given shape, as text.
pub fn generate_program(rng: &mut ChaCha8Rng, params: &ShapeParams) -> String {
    if params.shape == Shape::Fig1 {
        return FIG1.to_string();
    }
    let segs = segments(rng, params);
    let helpers = match params.shape {
        _ if !segs.contains(&Seg::Call) => 0,
        Shape::MultiCaller => 1,
        _ => rng.gen_range(1..3),
    };
    let mut text = String::new();
    for name in INPUTS {
        writeln!(text, "input {name} in [0, 2];").unwrap();
    }
    for k in 0..helpers {
        text.push_str(&helper(rng, k));
    }
    let mut b = Builder { rng, blocks: Vec::new(), fresh: 0, loops: 0, helpers, calls: 0 };
    let budget = params.max_blocks.saturating_sub(4 * helpers + 2);
    let mut used = 1;
    // locals are defined up front so every use is definitely assigned
    let mut start = b.label("n");
    b.block("entry", &format!("x := a; y := 0; goto {start};"));
    for seg in segs {
        if used + seg_blocks(seg) > budget {
            break;
        }
        used += seg_blocks(seg);
        let next = b.label("n");
        b.emit(seg, &start, &next);
        start = next;
    }
    b.block(&start, "return x + y;");
    let body = b.blocks.join("\n");
    writeln!(text, "fn main() {{\n{body}\n}}").unwrap();
    text
}

/// `count` programs from `seed`; program `i` is drawn from its own stream
/// so a corpus is a prefix of any larger corpus with the same seed.
pub fn generate_corpus(seed: u64, count: usize, params: &ShapeParams) -> Vec<GeneratedProgram> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let text = generate_program(&mut rng, params);
            let program = parse_program(&text).unwrap_or_else(|e| panic!("generated program does not parse: {e}\n{text}"));
            GeneratedProgram { name: format!("{}-{i:03}", params.shape), text, program }
        })
        .collect()
}

/// Programs whose control flow has a single path through every block, so
/// the only cover is that path, and that path is infeasible. Every block is
/// still reachable by some input.
pub const INFEASIBLE_SUITE: [(&str, &str); 6] = [
    (
        "guard-reset",
        "input a in [0, 1];
fn main() {
  e: x := 1; br a == 0 ? s1 : m;
  s1: x := 0; goto m;
  m: br x == 1 ? t : j;
  t: goto j;
  j: return x;
}
",
    ),
    (
        "guard-shift",
        "input a in [0, 2];
fn main() {
  e: x := a; br a == 0 ? s1 : m;
  s1: x := x + 2; goto m;
  m: br x < 2 ? t : j;
  t: y := 1; goto j;
  j: return x;
}
",
    ),
    (
        "prefix-diamond",
        "input a in [0, 1];
input b in [0, 1];
fn main() {
  e: br b == 0 ? p : q;
  p: goto q;
  q: x := 1; br a == 0 ? s1 : m;
  s1: x := 0; goto m;
  m: br x == 1 ? t : j;
  t: goto j;
  j: return x + b;
}
",
    ),
    (
        "flag",
        "input a in [0, 2];
fn main() {
  e: f := 0; br a == 1 ? s1 : m;
  s1: f := 1; goto m;
  m: br f == 0 ? t : j;
  t: goto j;
  j: return f;
}
",
    ),
    (
        "tail-fork",
        "input b in [0, 1];
input c in [0, 2];
fn main() {
  e: x := 0; br c == 2 ? s1 : m;
  s1: x := c; goto m;
  m: br x == 0 ? t : j;
  t: goto u;
  u: br b == 1 ? v : j;
  v: goto j;
  j: return x;
}
",
    ),
    (
        "two-guards",
        "input a in [0, 3];
fn main() {
  e: x := a; y := 0; br a < 2 ? s1 : m;
  s1: y := 1; goto m;
  m: br 2 < a + y ? t : j;
  t: goto j;
  j: return y;
}
",
    ),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_without_branches_is_straight_line() {
        let params = ShapeParams { shape: Shape::Chain, branches: 0, max_blocks: 30 };
        for g in generate_corpus(3, 5, &params) {
            assert!(g.program.functions.iter().all(|f| f.blocks.iter().all(|b| !b.is_branch())), "{}", g.text);
        }
    }

    #[test]
    fn infeasible_suite_parses() {
        for (name, text) in INFEASIBLE_SUITE {
            parse_program(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let params = ShapeParams::default();
        let a: Vec<String> = generate_corpus(9, 4, &params).into_iter().map(|g| g.text).collect();
        let b: Vec<String> = generate_corpus(9, 4, &params).into_iter().map(|g| g.text).collect();
        assert_eq!(a, b);
    }
}
