// SPDX-License-Identifier: Apache-2.0

//! Concrete execution and the exhaustive feasibility oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlockId, FuncId, MiniProgram, Stmt, Terminator};

pub const DEFAULT_STEP_BUDGET: usize = 10_000;
pub const DEFAULT_MAX_DEPTH: usize = 8;
pub const DEFAULT_FEASIBILITY_BUDGET: u128 = 1_000_000;

/// Blocks entered so far plus the direction taken at each branch that has
/// already been left (`true` = then-edge).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathPrefix {
    pub blocks: Vec<(FuncId, BlockId)>,
    pub branch_decisions: Vec<bool>,
}

impl PathPrefix {
    pub fn is_prefix_of(&self, other: &PathPrefix) -> bool {
        other.blocks.starts_with(&self.blocks) && other.branch_decisions.starts_with(&self.branch_decisions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("step budget of {budget} blocks exhausted")]
    StepBudget { budget: usize, trace: PathPrefix },
    #[error("call depth exceeded {limit}")]
    RecursionLimit { limit: usize, trace: PathPrefix },
    #[error("expected {expected} input values, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("input `{name}` = {value} outside [{lo}, {hi}]")]
    InputDomain { name: String, value: i64, lo: i64, hi: i64 },
    #[error("input space of {size} assignments exceeds the budget of {budget}; feasibility unknown")]
    Unknown { size: u128, budget: u128 },
}

impl RunError {
    /// The partial trace of an aborted run.
    pub fn trace(&self) -> Option<&PathPrefix> {
        match self {
            RunError::StepBudget { trace, .. } | RunError::RecursionLimit { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

struct Frame {
    func: FuncId,
    env: BTreeMap<String, i64>,
    // (destination variable, continuation block) in the caller
    ret_to: Option<(String, BlockId)>,
}

/// Runs `p` on `inputs` (in declaration order) with the default budgets.
pub fn run_concrete(p: &MiniProgram, inputs: &[i64]) -> Result<(PathPrefix, usize), RunError> {
    run_concrete_with(p, inputs, DEFAULT_STEP_BUDGET, DEFAULT_MAX_DEPTH)
}

pub fn run_concrete_with(
    p: &MiniProgram,
    inputs: &[i64],
    step_budget: usize,
    max_depth: usize,
) -> Result<(PathPrefix, usize), RunError> {
    if inputs.len() != p.inputs.len() {
        return Err(RunError::InputCount { expected: p.inputs.len(), got: inputs.len() });
    }
    let mut env = BTreeMap::new();
    for (decl, &value) in p.inputs.iter().zip(inputs) {
        if value < decl.lo || value > decl.hi {
            return Err(RunError::InputDomain { name: decl.name.clone(), value, lo: decl.lo, hi: decl.hi });
        }
        env.insert(decl.name.clone(), value);
    }
    let mut trace = PathPrefix::default();
    let mut stack = vec![Frame { func: p.entry_function, env, ret_to: None }];
    let mut block = p.functions[p.entry_function].entry_block();
    loop {
        if trace.blocks.len() >= step_budget {
            return Err(RunError::StepBudget { budget: step_budget, trace });
        }
        let frame = stack.last_mut().unwrap();
        let func = &p.functions[frame.func];
        trace.blocks.push((frame.func, block));
        let bb = &func.blocks[block];
        let mut call = None;
        for s in &bb.stmts {
            match s {
                Stmt::Assign { dest, expr } => {
                    let v = expr.eval(&frame.env);
                    frame.env.insert(dest.clone(), v);
                }
                Stmt::Call { dest, callee, args } => {
                    let vals: Vec<i64> = args.iter().map(|a| a.eval(&frame.env)).collect();
                    call = Some((dest.clone(), *callee, vals));
                }
                Stmt::Nop => {}
            }
        }
        match (&bb.term, call) {
            (Terminator::Goto(cont), Some((dest, callee, vals))) => {
                if stack.len() > max_depth {
                    return Err(RunError::RecursionLimit { limit: max_depth, trace });
                }
                let callee_fn = &p.functions[callee];
                let env = callee_fn.params.iter().cloned().zip(vals).collect();
                stack.push(Frame { func: callee, env, ret_to: Some((dest, *cont)) });
                block = callee_fn.entry_block();
            }
            (Terminator::Goto(t), None) => block = *t,
            (Terminator::Branch { cond, then_to, else_to }, _) => {
                let taken = cond.op.apply(cond.lhs.eval(&frame.env), cond.rhs.eval(&frame.env));
                trace.branch_decisions.push(taken);
                block = if taken { *then_to } else { *else_to };
            }
            (Terminator::Return(e), _) => {
                let v = e.eval(&frame.env);
                let done = stack.pop().unwrap();
                match done.ret_to {
                    None => {
                        let steps = trace.blocks.len();
                        return Ok((trace, steps));
                    }
                    Some((dest, cont)) => {
                        stack.last_mut().unwrap().env.insert(dest, v);
                        block = cont;
                    }
                }
            }
        }
    }
}

/// Iterates all input assignments in lexicographic order.
pub fn assignments(p: &MiniProgram) -> impl Iterator<Item = Vec<i64>> + '_ {
    let mut cur: Option<Vec<i64>> = Some(p.inputs.iter().map(|i| i.lo).collect());
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut k = next.len();
        loop {
            if k == 0 {
                cur = None;
                break;
            }
            k -= 1;
            if next[k] < p.inputs[k].hi {
                next[k] += 1;
                for j in k + 1..next.len() {
                    next[j] = p.inputs[j].lo;
                }
                cur = Some(next);
                break;
            }
        }
        Some(out)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(Vec<i64>),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// True iff some assignment's trace starts with `prefix`. Errors out rather
/// than guessing when the input space exceeds `budget` or an aborted run
/// leaves the answer open.
pub fn feasible(p: &MiniProgram, prefix: &PathPrefix, budget: u128) -> Result<Feasibility, RunError> {
    let size = p.input_space();
    if size > budget {
        return Err(RunError::Unknown { size, budget });
    }
    let mut undecided = false;
    for a in assignments(p) {
        match run_concrete(p, &a) {
            Ok((trace, _)) if prefix.is_prefix_of(&trace) => return Ok(Feasibility::Feasible(a)),
            Ok(_) => {}
            Err(e) => {
                let t = e.trace().expect("aborted run carries its trace");
                if prefix.is_prefix_of(t) {
                    return Ok(Feasibility::Feasible(a));
                }
                if t.is_prefix_of(prefix) {
                    undecided = true;
                }
            }
        }
    }
    if undecided {
        Err(RunError::Unknown { size, budget })
    } else {
        Ok(Feasibility::Infeasible)
    }
}

/// Concrete traces of every input assignment, computed once per program.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub assignments: Vec<Vec<i64>>,
    pub traces: Vec<PathPrefix>,
    /// `false` where the run was cut short by a budget.
    pub complete: Vec<bool>,
}

impl TraceTable {
    pub fn build(p: &MiniProgram, budget: u128) -> Result<Self, RunError> {
        let size = p.input_space();
        if size > budget {
            return Err(RunError::Unknown { size, budget });
        }
        let mut t = TraceTable { assignments: Vec::new(), traces: Vec::new(), complete: Vec::new() };
        for a in assignments(p) {
            let (trace, ok) = match run_concrete(p, &a) {
                Ok((trace, _)) => (trace, true),
                Err(e) => (e.trace().cloned().unwrap_or_default(), false),
            };
            t.assignments.push(a);
            t.traces.push(trace);
            t.complete.push(ok);
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}
