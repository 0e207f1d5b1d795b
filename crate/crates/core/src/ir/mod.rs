// SPDX-License-Identifier: Apache-2.0

//! A tiny imperative IR with integer variables, affine expressions and
//! comparison branches. Programs are parsed from text, lowered to an iCFG and
//! executed concretely; feasibility of a path prefix is decided by running
//! every input assignment.

mod interp;
mod parser;
mod printer;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use interp::{
    assignments, feasible, run_concrete, run_concrete_with, Feasibility, PathPrefix, RunError, TraceTable,
    DEFAULT_FEASIBILITY_BUDGET, DEFAULT_MAX_DEPTH, DEFAULT_STEP_BUDGET,
};
pub use parser::parse_program;

pub type FuncId = usize;
pub type BlockId = usize;

/// `constant + Σ coeff·var`, terms sorted by variable name with nonzero
/// coefficients. The parser normalizes every expression into this form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Affine {
    pub constant: i64,
    pub terms: Vec<(i64, String)>,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine { constant: c, terms: Vec::new() }
    }

    pub fn var(name: &str) -> Self {
        Affine { constant: 0, terms: vec![(1, name.to_string())] }
    }

    /// Builds a normalized form from arbitrary (possibly repeated) terms.
    pub fn from_terms(constant: i64, terms: impl IntoIterator<Item = (i64, String)>) -> Self {
        let mut acc: BTreeMap<String, i64> = BTreeMap::new();
        for (c, v) in terms {
            let e = acc.entry(v).or_insert(0);
            *e = e.wrapping_add(c);
        }
        Affine { constant, terms: acc.into_iter().filter(|(_, c)| *c != 0).map(|(v, c)| (c, v)).collect() }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(_, v)| v.as_str())
    }

    pub fn eval(&self, env: &BTreeMap<String, i64>) -> i64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (c, v)| acc.wrapping_add(c.wrapping_mul(env[v])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn apply(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cond {
    pub lhs: Affine,
    pub op: CmpOp,
    pub rhs: Affine,
}

impl Cond {
    pub fn vars(&self) -> BTreeSet<String> {
        self.lhs.vars().chain(self.rhs.vars()).map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign { dest: String, expr: Affine },
    Call { dest: String, callee: FuncId, args: Vec<Affine> },
    Nop,
}

impl Stmt {
    pub fn defined(&self) -> Option<&str> {
        match self {
            Stmt::Assign { dest, .. } | Stmt::Call { dest, .. } => Some(dest),
            Stmt::Nop => None,
        }
    }

    pub fn used(&self) -> Vec<&str> {
        match self {
            Stmt::Assign { expr, .. } => expr.vars().collect(),
            Stmt::Call { args, .. } => args.iter().flat_map(Affine::vars).collect(),
            Stmt::Nop => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Terminator {
    Branch { cond: Cond, then_to: BlockId, else_to: BlockId },
    Goto(BlockId),
    Return(Affine),
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Branch { then_to, else_to, .. } => vec![*then_to, *else_to],
            Terminator::Goto(t) => vec![*t],
            Terminator::Return(_) => Vec::new(),
        }
    }

    pub fn used(&self) -> Vec<&str> {
        match self {
            Terminator::Branch { cond, .. } => cond.lhs.vars().chain(cond.rhs.vars()).collect(),
            Terminator::Goto(_) => Vec::new(),
            Terminator::Return(e) => e.vars().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasicBlock {
    pub label: String,
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
}

impl BasicBlock {
    pub fn is_branch(&self) -> bool {
        matches!(self.term, Terminator::Branch { .. })
    }

    /// The call made by this block, if its last statement is a call.
    pub fn call(&self) -> Option<(FuncId, BlockId)> {
        match (self.stmts.last(), &self.term) {
            (Some(Stmt::Call { callee, .. }), Terminator::Goto(t)) => Some((*callee, *t)),
            _ => None,
        }
    }

    pub fn defs(&self) -> BTreeSet<&str> {
        self.stmts.iter().filter_map(Stmt::defined).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    /// Block 0 is the entry block.
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn entry_block(&self) -> BlockId {
        0
    }

    pub fn block_id(&self, label: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.label == label)
    }

    /// Intraprocedural successors; a call block flows to its continuation.
    pub fn successors(&self, b: BlockId) -> Vec<BlockId> {
        self.blocks[b].term.successors()
    }

    pub fn return_blocks(&self) -> Vec<BlockId> {
        (0..self.blocks.len())
            .filter(|&b| matches!(self.blocks[b].term, Terminator::Return(_)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InputDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

impl InputDecl {
    pub fn domain_size(&self) -> u128 {
        (self.hi as i128 - self.lo as i128 + 1) as u128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MiniProgram {
    pub inputs: Vec<InputDecl>,
    pub functions: Vec<Function>,
    pub entry_function: FuncId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct IrError {
    pub line: usize,
    pub col: usize,
    pub kind: IrErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("undefined variable `{0}`")]
    UndefinedVariable(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate definition of `{0}`")]
    Duplicate(String),
    #[error("empty input domain for `{0}`")]
    EmptyDomain(String),
    #[error("function `{0}` expects {1} arguments, got {2}")]
    Arity(String, usize, usize),
    #[error("a call must be the last statement of a block ending in `goto`")]
    CallPlacement,
    #[error("program has no `main` function")]
    NoMain,
    #[error("`main` takes no parameters and cannot be called")]
    BadMain,
}

impl IrError {
    pub fn new(line: usize, col: usize, kind: IrErrorKind) -> Self {
        IrError { line, col, kind }
    }
}

/// Source positions of statements and terminators, keyed by
/// (function, block, statement index); the terminator uses index `stmts.len()`.
pub type Positions = BTreeMap<(FuncId, BlockId, usize), (usize, usize)>;

impl MiniProgram {
    pub fn function_id(&self, name: &str) -> Option<FuncId> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn block_count(&self) -> usize {
        self.functions.iter().map(|f| f.blocks.len()).sum()
    }

    /// Number of input assignments.
    pub fn input_space(&self) -> u128 {
        self.inputs.iter().map(InputDecl::domain_size).product()
    }

    /// Structural and definite-assignment checks.
    pub fn validate(&self) -> Result<(), IrError> {
        self.validate_with(&Positions::new())
    }

    pub(crate) fn validate_with(&self, pos: &Positions) -> Result<(), IrError> {
        let at = |f: FuncId, b: BlockId, s: usize, kind: IrErrorKind| {
            let (line, col) = pos.get(&(f, b, s)).copied().unwrap_or((0, 0));
            IrError::new(line, col, kind)
        };
        let main = &self.functions[self.entry_function];
        if main.name != "main" {
            return Err(IrError::new(0, 0, IrErrorKind::NoMain));
        }
        if !main.params.is_empty() {
            return Err(IrError::new(0, 0, IrErrorKind::BadMain));
        }
        let mut names = BTreeSet::new();
        for i in &self.inputs {
            if !names.insert(&i.name) {
                return Err(IrError::new(0, 0, IrErrorKind::Duplicate(i.name.clone())));
            }
            if i.lo > i.hi {
                return Err(IrError::new(0, 0, IrErrorKind::EmptyDomain(i.name.clone())));
            }
        }
        for (fid, f) in self.functions.iter().enumerate() {
            for (bid, b) in f.blocks.iter().enumerate() {
                for (sid, s) in b.stmts.iter().enumerate() {
                    if let Stmt::Call { callee, args, .. } = s {
                        if *callee >= self.functions.len() {
                            return Err(at(fid, bid, sid, IrErrorKind::UnknownFunction(callee.to_string())));
                        }
                        if *callee == self.entry_function {
                            return Err(at(fid, bid, sid, IrErrorKind::BadMain));
                        }
                        let want = self.functions[*callee].params.len();
                        if want != args.len() {
                            let name = self.functions[*callee].name.clone();
                            return Err(at(fid, bid, sid, IrErrorKind::Arity(name, want, args.len())));
                        }
                        if sid + 1 != b.stmts.len() || !matches!(b.term, Terminator::Goto(_)) {
                            return Err(at(fid, bid, sid, IrErrorKind::CallPlacement));
                        }
                    }
                }
                for t in b.term.successors() {
                    if t >= f.blocks.len() {
                        return Err(at(fid, bid, b.stmts.len(), IrErrorKind::UnknownLabel(t.to_string())));
                    }
                }
            }
            let initial: BTreeSet<String> = if fid == self.entry_function {
                self.inputs.iter().map(|i| i.name.clone()).collect()
            } else {
                f.params.iter().cloned().collect()
            };
            self.check_definite_assignment(fid, &initial, &at)?;
        }
        Ok(())
    }

    /// Must-defined analysis over reachable blocks: every use needs a
    /// definition on every path from the entry.
    fn check_definite_assignment(
        &self,
        fid: FuncId,
        initial: &BTreeSet<String>,
        at: &dyn Fn(FuncId, BlockId, usize, IrErrorKind) -> IrError,
    ) -> Result<(), IrError> {
        let f = &self.functions[fid];
        let n = f.blocks.len();
        let mut din: Vec<Option<BTreeSet<String>>> = vec![None; n];
        din[0] = Some(initial.clone());
        let mut changed = true;
        while changed {
            changed = false;
            for b in 0..n {
                let Some(mut cur) = din[b].clone() else { continue };
                for s in &f.blocks[b].stmts {
                    if let Some(d) = s.defined() {
                        cur.insert(d.to_string());
                    }
                }
                for t in f.successors(b) {
                    let next = match &din[t] {
                        None => cur.clone(),
                        Some(old) => old.intersection(&cur).cloned().collect(),
                    };
                    if din[t].as_ref() != Some(&next) {
                        din[t] = Some(next);
                        changed = true;
                    }
                }
            }
        }
        for b in 0..n {
            let Some(mut cur) = din[b].clone() else { continue };
            for (sid, s) in f.blocks[b].stmts.iter().enumerate() {
                if let Some(v) = s.used().into_iter().find(|v| !cur.contains(*v)) {
                    return Err(at(fid, b, sid, IrErrorKind::UndefinedVariable(v.to_string())));
                }
                if let Some(d) = s.defined() {
                    cur.insert(d.to_string());
                }
            }
            let sid = f.blocks[b].stmts.len();
            if let Some(v) = f.blocks[b].term.used().into_iter().find(|v| !cur.contains(*v)) {
                return Err(at(fid, b, sid, IrErrorKind::UndefinedVariable(v.to_string())));
            }
        }
        Ok(())
    }
}
