// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::{
    Affine, BasicBlock, CmpOp, Cond, FuncId, Function, InputDecl, IrError, IrErrorKind, MiniProgram, Positions,
    Stmt, Terminator,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 18] = [":=", "<=", "==", "!=", "<", ":", ";", ",", "(", ")", "{", "}", "[", "]", "?", "+", "-", "*"];
const KEYWORDS: [&str; 8] = ["input", "in", "fn", "call", "nop", "br", "goto", "return"];

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, IrError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_digit() {
            let s: String = chars[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
            let v: i64 = s
                .parse()
                .map_err(|_| IrError::new(line, col, IrErrorKind::Syntax(format!("integer `{s}` out of range"))))?;
            i += s.len();
            col += s.len();
            out.push((Tok::Int(v), line, start_col));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s: String = chars[i..].iter().take_while(|c| c.is_ascii_alphanumeric() || **c == '_').collect();
            i += s.len();
            col += s.len();
            out.push((Tok::Ident(s), line, start_col));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push((Tok::Sym(s), line, start_col));
            }
            None => return Err(IrError::new(line, col, IrErrorKind::Syntax(format!("unexpected character `{c}`")))),
        }
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

struct PendingCall {
    at: (FuncId, usize, usize),
    name: String,
    line: usize,
    col: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn here(&self) -> (usize, usize) {
        (self.toks[self.pos].1, self.toks[self.pos].2)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, IrError> {
        let (l, c) = self.here();
        Err(IrError::new(l, c, IrErrorKind::Syntax(msg.into())))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), IrError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), IrError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{k}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn int(&mut self) -> Result<i64, IrError> {
        let neg = self.is_sym("-");
        if neg {
            self.bump();
        }
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { v.wrapping_neg() } else { v })
            }
            t => self.err(format!("expected integer, found {}", describe(&t))),
        }
    }

    fn expr(&mut self) -> Result<Affine, IrError> {
        let mut acc = self.term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                acc = add(&acc, &self.term()?, 1);
            } else if self.is_sym("-") {
                self.bump();
                acc = add(&acc, &self.term()?, -1);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Affine, IrError> {
        match self.peek().clone() {
            Tok::Sym("-") => {
                self.bump();
                let t = self.term()?;
                Ok(add(&Affine::default(), &t, -1))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Int(v) => {
                self.bump();
                if self.is_sym("*") {
                    self.bump();
                    let name = self.ident()?;
                    Ok(Affine::from_terms(0, [(v, name)]))
                } else {
                    Ok(Affine::constant(v))
                }
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(Affine::var(&name))
            }
            t => self.err(format!("expected expression, found {}", describe(&t))),
        }
    }

    fn cmp(&mut self) -> Result<CmpOp, IrError> {
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            t => return self.err(format!("expected comparison, found {}", describe(t))),
        };
        self.bump();
        Ok(op)
    }
}

fn add(a: &Affine, b: &Affine, sign: i64) -> Affine {
    Affine::from_terms(
        a.constant.wrapping_add(b.constant.wrapping_mul(sign)),
        a.terms.iter().cloned().chain(b.terms.iter().map(|(c, v)| (c.wrapping_mul(sign), v.clone()))),
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses and validates a program. Diagnostics carry 1-based line/column.
pub fn parse_program(text: &str) -> Result<MiniProgram, IrError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut inputs = Vec::new();
    let mut functions: Vec<Function> = Vec::new();
    let mut positions = Positions::new();
    let mut pending: Vec<PendingCall> = Vec::new();
    let mut fn_pos: Vec<(usize, usize)> = Vec::new();

    while *p.peek() != Tok::Eof {
        if p.is_kw("input") {
            let (line, col) = p.here();
            p.bump();
            let name = p.ident()?;
            p.expect_kw("in")?;
            p.expect_sym("[")?;
            let lo = p.int()?;
            p.expect_sym(",")?;
            let hi = p.int()?;
            p.expect_sym("]")?;
            p.expect_sym(";")?;
            if lo > hi {
                return Err(IrError::new(line, col, IrErrorKind::EmptyDomain(name)));
            }
            if inputs.iter().any(|i: &InputDecl| i.name == name) {
                return Err(IrError::new(line, col, IrErrorKind::Duplicate(name)));
            }
            inputs.push(InputDecl { name, lo, hi });
        } else if p.is_kw("fn") {
            fn_pos.push(p.here());
            p.bump();
            let fid = functions.len();
            let (nl, nc) = p.here();
            let name = p.ident()?;
            if functions.iter().any(|f| f.name == name) {
                return Err(IrError::new(nl, nc, IrErrorKind::Duplicate(name)));
            }
            p.expect_sym("(")?;
            let mut params = Vec::new();
            while !p.is_sym(")") {
                if !params.is_empty() {
                    p.expect_sym(",")?;
                }
                let (l, c) = p.here();
                let param = p.ident()?;
                if params.contains(&param) {
                    return Err(IrError::new(l, c, IrErrorKind::Duplicate(param)));
                }
                params.push(param);
            }
            p.expect_sym(")")?;
            p.expect_sym("{")?;
            let blocks = parse_blocks(&mut p, fid, &mut positions, &mut pending)?;
            p.expect_sym("}")?;
            functions.push(Function { name, params, blocks });
        } else {
            return p.err(format!("expected `input` or `fn`, found {}", describe(p.peek())));
        }
    }

    let by_name: BTreeMap<String, FuncId> = functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
    let resolved: Vec<_> = pending
        .iter()
        .map(|c| {
            by_name
                .get(&c.name)
                .copied()
                .ok_or_else(|| IrError::new(c.line, c.col, IrErrorKind::UnknownFunction(c.name.clone())))
        })
        .collect::<Result<_, _>>()?;
    for (c, callee_id) in pending.iter().zip(resolved) {
        if let Stmt::Call { callee, .. } = &mut functions[c.at.0].blocks[c.at.1].stmts[c.at.2] {
            *callee = callee_id;
        }
    }
    let entry_function = *by_name.get("main").ok_or_else(|| IrError::new(1, 1, IrErrorKind::NoMain))?;
    if !functions[entry_function].params.is_empty() {
        let (l, c) = fn_pos[entry_function];
        return Err(IrError::new(l, c, IrErrorKind::BadMain));
    }
    let program = MiniProgram { inputs, functions, entry_function };
    program.validate_with(&positions)?;
    Ok(program)
}

fn parse_blocks(
    p: &mut Parser,
    fid: FuncId,
    positions: &mut Positions,
    pending: &mut Vec<PendingCall>,
) -> Result<Vec<BasicBlock>, IrError> {
    // labels are resolved once the whole body is read
    let mut raw: Vec<(String, Vec<Stmt>, RawTerm, (usize, usize))> = Vec::new();
    while !p.is_sym("}") {
        let (ll, lc) = p.here();
        let label = p.ident()?;
        if raw.iter().any(|b| b.0 == label) {
            return Err(IrError::new(ll, lc, IrErrorKind::Duplicate(label)));
        }
        p.expect_sym(":")?;
        let bid = raw.len();
        let mut stmts = Vec::new();
        let term = loop {
            positions.insert((fid, bid, stmts.len()), p.here());
            if p.is_kw("nop") {
                p.bump();
                p.expect_sym(";")?;
                stmts.push(Stmt::Nop);
            } else if p.is_kw("br") {
                p.bump();
                let lhs = p.expr()?;
                let op = p.cmp()?;
                let rhs = p.expr()?;
                p.expect_sym("?")?;
                let t = label_ref(p)?;
                p.expect_sym(":")?;
                let e = label_ref(p)?;
                p.expect_sym(";")?;
                break RawTerm::Branch(Cond { lhs, op, rhs }, t, e);
            } else if p.is_kw("goto") {
                p.bump();
                let t = label_ref(p)?;
                p.expect_sym(";")?;
                break RawTerm::Goto(t);
            } else if p.is_kw("return") {
                p.bump();
                let e = p.expr()?;
                p.expect_sym(";")?;
                break RawTerm::Return(e);
            } else if matches!(p.peek(), Tok::Ident(_)) && matches!(p.peek_at(1), Tok::Sym(":=")) {
                let dest = p.ident()?;
                p.expect_sym(":=")?;
                if p.is_kw("call") {
                    p.bump();
                    let (cl, cc) = p.here();
                    let name = p.ident()?;
                    p.expect_sym("(")?;
                    let mut args = Vec::new();
                    while !p.is_sym(")") {
                        if !args.is_empty() {
                            p.expect_sym(",")?;
                        }
                        args.push(p.expr()?);
                    }
                    p.expect_sym(")")?;
                    p.expect_sym(";")?;
                    pending.push(PendingCall { at: (fid, bid, stmts.len()), name, line: cl, col: cc });
                    stmts.push(Stmt::Call { dest, callee: usize::MAX, args });
                } else {
                    let expr = p.expr()?;
                    p.expect_sym(";")?;
                    stmts.push(Stmt::Assign { dest, expr });
                }
            } else {
                return p.err(format!("expected statement or terminator, found {}", describe(p.peek())));
            }
        };
        raw.push((label, stmts, term, (ll, lc)));
    }
    if raw.is_empty() {
        return Ok(vec![BasicBlock {
            label: "bb0".into(),
            stmts: Vec::new(),
            term: Terminator::Return(Affine::constant(0)),
        }]);
    }
    let ids: BTreeMap<String, usize> = raw.iter().enumerate().map(|(i, b)| (b.0.clone(), i)).collect();
    let resolve = |(name, l, c): &(String, usize, usize)| {
        ids.get(name).copied().ok_or_else(|| IrError::new(*l, *c, IrErrorKind::UnknownLabel(name.clone())))
    };
    raw.into_iter()
        .map(|(label, stmts, term, _)| {
            let term = match term {
                RawTerm::Branch(cond, t, e) => Terminator::Branch { cond, then_to: resolve(&t)?, else_to: resolve(&e)? },
                RawTerm::Goto(t) => Terminator::Goto(resolve(&t)?),
                RawTerm::Return(e) => Terminator::Return(e),
            };
            Ok(BasicBlock { label, stmts, term })
        })
        .collect()
}

enum RawTerm {
    Branch(Cond, (String, usize, usize), (String, usize, usize)),
    Goto((String, usize, usize)),
    Return(Affine),
}

fn label_ref(p: &mut Parser) -> Result<(String, usize, usize), IrError> {
    let (l, c) = p.here();
    Ok((p.ident()?, l, c))
}
