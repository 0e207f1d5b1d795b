// SPDX-License-Identifier: Apache-2.0

//! Canonical text form. `parse_program(&p.to_string())` reproduces `p`.

use std::fmt;

use super::{Affine, Cond, MiniProgram, Stmt, Terminator};

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, v)) in self.terms.iter().enumerate() {
            let mag = c.unsigned_abs();
            match (i, *c < 0) {
                (0, false) => {}
                (0, true) => write!(f, "-")?,
                (_, false) => write!(f, " + ")?,
                (_, true) => write!(f, " - ")?,
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
        }
        match (self.terms.is_empty(), self.constant) {
            (true, c) => write!(f, "{c}"),
            (false, 0) => Ok(()),
            (false, c) if c > 0 => write!(f, " + {c}"),
            (false, c) => write!(f, " - {}", c.unsigned_abs()),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

impl fmt::Display for MiniProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.inputs {
            writeln!(f, "input {} in [{}, {}];", i.name, i.lo, i.hi)?;
        }
        for func in &self.functions {
            writeln!(f)?;
            writeln!(f, "fn {}({}) {{", func.name, func.params.join(", "))?;
            for b in &func.blocks {
                writeln!(f, "  {}:", b.label)?;
                for s in &b.stmts {
                    match s {
                        Stmt::Assign { dest, expr } => writeln!(f, "    {dest} := {expr};")?,
                        Stmt::Call { dest, callee, args } => {
                            let args: Vec<String> = args.iter().map(Affine::to_string).collect();
                            writeln!(f, "    {dest} := call {}({});", self.functions[*callee].name, args.join(", "))?
                        }
                        Stmt::Nop => writeln!(f, "    nop;")?,
                    }
                }
                match &b.term {
                    Terminator::Branch { cond, then_to, else_to } => writeln!(
                        f,
                        "    br {cond} ? {} : {};",
                        func.blocks[*then_to].label, func.blocks[*else_to].label
                    )?,
                    Terminator::Goto(t) => writeln!(f, "    goto {};", func.blocks[*t].label)?,
                    Terminator::Return(e) => writeln!(f, "    return {e};")?,
                }
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::ir::parse_program;

    #[test]
    fn roundtrip_small() {
        let text = "input a in [-2, 3];
            fn g(p, q) { e: r := 3*p - q + 1; return -r; }
            fn main() { b0: x := call g(a, 2 - a); goto b1; b1: br x != -4 ? b2 : b1b; b2: nop; return 0; b1b: return x; }";
        let p = parse_program(text).unwrap();
        let printed = p.to_string();
        assert_eq!(parse_program(&printed).unwrap(), p);
        assert!(printed.contains("r := 3*p - q + 1;"));
    }
}
