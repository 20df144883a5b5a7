//! Printing with minimal parentheses under the parser's precedence table.

use std::fmt::{self, Display, Formatter, Write};

use crate::term::{Ctor, Expr, Op, Stmt, Triple};

const ATOM: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Op(op, _) => match op {
            Op::Implies => 1,
            Op::Or => 2,
            Op::And => 3,
            Op::Lt | Op::Gt | Op::Le | Op::Ge | Op::Eq | Op::Ne => 4,
            Op::Add | Op::Sub => 5,
            Op::Mul | Op::Div | Op::Mod => 6,
            Op::Pow => 7,
            Op::Not => 8,
        },
        _ => ATOM,
    }
}

fn numeral_value(e: &Expr) -> Option<u64> {
    match e {
        Expr::Nat(n) => Some(*n),
        Expr::Ctor(Ctor::Zero, args) if args.is_empty() => Some(0),
        Expr::Ctor(Ctor::Succ, args) if args.len() == 1 => numeral_value(&args[0]).map(|n| n + 1),
        _ => None,
    }
}

fn write_child(f: &mut Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(n) = numeral_value(self) {
            return write!(f, "{n}");
        }
        match self {
            Expr::Var(v) => f.write_str(v),
            Expr::Nat(n) => write!(f, "{n}"),
            Expr::Ctor(c, args) if args.is_empty() => f.write_str(c.name()),
            Expr::Ctor(c, args) => {
                write!(f, "{}(", c.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Op(Op::Not, args) => {
                f.write_str("¬")?;
                write_child(f, &args[0], precedence(&args[0]) < precedence(self))
            }
            Expr::Op(op, args) if args.len() == 2 => {
                let p = precedence(self);
                let (lp, rp) = (precedence(&args[0]), precedence(&args[1]));
                let (mut left_parens, mut right_parens) = if *op == Op::Implies {
                    (lp <= p, rp < p)
                } else {
                    (lp < p, rp <= p)
                };
                // products inside sums are bracketed: (2*v)+1
                if matches!(op, Op::Add | Op::Sub) {
                    left_parens |= lp == 6;
                    right_parens |= rp == 6;
                }
                write_child(f, &args[0], left_parens)?;
                if op.is_connective() {
                    write!(f, " {} ", op.symbol())?;
                } else {
                    f.write_str(op.symbol())?;
                }
                write_child(f, &args[1], right_parens)
            }
            Expr::Op(op, args) => {
                write!(f, "{}(", op.symbol())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Lam(body) => write!(f, "(λ.{body})"),
            Expr::BoundVar(i) => write!(f, "#{i}"),
            Expr::Call(name) => f.write_str(name),
            Expr::App(fun, arg) => write!(f, "({fun} {arg})"),
            Expr::Case(scrut, branches) => {
                write!(f, "(case {scrut} of ")?;
                for (i, b) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{} → {}", b.pattern.name(), b.body)?;
                }
                f.write_str(")")
            }
            Expr::Where(main, defs) => {
                write!(f, "({main} where ")?;
                for (i, (name, d)) in defs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{name} = {d}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_nested(f: &mut Formatter<'_>, s: &Stmt) -> fmt::Result {
    match s {
        Stmt::Seq(..) => write!(f, "BEGIN {s} END"),
        _ => write!(f, "{s}"),
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Skip => f.write_str("SKIP"),
            Stmt::Assign(v, e) => write!(f, "{v}:={e}"),
            Stmt::Seq(a, b) => write!(f, "{a}; {b}"),
            Stmt::If(c, a, b) => {
                write!(f, "IF {c} THEN ")?;
                match **a {
                    // a nested IF in the THEN branch would capture our ELSE otherwise
                    Stmt::If(..) | Stmt::While(_) => write!(f, "BEGIN {a} END")?,
                    _ => write_nested(f, a)?,
                }
                f.write_str(" ELSE ")?;
                write_nested(f, b)
            }
            Stmt::Block(locals, body) => {
                write!(f, "BEGIN VAR {}; {body} END", locals.join(" "))
            }
            Stmt::While(l) => {
                write!(f, "WHILE {} DO ", l.cond)?;
                if let Some(inv) = &l.invariant {
                    write!(f, "{{{inv}}} ")?;
                }
                write_nested(f, &l.body)?;
                if let Some(post) = &l.post {
                    write!(f, " {{{post}}}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for Triple {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}} {} {{{}}}", self.pre, self.program, self.post)
    }
}

/// Multi-line rendering of a statement, one simple statement per line.
pub fn pretty_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    render(s, 0, &mut out);
    out
}

fn render(s: &Stmt, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Seq(..) => {
            let parts = s.flatten_seq();
            for (i, p) in parts.iter().enumerate() {
                render(p, indent, out);
                if i + 1 < parts.len() {
                    out.pop();
                    out.push_str(";\n");
                }
            }
        }
        Stmt::While(l) => {
            let _ = write!(out, "{pad}WHILE {} DO", l.cond);
            if let Some(inv) = &l.invariant {
                let _ = write!(out, " {{{inv}}}");
            }
            out.push('\n');
            let _ = writeln!(out, "{pad}  BEGIN");
            render(&l.body, indent + 2, out);
            let _ = write!(out, "{pad}  END");
            if let Some(post) = &l.post {
                let _ = write!(out, " {{{post}}}");
            }
            out.push('\n');
        }
        Stmt::Block(locals, body) => {
            let _ = writeln!(out, "{pad}BEGIN VAR {};", locals.join(" "));
            render(body, indent + 1, out);
            let _ = writeln!(out, "{pad}END");
        }
        other => {
            let _ = writeln!(out, "{pad}{other}");
        }
    }
}
