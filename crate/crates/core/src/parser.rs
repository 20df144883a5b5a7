//! Concrete syntax for annotated programs.
//!
//! ```text
//! {n >= 0}
//! x := 0; y := 1;
//! WHILE x < n DO
//!   BEGIN x := x + 1; y := y * k END
//! {y = k^n}
//! ```
//!
//! Keywords are case-insensitive. Operators bind, loosest first:
//! `⇒` (right-assoc), `∨`, `∧`, relations, `+ -`, `* / %`, `^`, `¬`.
//! All binary operators except `⇒` associate to the left. ASCII spellings
//! `=> \/ /\ ! <= >= !=` (and `&& || ~ <>`) are accepted. `--` starts a line comment.

use thiserror::Error;

use crate::term::{Ctor, Expr, Loop, Op, SortError, Stmt, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{column}: expected {}, found {found}", expected.join(" or "))]
    Unexpected {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{column}: {message}")]
    Lexical {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("ill-sorted program: {0}")]
    Sort(#[from] SortError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Kw(Kw),
    Op(Op),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Assign,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kw {
    Skip,
    If,
    Then,
    Else,
    Begin,
    Var,
    End,
    While,
    Do,
    True,
    False,
    Zero,
    Succ,
}

impl Kw {
    fn lookup(word: &str) -> Option<Kw> {
        Some(match word.to_ascii_lowercase().as_str() {
            "skip" => Kw::Skip,
            "if" => Kw::If,
            "then" => Kw::Then,
            "else" => Kw::Else,
            "begin" => Kw::Begin,
            "var" => Kw::Var,
            "end" => Kw::End,
            "while" => Kw::While,
            "do" => Kw::Do,
            "true" => Kw::True,
            "false" => Kw::False,
            "zero" => Kw::Zero,
            "succ" => Kw::Succ,
            _ => return None,
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Num(n) => format!("numeral `{n}`"),
        Tok::Kw(k) => format!("`{}`", format!("{k:?}").to_uppercase()),
        Tok::Op(op) => format!("`{}`", op.symbol()),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Assign => "`:=`".into(),
        Tok::Eof => "end of input".into(),
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let lex_err = |line, column, message: String| ParseError::Lexical { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let peek = |k: usize| chars.get(i + k).copied();
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
        if c == '-' && peek(1) == Some('-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tok, len) = if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[i..j].iter().collect();
            let n = digits
                .parse::<u64>()
                .map_err(|_| lex_err(start_line, start_col, format!("numeral {digits} out of range")))?;
            (Tok::Num(n), j - i)
        } else if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let tok = match Kw::lookup(&word) {
                Some(kw) => Tok::Kw(kw),
                None if word.starts_with(|ch: char| ch.is_lowercase() || ch == '_') => Tok::Ident(word),
                None => {
                    return Err(lex_err(
                        start_line,
                        start_col,
                        format!("identifier `{word}` must start with a lowercase letter"),
                    ))
                }
            };
            (tok, j - i)
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let three: String = chars[i..chars.len().min(i + 3)].iter().collect();
            if three == "==>" {
                (Tok::Op(Op::Implies), 3)
            } else {
                match two.as_str() {
                    ":=" => (Tok::Assign, 2),
                    "=>" => (Tok::Op(Op::Implies), 2),
                    "<=" => (Tok::Op(Op::Le), 2),
                    ">=" => (Tok::Op(Op::Ge), 2),
                    "!=" | "<>" => (Tok::Op(Op::Ne), 2),
                    "/\\" | "&&" => (Tok::Op(Op::And), 2),
                    "\\/" | "||" => (Tok::Op(Op::Or), 2),
                    _ => {
                        let tok = match c {
                            '{' => Tok::LBrace,
                            '}' => Tok::RBrace,
                            '(' => Tok::LParen,
                            ')' => Tok::RParen,
                            ';' => Tok::Semi,
                            '+' => Tok::Op(Op::Add),
                            '-' => Tok::Op(Op::Sub),
                            '*' => Tok::Op(Op::Mul),
                            '/' => Tok::Op(Op::Div),
                            '%' => Tok::Op(Op::Mod),
                            '^' => Tok::Op(Op::Pow),
                            '∧' => Tok::Op(Op::And),
                            '∨' => Tok::Op(Op::Or),
                            '¬' | '!' | '~' => Tok::Op(Op::Not),
                            '⇒' | '→' => Tok::Op(Op::Implies),
                            '<' => Tok::Op(Op::Lt),
                            '>' => Tok::Op(Op::Gt),
                            '≤' => Tok::Op(Op::Le),
                            '≥' => Tok::Op(Op::Ge),
                            '=' => Tok::Op(Op::Eq),
                            '≠' => Tok::Op(Op::Ne),
                            other => {
                                return Err(lex_err(
                                    start_line,
                                    start_col,
                                    format!("unexpected character `{other}`"),
                                ))
                            }
                        };
                        (tok, 1)
                    }
                }
            }
        };
        out.push(Spanned { tok, line: start_line, column: start_col });
        i += len;
        col += len;
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    in_triple: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser { toks: lex(text)?, pos: 0, in_triple: false })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(ParseError::Unexpected {
            line: s.line,
            column: s.column,
            expected: expected.iter().map(|e| e.to_string()).collect(),
            found: describe(&s.tok),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(&[what])
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => self.error(&["end of input"]),
        }
    }

    fn assertion(&mut self) -> PResult<Expr> {
        self.expect(Tok::LBrace, "`{`")?;
        let e = self.expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(e)
    }

    fn program(&mut self) -> PResult<Triple> {
        self.in_triple = true;
        let pre = self.assertion()?;
        let program = self.seq()?;
        let post = self.assertion()?;
        self.expect_eof()?;
        Ok(Triple { pre, program, post })
    }

    fn seq(&mut self) -> PResult<Stmt> {
        let mut parts = vec![self.simple()?];
        while *self.peek() == Tok::Semi {
            self.bump();
            if matches!(self.peek(), Tok::Kw(Kw::End) | Tok::Eof | Tok::LBrace) {
                break;
            }
            parts.push(self.simple()?);
        }
        Ok(Stmt::seq(parts))
    }

    fn simple(&mut self) -> PResult<Stmt> {
        match self.peek().clone() {
            Tok::Kw(Kw::Skip) => {
                self.bump();
                Ok(Stmt::Skip)
            }
            Tok::Ident(name) => {
                self.bump();
                self.expect(Tok::Assign, "`:=`")?;
                Ok(Stmt::Assign(name, self.expr()?))
            }
            Tok::Kw(Kw::If) => {
                self.bump();
                let cond = self.expr()?;
                self.expect(Tok::Kw(Kw::Then), "`THEN`")?;
                let then = self.simple()?;
                let otherwise = if *self.peek() == Tok::Kw(Kw::Else) {
                    self.bump();
                    self.simple()?
                } else {
                    Stmt::Skip
                };
                Ok(Stmt::If(cond, Box::new(then), Box::new(otherwise)))
            }
            Tok::Kw(Kw::Begin) => {
                self.bump();
                let mut locals = Vec::new();
                let has_var = *self.peek() == Tok::Kw(Kw::Var);
                if has_var {
                    self.bump();
                    while let Tok::Ident(v) = self.peek().clone() {
                        if *self.peek_at(1) == Tok::Assign {
                            break;
                        }
                        self.bump();
                        locals.push(v);
                    }
                    if locals.is_empty() {
                        return self.error(&["identifier"]);
                    }
                    if *self.peek() == Tok::Semi {
                        self.bump();
                    }
                }
                let body = self.seq()?;
                self.expect(Tok::Kw(Kw::End), "`END`")?;
                Ok(if has_var {
                    Stmt::Block(locals, Box::new(body))
                } else {
                    body
                })
            }
            Tok::Kw(Kw::While) => {
                self.bump();
                let cond = self.expr()?;
                self.expect(Tok::Kw(Kw::Do), "`DO`")?;
                let invariant = if *self.peek() == Tok::LBrace {
                    Some(self.assertion()?)
                } else {
                    None
                };
                let body = self.simple()?;
                let mut post = None;
                if *self.peek() == Tok::LBrace {
                    let save = self.pos;
                    let assertion = self.assertion()?;
                    if self.in_triple && *self.peek() == Tok::Eof {
                        // the triple's postcondition, not a loop annotation
                        self.pos = save;
                    } else {
                        post = Some(assertion);
                    }
                }
                Ok(Stmt::While(Loop {
                    cond,
                    invariant,
                    post,
                    body: Box::new(body),
                }))
            }
            _ => self.error(&["statement"]),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if *self.peek() == Tok::Op(Op::Implies) {
            self.bump();
            let rhs = self.expr()?;
            return Ok(Expr::bin(Op::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn left_assoc(
        &mut self,
        ops: &[Op],
        next: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut lhs = next(self)?;
        while let Tok::Op(op) = *self.peek() {
            if !ops.contains(&op) {
                break;
            }
            self.bump();
            let rhs = next(self)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::Or], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::And], Self::rel_expr)
    }

    fn rel_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::Lt, Op::Gt, Op::Le, Op::Ge, Op::Eq, Op::Ne], Self::add_expr)
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::Add, Op::Sub], Self::mul_expr)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::Mul, Op::Div, Op::Mod], Self::pow_expr)
    }

    fn pow_expr(&mut self) -> PResult<Expr> {
        self.left_assoc(&[Op::Pow], Self::unary)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Op(Op::Not) {
            self.bump();
            return Ok(Expr::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Nat(n))
            }
            Tok::Ident(v) => {
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::Kw(Kw::True) => {
                self.bump();
                Ok(Expr::tt())
            }
            Tok::Kw(Kw::False) => {
                self.bump();
                Ok(Expr::ff())
            }
            Tok::Kw(Kw::Zero) => {
                self.bump();
                Ok(Expr::Nat(0))
            }
            Tok::Kw(Kw::Succ) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::ctor(Ctor::Succ, vec![arg]))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => self.error(&["expression"]),
        }
    }
}

/// Parses a whole annotated program `{pre} S {post}` and checks its sorts.
pub fn parse_program(text: &str) -> Result<Triple, ParseError> {
    let mut p = Parser::new(text)?;
    let triple = p.program()?;
    triple.check_sorts()?;
    Ok(triple)
}

/// Parses a single expression (no sort check).
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a statement sequence (no sort check).
pub fn parse_stmt(text: &str) -> Result<Stmt, ParseError> {
    let mut p = Parser::new(text)?;
    let s = p.seq()?;
    p.expect_eof()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE_1: &str = "
        {n >= 0}
        x := 0;
        y := 1;
        WHILE x < n DO
          BEGIN
            x := x + 1;
            y := y * k
          END
        {y = k^n}";

    #[test]
    fn parses_exponent_program() {
        let t = parse_program(FIGURE_1).unwrap();
        assert_eq!(t.pre, parse_expr("n≥0").unwrap());
        assert_eq!(t.post, parse_expr("y=k^n").unwrap());
        let expected = Stmt::seq(vec![
            Stmt::assign("x", Expr::nat(0)),
            Stmt::assign("y", Expr::nat(1)),
            Stmt::while_loop(
                parse_expr("x<n").unwrap(),
                None,
                Stmt::seq(vec![
                    Stmt::assign("x", parse_expr("x+1").unwrap()),
                    Stmt::assign("y", parse_expr("y*k").unwrap()),
                ]),
            ),
        ]);
        assert_eq!(t.program, expected);
    }

    #[test]
    fn skip_triple() {
        let t = parse_program("{True} SKIP {True}").unwrap();
        assert_eq!(t, Triple { pre: Expr::tt(), program: Stmt::Skip, post: Expr::tt() });
    }

    #[test]
    fn incomplete_loop_reports_end_of_input() {
        let err = parse_program("{True} WHILE x<n DO").unwrap_err();
        match err {
            ParseError::Unexpected { found, expected, .. } => {
                assert_eq!(found, "end of input");
                assert!(expected.contains(&"`{`".to_string()) || !expected.is_empty());
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_stmt("WHILE x<n DO").unwrap_err();
        assert!(matches!(err, ParseError::Unexpected { ref found, .. } if found == "end of input"));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("a + b * c ^ d").unwrap();
        assert_eq!(e.to_string(), "a+(b*c^d)");
        assert_eq!(parse_expr("a - b - c").unwrap(), parse_expr("(a-b)-c").unwrap());
        assert_eq!(
            parse_expr("p => q => r").unwrap().to_string(),
            parse_expr("p ⇒ (q ⇒ r)").unwrap().to_string()
        );
        assert_eq!(
            parse_expr("x<1 /\\ y>2 \\/ z=3").unwrap(),
            parse_expr("(x<1 ∧ y>2) ∨ z=3").unwrap()
        );
        assert_eq!(parse_expr("!(x<n)").unwrap(), Expr::not(parse_expr("x<n").unwrap()));
    }

    #[test]
    fn keywords_are_case_insensitive_and_comments_skipped() {
        let t = parse_program("{true} -- nothing\n skip {TRUE}").unwrap();
        assert_eq!(t.program, Stmt::Skip);
    }

    #[test]
    fn if_without_else_is_sugar_for_skip() {
        let s = parse_stmt("IF x%2=1 THEN y:=y*z").unwrap();
        assert_eq!(s, parse_stmt("IF x%2=1 THEN y:=y*z ELSE SKIP").unwrap());
    }

    #[test]
    fn loop_annotations() {
        let t = parse_program(
            "{True} WHILE z<k DO {z<=k} BEGIN z:=z+1 END {z=k}; y:=z {y=k}",
        )
        .unwrap();
        let loops = t.program.loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].invariant, Some(parse_expr("z<=k").unwrap()));
        assert_eq!(loops[0].post, Some(parse_expr("z=k").unwrap()));
        let t = parse_program("{True} WHILE z<k DO z:=z+1 {z=k}").unwrap();
        assert_eq!(t.program.loops()[0].post, None);
        assert_eq!(t.post, parse_expr("z=k").unwrap());
    }

    #[test]
    fn blocks_with_locals() {
        let s = parse_stmt("BEGIN VAR t u t:=x; x:=y; y:=t END").unwrap();
        match s {
            Stmt::Block(locals, _) => assert_eq!(locals, vec!["t".to_string(), "u".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(parse_stmt("BEGIN VAR t; t:=1 END").is_ok());
    }

    #[test]
    fn ill_sorted_programs_are_rejected() {
        assert!(matches!(
            parse_program("{True} x := y < 1 {True}"),
            Err(ParseError::Sort(_))
        ));
        assert!(matches!(parse_program("{x+1} SKIP {True}"), Err(ParseError::Sort(_))));
    }

    #[test]
    fn uppercase_identifiers_are_rejected() {
        assert!(matches!(parse_expr("X+1"), Err(ParseError::Lexical { .. })));
    }

    #[test]
    fn error_positions() {
        match parse_expr("x + \n  )").unwrap_err() {
            ParseError::Unexpected { line, column, .. } => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
    }
}
