//! Homeomorphic embedding, coupling, generalisation and most specific
//! generalisation.

use std::collections::BTreeSet;

use crate::term::{Expr, Functor, Subst};

/// Supply of generalisation variable names `g1, g2, ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreshSupply {
    pub counter: usize,
    pub prefix: String,
    avoid: BTreeSet<String>,
    issued: BTreeSet<String>,
}

impl Default for FreshSupply {
    fn default() -> Self {
        FreshSupply::new(BTreeSet::new())
    }
}

impl FreshSupply {
    /// A supply that never produces a name in `avoid`.
    pub fn new(avoid: BTreeSet<String>) -> Self {
        FreshSupply { counter: 0, prefix: "g".into(), avoid, issued: BTreeSet::new() }
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.prefix = prefix.into();
        self
    }

    pub fn next_name(&mut self) -> String {
        loop {
            self.counter += 1;
            let name = format!("{}{}", self.prefix, self.counter);
            if !self.avoid.contains(&name) {
                self.issued.insert(name.clone());
                return name;
            }
        }
    }

    /// Every name handed out so far.
    pub fn issued(&self) -> &BTreeSet<String> {
        &self.issued
    }

    pub fn is_generalisation_var(&self, name: &str) -> bool {
        self.issued.contains(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenResult {
    pub generalised: Expr,
    pub theta_left: Subst,
    pub theta_right: Subst,
}

fn same_functor(a: &Functor, b: &Functor) -> bool {
    match (a, b) {
        (Functor::Var(_), Functor::Var(_)) => true,
        _ => a == b,
    }
}

/// `e1 ⊴ e2`.
pub fn embeds(e1: &Expr, e2: &Expr) -> bool {
    emb(&e1.canonical(), &e2.canonical())
}

/// `e1 ≼ e2`: `e1 ⊴ e2` with the last rule at the root being coupling.
pub fn coupled(e1: &Expr, e2: &Expr) -> bool {
    let (a, b) = (e1.canonical(), e2.canonical());
    couple(&a, &b)
}

fn emb(e1: &Expr, e2: &Expr) -> bool {
    match (e1, e2) {
        (Expr::Var(_), Expr::Var(_)) => true,
        (Expr::BoundVar(i), Expr::BoundVar(j)) if i == j => true,
        // a numeral contains no variables, so only a smaller numeral fits
        (_, Expr::Nat(b)) => matches!(e1, Expr::Nat(a) if a <= b),
        _ => couple(e1, e2) || dive(e1, e2),
    }
}

fn dive(e1: &Expr, e2: &Expr) -> bool {
    let (_, kids) = e2.functor();
    kids.iter().any(|k| emb(e1, k))
}

fn couple(e1: &Expr, e2: &Expr) -> bool {
    if let (Expr::Nat(a), Expr::Nat(b)) = (e1, e2) {
        return a <= b && (*a == 0) == (*b == 0);
    }
    let (f1, k1) = e1.functor();
    let (f2, k2) = e2.functor();
    if !same_functor(&f1, &f2) || k1.len() != k2.len() {
        return false;
    }
    k1.iter().zip(&k2).all(|(a, b)| emb(a, b))
}

/// `e1 ⊓ e2`.
pub fn generalise(e1: &Expr, e2: &Expr, fresh: &mut FreshSupply) -> GenResult {
    anti_unify(e1, e2, fresh, false)
}

/// `e1 △ e2`: generalisation in which variables standing for the same pair
/// of subterms are identified.
pub fn msg(e1: &Expr, e2: &Expr, fresh: &mut FreshSupply) -> GenResult {
    anti_unify(e1, e2, fresh, true)
}

/// Left fold of [`msg`] over the non-`True` members.
pub fn msg_list(es: &[Expr], fresh: &mut FreshSupply) -> Expr {
    let mut live = es.iter().filter(|e| !e.is_true());
    let Some(first) = live.next() else {
        return Expr::tt();
    };
    live.fold(first.clone(), |acc, e| msg(&acc, e, fresh).generalised)
}

struct AntiUnifier<'a> {
    fresh: &'a mut FreshSupply,
    share: bool,
    pairs: Vec<(String, Expr, Expr)>,
}

impl AntiUnifier<'_> {
    fn go(&mut self, a: &Expr, b: &Expr) -> Expr {
        if a == b {
            return a.clone();
        }
        let (fa, ka) = a.functor();
        let (fb, kb) = b.functor();
        if fa == fb && ka.len() == kb.len() && !matches!(fa, Functor::Var(_)) {
            let kids = ka.iter().zip(&kb).map(|(x, y)| self.go(x, y)).collect();
            return Expr::from_functor(fa, kids);
        }
        if self.share {
            if let Some((name, _, _)) = self.pairs.iter().find(|(_, l, r)| l == a && r == b) {
                return Expr::var(name.clone());
            }
        }
        let name = self.fresh.next_name();
        self.pairs.push((name.clone(), a.clone(), b.clone()));
        Expr::var(name)
    }
}

fn anti_unify(e1: &Expr, e2: &Expr, fresh: &mut FreshSupply, share: bool) -> GenResult {
    let (a, b) = (e1.canonical(), e2.canonical());
    let mut au = AntiUnifier { fresh, share, pairs: Vec::new() };
    let generalised = au.go(&a, &b);
    let mut theta_left = Subst::new();
    let mut theta_right = Subst::new();
    for (name, l, r) in au.pairs {
        theta_left.insert(name.clone(), l);
        theta_right.insert(name, r);
    }
    GenResult { generalised, theta_left, theta_right }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_expr;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn genvars(r: &GenResult) -> BTreeSet<String> {
        r.theta_left.domain()
    }

    #[test]
    fn embedding_examples() {
        assert!(embeds(&e("x+1=n ∧ y*k=k^n"), &e("x+(1+1)=n ∧ y*(k*k)=k^n")));
        let p = e("x+g1=n ∧ y*(k*g2)=k^n");
        assert!(embeds(&p, &p));
        assert!(embeds(&e("x+1"), &e("(x+1)*y")));
        assert!(!embeds(&e("(x+1)*y"), &e("x+1")));
        assert!(embeds(&e("1"), &e("3")));
        assert!(!embeds(&e("3"), &e("1")));
        assert!(embeds(&e("Succ(x)"), &e("4+Succ(Succ(y))")));
    }

    #[test]
    fn coupling_examples() {
        assert!(coupled(&e("x+1=n ∧ y*k=k^n"), &e("x+(1+1)=n ∧ y*(k*k)=k^n")));
        assert!(!coupled(&e("x"), &e("x+1")));
        assert!(!coupled(&e("a<1 ∧ b<1"), &e("a<1 ∨ b<1")));
        assert!(!coupled(&e("1"), &e("1*y")));
    }

    #[test]
    fn generalisation_examples() {
        let mut fresh = FreshSupply::default();
        let r = generalise(&e("x+(1+1)=n ∧ y*(k*k)=k^n"), &e("x+1=n ∧ y*k=k^n"), &mut fresh);
        assert_eq!(r.generalised, e("x+g1=n ∧ y*g2=k^n"));
        assert_eq!(r.theta_left.get("g1"), Some(&e("1+1")));
        assert_eq!(r.theta_left.get("g2"), Some(&e("k*k")));
        assert_eq!(r.theta_right.get("g1"), Some(&e("1")));
        assert_eq!(r.theta_right.get("g2"), Some(&e("k")));

        let x = e("x*y+z");
        let r = generalise(&x, &x, &mut fresh);
        assert_eq!(r.generalised, x);
        assert!(r.theta_left.is_empty() && r.theta_right.is_empty());

        let mut fresh = FreshSupply::default();
        let r = generalise(&e("a+b"), &e("a+c"), &mut fresh);
        assert_eq!(r.generalised, e("a+g1"));
    }

    #[test]
    fn msg_merges_identical_pairs() {
        let mut fresh = FreshSupply::default();
        let r = generalise(&e("a+a"), &e("b+b"), &mut fresh);
        assert_eq!(genvars(&r).len(), 2);
        let r = msg(&e("a+a"), &e("b+b"), &mut fresh);
        assert_eq!(genvars(&r).len(), 1);
        assert_eq!(r.generalised.substitute(&r.theta_left), e("a+a"));
    }

    #[test]
    fn msg_binary_exponentiation_branches() {
        let mut fresh = FreshSupply::default();
        let eq9 = msg(
            &e("x=(2*1)+1 ∧ y*(z*(z*z))=k^n"),
            &e("x=2*1 ∧ y*(z*z)=k^n"),
            &mut fresh,
        )
        .generalised;
        let gs: BTreeSet<String> = ["g1", "g2", "g3"].map(String::from).into();
        assert!(eq9.renaming_of(&e("x=g1 ∧ y*(z*g2)=k^n"), &gs).is_some());

        let eq10 = e("x=g3 ∧ y*(z*(z*g4))=k^n");
        assert!(coupled(&eq9, &eq10));
        let eq11 = msg(&eq10, &eq9, &mut fresh).generalised;
        let all: BTreeSet<String> = fresh.issued().iter().cloned().chain(["g3".into(), "g4".into()]).collect();
        assert!(eq11.renaming_of(&eq9, &all).is_some());
    }

    #[test]
    fn msg_list_drops_true() {
        let mut fresh = FreshSupply::default();
        let p = e("x=1 ∧ y*z=k^n");
        assert_eq!(msg_list(std::slice::from_ref(&p), &mut fresh), p);
        assert_eq!(msg_list(&[p.clone(), Expr::tt()], &mut fresh), p);
        assert_eq!(msg_list(&[Expr::tt()], &mut fresh), Expr::tt());
        let got = msg_list(
            &[e("x=(2*1)+1 ∧ y*(z*(z*z))=k^n"), e("x=2*1 ∧ y*(z*z)=k^n")],
            &mut fresh,
        );
        let gs: BTreeSet<String> = fresh.issued().iter().cloned().chain(["g1".into(), "g2".into()]).collect();
        assert!(got.renaming_of(&e("x=g1 ∧ y*(z*g2)=k^n"), &gs).is_some());
    }

    #[test]
    fn fresh_names_avoid_program_variables() {
        let mut fresh = FreshSupply::new(["g1".to_string()].into());
        assert_eq!(fresh.next_name(), "g2");
        assert!(fresh.is_generalisation_var("g2"));
        assert!(!fresh.is_generalisation_var("g1"));
    }
}
