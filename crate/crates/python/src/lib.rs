use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use loopinv_core as core;
use core::cli::{run_source, Format, Mode, RowArg, RunConfig};
use core::engine::EngineConfig;
use core::{Expr as CoreExpr, FreshSupply, SimpConfig, Subst};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An assertion or arithmetic term.
#[pyclass(name = "Expr", frozen, eq, hash, str, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct Expr {
    inner: CoreExpr,
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.inner.fmt(f)
    }
}

impl From<CoreExpr> for Expr {
    fn from(inner: CoreExpr) -> Self {
        Expr { inner }
    }
}

#[pymethods]
impl Expr {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        core::parse_expr(text).map(Expr::from).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.inner)
    }

    fn free_vars(&self) -> Vec<String> {
        self.inner.free_vars().into_iter().collect()
    }

    fn substitute(&self, mapping: BTreeMap<String, Expr>) -> Expr {
        let theta: Subst = mapping.into_iter().map(|(k, v)| (k, v.inner)).collect();
        self.inner.substitute(&theta).into()
    }

    /// Holds in the store given as a name-to-value dict; errors on undefined terms.
    fn holds(&self, store: BTreeMap<String, u64>) -> PyResult<bool> {
        let mut s = core::Store::new();
        for (k, v) in store {
            s.set(k, v);
        }
        core::eval::check(&self.inner, &s).map_err(value_error)
    }
}

/// A Hoare triple `{P} S {Q}`.
#[pyclass(name = "Program", frozen, str, skip_from_py_object)]
#[derive(Clone)]
struct Program {
    inner: core::Triple,
}

impl std::fmt::Display for Program {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.inner.fmt(f)
    }
}

#[pymethods]
impl Program {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        core::parse_program(source).map(|inner| Program { inner }).map_err(value_error)
    }

    #[getter]
    fn pre(&self) -> Expr {
        self.inner.pre.clone().into()
    }

    #[getter]
    fn post(&self) -> Expr {
        self.inner.post.clone().into()
    }

    fn loop_count(&self) -> usize {
        self.inner.program.loops().len()
    }

    /// Weakest liberal precondition of the program body for `post`, or for
    /// its own postcondition.
    #[pyo3(signature = (post=None))]
    fn wlp(&self, post: Option<&Expr>) -> PyResult<Expr> {
        let q = post.map_or(&self.inner.post, |p| &p.inner);
        core::wlp(&self.inner.program, q).map(Expr::from).map_err(value_error)
    }
}

#[pyfunction]
fn parse_expr(text: &str) -> PyResult<Expr> {
    Expr::new(text)
}

#[pyfunction]
fn parse_program(source: &str) -> PyResult<Program> {
    Program::new(source)
}

/// Weakest liberal precondition of a statement.
#[pyfunction]
fn wlp(statement: &str, post: &Expr) -> PyResult<Expr> {
    let st = core::parse_stmt(statement).map_err(value_error)?;
    core::wlp(&st, &post.inner).map(Expr::from).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (p, context=None, refutation_bound=8))]
fn simplify(p: &Expr, context: Option<&Expr>, refutation_bound: u64) -> PyResult<Expr> {
    let ctx = context.map_or_else(CoreExpr::tt, |c| c.inner.clone());
    let cfg = SimpConfig { refutation_bound, ..SimpConfig::default() };
    core::simplify(&ctx, &p.inner, &cfg).map(Expr::from).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn embeds(a: &Expr, b: &Expr) -> bool {
    core::embeds(&a.inner, &b.inner)
}

#[pyfunction]
fn coupled(a: &Expr, b: &Expr) -> bool {
    core::coupled(&a.inner, &b.inner)
}

/// Most specific generalisation: `(generalised, left, right)` with
/// `generalised.substitute(left) == a` and likewise for `b`.
#[pyfunction]
fn msg(a: &Expr, b: &Expr) -> (Expr, BTreeMap<String, Expr>, BTreeMap<String, Expr>) {
    let mut avoid = a.inner.free_vars();
    avoid.extend(b.inner.free_vars());
    let g = core::msg(&a.inner, &b.inner, &mut FreshSupply::new(avoid));
    let side = |s: &Subst| s.iter().map(|(k, v)| (k.clone(), Expr::from(v.clone()))).collect();
    (g.generalised.into(), side(&g.theta_left), side(&g.theta_right))
}

/// Putative invariant for loop `index` of `program`, with its generalisation
/// variables and derivation.
#[pyfunction]
#[pyo3(signature = (program, index=0, max_iterations=64, substitute_inner=false))]
fn find_invariant<'py>(
    py: Python<'py>,
    program: &Program,
    index: usize,
    max_iterations: usize,
    substitute_inner: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let loops = program.inner.program.loops();
    let lp = loops.get(index).ok_or_else(|| value_error(format!("no loop with index {index}")))?;
    let post = lp.post.as_ref().unwrap_or(&program.inner.post);
    let cfg = EngineConfig {
        max_iterations,
        loop_row: if substitute_inner { core::LoopRow::Substitute } else { core::LoopRow::Fig5 },
        ..EngineConfig::default()
    };
    let d = core::find_invariant(lp, post, &cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("invariant", Expr::from(d.putative))?;
    out.set_item("genvars", d.genvars.into_iter().collect::<Vec<_>>())?;
    out.set_item("iterations", d.iterations)?;
    out.set_item("trace", d.trace.approximations().into_iter().map(|e| Expr::from(e.clone())).collect::<Vec<_>>())?;
    Ok(out)
}

/// Runs the full pipeline on program source and returns `(exit_code, report)`,
/// the report being the decoded JSON document the command line prints.
#[pyfunction]
#[pyo3(signature = (source, mode="discover", bound=6, max_iterations=64, substitute_inner=false))]
fn discover<'py>(
    py: Python<'py>,
    source: &str,
    mode: &str,
    bound: u64,
    max_iterations: usize,
    substitute_inner: bool,
) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let mode = match mode {
        "discover" => Mode::Discover,
        "verify" => Mode::Verify,
        "trace" => Mode::Trace,
        other => return Err(value_error(format!("unknown mode `{other}`"))),
    };
    let cfg = RunConfig {
        mode,
        input: "<python>".into(),
        domain_bound: bound,
        max_candidates: 2_000_000,
        max_iterations,
        refutation_bound: 8,
        format: Format::Json,
        loop_row: if substitute_inner { RowArg::Substitute } else { RowArg::Fig5 },
        disabled_rules: Vec::new(),
    };
    let (code, text) = py.detach(|| run_source(&cfg, source));
    if code == core::cli::EXIT_PARSE {
        return Err(value_error(text.trim_end()));
    }
    let report = py.import("json")?.call_method1("loads", (text,))?;
    Ok((code, report))
}

#[pymodule]
fn loopinv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Expr>()?;
    m.add_class::<Program>()?;
    m.add_function(wrap_pyfunction!(parse_expr, m)?)?;
    m.add_function(wrap_pyfunction!(parse_program, m)?)?;
    m.add_function(wrap_pyfunction!(wlp, m)?)?;
    m.add_function(wrap_pyfunction!(simplify, m)?)?;
    m.add_function(wrap_pyfunction!(embeds, m)?)?;
    m.add_function(wrap_pyfunction!(coupled, m)?)?;
    m.add_function(wrap_pyfunction!(msg, m)?)?;
    m.add_function(wrap_pyfunction!(find_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(discover, m)?)?;
    Ok(())
}
