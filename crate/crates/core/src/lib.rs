//! Loop invariant discovery by weakest liberal preconditions, rewriting,
//! homeomorphic embedding and generalisation.

pub mod cli;
pub mod embed;
pub mod engine;
pub mod eval;
pub mod parser;
pub mod pretty;
pub mod simplify;
pub mod solver;
pub mod term;
pub mod wlp;

pub use embed::{coupled, embeds, msg, FreshSupply, GenResult};
pub use engine::{annotate_program, find_invariant, Discovery, EngineConfig, EngineFailure};
pub use eval::{exec, eval_expr, holds, Arith, ExecOutcome, Store, Value};
pub use parser::{parse_expr, parse_program, parse_stmt, ParseError};
pub use simplify::{simplify, SimpConfig};
pub use solver::{check_requirements, diagnose_lost_variables, solve, Assignment, SolverConfig, Verdict};
pub use term::{Expr, Loop, Op, Stmt, Subst, Triple};
pub use wlp::{vcs_for_loop, wlp, LoopRow, VcSet};
