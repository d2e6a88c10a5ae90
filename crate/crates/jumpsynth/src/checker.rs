//! Robust model checking of interval MDPs: inner adversary optimization,
//! value iteration for the PCTL path operators, recursive formula
//! evaluation, and policy synthesis.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::IntervalMdp;
use crate::pctl::{PathFormula, StateFormula};
use crate::scenario::ProbInterval;

#[derive(Debug, Error)]
pub enum CheckerError {
    #[error("transition row infeasible: lower bounds sum to {sum_low}, upper bounds to {sum_high}")]
    InfeasibleRow { sum_low: f64, sum_high: f64 },
    #[error("value iteration did not converge: residual {residual} after {sweeps} sweeps")]
    NonConvergence { residual: f64, sweeps: u32 },
    #[error("unknown atomic proposition '{0}'")]
    UnknownAtom(String),
}

/// Which distribution the interval adversary picks inside a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvDir {
    Minimize,
    Maximize,
}

/// Checking objective: the policy direction with its worst-case adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Maximize the guaranteed lower bound (adversary minimizes).
    MaxLower,
    /// Minimize the worst-case upper bound (adversary maximizes).
    MinUpper,
}

impl Objective {
    pub fn adversary(self) -> AdvDir {
        match self {
            Objective::MaxLower => AdvDir::Minimize,
            Objective::MinUpper => AdvDir::Maximize,
        }
    }

    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Objective::MaxLower => candidate > incumbent,
            Objective::MinUpper => candidate < incumbent,
        }
    }

    fn worst(self) -> f64 {
        match self {
            Objective::MaxLower => f64::NEG_INFINITY,
            Objective::MinUpper => f64::INFINITY,
        }
    }
}

const FEAS_TOL: f64 = 1e-9;

/// Worst-case (or best-case) expectation of `values` over the distributions
/// compatible with the interval row. Solves the inner LP exactly by
/// saturating successors in value order.
pub fn robust_expectation(
    row: &[(usize, ProbInterval)],
    values: &[f64],
    dir: AdvDir,
) -> Result<f64, CheckerError> {
    let sum_low: f64 = row.iter().map(|(_, iv)| iv.low).sum();
    let sum_high: f64 = row.iter().map(|(_, iv)| iv.high).sum();
    if sum_low > 1.0 + FEAS_TOL || sum_high < 1.0 - FEAS_TOL {
        return Err(CheckerError::InfeasibleRow { sum_low, sum_high });
    }
    let mut order: Vec<usize> = (0..row.len()).collect();
    match dir {
        AdvDir::Minimize => {
            order.sort_by(|&a, &b| values[row[a].0].total_cmp(&values[row[b].0]))
        }
        AdvDir::Maximize => {
            order.sort_by(|&a, &b| values[row[b].0].total_cmp(&values[row[a].0]))
        }
    }
    let mut residual = 1.0 - sum_low;
    let mut expectation: f64 = row.iter().map(|(s, iv)| iv.low * values[*s]).sum();
    for i in order {
        if residual <= 0.0 {
            break;
        }
        let (succ, iv) = row[i];
        let extra = residual.min(iv.width());
        expectation += extra * values[succ];
        residual -= extra;
    }
    Ok(expectation)
}

/// A synthesized policy: one action choice per state, either stationary or
/// indexed by the number of remaining steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Policy {
    Stationary(Vec<Option<usize>>),
    TimeVarying {
        horizon: u32,
        /// `choices[r - 1][state]` is the action with `r` steps remaining.
        choices: Vec<Vec<Option<usize>>>,
    },
}

impl Policy {
    /// Action to take at `state` after `step` elapsed steps.
    pub fn action(&self, state: usize, step: u32) -> Option<usize> {
        match self {
            Policy::Stationary(choices) => choices[state],
            Policy::TimeVarying { horizon, choices } => {
                if step >= *horizon {
                    return None;
                }
                let remaining = (*horizon - step) as usize;
                choices[remaining - 1][state]
            }
        }
    }
}

struct Sweep {
    values: Vec<f64>,
    choices: Vec<Option<usize>>,
}

/// One Bellman sweep with until-style boundary handling.
fn sweep_until(
    imdp: &IntervalMdp,
    prev: &[f64],
    phi1: &BTreeSet<usize>,
    phi2: &BTreeSet<usize>,
    objective: Objective,
) -> Result<Sweep, CheckerError> {
    let results: Result<Vec<(f64, Option<usize>)>, CheckerError> = (0..imdp.num_states())
        .into_par_iter()
        .map(|state| {
            if phi2.contains(&state) {
                return Ok((1.0, None));
            }
            if !phi1.contains(&state) {
                return Ok((0.0, None));
            }
            optimize_state(imdp, state, prev, objective)
        })
        .collect();
    let results = results?;
    Ok(Sweep {
        values: results.iter().map(|(v, _)| *v).collect(),
        choices: results.into_iter().map(|(_, c)| c).collect(),
    })
}

/// Optimal action at one state; rows are stored in increasing action order,
/// and only a strict improvement replaces the incumbent, so ties resolve to
/// the lowest action index.
fn optimize_state(
    imdp: &IntervalMdp,
    state: usize,
    prev: &[f64],
    objective: Objective,
) -> Result<(f64, Option<usize>), CheckerError> {
    let mut best = objective.worst();
    let mut choice = None;
    for sa in &imdp.rows[state] {
        let v = robust_expectation(&sa.succs, prev, objective.adversary())?;
        if choice.is_none() || objective.better(v, best) {
            best = v;
            choice = Some(sa.action);
        }
    }
    if choice.is_none() {
        return Ok((0.0, None));
    }
    Ok((best, choice))
}

fn indicator(num_states: usize, set: &BTreeSet<usize>) -> Vec<f64> {
    (0..num_states)
        .map(|s| if set.contains(&s) { 1.0 } else { 0.0 })
        .collect()
}

/// Bounded until `phi1 U<=k phi2`: returns the optimal values and a
/// time-varying policy.
pub fn check_bounded_until(
    imdp: &IntervalMdp,
    phi1: &BTreeSet<usize>,
    phi2: &BTreeSet<usize>,
    k: u32,
    objective: Objective,
) -> Result<(Vec<f64>, Policy), CheckerError> {
    let mut values = indicator(imdp.num_states(), phi2);
    let mut choices = Vec::with_capacity(k as usize);
    for _ in 0..k {
        let sweep = sweep_until(imdp, &values, phi1, phi2, objective)?;
        values = sweep.values;
        choices.push(sweep.choices);
    }
    Ok((values, Policy::TimeVarying { horizon: k, choices }))
}

/// Next `X phi`: a single optimization sweep against the indicator of `phi`.
pub fn check_next(
    imdp: &IntervalMdp,
    phi: &BTreeSet<usize>,
    objective: Objective,
) -> Result<(Vec<f64>, Policy), CheckerError> {
    let target = indicator(imdp.num_states(), phi);
    let results: Result<Vec<(f64, Option<usize>)>, CheckerError> = (0..imdp.num_states())
        .into_par_iter()
        .map(|state| optimize_state(imdp, state, &target, objective))
        .collect();
    let results = results?;
    let values = results.iter().map(|(v, _)| *v).collect();
    let choices = results.into_iter().map(|(_, c)| c).collect();
    Ok((values, Policy::Stationary(choices)))
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: u32 = 100_000;

/// Unbounded until: iterate to a sup-norm fixed point; the policy of the
/// final sweep is stationary.
pub fn check_until(
    imdp: &IntervalMdp,
    phi1: &BTreeSet<usize>,
    phi2: &BTreeSet<usize>,
    objective: Objective,
    tol: f64,
    max_sweeps: u32,
) -> Result<(Vec<f64>, Policy), CheckerError> {
    let mut values = indicator(imdp.num_states(), phi2);
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        let sweep = sweep_until(imdp, &values, phi1, phi2, objective)?;
        residual = sweep
            .values
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        values = sweep.values;
        if residual < tol {
            return Ok((values, Policy::Stationary(sweep.choices)));
        }
    }
    Err(CheckerError::NonConvergence {
        residual,
        sweeps: max_sweeps,
    })
}

/// Value of a fixed policy under a dynamic interval adversary picking `dir`
/// each step. Used to pair the guaranteed lower bound with a best-case
/// upper bound.
pub fn policy_value(
    imdp: &IntervalMdp,
    path: &CompiledPath,
    policy: &Policy,
    dir: AdvDir,
    tol: f64,
    max_sweeps: u32,
) -> Result<Vec<f64>, CheckerError> {
    let n = imdp.num_states();
    let step_values = |prev: &[f64], step: u32, phi1: &BTreeSet<usize>, phi2: &BTreeSet<usize>|
     -> Result<Vec<f64>, CheckerError> {
        (0..n)
            .into_par_iter()
            .map(|state| {
                if phi2.contains(&state) {
                    return Ok(1.0);
                }
                if !phi1.contains(&state) {
                    return Ok(0.0);
                }
                match policy.action(state, step).and_then(|a| imdp.row(state, a)) {
                    Some(sa) => robust_expectation(&sa.succs, prev, dir),
                    None => Ok(0.0),
                }
            })
            .collect()
    };
    match path {
        CompiledPath::Next(phi) => {
            let target = indicator(n, phi);
            (0..n)
                .into_par_iter()
                .map(|state| {
                    match policy.action(state, 0).and_then(|a| imdp.row(state, a)) {
                        Some(sa) => robust_expectation(&sa.succs, &target, dir),
                        None => Ok(0.0),
                    }
                })
                .collect()
        }
        CompiledPath::BoundedUntil(phi1, phi2, k) => {
            let mut values = indicator(n, phi2);
            for remaining in 1..=*k {
                let step = *k - remaining;
                values = step_values(&values, step, phi1, phi2)?;
            }
            Ok(values)
        }
        CompiledPath::Until(phi1, phi2) => {
            let mut values = indicator(n, phi2);
            let mut residual = f64::INFINITY;
            for _ in 0..max_sweeps {
                let next = step_values(&values, 0, phi1, phi2)?;
                residual = next
                    .iter()
                    .zip(&values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                values = next;
                if residual < tol {
                    return Ok(values);
                }
            }
            Err(CheckerError::NonConvergence {
                residual,
                sweeps: max_sweeps,
            })
        }
    }
}

/// A path formula with operand state formulas resolved to state sets.
pub enum CompiledPath {
    Next(BTreeSet<usize>),
    Until(BTreeSet<usize>, BTreeSet<usize>),
    BoundedUntil(BTreeSet<usize>, BTreeSet<usize>, u32),
}

#[derive(Debug, Clone, Copy)]
pub struct CheckParams {
    pub tol: f64,
    pub max_sweeps: u32,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Outcome of one probabilistic subformula during evaluation.
pub struct ProbResult {
    /// Canonical text of the `P~lambda [...]` subformula.
    pub formula: String,
    pub objective: Objective,
    /// Guaranteed value per state (lower bound for MaxLower, upper bound
    /// for MinUpper).
    pub values: Vec<f64>,
    pub policy: Policy,
    /// The compiled path operands, kept for re-evaluating the policy.
    pub path: CompiledPath,
}

pub struct EvalOutcome {
    pub sat: BTreeSet<usize>,
    /// Probabilistic subformulas in evaluation order (innermost first).
    pub probs: Vec<ProbResult>,
}

/// Evaluates a state formula bottom-up, returning the satisfying state set
/// and the value vectors of every probabilistic subformula.
pub fn evaluate(
    imdp: &IntervalMdp,
    formula: &StateFormula,
    params: &CheckParams,
) -> Result<EvalOutcome, CheckerError> {
    let mut probs = Vec::new();
    let sat = eval_set(imdp, formula, params, &mut probs)?;
    Ok(EvalOutcome { sat, probs })
}

fn atom_states(
    imdp: &IntervalMdp,
    names: &[String],
) -> Result<BTreeSet<usize>, CheckerError> {
    for name in names {
        if !imdp.states.iter().any(|st| st.labels.contains(name)) {
            return Err(CheckerError::UnknownAtom(name.clone()));
        }
    }
    Ok(imdp.states_with_any_label(names))
}

fn eval_set(
    imdp: &IntervalMdp,
    formula: &StateFormula,
    params: &CheckParams,
    probs: &mut Vec<ProbResult>,
) -> Result<BTreeSet<usize>, CheckerError> {
    match formula {
        StateFormula::True => Ok((0..imdp.num_states()).collect()),
        StateFormula::Atom(names) => atom_states(imdp, names),
        StateFormula::Not(names) => {
            let inner = atom_states(imdp, names)?;
            Ok((0..imdp.num_states()).filter(|s| !inner.contains(s)).collect())
        }
        StateFormula::And(a, b) => {
            let left = eval_set(imdp, a, params, probs)?;
            let right = eval_set(imdp, b, params, probs)?;
            Ok(left.intersection(&right).copied().collect())
        }
        StateFormula::Prob { op, lambda, path } => {
            let objective = match op {
                crate::pctl::CmpOp::Ge | crate::pctl::CmpOp::Gt => Objective::MaxLower,
                crate::pctl::CmpOp::Lt | crate::pctl::CmpOp::Le => Objective::MinUpper,
            };
            let compiled = compile_path(imdp, path, params, probs)?;
            let (values, policy) = check_path(imdp, &compiled, objective, params)?;
            let sat = values
                .iter()
                .enumerate()
                .filter(|(_, v)| op.holds(**v, *lambda))
                .map(|(s, _)| s)
                .collect();
            probs.push(ProbResult {
                formula: formula.to_string(),
                objective,
                values,
                policy,
                path: compiled,
            });
            Ok(sat)
        }
    }
}

fn compile_path(
    imdp: &IntervalMdp,
    path: &PathFormula,
    params: &CheckParams,
    probs: &mut Vec<ProbResult>,
) -> Result<CompiledPath, CheckerError> {
    Ok(match path {
        PathFormula::Next(sf) => CompiledPath::Next(eval_set(imdp, sf, params, probs)?),
        PathFormula::Until(a, b) => CompiledPath::Until(
            eval_set(imdp, a, params, probs)?,
            eval_set(imdp, b, params, probs)?,
        ),
        PathFormula::BoundedUntil(a, b, k) => CompiledPath::BoundedUntil(
            eval_set(imdp, a, params, probs)?,
            eval_set(imdp, b, params, probs)?,
            *k,
        ),
    })
}

fn check_path(
    imdp: &IntervalMdp,
    path: &CompiledPath,
    objective: Objective,
    params: &CheckParams,
) -> Result<(Vec<f64>, Policy), CheckerError> {
    match path {
        CompiledPath::Next(phi) => check_next(imdp, phi, objective),
        CompiledPath::Until(phi1, phi2) => {
            check_until(imdp, phi1, phi2, objective, params.tol, params.max_sweeps)
        }
        CompiledPath::BoundedUntil(phi1, phi2, k) => {
            check_bounded_until(imdp, phi1, phi2, *k, objective)
        }
    }
}

/// Synthesizes the policy maximizing the guaranteed satisfaction
/// probability of a bare path formula.
pub fn synthesize(
    imdp: &IntervalMdp,
    path: &PathFormula,
    params: &CheckParams,
) -> Result<(Vec<f64>, Policy, CompiledPath), CheckerError> {
    let mut probs = Vec::new();
    let compiled = compile_path(imdp, path, params, &mut probs)?;
    let (values, policy) = check_path(imdp, &compiled, Objective::MaxLower, params)?;
    Ok((values, policy, compiled))
}
