//! Controller extraction and closed-loop Monte Carlo validation.
//!
//! A synthesized policy acts on abstract states; the runtime maps a
//! continuous state back to its region, looks up the abstract action, and
//! reconstructs a feasible input driving the noiseless successor onto the
//! action's target point.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{ActionInfo, IntervalMdp};
use crate::checker::Policy;
use crate::geometry::Partition;
use crate::model::{HyperRect, JumpImdp, MjlsSpec, ModeDynamics};
use crate::pctl::{PathFormula, StateFormula};
use crate::scenario::derive_seed;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("no admissible input reaches the target: residual {residual:.3e}")]
    Infeasible { residual: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

const INPUT_RESIDUAL_TOL: f64 = 1e-8;

/// Smallest-norm admissible input with `A x + B u + q = target`, or an
/// error when the target is not reachable from `x` within the input box.
pub fn compute_input(
    mode: &ModeDynamics,
    input_box: &HyperRect,
    x: &DVector<f64>,
    target: &DVector<f64>,
) -> Result<DVector<f64>, RuntimeError> {
    let c = target - &mode.a * x - &mode.q;
    let svd = mode.b.clone().svd(true, true);
    let pinv = svd
        .pseudo_inverse(1e-12)
        .expect("svd computed with u and v");
    let clamp = |u: &mut DVector<f64>| {
        for i in 0..u.len() {
            u[i] = u[i].clamp(input_box.lo[i], input_box.hi[i]);
        }
    };
    // Unconstrained minimum-norm solution first.
    let mut u: DVector<f64> = &pinv * &c;
    let inside = (0..u.len())
        .all(|i| u[i] >= input_box.lo[i] - 1e-12 && u[i] <= input_box.hi[i] + 1e-12);
    if inside {
        clamp(&mut u);
        let residual = (&mode.b * &u - &c).amax();
        if residual <= INPUT_RESIDUAL_TOL {
            return Ok(u);
        }
    }
    // Alternate projections between the input box and the affine set
    // {u : B u = c}; converges linearly when they intersect.
    clamp(&mut u);
    let mut residual = f64::INFINITY;
    for _ in 0..100_000 {
        let r = &mode.b * &u - &c;
        residual = r.amax();
        if residual <= INPUT_RESIDUAL_TOL * 1e-2 {
            break;
        }
        u -= &pinv * r;
        clamp(&mut u);
    }
    let r = &mode.b * &u - &c;
    residual = residual.min(r.amax());
    if residual <= INPUT_RESIDUAL_TOL {
        Ok(u)
    } else {
        Err(RuntimeError::Infeasible { residual })
    }
}

/// What the controller decided at one step.
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: usize,
    pub target: usize,
    pub jump: Option<usize>,
    pub u: DVector<f64>,
}

/// Closed-loop controller: partition lookup, policy lookup, input
/// reconstruction.
pub struct Controller<'a> {
    pub spec: &'a MjlsSpec,
    pub partition: &'a Partition,
    pub imdp: &'a IntervalMdp,
    pub policy: &'a Policy,
    /// True when the iMDP is the mode product (states are mode-region
    /// pairs); false for the mode-agnostic robust abstraction.
    pub product: bool,
}

impl Controller<'_> {
    pub fn state_id(&self, mode: usize, region: usize) -> usize {
        if self.product {
            mode * (self.partition.num_regions() + 1) + region
        } else {
            region
        }
    }

    /// Decision at continuous state `x` in mode `mode` after `step` elapsed
    /// steps; `None` when the state is absorbing or the policy has no
    /// action there.
    pub fn act(
        &self,
        x: &DVector<f64>,
        mode: usize,
        step: u32,
    ) -> Result<Option<Decision>, RuntimeError> {
        let region = self.partition.label_state(x);
        if region == self.partition.absorbing_index() {
            return Ok(None);
        }
        let state = self.state_id(mode, region);
        let Some(action) = self.policy.action(state, step) else {
            return Ok(None);
        };
        match self.imdp.actions[action] {
            ActionInfo::SelfLoop => Ok(None),
            ActionInfo::Target { jump, target } => {
                let d = DVector::from_column_slice(&self.imdp.targets[target]);
                let u = compute_input(&self.spec.modes[mode], &self.spec.input_box, x, &d)?;
                Ok(Some(Decision {
                    action,
                    target,
                    jump,
                    u,
                }))
            }
        }
    }
}

/// Ground-truth mode switching used when simulating.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrueJumps {
    /// Concrete distribution per (mode, jump action).
    Controlled(Vec<Vec<Vec<(usize, f64)>>>),
    /// Scripted mode sequence; the last entry repeats forever.
    Script(Vec<usize>),
}

impl TrueJumps {
    /// Interval midpoints of a jump iMDP, renormalized per row.
    pub fn midpoints(jump: &JumpImdp) -> TrueJumps {
        let rows = jump
            .rows
            .iter()
            .map(|actions| {
                actions
                    .iter()
                    .map(|row| {
                        let raw: Vec<(usize, f64)> = row
                            .iter()
                            .map(|(succ, iv)| (*succ, 0.5 * (iv.low + iv.high)))
                            .collect();
                        let total: f64 = raw.iter().map(|(_, p)| p).sum();
                        raw.into_iter().map(|(s, p)| (s, p / total)).collect()
                    })
                    .collect()
            })
            .collect();
        TrueJumps::Controlled(rows)
    }

    fn next(&self, mode: usize, jump_action: Option<usize>, step: u32, rng: &mut impl Rng) -> usize {
        match self {
            TrueJumps::Controlled(rows) => {
                let dist = &rows[mode][jump_action.unwrap_or(0)];
                let draw: f64 = rng.gen();
                let mut acc = 0.0;
                for &(succ, p) in dist {
                    acc += p;
                    if draw < acc {
                        return succ;
                    }
                }
                dist.last().map(|(s, _)| *s).unwrap_or(mode)
            }
            TrueJumps::Script(seq) => {
                let idx = ((step + 1) as usize).min(seq.len() - 1);
                seq[idx]
            }
        }
    }
}

/// Path property monitored along a simulated trajectory, with operand
/// formulas pre-evaluated per region (absorbing region included, with an
/// empty label set).
pub enum Monitor {
    BoundedUntil {
        safe: Vec<bool>,
        goal: Vec<bool>,
        horizon: u32,
    },
    Next {
        goal: Vec<bool>,
    },
}

fn formula_holds(sf: &StateFormula, labels: &BTreeSet<String>) -> Result<bool, RuntimeError> {
    match sf {
        StateFormula::True => Ok(true),
        StateFormula::Atom(names) => Ok(names.iter().any(|n| labels.contains(n))),
        StateFormula::Not(names) => Ok(!names.iter().any(|n| labels.contains(n))),
        StateFormula::And(a, b) => Ok(formula_holds(a, labels)? && formula_holds(b, labels)?),
        StateFormula::Prob { .. } => Err(RuntimeError::Unsupported(
            "nested probability operators cannot be monitored along a single trace".into(),
        )),
    }
}

impl Monitor {
    pub fn from_path(partition: &Partition, path: &PathFormula) -> Result<Monitor, RuntimeError> {
        let region_truth = |sf: &StateFormula| -> Result<Vec<bool>, RuntimeError> {
            (0..=partition.num_regions())
                .map(|region| formula_holds(sf, partition.region_labels(region)))
                .collect()
        };
        match path {
            PathFormula::BoundedUntil(a, b, k) => Ok(Monitor::BoundedUntil {
                safe: region_truth(a)?,
                goal: region_truth(b)?,
                horizon: *k,
            }),
            PathFormula::Next(sf) => Ok(Monitor::Next {
                goal: region_truth(sf)?,
            }),
            PathFormula::Until(..) => Err(RuntimeError::Unsupported(
                "unbounded until cannot be monitored over a finite trace".into(),
            )),
        }
    }

    fn horizon(&self) -> u32 {
        match self {
            Monitor::BoundedUntil { horizon, .. } => *horizon,
            Monitor::Next { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceStatus {
    Satisfied,
    Violated,
    /// Horizon elapsed without reaching the goal.
    Exhausted,
    /// The controller had no action before the property resolved.
    Stuck,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u32,
    pub mode: usize,
    pub region: usize,
    pub x: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub jump: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub trial: u64,
    pub status: TraceStatus,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: u64,
    pub successes: u64,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// The first few trajectories, for inspection and export.
    pub traces: Vec<Trace>,
}

/// 95% Wilson score interval by default (`z = 1.96`).
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

const KEPT_TRACES: u64 = 10;

/// Runs `trials` closed-loop trajectories and scores the monitored
/// property. Trials are independent and seeded per index, so the report is
/// identical across thread counts.
pub fn simulate(
    controller: &Controller<'_>,
    monitor: &Monitor,
    true_jumps: &TrueJumps,
    x0: &DVector<f64>,
    r0: usize,
    trials: u64,
    seed: u64,
) -> Result<SimReport, RuntimeError> {
    let results: Result<Vec<(TraceStatus, Option<Trace>)>, RuntimeError> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, trial as usize, 0));
            run_trial(controller, monitor, true_jumps, x0, r0, trial, &mut rng)
        })
        .collect();
    let results = results?;
    let successes = results
        .iter()
        .filter(|(s, _)| *s == TraceStatus::Satisfied)
        .count() as u64;
    let (wilson_low, wilson_high) = wilson_interval(successes, trials, 1.96);
    Ok(SimReport {
        trials,
        successes,
        frequency: successes as f64 / trials.max(1) as f64,
        wilson_low,
        wilson_high,
        traces: results.into_iter().filter_map(|(_, t)| t).collect(),
    })
}

fn run_trial(
    controller: &Controller<'_>,
    monitor: &Monitor,
    true_jumps: &TrueJumps,
    x0: &DVector<f64>,
    r0: usize,
    trial: u64,
    rng: &mut impl Rng,
) -> Result<(TraceStatus, Option<Trace>), RuntimeError> {
    let spec = controller.spec;
    let mut x = x0.clone();
    let mut mode = r0;
    let horizon = monitor.horizon();
    let keep = trial < KEPT_TRACES;
    let mut steps = Vec::new();
    let mut status = TraceStatus::Exhausted;
    for step in 0..=horizon {
        let region = controller.partition.label_state(&x);
        match monitor {
            Monitor::BoundedUntil { safe, goal, .. } => {
                if goal[region] {
                    status = TraceStatus::Satisfied;
                    if keep {
                        steps.push(step_record(step, mode, region, &x, None, None));
                    }
                    break;
                }
                if !safe[region] {
                    status = TraceStatus::Violated;
                    if keep {
                        steps.push(step_record(step, mode, region, &x, None, None));
                    }
                    break;
                }
            }
            Monitor::Next { goal } => {
                if step == 1 {
                    status = if goal[region] {
                        TraceStatus::Satisfied
                    } else {
                        TraceStatus::Violated
                    };
                    if keep {
                        steps.push(step_record(step, mode, region, &x, None, None));
                    }
                    break;
                }
            }
        }
        if step == horizon {
            status = TraceStatus::Exhausted;
            if keep {
                steps.push(step_record(step, mode, region, &x, None, None));
            }
            break;
        }
        let Some(decision) = controller.act(&x, mode, step)? else {
            status = TraceStatus::Stuck;
            if keep {
                steps.push(step_record(step, mode, region, &x, None, None));
            }
            break;
        };
        if keep {
            steps.push(step_record(
                step,
                mode,
                region,
                &x,
                Some(&decision.u),
                decision.jump,
            ));
        }
        let noise = spec.noise[mode].draw(rng);
        x = spec.modes[mode].step(&x, &decision.u) + noise;
        mode = true_jumps.next(mode, decision.jump, step, rng);
    }
    let trace = keep.then(|| Trace {
        trial,
        status,
        steps,
    });
    Ok((status, trace))
}

fn step_record(
    step: u32,
    mode: usize,
    region: usize,
    x: &DVector<f64>,
    u: Option<&DVector<f64>>,
    jump: Option<usize>,
) -> TraceStep {
    TraceStep {
        step,
        mode,
        region,
        x: x.iter().copied().collect(),
        u: u.map(|u| u.iter().copied().collect()),
        jump,
    }
}

/// Writes the kept traces as CSV: one row per step.
pub fn write_traces_csv(path: &Path, traces: &[Trace]) -> Result<(), RuntimeError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = traces
        .iter()
        .flat_map(|t| t.steps.first())
        .map(|s| s.x.len())
        .next()
        .unwrap_or(0);
    let udim = traces
        .iter()
        .flat_map(|t| &t.steps)
        .filter_map(|s| s.u.as_ref())
        .map(|u| u.len())
        .next()
        .unwrap_or(0);
    let mut header = vec!["trial".into(), "step".into(), "mode".into(), "region".into()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend((0..udim).map(|i| format!("u{i}")));
    header.push("jump".into());
    header.push("status".into());
    writeln!(file, "{}", header.join(","))?;
    for trace in traces {
        for s in &trace.steps {
            let mut cols = vec![
                trace.trial.to_string(),
                s.step.to_string(),
                s.mode.to_string(),
                s.region.to_string(),
            ];
            cols.extend(s.x.iter().map(|v| format!("{v}")));
            for i in 0..udim {
                cols.push(match &s.u {
                    Some(u) => format!("{}", u[i]),
                    None => String::new(),
                });
            }
            cols.push(s.jump.map(|j| j.to_string()).unwrap_or_default());
            cols.push(format!("{:?}", trace.status));
            writeln!(file, "{}", cols.join(","))?;
        }
    }
    Ok(())
}
