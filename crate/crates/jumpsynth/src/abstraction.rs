//! Interval MDP assembly: per-mode abstractions, the product construction
//! for controlled mode switching, and the robust merge for unknown jumps.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Partition;
use crate::model::{JumpImdp, MjlsSpec};
use crate::scenario::{self, ModeTransitions, ProbInterval};

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("mode iMDPs have mismatched index spaces: {0}")]
    Mismatched(String),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// One iMDP state: an optional discrete mode, a region index, and labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateInfo {
    pub mode: Option<usize>,
    pub region: usize,
    pub labels: BTreeSet<String>,
}

/// What an abstract action does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionInfo {
    /// Drive the noiseless successor onto a target point, optionally paired
    /// with a jump action.
    Target { jump: Option<usize>, target: usize },
    /// Absorbing self-loop.
    SelfLoop,
}

/// Transitions of one enabled action at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAction {
    pub action: usize,
    pub succs: Vec<(usize, ProbInterval)>,
}

/// Interval Markov decision process with sparse transition rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalMdp {
    pub states: Vec<StateInfo>,
    pub actions: Vec<ActionInfo>,
    /// Enabled actions with their transition rows, per state.
    pub rows: Vec<Vec<StateAction>>,
    /// Target points backing the `Target` actions (row-major coordinates).
    pub targets: Vec<Vec<f64>>,
}

impl IntervalMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|actions| actions.iter().map(|sa| sa.succs.len()))
            .sum()
    }

    /// States whose label set contains any of the given atoms.
    pub fn states_with_any_label(&self, atoms: &[String]) -> BTreeSet<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, st)| atoms.iter().any(|a| st.labels.contains(a)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn row(&self, state: usize, action: usize) -> Option<&StateAction> {
        self.rows[state].iter().find(|sa| sa.action == action)
    }
}

fn absorbing_self_loop(state: usize, action: usize) -> StateAction {
    StateAction {
        action,
        succs: vec![(state, ProbInterval::point(1.0))],
    }
}

/// Builds the iMDP of a single mode: regions plus absorbing state, enabled
/// actions from backward reachability, PAC transition intervals.
pub fn build_mode_imdp(
    spec: &MjlsSpec,
    partition: &Partition,
    targets: &[DVector<f64>],
    mode: usize,
    w: usize,
    beta: f64,
    seed: u64,
) -> Result<IntervalMdp, AbstractionError> {
    let tr = scenario::build_mode_transitions(spec, partition, targets, mode, w, beta, seed)?;
    Ok(mode_imdp_from_transitions(partition, targets, &tr))
}

/// Assembles a mode iMDP from precomputed (possibly cached) transitions.
pub fn mode_imdp_from_transitions(
    partition: &Partition,
    targets: &[DVector<f64>],
    tr: &ModeTransitions,
) -> IntervalMdp {
    imdp_from_transitions(partition, targets, Some(tr.mode), &tr.enabled, |action| {
        tr.rows.get(&action)
    })
}

fn imdp_from_transitions<'a>(
    partition: &Partition,
    targets: &[DVector<f64>],
    mode: Option<usize>,
    enabled: &[BTreeSet<usize>],
    row_of: impl Fn(usize) -> Option<&'a scenario::TransitionRow>,
) -> IntervalMdp {
    let p = partition.num_regions();
    let mut states = Vec::with_capacity(p + 1);
    for region in 0..=p {
        states.push(StateInfo {
            mode,
            region,
            labels: partition.region_labels(region).clone(),
        });
    }
    let mut actions: Vec<ActionInfo> = (0..targets.len())
        .map(|target| ActionInfo::Target { jump: None, target })
        .collect();
    let self_loop = actions.len();
    actions.push(ActionInfo::SelfLoop);

    let mut rows = Vec::with_capacity(p + 1);
    for region in 0..p {
        let mut state_rows = Vec::with_capacity(enabled[region].len());
        for &action in &enabled[region] {
            if let Some(row) = row_of(action) {
                state_rows.push(StateAction {
                    action,
                    succs: row.iter().map(|&(succ, _, iv)| (succ, iv)).collect(),
                });
            }
        }
        rows.push(state_rows);
    }
    rows.push(vec![absorbing_self_loop(p, self_loop)]);

    IntervalMdp {
        states,
        actions,
        rows,
        targets: targets.iter().map(|t| t.iter().copied().collect()).collect(),
    }
}

/// Product of the mode-jump iMDP with the per-mode continuous iMDPs.
/// Product state id is `mode * (|R|+1) + region`; the continuous interval
/// factor always comes from the current mode.
pub fn product(
    jump: &JumpImdp,
    mode_imdps: &[IntervalMdp],
) -> Result<IntervalMdp, AbstractionError> {
    let first = &mode_imdps[0];
    let p1 = first.num_states();
    let num_targets = first.targets.len();
    for imdp in mode_imdps {
        if imdp.num_states() != p1 || imdp.targets != first.targets {
            return Err(AbstractionError::Mismatched(
                "all mode iMDPs must share partition and targets".into(),
            ));
        }
    }
    if jump.rows.len() != mode_imdps.len() {
        return Err(AbstractionError::Mismatched(format!(
            "jump process has {} modes, abstraction has {}",
            jump.rows.len(),
            mode_imdps.len()
        )));
    }
    let num_modes = mode_imdps.len();
    let num_jump_actions = jump.num_actions;

    let mut states = Vec::with_capacity(num_modes * p1);
    for mode in 0..num_modes {
        for st in &mode_imdps[mode].states {
            states.push(StateInfo {
                mode: Some(mode),
                region: st.region,
                labels: st.labels.clone(),
            });
        }
    }
    let mut actions = Vec::with_capacity(num_jump_actions * num_targets + 1);
    for l in 0..num_jump_actions {
        for target in 0..num_targets {
            actions.push(ActionInfo::Target {
                jump: Some(l),
                target,
            });
        }
    }
    let self_loop = actions.len();
    actions.push(ActionInfo::SelfLoop);

    let mut rows = Vec::with_capacity(num_modes * p1);
    for mode in 0..num_modes {
        for state in 0..p1 {
            let id = mode * p1 + state;
            if state == p1 - 1 {
                rows.push(vec![absorbing_self_loop(id, self_loop)]);
                continue;
            }
            let mut state_rows = Vec::new();
            for l in 0..num_jump_actions {
                for sa in &mode_imdps[mode].rows[state] {
                    let mut succs = Vec::new();
                    for &(mode2, jiv) in jump.successors(mode, l) {
                        for &(succ, civ) in &sa.succs {
                            let low = jiv.low * civ.low;
                            let high = (jiv.high * civ.high).min(1.0);
                            succs.push((mode2 * p1 + succ, ProbInterval::new(low, high)));
                        }
                    }
                    if !succs.is_empty() {
                        state_rows.push(StateAction {
                            action: l * num_targets + sa.action,
                            succs,
                        });
                    }
                }
            }
            rows.push(state_rows);
        }
    }

    Ok(IntervalMdp {
        states,
        actions,
        rows,
        targets: first.targets.clone(),
    })
}

/// Mode-agnostic abstraction for unknown jumps: actions enabled in every
/// mode, transition intervals replaced by the cross-mode interval hull.
pub fn robust_merge(
    partition: &Partition,
    targets: &[DVector<f64>],
    mode_transitions: &[ModeTransitions],
    robust_enabled: &[BTreeSet<usize>],
) -> IntervalMdp {
    let hull_rows: BTreeMap<usize, scenario::TransitionRow> = {
        let mut actions: BTreeSet<usize> = BTreeSet::new();
        for set in robust_enabled {
            actions.extend(set.iter().copied());
        }
        actions
            .into_iter()
            .filter_map(|action| {
                hull_row(mode_transitions, action).map(|row| (action, row))
            })
            .collect()
    };
    imdp_from_transitions(partition, targets, None, robust_enabled, |action| {
        hull_rows.get(&action)
    })
}

fn hull_row(
    mode_transitions: &[ModeTransitions],
    action: usize,
) -> Option<scenario::TransitionRow> {
    let rows: Vec<&scenario::TransitionRow> = mode_transitions
        .iter()
        .filter_map(|tr| tr.rows.get(&action))
        .collect();
    if rows.len() != mode_transitions.len() {
        // Enabled-set intersection should prevent this; be safe anyway.
        return None;
    }
    let mut merged: BTreeMap<usize, (u32, Option<ProbInterval>, usize)> = BTreeMap::new();
    for row in &rows {
        for &(succ, count, iv) in row.iter() {
            let entry = merged.entry(succ).or_insert((0, None, 0));
            entry.0 += count;
            entry.1 = Some(match entry.1 {
                Some(prev) => prev.hull(&iv),
                None => iv,
            });
            entry.2 += 1;
        }
    }
    Some(
        merged
            .into_iter()
            .map(|(succ, (count, iv, present_in))| {
                let mut iv = iv.expect("at least one mode contributes");
                if present_in < mode_transitions.len() {
                    // A mode never sampled this successor: its lower bound
                    // floor is zero.
                    iv = ProbInterval::new(0.0, iv.high);
                }
                (succ, count, iv)
            })
            .collect(),
    )
}
