//! PAC transition-probability intervals from noise samples.
//!
//! For each (mode, action) pair, W i.i.d. noise samples are attached to the
//! action's target point and counted per successor region. The per-successor
//! interval inverts the two binomial tail equations so that the true
//! transition probability is covered with confidence at least 1 - beta.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::geometry::{self, Partition};
use crate::model::MjlsSpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("confidence beta must lie in (0,1), got {0}")]
    BadBeta(f64),
    #[error("out-count {n_out} exceeds sample count {w}")]
    BadCounts { w: usize, n_out: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Closed probability interval [low, high].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbInterval {
    pub low: f64,
    pub high: f64,
}

impl ProbInterval {
    pub fn new(low: f64, high: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&low) && (0.0..=1.0).contains(&high) && low <= high,
            "bad interval [{low},{high}]"
        );
        ProbInterval { low, high }
    }

    pub fn point(p: f64) -> Self {
        ProbInterval::new(p, p)
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.low && p <= self.high
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &ProbInterval) -> ProbInterval {
        ProbInterval::new(self.low.min(other.low), self.high.max(other.high))
    }
}

/// Per-region successor hit counts for one (mode, action).
#[derive(Debug, Clone)]
pub struct OutcomeCounts {
    /// Region index (including the absorbing index) -> number of samples.
    pub counts: BTreeMap<usize, u32>,
    pub total: usize,
}

impl OutcomeCounts {
    pub fn count(&self, region: usize) -> u32 {
        self.counts.get(&region).copied().unwrap_or(0)
    }
}

/// Labels each sampled successor d + w and tallies the regions hit.
pub fn count_outcomes(
    partition: &Partition,
    d: &DVector<f64>,
    samples: &[DVector<f64>],
) -> OutcomeCounts {
    let mut counts = BTreeMap::new();
    for w in samples {
        let succ = d + w;
        *counts.entry(partition.label_state(&succ)).or_insert(0u32) += 1;
    }
    OutcomeCounts {
        counts,
        total: samples.len(),
    }
}

const BISECT_TOL: f64 = 1e-9;

/// Binomial CDF P[Bin(w, 1-p) <= k], evaluated through the regularized
/// incomplete beta function (stable for large w).
fn tail(w: usize, k: usize, p: f64) -> f64 {
    debug_assert!(k < w);
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    beta_reg((w - k) as f64, (k + 1) as f64, p)
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    // f must be increasing with f(lo) <= 0 <= f(hi).
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// PAC interval for a transition probability observed with `n_out` of `w`
/// samples falling outside the successor region.
pub fn pac_interval(w: usize, n_out: usize, beta: f64) -> Result<ProbInterval, ScenarioError> {
    if !(0.0..1.0).contains(&beta) || beta <= 0.0 {
        return Err(ScenarioError::BadBeta(beta));
    }
    if n_out > w {
        return Err(ScenarioError::BadCounts { w, n_out });
    }
    let target = beta / (2.0 * w as f64);
    let low = if n_out == w {
        0.0
    } else {
        // P[Bin(w, 1-p) <= n_out] grows from 0 to 1 in p.
        bisect(0.0, 1.0, |p| tail(w, n_out, p) - target)
    };
    let high = if n_out == 0 {
        1.0
    } else {
        // 1 - P[Bin(w, 1-p) <= n_out - 1] = target.
        bisect(0.0, 1.0, |p| tail(w, n_out - 1, p) - (1.0 - target))
    };
    Ok(ProbInterval::new(low.min(high), high.max(low)))
}

/// One transition row: successor region, sample count, PAC interval.
pub type TransitionRow = Vec<(usize, u32, ProbInterval)>;

/// Transition intervals of a single mode. Because every action drives the
/// noiseless successor exactly onto its target point, one sample batch per
/// action serves all source regions where the action is enabled.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModeTransitions {
    pub mode: usize,
    pub w: usize,
    pub beta: f64,
    /// Enabled actions per region (absorbing entry empty).
    pub enabled: Vec<std::collections::BTreeSet<usize>>,
    /// Action index -> transition row. Present for every action enabled in
    /// at least one region.
    pub rows: BTreeMap<usize, TransitionRow>,
}

/// Fixed seed mixing so per-action sampling is independent of scheduling.
pub fn derive_seed(master: u64, mode: usize, action: usize) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(1 + mode as u64))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul(1 + action as u64));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Builds the PAC transition row of every enabled action of a mode.
pub fn build_mode_transitions(
    spec: &MjlsSpec,
    partition: &Partition,
    targets: &[DVector<f64>],
    mode: usize,
    w: usize,
    beta: f64,
    seed: u64,
) -> Result<ModeTransitions, ScenarioError> {
    let enabled = geometry::enabled_actions(spec, partition, targets, mode)?;
    let mut actions: Vec<usize> = enabled
        .iter()
        .flat_map(|set| set.iter().copied())
        .collect();
    actions.sort_unstable();
    actions.dedup();

    let rows: Result<Vec<(usize, TransitionRow)>, ScenarioError> = actions
        .par_iter()
        .map(|&action| {
            let samples = spec.draw_noise(mode, w, derive_seed(seed, mode, action))?;
            let counts = count_outcomes(partition, &targets[action], &samples);
            let row = row_from_counts(partition, &counts, beta)?;
            Ok((action, row))
        })
        .collect();

    Ok(ModeTransitions {
        mode,
        w,
        beta,
        enabled,
        rows: rows?.into_iter().collect(),
    })
}

/// Turns outcome counts into a transition row: one interval per successor
/// with a positive count, plus the absorbing successor which always carries
/// the remaining-mass bound.
pub fn row_from_counts(
    partition: &Partition,
    counts: &OutcomeCounts,
    beta: f64,
) -> Result<TransitionRow, ScenarioError> {
    let w = counts.total;
    let absorbing = partition.absorbing_index();
    let mut row = Vec::with_capacity(counts.counts.len() + 1);
    for (&region, &count) in &counts.counts {
        if region == absorbing {
            continue;
        }
        let interval = pac_interval(w, w - count as usize, beta)?;
        row.push((region, count, interval));
    }
    let absorbing_count = counts.count(absorbing);
    let interval = pac_interval(w, w - absorbing_count as usize, beta)?;
    row.push((absorbing, absorbing_count, interval));
    Ok(row)
}
