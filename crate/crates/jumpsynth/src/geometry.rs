//! State-space partitioning, backward reachable sets, and enabled actions.
//!
//! Cells are axis-aligned boxes tiling the bounded domain, half-open with
//! the upper boundary of the domain closed. Backward reachable sets are kept
//! in H-representation; containment of a cell is decided by checking its
//! vertices against the half-spaces.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HyperRect, MjlsSpec, ModeDynamics};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("label rule '{rule}' box edge {edge} on axis {axis} is not aligned with the cell grid")]
    Misaligned {
        rule: String,
        axis: usize,
        edge: f64,
    },
    #[error("label rule '{rule}' box leaves the partition bounds")]
    RuleOutOfBounds { rule: String },
    #[error("state matrix is singular")]
    Singular,
    #[error("backward reachable sets with m > n are only supported for n <= 2 (got n = {0})")]
    UnsupportedDimension(usize),
    #[error("invalid partition: {0}")]
    Invalid(String),
}

/// Tolerance (in cell widths) for deciding that a rule box edge sits on a
/// cell boundary.
const ALIGN_TOL: f64 = 1e-7;
/// Slack for half-space membership tests.
pub const CONTAIN_TOL: f64 = 1e-9;

/// A proposition and the boxes of states it labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRule {
    pub name: String,
    pub boxes: Vec<HyperRect>,
}

/// Rectangular partition of a bounded domain plus one absorbing region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub bounds: HyperRect,
    pub counts: Vec<usize>,
    /// Label sets per region; index `num_regions()` is the absorbing region.
    pub labels: Vec<BTreeSet<String>>,
}

impl Partition {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn num_regions(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn absorbing_index(&self) -> usize {
        self.num_regions()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.bounds.hi[axis] - self.bounds.lo[axis]) / self.counts[axis] as f64
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for axis in (0..self.dim().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.counts[axis + 1];
        }
        strides
    }

    fn multi_index(&self, region: usize) -> Vec<usize> {
        let strides = self.strides();
        (0..self.dim())
            .map(|axis| region / strides[axis] % self.counts[axis])
            .collect()
    }

    /// Maps a continuous state to its region index, or the absorbing index
    /// for states outside the bounds. Interior boundaries belong to the
    /// higher-coordinate cell; the domain's upper faces are closed.
    pub fn label_state(&self, x: &DVector<f64>) -> usize {
        let strides = self.strides();
        let mut region = 0;
        for axis in 0..self.dim() {
            let (lo, hi) = (self.bounds.lo[axis], self.bounds.hi[axis]);
            let xi = x[axis];
            if xi < lo || xi > hi {
                return self.absorbing_index();
            }
            let w = self.cell_width(axis);
            let idx = (((xi - lo) / w).floor() as usize).min(self.counts[axis] - 1);
            region += idx * strides[axis];
        }
        region
    }

    /// The closed box of an in-bounds region.
    pub fn region_box(&self, region: usize) -> HyperRect {
        assert!(region < self.num_regions(), "absorbing region has no box");
        let idx = self.multi_index(region);
        let lo = (0..self.dim())
            .map(|a| self.bounds.lo[a] + idx[a] as f64 * self.cell_width(a))
            .collect();
        let hi = (0..self.dim())
            .map(|a| self.bounds.lo[a] + (idx[a] + 1) as f64 * self.cell_width(a))
            .collect();
        HyperRect::new(lo, hi)
    }

    pub fn region_center(&self, region: usize) -> DVector<f64> {
        self.region_box(region).center()
    }

    /// Target points at every cell center; target j belongs to region j.
    pub fn cell_centers(&self) -> Vec<DVector<f64>> {
        (0..self.num_regions())
            .map(|i| self.region_center(i))
            .collect()
    }

    pub fn region_labels(&self, region: usize) -> &BTreeSet<String> {
        &self.labels[region]
    }

    /// Regions carrying a proposition.
    pub fn regions_with_label(&self, name: &str) -> BTreeSet<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, set)| set.contains(name))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds the partition and assigns labels; every rule box must be a union
/// of whole cells.
pub fn build_partition(
    bounds: HyperRect,
    counts: Vec<usize>,
    label_rules: &[LabelRule],
) -> Result<Partition, GeometryError> {
    if bounds.dim() != counts.len() {
        return Err(GeometryError::Invalid(format!(
            "{} axes of bounds vs {} cell counts",
            bounds.dim(),
            counts.len()
        )));
    }
    if counts.iter().any(|c| *c == 0) || bounds.is_empty() {
        return Err(GeometryError::Invalid("empty partition".into()));
    }
    let mut partition = Partition {
        bounds,
        counts,
        labels: Vec::new(),
    };
    partition.labels = vec![BTreeSet::new(); partition.num_regions() + 1];

    for rule in label_rules {
        for rect in &rule.boxes {
            if rect.dim() != partition.dim() {
                return Err(GeometryError::Invalid(format!(
                    "rule '{}' box has dimension {}",
                    rule.name,
                    rect.dim()
                )));
            }
            let mut lo_idx = Vec::with_capacity(partition.dim());
            let mut hi_idx = Vec::with_capacity(partition.dim());
            for axis in 0..partition.dim() {
                let w = partition.cell_width(axis);
                for edge in [rect.lo[axis], rect.hi[axis]] {
                    let t = (edge - partition.bounds.lo[axis]) / w;
                    if (t - t.round()).abs() > ALIGN_TOL {
                        return Err(GeometryError::Misaligned {
                            rule: rule.name.clone(),
                            axis,
                            edge,
                        });
                    }
                    if t.round() < -0.5 || t.round() > partition.counts[axis] as f64 + 0.5 {
                        return Err(GeometryError::RuleOutOfBounds {
                            rule: rule.name.clone(),
                        });
                    }
                }
                lo_idx.push(((rect.lo[axis] - partition.bounds.lo[axis]) / w).round() as usize);
                hi_idx.push(((rect.hi[axis] - partition.bounds.lo[axis]) / w).round() as usize);
            }
            // Mark every cell inside the rule box.
            let mut cursor = lo_idx.clone();
            'cells: loop {
                if cursor.iter().zip(&hi_idx).all(|(c, h)| c < h) {
                    let strides = partition.strides();
                    let region: usize = cursor
                        .iter()
                        .zip(&strides)
                        .map(|(c, s)| c * s)
                        .sum();
                    partition.labels[region].insert(rule.name.clone());
                }
                for axis in (0..partition.dim()).rev() {
                    cursor[axis] += 1;
                    if cursor[axis] < hi_idx[axis] {
                        continue 'cells;
                    }
                    cursor[axis] = lo_idx[axis];
                }
                break;
            }
        }
    }
    Ok(partition)
}

/// Convex polytope in H-representation: normal . x <= offset per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polytope {
    pub halfspaces: Vec<(Vec<f64>, f64)>,
}

impl Polytope {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.halfspaces.iter().all(|(normal, offset)| {
            normal.iter().zip(x.iter()).map(|(n, xi)| n * xi).sum::<f64>() <= offset + CONTAIN_TOL
        })
    }
}

/// Backward reachable set of a target point under one mode's dynamics:
/// the states from which some admissible input lands exactly on `d`.
pub fn backward_reach(
    mode: &ModeDynamics,
    input_box: &HyperRect,
    d: &DVector<f64>,
) -> Result<Polytope, GeometryError> {
    let n = mode.state_dim();
    let m = mode.input_dim();
    let a_inv = mode
        .a
        .clone()
        .try_inverse()
        .ok_or(GeometryError::Singular)?;
    // x = c - M u with u ranging over the input box.
    let c = &a_inv * (d - &mode.q);
    let map = &a_inv * &mode.b;

    if m == n {
        let map_inv = map.try_inverse().ok_or(GeometryError::Singular)?;
        let mut halfspaces = Vec::with_capacity(2 * n);
        for i in 0..n {
            let row: DVector<f64> = map_inv.row(i).transpose();
            let anchor = row.dot(&c);
            halfspaces.push((row.iter().copied().collect(), anchor - input_box.lo[i]));
            halfspaces.push((
                row.iter().map(|v| -v).collect(),
                input_box.hi[i] - anchor,
            ));
        }
        return Ok(Polytope { halfspaces });
    }

    // m > n: the image of the box is a zonotope; emit its support half-spaces.
    zonotope_halfspaces(n, m, &c, &map, input_box)
}

fn zonotope_halfspaces(
    n: usize,
    m: usize,
    c: &DVector<f64>,
    map: &DMatrix<f64>,
    input_box: &HyperRect,
) -> Result<Polytope, GeometryError> {
    // Center and generators of x = c - M u over the box.
    let mid = DVector::from_iterator(
        m,
        input_box.lo.iter().zip(&input_box.hi).map(|(l, h)| 0.5 * (l + h)),
    );
    let center = c - map * &mid;
    let gens: Vec<DVector<f64>> = (0..m)
        .map(|j| {
            let half = 0.5 * (input_box.hi[j] - input_box.lo[j]);
            -half * DVector::from_iterator(n, map.column(j).iter().copied())
        })
        .collect();
    let support = |eta: &DVector<f64>| -> f64 {
        eta.dot(&center) + gens.iter().map(|g| eta.dot(g).abs()).sum::<f64>()
    };
    match n {
        1 => {
            let up = DVector::from_column_slice(&[1.0]);
            let dn = DVector::from_column_slice(&[-1.0]);
            Ok(Polytope {
                halfspaces: vec![(vec![1.0], support(&up)), (vec![-1.0], support(&dn))],
            })
        }
        2 => {
            let mut halfspaces = Vec::new();
            for g in &gens {
                let norm = g.norm();
                if norm < 1e-14 {
                    continue;
                }
                let eta = DVector::from_column_slice(&[-g[1] / norm, g[0] / norm]);
                for sign in [1.0, -1.0] {
                    let dir = sign * &eta;
                    halfspaces.push((dir.iter().copied().collect(), support(&dir)));
                }
            }
            if halfspaces.is_empty() {
                // Degenerate image: a single point.
                for i in 0..2 {
                    let mut e = DVector::zeros(2);
                    e[i] = 1.0;
                    halfspaces.push((e.iter().copied().collect(), support(&e)));
                    let neg = -e;
                    halfspaces.push((neg.iter().copied().collect(), support(&neg)));
                }
            }
            Ok(Polytope { halfspaces })
        }
        _ => Err(GeometryError::UnsupportedDimension(n)),
    }
}

/// Axis-aligned bounding box of the backward reachable set, by interval
/// arithmetic on x = c - M u.
pub fn backward_reach_bbox(
    mode: &ModeDynamics,
    input_box: &HyperRect,
    d: &DVector<f64>,
) -> Result<HyperRect, GeometryError> {
    let n = mode.state_dim();
    let a_inv = mode
        .a
        .clone()
        .try_inverse()
        .ok_or(GeometryError::Singular)?;
    let c = &a_inv * (d - &mode.q);
    let map = &a_inv * &mode.b;
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let (mut sub_lo, mut sub_hi) = (0.0f64, 0.0f64);
        for j in 0..mode.input_dim() {
            let coeff = map[(i, j)];
            let (a, b) = (coeff * input_box.lo[j], coeff * input_box.hi[j]);
            sub_lo += a.min(b);
            sub_hi += a.max(b);
        }
        lo.push(c[i] - sub_hi);
        hi.push(c[i] - sub_lo);
    }
    Ok(HyperRect::new(lo, hi))
}

/// True iff every vertex of the region's cell satisfies all half-spaces.
pub fn contains_region(poly: &Polytope, partition: &Partition, region: usize) -> bool {
    partition
        .region_box(region)
        .vertices()
        .iter()
        .all(|v| poly.contains(v))
}

/// Enabled actions per region for one mode: action j is enabled in region i
/// iff the cell is fully contained in the backward reachable set of target j.
pub fn enabled_actions(
    spec: &MjlsSpec,
    partition: &Partition,
    targets: &[DVector<f64>],
    mode: usize,
) -> Result<Vec<BTreeSet<usize>>, GeometryError> {
    let dynamics = &spec.modes[mode];
    let per_action: Result<Vec<Vec<usize>>, GeometryError> = targets
        .par_iter()
        .map(|d| {
            let poly = backward_reach(dynamics, &spec.input_box, d)?;
            let bbox = backward_reach_bbox(dynamics, &spec.input_box, d)?;
            Ok(candidate_regions(partition, &bbox)
                .into_iter()
                .filter(|&region| contains_region(&poly, partition, region))
                .collect())
        })
        .collect();
    let per_action = per_action?;
    let mut enabled = vec![BTreeSet::new(); partition.num_regions() + 1];
    for (action, regions) in per_action.iter().enumerate() {
        for &region in regions {
            enabled[region].insert(action);
        }
    }
    Ok(enabled)
}

/// Regions whose cells might be contained in the bounding box.
fn candidate_regions(partition: &Partition, bbox: &HyperRect) -> Vec<usize> {
    let dim = partition.dim();
    let mut ranges = Vec::with_capacity(dim);
    for axis in 0..dim {
        let w = partition.cell_width(axis);
        let lo = ((bbox.lo[axis] - partition.bounds.lo[axis]) / w - 1e-9).ceil().max(0.0);
        let hi = ((bbox.hi[axis] - partition.bounds.lo[axis]) / w + 1e-9).floor();
        let hi = hi.min(partition.counts[axis] as f64);
        if hi - lo < 1.0 {
            return Vec::new();
        }
        ranges.push(lo as usize..hi as usize);
    }
    let strides = partition.strides();
    let mut out = Vec::new();
    let mut cursor: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    'outer: loop {
        out.push(cursor.iter().zip(&strides).map(|(c, s)| c * s).sum());
        for axis in (0..dim).rev() {
            cursor[axis] += 1;
            if cursor[axis] < ranges[axis].end {
                continue 'outer;
            }
            cursor[axis] = ranges[axis].start;
        }
        break;
    }
    out
}

/// Actions enabled regardless of the mode: per-region intersection of the
/// per-mode enabled sets.
pub fn robust_enabled_actions(
    spec: &MjlsSpec,
    partition: &Partition,
    targets: &[DVector<f64>],
) -> Result<Vec<BTreeSet<usize>>, GeometryError> {
    let mut result: Option<Vec<BTreeSet<usize>>> = None;
    for mode in 0..spec.num_modes() {
        let sets = enabled_actions(spec, partition, targets, mode)?;
        result = Some(match result {
            None => sets,
            Some(acc) => acc
                .into_iter()
                .zip(sets)
                .map(|(a, b)| a.intersection(&b).copied().collect())
                .collect(),
        });
    }
    Ok(result.expect("at least one mode"))
}

/// Target points and the regions where each action is usable.
#[derive(Debug, Clone)]
pub struct ActionGrid {
    pub targets: Vec<DVector<f64>>,
    pub enabled: Vec<BTreeSet<usize>>,
}

impl ActionGrid {
    pub fn for_mode(
        spec: &MjlsSpec,
        partition: &Partition,
        mode: usize,
    ) -> Result<Self, GeometryError> {
        let targets = partition.cell_centers();
        let enabled = enabled_actions(spec, partition, &targets, mode)?;
        Ok(ActionGrid { targets, enabled })
    }

    pub fn robust(spec: &MjlsSpec, partition: &Partition) -> Result<Self, GeometryError> {
        let targets = partition.cell_centers();
        let enabled = robust_enabled_actions(spec, partition, &targets)?;
        Ok(ActionGrid { targets, enabled })
    }
}
