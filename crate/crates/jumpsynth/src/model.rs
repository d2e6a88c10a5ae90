//! Jump linear system models: per-mode affine dynamics, noise sources,
//! the mode-jump process, and the time-step grouping transformation.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::scenario::ProbInterval;

/// Determinant magnitude below which a state matrix is treated as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for the row-rank check on input matrices.
pub const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model syntax error: {0}")]
    Syntax(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mode {mode}: input matrix B is rank deficient (rank {rank} < {n})")]
    RankDeficient { mode: usize, rank: usize, n: usize },
    #[error("mode {mode}: state matrix A is singular (|det| = {det:.3e})")]
    SingularA { mode: usize, det: f64 },
    #[error("infeasible jump intervals at (mode {mode}, action {action}): {reason}")]
    InfeasibleJump {
        mode: usize,
        action: usize,
        reason: String,
    },
    #[error("noise error: {0}")]
    Noise(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Axis-aligned box, given by per-axis closed intervals.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct HyperRect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        HyperRect { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(xi, (l, h))| *xi >= *l && *xi <= *h)
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)),
        )
    }

    /// All 2^dim corner points.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            let v = DVector::from_iterator(
                d,
                (0..d).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }),
            );
            out.push(v);
        }
        out
    }
}

/// Affine dynamics of a single mode: x' = A x + B u + q + w.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl ModeDynamics {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Noiseless successor A x + B u + q.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.q
    }
}

/// Where the additive process noise of a mode comes from.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Gaussian {
        mean: DVector<f64>,
        std: DVector<f64>,
    },
    Empirical {
        path: PathBuf,
        samples: Vec<DVector<f64>>,
    },
    /// h-step aggregate produced by `group_steps`: h independent draws of the
    /// base source pushed through descending powers of A.
    Grouped {
        base: Box<NoiseSource>,
        push: Vec<DMatrix<f64>>,
    },
}

impl NoiseSource {
    pub fn dim(&self) -> usize {
        match self {
            NoiseSource::Gaussian { mean, .. } => mean.len(),
            NoiseSource::Empirical { samples, .. } => {
                samples.first().map(|s| s.len()).unwrap_or(0)
            }
            NoiseSource::Grouped { base, .. } => base.dim(),
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> DVector<f64> {
        match self {
            NoiseSource::Gaussian { mean, std } => DVector::from_iterator(
                mean.len(),
                mean.iter().zip(std.iter()).map(|(m, s)| {
                    if *s > 0.0 {
                        m + s * standard_normal(rng)
                    } else {
                        *m
                    }
                }),
            ),
            NoiseSource::Empirical { samples, .. } => {
                samples[rng.gen_range(0..samples.len())].clone()
            }
            NoiseSource::Grouped { base, push } => {
                let mut acc = DVector::zeros(self.dim());
                for p in push {
                    acc += p * base.draw(rng);
                }
                acc
            }
        }
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one value per call keeps draws independent of batching.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Interval MDP over the discrete modes, or nothing at all.
#[derive(Debug, Clone)]
pub enum JumpSpec {
    Controlled(JumpImdp),
    Unknown,
}

/// Interval transition function of the mode-jump process:
/// `rows[r][l]` lists (successor mode, interval).
#[derive(Debug, Clone)]
pub struct JumpImdp {
    pub num_actions: usize,
    pub rows: Vec<Vec<Vec<(usize, ProbInterval)>>>,
}

impl JumpImdp {
    pub fn successors(&self, mode: usize, action: usize) -> &[(usize, ProbInterval)] {
        &self.rows[mode][action]
    }
}

/// A Markov jump linear system: per-mode dynamics and noise, a shared input
/// box, and a description of the jump process.
#[derive(Debug, Clone)]
pub struct MjlsSpec {
    pub modes: Vec<ModeDynamics>,
    pub input_box: HyperRect,
    pub noise: Vec<NoiseSource>,
    pub jumps: JumpSpec,
}

impl MjlsSpec {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.modes[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.modes[0].input_dim()
    }

    /// Checks the standing assumptions: every B_i has full row rank, every
    /// A_i is invertible, and jump intervals admit a distribution.
    pub fn validate(self) -> Result<MjlsSpec, ModelError> {
        let n = self.state_dim();
        for (i, mode) in self.modes.iter().enumerate() {
            let det = mode.a.clone().determinant();
            if det.abs() <= SINGULAR_DET_TOL {
                return Err(ModelError::SingularA { mode: i, det });
            }
            let svd = mode.b.clone().svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            let rank = svd
                .singular_values
                .iter()
                .filter(|s| **s > RANK_REL_TOL * smax.max(1e-300))
                .count();
            if rank < n {
                return Err(ModelError::RankDeficient { mode: i, rank, n });
            }
        }
        if let JumpSpec::Controlled(jump) = &self.jumps {
            for (r, actions) in jump.rows.iter().enumerate() {
                for (l, row) in actions.iter().enumerate() {
                    let sum_lo: f64 = row.iter().map(|(_, iv)| iv.low).sum();
                    let sum_hi: f64 = row.iter().map(|(_, iv)| iv.high).sum();
                    if sum_lo > 1.0 + 1e-12 || sum_hi < 1.0 - 1e-12 {
                        return Err(ModelError::InfeasibleJump {
                            mode: r,
                            action: l,
                            reason: format!(
                                "sum of lows {sum_lo} and highs {sum_hi} cannot bracket 1"
                            ),
                        });
                    }
                }
            }
        }
        Ok(self)
    }

    /// Groups `h` consecutive time steps into one macro step, lifting the
    /// input dimension to m*h. `h = 1` is the identity.
    pub fn group_steps(&self, h: usize) -> MjlsSpec {
        assert!(h >= 1, "group factor must be positive");
        if h == 1 {
            return self.clone();
        }
        let n = self.state_dim();
        let m = self.input_dim();
        let mut modes = Vec::with_capacity(self.modes.len());
        let mut noise = Vec::with_capacity(self.modes.len());
        for (mode, src) in self.modes.iter().zip(&self.noise) {
            // Powers A^0 .. A^{h-1}.
            let mut powers = vec![DMatrix::identity(n, n)];
            for _ in 1..h {
                powers.push(powers.last().unwrap() * &mode.a);
            }
            let a_bar = powers.last().unwrap() * &mode.a;
            let mut b_bar = DMatrix::zeros(n, m * h);
            let mut q_bar = DVector::zeros(n);
            for j in 0..h {
                let block = &powers[h - 1 - j] * &mode.b;
                b_bar.view_mut((0, j * m), (n, m)).copy_from(&block);
                q_bar += &powers[j] * &mode.q;
            }
            modes.push(ModeDynamics {
                a: a_bar,
                b: b_bar,
                q: q_bar,
            });
            noise.push(NoiseSource::Grouped {
                base: Box::new(src.clone()),
                push: (0..h).map(|j| powers[h - 1 - j].clone()).collect(),
            });
        }
        let mut lo = Vec::with_capacity(m * h);
        let mut hi = Vec::with_capacity(m * h);
        for _ in 0..h {
            lo.extend_from_slice(&self.input_box.lo);
            hi.extend_from_slice(&self.input_box.hi);
        }
        MjlsSpec {
            modes,
            input_box: HyperRect::new(lo, hi),
            noise,
            jumps: self.jumps.clone(),
        }
    }

    /// Draws `count` i.i.d. noise vectors for a mode; deterministic in `seed`.
    pub fn draw_noise(
        &self,
        mode: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<DVector<f64>>, ModelError> {
        if mode >= self.num_modes() {
            return Err(ModelError::Invalid(format!("no mode {mode}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = &self.noise[mode];
        Ok((0..count).map(|_| src.draw(&mut rng)).collect())
    }
}

impl fmt::Display for MjlsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MJLS: {} mode(s), n={}, m={}",
            self.num_modes(),
            self.state_dim(),
            self.input_dim()
        )
    }
}

// ---------------------------------------------------------------------------
// Model document parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n: usize,
    m: usize,
    modes: Vec<RawMode>,
    input_box: Vec<[f64; 2]>,
    noise: RawNoiseField,
    jumps: RawJumps,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    q: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNoiseField {
    Shared(RawNoise),
    PerMode(Vec<RawNoise>),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawNoise {
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Empirical { path: String },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawJumps {
    Controlled {
        actions: usize,
        intervals: Vec<(usize, usize, usize, f64, f64)>,
    },
    Unknown,
}

/// Parses a model document (UTF-8 JSON text). Empirical noise paths are
/// resolved relative to `base_dir` when given.
pub fn parse_model_with_base(
    text: &str,
    base_dir: Option<&Path>,
) -> Result<MjlsSpec, ModelError> {
    let raw: RawModel =
        serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    let (n, m) = (raw.n, raw.m);
    if raw.modes.is_empty() {
        return Err(ModelError::Invalid("model must declare at least one mode".into()));
    }
    let mut modes = Vec::with_capacity(raw.modes.len());
    for (i, mode) in raw.modes.iter().enumerate() {
        if mode.a.len() != n * n {
            return Err(ModelError::DimensionMismatch(format!(
                "mode {i}: A has {} entries, expected {}",
                mode.a.len(),
                n * n
            )));
        }
        if mode.b.len() != n * m {
            return Err(ModelError::DimensionMismatch(format!(
                "mode {i}: B has {} entries, expected {}",
                mode.b.len(),
                n * m
            )));
        }
        if mode.q.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "mode {i}: q has {} entries, expected {n}",
                mode.q.len()
            )));
        }
        modes.push(ModeDynamics {
            a: DMatrix::from_row_slice(n, n, &mode.a),
            b: DMatrix::from_row_slice(n, m, &mode.b),
            q: DVector::from_column_slice(&mode.q),
        });
    }
    if raw.input_box.len() != m {
        return Err(ModelError::DimensionMismatch(format!(
            "input_box has {} axes, expected {m}",
            raw.input_box.len()
        )));
    }
    let input_box = HyperRect::new(
        raw.input_box.iter().map(|p| p[0]).collect(),
        raw.input_box.iter().map(|p| p[1]).collect(),
    );
    if input_box.is_empty() {
        return Err(ModelError::Invalid("input_box is empty (lo > hi)".into()));
    }

    let raw_noise = match raw.noise {
        RawNoiseField::Shared(one) => vec![one; modes.len()],
        RawNoiseField::PerMode(list) => {
            if list.len() != modes.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "{} noise entries for {} modes",
                    list.len(),
                    modes.len()
                )));
            }
            list
        }
    };
    let noise = raw_noise
        .into_iter()
        .map(|rn| convert_noise(rn, n, base_dir))
        .collect::<Result<Vec<_>, _>>()?;

    let jumps = match raw.jumps {
        RawJumps::Unknown => JumpSpec::Unknown,
        RawJumps::Controlled { actions, intervals } => {
            if actions == 0 {
                return Err(ModelError::Invalid("controlled jumps need at least one action".into()));
            }
            let mut rows = vec![vec![Vec::new(); actions]; modes.len()];
            for (r, l, r2, low, high) in intervals {
                if r >= modes.len() || r2 >= modes.len() || l >= actions {
                    return Err(ModelError::Invalid(format!(
                        "jump interval ({r},{l},{r2}) out of range"
                    )));
                }
                if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
                    return Err(ModelError::InfeasibleJump {
                        mode: r,
                        action: l,
                        reason: format!("bad interval [{low},{high}]"),
                    });
                }
                rows[r][l].push((r2, ProbInterval::new(low, high)));
            }
            JumpSpec::Controlled(JumpImdp {
                num_actions: actions,
                rows,
            })
        }
    };

    Ok(MjlsSpec {
        modes,
        input_box,
        noise,
        jumps,
    })
}

impl Clone for RawNoise {
    fn clone(&self) -> Self {
        match self {
            RawNoise::Gaussian { mean, std } => RawNoise::Gaussian {
                mean: mean.clone(),
                std: std.clone(),
            },
            RawNoise::Empirical { path } => RawNoise::Empirical { path: path.clone() },
        }
    }
}

fn convert_noise(
    raw: RawNoise,
    n: usize,
    base_dir: Option<&Path>,
) -> Result<NoiseSource, ModelError> {
    match raw {
        RawNoise::Gaussian { mean, std } => {
            if mean.len() != n || std.len() != n {
                return Err(ModelError::DimensionMismatch(format!(
                    "gaussian noise has dimension {}/{}, expected {n}",
                    mean.len(),
                    std.len()
                )));
            }
            if std.iter().any(|s| *s < 0.0) {
                return Err(ModelError::Noise("negative std".into()));
            }
            Ok(NoiseSource::Gaussian {
                mean: DVector::from_column_slice(&mean),
                std: DVector::from_column_slice(&std),
            })
        }
        RawNoise::Empirical { path } => {
            let resolved = match base_dir {
                Some(dir) => dir.join(&path),
                None => PathBuf::from(&path),
            };
            let text = std::fs::read_to_string(&resolved).map_err(|e| {
                ModelError::Noise(format!("cannot read {}: {e}", resolved.display()))
            })?;
            let mut samples = Vec::new();
            for (ln, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| {
                        ModelError::Noise(format!(
                            "{} line {}: {e}",
                            resolved.display(),
                            ln + 1
                        ))
                    })?;
                if row.len() != n {
                    return Err(ModelError::Noise(format!(
                        "{} line {}: {} columns, expected {n}",
                        resolved.display(),
                        ln + 1,
                        row.len()
                    )));
                }
                samples.push(DVector::from_column_slice(&row));
            }
            if samples.is_empty() {
                return Err(ModelError::Noise(format!(
                    "{}: no samples",
                    resolved.display()
                )));
            }
            Ok(NoiseSource::Empirical {
                path: resolved,
                samples,
            })
        }
    }
}

/// Parses a model document from text (empirical paths relative to the cwd).
pub fn parse_model(text: &str) -> Result<MjlsSpec, ModelError> {
    parse_model_with_base(text, None)
}

/// Reads and parses a model file; empirical noise paths resolve relative to
/// the file's directory.
pub fn parse_model_file(path: &Path) -> Result<MjlsSpec, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Syntax(format!("cannot read {}: {e}", path.display())))?;
    parse_model_with_base(&text, path.parent())
}
