//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use jumpsynth::abstraction::IntervalMdp;
use jumpsynth::checker::{self, AdvDir, Objective};
use jumpsynth::cli::{self, RunConfig};
use jumpsynth::geometry::{build_partition, robust_enabled_actions, Partition};
use jumpsynth::model::{parse_model_file, HyperRect, MjlsSpec};
use jumpsynth::pctl::{self, Formula, PathFormula, StateFormula};
use jumpsynth::runtime::{self, Controller, Monitor, TrueJumps};
use jumpsynth::scenario::{pac_interval, ProbInterval};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Shared abstraction cache so the expensive temperature abstractions are
/// built once per `cargo test` invocation.
fn shared_out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("jumpsynth-acceptance").join(tag);
    std::fs::create_dir_all(&dir).expect("create out dir");
    dir
}

fn pass(criterion: u32, what: &str) {
    println!("[criterion {criterion}] {what}: PASS");
}

// ---------------------------------------------------------------------------
// Criterion 1: PAC interval coverage against analytic Gaussian probabilities
// ---------------------------------------------------------------------------

fn gaussian_cell_prob(cell: &HyperRect, mean: &[f64], std: f64) -> f64 {
    use statrs::function::erf::erf;
    let mut p = 1.0;
    for i in 0..mean.len() {
        let z = |x: f64| (x - mean[i]) / (std * std::f64::consts::SQRT_2);
        p *= 0.5 * (erf(z(cell.hi[i])) - erf(z(cell.lo[i])));
    }
    p
}

#[test]
fn criterion_1_pac_interval_coverage() {
    let start = Instant::now();
    let partition = build_partition(
        HyperRect::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        vec![10, 10],
        &[],
    )
    .unwrap();
    let std = 0.2;
    let target = [0.07, -0.13]; // generic point, off cell centers
    let (w, beta, draws) = (100usize, 0.1, 500usize);

    // Cells carrying non-negligible mass, with their exact probabilities.
    let tracked: Vec<(usize, f64)> = (0..partition.num_regions())
        .filter_map(|region| {
            let p = gaussian_cell_prob(&partition.region_box(region), &target, std);
            (p > 0.002).then_some((region, p))
        })
        .collect();
    assert!(tracked.len() >= 4, "expected several tracked cells");

    let mut covered = vec![0u32; tracked.len()];
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + draw as u64);
        let mut counts = vec![0u32; partition.num_regions() + 1];
        for _ in 0..w {
            let x = DVector::from_column_slice(&[
                target[0] + std * box_muller(&mut rng),
                target[1] + std * box_muller(&mut rng),
            ]);
            counts[partition.label_state(&x)] += 1;
        }
        for (t, &(region, p_true)) in tracked.iter().enumerate() {
            let n_out = w - counts[region] as usize;
            let iv = pac_interval(w, n_out, beta).unwrap();
            if iv.contains(p_true) {
                covered[t] += 1;
            }
        }
    }
    for (t, &(region, p_true)) in tracked.iter().enumerate() {
        let freq = covered[t] as f64 / draws as f64;
        assert!(
            freq >= 0.86,
            "cell {region} (p={p_true:.4}) covered only {freq:.3}"
        );
    }
    assert!(start.elapsed().as_secs() < 60, "criterion 1 too slow");
    pass(1, "PAC interval coverage >= 0.86 on analytic Gaussian grid");
}

fn box_muller(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Criterion 2: interval endpoints against an independent bisection oracle
// ---------------------------------------------------------------------------

/// P[#out <= k] when each of `w` samples lands outside with probability
/// 1 - p; direct log-space binomial sum, no shared code with the library.
fn binom_cdf_out(w: usize, k: usize, p: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if p <= 0.0 {
        return if k >= w { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut total = 0.0;
    for i in 0..=k.min(w) {
        let ln_c = ln_gamma(w as f64 + 1.0)
            - ln_gamma(i as f64 + 1.0)
            - ln_gamma((w - i) as f64 + 1.0);
        total += (ln_c + i as f64 * (1.0 - p).ln() + (w - i) as f64 * p.ln()).exp();
    }
    total.min(1.0)
}

fn oracle_bisect(mut f: impl FnMut(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_2_theorem_endpoints() {
    let start = Instant::now();
    let beta = 0.01;
    for w in [25usize, 100, 400] {
        // Exact endpoints.
        let all_out = pac_interval(w, w, beta).unwrap();
        assert_eq!(all_out.low, 0.0, "low must be exactly 0 at n_out = W");
        let none_out = pac_interval(w, 0, beta).unwrap();
        assert_eq!(none_out.high, 1.0, "high must be exactly 1 at n_out = 0");

        let level = beta / (2.0 * w as f64);
        let grid = [1, 2, w / 8, w / 4, w / 2, 3 * w / 4, w - 1];
        for &n_out in &grid {
            let iv = pac_interval(w, n_out, beta).unwrap();
            // low solves  sum_{i<=n_out} C(w,i)(1-p)^i p^(w-i) = beta/(2w),
            // which is increasing in p.
            let low_oracle = oracle_bisect(|p| binom_cdf_out(w, n_out, p), level);
            assert!(
                (iv.low - low_oracle).abs() < 1e-7,
                "w={w} n_out={n_out}: low {} vs oracle {low_oracle}",
                iv.low
            );
            if n_out > 0 {
                let high_oracle =
                    oracle_bisect(|p| binom_cdf_out(w, n_out - 1, p), 1.0 - level);
                assert!(
                    (iv.high - high_oracle).abs() < 1e-7,
                    "w={w} n_out={n_out}: high {} vs oracle {high_oracle}",
                    iv.high
                );
            }
        }
    }
    assert!(start.elapsed().as_secs() < 10, "criterion 2 too slow");
    pass(2, "interval endpoints exact, interior roots within 1e-7 of oracle");
}

// ---------------------------------------------------------------------------
// Criterion 3: robust enabled actions against per-mode LP feasibility
// ---------------------------------------------------------------------------

fn lp_reaches(mode_a: &DMatrix<f64>, mode_b: &DMatrix<f64>, q: &DVector<f64>,
              input_box: &HyperRect, vertex: &DVector<f64>, target: &DVector<f64>) -> bool {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let c = target - mode_a * vertex - q;
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..mode_b.ncols())
        .map(|j| pb.add_var(1.0, (input_box.lo[j], input_box.hi[j])))
        .collect();
    for i in 0..mode_b.nrows() {
        let coeffs: Vec<_> = vars
            .iter()
            .enumerate()
            .map(|(j, &v)| (v, mode_b[(i, j)]))
            .collect();
        pb.add_constraint(coeffs, ComparisonOp::Eq, c[i]);
    }
    pb.solve().is_ok()
}

fn random_invertible(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let m: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.5..1.5));
        if m.determinant().abs() > 0.3 {
            return m;
        }
    }
}

fn random_two_mode_system(rng: &mut ChaCha8Rng) -> MjlsSpec {
    let mut modes = Vec::new();
    for _ in 0..2 {
        let a = random_invertible(rng);
        let b = random_invertible(rng);
        let q = DVector::from_fn(2, |_, _| rng.gen_range(-0.2..0.2));
        modes.push(jumpsynth::model::ModeDynamics { a, b, q });
    }
    MjlsSpec {
        modes,
        input_box: HyperRect::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
        noise: vec![
            jumpsynth::model::NoiseSource::Gaussian {
                mean: DVector::zeros(2),
                std: DVector::from_element(2, 0.1),
            };
            2
        ],
        jumps: jumpsynth::model::JumpSpec::Unknown,
    }
}

#[test]
fn criterion_3_backward_reachability_intersection() {
    let start = Instant::now();
    let temperature = parse_model_file(&repo_path("models/temperature.json"))
        .unwrap()
        .validate()
        .unwrap();
    let temp_partition = build_partition(
        HyperRect::new(vec![18.6, 18.6], vec![26.6, 26.6]),
        vec![20, 20],
        &[],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut systems: Vec<(MjlsSpec, Partition)> = vec![(temperature, temp_partition)];
    for _ in 0..3 {
        let spec = random_two_mode_system(&mut rng);
        let partition = build_partition(
            HyperRect::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            vec![8, 8],
            &[],
        )
        .unwrap();
        systems.push((spec, partition));
    }

    let mut mismatches = 0;
    let mut probes = 0;
    for (spec, partition) in &systems {
        let targets = partition.cell_centers();
        let robust = robust_enabled_actions(spec, partition, &targets).unwrap();
        for _ in 0..50 {
            probes += 1;
            let region = rng.gen_range(0..partition.num_regions());
            let action = rng.gen_range(0..targets.len());
            let enabled = robust[region].contains(&action);
            // Oracle: simultaneous LP feasibility of every cell vertex in
            // every mode.
            let feasible = spec.modes.iter().all(|mode| {
                partition.region_box(region).vertices().iter().all(|v| {
                    lp_reaches(&mode.a, &mode.b, &mode.q, &spec.input_box, v, &targets[action])
                })
            });
            if enabled != feasible {
                mismatches += 1;
                eprintln!("mismatch: region {region} action {action} enabled={enabled}");
            }
        }
    }
    assert_eq!(mismatches, 0, "{mismatches}/{probes} probes disagree");
    assert!(start.elapsed().as_secs() < 30, "criterion 3 too slow");
    pass(3, "robust enabled actions match per-mode LP feasibility on 200 probes");
}

// ---------------------------------------------------------------------------
// Criterion 4: robust value iteration against LP and brute-force oracles
// ---------------------------------------------------------------------------

fn lp_expectation(row: &[(usize, ProbInterval)], values: &[f64], dir: AdvDir) -> f64 {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut pb = Problem::new(match dir {
        AdvDir::Minimize => OptimizationDirection::Minimize,
        AdvDir::Maximize => OptimizationDirection::Maximize,
    });
    let vars: Vec<_> = row
        .iter()
        .map(|(s, iv)| pb.add_var(values[*s], (iv.low, iv.high)))
        .collect();
    pb.add_constraint(
        vars.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
        ComparisonOp::Eq,
        1.0,
    );
    pb.solve().expect("feasible row").objective()
}

fn random_row(rng: &mut impl Rng, n: usize) -> Vec<(usize, ProbInterval)> {
    loop {
        let row: Vec<(usize, ProbInterval)> = (0..n)
            .map(|s| {
                let low: f64 = rng.gen_range(0.0..0.8 / n as f64);
                let high = (low + rng.gen_range(0.0..0.9)).min(1.0);
                (s, ProbInterval::new(low, high))
            })
            .collect();
        let sl: f64 = row.iter().map(|(_, iv)| iv.low).sum();
        let sh: f64 = row.iter().map(|(_, iv)| iv.high).sum();
        if sl <= 1.0 && sh >= 1.0 {
            return row;
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

/// Worst-case expectation by enumerating every saturation order (all basic
/// solutions of the inner LP appear among them).
fn vertex_min(row: &[(usize, ProbInterval)], values: &[f64]) -> f64 {
    let idx: Vec<usize> = (0..row.len()).collect();
    let sum_low: f64 = row.iter().map(|(_, iv)| iv.low).sum();
    let mut best = f64::INFINITY;
    for order in permutations(&idx) {
        let mut residual = 1.0 - sum_low;
        let mut e: f64 = row.iter().map(|(s, iv)| iv.low * values[*s]).sum();
        for &i in &order {
            let extra = residual.min(row[i].1.width()).max(0.0);
            e += extra * values[row[i].0];
            residual -= extra;
        }
        best = best.min(e);
    }
    best
}

struct TinyImdp {
    /// rows[state] -> list of action rows (transient states only).
    rows: Vec<Vec<Vec<(usize, ProbInterval)>>>,
    num_states: usize, // last state is the goal, absorbing
}

fn random_tiny_imdp(rng: &mut impl Rng) -> TinyImdp {
    let num_states = 4;
    let mut rows = Vec::new();
    for _ in 0..num_states - 1 {
        let num_actions = rng.gen_range(1..=2);
        let mut state_rows = Vec::new();
        for _ in 0..num_actions {
            let succ_count = rng.gen_range(2..=3);
            let mut succs: Vec<usize> = (0..num_states).collect();
            succs.shuffle(rng);
            succs.truncate(succ_count);
            succs.sort_unstable();
            loop {
                let row: Vec<(usize, ProbInterval)> = succs
                    .iter()
                    .map(|&t| {
                        let low: f64 = rng.gen_range(0.0..0.5);
                        let high = (low + rng.gen_range(0.1..0.8)).min(1.0);
                        (t, ProbInterval::new(low, high))
                    })
                    .collect();
                let sl: f64 = row.iter().map(|(_, iv)| iv.low).sum();
                let sh: f64 = row.iter().map(|(_, iv)| iv.high).sum();
                if sl <= 1.0 && sh >= 1.0 {
                    state_rows.push(row);
                    break;
                }
            }
        }
        rows.push(state_rows);
    }
    TinyImdp { rows, num_states }
}

/// Value of one explicit time-varying policy under the dynamic vertex
/// adversary (backward induction).
fn policy_game_value(imdp: &TinyImdp, policy: &[Vec<usize>], k: usize) -> Vec<f64> {
    let goal = imdp.num_states - 1;
    let mut v: Vec<f64> = (0..imdp.num_states)
        .map(|s| if s == goal { 1.0 } else { 0.0 })
        .collect();
    for t in 0..k {
        let mut next = vec![0.0; imdp.num_states];
        next[goal] = 1.0;
        for s in 0..goal {
            let a = policy[t][s];
            next[s] = vertex_min(&imdp.rows[s][a], &v);
        }
        v = next;
    }
    v
}

/// Exhaustive max over all time-varying policies.
fn brute_force_game(imdp: &TinyImdp, k: usize) -> Vec<f64> {
    let goal = imdp.num_states - 1;
    let per_step: Vec<Vec<Vec<usize>>> = {
        // All action assignments for the transient states.
        let mut assignments: Vec<Vec<usize>> = vec![vec![]];
        for s in 0..goal {
            let n = imdp.rows[s].len();
            assignments = assignments
                .into_iter()
                .flat_map(|base| {
                    (0..n).map(move |a| {
                        let mut v = base.clone();
                        v.push(a);
                        v
                    })
                })
                .collect();
        }
        vec![assignments; k]
    };
    // All combinations over time steps.
    let mut policies: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for step in per_step {
        policies = policies
            .into_iter()
            .flat_map(|base| {
                step.iter().map(move |choice| {
                    let mut v = base.clone();
                    v.push(choice.clone());
                    v
                })
            })
            .collect();
    }
    let mut best = vec![f64::NEG_INFINITY; imdp.num_states];
    for policy in &policies {
        let v = policy_game_value(imdp, policy, k);
        for s in 0..imdp.num_states {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

#[test]
fn criterion_4_value_iteration_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // Part 1: 1000 random interval rows against the LP solver.
    for _ in 0..1000 {
        let n = rng.gen_range(2..7);
        let row = random_row(&mut rng, n);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        for dir in [AdvDir::Minimize, AdvDir::Maximize] {
            let fast = checker::robust_expectation(&row, &values, dir).unwrap();
            let lp = lp_expectation(&row, &values, dir);
            assert!((fast - lp).abs() < 1e-8, "{fast} vs {lp}");
        }
    }

    // Part 2: 50 random tiny iMDPs against exhaustive policy enumeration
    // with a vertex-enumerating adversary.
    use jumpsynth::abstraction::{ActionInfo, StateAction, StateInfo};
    for _ in 0..50 {
        let tiny = random_tiny_imdp(&mut rng);
        let k = rng.gen_range(1..=3);
        let oracle = brute_force_game(&tiny, k);

        let goal = tiny.num_states - 1;
        let states = (0..tiny.num_states)
            .map(|region| StateInfo {
                mode: None,
                region,
                labels: if region == goal {
                    ["goal".to_string()].into_iter().collect()
                } else {
                    Default::default()
                },
            })
            .collect();
        let mut rows: Vec<Vec<StateAction>> = tiny
            .rows
            .iter()
            .map(|state_rows| {
                state_rows
                    .iter()
                    .enumerate()
                    .map(|(a, succs)| StateAction {
                        action: a,
                        succs: succs.clone(),
                    })
                    .collect()
            })
            .collect();
        rows.push(vec![StateAction {
            action: 2,
            succs: vec![(goal, ProbInterval::point(1.0))],
        }]);
        let imdp = IntervalMdp {
            states,
            actions: vec![
                ActionInfo::Target { jump: None, target: 0 },
                ActionInfo::Target { jump: None, target: 1 },
                ActionInfo::SelfLoop,
            ],
            rows,
            targets: vec![vec![0.0], vec![1.0]],
        };
        let phi1: BTreeSet<usize> = (0..tiny.num_states).collect();
        let phi2: BTreeSet<usize> = [goal].into_iter().collect();
        let (v, _) =
            checker::check_bounded_until(&imdp, &phi1, &phi2, k as u32, Objective::MaxLower)
                .unwrap();
        for s in 0..tiny.num_states {
            assert!(
                (v[s] - oracle[s]).abs() < 1e-8,
                "state {s}: {} vs brute force {}",
                v[s],
                oracle[s]
            );
        }
    }
    assert!(start.elapsed().as_secs() < 120, "criterion 4 too slow");
    pass(4, "value iteration matches LP and exhaustive-enumeration oracles");
}

// ---------------------------------------------------------------------------
// Criteria 5/6/7/9 share the temperature pipeline
// ---------------------------------------------------------------------------

fn temperature_config(product: bool) -> RunConfig {
    let name = if product {
        "configs/temperature.json"
    } else {
        "configs/temperature_robust.json"
    };
    let mut cfg = RunConfig::from_file(&repo_path(name)).unwrap();
    cfg.samples = 1600;
    cfg.rounds = 1;
    cfg.seed = 1;
    cfg
}

fn simulate_from_cell(
    result: &cli::PipelineResult,
    prob: &checker::ProbResult,
    region: usize,
    jumps: &TrueJumps,
    trials: u64,
    seed: u64,
) -> f64 {
    let path: PathFormula = match pctl::parse_formula(&prob.formula).unwrap() {
        Formula::State(StateFormula::Prob { path, .. }) => *path,
        Formula::Path(p) => p,
        _ => panic!("not a probability formula"),
    };
    let monitor = Monitor::from_path(&result.prep.partition, &path).unwrap();
    let controller = Controller {
        spec: &result.prep.spec,
        partition: &result.prep.partition,
        imdp: &result.imdp,
        policy: &prob.policy,
        product: result.product,
    };
    let x0 = result.prep.partition.region_center(region);
    let report = runtime::simulate(&controller, &monitor, jumps, &x0, 0, trials, seed).unwrap();
    report.frequency
}

#[test]
fn criterion_5_temperature_product_benchmark() {
    let start = Instant::now();
    let cfg = temperature_config(true);
    let out = shared_out_dir("c5");
    let result = cli::run_pipeline(&cfg, &out).unwrap();
    let prob = result.probs.last().unwrap();
    let partition = &result.prep.partition;
    let p = partition.num_regions();

    // Qualitative pattern: >0.5 lower bounds exist and are confined to
    // cells whose rooms avoid the critical bands (<20, >25).
    let mut high_cells = Vec::new();
    for region in 0..p {
        let v = prob.values[region]; // mode 0 block
        if v > 0.5 {
            high_cells.push(region);
            let c = partition.region_center(region);
            assert!(
                c[0] > 20.0 && c[0] < 25.0 && c[1] > 20.0 && c[1] < 25.0,
                "cell {region} at ({},{}) has value {v} in a critical band",
                c[0],
                c[1]
            );
        }
    }
    assert!(
        high_cells.len() >= 50,
        "only {} cells exceed 0.5",
        high_cells.len()
    );

    // Closed-loop soundness at 20 sampled initial cells spanning the value
    // range: empirical frequency >= lower bound - 0.02.
    let spec = &result.prep.spec;
    let jumps = match &spec.jumps {
        jumpsynth::model::JumpSpec::Controlled(j) => TrueJumps::midpoints(j),
        _ => unreachable!(),
    };
    let mut by_value: Vec<usize> = (0..p).filter(|&r| prob.values[r] > 1e-6).collect();
    by_value.sort_by(|&a, &b| prob.values[a].total_cmp(&prob.values[b]));
    let picks: Vec<usize> = (0..20)
        .map(|i| by_value[i * (by_value.len() - 1) / 19])
        .collect();
    for (i, &region) in picks.iter().enumerate() {
        let bound = prob.values[region];
        let freq = simulate_from_cell(&result, prob, region, &jumps, 10_000, 100 + i as u64);
        assert!(
            freq >= bound - 0.02,
            "cell {region}: frequency {freq:.4} under bound {bound:.4}"
        );
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 10.0, "criterion 5 took {minutes:.1} min");
    pass(5, "temperature product pipeline sound and qualitatively correct");
}

#[test]
fn criterion_6_robust_temperature_variant() {
    let start = Instant::now();
    let product_cfg = temperature_config(true);
    let robust_cfg = temperature_config(false);
    let product = cli::run_pipeline(&product_cfg, &shared_out_dir("c6p")).unwrap();
    let robust = cli::run_pipeline(&robust_cfg, &shared_out_dir("c6")).unwrap();
    assert!(product.product && !robust.product);

    // >= 10x fewer transitions.
    let ratio =
        product.imdp.num_transitions() as f64 / robust.imdp.num_transitions() as f64;
    assert!(ratio >= 10.0, "transition ratio only {ratio:.1}");

    // State-wise: robust lower bounds never exceed the product bounds.
    let p = robust.prep.partition.num_regions();
    let rv = &robust.probs.last().unwrap().values;
    let pv = &product.probs.last().unwrap().values;
    for region in 0..p {
        for mode in 0..2 {
            let product_bound = pv[mode * (p + 1) + region];
            assert!(
                rv[region] <= product_bound + 1e-6,
                "region {region}: robust {} > product(mode {mode}) {}",
                rv[region],
                product_bound
            );
        }
    }

    // Values > 0.5 only when neither room starts below the goal band.
    let partition = &robust.prep.partition;
    for region in 0..p {
        if rv[region] > 0.5 {
            let c = partition.region_center(region);
            assert!(
                c[0] >= 22.0 && c[1] >= 22.0,
                "region {region} at ({},{}) has robust value {} with a room below the goal band",
                c[0],
                c[1],
                rv[region]
            );
        }
    }

    // Adversarial scripted mode sequences stay above bound - 0.02.
    let prob = robust.probs.last().unwrap();
    let scripts = [
        vec![0],
        vec![1],
        vec![0, 1],
        vec![1, 0],
        vec![0, 0, 1, 1],
        vec![1, 1, 1, 0],
    ];
    let mut by_value: Vec<usize> = (0..p).filter(|&r| rv[r] > 0.05).collect();
    by_value.sort_by(|&a, &b| rv[a].total_cmp(&rv[b]));
    let picks: Vec<usize> = (0..5)
        .map(|i| by_value[i * (by_value.len() - 1) / 4])
        .collect();
    for (i, script) in scripts.iter().enumerate() {
        for (j, &region) in picks.iter().enumerate() {
            let bound = rv[region];
            let freq = simulate_from_cell(
                &robust,
                prob,
                region,
                &TrueJumps::Script(script.clone()),
                4_000,
                7000 + (i * 10 + j) as u64,
            );
            assert!(
                freq >= bound - 0.02,
                "script {script:?} cell {region}: frequency {freq:.4} under bound {bound:.4}"
            );
        }
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 10.0, "criterion 6 took {minutes:.1} min");
    pass(6, "robust variant smaller, more conservative, adversary-sound");
}

#[test]
fn criterion_7_rich_nested_formula() {
    let start = Instant::now();
    let mut cfg = temperature_config(true);
    cfg.formula =
        "P>=0.6 [ X P<=0.5 [ (!Tc) U<=31 (Tl | Tc) ] ] & P>=0.9 [ (!Tc) U<=32 Tg ]".into();
    let result = cli::run_pipeline(&cfg, &shared_out_dir("c7")).unwrap();
    let sat = result.sat.as_ref().unwrap();
    assert!(!sat.is_empty(), "rich formula satisfied nowhere");

    // Re-check each conjunct independently; every satisfying state must
    // pass both.
    let params = checker::CheckParams::default();
    let left = pctl::parse_state_formula("P>=0.6 [ X P<=0.5 [ (!Tc) U<=31 (Tl | Tc) ] ]").unwrap();
    let right = pctl::parse_state_formula("P>=0.9 [ (!Tc) U<=32 Tg ]").unwrap();
    let left_sat = checker::evaluate(&result.imdp, &left, &params).unwrap().sat;
    let right_sat = checker::evaluate(&result.imdp, &right, &params).unwrap().sat;
    for &s in sat {
        assert!(left_sat.contains(&s), "state {s} fails the first conjunct");
        assert!(right_sat.contains(&s), "state {s} fails the second conjunct");
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 10.0, "criterion 7 took {minutes:.1} min");
    pass(7, "rich nested formula non-empty and conjunct-consistent");
}

// ---------------------------------------------------------------------------
// Criterion 8: reduced two-mode double-integrator with step grouping
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_reduced_grouped_benchmark() {
    let start = Instant::now();

    // Grouping algebra against the hand-unrolled two-step recurrence.
    let base = parse_model_file(&repo_path("models/uav.json")).unwrap();
    let grouped = base.group_steps(2);
    let a_bar = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    let b_bar = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 1.0, 1.0]);
    for mode in &grouped.modes {
        assert!((mode.a.clone() - &a_bar).amax() < 1e-12, "A^2 mismatch");
        assert!((mode.b.clone() - &b_bar).amax() < 1e-12, "[AB|B] mismatch");
        assert!(mode.q.amax() < 1e-12);
    }
    // Two noiseless base steps with inputs (u1, u2) equal one grouped step
    // with the stacked input.
    let x0 = DVector::from_column_slice(&[1.0, -2.0]);
    let (u1, u2) = (0.7, -1.1);
    let x1 = base.modes[0].step(&x0, &DVector::from_column_slice(&[u1]));
    let x2 = base.modes[0].step(&x1, &DVector::from_column_slice(&[u2]));
    let xg = grouped.modes[0].step(&x0, &DVector::from_column_slice(&[u1, u2]));
    assert!((x2 - xg).amax() < 1e-12, "unrolled recurrence mismatch");

    // End-to-end pipeline with simulation soundness.
    let cfg = RunConfig::from_file(&repo_path("configs/uav.json")).unwrap();
    let out = shared_out_dir("c8");
    let result = cli::run_pipeline(&cfg, &out).unwrap();
    assert_eq!(result.outcome.satisfied, Some(true));
    let summary = cli::run_simulation(&cfg, &result, &out).unwrap();
    let bound = summary.value_at_initial.unwrap();
    assert!(
        summary.frequency >= bound - 0.02,
        "frequency {:.4} under bound {bound:.4}",
        summary.frequency
    );
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 5.0, "criterion 8 took {minutes:.1} min");
    pass(8, "grouped reduced benchmark end-to-end with sound simulation");
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical exports under identical seeds
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_deterministic_exports() {
    let cfg = temperature_config(true);
    let out_a = shared_out_dir("c9a");
    let out_b = shared_out_dir("c9b");
    let res_a = cli::run_pipeline(&cfg, &out_a).unwrap();
    let res_b = cli::run_pipeline(&cfg, &out_b).unwrap();
    for name in ["values.json", "policy.json", "grid.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(name)).unwrap(),
            std::fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    cli::export_transitions(&res_a.imdp, &out_a.join("transitions.txt")).unwrap();
    cli::export_transitions(&res_b.imdp, &out_b.join("transitions.txt")).unwrap();
    assert_eq!(
        std::fs::read(out_a.join("transitions.txt")).unwrap(),
        std::fs::read(out_b.join("transitions.txt")).unwrap(),
        "transition exports differ"
    );
    pass(9, "identical seeds give byte-identical exports");
}
