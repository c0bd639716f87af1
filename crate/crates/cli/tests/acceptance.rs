//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mad_core::dataset::{
    collect, DEFAULT_GRID_MAX_LEN, DEFAULT_MAZE_MAX_LEN, DEFAULT_TRAJECTORIES,
};
use mad_core::diffnet::{Graph, Mlp, Tensor};
use mad_core::env::{
    check_mad_optimality, floyd_warshall, CliffWalking, Environment, GroundTruthMad,
    KeyDoorGridWorld, PointMaze,
};
use mad_core::evaluation::{
    evaluate, EvalError, LearnedDistance, MetricsReport, OracleDistance, StateDistance,
    ENUMERATION_LIMIT,
};
use mad_core::planner::{run_suite, PlanConfig};
use mad_core::quasimetric::QuasimetricSpec;
use mad_core::training::{train, EvalHook, HistoryRow, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QUICK_LIMIT: Duration = Duration::from_secs(60);

const AXIOM_TRIPLES: usize = 100_000;
const AXIOM_DIMS: [usize; 3] = [2, 8, 64];
const TRIANGLE_TOL: f64 = 1e-9;
const HOMOGENEITY_TOL: f64 = 1e-9;

const GRAD_CASES: usize = 100;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;

const BFS_GRAPHS: usize = 200;
const BFS_MAX_NODES: usize = 50;
const OPTIMALITY_GRAPHS: usize = 100;

const SEEDS: [u64; 3] = [0, 1, 2];
const REQUIRED_SEEDS: usize = 2;
const LEARN_LATENT: usize = 32;
const LEARN_STEPS: usize = 50_000;
const CLIFF_SPEARMAN: f64 = 0.90;
const CLIFF_PEARSON: f64 = 0.90;
const CLIFF_RUNTIME_TARGET: Duration = Duration::from_secs(20 * 60);
const KEYDOOR_SPEARMAN: f64 = 0.85;
const TD_SPEARMAN: f64 = 0.75;
const RATIO_CV_MAX: f64 = 0.5;
const RATIO_CV_REFERENCE_STEP: usize = 1000;

const MAZE_HIDDEN: [usize; 2] = [128, 128];
const MAZE_STEPS: usize = 5000;
const MAZE_EPISODES: usize = 50;
const MAZE_MAX_STEPS: usize = 400;
const MAZE_LEARNED_SUCCESS: f64 = 0.8;
const MAZE_ORACLE_SUCCESS: f64 = 0.9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, o: Outcome) {
    println!(
        "[{}] {id}. {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    results.push(o.pass);
}

fn progress(msg: &str) {
    eprintln!("  .. {msg}");
}

// 1 ------------------------------------------------------------------------

fn kinds() -> Vec<QuasimetricSpec> {
    vec![
        QuasimetricSpec::simple(0.0).unwrap(),
        QuasimetricSpec::simple(0.5).unwrap(),
        QuasimetricSpec::simple(1.0).unwrap(),
        QuasimetricSpec::Max,
        QuasimetricSpec::Sum,
        QuasimetricSpec::Mean,
        QuasimetricSpec::convex(vec![
            (0.3, QuasimetricSpec::Max),
            (0.7, QuasimetricSpec::simple(0.5).unwrap()),
        ])
        .unwrap(),
    ]
}

fn quasimetric_axioms() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = Vec::new();
    let mut worst_tri: f64 = f64::NEG_INFINITY;
    let mut worst_hom: f64 = 0.0;
    for q in kinds() {
        for &k in &AXIOM_DIMS {
            let mut bad = 0;
            for n in 0..AXIOM_TRIPLES {
                let mut v =
                    || -> Vec<f64> { (0..k).map(|_| rng.random_range(-5.0..5.0)).collect() };
                let (x, y, z) = (v(), v(), v());
                let d = |a: &[f64], b: &[f64]| q.distance(a, b).unwrap();
                let (xy, yz, xz) = (d(&x, &y), d(&y, &z), d(&x, &z));
                let tri = xz - xy - yz;
                worst_tri = worst_tri.max(tri);
                let lambda = [0.5, 2.0, 10.0][n % 3];
                let sx: Vec<f64> = x.iter().map(|a| a * lambda).collect();
                let sy: Vec<f64> = y.iter().map(|a| a * lambda).collect();
                let hom = (d(&sx, &sy) - lambda * xy).abs() / (lambda * xy).max(f64::MIN_POSITIVE);
                if xy > 0.0 {
                    worst_hom = worst_hom.max(hom);
                }
                if d(&x, &x) != 0.0
                    || xy < 0.0
                    || tri > TRIANGLE_TOL
                    || (xy > 0.0 && hom > HOMOGENEITY_TOL)
                {
                    bad += 1;
                }
            }
            if bad > 0 {
                violations.push(format!("{q} k={k}: {bad}"));
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: violations.is_empty() && elapsed < QUICK_LIMIT,
        detail: format!(
            "{} kinds x {:?} dims x {AXIOM_TRIPLES} triples; max triangle slack {worst_tri:.2e}, max homogeneity rel err {worst_hom:.2e}; violations {violations:?}; {:.1}s",
            kinds().len(),
            AXIOM_DIMS,
            elapsed.as_secs_f64()
        ),
    }
}

// 2 ------------------------------------------------------------------------

struct GradCase {
    net: Mlp,
    inputs: Tensor,
    q: QuasimetricSpec,
    target: f64,
}

fn plain_loss(c: &GradCase, net: &Mlp) -> f64 {
    let out = net.forward(&c.inputs).unwrap();
    let half = out.rows() / 2;
    (0..half)
        .map(|i| (c.q.distance(out.row(i), out.row(half + i)).unwrap() - c.target).powi(2))
        .sum::<f64>()
        / half as f64
}

fn graph_grads(c: &GradCase) -> Vec<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(c.inputs.clone()).unwrap();
    let (out, params) = c.net.record(&mut g, x).unwrap();
    let half = c.inputs.rows() / 2;
    let a = g.gather_rows(out, &(0..half).collect::<Vec<_>>()).unwrap();
    let b = g
        .gather_rows(out, &(half..2 * half).collect::<Vec<_>>())
        .unwrap();
    let d = c.q.record(&mut g, a, b).unwrap();
    let e = g.offset_scalar(d, -c.target).unwrap();
    let sq = g.square(e).unwrap();
    let loss = g.mean(sq).unwrap();
    let grads = g.backward(loss).unwrap();
    params.collect(&grads)
}

fn central(c: &GradCase, t: usize, i: usize, h: f64) -> f64 {
    let (mut p, mut m) = (c.net.clone(), c.net.clone());
    p.params_mut()[t].data_mut()[i] += h;
    m.params_mut()[t].data_mut()[i] -= h;
    (plain_loss(c, &p) - plain_loss(c, &m)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / s
    }
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let all = kinds();
    let (mut checked, mut kinks, mut failures) = (0usize, 0usize, 0usize);
    let mut worst: f64 = 0.0;
    for n in 0..GRAD_CASES {
        let input = rng.random_range(1..=4);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2))
            .map(|_| rng.random_range(2..=8))
            .collect();
        let latent = rng.random_range(1..=8);
        let net = Mlp::new(input, &hidden, latent, &mut rng).unwrap();
        let rows = 2 * rng.random_range(1..=4);
        let data = (0..rows * input)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let c = GradCase {
            net,
            inputs: Tensor::new(vec![rows, input], data).unwrap(),
            q: all[n % all.len()].clone(),
            target: rng.random_range(0.0..2.0),
        };
        let analytic = graph_grads(&c);
        for (ti, p) in c.net.params().iter().enumerate() {
            for i in 0..p.len() {
                let a = analytic[ti].data()[i];
                let fd = central(&c, ti, i, GRAD_STEP);
                let e = rel_err(a, fd);
                if e < GRAD_REL_TOL {
                    checked += 1;
                    worst = worst.max(e);
                } else if rel_err(fd, central(&c, ti, i, GRAD_STEP / 10.0)) > GRAD_REL_TOL {
                    kinks += 1;
                } else {
                    failures += 1;
                }
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: failures == 0 && kinks * 100 <= checked && elapsed < QUICK_LIMIT,
        detail: format!(
            "{GRAD_CASES} compositions, {checked} parameters within {GRAD_REL_TOL:e} (worst {worst:.2e}), {kinks} at kinks, {failures} failures; {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

// 3 ------------------------------------------------------------------------

fn bfs_table(succ: &[Vec<usize>]) -> Vec<u32> {
    let n = succ.len();
    let mut out = vec![GroundTruthMad::INF; n * n];
    for s in 0..n {
        let row = &mut out[s * n..(s + 1) * n];
        row[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &succ[u] {
                if row[v] == GroundTruthMad::INF {
                    row[v] = row[u] + 1;
                    q.push_back(v);
                }
            }
        }
    }
    out
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| (0..n).filter(|_| rng.random_bool(p)).collect())
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..BFS_GRAPHS {
        let n = rng.random_range(1..=BFS_MAX_NODES);
        let p = rng.random_range(0.0..0.3);
        let g = random_graph(&mut rng, n, p);
        if floyd_warshall(&g).table() != bfs_table(&g).as_slice() {
            mismatches += 1;
        }
    }
    let (mut infeasible_mad, mut accepted_bumps, mut bumps) = (0, 0, 0);
    for _ in 0..OPTIMALITY_GRAPHS {
        let g = random_graph(&mut rng, 6, 0.35);
        let mad = floyd_warshall(&g).to_f64();
        if !check_mad_optimality(&mad, &g).feasible {
            infeasible_mad += 1;
        }
        for k in 0..mad.len() {
            if mad[k].is_finite() {
                let mut d = mad.clone();
                d[k] += 1.0;
                bumps += 1;
                if check_mad_optimality(&d, &g).feasible {
                    accepted_bumps += 1;
                }
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: mismatches == 0 && infeasible_mad == 0 && accepted_bumps == 0 && elapsed < QUICK_LIMIT,
        detail: format!(
            "{BFS_GRAPHS} graphs (n<={BFS_MAX_NODES}): {mismatches} mismatches; {OPTIMALITY_GRAPHS} 6-node graphs: {infeasible_mad} infeasible MAD tables, {accepted_bumps}/{bumps} +1 perturbations feasible; {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

// 4-8 ------------------------------------------------------------------------

struct Run {
    seed: u64,
    history: Vec<HistoryRow>,
    net: Mlp,
    seconds: f64,
}

impl Run {
    fn final_metrics(&self) -> &MetricsReport {
        self.history
            .last()
            .and_then(|r| r.metrics.as_ref())
            .unwrap()
    }

    fn metrics_at(&self, step: usize) -> Option<&MetricsReport> {
        self.history
            .iter()
            .find(|r| r.step == step)
            .and_then(|r| r.metrics.as_ref())
    }
}

fn learn_config(base: TrainConfig) -> TrainConfig {
    TrainConfig {
        latent_dim: LEARN_LATENT,
        steps: LEARN_STEPS,
        ..base
    }
}

fn train_run<E: Environment>(
    env: &E,
    cfg: &TrainConfig,
    seed: u64,
    max_len: usize,
) -> Result<Run, String> {
    let t = Instant::now();
    let ds = collect(env, DEFAULT_TRAJECTORIES, max_len, seed).map_err(|e| e.to_string())?;
    let truth = env.ground_truth();
    let q = cfg.quasimetric.clone();
    let mut hook = |_step: usize, net: &Mlp| -> Result<MetricsReport, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        evaluate(
            env,
            &LearnedDistance::new(net, &q),
            &truth,
            ENUMERATION_LIMIT,
            &mut rng,
        )
    };
    let hook: &mut EvalHook<'_> = &mut hook;
    let state = train(&ds, cfg, seed, Some(hook)).map_err(|e| e.to_string())?;
    let run = Run {
        seed,
        history: state.history,
        net: state.online,
        seconds: t.elapsed().as_secs_f64(),
    };
    progress(&format!(
        "{} {} seed {seed}: {} ({:.0}s)",
        env.name(),
        cfg.objective.name(),
        run.final_metrics(),
        run.seconds
    ));
    Ok(run)
}

/// Runs seeds until `REQUIRED_SEEDS` pass or can no longer pass.
fn seeded<F>(mut attempt: F) -> (usize, Vec<String>)
where
    F: FnMut(u64) -> (bool, String),
{
    let (mut passes, mut lines) = (0, Vec::new());
    for (i, &seed) in SEEDS.iter().enumerate() {
        let (ok, line) = attempt(seed);
        passes += usize::from(ok);
        lines.push(format!(
            "seed {seed}: {line}{}",
            if ok { "" } else { " (miss)" }
        ));
        let remaining = SEEDS.len() - i - 1;
        if passes >= REQUIRED_SEEDS || passes + remaining < REQUIRED_SEEDS {
            break;
        }
    }
    (passes, lines)
}

fn cliff_asymmetry(env: &CliffWalking, net: &Mlp, q: &QuasimetricSpec) -> (f64, f64) {
    let above = (10, CliffWalking::START.1 - 1);
    let model = LearnedDistance::new(net, q);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = model
        .pairwise(
            env,
            &[above, CliffWalking::START],
            &[(0, 1), (1, 0)],
            &mut rng,
        )
        .unwrap();
    (d[0], d[1])
}

fn cliff_learning(runs: &mut Vec<Run>) -> Outcome {
    let env = CliffWalking::new();
    let cfg = learn_config(TrainConfig::maddist());
    let t = Instant::now();
    let (passes, lines) = seeded(
        |seed| match train_run(&env, &cfg, seed, DEFAULT_GRID_MAX_LEN) {
            Ok(run) => {
                let m = run.final_metrics().clone();
                let (fwd, back) = cliff_asymmetry(&env, &run.net, &cfg.quasimetric);
                let ok = m.spearman >= CLIFF_SPEARMAN && m.pearson >= CLIFF_PEARSON && fwd < back;
                runs.push(run);
                (
                ok,
                format!(
                    "spearman {:.4} pearson {:.4}, d(above col 10, start) {fwd:.3} vs d(start, above col 10) {back:.3}",
                    m.spearman, m.pearson
                ),
            )
            }
            Err(e) => (false, format!("training failed: {e}")),
        },
    );
    let elapsed = t.elapsed();
    let per_seed = elapsed.as_secs_f64() / lines.len() as f64;
    Outcome {
        pass: passes >= REQUIRED_SEEDS && elapsed < CLIFF_RUNTIME_TARGET,
        detail: format!(
            "{passes}/{} seeds pass (need {REQUIRED_SEEDS}, rho>={CLIFF_SPEARMAN}, r>={CLIFF_PEARSON}, asymmetry witness); {}; {:.0}s total, {per_seed:.0}s per seed",
            lines.len(),
            lines.join("; "),
            elapsed.as_secs_f64()
        ),
    }
}

fn keydoor_learning() -> Outcome {
    let env = KeyDoorGridWorld::new();
    let cfg = learn_config(TrainConfig::maddist());
    let (passes, lines) = seeded(
        |seed| match train_run(&env, &cfg, seed, DEFAULT_GRID_MAX_LEN) {
            Ok(run) => {
                let m = run.final_metrics();
                (
                    m.spearman >= KEYDOOR_SPEARMAN,
                    format!(
                        "spearman {:.4} over {} finite pairs ({} infinite excluded)",
                        m.spearman, m.n_pairs, m.excluded_infinite
                    ),
                )
            }
            Err(e) => (false, format!("training failed: {e}")),
        },
    );
    Outcome {
        pass: passes >= REQUIRED_SEEDS,
        detail: format!(
            "{passes}/{} seeds with rho>={KEYDOOR_SPEARMAN}; {}",
            lines.len(),
            lines.join("; ")
        ),
    }
}

fn td_sanity() -> Outcome {
    let env = CliffWalking::new();
    let cfg = learn_config(TrainConfig::tdmaddist());
    let (passes, lines) = seeded(
        |seed| match train_run(&env, &cfg, seed, DEFAULT_GRID_MAX_LEN) {
            Ok(run) => {
                let m = run.final_metrics();
                let finite = run.history.iter().all(|r| r.losses.total.is_finite());
                (
                    m.spearman >= TD_SPEARMAN && finite,
                    format!("spearman {:.4}, all {} steps finite", m.spearman, cfg.steps),
                )
            }
            Err(e) => (false, format!("numerical failure: {e}")),
        },
    );
    Outcome {
        pass: passes >= REQUIRED_SEEDS,
        detail: format!(
            "{passes}/{} seeds with rho>={TD_SPEARMAN} and finite losses; {}",
            lines.len(),
            lines.join("; ")
        ),
    }
}

fn ratio_cv_trend(runs: &[Run]) -> Outcome {
    let mut ok = !runs.is_empty();
    let mut lines = Vec::new();
    for run in runs {
        let last = run.final_metrics().ratio_cv;
        let early = run
            .metrics_at(RATIO_CV_REFERENCE_STEP)
            .map_or(f64::NAN, |m| m.ratio_cv);
        let good = last <= RATIO_CV_MAX && last <= early;
        ok &= good;
        lines.push(format!(
            "seed {}: step {RATIO_CV_REFERENCE_STEP} {early:.4} -> final {last:.4}{}",
            run.seed,
            if good { "" } else { " (miss)" }
        ));
    }
    Outcome {
        pass: ok,
        detail: format!(
            "final ratio_cv<={RATIO_CV_MAX} and <= value at step {RATIO_CV_REFERENCE_STEP} on every CliffWalking MadDist run; {}",
            lines.join("; ")
        ),
    }
}

fn maze_planning() -> Outcome {
    let env = PointMaze::builtin("umaze", 2).unwrap();
    let truth = env.ground_truth();
    let plan = PlanConfig {
        n_candidates: 100,
        horizon: 10,
        max_episode_steps: MAZE_MAX_STEPS,
        ..PlanConfig::default()
    };
    let t = Instant::now();
    let oracle = run_suite(
        &env,
        &OracleDistance { truth: &truth },
        &plan,
        MAZE_EPISODES,
        0,
    )
    .unwrap();
    let cfg = TrainConfig {
        hidden: MAZE_HIDDEN.to_vec(),
        latent_dim: LEARN_LATENT,
        steps: MAZE_STEPS,
        eval_interval: 0,
        ..TrainConfig::maddist()
    };
    let learned = collect(&env, DEFAULT_TRAJECTORIES, DEFAULT_MAZE_MAX_LEN, 0)
        .map_err(|e| e.to_string())
        .and_then(|ds| train(&ds, &cfg, 0, None).map_err(|e| e.to_string()))
        .and_then(|st| {
            run_suite(
                &env,
                &LearnedDistance::new(&st.online, &cfg.quasimetric),
                &plan,
                MAZE_EPISODES,
                0,
            )
            .map_err(|e| e.to_string())
        });
    let (learned_rate, learned_desc) = match &learned {
        Ok(s) => (
            s.success_rate(),
            format!(
                "{:.2} (mean steps {:.1})",
                s.success_rate(),
                s.mean_steps_to_success()
            ),
        ),
        Err(e) => (0.0, format!("failed: {e}")),
    };
    Outcome {
        pass: learned_rate >= MAZE_LEARNED_SUCCESS && oracle.success_rate() >= MAZE_ORACLE_SUCCESS,
        detail: format!(
            "umaze, K=100 H=10, {MAZE_EPISODES} episodes: learned success {learned_desc} (need {MAZE_LEARNED_SUCCESS}), oracle success {:.2} (need {MAZE_ORACLE_SUCCESS}); {:.0}s",
            oracle.success_rate(),
            t.elapsed().as_secs_f64()
        ),
    }
}

// 9 ------------------------------------------------------------------------

fn mad(args: &[&str], out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_mad"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr).trim()
        ))
    }
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let small = [
        "--seed",
        "4",
        "--set",
        "train.steps=200",
        "--set",
        "train.eval_interval=50",
        "--set",
        "train.hidden=32,32",
        "--set",
        "train.latent_dim=8",
        "--set",
        "dataset.trajectories=20",
    ];
    let mut compared = Vec::new();
    let mut differing = Vec::new();
    let mut run = || -> Result<(), String> {
        for rep in ["a", "b"] {
            let root = tmp.path().join(rep);
            mad(&[&["collect"], &small[..]].concat(), &root.join("collect"))?;
            mad(&[&["train"], &small[..]].concat(), &root.join("train"))?;
            let ckpt = root.join("train").join("checkpoint.madnet");
            let ckpt = ckpt.to_str().unwrap();
            mad(
                &[
                    &[
                        "eval",
                        "--checkpoint",
                        ckpt,
                        "--set",
                        "eval.dump_pairs=true",
                    ],
                    &small[..],
                ]
                .concat(),
                &root.join("eval"),
            )?;
        }
        for (dir, file) in [
            ("collect", "dataset.txt"),
            ("train", "dataset.txt"),
            ("train", "metrics.csv"),
            ("train", "checkpoint.madnet"),
            ("eval", "eval.csv"),
            ("eval", "pairs.csv"),
        ] {
            let a =
                fs::read(tmp.path().join("a").join(dir).join(file)).map_err(|e| e.to_string())?;
            let b =
                fs::read(tmp.path().join("b").join(dir).join(file)).map_err(|e| e.to_string())?;
            compared.push(format!("{dir}/{file}"));
            if a != b {
                differing.push(format!("{dir}/{file}"));
            }
        }
        Ok(())
    };
    match run() {
        Ok(()) => Outcome {
            pass: differing.is_empty(),
            detail: format!(
                "{} payloads compared across reruns, differing: {differing:?}",
                compared.len()
            ),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("command failed: {e}"),
        },
    }
}

/// `ACCEPTANCE_ONLY=1,2,9` restricts the run to the listed criteria.
fn selected() -> impl Fn(usize) -> bool {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    move |id| only.as_ref().is_none_or(|o| o.contains(&id))
}

fn main() {
    let want = selected();
    let mut results = Vec::new();
    println!("acceptance suite");
    if want(1) {
        report(&mut results, 1, "quasimetric axioms", quasimetric_axioms());
    }
    if want(2) {
        report(&mut results, 2, "gradient correctness", gradient_checks());
    }
    if want(3) {
        report(&mut results, 3, "oracle equivalence", oracle_equivalence());
    }
    let mut cliff_runs = Vec::new();
    if want(4) || want(7) {
        let o = cliff_learning(&mut cliff_runs);
        if want(4) {
            report(&mut results, 4, "CliffWalking learning", o);
        }
    }
    if want(5) {
        report(
            &mut results,
            5,
            "KeyDoorGridWorld learning",
            keydoor_learning(),
        );
    }
    if want(6) {
        report(&mut results, 6, "TDMadDist sanity", td_sanity());
    }
    if want(7) {
        report(
            &mut results,
            7,
            "ratio CV trend",
            ratio_cv_trend(&cliff_runs),
        );
    }
    if want(8) {
        report(
            &mut results,
            8,
            "planner with learned metric",
            maze_planning(),
        );
    }
    if want(9) {
        report(&mut results, 9, "CLI determinism", cli_determinism());
    }
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
