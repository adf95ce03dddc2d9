//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use causal_neighbors::causal::{build_neighbors, estimate_effects, run_ranker, RankerConfig};
use causal_neighbors::data::{SparseBinaryMatrix, TernaryMatrix};
use causal_neighbors::datagen::{build_priors, generate_splits, synth_priors, GenParams};
use causal_neighbors::harness::{emit_tables, run_on_splits, sensitivity_sweep, GeneratorSpec, Sensitivity, SweepSpec};
use causal_neighbors::matching::{estimate, SubjectPanel};
use causal_neighbors::metrics::{evaluate_tau, MetricKind};
use causal_neighbors::ranking::{RankedList, Rankings};
use causal_neighbors::similarity::{top_k_neighbors, Orientation, SimilarityConfig, Source};

const ALPHAS: [f64; 6] = [0.33, 0.5, 1.0, 2.0, 3.0, 5.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_binary(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SparseBinaryMatrix {
    let p = rng.random_range(0.1..0.9);
    SparseBinaryMatrix::from_fn(n, m, |_, _| rng.random_bool(p))
}

fn random_config(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize) -> RankerConfig {
    let orientation = if rng.random_bool(0.5) { Orientation::Item } else { Orientation::User };
    let rows = if orientation == Orientation::User { n_users } else { n_items };
    let betas = [0.0, 0.3, 1.0, 3.0, 10.0, 100.0];
    RankerConfig {
        sim: SimilarityConfig {
            k: rng.random_range(0..rows),
            alpha: ALPHAS[rng.random_range(0..ALPHAS.len())],
            source: if rng.random_bool(0.5) { Source::Outcomes } else { Source::Treatments },
            orientation,
        },
        beta_t: betas[rng.random_range(0..betas.len())],
        beta_c: betas[rng.random_range(0..betas.len())],
        mix_own: rng.random_bool(0.5),
    }
}

/// Literal dense evaluation of the neighborhood estimators.
fn dense_tau(y: &SparseBinaryMatrix, z: &SparseBinaryMatrix, c: &RankerConfig) -> Vec<Vec<f64>> {
    let (n, m) = y.shape();
    let by_item = c.sim.orientation == Orientation::Item;
    let at = |mat: &SparseBinaryMatrix, row: usize, col: usize| -> f64 {
        let v = if by_item { mat.get(col, row) } else { mat.get(row, col) };
        if v { 1.0 } else { 0.0 }
    };
    let sim_src = match c.sim.source {
        Source::Outcomes => y,
        Source::Treatments => z,
    };
    let (rows, cols) = if by_item { (m, n) } else { (n, m) };
    let mut tau = vec![vec![0.0; m]; n];
    for r in 0..rows {
        let mut cands = Vec::new();
        for o in 0..rows {
            if o == r {
                continue;
            }
            let (mut dot, mut nr, mut no) = (0.0, 0.0, 0.0);
            for d in 0..cols {
                dot += at(sim_src, r, d) * at(sim_src, o, d);
                nr += at(sim_src, r, d);
                no += at(sim_src, o, d);
            }
            let cos = if nr == 0.0 || no == 0.0 { 0.0 } else { dot / (nr * no).sqrt() };
            cands.push((o, cos));
        }
        cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut hood: Vec<(usize, f64)> = cands
            .into_iter()
            .take(c.sim.k)
            .filter(|x| x.1 > 0.0)
            .map(|(o, s)| (o, s.powf(c.sim.alpha)))
            .collect();
        if c.mix_own {
            hood.push((r, 1.0));
        }
        for d in 0..cols {
            let (mut nt, mut dt, mut nc, mut dc) = (0.0, 0.0, 0.0, 0.0);
            for &(o, w) in &hood {
                let (zo, yo) = (at(z, o, d), at(y, o, d));
                nt += w * zo * yo;
                dt += w * zo;
                nc += w * (1.0 - zo) * yo;
                dc += w * (1.0 - zo);
            }
            let (bt, bc) = if c.mix_own { (c.beta_t, c.beta_c) } else { (0.0, 0.0) };
            let yt = if bt + dt == 0.0 { 0.0 } else { nt / (bt + dt) };
            let yc = if bc + dc == 0.0 { 0.0 } else { nc / (bc + dc) };
            let value = if c.mix_own {
                yt - yc
            } else {
                let (zz, yy) = (at(z, r, d), at(y, r, d));
                zz * (yy - yc) + (1.0 - zz) * (yt - yy)
            };
            let (u, i) = if by_item { (d, r) } else { (r, d) };
            tau[u][i] = value;
        }
    }
    tau
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let y = random_binary(&mut rng, n, m);
        let z = random_binary(&mut rng, n, m);
        let c = random_config(&mut rng, n, m);
        let ranked = run_ranker(&y, &z, &c).expect("ranker runs");
        let expected = dense_tau(&y, &z, &c);
        for (u, list) in ranked.lists.iter().enumerate() {
            for (&i, &s) in list.items.iter().zip(&list.scores) {
                worst = worst.max((s - expected[u][i as usize]).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |diff| = {worst:.3e} over 200 instances"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cutoffs = [1, 2, 5];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m) = (10, 10);
        let tau: Vec<Vec<i8>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1i8..=1)).collect()).collect();
        let lists: Vec<RankedList> = (0..n)
            .map(|_| {
                let mut items: Vec<u32> = (0..m as u32).collect();
                for k in (1..m).rev() {
                    items.swap(k, rng.random_range(0..=k));
                }
                RankedList { items, scores: vec![0.0; m] }
            })
            .collect();
        let rankings = Rankings { n_items: m, lists };
        let report = evaluate_tau(&rankings, &TernaryMatrix::from_dense(&tau).unwrap(), &cutoffs, false).unwrap();
        let mut cp = [0.0; 3];
        let (mut dcg, mut car) = (0.0, 0.0);
        for u in 0..n {
            let (mut cpu, mut dcgu, mut caru) = ([0.0; 3], 0.0, 0.0);
            for (pos, &i) in rankings.lists[u].items.iter().enumerate() {
                let t = tau[u][i as usize] as f64;
                let rank = (pos + 1) as f64;
                for (j, &c) in cutoffs.iter().enumerate() {
                    if pos < c {
                        cpu[j] += t;
                    }
                }
                dcgu += t / (1.0 + rank).log2();
                caru += rank * t;
            }
            for j in 0..3 {
                cp[j] += cpu[j] / cutoffs[j] as f64;
            }
            dcg += dcgu;
            car += caru / m as f64;
        }
        for (j, &c) in cutoffs.iter().enumerate() {
            worst = worst.max((report.cp_at[&c] - cp[j] / n as f64).abs());
        }
        worst = worst.max((report.cdcg - dcg / n as f64).abs());
        worst = worst.max((report.car - car / n as f64).abs());
    }
    outcome(worst <= 1e-12, format!("max |diff| = {worst:.3e} over 200 instances"))
}

fn panel(y: &[u8], z: &[u8], cov: &[&[u8]]) -> SubjectPanel {
    SubjectPanel::new(
        y.iter().map(|&v| v == 1).collect(),
        z.iter().map(|&v| v == 1).collect(),
        SparseBinaryMatrix::from_dense(cov).unwrap(),
    )
    .unwrap()
}

fn criterion_3() -> Outcome {
    // (panel, matches per group, ATE, ATT), worked out by hand
    let cases = [
        (panel(&[1, 0], &[1, 0], &[&[1, 0], &[0, 1]]), 1, 1.0, 1.0),
        (
            panel(
                &[1, 0, 0, 0, 1],
                &[1, 1, 0, 0, 0],
                &[&[1, 0, 0], &[0, 1, 0], &[1, 0, 0], &[0, 1, 1], &[0, 0, 1]],
            ),
            1,
            0.4,
            0.5,
        ),
        (panel(&[1, 0, 1, 0, 1], &[1, 1, 1, 0, 0], &[&[1u8][..]; 5]), 2, 0.1, 1.0 / 6.0),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (j, (p, m, ate, att)) in cases.iter().enumerate() {
        let r = estimate(p, *m).expect("estimable panel");
        pass &= r.ate == *ate && r.att == *att;
        details.push(format!("panel {}: ATE {} ATT {}", j + 1, r.ate, r.att));
    }
    outcome(pass, details.join("; "))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let betas = [0.0, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
    let mut monotone = true;
    let mut bound_ok = true;
    let mut largest = [0.0f64; 3];
    for _ in 0..100 {
        let (n, m) = (rng.random_range(2..=12), rng.random_range(2..=12));
        let y = random_binary(&mut rng, n, m);
        let z = random_binary(&mut rng, n, m);
        let mut c = random_config(&mut rng, n, m);
        c.mix_own = true;
        let mut prev: Option<Vec<f64>> = None;
        for &b in &betas {
            let est = estimate_effects(&y, &z, &RankerConfig { beta_t: b, ..c }).unwrap();
            let cur = est.y_t_hat.as_slice().to_vec();
            if let Some(p) = &prev {
                monotone &= cur.iter().zip(p).all(|(x, q)| x <= q);
            }
            prev = Some(cur);
        }
        let max_w = build_neighbors(&y, &z, &c)
            .unwrap()
            .iter()
            .map(|s| s.weight_sum())
            .fold(0.0, f64::max);
        for (j, &b) in [1e2, 1e3, 1e4].iter().enumerate() {
            let est = estimate_effects(&y, &z, &RankerConfig { beta_t: b, beta_c: b, ..c }).unwrap();
            let top = est.tau_hat.as_slice().iter().fold(0.0f64, |a, t| a.max(t.abs()));
            bound_ok &= top <= 10.0 * max_w / b;
            largest[j] = largest[j].max(top);
        }
    }
    outcome(
        monotone && bound_ok,
        format!(
            "monotone: {monotone}; max |tau_hat| at beta 1e2/1e3/1e4 = {:.2e}/{:.2e}/{:.2e}",
            largest[0], largest[1], largest[2]
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut same = true;
    for _ in 0..50 {
        let (n, m) = (rng.random_range(2..=30), rng.random_range(2..=30));
        let x = random_binary(&mut rng, n, m);
        let k = rng.random_range(0..n);
        let a1 = ALPHAS[rng.random_range(0..ALPHAS.len())];
        let a2 = ALPHAS[rng.random_range(0..ALPHAS.len())];
        let sets = |alpha| {
            let cfg = SimilarityConfig { k, alpha, source: Source::Outcomes, orientation: Orientation::User };
            top_k_neighbors(&x, &cfg, false)
                .unwrap()
                .into_iter()
                .map(|s| s.indices().collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        same &= sets(a1) == sets(a2);
    }
    outcome(same, "50 instances")
}

fn criterion_6() -> Outcome {
    let params = GenParams { b: 1.0, target_recs_per_user: Some(100.0), ..GenParams::default() };
    let (mut worst_mean, mut z_sum) = (100.0f64, 0.0);
    let mut calibrated = true;
    for seed in 0..10 {
        let (r, o) = synth_priors(500, 300, seed);
        let (priors, resolved) = build_priors(&r, &o, &params).unwrap();
        let mean_p = priors.propensity.as_slice().iter().sum::<f64>() / 500.0;
        calibrated &= (99.9999..=100.0001).contains(&mean_p);
        if (mean_p - 100.0).abs() > (worst_mean - 100.0).abs() {
            worst_mean = mean_p;
        }
        let splits = generate_splits(&priors, &resolved, seed).unwrap();
        z_sum += splits.train.z.nnz() as f64 / 500.0;
    }
    let z_mean = z_sum / 10.0;
    outcome(
        calibrated && (95.0..=105.0).contains(&z_mean),
        format!("worst mean sum P = {worst_mean:.7}; mean Z per user = {z_mean:.3}"),
    )
}

fn pipeline_spec(seed: u64) -> SweepSpec {
    SweepSpec {
        methods: ["CUBN-O", "UBN", "Random", "Pop"].iter().map(|m| m.parse().unwrap()).collect(),
        metrics: vec![MetricKind::CpAt(10)],
        generator: Some(GeneratorSpec {
            n_users: 500,
            n_items: 300,
            r_hat: None,
            o_hat: None,
            params: GenParams {
                epsilon: 5.0,
                b: 1.0,
                target_recs_per_user: Some(50.0),
                n_validation: 1,
                n_test: 1,
                ..GenParams::default()
            },
        }),
        seed,
        ..SweepSpec::default()
    }
}

struct PipelineRun {
    test_cp10: BTreeMap<String, f64>,
    split_ates: Vec<(u64, &'static str, f64)>,
}

/// Generate, save, rank, evaluate and tabulate for every seed.
fn pipeline(out: &Path) -> PipelineRun {
    let mut test_cp10 = BTreeMap::new();
    let mut split_ates = Vec::new();
    for seed in 0..10 {
        let spec = pipeline_spec(seed);
        let splits = spec.load_data().unwrap();
        let dir = out.join(format!("seed_{seed}"));
        splits.save(dir.join("data")).unwrap();
        split_ates.push((seed, "train", splits.train.tau.mean()));
        split_ates.push((seed, "validation", splits.validation[0].tau.mean()));
        split_ates.push((seed, "test", splits.test[0].tau.mean()));
        let records = run_on_splits(&spec, &splits).unwrap();
        emit_tables(&records, dir.join("tables")).unwrap();
        for r in records {
            *test_cp10.entry(r.method).or_insert(0.0) += r.test / 10.0;
        }
    }
    PipelineRun { test_cp10, split_ates }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_7(run: &PipelineRun) -> Outcome {
    let c = run.test_cp10["CUBN-O"];
    let others = ["UBN", "Random", "Pop"];
    let pass = others.iter().all(|m| c > run.test_cp10[*m]);
    let detail = run
        .test_cp10
        .iter()
        .map(|(m, v)| format!("{m} {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("mean test CP@10: {detail}"))
}

fn criterion_8(run: &PipelineRun) -> Outcome {
    let min = run.split_ates.iter().map(|a| a.2).fold(f64::INFINITY, f64::min);
    let bad: Vec<String> = run.split_ates.iter().filter(|a| a.2 <= 0.0).map(|a| format!("seed {} {}", a.0, a.1)).collect();
    let mut detail = format!("{} splits, smallest ATE {min:.4}", run.split_ates.len());
    if !bad.is_empty() {
        detail += &format!("; non-positive: {}", bad.join(", "));
    }
    outcome(bad.is_empty(), detail)
}

fn criterion_9() -> Outcome {
    let base = SweepSpec { methods: vec!["CUBN-O".parse().unwrap()], ..pipeline_spec(0) };
    let kind = Sensitivity::Unevenness { b: vec![0.5, 1.0, 2.0] };
    let first = sensitivity_sweep(&kind, &base).unwrap();
    let second = sensitivity_sweep(&kind, &base).unwrap();
    let points: Vec<String> = first
        .iter()
        .filter(|r| r.method == "CUBN-O")
        .map(|r| format!("{} CP@10 {:.4}", r.point, r.cells[0].test))
        .collect();
    outcome(first == second && points.len() == 3, points.join(", "))
}

fn criterion_10(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (files_under(a), files_under(b));
    if fa != fb || fa.is_empty() {
        return outcome(false, "file sets differ");
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| std::fs::read(a.join(p)).unwrap() != std::fs::read(b.join(p)).unwrap())
        .map(|p| p.display().to_string())
        .collect();
    let mut detail = format!("{} files compared", fa.len());
    if !differing.is_empty() {
        detail += &format!("; differing: {}", differing.join(", "));
    }
    outcome(differing.is_empty(), detail)
}

fn report(failures: &mut usize, n: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|_| outcome(false, "panicked"));
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    if !pass {
        *failures += 1;
    }
    let budget = limit.map(|l| format!(" / limit {l:.0?}")).unwrap_or_default();
    println!(
        "[{}] criterion {n}: {name} ({}; {elapsed:.2?}{budget})",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    let mut failures = 0;
    report(&mut failures, 1, "estimator oracle equivalence", Some(Duration::from_secs(10)), criterion_1);
    report(&mut failures, 2, "metric oracle equivalence", Some(Duration::from_secs(5)), criterion_2);
    report(&mut failures, 3, "matching estimator toy panels", None, criterion_3);
    report(&mut failures, 4, "shrinkage monotonicity and decay", Some(Duration::from_secs(10)), criterion_4);
    report(&mut failures, 5, "alpha-invariant neighbor sets", None, criterion_5);
    report(&mut failures, 6, "propensity calibration", Some(Duration::from_secs(30)), criterion_6);

    let work = tempfile::tempdir().unwrap();
    let (first, second) = (work.path().join("run_a"), work.path().join("run_b"));
    let start = Instant::now();
    let run = pipeline(&first);
    let pipeline_time = start.elapsed();
    report(&mut failures, 7, "CUBN-O ordering against baselines", Some(Duration::from_secs(300)), || {
        let mut o = criterion_7(&run);
        o.detail = format!("{}; pipeline {pipeline_time:.2?}", o.detail);
        o.pass &= pipeline_time <= Duration::from_secs(300);
        o
    });
    report(&mut failures, 8, "positive ATE on every split", None, || criterion_8(&run));
    report(&mut failures, 9, "unevenness sweep", Some(Duration::from_secs(300)), criterion_9);
    report(&mut failures, 10, "byte-identical reruns", None, || {
        pipeline(&second);
        criterion_10(&first, &second)
    });

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
