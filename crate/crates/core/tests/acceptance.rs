//! Acceptance criteria 1-10. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stderr so it shows up even when output is captured.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime};
use ehub::cli::{run, RunManifest};
use ehub::forecast::{
    encode, evaluate_one_step, kernel_eval, log_marginal_likelihood, ConditioningRows, DemandHistory, FitOptions,
    GpModel, KernelHyperparameters, ModelKind, ModelSet, Season, SeasonTable, Standardization,
};
use ehub::guarantees::{epsilon_bound, epsilon_closed_form, greedy_support, GuaranteeConfig};
use ehub::hub::{HubParameters, Tariffs};
use ehub::optimizer::{solve_lp, solve_with_complementarity, BranchMode, LinearProgram, RowSense, SolveStatus, COMP_TOL};
use ehub::sampler::{mean_trajectory, sample_trajectories, SamplerConfig, WeatherForecast};
use ehub::sim::{
    generate_synthetic_data, run_arms, summarize, ClosedLoopTrace, Controller, SimulationConfig, SyntheticDataConfig,
};
use ehub::timeutil::hour_index;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, what: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {verdict} {what} ({detail})");
}

fn at(y: i32, m: u32, d: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn random_hp<R: Rng>(rng: &mut R, dim: usize, linear_dims: Vec<usize>) -> KernelHyperparameters {
    KernelHyperparameters {
        rbf_signal_variance: rng.gen_range(0.3..3.0),
        rbf_lengthscales: (0..dim).map(|_| rng.gen_range(0.5..4.0)).collect(),
        linear_variance: linear_dims.iter().map(|_| rng.gen_range(0.01..1.0)).collect(),
        linear_dims,
        noise_variance: rng.gen_range(0.01..0.5),
    }
}

#[test]
fn criterion_01_gp_posterior_matches_explicit_inverse() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.gen_range(2..=6);
        let hp = random_hp(&mut rng, dim, vec![0, dim - 1]);
        let n = 50;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 100.0 + 20.0 * r[0].sin() + 5.0 * r[dim - 1] + rng.gen_range(-2.0..2.0)).collect();
        let st = Standardization::from_data(&x, &y);
        let rows = ConditioningRows { hours: (0..n as i64).collect(), x: x.clone(), y: y.clone() };
        let model = GpModel::build(ModelKind::Electric, Season::Winter, hp.clone(), st.clone(), rows).unwrap();

        // dense oracle in standardized units
        let z: Vec<Vec<f64>> = x.iter().map(|r| st.x(r)).collect();
        let ys = DVector::from_iterator(n, y.iter().map(|&v| st.y(v)));
        let diag = hp.noise_variance + model.jitter();
        let k = DMatrix::from_fn(n, n, |i, j| kernel_eval(&z[i], &z[j], &hp).unwrap() + if i == j { diag } else { 0.0 });
        let kinv = k.try_inverse().expect("Gram matrix invertible");
        for _ in 0..5 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let zq = st.x(&q);
            let ks = DVector::from_iterator(n, z.iter().map(|r| kernel_eval(&zq, r, &hp).unwrap()));
            let kss = kernel_eval(&zq, &zq, &hp).unwrap();
            let mean = st.y_mean + st.y_std * (ks.transpose() * &kinv * &ys)[0];
            let var = st.y_std.powi(2) * (kss - (ks.transpose() * &kinv * &ks)[0]);
            let (m, v) = model.posterior(&q).unwrap();
            let prior = st.y_std.powi(2) * kss;
            worst = worst.max((m - mean).abs() / mean.abs().max(st.y_std)).max((v - var).abs() / prior);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && secs < 10.0;
    report(1, "GP posterior vs explicit inverse", pass, &format!("max rel err {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_02_lml_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = rng.gen_range(2..=5);
        let hp = random_hp(&mut rng, dim, vec![dim - 1]);
        let n = 40;
        let z: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = z.iter().map(|r| r[0].cos() + 0.5 * r[dim - 1] + rng.gen_range(-0.3..0.3)).collect();
        let (_, grad) = log_marginal_likelihood(&hp, &z, &y).unwrap();
        let theta = hp.to_log();
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let f = |t: &[f64]| log_marginal_likelihood(&hp.from_log(t), &z, &y).unwrap().0;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect();
        // components far below the gradient's scale are compared against that scale
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, f) in grad.iter().zip(&fd) {
            worst = worst.max((a - f).abs() / f.abs().max(1e-3 * scale).max(1e-8));
        }
    }
    let pass = worst <= 1e-4;
    report(2, "LML gradient vs central differences", pass, &format!("max rel err {worst:.2e}"));
    assert!(pass);
}

/// Row and bound violation computed from the raw LP data.
fn raw_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut act = vec![0.0; lp.rhs.len()];
    for &(r, c, v) in &lp.entries {
        act[r] += v * x[c];
    }
    let rows = act.iter().zip(&lp.rhs).zip(&lp.senses).map(|((a, b), s)| match s {
        RowSense::Le => (a - b).max(0.0),
        RowSense::Ge => (b - a).max(0.0),
        RowSense::Eq => (a - b).abs(),
    });
    let bounds = x.iter().zip(lp.lower.iter().zip(&lp.upper)).map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
    rows.chain(bounds).fold(0.0, f64::max)
}

#[test]
fn criterion_03_branch_and_bound_matches_enumeration() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut worst_gap, mut all_certified, mut max_pairs) = (0.0f64, true, 0);
    for _ in 0..50 {
        let (t, m) = [(1, 1), (1, 2), (2, 1)][rng.gen_range(0..3)];
        let inst = common::random_hub_instance(&mut rng, t, m);
        let prog = inst.program();
        max_pairs = max_pairs.max(prog.pairs.len());
        let oracle = common::exhaustive_min(&prog.lp, &prog.pairs).expect("feasible");
        let res = solve_with_complementarity(&prog.lp, &prog.pairs, BranchMode::RelaxFirst).unwrap();
        worst_gap = worst_gap.max((res.objective - oracle).abs() / oracle.abs().max(1.0));
        let cert = common::leaf_certificate(&prog.lp, &res);
        let feasible = raw_violation(&prog.lp, &res.primal) <= 1e-6;
        let complementary = prog.pairs.iter().all(|p| p.product(&res.primal) <= COMP_TOL);
        all_certified &= res.status == SolveStatus::Optimal && cert.passes() && feasible && complementary;
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_gap <= 1e-6 && all_certified && max_pairs <= 8 && secs < 60.0;
    report(
        3,
        "complementarity B&B vs 2^pairs enumeration",
        pass,
        &format!("max gap {worst_gap:.2e}, certified {all_certified}, <= {max_pairs} pairs, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_epsilon_identity_and_bound() {
    let (mut worst_sum, mut worst_slack) = (0.0f64, f64::INFINITY);
    for beta in [0.1, 0.01, 1e-4] {
        for m in 1..=30usize {
            let mut sum = 0.0;
            for s in 0..m {
                let eps = epsilon_closed_form(s, m, beta).unwrap();
                // C(M, s) by multiplication, independent of the log-gamma path
                let binom = (0..s).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64);
                sum += binom * (1.0 - eps).powi((m - s) as i32);
                worst_slack = worst_slack.min(epsilon_bound(s, m, beta).unwrap() - eps);
            }
            worst_sum = worst_sum.max((sum - beta).abs());
        }
    }
    let pass = worst_sum <= 1e-10 && worst_slack >= -1e-12;
    report(4, "epsilon identity and log bound", pass, &format!("max |sum - beta| {worst_sum:.2e}, min slack {worst_slack:.2e}"));
    assert!(pass);
}

/// `min x1 + x2` over `x1 >= a_i, x2 >= b_i`, `x ∈ [0, 1]²`.
fn toy_solve(a: &[f64], b: &[f64], kept: &[usize]) -> Option<Vec<f64>> {
    if kept.is_empty() {
        return None;
    }
    let mut lp = LinearProgram::new();
    let x1 = lp.add_var(0.0, 1.0, 1.0);
    let x2 = lp.add_var(0.0, 1.0, 1.0);
    for &i in kept {
        lp.add_row(&[(x1, 1.0)], RowSense::Ge, a[i]);
        lp.add_row(&[(x2, 1.0)], RowSense::Ge, b[i]);
    }
    let r = solve_lp(&lp).ok()?;
    (r.status == SolveStatus::Optimal).then_some(r.primal)
}

#[test]
fn criterion_05_monte_carlo_validity_on_planted_toy() {
    let t0 = Instant::now();
    let (m, beta, reps) = (50, 0.05, 200);
    let cfg = GuaranteeConfig { beta, ..Default::default() };
    let mut failures = 0;
    let mut supports = BTreeMap::new();
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + rep as u64);
        let a: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let all: Vec<usize> = (0..m).collect();
        let x = toy_solve(&a, &b, &all).unwrap();
        let removed = greedy_support(m, &x, &cfg, |kept| Ok(toy_solve(&a, &b, kept))).unwrap();
        let s_star = m - removed.len();
        *supports.entry(s_star).or_insert(0) += 1;
        let eps = epsilon_closed_form(s_star, m, beta).unwrap();
        // a fresh (a, b) violates iff a > x1 or b > x2
        let true_violation = 1.0 - x[0] * x[1];
        failures += usize::from(true_violation > eps);
    }
    let frac = failures as f64 / reps as f64;
    let limit = beta + 3.0 * (beta * (1.0 - beta) / reps as f64).sqrt();
    let secs = t0.elapsed().as_secs_f64();
    let pass = frac <= limit && secs < 600.0 && supports.keys().all(|&s| s <= 2);
    report(
        5,
        "scenario guarantee Monte Carlo validity",
        pass,
        &format!("failure fraction {frac:.3} <= {limit:.3}, s* counts {supports:?}, {secs:.2} s"),
    );
    assert!(pass);
}

fn winter_data(start: NaiveDateTime, days: usize, seed: u64, stationary: bool) -> DemandHistory {
    let mut cfg = SyntheticDataConfig { start, hours: days * 24, seed, ..Default::default() };
    if stationary {
        cfg.temp_annual_amp = 0.0;
    }
    generate_synthetic_data(&cfg).unwrap()
}

#[test]
fn criterion_06_sampler_marginals() {
    let data = winter_data(at(2021, 1, 1), 50, 6, false);
    let fit = FitOptions { restarts: 1, max_train_rows: 120, window_hours: 240, ..Default::default() };
    let trained = ModelSet::train(&data.slice(0, 20 * 24), Some(&[Season::Winter]), &fit, &SeasonTable::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let m = 10_000;
    let mut worst = 0.0f64;
    let mut zero_var_exact = true;
    for state in 0..20 {
        let k = rng.gen_range(21 * 24..data.len() - 24);
        let hour = data.start_hour() + k as i64;
        let mut models = trained.clone();
        models.refresh_season(Season::Winter, &data, hour, 240).unwrap();
        let pred = models.predictors(Season::Winter).unwrap();
        let weather = WeatherForecast::from_history(&data, hour, 24).unwrap();
        let cfg = SamplerConfig { m, horizon: 1, seed: 600 + state, ..Default::default() };
        let set = sample_trajectories(pred, &data, hour, &weather, &cfg).unwrap();
        for kind in [ModelKind::Electric, ModelKind::Heat] {
            let fv = encode(kind, k, &data).unwrap();
            let (mu, var) = models.get(kind, Season::Winter).unwrap().predictive(&fv.values).unwrap();
            let draws: Vec<f64> = set
                .samples
                .iter()
                .map(|s| if kind == ModelKind::Electric { s.load_e[0] } else { s.load_h[0] })
                .collect();
            let mean = draws.iter().sum::<f64>() / m as f64;
            worst = worst.max((mean - mu).abs() / (var.sqrt() / (m as f64).sqrt()));
        }
        let zcfg = SamplerConfig { m: 3, horizon: 24, seed: 1, variance_scale: 0.0, ..Default::default() };
        let zero = sample_trajectories(pred, &data, hour, &weather, &zcfg).unwrap();
        let mean_path = mean_trajectory(pred, &data, hour, &weather, 24).unwrap();
        zero_var_exact &= zero.samples.iter().all(|s| s.load_e == mean_path.load_e && s.load_h == mean_path.load_h);
    }
    let pass = worst <= 4.0 && zero_var_exact;
    report(
        6,
        "sampler one-step marginals and zero-variance path",
        pass,
        &format!("max |mean - mu| = {worst:.2} sigma/sqrt(M), zero-variance exact {zero_var_exact}"),
    );
    assert!(pass);
}

struct Study {
    data: DemandHistory,
    models: ModelSet,
    params: HubParameters,
    tariffs: Tariffs,
}

/// 100 days of data from November; winter models fitted on the data
/// before the first simulated day.
fn study() -> Study {
    let data = winter_data(at(2020, 11, 1), 100, 1, false);
    let sim_start = hour_index(at(2021, 1, 5)) - data.start_hour();
    let fit = FitOptions { restarts: 2, max_train_rows: 250, window_hours: 504, seed: 0, ..Default::default() };
    let models =
        ModelSet::train(&data.slice(0, sim_start as usize), Some(&[Season::Winter]), &fit, &SeasonTable::default()).unwrap();
    Study { data, models, params: HubParameters::reference(), tariffs: Tariffs::illustrative() }
}

fn study_arm(controller: Controller, seed: u64, days: i64) -> SimulationConfig {
    let start = at(2021, 1, 5);
    SimulationConfig::new(start, start + chrono::Duration::days(days), controller, seed)
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[test]
fn criterion_07_closed_loop_trend() {
    let t0 = Instant::now();
    let st = study();
    let ms = [1usize, 3, 10, 50];
    let seeds = [1u64, 2, 3];
    let mut arms = vec![study_arm(Controller::PerfectDemand, 0, 20)];
    for &seed in &seeds {
        arms.extend(ms.iter().map(|&m| study_arm(Controller::Scenario { m }, seed, 20)));
    }
    let traces: Vec<ClosedLoopTrace> =
        run_arms(&arms, &st.params, &st.tariffs, &st.models, &st.data, jobs()).into_iter().map(Result::unwrap).collect();
    let pd = &traces[0];
    let mut lines = vec![format!("pd cost {:.3} viol {}", pd.mean_cost(), pd.violation_count())];
    let (mut seeds_monotone, mut cost_ok, mut pd_min) = (0, true, pd.violation_count() == 0);
    for (i, &seed) in seeds.iter().enumerate() {
        let row = &traces[1 + i * ms.len()..1 + (i + 1) * ms.len()];
        let cum: Vec<f64> = row.iter().map(|t| t.cumulative_violation()).collect();
        let cost: Vec<f64> = row.iter().map(|t| t.mean_cost()).collect();
        seeds_monotone += usize::from(cum.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        cost_ok &= cost.windows(2).all(|w| w[1] >= w[0] * (1.0 - 0.02));
        pd_min &= cost.iter().all(|&c| pd.mean_cost() <= c);
        lines.push(format!(
            "seed {seed}: cost {:?} cum kWh {:?} count {:?}",
            cost.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(),
            cum.iter().map(|c| format!("{c:.1}")).collect::<Vec<_>>(),
            row.iter().map(|t| t.violation_count()).collect::<Vec<_>>()
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = seeds_monotone >= 2 && cost_ok && pd_min && secs < 1800.0;
    for l in &lines {
        let _ = writeln!(std::io::stderr(), "    {l}");
    }
    report(
        7,
        "closed-loop trend over M in {1,3,10,50}",
        pass,
        &format!(
            "monotone violations on {seeds_monotone}/3 seeds, cost band {cost_ok}, pd zero-violation minimum {pd_min}, {:.0} s",
            secs
        ),
    );
    assert!(pass);
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn criterion_08_cli_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = s(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.toml"));
    let data = s(&root.join("gd/data.csv"));
    let models = s(&root.join("models"));
    let fc = root.join("fc");
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("gd", vec!["gen-data", "--config", &cfg, "--out", &s(&root.join("gd"))].into_iter().map(String::from).collect()),
        ("models", ["train", "--config", &cfg, "--data", &data, "--seasons", "winter", "--out", &models].map(String::from).to_vec()),
        (
            "fc",
            [
                "forecast", "--config", &cfg, "--data", &data, "--models", &models, "--at", "2021-01-20T00:00:00",
                "--solve-out", "sol.json", "--residuals-from", "2021-01-20", "--residuals-to", "2021-01-22", "--out",
                &s(&fc),
            ]
            .map(String::from)
            .to_vec(),
        ),
        (
            "sim",
            [
                "simulate", "--config", &cfg, "--data", &data, "--models", &models, "--controllers", "pd,scenario,mean",
                "--M", "1,3", "--seeds", "1,2", "--start", "2021-01-20", "--end", "2021-01-20T12:00:00", "--jobs", "2",
                "--out", &s(&root.join("sim")),
            ]
            .map(String::from)
            .to_vec(),
        ),
        (
            "cert",
            [
                "certify", "--solution", &s(&fc.join("sol.json")), "--scenarios", &s(&fc.join("trajectories.csv")),
                "--config", &cfg, "--out", &s(&root.join("cert")),
            ]
            .map(String::from)
            .to_vec(),
        ),
    ];
    let mut identical = 0;
    let mut files = 0;
    let mut bad = Vec::new();
    for (dir, args) in &commands {
        let mut argv = vec!["ehub".to_string()];
        argv.extend(args.iter().cloned());
        assert_eq!(run(argv), 0, "{dir}");
        let again = root.join(format!("{dir}_rerun"));
        assert_eq!(run(["ehub", "--from-manifest", &s(&root.join(dir).join("manifest.json")), "--out", &s(&again)]), 0);
        let first = RunManifest::read(&root.join(dir).join("manifest.json")).unwrap().outputs;
        let second = RunManifest::read(&again.join("manifest.json")).unwrap().outputs;
        // manifests hash what is on disk; compare the bytes too
        let same_bytes = first.keys().all(|f| std::fs::read(root.join(dir).join(f)).unwrap() == std::fs::read(again.join(f)).unwrap());
        files += first.len();
        if first == second && same_bytes && !first.is_empty() {
            identical += 1;
        } else {
            bad.push(dir.to_string());
        }
    }
    let pass = identical == commands.len();
    report(8, "CLI manifest reruns reproduce outputs", pass, &format!("{identical}/5 commands, {files} files, mismatches {bad:?}"));
    assert!(pass);
}

#[test]
fn criterion_09_conservation() {
    let st = study();
    let arms = [
        study_arm(Controller::PerfectDemand, 0, 3),
        study_arm(Controller::MeanForecast, 0, 3),
        study_arm(Controller::Scenario { m: 1 }, 9, 3),
        study_arm(Controller::Scenario { m: 10 }, 9, 3),
    ];
    let (mut max_hour, mut max_closure, mut hours) = (0.0f64, 0.0f64, 0);
    for tr in run_arms(&arms, &st.params, &st.tariffs, &st.models, &st.data, jobs()) {
        let tr = tr.unwrap();
        hours += tr.rows.len();
        for r in &tr.rows {
            max_hour = max_hour.max(r.residual_e.abs()).max(r.residual_h.abs());
        }
        max_closure = max_closure.max(summarize(&tr).unwrap().ledger_closure);
    }
    let pass = max_hour < 1e-6 && max_closure <= 1e-6;
    report(
        9,
        "per-hour and run-level energy ledgers",
        pass,
        &format!("{hours} h, max hourly residual {max_hour:.2e} kWh, max closure {max_closure:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_forecast_calibration() {
    let data = winter_data(at(2020, 12, 1), 90, 10, true);
    let train_end = hour_index(at(2021, 1, 1)) - data.start_hour();
    let fit = FitOptions { restarts: 2, max_train_rows: 250, window_hours: 504, ..Default::default() };
    let models = ModelSet::train(&data.slice(0, train_end as usize), Some(&[Season::Winter]), &fit, &SeasonTable::default())
        .unwrap();
    let from = hour_index(at(2021, 1, 1));
    let report_ = evaluate_one_step(&models, &data, from, from + 1100, 24, 504).unwrap();
    let all: Vec<_> = report_.points.values().flatten().copied().collect();
    let cov = ehub::forecast::coverage(&all, 0.9);
    let per_kind: Vec<String> = report_.stats.iter().map(|s| format!("{} {:.3}", s.kind.name(), s.coverage90)).collect();
    let pass = all.len() >= 2000 && (0.85..=0.95).contains(&cov);
    report(10, "90% interval coverage on stationary data", pass, &format!("{} predictions, coverage {cov:.3} ({})", all.len(), per_kind.join(", ")));
    assert!(pass);
}
