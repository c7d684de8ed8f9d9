//! Acceptance suite: one PASS/FAIL line per criterion, sub-checks indented
//! beneath it. Exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ifdiv::ctmc::{
    derive_rates, steady_state, two_state_failure_rate, Component, CtmcModel,
    SubsystemAvailability, SubsystemRestoration,
};
use ifdiv::latmodel::{InterfaceModel, LatencyCdf, Probe};
use ifdiv::optimize::{analytic_two_split, split_expected_latency, SigmaMode};
use ifdiv::sim::{
    simulate_chain, simulate_ctmc, trace_replay, SimConfig, TraceSet, MINUTES_PER_WEEK,
};
use ifdiv::strategy::{
    deterministic_gain, k_of_n_strategy, outcome_probability, CopyGroup, DecodeParams, GroupKind,
    Strategy, StrategyEvaluator,
};
use ifdiv_cli::commands::{cmd_ctmc, cmd_optimize, Overrides, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Check {
    what: String,
    ok: bool,
}

fn check(what: impl Into<String>, ok: bool) -> Check {
    Check {
        what: what.into(),
        ok,
    }
}

fn scenario(name: &str, o: Overrides) -> Scenario {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../cli/scenarios")
        .join(name);
    Scenario::load(&p, &o).unwrap_or_else(|e| panic!("{name}: {}", e.message))
}

/// Smallest x with `f(x) >= r`, by bisection on a monotone curve.
fn latency_at<F: Fn(f64) -> f64>(f: F, r: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 10_000.0);
    if f(hi) < r {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn within(v: f64, want: f64, tol: f64) -> bool {
    (v - want).abs() <= tol
}

fn criterion_1() -> Vec<Check> {
    let sc = scenario("B.toml", Overrides::default());
    let models = sc.models().unwrap();
    let b = sc.payload();
    let start = Instant::now();
    let r = cmd_optimize(&sc).unwrap();
    let elapsed = start.elapsed();
    let opt = &r.optimized[0];
    let w = StrategyEvaluator::new(&opt.strategy, models.len(), &sc.params).unwrap();
    let c =
        StrategyEvaluator::new(&Strategy::cloning(models.len()), models.len(), &sc.params).unwrap();
    let rc = c.eval(&models, 700.0, b);
    let rw = w.eval(&models, 700.0, b);
    let lc = latency_at(|x| c.eval(&models, x, b), 0.997);
    let lw = latency_at(|x| w.eval(&models, x, b), 0.997);
    let secs = |l: Option<f64>| l.map_or("never".to_string(), |v| format!("{:.4} s", v / 1000.0));
    vec![
        check(
            format!("cloning R(0.7 s) = {rc:.5} (want 0.95 +- 0.01)"),
            within(rc, 0.95, 0.01),
        ),
        check(
            format!("weighted R(0.7 s) = {rw:.5} (want 0.997 +- 0.002)"),
            within(rw, 0.997, 0.002),
        ),
        check(
            format!(
                "cloning latency at R = 0.997: {} (want 1.05 +- 0.05 s)",
                secs(lc)
            ),
            lc.is_some_and(|v| within(v, 1050.0, 50.0)),
        ),
        check(
            format!(
                "weighted latency at R = 0.997: {} (want 0.70 +- 0.03 s)",
                secs(lw)
            ),
            lw.is_some_and(|v| within(v, 700.0, 30.0)),
        ),
        check(
            format!("grid search took {elapsed:.2?} (want < 1 min)"),
            elapsed < Duration::from_secs(60),
        ),
    ]
}

fn criterion_2() -> Vec<Check> {
    let sc = scenario("D.toml", Overrides::default());
    let models = sc.models().unwrap();
    let b = sc.payload();
    let n = models.len();
    let start = Instant::now();
    let r = cmd_optimize(&sc).unwrap();
    let elapsed = start.elapsed();
    let w = StrategyEvaluator::new(&r.optimized[0].strategy, n, &sc.params).unwrap();
    let rw = w.eval(&models, 500.0, b);
    let mut out = vec![check(
        format!("weighted R(0.5 s) = {rw:.6} (want >= 0.9998)"),
        rw >= 0.9998,
    )];
    for k in 1..=n {
        let s = k_of_n_strategy(k, n, &sc.params).unwrap();
        let e = StrategyEvaluator::new(&s, n, &sc.params).unwrap();
        let v = e.eval(&models, 500.0, b);
        out.push(check(
            format!("{} R(0.5 s) = {v:.6} (want <= 0.9992)", s.label),
            v <= 0.9992,
        ));
    }
    out.push(check(
        format!("grid search took {elapsed:.2?} (want < 10 min)"),
        elapsed < Duration::from_secs(600),
    ));
    out
}

fn criterion_3() -> Vec<Check> {
    let sc = scenario("A.toml", Overrides::default());
    let r = cmd_optimize(&sc).unwrap();
    let a = r.analytic.unwrap();
    let d = (a.analytic.gamma - a.grid_share).abs();
    vec![
        check(
            format!(
                "gamma analytic {:.4} vs grid {:.4}: |diff| = {d:.4} (want <= 0.02)",
                a.analytic.gamma, a.grid_share
            ),
            d <= 0.02,
        ),
        check(
            format!(
                "expected latency {:.3} ms vs {:.3} ms: gap {:.3}% (want <= 1%)",
                a.analytic_latency_ms,
                a.grid_latency_ms,
                100.0 * a.latency_gap()
            ),
            a.latency_gap() <= 0.01,
        ),
    ]
}

fn decades(ind: f64, dep: f64) -> f64 {
    ((1.0 - dep) / (1.0 - ind)).log10()
}

fn criterion_4() -> Vec<Check> {
    let sc = scenario("E.toml", Overrides::default());
    let models = sc.models().unwrap();
    let two = analytic_two_split(&models[1], &models[2], sc.payload(), &sc.params).unwrap();
    let r = cmd_ctmc(&sc).unwrap();
    let x = &r.bundle.x_ms;
    let at = |name: &str, ms: f64| {
        let i = x.iter().position(|&v| (v - ms).abs() < 1e-9).unwrap();
        r.bundle.get(name).unwrap()[i]
    };
    let gc = decades(
        at("cloning (independent)", 1000.0),
        at("cloning (MC model)", 1000.0),
    );
    let gw = decades(
        at("weighted (independent)", 1000.0),
        at("weighted (MC model)", 1000.0),
    );
    let eff = |s: &str| r.bundle.get(&format!("{s} efficiency (MC model)")).unwrap();
    let (ew, ec, e2) = (eff("weighted"), eff("cloning"), eff("2-of-3"));
    let mut worst: Option<f64> = None;
    for (i, &xv) in x.iter().enumerate() {
        if (200.0..=1000.0).contains(&xv) && (ew[i] < ec[i] || ew[i] < e2[i]) {
            worst.get_or_insert(xv);
        }
    }
    vec![
        check(
            format!("case-study gamma = {:.4} (want 0.55 +- 0.02)", two.gamma),
            within(two.gamma, 0.55, 0.02),
        ),
        check(
            format!("cloning independent vs MC model at 1 s: {gc:.3} decades (want >= 1)"),
            gc >= 1.0,
        ),
        check(
            format!("weighted independent vs MC model at 1 s: {gw:.3} decades (want <= 0.1)"),
            gw.abs() <= 0.1,
        ),
        check(
            match worst {
                None => "weighted has the best MC-model efficiency on [0.2, 1.0] s".to_string(),
                Some(v) => format!("weighted efficiency beaten at x = {v} ms"),
            },
            worst.is_none(),
        ),
    ]
}

/// Simulated scenario E against the correlated model. Failures persist for
/// hours while epochs are one minute apart, so the error bars come from
/// batch means rather than binomial counts.
fn criterion_4_sim() -> Vec<Check> {
    const EPOCHS: u64 = 10_000_000;
    const BATCHES: usize = 20;
    let sc = scenario(
        "E.toml",
        Overrides {
            epochs: Some(EPOCHS),
            ..Default::default()
        },
    );
    let ctmc = cmd_ctmc(&sc).unwrap();
    let rep = ctmc.ctmc.as_ref().unwrap();
    let labels: Vec<String> = rep.strategies.iter().map(|s| s.label.clone()).collect();
    let points = [200.0, 300.0, 400.0, 500.0, 600.0, 800.0, 1000.0];
    let mut hits = vec![vec![vec![0u64; points.len()]; BATCHES]; labels.len()];
    let per = EPOCHS / BATCHES as u64;
    let sim = &sc.config.simulation;
    let cfg = SimConfig {
        weeks: EPOCHS as f64 * sim.interval_minutes / MINUTES_PER_WEEK,
        interval_minutes: sim.interval_minutes,
        timeout_ms: sim.timeout_ms,
        seed: sim.seed,
        replications: 1,
    };
    let mut record = |k: u64, s: usize, v: Option<f64>| {
        let Some(v) = v else { return };
        let batch = ((k / per) as usize).min(BATCHES - 1);
        for (j, &p) in points.iter().enumerate() {
            if v <= p {
                hits[s][batch][j] += 1;
            }
        }
    };
    let models = sc.models().unwrap();
    simulate_ctmc(
        &rep.model,
        &models,
        &rep.strategies,
        sc.payload(),
        &sc.params,
        &cfg,
        Some(&mut record),
    )
    .unwrap();
    let x = &ctmc.bundle.x_ms;
    let mut out = Vec::new();
    for (s, label) in labels.iter().enumerate() {
        let model = ctmc.bundle.get(&format!("{label} (MC model)")).unwrap();
        let mut worst: f64 = 0.0;
        for (j, &p) in points.iter().enumerate() {
            let means: Vec<f64> = (0..BATCHES)
                .map(|b| hits[s][b][j] as f64 / per as f64)
                .collect();
            let m = means.iter().sum::<f64>() / BATCHES as f64;
            let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
            let se = (var / BATCHES as f64).sqrt();
            let i = x.iter().position(|&v| (v - p).abs() < 1e-9).unwrap();
            worst = worst.max((m - model[i]).abs() / se.max(1e-12));
        }
        out.push(check(
            format!("{label}: largest deviation {worst:.2} batch-means sigma (want <= 3)"),
            worst <= 3.0,
        ));
    }
    out
}

fn criterion_5() -> Vec<Check> {
    let g = deterministic_gain((1.0, 1.0), (8.0, 8.0), &DecodeParams::default()).unwrap();
    vec![check(
        format!("G_E2E = {:.4} (want in [0.40, 0.50])", g.gain),
        (0.40..=0.50).contains(&g.gain),
    )]
}

/// Decoding rule written out independently of the library.
fn oracle_decodes(s: &Strategy, received: &[bool], gamma_d: f64) -> bool {
    s.groups.iter().any(|g| {
        let got: f64 = g
            .assignments
            .iter()
            .filter(|a| received[a.0])
            .map(|a| a.1)
            .sum();
        match g.kind {
            GroupKind::Replica => got > 0.0,
            GroupKind::Coded => got >= gamma_d - 1e-9,
            GroupKind::RawSplit => got >= 1.0 - 1e-9,
        }
    })
}

fn random_models(rng: &mut ChaCha8Rng, n: usize) -> Vec<InterfaceModel> {
    (0..n)
        .map(|i| {
            InterfaceModel::new(
                format!("i{i}"),
                rng.random_range(0.01..0.8),
                rng.random_range(5.0..400.0),
                rng.random_range(0.9..1.0),
            )
            .unwrap()
        })
        .collect()
}

fn random_strategy(rng: &mut ChaCha8Rng, n: usize, gamma_d: f64) -> Strategy {
    let mut groups = Vec::new();
    if rng.random_bool(0.3) {
        groups.push(CopyGroup::replica(rng.random_range(0..n)));
    }
    let mut g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = g.iter().sum();
    let scale = gamma_d * rng.random_range(1.0..2.0) / total;
    g.iter_mut().for_each(|v| *v = (*v * scale).min(gamma_d));
    groups.push(CopyGroup::coded(g.into_iter().enumerate().collect()));
    Strategy::new("random", groups)
}

fn criterion_6() -> Vec<Check> {
    let p = DecodeParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();

    // Monte-Carlo composition.
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=4);
        let models = random_models(&mut rng, n);
        let s = random_strategy(&mut rng, n, p.gamma_d);
        let b = rng.random_range(200.0..3000.0);
        let x = rng.random_range(50.0..1500.0);
        let loads = s.interface_loads(n);
        let want = StrategyEvaluator::new(&s, n, &p)
            .unwrap()
            .eval(&models, x, b);
        let draws = 1_000_000;
        let mut hit = 0u64;
        let mut received = vec![false; n];
        for _ in 0..draws {
            for (i, m) in models.iter().enumerate() {
                let up = rng.random::<f64>() < m.availability;
                let mu = (m.alpha * loads[i] * b + m.beta) / 2.0;
                let z: f64 = rng.sample(StandardNormal);
                received[i] = up && mu + m.sigma_ratio * mu * z <= x;
            }
            hit += oracle_decodes(&s, &received, p.gamma_d) as u64;
        }
        let got = hit as f64 / draws as f64;
        let sigma = (want * (1.0 - want) / draws as f64).sqrt().max(1e-12);
        worst = worst.max((got - want).abs() / sigma);
    }
    out.push(check(
        format!("weighted_cdf vs Monte Carlo, 20 strategies: worst {worst:.2} sigma (want <= 3)"),
        worst <= 3.0,
    ));

    // 2-of-3 closed form.
    let m = InterfaceModel::new("u", 0.43, 200.0, 0.982).unwrap();
    let models = vec![m.clone(), m.clone(), m.clone()];
    let s = k_of_n_strategy(2, 3, &p).unwrap();
    let e = StrategyEvaluator::new(&s, 3, &p).unwrap();
    let mut err: f64 = 0.0;
    for k in 0..=150 {
        let x = k as f64 * 10.0;
        let f = m.cdf(x, p.gamma_d / 2.0 * 1500.0);
        err = err.max((e.eval(&models, x, 1500.0) - (3.0 * f * f * (1.0 - f) + f * f * f)).abs());
    }
    out.push(check(
        format!("2-of-3 closed form: max error {err:.1e} (want <= 1e-12)"),
        err <= 1e-12,
    ));

    // Total probability over outcomes.
    let mut err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let sum: f64 = (0..1u32 << n).map(|h| outcome_probability(h, &probs)).sum();
        err = err.max((sum - 1.0).abs());
    }
    out.push(check(
        format!("outcome probabilities sum to 1: max error {err:.1e} (want <= 1e-12)"),
        err <= 1e-12,
    ));

    // Steady state.
    let model = CtmcModel::case_study(
        Component::new("C1", 0.64, 50.4).unwrap(),
        Component::new("C2", 0.64, 50.4).unwrap(),
        Component::new("W", 1.47, 28.0).unwrap(),
        Component::new("BS", 0.76, 50.4).unwrap(),
    )
    .unwrap();
    let pi = steady_state(&model).unwrap().probabilities;
    let q = model.generator();
    let states = model.state_count();
    let balance = (0..states)
        .map(|j| (0..states).map(|i| pi[i] * q[(i, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let sum_err = (pi.iter().sum::<f64>() - 1.0).abs();
    let pf = model.product_form();
    let pf_err = pi
        .iter()
        .zip(&pf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(check(
        format!("steady state: |piQ| {balance:.1e}, |sum - 1| {sum_err:.1e}, product form {pf_err:.1e} (want <= 1e-12)"),
        balance <= 1e-12 && sum_err <= 1e-12 && pf_err <= 1e-12,
    ));
    let stats = simulate_chain(&model, 100_000, 8).unwrap();
    let nt = stats.transitions as f64;
    let occ = stats.occupancy();
    let worst = occ
        .iter()
        .zip(&pi)
        .map(|(g, w)| (g - w).abs() / (w * (1.0 - w) / nt).sqrt())
        .fold(0.0, f64::max);
    out.push(check(
        format!("occupancy over 1e5 transitions: worst {worst:.2} sigma (want <= 3)"),
        worst <= 3.0,
    ));

    // Rate derivation round trip.
    let mut err: f64 = 0.0;
    for _ in 0..100 {
        let avail = SubsystemAvailability {
            c1: rng.random_range(0.9..0.9999),
            c2: rng.random_range(0.9..0.9999),
            bs: rng.random_range(0.9..0.9999),
        };
        let rest = SubsystemRestoration {
            c1: rng.random_range(10.0..100.0),
            c2: rng.random_range(10.0..100.0),
            bs: rng.random_range(10.0..100.0),
        };
        let d = derive_rates(avail, rest).unwrap();
        let m = CtmcModel::case_study(
            Component::new("C1", d.lambda_c1, rest.c1).unwrap(),
            Component::new("C2", d.lambda_c2, rest.c2).unwrap(),
            Component::new("W", 1.0, 10.0).unwrap(),
            Component::new("BS", d.lambda_bs, rest.bs).unwrap(),
        )
        .unwrap();
        let pi = steady_state(&m).unwrap().probabilities;
        for (c, want) in [(0, avail.c1), (1, avail.c2), (3, avail.bs)] {
            err = err.max((m.marginal_availability(&pi, c) - want).abs());
        }
    }
    out.push(check(
        format!("derive_rates round trip, 100 triples: max error {err:.1e} (want <= 1e-8)"),
        err <= 1e-8,
    ));
    let lw = two_state_failure_rate(0.95, 28.0).unwrap();
    out.push(check(
        format!("two-state lambda_W = {lw:.4} from A = 0.95, mu = 28 (want 1.47)"),
        within(lw, 1.47, 0.005),
    ));

    // Clark stationarity.
    let mut worst: f64 = 0.0;
    let mut interior = 0;
    for _ in 0..200 {
        let mk = |rng: &mut ChaCha8Rng| {
            InterfaceModel::new(
                "i",
                rng.random_range(0.01..1.0),
                rng.random_range(10.0..800.0),
                1.0,
            )
            .unwrap()
        };
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let bytes = rng.random_range(200.0..5000.0);
        let s = analytic_two_split(&a, &b, bytes, &p).unwrap();
        let h = 1e-5;
        if s.gamma < 2.0 * h || s.gamma > 1.0 - 2.0 * h {
            continue;
        }
        interior += 1;
        let l = |g: f64| split_expected_latency(&a, &b, g, bytes, &p, SigmaMode::Frozen);
        let d = (l(s.gamma + h) - l(s.gamma - h)) / (2.0 * h);
        worst = worst.max(d.abs() / l(s.gamma));
    }
    out.push(check(
        format!("Clark stationarity over {interior} interior optima: max |dL/dgamma|/L = {worst:.1e} (want <= 1e-3)"),
        worst <= 1e-3 && interior > 0,
    ));

    // Trace replay against composition.
    let probes = 100_000;
    let mut seqs = Vec::new();
    for (mean, loss) in [(40.0, 0.05), (90.0, 0.02), (60.0, 0.1)] {
        let seq: Vec<Probe> = (0..probes)
            .map(|_| {
                if rng.random::<f64>() < loss {
                    Probe::Lost
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    Probe::Delivered((mean + mean / 4.0 * z).max(0.0))
                }
            })
            .collect();
        seqs.push(seq);
    }
    let set =
        TraceSet::from_sequences(vec!["a".into(), "b".into(), "c".into()], 100.0, seqs).unwrap();
    let strategies: Vec<Strategy> = (1..=3)
        .map(|k| k_of_n_strategy(k, 3, &p).unwrap())
        .collect();
    let replay = trace_replay(&set, &strategies, &p, None).unwrap();
    let worst = (0..3).map(|i| replay.ks_to_composed(i)).fold(0.0, f64::max);
    out.push(check(
        format!(
            "trace replay vs composed marginals, 1e5 probes: worst KS {worst:.4} (want <= 0.02)"
        ),
        worst <= 0.02,
    ));
    out
}

fn main() -> ExitCode {
    type Criterion = (&'static str, &'static str, fn() -> Vec<Check>);
    let criteria: [Criterion; 7] = [
        ("1", "scenario B latency reduction", criterion_1),
        ("2", "scenario D weighted vs k-of-5", criterion_2),
        ("3", "scenario A closed form vs grid search", criterion_3),
        ("4", "scenario E correlated failures", criterion_4),
        (
            "4-sim",
            "scenario E simulation vs correlated model",
            criterion_4_sim,
        ),
        ("5", "deterministic splitting gain", criterion_5),
        ("6", "property suites", criterion_6),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        failed += !ok as usize;
        println!(
            "{} criterion {id}: {name} ({:.1?})",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed()
        );
        for c in &checks {
            println!("    [{}] {}", if c.ok { "ok" } else { "FAIL" }, c.what);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
