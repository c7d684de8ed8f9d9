//! Subcommand implementations. Each returns a [`Report`]: the CSV bundle,
//! a human-readable summary and the structured results behind both.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ifdiv::ctmc::{
    build_generator, derive_rates, steady_state, Component, CtmcModel, DependentEvaluator,
    DerivedRates, SteadyState, SubsystemAvailability, SubsystemRestoration,
};
use ifdiv::latmodel::{parse_trace, x_grid, InterfaceModel, LatencyCdf};
use ifdiv::optimize::{
    analytic_two_split, grid_search, split_expected_latency, GridSpec, OptimizationTarget,
    SigmaMode, SplitSolution, TwoSplit,
};
use ifdiv::sim::{
    ks_distance, simulate_ctmc, simulate_independent, trace_replay, EmpiricalResult, SimConfig,
    TraceSet, MINUTES_PER_WEEK,
};
use ifdiv::strategy::{k_of_n_strategy, CopyGroup, DecodeParams, Strategy, StrategyEvaluator};

use crate::config::{GroupKindSpec, ScenarioConfig, StrategySpec, TargetSpec};
use crate::error::CliError;
use crate::output::{config_digest, CurveBundle, OutcomeWriter, Provenance};

type Curve<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

/// Command-line values that take precedence over the scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<u64>,
    pub grid_step: Option<f64>,
    pub x_max: Option<f64>,
    pub x_step: Option<f64>,
    pub trace_dir: Option<PathBuf>,
}

/// A parsed scenario with overrides applied.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub digest: String,
    pub base_dir: PathBuf,
    pub params: DecodeParams,
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_text(&text, base, overrides).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn from_text(
        text: &str,
        base_dir: PathBuf,
        overrides: &Overrides,
    ) -> Result<Self, CliError> {
        let mut config = ScenarioConfig::parse(text)?;
        if let Some(s) = overrides.seed {
            config.simulation.seed = s;
        }
        if let Some(e) = overrides.epochs {
            if e == 0 {
                return Err(CliError::config("--epochs must be at least 1"));
            }
            config.simulation.epochs = e;
        }
        if let Some(s) = overrides.grid_step {
            config.grid.step = s;
        }
        if let Some(x) = overrides.x_max {
            config.x_grid.max_ms = x;
        }
        if let Some(x) = overrides.x_step {
            config.x_grid.step_ms = x;
        }
        if let Some(d) = &overrides.trace_dir {
            config.traces.dir = Some(d.display().to_string());
        }
        let params = DecodeParams::new(config.gamma_d)?;
        Ok(Self {
            config,
            digest: config_digest(text),
            base_dir,
            params,
        })
    }

    pub fn payload(&self) -> f64 {
        self.config.payload_bytes
    }

    pub fn names(&self) -> Vec<String> {
        self.config
            .interfaces
            .iter()
            .map(|i| i.name.clone())
            .collect()
    }

    fn index(&self, name: &str) -> usize {
        self.config
            .interface_index(name)
            .expect("interface references are validated at parse time")
    }

    pub fn models(&self) -> Result<Vec<InterfaceModel>, CliError> {
        self.config
            .interfaces
            .iter()
            .map(|i| match (i.alpha, i.beta, i.availability) {
                (Some(a), Some(b), Some(av)) => {
                    InterfaceModel::with_sigma_ratio(i.name.clone(), a, b, av, i.sigma_ratio())
                        .map_err(|e| CliError::from(e).context(&format!("interface `{}`", i.name)))
                }
                _ => Err(CliError::config(format!(
                    "interface `{}` has no latency model (alpha, beta, availability)",
                    i.name
                ))),
            })
            .collect()
    }

    pub fn x_grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(x_grid(
            self.config.x_grid.max_ms,
            self.config.x_grid.step_ms,
        )?)
    }

    pub fn target(&self, spec: &TargetSpec) -> Result<OptimizationTarget, CliError> {
        let latencies = match (&spec.latencies_ms, spec.range_ms) {
            (Some(l), _) => l.clone(),
            (None, Some([from, to, step])) => {
                if !(step > 0.0 && to >= from) {
                    return Err(CliError::config(format!(
                        "target `{}`: range_ms needs from <= to and step > 0",
                        spec.label
                    )));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| from + k as f64 * step).collect()
            }
            (None, None) => unreachable!("validated at parse time"),
        };
        let weights = spec
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0; latencies.len()]);
        OptimizationTarget::new(latencies, weights)
            .map_err(|e| CliError::from(e).context(&format!("target `{}`", spec.label)))
    }

    fn grid(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec::new(
            self.config.grid.step,
            self.config.grid.budget,
        )?)
    }

    /// Grid search over the configured interface subset, mapped back to all
    /// interfaces.
    pub fn optimize(
        &self,
        models: &[InterfaceModel],
        target: &TargetSpec,
    ) -> Result<OptimizedTarget, CliError> {
        let subset: Vec<usize> = match &self.config.grid.interfaces {
            Some(names) => names.iter().map(|n| self.index(n)).collect(),
            None => (0..models.len()).collect(),
        };
        let sub: Vec<&InterfaceModel> = subset.iter().map(|&i| &models[i]).collect();
        let goal = self.target(target)?;
        let start = Instant::now();
        let sol = grid_search(&sub, &goal, &self.grid()?, self.payload(), &self.params)?;
        let elapsed = start.elapsed();
        let mut gamma = vec![0.0; models.len()];
        for (&i, &g) in subset.iter().zip(&sol.gamma) {
            gamma[i] = g;
        }
        let strategy = Strategy::weighted(format!("weighted[{}]", target.label), &gamma);
        Ok(OptimizedTarget {
            label: target.label.clone(),
            gamma,
            objective: sol.objective,
            strategy,
            evaluated: sol.evaluated,
            elapsed,
        })
    }

    /// Resolves the configured strategies against modeled interfaces.
    pub fn strategies(&self, models: &[InterfaceModel]) -> Result<Vec<Strategy>, CliError> {
        self.config
            .strategies
            .iter()
            .map(|s| self.resolve(s, Some(models)))
            .collect()
    }

    fn resolve(
        &self,
        spec: &StrategySpec,
        models: Option<&[InterfaceModel]>,
    ) -> Result<Strategy, CliError> {
        let n = self.config.interfaces.len();
        let need_models = |what: &str| {
            models.ok_or_else(|| {
                CliError::config(format!("{what} strategies need modeled interfaces"))
            })
        };
        let relabel = |mut s: Strategy, label: &Option<String>| {
            if let Some(l) = label {
                s.label = l.clone();
            }
            s
        };
        let s = match spec {
            StrategySpec::Cloning { label } => relabel(Strategy::cloning(n), label),
            StrategySpec::KOfN { k, label } => relabel(k_of_n_strategy(*k, n, &self.params)?, label),
            StrategySpec::Weighted { label, fractions } => Strategy::weighted(
                label.clone().unwrap_or_else(|| "weighted".into()),
                fractions,
            ),
            StrategySpec::Groups { label, group } => Strategy::new(
                label.clone(),
                group
                    .iter()
                    .map(|g| {
                        let idx: Vec<usize> = g.interfaces.iter().map(|n| self.index(n)).collect();
                        match g.kind {
                            GroupKindSpec::Replica => {
                                if idx.len() != 1 {
                                    return Err(CliError::config(format!(
                                        "strategy `{label}`: a replica group names exactly one interface"
                                    )));
                                }
                                Ok(CopyGroup::replica(idx[0]))
                            }
                            kind => {
                                let fr = g.fractions.clone().unwrap_or_default();
                                let a = idx.into_iter().zip(fr).collect();
                                Ok(if kind == GroupKindSpec::Coded {
                                    CopyGroup::coded(a)
                                } else {
                                    CopyGroup::raw_split(a)
                                })
                            }
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            StrategySpec::AnalyticSplit { label, a, b, replicas } => {
                let models = need_models("analytic-split")?;
                let (ia, ib) = (self.index(a), self.index(b));
                let two = analytic_two_split(&models[ia], &models[ib], self.payload(), &self.params)?;
                let (fa, fb) = two.fractions(&self.params);
                let mut groups: Vec<CopyGroup> =
                    replicas.iter().map(|r| CopyGroup::replica(self.index(r))).collect();
                groups.push(CopyGroup::coded(vec![(ia, fa), (ib, fb)]));
                Strategy::new(label.clone().unwrap_or_else(|| "weighted".into()), groups)
            }
            StrategySpec::Optimized { label, target } => {
                let models = need_models("optimized")?;
                let t = self.config.target(target).expect("validated at parse time");
                relabel(self.optimize(models, t)?.strategy, label)
            }
        };
        s.validate(n, &self.params)?;
        Ok(s)
    }

    fn analytic_splits(
        &self,
        models: &[InterfaceModel],
    ) -> Result<Vec<(String, TwoSplit)>, CliError> {
        let mut out = Vec::new();
        for s in &self.config.strategies {
            if let StrategySpec::AnalyticSplit { a, b, .. } = s {
                let two = analytic_two_split(
                    &models[self.index(a)],
                    &models[self.index(b)],
                    self.payload(),
                    &self.params,
                )?;
                out.push((format!("{a}/{b}"), two));
            }
        }
        Ok(out)
    }

    fn provenance(&self, command: &str, seed: Option<u64>) -> Provenance {
        Provenance {
            command: command.into(),
            config_sha256: self.digest.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedTarget {
    pub label: String,
    pub gamma: Vec<f64>,
    pub objective: f64,
    pub strategy: Strategy,
    pub evaluated: u64,
    pub elapsed: Duration,
}

impl OptimizedTarget {
    pub fn bandwidth_fraction(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// Closed-form two-way split next to the grid search over the same pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticComparison {
    pub a: String,
    pub b: String,
    pub analytic: TwoSplit,
    pub grid: SplitSolution,
    /// Share of the coded data the grid puts on `a`.
    pub grid_share: f64,
    /// Exact expected completion time at each split.
    pub analytic_latency_ms: f64,
    pub grid_latency_ms: f64,
}

impl AnalyticComparison {
    pub fn latency_gap(&self) -> f64 {
        (self.analytic_latency_ms - self.grid_latency_ms).abs() / self.grid_latency_ms
    }
}

#[derive(Debug, Clone)]
pub struct CtmcReport {
    pub model: CtmcModel,
    pub derived: Option<DerivedRates>,
    pub steady: SteadyState,
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsLine {
    pub label: String,
    pub ks: f64,
    pub epochs: u64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub bundle: CurveBundle,
    pub summary: String,
    pub optimized: Vec<OptimizedTarget>,
    pub analytic: Option<AnalyticComparison>,
    pub ctmc: Option<CtmcReport>,
    pub ks: Vec<KsLine>,
    pub empirical: Vec<EmpiricalResult>,
}

impl Report {
    fn new(bundle: CurveBundle) -> Self {
        Self {
            bundle,
            summary: String::new(),
            optimized: Vec::new(),
            analytic: None,
            ctmc: None,
            ks: Vec::new(),
            empirical: Vec::new(),
        }
    }
}

fn strategy_curve<'a>(
    eval: &'a StrategyEvaluator,
    models: &'a [InterfaceModel],
    payload: f64,
) -> impl Fn(f64) -> f64 + 'a {
    move |x| eval.eval(models, x, payload)
}

fn describe(s: &Strategy, names: &[String]) -> String {
    s.groups
        .iter()
        .map(|g| {
            let parts: Vec<String> = g
                .assignments
                .iter()
                .filter(|a| a.1 > 0.0)
                .map(|&(i, f)| format!("{}={f:.4}", names[i]))
                .collect();
            format!("{:?}({})", g.kind, parts.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Per-interface and per-strategy latency-reliability curves.
pub fn cmd_eval(sc: &Scenario) -> Result<Report, CliError> {
    let models = sc.models()?;
    let strategies = sc.strategies(&models)?;
    let names = sc.names();
    let b = sc.payload();
    let mut bundle = CurveBundle::new(sc.x_grid()?, sc.provenance("eval", None));
    for m in &models {
        bundle.push_fn(format!("F:{}", m.name), |x| m.cdf(x, b));
    }
    let mut summary = String::new();
    for s in &strategies {
        let eval = StrategyEvaluator::new(s, models.len(), &sc.params)?;
        bundle.push_fn(s.label.clone(), strategy_curve(&eval, &models, b));
        let _ = writeln!(
            summary,
            "{}: {} (bandwidth {:.4} x B)",
            s.label,
            describe(s, &names),
            s.bandwidth_fraction()
        );
    }
    for (pair, two) in sc.analytic_splits(&models)? {
        let _ = writeln!(summary, "analytic split {pair}: gamma = {:.4}", two.gamma);
    }
    let mut r = Report::new(bundle);
    r.summary = summary;
    Ok(r)
}

/// Weighted-split optimization for every target, with k-of-N baselines.
pub fn cmd_optimize(sc: &Scenario) -> Result<Report, CliError> {
    if sc.config.targets.is_empty() {
        return Err(CliError::config("optimize needs at least one [[target]]"));
    }
    let models = sc.models()?;
    let names = sc.names();
    let n = models.len();
    let b = sc.payload();
    let mut bundle = CurveBundle::new(sc.x_grid()?, sc.provenance("optimize", None));
    let mut summary = String::new();
    let mut optimized = Vec::new();
    for t in &sc.config.targets {
        let o = sc.optimize(&models, t)?;
        let gam: Vec<String> = o
            .gamma
            .iter()
            .zip(&names)
            .map(|(g, n)| format!("{n}={g:.4}"))
            .collect();
        let _ = writeln!(
            summary,
            "target {}: gamma = [{}], objective = {:.9}, bandwidth = {:.4} x B = {:.1} bytes ({} points, {:.2?})",
            t.label,
            gam.join(", "),
            o.objective,
            o.bandwidth_fraction(),
            o.bandwidth_fraction() * b,
            o.evaluated,
            o.elapsed
        );
        optimized.push(o);
    }
    for o in &optimized {
        let eval = StrategyEvaluator::new(&o.strategy, n, &sc.params)?;
        bundle.push_fn(o.strategy.label.clone(), strategy_curve(&eval, &models, b));
    }
    for k in 1..=n {
        let s = k_of_n_strategy(k, n, &sc.params)?;
        let eval = StrategyEvaluator::new(&s, n, &sc.params)?;
        bundle.push_fn(s.label.clone(), strategy_curve(&eval, &models, b));
    }
    let analytic = match &sc.config.analytic {
        Some(spec) => {
            let (ia, ib) = (sc.index(&spec.a), sc.index(&spec.b));
            let (ma, mb) = (&models[ia], &models[ib]);
            let two = analytic_two_split(ma, mb, b, &sc.params)?;
            let goal = sc.target(&sc.config.targets[0])?;
            let grid = grid_search(&[ma, mb], &goal, &sc.grid()?, b, &sc.params)?;
            let total: f64 = grid.gamma.iter().sum();
            let grid_share = grid.gamma[0] / total;
            let lat =
                |g: f64| split_expected_latency(ma, mb, g, b, &sc.params, SigmaMode::Proportional);
            let cmp = AnalyticComparison {
                a: spec.a.clone(),
                b: spec.b.clone(),
                analytic: two,
                grid_share,
                analytic_latency_ms: lat(two.gamma),
                grid_latency_ms: lat(grid_share),
                grid,
            };
            let _ = writeln!(
                summary,
                "analytic {}/{}: gamma = {:.4}; grid share = {:.4} (gamma = [{:.4}, {:.4}]); expected latency {:.3} ms vs {:.3} ms (gap {:.3}%)",
                cmp.a,
                cmp.b,
                cmp.analytic.gamma,
                cmp.grid_share,
                cmp.grid.gamma[0],
                cmp.grid.gamma[1],
                cmp.analytic_latency_ms,
                cmp.grid_latency_ms,
                100.0 * cmp.latency_gap()
            );
            let s = Strategy::new(
                "analytic split",
                vec![CopyGroup::coded({
                    let (fa, fb) = two.fractions(&sc.params);
                    vec![(ia, fa), (ib, fb)]
                })],
            );
            let eval = StrategyEvaluator::new(&s, n, &sc.params)?;
            bundle.push_fn(s.label.clone(), strategy_curve(&eval, &models, b));
            Some(cmp)
        }
        None => None,
    };
    let mut r = Report::new(bundle);
    r.summary = summary;
    r.optimized = optimized;
    r.analytic = analytic;
    Ok(r)
}

/// Builds the failure chain described by the `[ctmc]` block.
pub fn build_chain(sc: &Scenario) -> Result<(CtmcModel, Option<DerivedRates>), CliError> {
    let spec = sc
        .config
        .ctmc
        .as_ref()
        .ok_or_else(|| CliError::config("this command needs a [ctmc] block"))?;
    let comp_index = |name: &str| {
        spec.components
            .iter()
            .position(|c| c.name == name)
            .expect("validated")
    };
    let mut derived = None;
    let mut components = Vec::with_capacity(spec.components.len());
    let rates_mode = spec.components.iter().all(|c| c.failure_rate.is_some());
    if rates_mode {
        for c in &spec.components {
            components.push(Component::new(
                c.name.clone(),
                c.failure_rate.unwrap(),
                c.restoration_rate,
            )?);
        }
    } else {
        let mut lambdas: Vec<Option<f64>> = vec![None; spec.components.len()];
        if let Some(cc) = &spec.common_cause {
            let (i1, i2, ib) = (
                comp_index(&cc.first),
                comp_index(&cc.second),
                comp_index(&cc.shared),
            );
            let c = &spec.components;
            let d = derive_rates(
                SubsystemAvailability {
                    c1: c[i1].availability.unwrap(),
                    c2: c[i2].availability.unwrap(),
                    bs: c[ib].availability.unwrap(),
                },
                SubsystemRestoration {
                    c1: c[i1].restoration_rate,
                    c2: c[i2].restoration_rate,
                    bs: c[ib].restoration_rate,
                },
            )?;
            lambdas[i1] = Some(d.lambda_c1);
            lambdas[i2] = Some(d.lambda_c2);
            lambdas[ib] = Some(d.lambda_bs);
            derived = Some(d);
        }
        for (c, l) in spec.components.iter().zip(lambdas) {
            components.push(match l {
                Some(l) => Component::new(c.name.clone(), l, c.restoration_rate)?,
                None => Component::from_availability(
                    c.name.clone(),
                    c.availability.unwrap(),
                    c.restoration_rate,
                )?,
            });
        }
    }
    let requirements = sc
        .config
        .interfaces
        .iter()
        .map(|i| {
            spec.depends[&i.name]
                .iter()
                .fold(0u32, |m, x| m | 1 << comp_index(x))
        })
        .collect();
    Ok((build_generator(components, requirements)?, derived))
}

fn efficiency(r: f64, bytes: f64) -> f64 {
    -(1.0 - r).log10() / bytes
}

fn state_name(model: &CtmcModel, s: u32) -> String {
    let down: Vec<&str> = model
        .components()
        .iter()
        .enumerate()
        .filter(|(x, _)| s & (1 << x) == 0)
        .map(|(_, c)| c.name.as_str())
        .collect();
    if down.is_empty() {
        "all up".into()
    } else {
        format!("{} down", down.join("+"))
    }
}

/// Independent versus correlated-failure curves and their efficiency.
pub fn cmd_ctmc(sc: &Scenario) -> Result<Report, CliError> {
    let models = sc.models()?;
    let (model, derived) = build_chain(sc)?;
    let steady = steady_state(&model)?;
    let strategies = sc.strategies(&models)?;
    let names = sc.names();
    let n = models.len();
    let b = sc.payload();
    let mut bundle = CurveBundle::new(sc.x_grid()?, sc.provenance("ctmc", None));
    let mut summary = String::new();
    let _ = writeln!(summary, "component rates (per week):");
    for c in model.components() {
        let _ = writeln!(
            summary,
            "  {}: lambda = {:.6}, mu = {:.6}, availability = {:.6}",
            c.name,
            c.failure_rate,
            c.restoration_rate,
            c.availability()
        );
    }
    if let Some(d) = &derived {
        let _ = writeln!(
            summary,
            "derived from availabilities (residuals {:.2e}, {:.2e})",
            d.probability_residual, d.rate_residual
        );
    }
    let _ = writeln!(summary, "steady state (residual {:.2e}):", steady.residual);
    for s in (0..model.state_count() as u32).rev() {
        let _ = writeln!(
            summary,
            "  {:<16} {:.9}",
            state_name(&model, s),
            steady.get(s)
        );
    }
    for (pair, two) in sc.analytic_splits(&models)? {
        let _ = writeln!(summary, "analytic split {pair}: gamma = {:.4}", two.gamma);
    }
    for s in &strategies {
        let ind = StrategyEvaluator::new(s, n, &sc.params)?;
        let dep = DependentEvaluator::new(&model, &steady, n, s, &sc.params)?;
        let bytes = s.total_bytes(b);
        let ind_vals: Vec<f64> = bundle
            .x_ms
            .iter()
            .map(|&x| ind.eval(&models, x, b))
            .collect();
        let dep_vals: Vec<f64> = bundle
            .x_ms
            .iter()
            .map(|&x| dep.eval(&models, x, b))
            .collect();
        let eff = |v: &[f64]| v.iter().map(|&r| efficiency(r, bytes)).collect::<Vec<_>>();
        let (ei, ed) = (eff(&ind_vals), eff(&dep_vals));
        bundle.push(format!("{} (independent)", s.label), ind_vals);
        bundle.push(format!("{} (MC model)", s.label), dep_vals);
        bundle.push(format!("{} efficiency (independent)", s.label), ei);
        bundle.push(format!("{} efficiency (MC model)", s.label), ed);
        let _ = writeln!(
            summary,
            "{}: {} ({:.0} bytes)",
            s.label,
            describe(s, &names),
            bytes
        );
    }
    let mut r = Report::new(bundle);
    r.summary = summary;
    r.ctmc = Some(CtmcReport {
        model,
        derived,
        steady,
        strategies,
    });
    Ok(r)
}

/// Monte-Carlo run: over the failure chain when `[ctmc]` is present,
/// otherwise with independent interface losses.
pub fn cmd_simulate(sc: &Scenario, outcomes: Option<&mut dyn Write>) -> Result<Report, CliError> {
    let models = sc.models()?;
    let strategies = sc.strategies(&models)?;
    let sim = &sc.config.simulation;
    let n = models.len();
    let b = sc.payload();
    let labels: Vec<String> = strategies.iter().map(|s| s.label.clone()).collect();
    let mut writer = match outcomes {
        Some(w) => Some(OutcomeWriter::new(w, labels)?),
        None => None,
    };
    let streaming = writer.is_some();
    let chain = match sc.config.ctmc {
        Some(_) => Some(build_chain(sc)?),
        None => None,
    };
    let steady = match &chain {
        Some((m, _)) => Some(steady_state(m)?),
        None => None,
    };
    let mut record = |k: u64, s: usize, v: Option<f64>| {
        if let Some(w) = writer.as_mut() {
            w.record(k, s, v);
        }
    };
    let (results, model_curves): (Vec<EmpiricalResult>, Vec<Curve<'_>>);
    match &chain {
        Some((model, _)) => {
            let per_rep = (sim.epochs / sim.replications.max(1) as u64).max(1);
            let cfg = SimConfig {
                weeks: per_rep as f64 * sim.interval_minutes / MINUTES_PER_WEEK,
                interval_minutes: sim.interval_minutes,
                timeout_ms: sim.timeout_ms,
                seed: sim.seed,
                replications: sim.replications,
            };
            let sink: Option<ifdiv::sim::OutcomeSink<'_>> =
                if streaming { Some(&mut record) } else { None };
            results = simulate_ctmc(model, &models, &strategies, b, &sc.params, &cfg, sink)?;
            let steady = steady.as_ref().expect("computed with the chain");
            model_curves = strategies
                .iter()
                .map(|s| {
                    let dep = DependentEvaluator::new(model, steady, n, s, &sc.params)?;
                    let models = models.clone();
                    Ok(Box::new(move |x| dep.eval(&models, x, b)) as Box<dyn Fn(f64) -> f64>)
                })
                .collect::<Result<_, CliError>>()?;
        }
        None => {
            results = simulate_independent(
                &models,
                &strategies,
                b,
                &sc.params,
                sim.epochs,
                sim.seed,
                sim.timeout_ms,
            )?;
            if streaming {
                return Err(CliError::config(
                    "--outcomes needs a [ctmc] block; independent runs keep only the sorted latencies",
                ));
            }
            model_curves = strategies
                .iter()
                .map(|s| {
                    let e = StrategyEvaluator::new(s, n, &sc.params)?;
                    let models = models.clone();
                    Ok(Box::new(move |x| e.eval(&models, x, b)) as Box<dyn Fn(f64) -> f64>)
                })
                .collect::<Result<_, CliError>>()?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let mut bundle = CurveBundle::new(sc.x_grid()?, sc.provenance("simulate", Some(sim.seed)));
    let mut summary = String::new();
    let mut ks = Vec::new();
    for (res, f) in results.iter().zip(&model_curves) {
        bundle.push_fn(format!("{} (simulated)", res.label), |x| res.eval(x));
        bundle.push_fn(format!("{} (model)", res.label), f);
        let d = ks_distance(res, f, sim.timeout_ms);
        let _ = writeln!(
            summary,
            "{}: {} epochs, decoded {:.6}, KS distance to model {:.6}",
            res.label,
            res.epochs(),
            res.asymptote(),
            d
        );
        ks.push(KsLine {
            label: res.label.clone(),
            ks: d,
            epochs: res.epochs(),
        });
    }
    let mut r = Report::new(bundle);
    r.summary = summary;
    r.ks = ks;
    r.empirical = results;
    Ok(r)
}

fn trace_dir(sc: &Scenario) -> PathBuf {
    match &sc.config.traces.dir {
        Some(d) if Path::new(d).is_absolute() => PathBuf::from(d),
        Some(d) => sc.base_dir.join(d),
        None => sc.base_dir.clone(),
    }
}

/// Loads every interface trace; missing files are reported together.
pub fn load_traces(sc: &Scenario) -> Result<TraceSet, CliError> {
    let dir = trace_dir(sc);
    let mut problems = Vec::new();
    let mut traces = Vec::new();
    for i in &sc.config.interfaces {
        let Some(file) = &i.trace else {
            problems.push(format!("interface `{}` has no trace file", i.name));
            continue;
        };
        let path = dir.join(file);
        match std::fs::read_to_string(&path) {
            Ok(text) => match parse_trace(&text) {
                Ok(rec) => traces.push(rec),
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            },
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::config(format!(
            "trace files unusable:\n  {}",
            problems.join("\n  ")
        )));
    }
    Ok(TraceSet::align(
        sc.names(),
        sc.config.traces.interval_ms,
        &traces,
    )?)
}

/// Plays the recorded traces back and compares with curves composed from
/// the per-interface marginals.
pub fn cmd_trace(sc: &Scenario, outcomes: Option<&mut dyn Write>) -> Result<Report, CliError> {
    let traces = load_traces(sc)?;
    let models = sc.models().ok();
    let strategies = sc
        .config
        .strategies
        .iter()
        .map(|s| sc.resolve(s, models.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = strategies.iter().map(|s| s.label.clone()).collect();
    let mut writer = match outcomes {
        Some(w) => Some(OutcomeWriter::new(w, labels)?),
        None => None,
    };
    let replay = {
        let mut record = |k: u64, s: usize, v: Option<f64>| {
            if let Some(w) = writer.as_mut() {
                w.record(k, s, v);
            }
        };
        trace_replay(&traces, &strategies, &sc.params, Some(&mut record))?
    };
    if let Some(w) = writer {
        w.finish()?;
    }
    let mut bundle = CurveBundle::new(sc.x_grid()?, sc.provenance("trace", None));
    let mut summary = format!("{} aligned probes per interface\n", traces.len());
    for (name, m) in sc.names().iter().zip(&replay.marginals) {
        bundle.push_fn(format!("trace:{name}"), |x| m.eval(x));
        let _ = writeln!(summary, "{name}: delivered {:.6}", m.availability());
    }
    let mut ks = Vec::new();
    for (i, res) in replay.empirical.iter().enumerate() {
        bundle.push_fn(format!("{} (replay)", res.label), |x| res.eval(x));
        bundle.push_fn(format!("{} (composed)", res.label), |x| {
            replay.composed(i, x)
        });
        let d = replay.ks_to_composed(i);
        let _ = writeln!(
            summary,
            "{}: decoded {:.6}, KS replay vs composed {:.6}",
            res.label,
            res.asymptote(),
            d
        );
        ks.push(KsLine {
            label: res.label.clone(),
            ks: d,
            epochs: res.epochs(),
        });
    }
    let mut r = Report::new(bundle);
    r.summary = summary;
    r.ks = ks;
    r.empirical = replay.empirical;
    Ok(r)
}
