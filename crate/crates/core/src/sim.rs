//! Monte-Carlo validation: CTMC failure trajectories with per-epoch latency
//! draws, independent-interface transmissions and trace playback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::ctmc::CtmcModel;
use crate::error::{Error, Result};
use crate::latmodel::{EmpiricalCdf, InterfaceModel, Probe, ReliabilityCurve, TraceRecord};
use crate::strategy::{DecodeParams, Strategy, StrategyEvaluator};

pub const MINUTES_PER_WEEK: f64 = 7.0 * 24.0 * 60.0;
pub const DEFAULT_TIMEOUT_MS: f64 = 10_000.0;
pub const DEFAULT_PROBE_INTERVAL_MS: f64 = 100.0;

/// Receives `(epoch_index, strategy_index, latency)` for every outcome in
/// epoch order; `None` is a timeout.
pub type OutcomeSink<'a> = &'a mut dyn FnMut(u64, usize, Option<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub weeks: f64,
    pub interval_minutes: f64,
    pub timeout_ms: f64,
    pub seed: u64,
    /// Independent trajectories, each `weeks` long. Outcomes are merged.
    pub replications: u32,
}

impl SimConfig {
    pub fn new(weeks: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            weeks,
            interval_minutes: 1.0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            seed,
            replications: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config whose trajectory covers exactly `epochs` sampling epochs at the
    /// default one-minute interval.
    pub fn for_epochs(epochs: u64, seed: u64) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        Self::new(epochs as f64 / MINUTES_PER_WEEK, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weeks > 0.0 && self.weeks.is_finite()) {
            return Err(Error::param(
                "weeks",
                format!("must be > 0, got {}", self.weeks),
            ));
        }
        if !(self.interval_minutes > 0.0 && self.interval_minutes.is_finite()) {
            return Err(Error::param(
                "interval_minutes",
                format!("must be > 0, got {}", self.interval_minutes),
            ));
        }
        if self.timeout_ms.is_nan() || self.timeout_ms <= 0.0 {
            return Err(Error::param(
                "timeout_ms",
                format!("must be > 0, got {}", self.timeout_ms),
            ));
        }
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.epochs() == 0 {
            return Err(Error::param("weeks", "shorter than one sampling interval"));
        }
        Ok(())
    }

    /// Sampling epochs per replication.
    pub fn epochs(&self) -> u64 {
        (self.weeks * MINUTES_PER_WEEK / self.interval_minutes + 1e-9).floor() as u64
    }

    fn interval_weeks(&self) -> f64 {
        self.interval_minutes / MINUTES_PER_WEEK
    }
}

/// Outcomes of one strategy over all epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalResult {
    pub label: String,
    /// Decode latencies of successful epochs, ascending.
    latencies: Vec<f64>,
    epochs: u64,
}

impl EmpiricalResult {
    pub fn new(label: impl Into<String>, mut latencies: Vec<f64>, epochs: u64) -> Self {
        latencies.sort_by(f64::total_cmp);
        Self {
            label: label.into(),
            latencies,
            epochs,
        }
    }

    pub fn latencies(&self) -> &[f64] {
        &self.latencies
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Fraction of epochs that decoded before the timeout.
    pub fn asymptote(&self) -> f64 {
        if self.epochs == 0 {
            0.0
        } else {
            self.latencies.len() as f64 / self.epochs as f64
        }
    }

    pub fn eval(&self, x_ms: f64) -> f64 {
        if self.epochs == 0 {
            return 0.0;
        }
        self.latencies.partition_point(|&v| v <= x_ms) as f64 / self.epochs as f64
    }

    pub fn curve(&self, xs: &[f64], payload_bytes: f64) -> ReliabilityCurve {
        ReliabilityCurve::sample(self.label.clone(), payload_bytes, xs, |x| self.eval(x))
    }

    fn merge(&mut self, other: EmpiricalResult) {
        let mut merged = Vec::with_capacity(self.latencies.len() + other.latencies.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.latencies, &other.latencies);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                merged.push(a[i]);
                i += 1;
            } else {
                merged.push(b[j]);
                j += 1;
            }
        }
        merged.extend_from_slice(&a[i..]);
        merged.extend_from_slice(&b[j..]);
        self.latencies = merged;
        self.epochs += other.epochs;
    }
}

/// Kolmogorov-Smirnov distance between an empirical result and a continuous
/// CDF, including the missing mass beyond `x_max`.
pub fn ks_distance<F: Fn(f64) -> f64>(result: &EmpiricalResult, f: F, x_max: f64) -> f64 {
    let n = result.epochs as f64;
    if result.epochs == 0 {
        return f(x_max).abs();
    }
    let mut d = 0.0f64;
    let lat = &result.latencies;
    let mut i = 0;
    while i < lat.len() {
        let v = lat[i];
        let mut j = i;
        while j < lat.len() && lat[j] == v {
            j += 1;
        }
        let fv = f(v);
        d = d
            .max((fv - i as f64 / n).abs())
            .max((fv - j as f64 / n).abs());
        i = j;
    }
    d.max((f(x_max) - result.asymptote()).abs())
}

/// KS distance between two step functions whose jumps all lie in `points`.
pub fn ks_distance_steps<F, G>(points: &[f64], f: F, g: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    points.iter().fold(0.0, |d, &x| d.max((f(x) - g(x)).abs()))
}

/// Earliest time the strategy decodes given per-interface arrivals
/// (`None` = lost).
pub fn decode_latency(eval: &StrategyEvaluator, arrivals: &[Option<f64>]) -> Option<f64> {
    let mut order: Vec<(f64, usize)> = arrivals
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|t| (t, i)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut mask = 0u32;
    for (t, i) in order {
        mask |= 1 << i;
        if eval.decodes(mask) {
            return Some(t);
        }
    }
    None
}

/// Per-strategy sampling constants.
struct Compiled {
    label: String,
    decodable: Vec<bool>,
    /// `(mean, sigma)` per interface, `None` when the interface carries no load.
    gauss: Vec<Option<(f64, f64)>>,
}

impl Compiled {
    fn new(
        strategy: &Strategy,
        interfaces: &[InterfaceModel],
        payload_bytes: f64,
        params: &DecodeParams,
    ) -> Result<Self> {
        let eval = StrategyEvaluator::new(strategy, interfaces.len(), params)?;
        let mut decodable = vec![false; 1 << interfaces.len()];
        for &h in eval.decodable_outcomes() {
            decodable[h as usize] = true;
        }
        let gauss = interfaces
            .iter()
            .zip(eval.loads())
            .map(|(m, &load)| {
                (load > 0.0).then(|| {
                    let bytes = load * payload_bytes;
                    (m.mean_latency(bytes), m.sigma(bytes))
                })
            })
            .collect();
        Ok(Self {
            label: strategy.label.clone(),
            decodable,
            gauss,
        })
    }

    /// `z[i]` is the standard-normal draw of interface `i`; interfaces not
    /// in `usable` are lost.
    fn outcome(
        &self,
        usable: u32,
        z: &[f64],
        timeout_ms: f64,
        scratch: &mut Vec<(f64, usize)>,
    ) -> Option<f64> {
        scratch.clear();
        for (i, g) in self.gauss.iter().enumerate() {
            if let Some((mu, sigma)) = g {
                if usable & (1 << i) != 0 {
                    scratch.push(((mu + sigma * z[i]).max(0.0), i));
                }
            }
        }
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut mask = 0usize;
        for &(t, i) in scratch.iter() {
            mask |= 1 << i;
            if self.decodable[mask] {
                return (t <= timeout_ms).then_some(t);
            }
        }
        None
    }
}

fn compile(
    strategies: &[Strategy],
    interfaces: &[InterfaceModel],
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<Vec<Compiled>> {
    if !(payload_bytes > 0.0 && payload_bytes.is_finite()) {
        return Err(Error::param(
            "payload_bytes",
            format!("must be > 0, got {payload_bytes}"),
        ));
    }
    strategies
        .iter()
        .map(|s| Compiled::new(s, interfaces, payload_bytes, params))
        .collect()
}

fn replication_rng(seed: u64, replication: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Draws a state from the product-form stationary distribution.
fn stationary_state(model: &CtmcModel, rng: &mut ChaCha8Rng) -> u32 {
    model.components().iter().enumerate().fold(0, |s, (x, c)| {
        if rng.random::<f64>() < c.availability() {
            s | (1 << x)
        } else {
            s
        }
    })
}

/// Jump chain with exponential holding times.
struct Trajectory<'a> {
    model: &'a CtmcModel,
    state: u32,
    next_jump: f64,
}

impl<'a> Trajectory<'a> {
    fn start(model: &'a CtmcModel, rng: &mut ChaCha8Rng) -> Self {
        let state = stationary_state(model, rng);
        let mut t = Self {
            model,
            state,
            next_jump: 0.0,
        };
        t.next_jump = t.holding(rng);
        t
    }

    fn holding(&self, rng: &mut ChaCha8Rng) -> f64 {
        let rate = self.model.outflow(self.state);
        if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng) {
        let rate = self.model.outflow(self.state);
        let mut u = rng.random::<f64>() * rate;
        let comps = self.model.components();
        let mut flip = comps.len() - 1;
        for (x, c) in comps.iter().enumerate() {
            let r = if self.state & (1 << x) != 0 {
                c.failure_rate
            } else {
                c.restoration_rate
            };
            if u < r {
                flip = x;
                break;
            }
            u -= r;
        }
        self.state ^= 1 << flip;
        self.next_jump += self.holding(rng);
    }
}

fn run_ctmc_replication(
    model: &CtmcModel,
    compiled: &[Compiled],
    cfg: &SimConfig,
    replication: u32,
    mut sink: Option<OutcomeSink<'_>>,
    epoch_offset: u64,
) -> Vec<EmpiricalResult> {
    let mut rng = replication_rng(cfg.seed, replication);
    let n = model.interface_count();
    let epochs = cfg.epochs();
    let dt = cfg.interval_weeks();
    let mut traj = Trajectory::start(model, &mut rng);
    let mut z = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut lat: Vec<Vec<f64>> = compiled.iter().map(|_| Vec::new()).collect();
    for k in 0..epochs {
        let t = k as f64 * dt;
        while traj.next_jump <= t {
            traj.jump(&mut rng);
        }
        let usable = model.usable(traj.state);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for (s, c) in compiled.iter().enumerate() {
            let out = c.outcome(usable, &z, cfg.timeout_ms, &mut scratch);
            if let Some(v) = out {
                lat[s].push(v);
            }
            if let Some(f) = sink.as_mut() {
                f(epoch_offset + k, s, out);
            }
        }
    }
    compiled
        .iter()
        .zip(lat)
        .map(|(c, l)| EmpiricalResult::new(c.label.clone(), l, epochs))
        .collect()
}

fn merge_replications(mut parts: Vec<Vec<EmpiricalResult>>) -> Vec<EmpiricalResult> {
    let mut acc = parts.remove(0);
    for part in parts {
        for (a, b) in acc.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    acc
}

/// Simulates the failure chain and, at every sampling epoch, one
/// transmission per strategy over the interfaces usable in the current
/// state. Latencies are truncated Gaussians drawn independently per
/// interface; the normal draw of an interface is shared by all strategies in
/// the same epoch. The trajectory starts from a stationary draw.
///
/// With a sink, replications run sequentially and outcomes are streamed in
/// epoch order; otherwise they run in parallel.
pub fn simulate_ctmc(
    model: &CtmcModel,
    interfaces: &[InterfaceModel],
    strategies: &[Strategy],
    payload_bytes: f64,
    params: &DecodeParams,
    cfg: &SimConfig,
    sink: Option<OutcomeSink<'_>>,
) -> Result<Vec<EmpiricalResult>> {
    cfg.validate()?;
    if interfaces.len() != model.interface_count() {
        return Err(Error::param(
            "interfaces",
            format!(
                "chain defines {} interfaces, got {}",
                model.interface_count(),
                interfaces.len()
            ),
        ));
    }
    let compiled = compile(strategies, interfaces, payload_bytes, params)?;
    let parts = match sink {
        Some(sink) => (0..cfg.replications)
            .map(|r| {
                run_ctmc_replication(
                    model,
                    &compiled,
                    cfg,
                    r,
                    Some(&mut *sink),
                    r as u64 * cfg.epochs(),
                )
            })
            .collect(),
        None => (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_ctmc_replication(model, &compiled, cfg, r, None, 0))
            .collect(),
    };
    Ok(merge_replications(parts))
}

/// Holding-time and occupancy statistics of a bare chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub visits: Vec<u64>,
    pub holding_time: Vec<f64>,
    pub transitions: u64,
}

impl ChainStats {
    pub fn total_time(&self) -> f64 {
        self.holding_time.iter().sum()
    }

    pub fn occupancy(&self) -> Vec<f64> {
        let total = self.total_time();
        self.holding_time.iter().map(|h| h / total).collect()
    }

    pub fn mean_holding(&self, state: u32) -> Option<f64> {
        let v = self.visits[state as usize];
        (v > 0).then(|| self.holding_time[state as usize] / v as f64)
    }
}

/// Runs the jump chain for `transitions` completed sojourns.
pub fn simulate_chain(model: &CtmcModel, transitions: u64, seed: u64) -> Result<ChainStats> {
    if transitions == 0 {
        return Err(Error::param("transitions", "must be at least 1"));
    }
    let mut rng = replication_rng(seed, 0);
    let mut traj = Trajectory::start(model, &mut rng);
    let states = model.state_count();
    let mut stats = ChainStats {
        visits: vec![0; states],
        holding_time: vec![0.0; states],
        transitions,
    };
    let mut entry = 0.0;
    for _ in 0..transitions {
        let s = traj.state as usize;
        let exit = traj.next_jump;
        if !exit.is_finite() {
            return Err(Error::param("model", "chain has an absorbing state"));
        }
        traj.jump(&mut rng);
        stats.visits[s] += 1;
        stats.holding_time[s] += exit - entry;
        entry = exit;
    }
    Ok(stats)
}

/// Independent interfaces: each is lost with probability `1 - A_i`,
/// otherwise delivers after a truncated Gaussian latency.
pub fn simulate_independent(
    interfaces: &[InterfaceModel],
    strategies: &[Strategy],
    payload_bytes: f64,
    params: &DecodeParams,
    epochs: u64,
    seed: u64,
    timeout_ms: f64,
) -> Result<Vec<EmpiricalResult>> {
    if epochs == 0 {
        return Err(Error::param("epochs", "must be at least 1"));
    }
    let compiled = compile(strategies, interfaces, payload_bytes, params)?;
    let mut rng = replication_rng(seed, 0);
    let n = interfaces.len();
    let mut z = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut lat: Vec<Vec<f64>> = compiled.iter().map(|_| Vec::new()).collect();
    for _ in 0..epochs {
        let mut usable = 0u32;
        for (i, m) in interfaces.iter().enumerate() {
            if rng.random::<f64>() < m.availability {
                usable |= 1 << i;
            }
            z[i] = rng.sample(StandardNormal);
        }
        for (s, c) in compiled.iter().enumerate() {
            if let Some(v) = c.outcome(usable, &z, timeout_ms, &mut scratch) {
                lat[s].push(v);
            }
        }
    }
    Ok(compiled
        .iter()
        .zip(lat)
        .map(|(c, l)| EmpiricalResult::new(c.label.clone(), l, epochs))
        .collect())
}

/// Per-interface probe sequences on a common epoch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub names: Vec<String>,
    pub interval_ms: f64,
    probes: Vec<Vec<Probe>>,
}

impl TraceSet {
    /// Sequences must already have equal length.
    pub fn from_sequences(
        names: Vec<String>,
        interval_ms: f64,
        probes: Vec<Vec<Probe>>,
    ) -> Result<Self> {
        if probes.is_empty() || names.len() != probes.len() {
            return Err(Error::param(
                "traces",
                "one name per non-empty trace list required",
            ));
        }
        let lens: Vec<usize> = probes.iter().map(Vec::len).collect();
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(Error::Misaligned(lens));
        }
        if lens[0] == 0 {
            return Err(Error::EmptyTrace);
        }
        if interval_ms.is_nan() || interval_ms <= 0.0 {
            return Err(Error::param(
                "interval_ms",
                format!("must be > 0, got {interval_ms}"),
            ));
        }
        Ok(Self {
            names,
            interval_ms,
            probes,
        })
    }

    /// Places each record in slot `round((t - t_0) / interval)` of its own
    /// trace, marks empty slots as lost and truncates every trace to the
    /// shortest one.
    pub fn align(
        names: Vec<String>,
        interval_ms: f64,
        traces: &[Vec<TraceRecord>],
    ) -> Result<Self> {
        if interval_ms.is_nan() || interval_ms <= 0.0 {
            return Err(Error::param(
                "interval_ms",
                format!("must be > 0, got {interval_ms}"),
            ));
        }
        let mut slotted = Vec::with_capacity(traces.len());
        for (idx, records) in traces.iter().enumerate() {
            let first = records.first().ok_or(Error::EmptyTrace)?.timestamp_ms;
            let mut seq: Vec<Probe> = Vec::with_capacity(records.len());
            for (line, r) in records.iter().enumerate() {
                let slot = ((r.timestamp_ms - first) / interval_ms).round();
                if slot < seq.len() as f64 {
                    return Err(Error::param(
                        "traces",
                        format!(
                            "trace {idx}: record {} does not advance the probe clock",
                            line + 1
                        ),
                    ));
                }
                let slot = slot as usize;
                seq.resize(slot, Probe::Lost);
                seq.push(r.probe);
            }
            slotted.push(seq);
        }
        let common = slotted.iter().map(Vec::len).min().unwrap_or(0);
        for seq in &mut slotted {
            seq.truncate(common);
        }
        Self::from_sequences(names, interval_ms, slotted)
    }

    pub fn len(&self) -> usize {
        self.probes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interfaces(&self) -> usize {
        self.probes.len()
    }

    pub fn probes(&self, interface: usize) -> &[Probe] {
        &self.probes[interface]
    }

    pub fn marginals(&self) -> Result<Vec<EmpiricalCdf>> {
        self.probes
            .iter()
            .map(|p| EmpiricalCdf::from_probes(p.iter().copied()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub empirical: Vec<EmpiricalResult>,
    pub marginals: Vec<EmpiricalCdf>,
    evaluators: Vec<StrategyEvaluator>,
}

impl ReplayResult {
    /// Strategy curve composed from the per-interface marginals by total
    /// probability, assuming independent interfaces.
    pub fn composed(&self, strategy: usize, x_ms: f64) -> f64 {
        self.evaluators[strategy].eval(&self.marginals, x_ms, 1.0)
    }

    /// Exact KS distance between the replayed and composed curves.
    pub fn ks_to_composed(&self, strategy: usize) -> f64 {
        let mut points: Vec<f64> = self
            .marginals
            .iter()
            .flat_map(|m| m.delivered().iter().copied())
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        ks_distance_steps(
            &points,
            |x| self.empirical[strategy].eval(x),
            |x| self.composed(strategy, x),
        )
    }
}

/// Plays the traces back epoch by epoch. Trace latencies do not depend on
/// the fraction carried, so every strategy sees the same arrival tuple.
pub fn trace_replay(
    traces: &TraceSet,
    strategies: &[Strategy],
    params: &DecodeParams,
    mut sink: Option<OutcomeSink<'_>>,
) -> Result<ReplayResult> {
    let n = traces.interfaces();
    let evaluators = strategies
        .iter()
        .map(|s| StrategyEvaluator::new(s, n, params))
        .collect::<Result<Vec<_>>>()?;
    let mut lat: Vec<Vec<f64>> = strategies.iter().map(|_| Vec::new()).collect();
    let mut arrivals = vec![None; n];
    for k in 0..traces.len() {
        for (i, a) in arrivals.iter_mut().enumerate() {
            *a = traces.probes[i][k].latency();
        }
        for (s, e) in evaluators.iter().enumerate() {
            let out = decode_latency(e, &arrivals);
            if let Some(v) = out {
                lat[s].push(v);
            }
            if let Some(f) = sink.as_mut() {
                f(k as u64, s, out);
            }
        }
    }
    let epochs = traces.len() as u64;
    Ok(ReplayResult {
        empirical: strategies
            .iter()
            .zip(lat)
            .map(|(s, l)| EmpiricalResult::new(s.label.clone(), l, epochs))
            .collect(),
        marginals: traces.marginals()?,
        evaluators,
    })
}
