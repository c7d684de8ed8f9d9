//! Payload allocation search.
//!
//! [`grid_search`] maximizes the weighted reliability at a set of target
//! latencies over a uniform grid of per-interface coded fractions.
//! [`analytic_two_split`] solves the two-interface expected-latency problem in
//! closed form, using Clark's expression for the mean of the maximum of two
//! Gaussians with standard deviations frozen at the equal split.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::latmodel::{
    std_normal_cdf, std_normal_pdf, std_normal_quantile, InterfaceModel, LatencyCdf,
};
use crate::strategy::{DecodeParams, Strategy, FRACTION_TOLERANCE, MAX_INTERFACES};

pub const DEFAULT_GRID_STEP: f64 = 0.05;
pub const DEFAULT_GRID_BUDGET: u64 = 100_000_000;

/// Target latencies `l` (ms) and their weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTarget {
    latencies: Vec<f64>,
    weights: Vec<f64>,
}

impl OptimizationTarget {
    pub fn new(latencies: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if latencies.is_empty() {
            return Err(Error::param(
                "target",
                "at least one target latency is required",
            ));
        }
        if latencies.len() != weights.len() {
            return Err(Error::param(
                "target",
                format!(
                    "{} latencies but {} weights",
                    latencies.len(),
                    weights.len()
                ),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::param(
                "weights",
                format!("weights must be > 0, got {w}"),
            ));
        }
        if let Some(l) = latencies.iter().find(|l| !l.is_finite()) {
            return Err(Error::param(
                "latencies",
                format!("latency must be finite, got {l}"),
            ));
        }
        Ok(Self { latencies, weights })
    }

    /// Uniformly weighted deadlines; maximizing their summed reliability is a
    /// Riemann-sum proxy for minimizing the expected latency.
    pub fn uniform(latencies: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; latencies.len()];
        Self::new(latencies, weights)
    }

    pub fn latencies(&self) -> &[f64] {
        &self.latencies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    /// Maximum number of grid points.
    pub budget: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: DEFAULT_GRID_STEP,
            budget: DEFAULT_GRID_BUDGET,
        }
    }
}

impl GridSpec {
    pub fn new(step: f64, budget: u64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param(
                "grid_step",
                format!("must be > 0, got {step}"),
            ));
        }
        Ok(Self { step, budget })
    }

    /// Per-interface values `0, step, 2 step, ...` up to `gamma_d`.
    pub fn values(&self, params: &DecodeParams) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.step <= params.gamma_d + FRACTION_TOLERANCE) {
            return Err(Error::param(
                "grid_step",
                format!("must lie in (0, {}], got {}", params.gamma_d, self.step),
            ));
        }
        let count = (params.gamma_d / self.step + 1e-9).floor() as usize;
        Ok((0..=count).map(|j| j as f64 * self.step).collect())
    }

    pub fn size(&self, interfaces: usize, params: &DecodeParams) -> Result<u128> {
        let per = self.values(params)?.len() as u128;
        Ok(per.checked_pow(interfaces as u32).unwrap_or(u128::MAX))
    }
}

/// Best allocation found by [`grid_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSolution {
    pub gamma: Vec<f64>,
    /// `sum_r w_r * F_weighted(l_r, gamma)`.
    pub objective: f64,
    pub strategy: Strategy,
    /// Number of feasible grid points evaluated.
    pub evaluated: u64,
}

impl SplitSolution {
    pub fn bandwidth_fraction(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    objective_key: i64,
    bandwidth_key: i64,
    linear: u64,
    objective: f64,
}

impl Candidate {
    /// Larger objective wins, then smaller bandwidth, then the smaller index
    /// vector in lexicographic order (interface 1 most significant).
    fn better_than(&self, other: &Candidate) -> bool {
        match self.objective_key.cmp(&other.objective_key) {
            Ordering::Greater => return true,
            Ordering::Less => return false,
            Ordering::Equal => {}
        }
        match self.bandwidth_key.cmp(&other.bandwidth_key) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
        self.linear < other.linear
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

struct Scratch {
    idx: Vec<usize>,
    sums: Vec<f64>,
    outcome: Vec<f64>,
}

/// Exhaustive search over the allocation grid.
///
/// Points with `sum(gamma) < gamma_d` are skipped. The search is split into
/// chunks evaluated in parallel; the reduction uses a strict total order so
/// the answer does not depend on scheduling.
pub fn grid_search<L: LatencyCdf + Sync>(
    interfaces: &[L],
    target: &OptimizationTarget,
    grid: &GridSpec,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<SplitSolution> {
    let n = interfaces.len();
    if n == 0 || n > MAX_INTERFACES {
        return Err(Error::InterfaceCount(n));
    }
    let values = grid.values(params)?;
    let per = values.len();
    let required = grid.size(n, params)?;
    if required > grid.budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: grid.budget,
        });
    }
    let max_total = values[per - 1] * n as f64;
    if max_total < params.gamma_d - FRACTION_TOLERANCE {
        return Err(Error::Infeasible {
            max_total,
            gamma_d: params.gamma_d,
        });
    }

    let lats = target.latencies();
    let weights = target.weights();
    let r_count = lats.len();
    // table[(i * per + j) * r_count + r] = F_i(l_r, values[j] * B)
    let mut table = Vec::with_capacity(n * per * r_count);
    for m in interfaces {
        for &v in &values {
            for &l in lats {
                table.push(m.cdf(l, v * payload_bytes));
            }
        }
    }

    let outcomes = 1usize << n;
    let total = required as u64;
    let threshold = params.gamma_d - FRACTION_TOLERANCE;

    let eval_point = |s: &mut Scratch, linear: u64| -> Option<Candidate> {
        // interface 1 is the most significant digit
        let mut rem = linear;
        for i in (0..n).rev() {
            s.idx[i] = (rem % per as u64) as usize;
            rem /= per as u64;
        }
        s.sums[0] = 0.0;
        for mask in 1..outcomes {
            let low = mask.trailing_zeros() as usize;
            s.sums[mask] = s.sums[mask & (mask - 1)] + values[s.idx[low]];
        }
        let bandwidth = s.sums[outcomes - 1];
        if bandwidth < threshold {
            return None;
        }
        let mut objective = 0.0;
        for r in 0..r_count {
            s.outcome[0] = 1.0;
            for i in 0..n {
                let p = table[(i * per + s.idx[i]) * r_count + r];
                let half = 1usize << i;
                for m in 0..half {
                    let base = s.outcome[m];
                    s.outcome[m | half] = base * p;
                    s.outcome[m] = base * (1.0 - p);
                }
            }
            let success: f64 = (0..outcomes)
                .filter(|&m| s.sums[m] >= threshold)
                .map(|m| s.outcome[m])
                .sum();
            objective += weights[r] * success;
        }
        Some(Candidate {
            objective_key: (objective * 1e12).round() as i64,
            bandwidth_key: (bandwidth * 1e9).round() as i64,
            linear,
            objective,
        })
    };

    let chunk = 4096u64;
    let chunks = total.div_ceil(chunk);
    let (best, evaluated) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = Scratch {
                idx: vec![0; n],
                sums: vec![0.0; outcomes],
                outcome: vec![0.0; outcomes],
            };
            let mut best = None;
            let mut count = 0u64;
            for linear in c * chunk..((c + 1) * chunk).min(total) {
                if let Some(cand) = eval_point(&mut s, linear) {
                    count += 1;
                    best = pick(best, Some(cand));
                }
            }
            (best, count)
        })
        .reduce(|| (None, 0), |a, b| (pick(a.0, b.0), a.1 + b.1));

    let best = best.ok_or(Error::Infeasible {
        max_total,
        gamma_d: params.gamma_d,
    })?;
    let mut rem = best.linear;
    let mut gamma = vec![0.0; n];
    for i in (0..n).rev() {
        gamma[i] = values[(rem % per as u64) as usize];
        rem /= per as u64;
    }
    Ok(SplitSolution {
        strategy: Strategy::weighted("weighted", &gamma),
        gamma,
        objective: best.objective,
        evaluated,
    })
}

/// Objective of [`grid_search`] for an arbitrary strategy.
pub fn target_objective<L: LatencyCdf>(
    interfaces: &[L],
    strategy: &Strategy,
    target: &OptimizationTarget,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<f64> {
    let eval = crate::strategy::StrategyEvaluator::new(strategy, interfaces.len(), params)?;
    Ok(target
        .latencies()
        .iter()
        .zip(target.weights())
        .map(|(&l, &w)| w * eval.eval(interfaces, l, payload_bytes))
        .sum())
}

/// Clark's expression for `E[max(X_A, X_B)]` with independent
/// `X_A ~ N(mu_a, sigma_a^2)`, `X_B ~ N(mu_b, sigma_b^2)`.
pub fn expected_max_latency(mu_a: f64, mu_b: f64, sigma_a: f64, sigma_b: f64) -> f64 {
    let xi = sigma_a.hypot(sigma_b);
    if xi == 0.0 {
        return mu_a.max(mu_b);
    }
    let eta = (mu_a - mu_b) / xi;
    mu_a * std_normal_cdf(eta) + mu_b * std_normal_cdf(-eta) + xi * std_normal_pdf(eta)
}

/// How latency spread is tied to the split when evaluating a two-way split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Standard deviations fixed at their equal-split values.
    Frozen,
    /// Standard deviations follow each interface's sigma rule at the actual
    /// packet size.
    Proportional,
}

/// Which side of the optimum carries the larger mean latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitBranch {
    AAtLeastB,
    ABelowB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSplit {
    /// Share of the coded copy sent over interface A, in `[0, 1]`.
    pub gamma: f64,
    /// Stationary point before clamping.
    pub unclamped: f64,
    pub branch: SplitBranch,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

impl TwoSplit {
    /// Coded fractions `(gamma * gamma_d, (1 - gamma) * gamma_d)`.
    pub fn fractions(&self, params: &DecodeParams) -> (f64, f64) {
        (
            self.gamma * params.gamma_d,
            (1.0 - self.gamma) * params.gamma_d,
        )
    }
}

/// Mean latency of each side when a share `gamma` of the coded copy goes
/// over `a` and the rest over `b`.
fn split_means(
    a: &InterfaceModel,
    b: &InterfaceModel,
    gamma: f64,
    payload_bytes: f64,
    params: &DecodeParams,
) -> (f64, f64) {
    let coded = params.gamma_d * payload_bytes;
    (
        a.mean_latency(gamma * coded),
        b.mean_latency((1.0 - gamma) * coded),
    )
}

fn frozen_sigmas(
    a: &InterfaceModel,
    b: &InterfaceModel,
    payload_bytes: f64,
    params: &DecodeParams,
) -> (f64, f64) {
    let (mu_a, mu_b) = split_means(a, b, 0.5, payload_bytes, params);
    (a.sigma_ratio * mu_a, b.sigma_ratio * mu_b)
}

/// Expected completion time of a two-way coded split (Clark's formula).
pub fn split_expected_latency(
    a: &InterfaceModel,
    b: &InterfaceModel,
    gamma: f64,
    payload_bytes: f64,
    params: &DecodeParams,
    mode: SigmaMode,
) -> f64 {
    let (mu_a, mu_b) = split_means(a, b, gamma, payload_bytes, params);
    let (sigma_a, sigma_b) = match mode {
        SigmaMode::Frozen => frozen_sigmas(a, b, payload_bytes, params),
        SigmaMode::Proportional => (a.sigma_ratio * mu_a, b.sigma_ratio * mu_b),
    };
    expected_max_latency(mu_a, mu_b, sigma_a, sigma_b)
}

/// Share of one coded copy to send over `a` (the rest goes over `b`) that
/// minimizes the expected completion time.
///
/// Setting the derivative of Clark's expression to zero gives
/// `Phi(eta) = alpha_b / (alpha_a + alpha_b)` with `eta = (mu_a - mu_b) / xi`,
/// which is linear in `gamma` once the standard deviations are frozen.
pub fn analytic_two_split(
    a: &InterfaceModel,
    b: &InterfaceModel,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<TwoSplit> {
    if !(payload_bytes > 0.0 && payload_bytes.is_finite()) {
        return Err(Error::param(
            "payload_bytes",
            format!("must be > 0, got {payload_bytes}"),
        ));
    }
    let (sigma_a, sigma_b) = frozen_sigmas(a, b, payload_bytes, params);
    let xi = sigma_a.hypot(sigma_b);
    let slope = a.alpha + b.alpha;
    let coded = params.gamma_d * payload_bytes;
    let unclamped = if slope == 0.0 {
        0.5
    } else {
        let eta = if xi > 0.0 {
            std_normal_quantile(b.alpha / slope)
        } else {
            0.0
        };
        (b.alpha * coded + b.beta - a.beta + 2.0 * xi * eta) / (slope * coded)
    };
    let gamma = unclamped.clamp(0.0, 1.0);
    let (mu_a, mu_b) = split_means(a, b, gamma, payload_bytes, params);
    let branch = if mu_a >= mu_b {
        SplitBranch::AAtLeastB
    } else {
        SplitBranch::ABelowB
    };
    Ok(TwoSplit {
        gamma,
        unclamped,
        branch,
        sigma_a,
        sigma_b,
    })
}
