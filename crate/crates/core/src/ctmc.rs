//! Correlated interface failures as a continuous-time Markov chain.
//!
//! Each component (a radio, a backhaul, a base station) alternates between up
//! and down with exponential failure and restoration times. A chain state is
//! the bitmask of components that are up; an interface is usable in a state
//! when every component it depends on is up. Rates are per week.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::latmodel::LatencyCdf;
use crate::strategy::{DecodeParams, Strategy, StrategyEvaluator};

/// Largest number of components accepted by [`build_generator`].
pub const MAX_COMPONENTS: usize = 10;

const STEADY_STATE_TOLERANCE: f64 = 1e-10;
const LEAST_SQUARES_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub failure_rate: f64,
    pub restoration_rate: f64,
}

impl Component {
    /// A component that never fails may have `failure_rate == 0`.
    pub fn new(name: impl Into<String>, failure_rate: f64, restoration_rate: f64) -> Result<Self> {
        if !(failure_rate >= 0.0 && failure_rate.is_finite()) {
            return Err(Error::param(
                "failure_rate",
                format!("must be finite and >= 0, got {failure_rate}"),
            ));
        }
        if !(restoration_rate > 0.0 && restoration_rate.is_finite()) {
            return Err(Error::param(
                "restoration_rate",
                format!("must be finite and > 0, got {restoration_rate}"),
            ));
        }
        Ok(Self {
            name: name.into(),
            failure_rate,
            restoration_rate,
        })
    }

    /// Component whose failure rate reproduces the given availability under a
    /// two-state up/down chain.
    pub fn from_availability(
        name: impl Into<String>,
        availability: f64,
        restoration_rate: f64,
    ) -> Result<Self> {
        let lambda = two_state_failure_rate(availability, restoration_rate)?;
        Self::new(name, lambda, restoration_rate)
    }

    pub fn availability(&self) -> f64 {
        self.restoration_rate / (self.failure_rate + self.restoration_rate)
    }
}

/// `lambda = mu (1 - A) / A` for an isolated two-state component.
pub fn two_state_failure_rate(availability: f64, restoration_rate: f64) -> Result<f64> {
    if !(availability > 0.0 && availability <= 1.0) {
        return Err(Error::param(
            "availability",
            format!("must lie in (0, 1], got {availability}"),
        ));
    }
    if !(restoration_rate > 0.0 && restoration_rate.is_finite()) {
        return Err(Error::param(
            "restoration_rate",
            format!("must be > 0, got {restoration_rate}"),
        ));
    }
    Ok(restoration_rate * (1.0 - availability) / availability)
}

/// Component chain plus the interface dependency rule.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcModel {
    components: Vec<Component>,
    /// Bitmask of required components for each interface.
    requirements: Vec<u32>,
    generator: DMatrix<f64>,
}

/// Builds the `2^n`-state generator. Exactly one component changes per
/// transition: a failure at `lambda_x` when `x` is up, a restoration at
/// `mu_x` when it is down.
pub fn build_generator(components: Vec<Component>, requirements: Vec<u32>) -> Result<CtmcModel> {
    let n = components.len();
    if n == 0 || n > MAX_COMPONENTS {
        return Err(Error::param(
            "components",
            format!("between 1 and {MAX_COMPONENTS} components required, got {n}"),
        ));
    }
    for c in &components {
        Component::new(c.name.clone(), c.failure_rate, c.restoration_rate)?;
    }
    let all = (1u32 << n) - 1;
    if let Some(r) = requirements.iter().find(|&&r| r & !all != 0) {
        return Err(Error::param(
            "requirements",
            format!("mask {r:#b} references a component beyond the {n} defined"),
        ));
    }
    let states = 1usize << n;
    let mut q = DMatrix::zeros(states, states);
    for s in 0..states {
        let mut out = 0.0;
        for (x, c) in components.iter().enumerate() {
            let bit = 1usize << x;
            let (target, rate) = if s & bit != 0 {
                (s & !bit, c.failure_rate)
            } else {
                (s | bit, c.restoration_rate)
            };
            q[(s, target)] = rate;
            out += rate;
        }
        q[(s, s)] = -out;
    }
    Ok(CtmcModel {
        components,
        requirements,
        generator: q,
    })
}

/// Names of the case-study components in chain bit order.
pub const CASE_STUDY_COMPONENTS: [&str; 4] = ["C1", "C2", "W", "BS"];

impl CtmcModel {
    /// Three-interface case study: cellular C1 and C2 share a base station BS,
    /// Wi-Fi W is independent. Interfaces are ordered C1, C2, W.
    pub fn case_study(c1: Component, c2: Component, w: Component, bs: Component) -> Result<Self> {
        build_generator(vec![c1, c2, w, bs], vec![0b1001, 0b1010, 0b0100])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn requirements(&self) -> &[u32] {
        &self.requirements
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn state_count(&self) -> usize {
        1 << self.components.len()
    }

    pub fn interface_count(&self) -> usize {
        self.requirements.len()
    }

    pub fn all_up(&self) -> u32 {
        (1u32 << self.components.len()) - 1
    }

    /// Interfaces usable in `state`, as a bitmask over interfaces.
    pub fn usable(&self, state: u32) -> u32 {
        self.requirements
            .iter()
            .enumerate()
            .filter(|(_, &req)| state & req == req)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    /// Total rate of leaving `state`.
    pub fn outflow(&self, state: u32) -> f64 {
        -self.generator[(state as usize, state as usize)]
    }

    /// `pi(s)` assuming independent components.
    pub fn product_form(&self) -> Vec<f64> {
        (0..self.state_count())
            .map(|s| {
                self.components
                    .iter()
                    .enumerate()
                    .map(|(x, c)| {
                        let a = c.availability();
                        if s & (1 << x) != 0 {
                            a
                        } else {
                            1.0 - a
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Long-run probability that component `x` is up, from a state vector.
    pub fn marginal_availability(&self, pi: &[f64], component: usize) -> f64 {
        pi.iter()
            .enumerate()
            .filter(|(s, _)| s & (1 << component) != 0)
            .map(|(_, p)| p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub probabilities: Vec<f64>,
    /// `max |(pi Q)_j|`.
    pub residual: f64,
}

impl SteadyState {
    pub fn get(&self, state: u32) -> f64 {
        self.probabilities[state as usize]
    }
}

/// Solves `pi Q = 0`, `sum(pi) = 1` and cross-checks the result against the
/// product of the per-component availabilities.
pub fn steady_state(model: &CtmcModel) -> Result<SteadyState> {
    let n = model.state_count();
    let mut a = model.generator.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or(Error::Singular("generator has no unique stationary vector"))?;
    let flow = pi.transpose() * &model.generator;
    let residual = flow
        .iter()
        .fold((pi.sum() - 1.0).abs(), |m, v| m.max(v.abs()));
    if residual.is_nan() || residual > STEADY_STATE_TOLERANCE {
        return Err(Error::Residual {
            residual,
            tolerance: STEADY_STATE_TOLERANCE,
        });
    }
    let mut probabilities: Vec<f64> = pi.iter().copied().collect();
    for (s, p) in probabilities.iter_mut().enumerate() {
        if *p < -STEADY_STATE_TOLERANCE {
            return Err(Error::NegativeProbability {
                state: s,
                value: *p,
            });
        }
        *p = p.max(0.0);
    }
    let product = model.product_form();
    let gap = probabilities
        .iter()
        .zip(&product)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    if gap > STEADY_STATE_TOLERANCE {
        return Err(Error::Residual {
            residual: gap,
            tolerance: STEADY_STATE_TOLERANCE,
        });
    }
    Ok(SteadyState {
        probabilities,
        residual,
    })
}

/// `F / A`: the latency distribution given that the interface is up.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedCdf<L>(pub L);

impl<L: LatencyCdf> LatencyCdf for NormalizedCdf<L> {
    fn cdf(&self, x_ms: f64, bytes: f64) -> f64 {
        let a = self.0.availability();
        if a > 0.0 {
            (self.0.cdf(x_ms, bytes) / a).min(1.0)
        } else {
            0.0
        }
    }

    fn availability(&self) -> f64 {
        1.0
    }
}

fn check_interfaces(model: &CtmcModel, count: usize) -> Result<()> {
    if model.interface_count() != count {
        return Err(Error::param(
            "interfaces",
            format!(
                "chain defines {} interfaces, got {count}",
                model.interface_count()
            ),
        ));
    }
    Ok(())
}

/// Normalized per-interface delivery probabilities at `x`.
fn normalized_probabilities<L: LatencyCdf>(
    eval: &StrategyEvaluator,
    interfaces: &[L],
    x_ms: f64,
    payload_bytes: f64,
) -> Vec<f64> {
    interfaces
        .iter()
        .zip(eval.loads())
        .map(|(m, &load)| NormalizedCdf(m).cdf(x_ms, load * payload_bytes))
        .collect()
}

fn masked(probs: &[f64], usable: u32) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if usable & (1 << i) != 0 { p } else { 0.0 })
        .collect()
}

/// `H_s(x, B)`: strategy success restricted to the interfaces usable in
/// `state`, with availability normalized out of each interface curve.
pub fn state_cdf<L: LatencyCdf>(
    model: &CtmcModel,
    state: u32,
    interfaces: &[L],
    strategy: &Strategy,
    x_ms: f64,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<f64> {
    check_interfaces(model, interfaces.len())?;
    let eval = StrategyEvaluator::new(strategy, interfaces.len(), params)?;
    let probs = normalized_probabilities(&eval, interfaces, x_ms, payload_bytes);
    Ok(eval.success_probability(&masked(&probs, model.usable(state))))
}

/// Strategy evaluation against a solved chain.
#[derive(Debug, Clone)]
pub struct DependentEvaluator<'a> {
    model: &'a CtmcModel,
    steady: &'a SteadyState,
    eval: StrategyEvaluator,
}

impl<'a> DependentEvaluator<'a> {
    pub fn new(
        model: &'a CtmcModel,
        steady: &'a SteadyState,
        interfaces: usize,
        strategy: &Strategy,
        params: &DecodeParams,
    ) -> Result<Self> {
        check_interfaces(model, interfaces)?;
        if steady.probabilities.len() != model.state_count() {
            return Err(Error::param(
                "steady_state",
                "state vector does not match the chain",
            ));
        }
        Ok(Self {
            model,
            steady,
            eval: StrategyEvaluator::new(strategy, interfaces, params)?,
        })
    }

    pub fn eval<L: LatencyCdf>(&self, interfaces: &[L], x_ms: f64, payload_bytes: f64) -> f64 {
        let probs = normalized_probabilities(&self.eval, interfaces, x_ms, payload_bytes);
        // states sharing a usable set share H_s
        let mut by_usable = vec![0.0; 1 << self.model.interface_count()];
        for (s, &pi) in self.steady.probabilities.iter().enumerate() {
            by_usable[self.model.usable(s as u32) as usize] += pi;
        }
        by_usable
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(usable, &w)| {
                w * self
                    .eval
                    .success_probability(&masked(&probs, usable as u32))
            })
            .sum()
    }
}

/// `sum_s pi_s H_s(x, B)`.
pub fn dependent_cdf<L: LatencyCdf>(
    model: &CtmcModel,
    steady: &SteadyState,
    interfaces: &[L],
    strategy: &Strategy,
    x_ms: f64,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<f64> {
    let eval = DependentEvaluator::new(model, steady, interfaces.len(), strategy, params)?;
    Ok(eval.eval(interfaces, x_ms, payload_bytes))
}

/// Availabilities of the shared-base-station cellular subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsystemAvailability {
    pub c1: f64,
    pub c2: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsystemRestoration {
    pub c1: f64,
    pub c2: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedRates {
    pub lambda_c1: f64,
    pub lambda_c2: f64,
    pub lambda_bs: f64,
    /// Subsystem state probabilities, states ordered: all up, C1 down,
    /// C2 down, BS down, C1+C2 down, C1+BS down, C2+BS down, all down.
    pub state_probabilities: [f64; 8],
    pub probability_residual: f64,
    pub rate_residual: f64,
}

fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|_| Error::Singular("least-squares decomposition failed"))?;
    let residual = (&a * &x - &b).norm();
    let tolerance = LEAST_SQUARES_TOLERANCE * b.norm();
    if residual > tolerance {
        return Err(Error::Residual {
            residual,
            tolerance,
        });
    }
    Ok((x, residual))
}

/// Derives the cellular-subsystem failure rates from availabilities and
/// assumed restoration rates in two linear stages.
///
/// Stage 1 solves a 9x8 system for the eight subsystem state probabilities
/// (three marginal-availability rows, five structural rows, normalization).
/// Stage 2 solves the 13x6 system of global balance equations, two cut
/// equations and the three known restoration rates for all six rates.
/// Both are overdetermined and solved in the least-squares sense; an
/// inconsistent system is rejected.
pub fn derive_rates(
    availability: SubsystemAvailability,
    restoration: SubsystemRestoration,
) -> Result<DerivedRates> {
    for (name, a) in [
        ("availability_c1", availability.c1),
        ("availability_c2", availability.c2),
        ("availability_bs", availability.bs),
    ] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must lie in (0, 1], got {a}"),
            });
        }
    }
    for (name, m) in [
        ("restoration_c1", restoration.c1),
        ("restoration_c2", restoration.c2),
        ("restoration_bs", restoration.bs),
    ] {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be > 0, got {m}"),
            });
        }
    }
    let (a1, a2, ab) = (availability.c1, availability.c2, availability.bs);
    let (n1, n2, nb) = (1.0 - a1, 1.0 - a2, 1.0 - ab);

    #[rustfmt::skip]
    let stage1 = DMatrix::from_row_slice(9, 8, &[
        1.0,  0.0,       1.0,       1.0, 0.0,      0.0,      1.0, 0.0,
        1.0,  1.0,       0.0,       1.0, 0.0,      1.0,      0.0, 0.0,
        1.0,  1.0,       1.0,       0.0, 1.0,      0.0,      0.0, 0.0,
        0.0,  a1 * n2,  -n1 * a2,   0.0, 0.0,      0.0,      0.0, 0.0,
        0.0,  0.0,       0.0,       0.0, 1.0,      0.0,      0.0, 0.0,
        0.0,  0.0,       0.0,       0.0, 0.0,      1.0,      0.0, 0.0,
        0.0,  0.0,       0.0,       0.0, 0.0,      0.0,      1.0, 0.0,
        0.0,  0.0,       0.0,       0.0, 0.0,      0.0,      0.0, 1.0,
        1.0,  1.0,       1.0,       1.0, 1.0,      1.0,      1.0, 1.0,
    ]);
    let rhs1 = DVector::from_row_slice(&[
        a1,
        a2,
        ab,
        0.0,
        n1 * n2 * ab,
        n1 * a2 * nb,
        a1 * n2 * nb,
        n1 * n2 * nb,
        1.0,
    ]);
    let (pi, probability_residual) = least_squares(stage1, rhs1)?;
    for (s, &p) in pi.iter().enumerate() {
        if p < -LEAST_SQUARES_TOLERANCE {
            return Err(Error::NegativeProbability { state: s, value: p });
        }
    }
    let p: [f64; 8] = std::array::from_fn(|i| pi[i].max(0.0));

    let c1_up = p[0] + p[2] + p[3] + p[6];
    let c2_up = p[0] + p[1] + p[3] + p[5];
    // unknowns: lambda_c1, lambda_c2, lambda_bs, mu_c1, mu_c2, mu_bs
    #[rustfmt::skip]
    let stage2 = DMatrix::from_row_slice(13, 6, &[
        -p[0], -p[0], -p[0],  p[1],  p[2],  p[3],
         p[0], -p[1], -p[1], -p[1],  p[4],  p[5],
        -p[2],  p[0], -p[2],  p[4], -p[2],  p[6],
        -p[3], -p[3],  p[0],  p[5],  p[6], -p[3],
         p[2],  p[1], -p[4], -p[4], -p[4],  p[7],
         p[3], -p[5],  p[1], -p[5],  p[7], -p[5],
        -p[6],  p[3],  p[2],  p[7], -p[6], -p[6],
         p[6],  p[5],  p[4], -p[7], -p[7], -p[7],
        c1_up,  0.0,   0.0, -(1.0 - c1_up), 0.0, 0.0,
         0.0,  c2_up,  0.0,  0.0, -(1.0 - c2_up), 0.0,
         0.0,   0.0,   0.0,  1.0,  0.0,  0.0,
         0.0,   0.0,   0.0,  0.0,  1.0,  0.0,
         0.0,   0.0,   0.0,  0.0,  0.0,  1.0,
    ]);
    let mut rhs2 = DVector::zeros(13);
    rhs2[10] = restoration.c1;
    rhs2[11] = restoration.c2;
    rhs2[12] = restoration.bs;
    let (rates, rate_residual) = least_squares(stage2, rhs2)?;
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    Ok(DerivedRates {
        lambda_c1: clean(rates[0]),
        lambda_c2: clean(rates[1]),
        lambda_bs: clean(rates[2]),
        state_probabilities: p,
        probability_residual,
        rate_residual,
    })
}
