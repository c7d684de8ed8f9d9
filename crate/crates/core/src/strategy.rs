//! Transmission strategies as payload-fraction assignments, and their
//! latency-reliability composition over all reception outcomes.

use crate::error::{Error, Result};
use crate::latmodel::LatencyCdf;

/// Slack used when comparing summed fractions against a decoding threshold.
pub const FRACTION_TOLERANCE: f64 = 1e-9;

/// Largest interface count for which outcomes are enumerated.
pub const MAX_INTERFACES: usize = 16;

/// Decoder configuration. `gamma_d = 1 + epsilon` is the total coded fraction
/// that must arrive before decoding succeeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub gamma_d: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { gamma_d: 1.05 }
    }
}

impl DecodeParams {
    pub fn new(gamma_d: f64) -> Result<Self> {
        if !(gamma_d >= 1.0 && gamma_d.is_finite()) {
            return Err(Error::param(
                "gamma_d",
                format!("must be >= 1, got {gamma_d}"),
            ));
        }
        Ok(Self { gamma_d })
    }

    pub fn from_overhead(epsilon: f64) -> Result<Self> {
        Self::new(1.0 + epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.gamma_d - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    /// Full uncoded copy; decodes alone.
    Replica,
    /// Coded fragments; decode once `gamma_d` worth has arrived.
    Coded,
    /// Uncoded split; every byte of the message must arrive.
    RawSplit,
}

/// One copy of the message, spread over interfaces as `(interface, fraction)`
/// pairs. Interface indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyGroup {
    pub kind: GroupKind,
    pub assignments: Vec<(usize, f64)>,
}

impl CopyGroup {
    pub fn replica(interface: usize) -> Self {
        Self {
            kind: GroupKind::Replica,
            assignments: vec![(interface, 1.0)],
        }
    }

    pub fn coded(assignments: Vec<(usize, f64)>) -> Self {
        Self {
            kind: GroupKind::Coded,
            assignments,
        }
    }

    pub fn raw_split(assignments: Vec<(usize, f64)>) -> Self {
        Self {
            kind: GroupKind::RawSplit,
            assignments,
        }
    }

    pub fn decode_threshold(&self, params: &DecodeParams) -> f64 {
        match self.kind {
            GroupKind::Coded => params.gamma_d,
            GroupKind::Replica | GroupKind::RawSplit => 1.0,
        }
    }

    /// Whether this group decodes when exactly the interfaces in `received`
    /// (bit `i` = interface `i`) delivered their packets.
    pub fn decodes(&self, received: u32, params: &DecodeParams) -> bool {
        match self.kind {
            GroupKind::Replica => self
                .assignments
                .iter()
                .any(|&(i, _)| received & (1 << i) != 0),
            GroupKind::Coded | GroupKind::RawSplit => {
                let sum: f64 = self
                    .assignments
                    .iter()
                    .filter(|&&(i, _)| received & (1 << i) != 0)
                    .map(|&(_, g)| g)
                    .sum();
                sum >= self.decode_threshold(params) - FRACTION_TOLERANCE
            }
        }
    }

    fn validate(&self, interfaces: usize, params: &DecodeParams) -> Result<()> {
        if self.assignments.is_empty() {
            return Err(Error::param(
                "group",
                "a copy group needs at least one assignment",
            ));
        }
        if self.kind == GroupKind::Replica
            && (self.assignments.len() != 1 || self.assignments[0].1 != 1.0)
        {
            return Err(Error::param(
                "group",
                "a replica group has exactly one assignment with fraction 1",
            ));
        }
        let upper = match self.kind {
            GroupKind::Coded => params.gamma_d,
            _ => 1.0,
        };
        for (pos, &(i, g)) in self.assignments.iter().enumerate() {
            if i >= interfaces {
                return Err(Error::UnknownInterface {
                    index: i,
                    count: interfaces,
                });
            }
            if self.assignments[..pos].iter().any(|&(j, _)| j == i) {
                return Err(Error::param(
                    "group",
                    format!("interface {i} assigned twice in one group"),
                ));
            }
            if !(g >= 0.0 && g <= upper + FRACTION_TOLERANCE) {
                return Err(Error::param(
                    "fraction",
                    format!("fraction {g} on interface {i} outside [0, {upper}]"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub label: String,
    pub groups: Vec<CopyGroup>,
}

impl Strategy {
    pub fn new(label: impl Into<String>, groups: Vec<CopyGroup>) -> Self {
        Self {
            label: label.into(),
            groups,
        }
    }

    /// A full replica on each of `n` interfaces.
    pub fn cloning(n: usize) -> Self {
        Self::new("cloning", (0..n).map(CopyGroup::replica).collect())
    }

    /// One coded group with the given per-interface fractions.
    pub fn weighted(label: impl Into<String>, gammas: &[f64]) -> Self {
        Self::new(
            label,
            vec![CopyGroup::coded(
                gammas.iter().copied().enumerate().collect(),
            )],
        )
    }

    pub fn validate(&self, interfaces: usize, params: &DecodeParams) -> Result<()> {
        if interfaces == 0 || interfaces > MAX_INTERFACES {
            return Err(Error::InterfaceCount(interfaces));
        }
        self.groups
            .iter()
            .try_for_each(|g| g.validate(interfaces, params))
    }

    /// Total fraction carried by each interface, summed across groups.
    /// Fragments of one message on one interface travel as one packet.
    pub fn interface_loads(&self, interfaces: usize) -> Vec<f64> {
        let mut loads = vec![0.0; interfaces];
        for g in &self.groups {
            for &(i, frac) in &g.assignments {
                if i < interfaces {
                    loads[i] += frac;
                }
            }
        }
        loads
    }

    /// Sum of all fractions; multiply by `B` for the transmitted bytes.
    pub fn bandwidth_fraction(&self) -> f64 {
        self.groups
            .iter()
            .flat_map(|g| g.assignments.iter().map(|a| a.1))
            .sum()
    }

    pub fn total_bytes(&self, payload_bytes: f64) -> f64 {
        self.bandwidth_fraction() * payload_bytes
    }

    pub fn decodes(&self, received: u32, params: &DecodeParams) -> bool {
        self.groups.iter().any(|g| g.decodes(received, params))
    }
}

/// Builds the `k`-out-of-`n` strategy: `gamma_d / k` coded on every interface.
pub fn k_of_n_strategy(k: usize, n: usize, params: &DecodeParams) -> Result<Strategy> {
    if n == 0 || n > MAX_INTERFACES {
        return Err(Error::InterfaceCount(n));
    }
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let frac = params.gamma_d / k as f64;
    Ok(Strategy::new(
        format!("{k}-of-{n}"),
        vec![CopyGroup::coded((0..n).map(|i| (i, frac)).collect())],
    ))
}

/// Enumeration of all `2^N` received/lost patterns in binary counting order;
/// bit `i` of row `h` is interface `i` (interface 1 is the least significant
/// bit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeTable {
    n: usize,
}

impl OutcomeTable {
    pub fn interfaces(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rows(&self) -> impl Iterator<Item = u32> {
        0..(1u32 << self.n)
    }

    /// Row `h` as received flags, interface 1 first.
    pub fn row_bits(&self, h: u32) -> Vec<bool> {
        (0..self.n).map(|i| h & (1 << i) != 0).collect()
    }

    /// `d_h` for every row.
    pub fn success_flags(&self, strategy: &Strategy, params: &DecodeParams) -> Vec<bool> {
        self.rows().map(|h| strategy.decodes(h, params)).collect()
    }
}

pub fn outcome_table(n: usize) -> Result<OutcomeTable> {
    if n == 0 || n > MAX_INTERFACES {
        return Err(Error::InterfaceCount(n));
    }
    Ok(OutcomeTable { n })
}

pub(crate) fn mask_from_bits(received: &[bool]) -> u32 {
    received
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .fold(0, |m, (i, _)| m | (1 << i))
}

/// `d_h` for one reception pattern given as per-interface flags.
pub fn success_flag(strategy: &Strategy, received: &[bool], params: &DecodeParams) -> bool {
    strategy.decodes(mask_from_bits(received), params)
}

/// Probability of the reception pattern `mask` when interface `i` delivers
/// independently with probability `probs[i]`.
pub fn outcome_probability(mask: u32, probs: &[f64]) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if mask & (1 << i) != 0 { p } else { 1.0 - p })
        .product()
}

/// A strategy bound to an interface count, with its decodable outcomes
/// precomputed.
#[derive(Debug, Clone)]
pub struct StrategyEvaluator {
    strategy: Strategy,
    loads: Vec<f64>,
    decodable: Vec<u32>,
}

impl StrategyEvaluator {
    pub fn new(strategy: &Strategy, interfaces: usize, params: &DecodeParams) -> Result<Self> {
        strategy.validate(interfaces, params)?;
        let table = outcome_table(interfaces)?;
        let decodable = table
            .rows()
            .filter(|&h| strategy.decodes(h, params))
            .collect();
        Ok(Self {
            strategy: strategy.clone(),
            loads: strategy.interface_loads(interfaces),
            decodable,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn decodable_outcomes(&self) -> &[u32] {
        &self.decodable
    }

    pub fn decodes(&self, received: u32) -> bool {
        self.decodable.binary_search(&received).is_ok()
    }

    /// Success probability given per-interface delivery probabilities.
    pub fn success_probability(&self, probs: &[f64]) -> f64 {
        self.decodable
            .iter()
            .map(|&h| outcome_probability(h, probs))
            .sum()
    }

    /// Per-interface `F_i(x, load_i * B)`.
    pub fn interface_probabilities<L: LatencyCdf>(
        &self,
        interfaces: &[L],
        x_ms: f64,
        payload_bytes: f64,
    ) -> Vec<f64> {
        interfaces
            .iter()
            .zip(&self.loads)
            .map(|(m, &load)| m.cdf(x_ms, load * payload_bytes))
            .collect()
    }

    pub fn eval<L: LatencyCdf>(&self, interfaces: &[L], x_ms: f64, payload_bytes: f64) -> f64 {
        let probs = self.interface_probabilities(interfaces, x_ms, payload_bytes);
        self.success_probability(&probs)
    }
}

/// Strategy latency-reliability by total probability over all reception
/// outcomes.
pub fn weighted_cdf<L: LatencyCdf>(
    interfaces: &[L],
    strategy: &Strategy,
    x_ms: f64,
    payload_bytes: f64,
    params: &DecodeParams,
) -> Result<f64> {
    let eval = StrategyEvaluator::new(strategy, interfaces.len(), params)?;
    Ok(eval.eval(interfaces, x_ms, payload_bytes))
}

/// Parallel-system composition for full copies on every interface.
pub fn cloning_cdf<L: LatencyCdf>(interfaces: &[L], x_ms: f64, payload_bytes: f64) -> f64 {
    1.0 - interfaces
        .iter()
        .map(|m| 1.0 - m.cdf(x_ms, payload_bytes))
        .product::<f64>()
}

/// Outcome of the non-stochastic two-interface split analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicGain {
    /// Coded fraction sent over interface 1.
    pub gamma: f64,
    pub cloning_latency: f64,
    pub split_latency: f64,
    /// Relative latency reduction `(clon - split) / clon`.
    pub gain: f64,
}

/// Latency reduction of splitting over cloning on two interfaces with access
/// times `access` and full-payload transfer times `transfer`.
pub fn deterministic_gain(
    access: (f64, f64),
    transfer: (f64, f64),
    params: &DecodeParams,
) -> Result<DeterministicGain> {
    for (name, v) in [
        ("t_a1", access.0),
        ("t_a2", access.1),
        ("t_t1", transfer.0),
        ("t_t2", transfer.1),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be > 0, got {v}"),
            });
        }
    }
    let e2e1 = transfer.0 + access.0;
    let e2e2 = transfer.1 + access.1;
    let gamma = e2e2 / (e2e1 + e2e2);
    let split1 = params.gamma_d * gamma * transfer.0;
    let split2 = params.gamma_d * (1.0 - gamma) * transfer.1;
    let cloning_latency = e2e1.min(e2e2);
    let split_latency = (split1 + access.0).max(split2 + access.1);
    Ok(DeterministicGain {
        gamma,
        cloning_latency,
        split_latency,
        gain: (cloning_latency - split_latency) / cloning_latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latmodel::InterfaceModel;
    use approx::assert_abs_diff_eq;

    /// Fixed-probability interface for composition tests.
    struct Fixed(f64);

    impl LatencyCdf for Fixed {
        fn cdf(&self, _x: f64, _b: f64) -> f64 {
            self.0
        }
        fn availability(&self) -> f64 {
            self.0
        }
    }

    #[test]
    fn outcome_rows() {
        let t = outcome_table(2).unwrap();
        let rows: Vec<_> = t.rows().collect();
        assert_eq!(rows, vec![0b00, 0b01, 0b10, 0b11]);
        assert_eq!(t.row_bits(1), vec![true, false]);
        assert_eq!(outcome_table(1).unwrap().len(), 2);
        assert_eq!(outcome_table(3).unwrap().len(), 8);
        assert!(outcome_table(0).is_err());
        assert!(outcome_table(17).is_err());
    }

    #[test]
    fn success_flags() {
        let p = DecodeParams::default();
        let two_of_three = k_of_n_strategy(2, 3, &p).unwrap();
        assert!(success_flag(&two_of_three, &[true, true, false], &p));
        assert!(!success_flag(&two_of_three, &[true, false, false], &p));
        let clon = Strategy::cloning(3);
        assert!(success_flag(&clon, &[false, false, true], &p));
        assert!(!success_flag(&clon, &[false, false, false], &p));

        let raw = Strategy::new("raw", vec![CopyGroup::raw_split(vec![(0, 0.5), (1, 0.5)])]);
        assert!(success_flag(&raw, &[true, true], &p));
        assert!(!success_flag(&raw, &[true, false], &p));
    }

    #[test]
    fn k_of_n_fractions() {
        let p = DecodeParams::default();
        let s = k_of_n_strategy(2, 3, &p).unwrap();
        assert_eq!(
            s.groups[0].assignments,
            vec![(0, 0.525), (1, 0.525), (2, 0.525)]
        );
        let one = k_of_n_strategy(1, 3, &p).unwrap();
        assert!(one.groups[0].assignments.iter().all(|a| a.1 == 1.05));
        assert_eq!(
            k_of_n_strategy(4, 3, &p),
            Err(Error::KOutOfRange { k: 4, n: 3 })
        );
        assert_eq!(
            k_of_n_strategy(0, 3, &p),
            Err(Error::KOutOfRange { k: 0, n: 3 })
        );
    }

    #[test]
    fn three_of_five_brute_force() {
        let p = DecodeParams::default();
        let s = k_of_n_strategy(3, 5, &p).unwrap();
        for h in 0u32..32 {
            assert_eq!(s.decodes(h, &p), h.count_ones() >= 3, "mask {h:05b}");
        }
    }

    #[test]
    fn two_of_three_identical() {
        let p = DecodeParams::default();
        let ifs = [Fixed(0.9), Fixed(0.9), Fixed(0.9)];
        let s = k_of_n_strategy(2, 3, &p).unwrap();
        let r = weighted_cdf(&ifs, &s, 1.0, 1.0, &p).unwrap();
        assert_abs_diff_eq!(r, 0.972, epsilon = 1e-12);
    }

    #[test]
    fn single_replica_is_identity() {
        let p = DecodeParams::default();
        let m = InterfaceModel::new("GPRS", 0.70, 400.0, 0.984).unwrap();
        let s = Strategy::cloning(1);
        for x in [0.0, 500.0, 725.0, 900.0] {
            let r = weighted_cdf(&[&m], &s, x, 1500.0, &p).unwrap();
            assert_eq!(r, m.eval_cdf(x, 1500.0));
        }
    }

    #[test]
    fn undecodable_strategy_is_zero() {
        let p = DecodeParams::default();
        let s = Strategy::weighted("short", &[0.3, 0.3, 0.3]);
        let ifs = [Fixed(0.99), Fixed(0.99), Fixed(0.99)];
        assert_eq!(weighted_cdf(&ifs, &s, 1.0, 1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn cloning_examples() {
        assert_abs_diff_eq!(cloning_cdf(&[Fixed(0.5), Fixed(0.5)], 0.0, 0.0), 0.75);
        assert_abs_diff_eq!(cloning_cdf(&[Fixed(0.3)], 0.0, 0.0), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn validation_errors() {
        let p = DecodeParams::default();
        let bad_index = Strategy::weighted("w", &[0.5, 0.6]);
        assert_eq!(
            bad_index.validate(1, &p),
            Err(Error::UnknownInterface { index: 1, count: 1 })
        );
        let too_big = Strategy::weighted("w", &[1.2]);
        assert!(too_big.validate(1, &p).is_err());
        let bad_replica = Strategy::new(
            "r",
            vec![CopyGroup {
                kind: GroupKind::Replica,
                assignments: vec![(0, 0.5)],
            }],
        );
        assert!(bad_replica.validate(1, &p).is_err());
        assert!(DecodeParams::new(0.9).is_err());
        assert_abs_diff_eq!(DecodeParams::from_overhead(0.05).unwrap().gamma_d, 1.05);
    }

    #[test]
    fn loads_sum_across_groups() {
        let s = Strategy::new(
            "mixed",
            vec![
                CopyGroup::replica(2),
                CopyGroup::coded(vec![(0, 0.6), (1, 0.45), (2, 0.1)]),
            ],
        );
        assert_eq!(s.interface_loads(3), vec![0.6, 0.45, 1.1]);
        assert_abs_diff_eq!(s.total_bytes(1000.0), 2150.0, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_gain_examples() {
        let p = DecodeParams::default();
        let g = deterministic_gain((1.0, 1.0), (10.0, 10.0), &p).unwrap();
        assert_eq!(g.gamma, 0.5);
        assert_abs_diff_eq!(g.split_latency, 6.25, epsilon = 1e-12);
        assert_abs_diff_eq!(g.gain, 4.75 / 11.0, epsilon = 1e-12);

        let access_bound = deterministic_gain((1.0, 1.0), (0.01, 0.01), &p).unwrap();
        assert!(access_bound.gain.abs() < 0.01);

        let ideal = DecodeParams::new(1.0).unwrap();
        let limit = deterministic_gain((1.0, 1.0), (1e9, 1e9), &ideal).unwrap();
        assert_abs_diff_eq!(limit.gain, 0.5, epsilon = 1e-6);

        assert!(deterministic_gain((0.0, 1.0), (1.0, 1.0), &p).is_err());
    }
}
