//! Per-interface latency-reliability functions.
//!
//! `F(x, B)` is the probability that a `B`-byte packet sent over an interface
//! arrives within `x` milliseconds. Its asymptote is the interface
//! availability, not 1: a lost packet never arrives.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default ratio between latency standard deviation and mean.
pub const DEFAULT_SIGMA_RATIO: f64 = 0.1;

/// Anything that yields a latency-reliability value for a deadline and a
/// packet size.
pub trait LatencyCdf {
    /// Probability of delivery within `x_ms` for a packet of `bytes` bytes.
    fn cdf(&self, x_ms: f64, bytes: f64) -> f64;

    /// Long-run probability of delivery at all.
    fn availability(&self) -> f64;
}

impl<T: LatencyCdf + ?Sized> LatencyCdf for &T {
    fn cdf(&self, x_ms: f64, bytes: f64) -> f64 {
        (**self).cdf(x_ms, bytes)
    }

    fn availability(&self) -> f64 {
        (**self).availability()
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    standard_normal().pdf(z)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Parametric interface: Gaussian latency whose mean grows linearly with the
/// packet size.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceModel {
    pub name: String,
    /// ms per byte.
    pub alpha: f64,
    /// ms.
    pub beta: f64,
    pub availability: f64,
    /// `sigma = sigma_ratio * mean`. Zero turns the latency into a constant.
    pub sigma_ratio: f64,
}

impl InterfaceModel {
    pub fn new(name: impl Into<String>, alpha: f64, beta: f64, availability: f64) -> Result<Self> {
        Self::with_sigma_ratio(name, alpha, beta, availability, DEFAULT_SIGMA_RATIO)
    }

    pub fn with_sigma_ratio(
        name: impl Into<String>,
        alpha: f64,
        beta: f64,
        availability: f64,
        sigma_ratio: f64,
    ) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param(
                "alpha",
                format!("must be finite and >= 0, got {alpha}"),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param(
                "beta",
                format!("must be finite and >= 0, got {beta}"),
            ));
        }
        if !(0.0..=1.0).contains(&availability) {
            return Err(Error::param(
                "availability",
                format!("must lie in [0, 1], got {availability}"),
            ));
        }
        if !(sigma_ratio >= 0.0 && sigma_ratio.is_finite()) {
            return Err(Error::param(
                "sigma_ratio",
                format!("must be finite and >= 0, got {sigma_ratio}"),
            ));
        }
        Ok(Self {
            name: name.into(),
            alpha,
            beta,
            availability,
            sigma_ratio,
        })
    }

    /// Mean one-way latency in ms: `(alpha * B + beta) / 2`.
    pub fn mean_latency(&self, bytes: f64) -> f64 {
        (self.alpha * bytes + self.beta) / 2.0
    }

    pub fn sigma(&self, bytes: f64) -> f64 {
        self.sigma_ratio * self.mean_latency(bytes)
    }

    /// Latency-reliability value `A * Phi((x - mu) / sigma)`, clamped to zero
    /// for negative deadlines.
    pub fn eval_cdf(&self, x_ms: f64, bytes: f64) -> f64 {
        if x_ms < 0.0 {
            return 0.0;
        }
        let mu = self.mean_latency(bytes);
        let sigma = self.sigma(bytes);
        let p = if sigma > 0.0 {
            std_normal_cdf((x_ms - mu) / sigma)
        } else if x_ms >= mu {
            1.0
        } else {
            0.0
        };
        (self.availability * p).clamp(0.0, self.availability)
    }
}

impl LatencyCdf for InterfaceModel {
    fn cdf(&self, x_ms: f64, bytes: f64) -> f64 {
        self.eval_cdf(x_ms, bytes)
    }

    fn availability(&self) -> f64 {
        self.availability
    }
}

/// One probe of a latency trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Delivered(f64),
    Lost,
}

impl Probe {
    pub fn latency(self) -> Option<f64> {
        match self {
            Probe::Delivered(v) => Some(v),
            Probe::Lost => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub timestamp_ms: f64,
    pub probe: Probe,
}

/// Parses a trace file: one `timestamp_ms latency_ms` or `timestamp_ms LOST`
/// record per line. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(ts), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::TraceParse {
                line: line_no,
                reason: format!("expected two fields, got `{line}`"),
            });
        };
        let timestamp_ms: f64 = ts.parse().map_err(|_| Error::TraceParse {
            line: line_no,
            reason: format!("bad timestamp `{ts}`"),
        })?;
        let probe = if value.eq_ignore_ascii_case("LOST") {
            Probe::Lost
        } else {
            let v: f64 = value.parse().map_err(|_| Error::TraceParse {
                line: line_no,
                reason: format!("bad latency `{value}`"),
            })?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::TraceParse {
                    line: line_no,
                    reason: format!("latency must be finite and >= 0, got {v}"),
                });
            }
            Probe::Delivered(v)
        };
        records.push(TraceRecord {
            timestamp_ms,
            probe,
        });
    }
    Ok(records)
}

/// Right-continuous step CDF over recorded probes. Lost probes count in the
/// denominator only, so the asymptote is the delivered fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    total: usize,
}

impl EmpiricalCdf {
    pub fn from_probes<I>(probes: I) -> Result<Self>
    where
        I: IntoIterator<Item = Probe>,
    {
        let mut total = 0usize;
        let mut sorted = Vec::new();
        for p in probes {
            total += 1;
            if let Probe::Delivered(v) = p {
                sorted.push(v);
            }
        }
        if total == 0 {
            return Err(Error::EmptyTrace);
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, total })
    }

    pub fn eval(&self, x_ms: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v <= x_ms);
        below as f64 / self.total as f64
    }

    pub fn sample_count(&self) -> usize {
        self.total
    }

    pub fn delivered(&self) -> &[f64] {
        &self.sorted
    }
}

/// Builds the empirical CDF of a trace.
pub fn empirical_cdf_from_trace(records: &[TraceRecord]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::from_probes(records.iter().map(|r| r.probe))
}

impl LatencyCdf for EmpiricalCdf {
    /// Traces are measured at one probe size, so `bytes` is ignored.
    fn cdf(&self, x_ms: f64, _bytes: f64) -> f64 {
        self.eval(x_ms)
    }

    fn availability(&self) -> f64 {
        self.sorted.len() as f64 / self.total as f64
    }
}

/// Sampled latency-reliability function `{(x, R(x))}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityCurve {
    pub label: String,
    pub payload_bytes: f64,
    pub points: Vec<(f64, f64)>,
}

impl ReliabilityCurve {
    pub fn sample<F>(label: impl Into<String>, payload_bytes: f64, xs: &[f64], mut f: F) -> Self
    where
        F: FnMut(f64) -> f64,
    {
        Self {
            label: label.into(),
            payload_bytes,
            points: xs.iter().map(|&x| (x, f(x))).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    /// Smallest sampled `x` with `R(x) >= target`.
    pub fn latency_at(&self, target: f64) -> Option<f64> {
        self.points.iter().find(|p| p.1 >= target).map(|p| p.0)
    }
}

/// Evenly spaced deadlines `0, step, 2*step, ..., <= max`.
pub fn x_grid(max_ms: f64, step_ms: f64) -> Result<Vec<f64>> {
    if !(step_ms > 0.0 && step_ms.is_finite()) {
        return Err(Error::param(
            "x_step",
            format!("must be > 0, got {step_ms}"),
        ));
    }
    if !(max_ms >= 0.0 && max_ms.is_finite()) {
        return Err(Error::param("x_max", format!("must be >= 0, got {max_ms}")));
    }
    let n = (max_ms / step_ms + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step_ms).collect())
}
