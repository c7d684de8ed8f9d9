//! CSV output with provenance comments.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("ifdiv ", env!("CARGO_PKG_VERSION"));

/// Formats with 9 significant digits, shortest round-trip form; exponent
/// notation outside `[1e-4, 1e15)`.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    let m = rounded.abs();
    if (1e-4..1e15).contains(&m) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn config_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

/// Named curves sharing one x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBundle {
    pub x_ms: Vec<f64>,
    pub curves: Vec<(String, Vec<f64>)>,
    pub provenance: Provenance,
}

impl CurveBundle {
    pub fn new(x_ms: Vec<f64>, provenance: Provenance) -> Self {
        Self {
            x_ms,
            curves: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.x_ms.len());
        self.curves.push((name.into(), values));
    }

    pub fn push_fn<F: FnMut(f64) -> f64>(&mut self, name: impl Into<String>, mut f: F) {
        let values = self.x_ms.iter().map(|&x| f(x)).collect();
        self.push(name, values);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.curves
            .iter()
            .find(|c| c.0 == name)
            .map(|c| c.1.as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CliError> {
        writeln!(out, "# {TOOL_VERSION}")?;
        writeln!(out, "# command: {}", self.provenance.command)?;
        writeln!(out, "# config_sha256: {}", self.provenance.config_sha256)?;
        if let Some(seed) = self.provenance.seed {
            writeln!(out, "# seed: {seed}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x_ms".to_string()];
        header.extend(self.curves.iter().map(|c| c.0.clone()));
        w.write_record(&header)?;
        for (row, &x) in self.x_ms.iter().enumerate() {
            let mut rec = vec![fmt9(x)];
            rec.extend(self.curves.iter().map(|c| fmt9(c.1[row])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streams `epoch_index,strategy,latency_ms_or_TIMEOUT` rows.
pub struct OutcomeWriter<W: Write> {
    inner: csv::Writer<W>,
    labels: Vec<String>,
    error: Option<csv::Error>,
}

impl<W: Write> OutcomeWriter<W> {
    pub fn new(out: W, labels: Vec<String>) -> Result<Self, CliError> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["epoch_index", "strategy", "latency_ms_or_TIMEOUT"])?;
        Ok(Self {
            inner,
            labels,
            error: None,
        })
    }

    pub fn record(&mut self, epoch: u64, strategy: usize, latency: Option<f64>) {
        if self.error.is_some() {
            return;
        }
        let v = latency.map_or_else(|| "TIMEOUT".to_string(), fmt9);
        if let Err(e) =
            self.inner
                .write_record([epoch.to_string(), self.labels[strategy].clone(), v])
        {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.inner.flush()?;
        Ok(())
    }
}
