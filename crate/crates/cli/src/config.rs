//! Scenario file schema (TOML, versioned).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use ifdiv::latmodel::DEFAULT_SIGMA_RATIO;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub payload_bytes: f64,
    #[serde(default = "default_gamma_d")]
    pub gamma_d: f64,
    #[serde(rename = "interface")]
    pub interfaces: Vec<InterfaceSpec>,
    #[serde(default, rename = "strategy", skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<StrategySpec>,
    #[serde(default, rename = "target", skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctmc: Option<CtmcSpec>,
    #[serde(default)]
    pub x_grid: XGridSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub traces: TraceSpec,
}

fn default_gamma_d() -> f64 {
    1.05
}

/// An interface is either modeled (`alpha`, `beta`, `availability`), backed
/// by a trace file, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl InterfaceSpec {
    pub fn is_modeled(&self) -> bool {
        self.alpha.is_some() || self.beta.is_some() || self.availability.is_some()
    }

    pub fn sigma_ratio(&self) -> f64 {
        self.sigma_ratio.unwrap_or(DEFAULT_SIGMA_RATIO)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    Cloning {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    KOfN {
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// One coded group with a fraction per interface, in interface order.
    Weighted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        fractions: Vec<f64>,
    },
    Groups {
        label: String,
        group: Vec<GroupSpec>,
    },
    /// Coded copy split between `a` and `b` at the expected-latency optimum,
    /// plus full replicas on `replicas`.
    AnalyticSplit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        a: String,
        b: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        replicas: Vec<String>,
    },
    /// Grid-search optimum for the named target.
    Optimized {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        target: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKindSpec {
    Replica,
    Coded,
    RawSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupKindSpec,
    pub interfaces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
}

/// Target latencies either listed or as `[from, to, step]` in ms. Weights
/// default to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latencies_ms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_ms: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_step")]
    pub step: f64,
    #[serde(default = "default_grid_budget")]
    pub budget: u64,
    /// Restrict the search to these interfaces; the rest get 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interfaces: Option<Vec<String>>,
}

fn default_grid_step() -> f64 {
    ifdiv::optimize::DEFAULT_GRID_STEP
}

fn default_grid_budget() -> u64 {
    ifdiv::optimize::DEFAULT_GRID_BUDGET
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            step: default_grid_step(),
            budget: default_grid_budget(),
            interfaces: None,
        }
    }
}

/// Two interfaces to split one coded copy between, solved in closed form
/// and compared against the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSpec {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtmcSpec {
    #[serde(rename = "component")]
    pub components: Vec<ComponentSpec>,
    /// Interface name to the components it needs.
    pub depends: BTreeMap<String, Vec<String>>,
    /// Two radios sharing one component; in availability mode their rates
    /// come from the joint derivation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_cause: Option<CommonCauseSpec>,
}

/// Either `failure_rate` (rates mode) or `availability` (availability mode);
/// one mode for all components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<f64>,
    pub restoration_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonCauseSpec {
    pub first: String,
    pub second: String,
    pub shared: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XGridSpec {
    #[serde(default = "default_x_max")]
    pub max_ms: f64,
    #[serde(default = "default_x_step")]
    pub step_ms: f64,
}

fn default_x_max() -> f64 {
    1500.0
}

fn default_x_step() -> f64 {
    1.0
}

impl Default for XGridSpec {
    fn default() -> Self {
        Self {
            max_ms: default_x_max(),
            step_ms: default_x_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_interval")]
    pub interval_minutes: f64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

fn default_epochs() -> u64 {
    1_000_000
}

fn default_interval() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    ifdiv::sim::DEFAULT_TIMEOUT_MS
}

fn default_replications() -> u32 {
    1
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            interval_minutes: default_interval(),
            timeout_ms: default_timeout(),
            seed: 0,
            replications: default_replications(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    #[serde(default = "default_probe_interval")]
    pub interval_ms: f64,
    /// Directory trace paths are relative to; defaults to the config's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_probe_interval() -> f64 {
    ifdiv::sim::DEFAULT_PROBE_INTERVAL_MS
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            interval_ms: default_probe_interval(),
            dir: None,
        }
    }
}

/// 1-based line of the first occurrence of `needle` in `text`.
fn locate(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().trim_end().to_string();
            match line {
                Some(l) => CliError::config(format!("line {l}: {msg}")),
                None => CliError::config(msg),
            }
        })?;
        cfg.validate().map_err(|(needle, msg)| {
            match needle.as_deref().and_then(|n| locate(text, n)) {
                Some(l) => CliError::config(format!("line {l}: {msg}")),
                None => CliError::config(msg),
            }
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn interface_index(&self, name: &str) -> Option<usize> {
        self.interfaces.iter().position(|i| i.name == name)
    }

    pub fn target(&self, label: &str) -> Option<&TargetSpec> {
        self.targets.iter().find(|t| t.label == label)
    }

    /// Structural checks. Errors carry a token to locate in the source.
    fn validate(&self) -> Result<(), (Option<String>, String)> {
        let quoted = |s: &str| Some(format!("\"{s}\""));
        if self.version != SCHEMA_VERSION {
            return Err((
                Some("version".into()),
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.version
                ),
            ));
        }
        if self.interfaces.is_empty() {
            return Err((None, "at least one [[interface]] is required".into()));
        }
        for (pos, i) in self.interfaces.iter().enumerate() {
            if self.interfaces[..pos].iter().any(|j| j.name == i.name) {
                return Err((
                    quoted(&i.name),
                    format!("duplicate interface name `{}`", i.name),
                ));
            }
            if i.is_modeled() && (i.alpha.is_none() || i.beta.is_none() || i.availability.is_none())
            {
                return Err((
                    quoted(&i.name),
                    format!(
                        "interface `{}` needs all of alpha, beta and availability",
                        i.name
                    ),
                ));
            }
            if !i.is_modeled() && i.trace.is_none() {
                return Err((
                    quoted(&i.name),
                    format!(
                        "interface `{}` has neither model parameters nor a trace",
                        i.name
                    ),
                ));
            }
        }
        let known = |name: &str| self.interface_index(name).is_some();
        let unknown = |name: &str, ctx: &str| {
            (
                quoted(name),
                format!("{ctx} references unknown interface `{name}`"),
            )
        };
        for t in &self.targets {
            if t.latencies_ms.is_some() == t.range_ms.is_some() {
                return Err((
                    quoted(&t.label),
                    format!(
                        "target `{}` needs exactly one of latencies_ms or range_ms",
                        t.label
                    ),
                ));
            }
        }
        for s in &self.strategies {
            match s {
                StrategySpec::Groups { label, group } => {
                    for g in group {
                        for n in &g.interfaces {
                            if !known(n) {
                                return Err(unknown(n, &format!("strategy `{label}`")));
                            }
                        }
                        let expected = match g.kind {
                            GroupKindSpec::Replica => None,
                            _ => Some(g.interfaces.len()),
                        };
                        if g.fractions.as_ref().map(Vec::len) != expected {
                            return Err((
                                quoted(label),
                                format!(
                                    "strategy `{label}`: coded and raw-split groups need one fraction per interface, replica groups none"
                                ),
                            ));
                        }
                    }
                }
                StrategySpec::AnalyticSplit { a, b, replicas, .. } => {
                    for n in [a, b].into_iter().chain(replicas) {
                        if !known(n) {
                            return Err(unknown(n, "analytic-split strategy"));
                        }
                    }
                }
                StrategySpec::Optimized { target, .. } => {
                    if self.target(target).is_none() {
                        return Err((quoted(target), format!("unknown target `{target}`")));
                    }
                }
                StrategySpec::Weighted { fractions, .. } => {
                    if fractions.len() != self.interfaces.len() {
                        return Err((
                            Some("fractions".into()),
                            format!(
                                "weighted strategy has {} fractions for {} interfaces",
                                fractions.len(),
                                self.interfaces.len()
                            ),
                        ));
                    }
                }
                StrategySpec::Cloning { .. } | StrategySpec::KOfN { .. } => {}
            }
        }
        if let Some(names) = &self.grid.interfaces {
            for n in names {
                if !known(n) {
                    return Err(unknown(n, "[grid] interfaces"));
                }
            }
        }
        if let Some(a) = &self.analytic {
            for n in [&a.a, &a.b] {
                if !known(n) {
                    return Err(unknown(n, "[analytic]"));
                }
            }
        }
        if let Some(c) = &self.ctmc {
            let rates = c
                .components
                .iter()
                .filter(|x| x.failure_rate.is_some())
                .count();
            let avail = c
                .components
                .iter()
                .filter(|x| x.availability.is_some())
                .count();
            let n = c.components.len();
            if !((rates == n && avail == 0) || (avail == n && rates == 0)) {
                return Err((
                    Some("[ctmc]".into()),
                    "every [[ctmc.component]] needs exactly one of failure_rate or availability, and all must use the same one".into(),
                ));
            }
            let comp = |name: &str| c.components.iter().any(|x| x.name == name);
            for (iface, needs) in &c.depends {
                if !known(iface) {
                    return Err(unknown(iface, "[ctmc.depends]"));
                }
                for x in needs {
                    if !comp(x) {
                        return Err((
                            quoted(x),
                            format!("[ctmc.depends] references unknown component `{x}`"),
                        ));
                    }
                }
            }
            for i in &self.interfaces {
                if !c.depends.contains_key(&i.name) {
                    return Err((
                        Some("[ctmc.depends]".into()),
                        format!("[ctmc.depends] has no entry for interface `{}`", i.name),
                    ));
                }
            }
            if let Some(cc) = &c.common_cause {
                for x in [&cc.first, &cc.second, &cc.shared] {
                    if !comp(x) {
                        return Err((
                            quoted(x),
                            format!("common_cause references unknown component `{x}`"),
                        ));
                    }
                }
            }
        }
        if self.simulation.epochs == 0 {
            return Err((
                Some("epochs".into()),
                "simulation epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
