//! Run configuration, read from a JSON file and overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abstraction::{MethodKind, Target, TargetSpec};
use crate::error::{Error, Result};
use crate::learner::{DEFAULT_BATCH_SIZE, DEFAULT_MAX_TRACES};
use crate::model::{Architecture, FeatureKind, Network};
use crate::repair::{
    DEFAULT_ALPHA, DEFAULT_C, DEFAULT_K, DEFAULT_MAX_ITERATIONS, DEFAULT_N_EVAL, DEFAULT_OMEGA,
    DEFAULT_STALL_LIMIT, DEFAULT_SWARM_SIZE,
};
use crate::sampler::InputDistribution;

pub const DEFAULT_MU_EPS: f64 = 0.01;
pub const DEFAULT_MU_DELTA: f64 = 0.1;
pub const DEFAULT_XI: f64 = 0.1;
pub const DEFAULT_FIT_SAMPLES: usize = 2000;
pub const DEFAULT_SENSITIVITY_K: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    /// `feature:NAME`, `neuron:L:J` or `layer:L`.
    pub target: String,
    #[serde(default = "default_method")]
    pub method: String,
    pub k: usize,
}

fn default_method() -> String {
    "bins".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairConfig {
    pub k: usize,
    pub alpha: f64,
    pub n_eval: usize,
    pub swarm_size: usize,
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_iterations: usize,
    pub stall_limit: usize,
    pub stop_margin: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            n_eval: DEFAULT_N_EVAL,
            swarm_size: DEFAULT_SWARM_SIZE,
            omega: DEFAULT_OMEGA,
            c1: DEFAULT_C,
            c2: DEFAULT_C,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            stall_limit: DEFAULT_STALL_LIMIT,
            stop_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: PathBuf,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Protected feature name; defaults to the feature flagged protected in
    /// the model file.
    #[serde(default)]
    pub protected: Option<String>,
    /// Outcome label (name or index); defaults to the last label.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_mu_eps")]
    pub mu_eps: f64,
    #[serde(default = "default_mu_delta")]
    pub mu_delta: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Targets kept in the verification chain. Empty means protected-value
    /// and outcome states only.
    #[serde(default)]
    pub abstraction: Vec<TargetEntry>,
    /// Targets ranked on failure. Absent means every hidden neuron, binned.
    #[serde(default)]
    pub sensitivity: Option<Vec<TargetEntry>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_traces")]
    pub max_traces: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Inputs sampled to fit neuron discretizers.
    #[serde(default = "default_fit_samples")]
    pub fit_samples: usize,
    /// Per-feature categorical weights; unlisted features are uniform.
    #[serde(default)]
    pub distribution: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub repair: RepairConfig,
}

fn default_mu_eps() -> f64 {
    DEFAULT_MU_EPS
}
fn default_mu_delta() -> f64 {
    DEFAULT_MU_DELTA
}
fn default_xi() -> f64 {
    DEFAULT_XI
}
fn default_max_traces() -> u64 {
    DEFAULT_MAX_TRACES
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_fit_samples() -> usize {
    DEFAULT_FIT_SAMPLES
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: PathBuf::new(),
            dataset: None,
            protected: None,
            label: None,
            mu_eps: DEFAULT_MU_EPS,
            mu_delta: DEFAULT_MU_DELTA,
            xi: DEFAULT_XI,
            abstraction: Vec::new(),
            sensitivity: None,
            seed: 0,
            max_traces: DEFAULT_MAX_TRACES,
            batch_size: DEFAULT_BATCH_SIZE,
            fit_samples: DEFAULT_FIT_SAMPLES,
            distribution: BTreeMap::new(),
            repair: RepairConfig::default(),
        }
    }
}

/// Paths are taken relative to the config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    if !config.model.as_os_str().is_empty() && config.model.is_relative() {
        config.model = base.join(&config.model);
    }
    if let Some(d) = config.dataset.as_mut().filter(|d| d.is_relative()) {
        *d = base.join(&*d);
    }
    Ok(config)
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must lie in (0,1), got {v}"
        )))
    }
}

/// A configuration checked against its network.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub protected: usize,
    pub label: usize,
    pub abstraction: Vec<TargetSpec>,
    pub sensitivity: Vec<TargetSpec>,
    pub dist: InputDistribution,
}

fn parse_entries(entries: &[TargetEntry], net: &Network) -> Result<Vec<TargetSpec>> {
    entries
        .iter()
        .map(|e| {
            let method = match e.method.as_str() {
                "bins" => MethodKind::Bins,
                "kmeans" => MethodKind::KMeans,
                other => return Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
            };
            if e.k == 0 {
                return Err(Error::InvalidConfig(format!(
                    "target {}: k must be at least 1",
                    e.target
                )));
            }
            Ok(TargetSpec {
                target: Target::parse(&e.target, &net.features)?,
                method,
                k: e.k,
            })
        })
        .collect()
}

/// Every hidden neuron (feed-forward) or cell neuron (recurrent), binned.
pub fn default_sensitivity_targets(net: &Network) -> Vec<TargetSpec> {
    let spec = |layer, neuron| TargetSpec {
        target: Target::Neuron { layer, neuron },
        method: MethodKind::Bins,
        k: DEFAULT_SENSITIVITY_K,
    };
    match &net.arch {
        Architecture::FeedForward(layers) => layers[..layers.len() - 1]
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| (0..layer.output_width()).map(move |j| spec(l, j)))
            .collect(),
        Architecture::Recurrent(cell) => (0..cell.hidden_width()).map(|j| spec(0, j)).collect(),
    }
}

impl RunConfig {
    pub fn validate(&self, net: &Network) -> Result<Resolved> {
        open_unit("mu_eps", self.mu_eps)?;
        open_unit("mu_delta", self.mu_delta)?;
        open_unit("xi", self.xi)?;
        open_unit("repair.alpha", self.repair.alpha)?;
        if self.repair.stop_margin < 0.0 || self.repair.stop_margin >= self.xi {
            return Err(Error::InvalidConfig(
                "repair.stop_margin must lie in [0, xi)".into(),
            ));
        }
        if self.batch_size == 0 || self.max_traces == 0 || self.fit_samples == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, max_traces and fit_samples must be positive".into(),
            ));
        }
        if self.repair.k == 0 || self.repair.n_eval == 0 || self.repair.swarm_size == 0 {
            return Err(Error::InvalidConfig(
                "repair.k, repair.n_eval and repair.swarm_size must be positive".into(),
            ));
        }
        let protected = match &self.protected {
            Some(name) => net
                .features
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("unknown protected feature `{name}`"))
                })?,
            None => net
                .features
                .iter()
                .position(|f| f.protected)
                .ok_or_else(|| {
                    Error::InvalidConfig("no protected feature given or marked in the model".into())
                })?,
        };
        if !matches!(
            net.features[protected].kind,
            FeatureKind::Categorical { .. }
        ) {
            return Err(Error::InvalidConfig(format!(
                "protected feature `{}` must be categorical",
                net.features[protected].name
            )));
        }
        let label = match &self.label {
            Some(id) => net
                .label_index(id)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown label `{id}`")))?,
            None => net.labels.len() - 1,
        };
        let mut dist = InputDistribution::uniform(net.features.len(), self.seed);
        for (name, weights) in &self.distribution {
            let f = net
                .features
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("distribution for unknown feature `{name}`"))
                })?;
            dist = dist.with_weights(f, weights.clone())?;
        }
        dist.validate(&net.features)?;
        let sensitivity = match &self.sensitivity {
            Some(entries) => parse_entries(entries, net)?,
            None => default_sensitivity_targets(net),
        };
        Ok(Resolved {
            protected,
            label,
            abstraction: parse_entries(&self.abstraction, net)?,
            sensitivity,
            dist,
        })
    }
}
