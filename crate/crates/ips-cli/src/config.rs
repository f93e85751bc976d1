//! Experiment configuration: JSON schema, flag overrides, and builders
//! that turn specs into graphs and rate models.

use std::path::PathBuf;

use serde::Deserialize;

use ips::gen::{self, InitCondition, OffspringDistribution};
use ips::graph::MarkedGraph;
use ips::rates::{
    ContactModel, Hazard, HazardArg, HetContactModel, RateModel, RenewalContactModel, SpreadModel,
};

/// Configuration failure, reported with a pointer to the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Localize,
    Percolate,
    Hydro,
    Corrdecay,
    Nbhd,
    Counterexample,
    DumpNoise,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum OffspringSpec {
    Poisson(f64),
    Pmf(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum GraphSpec {
    File { path: PathBuf },
    ErdosRenyi { n: usize, p: f64 },
    Grid { dims: Vec<usize> },
    Regular { n: usize, d: usize },
    Configuration { degrees: Vec<usize> },
    Gw { offspring: OffspringSpec },
    Ugw { offspring: OffspringSpec },
    Counterexample { depth: u32 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum InitSpec {
    Constant { state: i64 },
    Bernoulli { p: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HazardSpec {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub cap: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "name", rename_all = "camelCase", deny_unknown_fields)]
pub enum ModelSpec {
    Contact {
        lambda: f64,
    },
    HetContact {
        vertex_cap: f64,
        edge_cap: f64,
    },
    Renewal {
        h_infect: HazardSpec,
        h_recover: HazardSpec,
        t0: f64,
        #[serde(default)]
        hazard_arg: Option<HazardArg>,
    },
    Spread,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub graph: Option<GraphSpec>,
    pub model: Option<ModelSpec>,
    pub init: Option<InitSpec>,
    pub horizon: Option<f64>,
    pub replicas: Option<usize>,
    pub budget: Option<usize>,
    pub out: Option<PathBuf>,
    /// Lazy graphs are materialized to this radius where a finite graph
    /// is needed.
    pub ball_radius: Option<u32>,
    // Command-specific knobs.
    pub delta_grid: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub obs: Option<Vec<u64>>,
    pub radius: Option<u32>,
    pub grid_times: Option<Vec<f64>>,
    pub depth: Option<u32>,
    pub limit_replicas: Option<usize>,
    /// Hydro: ER graphs use edge probability mean_degree / n.
    pub mean_degree: Option<f64>,
    /// Tolerated fraction of budget-exhausted replicas before exit 3.
    pub exhaustion_tolerance: Option<f64>,
}

/// Apply `--override key=value` entries to the raw JSON before
/// deserialization. Keys use dot paths; values parse as JSON when they
/// can, else as strings.
pub fn apply_overrides(
    raw: &mut serde_json::Value,
    overrides: &[String],
) -> Result<(), ConfigError> {
    for entry in overrides {
        let (path, value) = entry
            .split_once('=')
            .ok_or_else(|| bad("--override", format!("`{entry}` is not key=value")))?;
        let parsed: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let parts: Vec<&str> = path.split('.').collect();
        let (last, prefix) = parts.split_last().unwrap();
        let mut cursor = &mut *raw;
        for part in prefix {
            cursor = cursor
                .as_object_mut()
                .ok_or_else(|| bad(path, "path traverses a non-object"))?
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        cursor
            .as_object_mut()
            .ok_or_else(|| bad(path, "path traverses a non-object"))?
            .insert(last.to_string(), parsed);
    }
    Ok(())
}

pub fn parse_config(raw: serde_json::Value) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| bad("<root>", e.to_string()))?;
    if let Some(t) = cfg.horizon {
        if !(t > 0.0) || !t.is_finite() {
            return Err(bad("horizon", "must be positive and finite"));
        }
    }
    if cfg.replicas == Some(0) {
        return Err(bad("replicas", "must be at least 1"));
    }
    if let Some(InitSpec::Bernoulli { p }) = cfg.init {
        if !(0.0..=1.0).contains(&p) {
            return Err(bad("init.p", "must lie in [0,1]"));
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn init_condition(&self) -> InitCondition {
        match self.init {
            Some(InitSpec::Constant { state }) => InitCondition::Constant(state),
            Some(InitSpec::Bernoulli { p }) => InitCondition::Bernoulli(p),
            None => InitCondition::Constant(0),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(1_000_000)
    }

    pub fn model(&self) -> Result<Box<dyn RateModel>, ConfigError> {
        match self
            .model
            .as_ref()
            .ok_or_else(|| bad("model", "required for this command"))?
        {
            ModelSpec::Contact { lambda } => {
                if *lambda < 0.0 {
                    return Err(bad("model.lambda", "must be nonnegative"));
                }
                Ok(Box::new(ContactModel::new(*lambda)))
            }
            ModelSpec::HetContact { vertex_cap, edge_cap } => {
                Ok(Box::new(HetContactModel::new(*vertex_cap, *edge_cap)))
            }
            ModelSpec::Renewal {
                h_infect,
                h_recover,
                t0,
                hazard_arg,
            } => {
                let hi = Hazard::new(h_infect.knots.clone(), h_infect.values.clone(), h_infect.cap)
                    .map_err(|e| bad("model.h_infect", e.to_string()))?;
                let hr = Hazard::new(h_recover.knots.clone(), h_recover.values.clone(), h_recover.cap)
                    .map_err(|e| bad("model.h_recover", e.to_string()))?;
                let mut m = RenewalContactModel::new(hi, hr, *t0);
                if let Some(arg) = hazard_arg {
                    m = m.with_arg(*arg);
                }
                Ok(Box::new(m))
            }
            ModelSpec::Spread => Ok(Box::new(SpreadModel::new())),
        }
    }

    pub fn offspring(&self) -> Result<Option<OffspringDistribution>, ConfigError> {
        match self.graph.as_ref() {
            Some(GraphSpec::Gw { offspring }) | Some(GraphSpec::Ugw { offspring }) => {
                Ok(Some(build_offspring(offspring)?))
            }
            _ => Ok(None),
        }
    }

    /// Build the configured graph with a replica-specific seed. File
    /// graphs ignore the seed and always load identically.
    pub fn graph(&self, seed: u64) -> Result<MarkedGraph, ConfigError> {
        let spec = self
            .graph
            .as_ref()
            .ok_or_else(|| bad("graph", "required for this command"))?;
        let init = self.init_condition();
        let budget = self.budget();
        match spec {
            GraphSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| bad("graph.path", e.to_string()))?;
                MarkedGraph::from_json(&text).map_err(|e| bad("graph.path", e.to_string()))
            }
            GraphSpec::ErdosRenyi { n, p } => gen::erdos_renyi(seed, *n, *p, init)
                .map_err(|e| bad("graph", e.to_string())),
            GraphSpec::Grid { dims } => {
                gen::grid(seed, dims, init).map_err(|e| bad("graph.dims", e.to_string()))
            }
            GraphSpec::Regular { n, d } => {
                gen::regular_graph(seed, *n, *d, init).map_err(|e| bad("graph", e.to_string()))
            }
            GraphSpec::Configuration { degrees } => gen::configuration_model(seed, degrees, init)
                .map_err(|e| bad("graph.degrees", e.to_string())),
            GraphSpec::Gw { offspring } => {
                Ok(gen::gw_tree(seed, build_offspring(offspring)?, init, budget))
            }
            GraphSpec::Ugw { offspring } => {
                gen::ugw_tree(seed, build_offspring(offspring)?, init, budget)
                    .map_err(|e| bad("graph.offspring", e.to_string()))
            }
            GraphSpec::Counterexample { depth } => Ok(gen::counterexample_tree(*depth, budget)),
        }
    }

    /// A finite graph for the given replica: lazy generators are cut at
    /// `ball_radius`.
    pub fn finite_graph(&self, seed: u64) -> Result<MarkedGraph, ConfigError> {
        let mut g = self.graph(seed)?;
        if g.is_lazy() {
            let radius = self
                .ball_radius
                .ok_or_else(|| bad("ball_radius", "required for lazy graph generators"))?;
            g.truncate_ball(radius)
                .map_err(|e| bad("ball_radius", e.to_string()))
        } else {
            Ok(g)
        }
    }
}

fn build_offspring(spec: &OffspringSpec) -> Result<OffspringDistribution, ConfigError> {
    match spec {
        OffspringSpec::Poisson(c) => OffspringDistribution::poisson(*c)
            .map_err(|e| bad("graph.offspring.poisson", e.to_string())),
        OffspringSpec::Pmf(pmf) => OffspringDistribution::new(pmf.clone())
            .map_err(|e| bad("graph.offspring.pmf", e.to_string())),
    }
}
