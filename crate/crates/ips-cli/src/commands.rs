//! Experiment implementations. Every command is a pure function of its
//! config: replica seeds derive from (seed, replica index), workers
//! return per-replica rows that are merged in index order, and output
//! files are written atomically.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use ips::counterexample::{detect_chain, two_solutions, ChainStrategy};
use ips::empirics::{fraction_in_state, neighborhood_empirical, CorrelationEstimator, NeighborhoodEmpirical, Welford};
use ips::gen;
use ips::graph::MarkDiscretizer;
use ips::localize::{influence_set, localized_marginal};
use ips::noise::DrivingNoise;
use ips::percolate::{halfperc_grandchild_mean, root_active_component};
use ips::seeding::{combine, tagged, Tag};
use ips::sim::simulate;
use ips::IpsError;

use crate::config::{Command, ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(ConfigError),
    /// Exit 3: budget exhaustion beyond the configured tolerance.
    Budget(String),
    /// Exit 1.
    Run(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e)
    }
}

impl From<ips::IpsError> for CliError {
    fn from(e: ips::IpsError) -> CliError {
        CliError::Run(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Budget(m) => write!(f, "budget exhausted: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

pub struct Outcome {
    /// Artifact body (CSV or JSONL).
    pub artifact: String,
    /// One-line run summary for stdout.
    pub summary: String,
}

fn replica_seed(seed: u64, replica: usize) -> u64 {
    combine(tagged(seed, Tag::Replica), replica as u64)
}

fn require<T: Copy>(value: Option<T>, field: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Config(ConfigError {
            field: field.into(),
            message: "required for this command".into(),
        })
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Simulate => simulate_cmd(cfg),
        Command::Localize => localize_cmd(cfg),
        Command::Percolate => percolate_cmd(cfg),
        Command::Hydro => hydro_cmd(cfg),
        Command::Corrdecay => corrdecay_cmd(cfg),
        Command::Nbhd => nbhd_cmd(cfg),
        Command::Counterexample => counterexample_cmd(cfg),
        Command::DumpNoise => dump_noise_cmd(cfg),
    }
}

/// Write atomically: temp file in the target directory, then rename.
pub fn write_artifact(path: &Path, body: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension("tmp");
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Run(e.to_string()))?;
    }
    std::fs::write(&tmp, body).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Run(e.to_string()))?;
    Ok(())
}

fn simulate_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(1);
    let lines: Vec<String> = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<String, CliError> {
            let seed = replica_seed(cfg.seed, i);
            let graph = cfg.finite_graph(seed)?;
            let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
            let trajs = simulate(&graph, model.as_ref(), &noise, horizon, None)?;
            let line = serde_json::json!({
                "replica": i,
                "trajectories": trajs,
            });
            Ok(line.to_string())
        })
        .collect::<Result<_, _>>()?;
    Ok(Outcome {
        artifact: lines.join("\n") + "\n",
        summary: format!("simulate: {replicas} replicas, horizon {horizon}"),
    })
}

fn localize_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(1);
    let max_steps = cfg.budget();
    let rows: Vec<(Vec<(usize, f64, u64, usize)>, bool, usize)> = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let seed = replica_seed(cfg.seed, i);
            let mut graph = cfg.graph(seed)?;
            let obs: BTreeSet<u64> = match &cfg.obs {
                Some(ids) => ids.iter().copied().collect(),
                None => {
                    let root = graph.root().ok_or_else(|| {
                        CliError::Config(ConfigError {
                            field: "obs".into(),
                            message: "required when the graph has no root".into(),
                        })
                    })?;
                    BTreeSet::from([root])
                }
            };
            let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
            let r = influence_set(&mut graph, model.as_ref(), &noise, horizon, &obs, max_steps)?;
            let mut size = obs.len();
            let mut trace = Vec::new();
            let mut seen: BTreeSet<u64> = obs.clone();
            for (k, &(tau, v)) in r.trace.iter().enumerate() {
                // Reconstruct |U_k| growth along the trace.
                graph.ensure_expanded(v)?;
                if seen.insert(v) {
                    size += 1;
                }
                for &u in graph.neighbors(v) {
                    if seen.insert(u) {
                        size += 1;
                    }
                }
                trace.push((k + 1, tau, v, size));
            }
            Ok((trace, r.exhausted, r.set.len()))
        })
        .collect::<Result<_, _>>()?;

    let exhausted = rows.iter().filter(|r| r.1).count();
    let tolerance = cfg.exhaustion_tolerance.unwrap_or(0.0);
    if exhausted as f64 > tolerance * replicas as f64 {
        return Err(CliError::Budget(format!(
            "{exhausted}/{replicas} influence sets hit the step budget"
        )));
    }
    let mut csv = String::from("replica,step,tau,vertex,setSize\n");
    for (i, (trace, _, _)) in rows.iter().enumerate() {
        for (k, tau, v, size) in trace {
            let _ = writeln!(csv, "{i},{k},{tau},{v},{size}");
        }
    }
    let mean_size = rows.iter().map(|r| r.2 as f64).sum::<f64>() / replicas as f64;
    Ok(Outcome {
        artifact: csv,
        summary: format!(
            "localize: {replicas} replicas, mean influence-set size {mean_size:.2}, {exhausted} exhausted"
        ),
    })
}

fn percolate_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(1);
    let deltas = cfg
        .delta_grid
        .clone()
        .ok_or_else(|| {
            CliError::Config(ConfigError {
                field: "deltaGrid".into(),
                message: "required for percolate".into(),
            })
        })?;
    let budget = cfg.budget();

    // Offspring law for E[Z]: configured for (U)GW trees, otherwise the
    // empirical degree distribution of a sample graph (its local tree
    // approximation).
    let rho = match cfg.offspring()? {
        Some(r) => r,
        None => {
            let g = cfg.finite_graph(replica_seed(cfg.seed, 0))?;
            let max_d = g.vertex_ids().map(|v| g.degree(v)).max().unwrap_or(0);
            let mut pmf = vec![0.0; max_d + 1];
            for v in g.vertex_ids() {
                pmf[g.degree(v)] += 1.0 / g.len() as f64;
            }
            gen::OffspringDistribution::new(pmf)
                .map_err(|e| CliError::Run(e.to_string()))?
        }
    };

    let mut csv = String::from(
        "delta,meanRootComponent,p95RootComponent,fracExhausted,EZ,EZ_stderr,certified\n",
    );
    let mut worst_exhausted = 0.0f64;
    for (di, &delta) in deltas.iter().enumerate() {
        let results: Vec<(usize, bool)> = (0..replicas)
            .into_par_iter()
            .map(|i| -> Result<_, CliError> {
                let seed = replica_seed(combine(cfg.seed, di as u64), i);
                let mut graph = cfg.graph(seed)?;
                let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
                let (comp, exhausted) = root_active_component(
                    &mut graph,
                    &noise,
                    model.as_ref(),
                    horizon,
                    delta,
                    budget,
                )?;
                Ok((comp.len(), exhausted))
            })
            .collect::<Result<_, _>>()?;
        let mut sizes: Vec<usize> = results.iter().map(|r| r.0).collect();
        sizes.sort_unstable();
        let mean = sizes.iter().sum::<usize>() as f64 / replicas as f64;
        let p95 = sizes[((replicas as f64 * 0.95).ceil() as usize).clamp(1, replicas) - 1];
        let frac_exhausted =
            results.iter().filter(|r| r.1).count() as f64 / replicas as f64;
        worst_exhausted = worst_exhausted.max(frac_exhausted);
        let est = halfperc_grandchild_mean(
            combine(cfg.seed, di as u64),
            &rho,
            model.as_ref(),
            horizon,
            delta,
            replicas.max(10_000),
        )?;
        let _ = writeln!(
            csv,
            "{delta},{mean},{p95},{frac_exhausted},{},{},{}",
            est.mean,
            est.stderr,
            est.certified_subcritical()
        );
    }
    let tolerance = cfg.exhaustion_tolerance.unwrap_or(0.0);
    if worst_exhausted > tolerance {
        return Err(CliError::Budget(format!(
            "root-component exhaustion fraction {worst_exhausted} exceeds tolerance {tolerance}"
        )));
    }
    Ok(Outcome {
        artifact: csv,
        summary: format!(
            "percolate: {} deltas x {replicas} replicas",
            deltas.len()
        ),
    })
}

fn hydro_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(200);
    let c = require(cfg.mean_degree, "meanDegree")?;
    let n_list = cfg.n_list.clone().ok_or_else(|| {
        CliError::Config(ConfigError {
            field: "nList".into(),
            message: "required for hydro".into(),
        })
    })?;
    let init = cfg.init_condition();
    let limit_replicas = cfg.limit_replicas.unwrap_or(10_000);

    let mut csv = String::from("n,meanFractionInfected,stderr,replicas\n");
    for (ni, &n) in n_list.iter().enumerate() {
        let fracs: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|i| -> Result<f64, CliError> {
                let seed = replica_seed(combine(cfg.seed, ni as u64), i);
                let graph = gen::erdos_renyi(seed, n, (c / n as f64).min(1.0), init)
                    .map_err(|e| CliError::Run(e.to_string()))?;
                let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
                let trajs = simulate(&graph, model.as_ref(), &noise, horizon, None)?;
                Ok(fraction_in_state(&trajs, horizon, 1))
            })
            .collect::<Result<_, _>>()?;
        let mut w = Welford::default();
        fracs.iter().for_each(|&f| w.push(f));
        let _ = writeln!(csv, "{n},{},{},{replicas}", w.mean(), w.stderr());
    }

    // Limit row: localized root marginal on the limiting UGW tree.
    let rho = gen::OffspringDistribution::poisson(c).map_err(|e| CliError::Run(e.to_string()))?;
    // The event budget binds first; give the lazy tree enough vertex headroom
    // that expansion never aborts a run the event budget would have finished.
    let tree_budget = cfg.budget().saturating_mul(20).max(1_000_000);
    let hits: Vec<Option<f64>> = (0..limit_replicas)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>, CliError> {
            let seed = replica_seed(combine(cfg.seed, 0xFFFF), i);
            let mut tree = gen::ugw_tree(seed, rho.clone(), init, tree_budget)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let root = tree.root().unwrap();
            let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
            match localized_marginal(
                &mut tree,
                model.as_ref(),
                &noise,
                horizon,
                &BTreeSet::from([root]),
                cfg.budget(),
            ) {
                Ok(run) => Ok(Some(if run.trajectories[&root].value_at(horizon) == 1 {
                    1.0
                } else {
                    0.0
                })),
                Err(IpsError::BudgetExceeded { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, _>>()?;
    let skipped = hits.iter().filter(|h| h.is_none()).count();
    let tolerance = cfg.exhaustion_tolerance.unwrap_or(0.0);
    if skipped as f64 > tolerance * limit_replicas as f64 {
        return Err(CliError::Budget(format!(
            "{skipped}/{limit_replicas} limit replicas exhausted the influence budget \
             (tolerance {tolerance})"
        )));
    }
    let mut w = Welford::default();
    hits.iter().flatten().for_each(|&x| w.push(x));
    let _ = writeln!(csv, "limit,{},{},{}", w.mean(), w.stderr(), w.count());
    Ok(Outcome {
        artifact: csv,
        summary: format!(
            "hydro: {} sizes x {replicas} replicas, limit estimate {:.4}",
            n_list.len(),
            w.mean()
        ),
    })
}

fn corrdecay_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(1000);
    let summaries: Vec<_> = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let seed = replica_seed(cfg.seed, i);
            let graph = cfg.finite_graph(seed)?;
            let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
            let trajs = simulate(&graph, model.as_ref(), &noise, horizon, None)?;
            Ok(CorrelationEstimator::replica_summary(&graph, &trajs, horizon)?)
        })
        .collect::<Result<_, _>>()?;
    let mut est = CorrelationEstimator::default();
    for s in &summaries {
        est.add_summary(s);
    }
    let mut csv = String::from("distance,covariance,stderr,replicas\n");
    for p in est.finish() {
        let _ = writeln!(csv, "{},{},{},{}", p.distance, p.covariance, p.stderr, p.replicas);
    }
    Ok(Outcome {
        artifact: csv,
        summary: format!("corrdecay: {replicas} replicas"),
    })
}

fn signature_hash(bytes: &[u8]) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn nbhd_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let replicas = cfg.replicas.unwrap_or(1);
    let radius = cfg.radius.unwrap_or(1);
    let grid = cfg
        .grid_times
        .clone()
        .unwrap_or_else(|| vec![0.0, horizon / 2.0, horizon]);
    let disc = MarkDiscretizer::default();
    let parts: Vec<NeighborhoodEmpirical> = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let seed = replica_seed(cfg.seed, i);
            let graph = cfg.finite_graph(seed)?;
            let noise = DrivingNoise::new(seed, horizon, model.jump_spec().clone());
            let trajs = simulate(&graph, model.as_ref(), &noise, horizon, None)?;
            Ok(neighborhood_empirical(&graph, &trajs, radius, &grid, &disc)?)
        })
        .collect::<Result<_, _>>()?;
    let mut merged = NeighborhoodEmpirical::default();
    for p in &parts {
        merged.merge(p);
    }
    let mut csv = String::from("signature,count,frequency\n");
    for (sig, &count) in &merged.counts {
        let _ = writeln!(
            csv,
            "{:016x},{count},{}",
            signature_hash(&sig.canonical_bytes),
            count as f64 / merged.total as f64
        );
    }
    let _ = writeln!(
        csv,
        "overflow,{},{}",
        merged.overflow,
        merged.overflow as f64 / merged.total.max(1) as f64
    );
    Ok(Outcome {
        artifact: csv,
        summary: format!(
            "nbhd: {} distinct signatures over {} balls ({} overflow)",
            merged.counts.len(),
            merged.total,
            merged.overflow
        ),
    })
}

fn counterexample_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let horizon = cfg.horizon.unwrap_or(1.0);
    let depth = cfg.depth.unwrap_or(8);
    let replicas = cfg.replicas.unwrap_or(1000);
    // Full replay needs a materialized truncation; cap its depth.
    let replay_depth = depth.min(4);
    let rows: Vec<(bool, bool, usize, bool, bool, bool)> = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let seed = replica_seed(cfg.seed, i);
            let noise =
                DrivingNoise::new(seed, horizon, ips::noise::JumpSpec::unit(&[1]));
            let mut tree = gen::counterexample_tree(depth, usize::MAX);
            let dyadic =
                detect_chain(&mut tree, &noise, horizon, depth, ChainStrategy::Dyadic)?;
            let mut tree = gen::counterexample_tree(depth, usize::MAX);
            let exhaustive =
                detect_chain(&mut tree, &noise, horizon, depth, ChainStrategy::Exhaustive)?;
            let chain_len = exhaustive.as_ref().map_or(0, |c| c.path.len());
            let sol = two_solutions(seed, replay_depth, horizon)?;
            Ok((
                dyadic.is_some(),
                exhaustive.is_some(),
                chain_len,
                sol.differ_at_root,
                sol.trivial_violations.is_empty(),
                sol.nontrivial_violations.is_empty(),
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut csv = String::from(
        "replica,dyadicFound,exhaustiveFound,chainLen,rootInfectedAtReplayDepth,trivialReplayOk,nontrivialReplayOk\n",
    );
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{},{},{},{}", r.0, r.1, r.2, r.3, r.4, r.5);
    }
    let freq = |f: fn(&(bool, bool, usize, bool, bool, bool)) -> bool| {
        rows.iter().filter(|r| f(r)).count() as f64 / replicas as f64
    };
    let _ = writeln!(
        csv,
        "summary,{},{},,{},{},{}",
        freq(|r| r.0),
        freq(|r| r.1),
        freq(|r| r.3),
        freq(|r| r.4),
        freq(|r| r.5)
    );
    Ok(Outcome {
        artifact: csv,
        summary: format!(
            "counterexample: depth {depth}, exhaustive-chain frequency {:.3} over {replicas} replicas",
            freq(|r| r.1)
        ),
    })
}

fn dump_noise_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let horizon = require(cfg.horizon, "horizon")?;
    let graph = cfg.finite_graph(cfg.seed)?;
    let noise = DrivingNoise::new(cfg.seed, horizon, model.jump_spec().clone());
    let mut csv = String::from("vertexKey,t,r,j\n");
    let mut count = 0usize;
    for v in graph.vertex_ids() {
        let cap = model.bound(graph.closure_size(v), horizon);
        for e in noise.events(graph.noise_key(v), cap, (0.0, horizon))? {
            let _ = writeln!(csv, "{},{},{},{}", graph.noise_key(v), e.t, e.r, e.j);
            count += 1;
        }
    }
    Ok(Outcome {
        artifact: csv,
        summary: format!("dump-noise: {count} events over {} vertices", graph.len()),
    })
}
