//! Non-uniqueness on a superexponential tree.
//!
//! On the tree whose generation-k vertices have 4^k children, the pure
//! spread model admits, besides the all-zero solution, a second solution
//! in which infection sweeps in from infinity: a path of noise events
//! with strictly decreasing times connects the root to arbitrarily deep
//! generations with probability bounded away from zero, because the
//! branching outpaces the shrinking time windows. On a depth-D
//! truncation the incoming infection is modeled by a frontier proxy:
//! depth-D vertices jump at essentially time zero and are exempt from
//! the pathwise replay check.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{IpsError, Result};
use crate::gen::counterexample_tree;
use crate::graph::{MarkedGraph, VertexId};
use crate::noise::{DrivingNoise, JumpSpec};
use crate::rates::SpreadModel;
use crate::sim::{verify_sde, SdeViolation, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainStrategy {
    /// Depth-d vertices must fire inside the dyadic window
    /// (2^-(d+1), 2^-d]; decreasing times come for free.
    Dyadic,
    /// Greedy depth-first search for any strictly decreasing chain.
    Exhaustive,
}

/// A frontier-to-root path along which event times strictly increase:
/// `path[0]` lies on the frontier, `path.last()` is the root, and
/// `times[i]` is the firing time of `path[i + 1]` (one per non-initial
/// path vertex).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainCertificate {
    pub path: Vec<VertexId>,
    pub times: Vec<f64>,
}

fn event_times(noise: &DrivingNoise, graph: &MarkedGraph, v: VertexId, horizon: f64) -> Result<Vec<f64>> {
    // Spread rates live in {0, 1}: every event under cap 1 is decisive.
    Ok(noise
        .events(graph.noise_key(v), 1.0, (0.0, horizon))?
        .into_iter()
        .map(|e| e.t)
        .collect())
}

/// Look for a chain of strictly decreasing event times from the root
/// down to depth `depth` (the frontier itself needs no event). Works on
/// lazy trees, expanding only along candidate branches, so deep
/// truncations (whose full vertex count is astronomical) stay cheap.
pub fn detect_chain(
    graph: &mut MarkedGraph,
    noise: &DrivingNoise,
    horizon: f64,
    depth: u32,
    strategy: ChainStrategy,
) -> Result<Option<ChainCertificate>> {
    let root = graph.root().ok_or(IpsError::NoRoot)?;

    // Greedy DFS: taking the largest admissible event first is optimal,
    // since a larger firing time only loosens the children's constraint.
    fn descend(
        graph: &mut MarkedGraph,
        noise: &DrivingNoise,
        horizon: f64,
        depth: u32,
        strategy: ChainStrategy,
        v: VertexId,
        parent: Option<VertexId>,
        d: u32,
        bound: f64,
    ) -> Result<Option<(Vec<VertexId>, Vec<f64>)>> {
        if d == depth {
            return Ok(Some((vec![v], vec![])));
        }
        let (window_floor, window_ceil) = match strategy {
            ChainStrategy::Dyadic => (0.5f64.powi(d as i32 + 1), 0.5f64.powi(d as i32)),
            ChainStrategy::Exhaustive => (0.0, f64::INFINITY),
        };
        let mut times: Vec<f64> = event_times(noise, graph, v, horizon)?
            .into_iter()
            .filter(|&t| t < bound && t > window_floor && t <= window_ceil)
            .collect();
        times.sort_by(f64::total_cmp);
        if times.is_empty() {
            return Ok(None);
        }
        graph.ensure_expanded(v)?;
        let children: Vec<VertexId> = graph
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| Some(u) != parent)
            .collect();
        // A lower firing time only tightens the children's constraint,
        // so trying the largest admissible time is complete.
        let t = *times.last().unwrap();
        for &u in &children {
            if let Some((mut path, mut ts)) = descend(
                graph,
                noise,
                horizon,
                depth,
                strategy,
                u,
                Some(v),
                d + 1,
                t,
            )? {
                ts.push(t);
                path.push(v);
                return Ok(Some((path, ts)));
            }
        }
        Ok(None)
    }

    let bound = match strategy {
        ChainStrategy::Dyadic => 1.0f64.min(horizon),
        ChainStrategy::Exhaustive => horizon,
    };
    Ok(descend(
        graph,
        noise,
        horizon,
        depth,
        strategy,
        root,
        None,
        0,
        // `descend` filters with t < bound; make the root bound inclusive.
        f64::from_bits(bound.to_bits() + 1),
    )?
    .map(|(path, times)| ChainCertificate { path, times }))
}

#[derive(Debug)]
pub struct TwoSolutions {
    pub trivial: BTreeMap<VertexId, Trajectory>,
    pub nontrivial: BTreeMap<VertexId, Trajectory>,
    pub frontier: BTreeSet<VertexId>,
    /// Root states at the horizon disagree.
    pub differ_at_root: bool,
    pub trivial_violations: Vec<SdeViolation>,
    pub nontrivial_violations: Vec<SdeViolation>,
}

/// Build both solutions of the spread dynamics on the depth-`depth`
/// truncation with all-zero initial data and report the replay check
/// for each (frontier vertices exempt in the nontrivial one).
pub fn two_solutions(seed: u64, depth: u32, horizon: f64) -> Result<TwoSolutions> {
    let mut tree = counterexample_tree(depth, 10_000_000);
    let graph = tree.truncate_ball(depth)?;
    let root = graph.root().ok_or(IpsError::NoRoot)?;
    let dist = graph.distances(root);
    let frontier: BTreeSet<VertexId> = graph
        .vertex_ids()
        .filter(|v| dist[v] == depth)
        .collect();
    let noise = DrivingNoise::new(seed, horizon, JumpSpec::unit(&[1]));
    let model = SpreadModel::new();

    let trivial: BTreeMap<VertexId, Trajectory> = graph
        .vertex_ids()
        .map(|v| (v, Trajectory::constant(0)))
        .collect();

    // Earliest infection times by Dijkstra relaxation: a vertex fires at
    // its first event strictly after some neighbor's infection time.
    // Frontier proxy: infected at the smallest positive double.
    let events: BTreeMap<VertexId, Vec<f64>> = graph
        .vertex_ids()
        .map(|v| Ok((v, event_times(&noise, &graph, v, horizon)?)))
        .collect::<Result<_>>()?;
    let mut infect: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut heap: BinaryHeap<(std::cmp::Reverse<u64>, VertexId)> = BinaryHeap::new();
    for &v in &frontier {
        infect.insert(v, f64::MIN_POSITIVE);
        heap.push((std::cmp::Reverse(f64::MIN_POSITIVE.to_bits()), v));
    }
    while let Some((std::cmp::Reverse(bits), v)) = heap.pop() {
        let t = f64::from_bits(bits);
        if infect.get(&v).is_none_or(|&best| t > best) {
            continue;
        }
        for &u in graph.neighbors(v) {
            if let Some(&s) = events[&u].iter().find(|&&s| s > t) {
                if infect.get(&u).is_none_or(|&best| s < best) {
                    infect.insert(u, s);
                    heap.push((std::cmp::Reverse(s.to_bits()), u));
                }
            }
        }
    }
    let nontrivial: BTreeMap<VertexId, Trajectory> = graph
        .vertex_ids()
        .map(|v| {
            let traj = match infect.get(&v) {
                Some(&t) => Trajectory {
                    x0: 0,
                    jumps: vec![(t, 1)],
                },
                None => Trajectory::constant(0),
            };
            (v, traj)
        })
        .collect();

    let trivial_violations = verify_sde(
        &graph,
        &model,
        &noise,
        horizon,
        None,
        &trivial,
        &BTreeSet::new(),
    )?;
    let nontrivial_violations = verify_sde(
        &graph,
        &model,
        &noise,
        horizon,
        None,
        &nontrivial,
        &frontier,
    )?;

    Ok(TwoSolutions {
        differ_at_root: nontrivial[&root].value_at(horizon) == 1,
        trivial,
        nontrivial,
        frontier,
        trivial_violations,
        nontrivial_violations,
    })
}
