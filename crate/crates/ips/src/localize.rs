//! Backwards localization: which vertices can influence an observation
//! set by a horizon.
//!
//! Walking event times backwards from T, each step finds the latest
//! driving-noise event strictly before the current time among the
//! current set (at each vertex's level cap) and absorbs the closure of
//! its vertex. Once the walk reaches time 0, noise outside the final set
//! cannot change the observed trajectories, so simulating the induced
//! subgraph with ambient caps reproduces the marginal pathwise.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::Result;
use crate::graph::{MarkedGraph, VertexId};
use crate::noise::DrivingNoise;
use crate::rates::RateModel;
use crate::sim::{simulate_on, CapOverride, Trajectory};

#[derive(Clone, Debug)]
pub struct InfluenceResult {
    /// U_K: the observation set plus every absorbed closure.
    pub set: BTreeSet<VertexId>,
    /// The traced events, latest first: (tau_k, v_k).
    pub trace: Vec<(f64, VertexId)>,
    /// True when `max_steps` ran out before reaching time 0; the set is
    /// then a lower bound only.
    pub exhausted: bool,
}

/// Run the backwards recursion from the observation set `obs`. Lazy
/// graphs are materialized along the way, so `graph` is borrowed mutably.
pub fn influence_set(
    graph: &mut MarkedGraph,
    model: &dyn RateModel,
    noise: &DrivingNoise,
    horizon: f64,
    obs: &BTreeSet<VertexId>,
    max_steps: usize,
) -> Result<InfluenceResult> {
    // The recursion is a backward epidemic: a member's neighbors join at
    // its latest event strictly below its own join time, and earlier
    // events of the same vertex absorb nothing new. Running a max-first
    // Dijkstra on join times therefore reproduces U_K with one noise
    // query per member instead of one step per traced event.
    let mut join: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut events_of: BTreeMap<VertexId, Vec<f64>> = BTreeMap::new();
    // Events lie in (0, T], so positive-f64 bit patterns order like the
    // floats themselves.
    let mut heap: BinaryHeap<(u64, Reverse<VertexId>)> = BinaryHeap::new();
    for &v in obs {
        join.insert(v, horizon);
        heap.push((horizon.to_bits(), Reverse(v)));
    }

    let mut counted = 0usize;
    while let Some((bits, Reverse(v))) = heap.pop() {
        let a = f64::from_bits(bits);
        if join.get(&v) != Some(&a) || events_of.contains_key(&v) {
            continue; // stale entry or already processed at a higher time
        }
        if counted > max_steps {
            break; // budget blown; assemble a truncated result below
        }
        graph.ensure_expanded(v)?;
        let cap = model.bound(graph.closure_size(v), horizon);
        let ts: Vec<f64> = noise
            .events(graph.noise_key(v), cap, (0.0, horizon))?
            .into_iter()
            .map(|e| e.t)
            .collect();
        let latest = ts.iter().rev().find(|&&t| t < a).copied();
        counted += ts.iter().filter(|&&t| t < a).count();
        events_of.insert(v, ts);
        let Some(t) = latest else { continue };
        for u in std::iter::once(v).chain(graph.neighbors(v).iter().copied()) {
            if join.get(&u).map_or(true, |&b| t > b) {
                join.insert(u, t);
                heap.push((t.to_bits(), Reverse(u)));
            }
        }
    }

    // Replay order: every event of every member below its join time,
    // latest first (ties toward the smaller vertex id).
    let mut trace: Vec<(f64, VertexId)> = Vec::new();
    for (&v, ts) in &events_of {
        let a = join[&v];
        trace.extend(ts.iter().filter(|&&t| t < a).map(|&t| (t, v)));
    }
    trace.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let exhausted = trace.len() > max_steps;
    if exhausted {
        // Partial set: only the absorptions reached within the budget.
        trace.truncate(max_steps);
        let mut set = obs.clone();
        for &(_, v) in &trace {
            set.insert(v);
            set.extend(graph.neighbors(v).iter().copied());
        }
        return Ok(InfluenceResult {
            set,
            trace,
            exhausted,
        });
    }
    let mut set = obs.clone();
    set.extend(join.keys().copied());
    Ok(InfluenceResult {
        set,
        trace,
        exhausted,
    })
}

#[derive(Debug)]
pub struct LocalizedRun {
    /// Trajectories restricted to the observation set.
    pub trajectories: BTreeMap<VertexId, Trajectory>,
    pub influence: InfluenceResult,
    /// Vertices actually simulated (closure of the influence set).
    pub simulated: usize,
}

/// Compute the marginal of the observation set by simulating only the
/// closure of its influence set, with level caps taken from the ambient
/// graph so the thinning decisions match a full-graph run event for
/// event.
pub fn localized_marginal(
    graph: &mut MarkedGraph,
    model: &dyn RateModel,
    noise: &DrivingNoise,
    horizon: f64,
    obs: &BTreeSet<VertexId>,
    max_steps: usize,
) -> Result<LocalizedRun> {
    let influence = influence_set(graph, model, noise, horizon, obs, max_steps)?;
    if influence.exhausted {
        // A truncated influence set cannot certify the marginal.
        return Err(crate::error::IpsError::BudgetExceeded { budget: max_steps });
    }
    for &v in &influence.set {
        graph.ensure_expanded(v)?;
    }
    let world = graph.closure(&influence.set)?;
    // Ambient closure sizes need materialized boundary degrees.
    for &v in &world {
        graph.ensure_expanded(v)?;
    }
    let caps = CapOverride {
        closure_sizes: world
            .iter()
            .map(|&v| (v, graph.closure_size(v)))
            .collect(),
    };
    let ids: Vec<VertexId> = world.iter().copied().collect();
    let trajs = simulate_on(graph, model, noise, horizon, Some(&caps), &ids)?;
    Ok(LocalizedRun {
        trajectories: trajs
            .into_iter()
            .filter(|(v, _)| obs.contains(v))
            .collect(),
        simulated: world.len(),
        influence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexMark;
    use crate::noise::JumpSpec;
    use crate::rates::ContactModel;
    use crate::sim::simulate;

    fn path_graph(states: &[i64]) -> MarkedGraph {
        let mut g = MarkedGraph::new();
        for (i, &s) in states.iter().enumerate() {
            g.add_vertex(i as VertexId, s, VertexMark::Empty);
            if i > 0 {
                g.add_edge(i as VertexId - 1, i as VertexId, vec![]).unwrap();
            }
        }
        g
    }

    fn noise(seed: u64, horizon: f64) -> DrivingNoise {
        DrivingNoise::new(seed, horizon, JumpSpec::unit(&[-1, 1]))
    }

    #[test]
    fn trace_times_strictly_decrease() {
        let horizon = 2.0;
        let n = noise(5, horizon);
        let mut g = path_graph(&[1, 0, 1, 0, 1, 0, 1, 0]);
        let model = ContactModel::new(1.0);
        let obs: BTreeSet<VertexId> = [3].into_iter().collect();
        let r = influence_set(&mut g, &model, &n, horizon, &obs, 100_000).unwrap();
        assert!(!r.exhausted);
        assert!(r.trace.windows(2).all(|w| w[0].0 > w[1].0));
        assert!(r.set.is_superset(&obs));
    }

    #[test]
    fn tiny_horizon_keeps_obs_only() {
        // With essentially no time there are a.s. no events to trace.
        let horizon = 1e-9;
        let n = noise(5, horizon);
        let mut g = path_graph(&[1, 0, 1]);
        let model = ContactModel::new(1.0);
        let obs: BTreeSet<VertexId> = [1].into_iter().collect();
        let r = influence_set(&mut g, &model, &n, horizon, &obs, 1000).unwrap();
        assert_eq!(r.set, obs);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn exhausted_flag_on_small_budget() {
        let horizon = 5.0;
        let n = noise(2, horizon);
        let mut g = path_graph(&[1, 0, 1, 0, 1]);
        let model = ContactModel::new(1.0);
        let obs: BTreeSet<VertexId> = [2].into_iter().collect();
        let r = influence_set(&mut g, &model, &n, horizon, &obs, 1).unwrap();
        assert!(r.exhausted);
    }

    #[test]
    fn localized_marginal_matches_full_run() {
        let horizon = 2.0;
        let model = ContactModel::new(1.0);
        for seed in 0..25u64 {
            let n = noise(seed, horizon);
            let full_g = path_graph(&[1, 0, 0, 1, 0, 1, 0, 0, 1, 0]);
            let full = simulate(&full_g, &model, &n, horizon, None).unwrap();
            let mut g = path_graph(&[1, 0, 0, 1, 0, 1, 0, 0, 1, 0]);
            let obs: BTreeSet<VertexId> = [4, 5].into_iter().collect();
            let run = localized_marginal(&mut g, &model, &n, horizon, &obs, 100_000)
                .unwrap();
            assert!(!run.influence.exhausted);
            for &v in &obs {
                assert_eq!(run.trajectories[&v], full[&v], "seed {seed} vertex {v}");
            }
        }
    }

    #[test]
    fn naive_truncation_can_disagree() {
        // Negative control: cutting a ball around the observation vertex
        // without the influence recursion (and without ambient caps)
        // changes the marginal for some seed.
        let horizon = 4.0;
        let model = ContactModel::new(1.5);
        let mut disagree = false;
        for seed in 0..40u64 {
            let n = noise(seed, horizon);
            let full_g = path_graph(&[1, 0, 0, 0, 1, 0, 0, 0, 1]);
            let full = simulate(&full_g, &model, &n, horizon, None).unwrap();
            let mut g = path_graph(&[1, 0, 0, 0, 1, 0, 0, 0, 1]);
            g.set_root(Some(4));
            let ball = {
                let keep: BTreeSet<VertexId> = [3, 4, 5].into_iter().collect();
                g.induced_subgraph(&keep)
            };
            let naive = simulate(&ball, &model, &n, horizon, None).unwrap();
            if naive[&4] != full[&4] {
                disagree = true;
                break;
            }
        }
        assert!(disagree);
    }
}
