//! Pathwise simulation on finite graphs by thinning the driving noise.
//!
//! Every vertex v scans its own noise events up to the level cap
//! C_{|cl(v)|, T}; an event (t, r, j) is accepted iff r <= r^{G,v}_j(t-).
//! The trajectory is a deterministic function of the noise realization,
//! which is what makes localized and truncated runs comparable pathwise.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{IpsError, Result};
use crate::graph::{MarkedGraph, VertexId};
use crate::noise::DrivingNoise;
use crate::rates::{BallView, RateModel};

/// Cadlag pure-jump path: x(t) = x0 + sum of jump sizes with time <= t.
/// Jump times are strictly increasing and lie in (0, horizon].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: i64,
    pub jumps: Vec<(f64, i64)>,
}

impl Trajectory {
    pub fn constant(x0: i64) -> Trajectory {
        Trajectory { x0, jumps: vec![] }
    }

    /// x(t-): jumps strictly before t.
    pub fn value_before(&self, t: f64) -> i64 {
        self.x0
            + self
                .jumps
                .iter()
                .take_while(|&&(s, _)| s < t)
                .map(|&(_, j)| j)
                .sum::<i64>()
    }

    /// x(t): jumps at or before t.
    pub fn value_at(&self, t: f64) -> i64 {
        self.x0
            + self
                .jumps
                .iter()
                .take_while(|&&(s, _)| s <= t)
                .map(|&(_, j)| j)
                .sum::<i64>()
    }

    pub fn last_jump_before(&self, t: f64) -> Option<f64> {
        self.jumps
            .iter()
            .rev()
            .find(|&&(s, _)| s < t)
            .map(|&(s, _)| s)
    }
}

/// Per-vertex level caps; defaults to C_{|cl(v)|, T} from the ambient
/// graph, but localized runs pass closure sizes measured in a larger
/// graph so a subgraph run reproduces the ambient path.
#[derive(Clone, Debug, Default)]
pub struct CapOverride {
    pub closure_sizes: BTreeMap<VertexId, usize>,
}

fn vertex_cap(
    graph: &MarkedGraph,
    model: &dyn RateModel,
    horizon: f64,
    caps: Option<&CapOverride>,
    v: VertexId,
) -> f64 {
    let k = caps
        .and_then(|c| c.closure_sizes.get(&v).copied())
        .unwrap_or_else(|| graph.closure_size(v));
    model.bound(k, horizon)
}

/// Run the thinning construction on a finite graph over [0, horizon].
pub fn simulate(
    graph: &MarkedGraph,
    model: &dyn RateModel,
    noise: &DrivingNoise,
    horizon: f64,
    caps: Option<&CapOverride>,
) -> Result<BTreeMap<VertexId, Trajectory>> {
    if graph.is_lazy() {
        return Err(IpsError::InvalidParameter(
            "simulate requires a finite (fully materialized) graph".into(),
        ));
    }
    let ids: Vec<VertexId> = graph.vertex_ids().collect();
    simulate_on(graph, model, noise, horizon, caps, &ids)
}

/// Thinning construction restricted to `world` (sorted, materialized
/// vertices of a possibly larger graph). Edges leaving `world` are ignored,
/// matching a run on the induced subgraph, while level caps still default
/// to ambient closure sizes unless overridden.
pub fn simulate_on(
    graph: &MarkedGraph,
    model: &dyn RateModel,
    noise: &DrivingNoise,
    horizon: f64,
    caps: Option<&CapOverride>,
    world: &[VertexId],
) -> Result<BTreeMap<VertexId, Trajectory>> {
    debug_assert!(world.windows(2).all(|w| w[0] < w[1]));
    let states: BTreeSet<i64> = model.states().iter().copied().collect();
    let n = world.len();
    let slot_of = |v: VertexId| world.binary_search(&v).ok();

    // Index-addressed mirrors of the world: inner-loop work never touches
    // the graph's maps.
    let mut cap_of: Vec<f64> = Vec::with_capacity(n);
    let mut nbr_ids: Vec<Vec<VertexId>> = Vec::with_capacity(n);
    let mut nbr_slots: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut trajs: Vec<Trajectory> = Vec::with_capacity(n);
    for &v in world {
        cap_of.push(vertex_cap(graph, model, horizon, caps, v));
        let mut ids = Vec::new();
        let mut slots = Vec::new();
        for &u in graph.neighbors(v) {
            if let Some(s) = slot_of(u) {
                ids.push(u);
                slots.push(s as u32);
            }
        }
        nbr_ids.push(ids);
        nbr_slots.push(slots);
        if !states.contains(&graph.state(v)) {
            return Err(IpsError::StateEscape {
                vertex: v,
                jump: 0,
            });
        }
        trajs.push(Trajectory::constant(graph.state(v)));
    }

    // Global time-ordered sweep over every vertex's events under its cap.
    let mut queue: Vec<(f64, u32, f64, i64)> = Vec::new();
    for (slot, &v) in world.iter().enumerate() {
        for e in noise.events(graph.noise_key(v), cap_of[slot], (0.0, horizon))? {
            queue.push((e.t, slot as u32, e.r, e.j));
        }
    }
    queue.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(world[a.1 as usize].cmp(&world[b.1 as usize]))
    });

    for (t, slot, r, j) in queue {
        let s = slot as usize;
        let v = world[s];
        let view = BallView::indexed(graph, v, &trajs, slot, &nbr_ids[s], &nbr_slots[s], t);
        let rate = model.rate(&view, j)?;
        if !rate.is_finite() || rate < 0.0 {
            return Err(IpsError::NonFinite);
        }
        if rate > cap_of[s] * (1.0 + 1e-9) {
            return Err(IpsError::InvalidParameter(format!(
                "rate {rate} exceeds declared bound {} at vertex {v}",
                cap_of[s]
            )));
        }
        if r <= rate {
            let x = trajs[s].value_before(t) + j;
            if !states.contains(&x) {
                return Err(IpsError::StateEscape { vertex: v, jump: j });
            }
            trajs[s].jumps.push((t, j));
        }
    }
    Ok(world.iter().copied().zip(trajs).collect())
}

/// One discrepancy between a claimed solution and the noise-driven
/// dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SdeViolation {
    /// Trajectory starts away from the graph's initial state.
    InitMismatch { vertex: VertexId },
    /// An event the rates accept has no matching jump.
    MissingJump { vertex: VertexId, t: f64 },
    /// A jump with no accepting event, or with the wrong size.
    SpuriousJump { vertex: VertexId, t: f64 },
}

/// Replay the thinning test against given trajectories: every accepted
/// event must appear as a jump and every jump must be an accepted event.
/// Vertices in `skip` are exempt (boundary/frontier vertices whose noise
/// is not part of the system under test).
pub fn verify_sde(
    graph: &MarkedGraph,
    model: &dyn RateModel,
    noise: &DrivingNoise,
    horizon: f64,
    caps: Option<&CapOverride>,
    trajs: &BTreeMap<VertexId, Trajectory>,
    skip: &BTreeSet<VertexId>,
) -> Result<Vec<SdeViolation>> {
    let mut violations = Vec::new();
    for v in graph.vertex_ids() {
        if skip.contains(&v) {
            continue;
        }
        let traj = trajs
            .get(&v)
            .ok_or(IpsError::UnknownVertex(v))?;
        if traj.x0 != graph.state(v) {
            violations.push(SdeViolation::InitMismatch { vertex: v });
        }
        let cap = vertex_cap(graph, model, horizon, caps, v);
        let mut accepted: Vec<(f64, i64)> = Vec::new();
        for e in noise.events(graph.noise_key(v), cap, (0.0, horizon))? {
            let rate = model.rate(&BallView::new(graph, v, trajs, e.t), e.j)?;
            if e.r <= rate {
                accepted.push((e.t, e.j));
            }
        }
        let mut ai = accepted.iter().peekable();
        let mut ji = traj.jumps.iter().peekable();
        loop {
            match (ai.peek(), ji.peek()) {
                (None, None) => break,
                (Some(&&(t, _)), None) => {
                    violations.push(SdeViolation::MissingJump { vertex: v, t });
                    ai.next();
                }
                (None, Some(&&(t, _))) => {
                    violations.push(SdeViolation::SpuriousJump { vertex: v, t });
                    ji.next();
                }
                (Some(&&(ta, ja)), Some(&&(tj, jj))) => {
                    if ta == tj && ja == jj {
                        ai.next();
                        ji.next();
                    } else if ta <= tj {
                        violations.push(SdeViolation::MissingJump { vertex: v, t: ta });
                        ai.next();
                    } else {
                        violations.push(SdeViolation::SpuriousJump { vertex: v, t: tj });
                        ji.next();
                    }
                }
            }
        }
    }
    Ok(violations)
}

/// Properness on a horizon: finitely many jumps, strictly increasing
/// times inside (0, horizon].
pub fn is_proper(trajs: &BTreeMap<VertexId, Trajectory>, horizon: f64) -> bool {
    trajs.values().all(|traj| {
        traj.jumps
            .windows(2)
            .all(|w| w[0].0 < w[1].0)
            && traj
                .jumps
                .iter()
                .all(|&(t, _)| t > 0.0 && t <= horizon && t.is_finite())
    })
}
