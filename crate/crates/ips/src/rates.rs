//! Local jump-rate models.
//!
//! A rate model sees only a read-only radius-1 ball view of the jumping
//! vertex, with trajectories truncated to `[0, t)`, which makes locality
//! and predictability structural. Rates must respect the declared bound
//! `bound(|cl(v)|, T)` for all `t <= T`.

use std::collections::BTreeMap;

use crate::error::{IpsError, Result};
use crate::graph::{MarkedGraph, VertexId, VertexMark};
use crate::noise::JumpSpec;
use crate::sim::Trajectory;

/// Read-only radius-1 ball of `center` at evaluation time `t`: states and
/// jump histories strictly before `t`, plus the marks on the ball.
pub struct BallView<'a> {
    graph: &'a MarkedGraph,
    center: VertexId,
    backing: Backing<'a>,
    t: f64,
}

/// Trajectory storage behind a ball view: a plain map, or the simulator's
/// index-addressed arrays (neighbor ids and slots run parallel).
enum Backing<'a> {
    Map(&'a BTreeMap<VertexId, Trajectory>),
    Indexed {
        trajs: &'a [Trajectory],
        center_slot: u32,
        neighbor_ids: &'a [VertexId],
        neighbor_slots: &'a [u32],
    },
}

impl<'a> BallView<'a> {
    pub fn new(
        graph: &'a MarkedGraph,
        center: VertexId,
        trajectories: &'a BTreeMap<VertexId, Trajectory>,
        t: f64,
    ) -> BallView<'a> {
        BallView {
            graph,
            center,
            backing: Backing::Map(trajectories),
            t,
        }
    }

    pub(crate) fn indexed(
        graph: &'a MarkedGraph,
        center: VertexId,
        trajs: &'a [Trajectory],
        center_slot: u32,
        neighbor_ids: &'a [VertexId],
        neighbor_slots: &'a [u32],
        t: f64,
    ) -> BallView<'a> {
        BallView {
            graph,
            center,
            backing: Backing::Indexed {
                trajs,
                center_slot,
                neighbor_ids,
                neighbor_slots,
            },
            t,
        }
    }

    fn trajectory(&self, v: VertexId) -> Option<&'a Trajectory> {
        match &self.backing {
            Backing::Map(map) => map.get(&v),
            Backing::Indexed {
                trajs,
                center_slot,
                neighbor_ids,
                neighbor_slots,
            } => {
                if v == self.center {
                    return Some(&trajs[*center_slot as usize]);
                }
                neighbor_ids
                    .iter()
                    .position(|&u| u == v)
                    .map(|i| &trajs[neighbor_slots[i] as usize])
            }
        }
    }

    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn neighbors(&self) -> &[VertexId] {
        match &self.backing {
            Backing::Map(_) => self.graph.neighbors(self.center),
            Backing::Indexed { neighbor_ids, .. } => neighbor_ids,
        }
    }

    /// x_v(t-).
    pub fn state_before(&self, v: VertexId) -> i64 {
        match self.trajectory(v) {
            Some(traj) => traj.value_before(self.t),
            None => self.graph.state(v),
        }
    }

    pub fn vertex_mark(&self, v: VertexId) -> &VertexMark {
        self.graph.vertex_mark(v)
    }

    /// First component of the center-`u` edge mark, or `default` when the
    /// mark is empty.
    pub fn edge_mark_scalar(&self, u: VertexId, default: f64) -> f64 {
        self.graph
            .edge_mark(self.center, u)
            .and_then(|m| m.first().copied())
            .unwrap_or(default)
    }

    /// First component of a real vertex mark, or `default`.
    pub fn vertex_mark_scalar(&self, v: VertexId, default: f64) -> f64 {
        match self.graph.vertex_mark(v) {
            VertexMark::Reals(xs) => xs.first().copied().unwrap_or(default),
            _ => default,
        }
    }

    /// Most recent event time among `vs` strictly before `t`: trajectory
    /// jumps in `(0, t)` and pre-time-0 history jumps in `[-t0, 0]`.
    /// Returns `-t0` if none.
    pub fn last_event_before(&self, vs: &[VertexId], t0: f64) -> f64 {
        let mut last = f64::NEG_INFINITY;
        for &v in vs {
            if let Some(traj) = self.trajectory(v) {
                if let Some(s) = traj.last_jump_before(self.t) {
                    last = last.max(s);
                }
            }
            if let VertexMark::History(h) = self.graph.vertex_mark(v) {
                for &(s, _) in &h.jumps {
                    if s < self.t {
                        last = last.max(s);
                    }
                }
            }
        }
        if last.is_finite() {
            last
        } else {
            -t0
        }
    }
}

pub trait RateModel: Send + Sync {
    fn jump_spec(&self) -> &JumpSpec;

    /// The finite state space X.
    fn states(&self) -> &[i64];

    /// r^{G,v}_j(t, x) evaluated on the radius-1 ball view.
    fn rate(&self, ball: &BallView, j: i64) -> Result<f64>;

    /// C_{k,T}: nondecreasing bound on the rate for closure size k and
    /// horizon T.
    fn bound(&self, closure_size: usize, horizon: f64) -> f64;

    /// True when the rate depends on the state vector only (no time or
    /// history dependence); gates the master-equation oracle.
    fn is_markov(&self) -> bool;
}

/// Contact process: infection at rate λ·(# infected neighbors), recovery
/// at rate 1. States {0,1}, jumps {-1,+1}, C_k = 1 + (k-1)λ.
pub struct ContactModel {
    lambda: f64,
    jump_spec: JumpSpec,
}

impl ContactModel {
    pub fn new(lambda: f64) -> ContactModel {
        assert!(lambda >= 0.0);
        ContactModel {
            lambda,
            jump_spec: JumpSpec::unit(&[-1, 1]),
        }
    }
}

impl RateModel for ContactModel {
    fn jump_spec(&self) -> &JumpSpec {
        &self.jump_spec
    }

    fn states(&self) -> &[i64] {
        &[0, 1]
    }

    fn rate(&self, ball: &BallView, j: i64) -> Result<f64> {
        let x = ball.state_before(ball.center());
        Ok(match j {
            1 if x == 0 => {
                let infected = ball
                    .neighbors()
                    .iter()
                    .filter(|&&u| ball.state_before(u) == 1)
                    .count();
                self.lambda * infected as f64
            }
            -1 if x == 1 => 1.0,
            _ => 0.0,
        })
    }

    fn bound(&self, closure_size: usize, _horizon: f64) -> f64 {
        1.0 + (closure_size.saturating_sub(1)) as f64 * self.lambda
    }

    fn is_markov(&self) -> bool {
        true
    }
}

/// Contact process in a heterogeneous environment: edge marks are
/// transmission rates, vertex marks recovery rates, both bounded by
/// declared caps. C_{k,T} = vcap + (k-1)·ecap.
pub struct HetContactModel {
    pub vertex_cap: f64,
    pub edge_cap: f64,
    jump_spec: JumpSpec,
}

impl HetContactModel {
    pub fn new(vertex_cap: f64, edge_cap: f64) -> HetContactModel {
        HetContactModel {
            vertex_cap,
            edge_cap,
            jump_spec: JumpSpec::unit(&[-1, 1]),
        }
    }

    fn checked(&self, value: f64, cap: f64) -> Result<f64> {
        if value < 0.0 || value > cap {
            Err(IpsError::MarkOutOfRange { value, cap })
        } else {
            Ok(value)
        }
    }
}

impl RateModel for HetContactModel {
    fn jump_spec(&self) -> &JumpSpec {
        &self.jump_spec
    }

    fn states(&self) -> &[i64] {
        &[0, 1]
    }

    fn rate(&self, ball: &BallView, j: i64) -> Result<f64> {
        let x = ball.state_before(ball.center());
        match j {
            1 if x == 0 => {
                let mut total = 0.0;
                for &u in ball.neighbors() {
                    if ball.state_before(u) == 1 {
                        total += self.checked(ball.edge_mark_scalar(u, 0.0), self.edge_cap)?;
                    }
                }
                Ok(total)
            }
            -1 if x == 1 => {
                self.checked(ball.vertex_mark_scalar(ball.center(), 0.0), self.vertex_cap)
            }
            _ => Ok(0.0),
        }
    }

    fn bound(&self, closure_size: usize, _horizon: f64) -> f64 {
        self.vertex_cap + (closure_size.saturating_sub(1)) as f64 * self.edge_cap
    }

    fn is_markov(&self) -> bool {
        true
    }
}

/// Piecewise-linear hazard table with an explicit cap. Evaluation clamps
/// to the boundary values outside the knot range.
#[derive(Clone, Debug)]
pub struct Hazard {
    knots: Vec<f64>,
    values: Vec<f64>,
    pub cap: f64,
}

impl Hazard {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, cap: f64) -> Result<Hazard> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(IpsError::InvalidParameter(
                "hazard table needs matching nonempty knots/values".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IpsError::InvalidParameter(
                "hazard knots must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(IpsError::InvalidParameter(
                "hazard values must be nonnegative".into(),
            ));
        }
        Ok(Hazard { knots, values, cap })
    }

    pub fn constant(value: f64) -> Hazard {
        Hazard {
            knots: vec![0.0],
            values: vec![value],
            cap: value,
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let value = if s <= self.knots[0] {
            self.values[0]
        } else if s >= *self.knots.last().unwrap() {
            *self.values.last().unwrap()
        } else {
            let i = self.knots.partition_point(|&k| k <= s) - 1;
            let (k0, k1) = (self.knots[i], self.knots[i + 1]);
            let (v0, v1) = (self.values[i], self.values[i + 1]);
            v0 + (v1 - v0) * (s - k0) / (k1 - k0)
        };
        if value > self.cap {
            Err(IpsError::UnboundedHazard {
                value,
                cap: self.cap,
                arg: s,
            })
        } else {
            Ok(value)
        }
    }
}

/// Which argument the hazards receive: the elapsed time `t - τ` (default,
/// matching the renewal-process literature) or the raw last-event time `τ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardArg {
    Elapsed,
    Absolute,
}

/// Renewal (non-Markovian) contact process: infection pressure from an
/// infected neighbor u is hI applied to the time since the last event
/// among {u,v}; recovery is hR applied to the time since v's last event.
/// Vertex marks may carry pre-time-0 histories over `[-t0, 0]`.
pub struct RenewalContactModel {
    pub h_infect: Hazard,
    pub h_recover: Hazard,
    pub t0: f64,
    pub arg: HazardArg,
    jump_spec: JumpSpec,
}

impl RenewalContactModel {
    pub fn new(h_infect: Hazard, h_recover: Hazard, t0: f64) -> RenewalContactModel {
        RenewalContactModel {
            h_infect,
            h_recover,
            t0,
            arg: HazardArg::Elapsed,
            jump_spec: JumpSpec::unit(&[-1, 1]),
        }
    }

    pub fn with_arg(mut self, arg: HazardArg) -> RenewalContactModel {
        self.arg = arg;
        self
    }

    fn hazard_arg(&self, ball: &BallView, tau: f64) -> f64 {
        match self.arg {
            HazardArg::Elapsed => ball.time() - tau,
            HazardArg::Absolute => tau,
        }
    }
}

impl RateModel for RenewalContactModel {
    fn jump_spec(&self) -> &JumpSpec {
        &self.jump_spec
    }

    fn states(&self) -> &[i64] {
        &[0, 1]
    }

    fn rate(&self, ball: &BallView, j: i64) -> Result<f64> {
        let v = ball.center();
        let x = ball.state_before(v);
        match j {
            1 if x == 0 => {
                let mut total = 0.0;
                for &u in ball.neighbors() {
                    if ball.state_before(u) == 1 {
                        let tau = ball.last_event_before(&[u, v], self.t0);
                        total += self.h_infect.eval(self.hazard_arg(ball, tau))?;
                    }
                }
                Ok(total)
            }
            -1 if x == 1 => {
                let tau = ball.last_event_before(&[v], self.t0);
                self.h_recover.eval(self.hazard_arg(ball, tau))
            }
            _ => Ok(0.0),
        }
    }

    fn bound(&self, closure_size: usize, _horizon: f64) -> f64 {
        self.h_recover.cap + (closure_size.saturating_sub(1)) as f64 * self.h_infect.cap
    }

    fn is_markov(&self) -> bool {
        false
    }
}

/// Pure-spread model with rates in {0,1}: a healthy vertex with at least
/// one infected neighbor jumps to 1 at rate 1; nothing else moves.
/// J = {1}, bound ≡ 1.
pub struct SpreadModel {
    jump_spec: JumpSpec,
}

impl SpreadModel {
    pub fn new() -> SpreadModel {
        SpreadModel {
            jump_spec: JumpSpec::unit(&[1]),
        }
    }
}

impl Default for SpreadModel {
    fn default() -> Self {
        Self::new()
    }
}

impl RateModel for SpreadModel {
    fn jump_spec(&self) -> &JumpSpec {
        &self.jump_spec
    }

    fn states(&self) -> &[i64] {
        &[0, 1]
    }

    fn rate(&self, ball: &BallView, j: i64) -> Result<f64> {
        let x = ball.state_before(ball.center());
        let any_infected = ball
            .neighbors()
            .iter()
            .any(|&u| ball.state_before(u) == 1);
        Ok(if j == 1 && x == 0 && any_infected {
            1.0
        } else {
            0.0
        })
    }

    fn bound(&self, _closure_size: usize, _horizon: f64) -> f64 {
        1.0
    }

    fn is_markov(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::HistoryRecord;

    /// Star with `center` plus neighbor states, no trajectories (states
    /// come from initial states), evaluated at time `t`.
    fn star_graph(center_state: i64, neighbor_states: &[i64]) -> MarkedGraph {
        let mut g = MarkedGraph::new();
        g.add_vertex(0, center_state, VertexMark::Empty);
        for (i, &s) in neighbor_states.iter().enumerate() {
            g.add_vertex(i as VertexId + 1, s, VertexMark::Empty);
            g.add_edge(0, i as VertexId + 1, vec![]).unwrap();
        }
        g
    }

    fn eval(g: &MarkedGraph, model: &dyn RateModel, j: i64, t: f64) -> f64 {
        let trajs: BTreeMap<VertexId, Trajectory> = g
            .vertex_ids()
            .map(|v| (v, Trajectory::constant(g.state(v))))
            .collect();
        model.rate(&BallView::new(g, 0, &trajs, t), j).unwrap()
    }

    #[test]
    fn contact_rate_examples() {
        let m = ContactModel::new(0.5);
        let g = star_graph(0, &[1, 1, 1]);
        assert_eq!(eval(&g, &m, 1, 0.3), 1.5);
        let g = star_graph(1, &[1, 1, 1]);
        assert_eq!(eval(&g, &m, 1, 0.3), 0.0);
        assert_eq!(eval(&g, &m, -1, 0.3), 1.0);
        let g = star_graph(0, &[0, 0]);
        assert_eq!(eval(&g, &m, 1, 0.3), 0.0);
        assert_eq!(m.bound(4, 1.0), 2.5);
    }

    #[test]
    fn het_contact_examples() {
        let m = HetContactModel::new(1.0, 1.0);
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 0, VertexMark::Reals(vec![1.0]));
        g.add_vertex(1, 1, VertexMark::Reals(vec![1.0]));
        g.add_vertex(2, 1, VertexMark::Reals(vec![1.0]));
        g.add_edge(0, 1, vec![0.2]).unwrap();
        g.add_edge(0, 2, vec![0.7]).unwrap();
        assert!((eval(&g, &m, 1, 0.5) - 0.9).abs() < 1e-12);
        let m = HetContactModel::new(1.0, 0.5);
        assert_eq!(m.bound(3, 1.0), 2.0);
    }

    #[test]
    fn het_mark_out_of_range() {
        let m = HetContactModel::new(1.0, 0.5);
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 0, VertexMark::Reals(vec![1.0]));
        g.add_vertex(1, 1, VertexMark::Reals(vec![1.0]));
        g.add_edge(0, 1, vec![0.7]).unwrap();
        let trajs: BTreeMap<VertexId, Trajectory> = g
            .vertex_ids()
            .map(|v| (v, Trajectory::constant(g.state(v))))
            .collect();
        assert!(matches!(
            m.rate(&BallView::new(&g, 0, &trajs, 0.5), 1),
            Err(IpsError::MarkOutOfRange { .. })
        ));
    }

    #[test]
    fn het_reduces_to_contact() {
        let lambda = 0.8;
        let contact = ContactModel::new(lambda);
        let het = HetContactModel::new(1.0, lambda);
        for seed in 0..100u64 {
            let k = (crate::seeding::mix(seed) % 5) as usize;
            let states: Vec<i64> = (0..k)
                .map(|i| (crate::seeding::mix(seed ^ (i as u64) << 8) % 2) as i64)
                .collect();
            let center = (crate::seeding::mix(seed ^ 0xabc) % 2) as i64;
            let mut g = MarkedGraph::new();
            g.add_vertex(0, center, VertexMark::Reals(vec![1.0]));
            for (i, &s) in states.iter().enumerate() {
                g.add_vertex(i as VertexId + 1, s, VertexMark::Reals(vec![1.0]));
                g.add_edge(0, i as VertexId + 1, vec![lambda]).unwrap();
            }
            for j in [-1, 1] {
                assert!((eval(&g, &contact, j, 0.4) - eval(&g, &het, j, 0.4)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn renewal_constant_hazards_match_contact() {
        let lambda = 0.7;
        let renewal = RenewalContactModel::new(
            Hazard::constant(lambda),
            Hazard::constant(1.0),
            1.0,
        );
        let contact = ContactModel::new(lambda);
        for center in [0, 1] {
            for pattern in 0..8i64 {
                let states: Vec<i64> = (0..3).map(|b| (pattern >> b) & 1).collect();
                let g = star_graph(center, &states);
                for j in [-1, 1] {
                    assert_eq!(eval(&g, &renewal, j, 0.6), eval(&g, &contact, j, 0.6));
                }
            }
        }
    }

    #[test]
    fn renewal_elapsed_time_recovery() {
        // hR(s) = 2s, last event of v at 0.3, t=0.8 -> rate 1.0
        let m = RenewalContactModel::new(
            Hazard::constant(0.0),
            Hazard::new(vec![0.0, 10.0], vec![0.0, 20.0], 20.0).unwrap(),
            1.0,
        );
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 0, VertexMark::Empty);
        let mut trajs = BTreeMap::new();
        trajs.insert(
            0,
            Trajectory {
                x0: 0,
                jumps: vec![(0.3, 1)],
            },
        );
        let rate = m.rate(&BallView::new(&g, 0, &trajs, 0.8), -1).unwrap();
        assert!((rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renewal_empty_history_uses_t0() {
        // no events, t0=1, hR(s)=s, t=0 -> elapsed 1 -> rate 1
        let m = RenewalContactModel::new(
            Hazard::constant(0.0),
            Hazard::new(vec![0.0, 10.0], vec![0.0, 10.0], 10.0).unwrap(),
            1.0,
        );
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 1, VertexMark::Empty);
        let trajs: BTreeMap<VertexId, Trajectory> =
            [(0, Trajectory::constant(1))].into_iter().collect();
        let rate = m.rate(&BallView::new(&g, 0, &trajs, 0.0), -1).unwrap();
        assert!((rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renewal_history_mark_counts_as_event() {
        let m = RenewalContactModel::new(
            Hazard::constant(0.0),
            Hazard::new(vec![0.0, 10.0], vec![0.0, 10.0], 10.0).unwrap(),
            1.0,
        );
        let mut g = MarkedGraph::new();
        g.add_vertex(
            0,
            1,
            VertexMark::History(HistoryRecord {
                x0: 0,
                jumps: vec![(-0.25, 1)],
            }),
        );
        let trajs: BTreeMap<VertexId, Trajectory> =
            [(0, Trajectory::constant(1))].into_iter().collect();
        let rate = m.rate(&BallView::new(&g, 0, &trajs, 0.5), -1).unwrap();
        assert!((rate - 0.75).abs() < 1e-12);
    }

    #[test]
    fn hazard_cap_enforced() {
        let h = Hazard::new(vec![0.0, 1.0], vec![0.0, 5.0], 2.0).unwrap();
        assert!(h.eval(0.1).is_ok());
        assert!(matches!(
            h.eval(0.9),
            Err(IpsError::UnboundedHazard { .. })
        ));
    }

    #[test]
    fn spread_model_rates() {
        let m = SpreadModel::new();
        assert_eq!(eval(&star_graph(0, &[1]), &m, 1, 0.5), 1.0);
        assert_eq!(eval(&star_graph(0, &[0, 0]), &m, 1, 0.5), 0.0);
        assert_eq!(eval(&star_graph(1, &[1]), &m, 1, 0.5), 0.0);
        assert_eq!(m.bound(100, 10.0), 1.0);
    }
}
