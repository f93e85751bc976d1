//! Marked-graph data model: adjacency, rooted balls, components, closures,
//! and canonical signatures of small rooted marked balls.
//!
//! Graphs are simple, undirected and locally finite. Vertex ids are stable
//! nonnegative integers and a graph never shrinks: lazy expansion only adds
//! vertices. All read operations take `&self`; expansion is the only
//! mutation and takes `&mut self` (single writer).

mod canon;
mod io;

pub use canon::{canonical_signature, BallSignature, MarkDiscretizer};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{IpsError, Result};

pub type VertexId = u64;

/// Pre-time-0 history mark used by renewal models: the state at `-t0` plus
/// the jump times in `[-t0, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRecord {
    pub x0: i64,
    pub jumps: Vec<(f64, i64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum VertexMark {
    #[default]
    Empty,
    Reals(Vec<f64>),
    History(HistoryRecord),
}

pub type EdgeMark = Vec<f64>;

#[derive(Clone, Debug)]
struct VertexData {
    /// Sorted, deduplicated.
    neighbors: Vec<VertexId>,
    state: i64,
    mark: VertexMark,
    /// Noise key: equals the id on finite graphs, the path-derived sub-seed
    /// on lazy trees.
    key: u64,
    /// Distance to the root, when known (lazy trees track it for expansion).
    depth: Option<u32>,
    /// Lazy graphs: children already materialized.
    expanded: bool,
}

/// Specification of one lazily materialized child vertex.
#[derive(Clone, Debug)]
pub struct ChildSpec {
    pub key: u64,
    pub state: i64,
    pub mark: VertexMark,
    pub edge_mark: EdgeMark,
}

/// On-demand expansion of a lazy graph. `children` must be a pure function
/// of `(parent_key, depth)` so that the materialized graph is independent of
/// the order in which vertices are expanded.
pub trait Expand: Send + Sync {
    fn children(&self, parent_key: u64, depth: u32) -> Vec<ChildSpec>;
}

pub struct MarkedGraph {
    vertices: BTreeMap<VertexId, VertexData>,
    edge_marks: BTreeMap<(VertexId, VertexId), EdgeMark>,
    root: Option<VertexId>,
    expander: Option<Box<dyn Expand>>,
    /// Max materialized vertices for lazy expansion.
    budget: usize,
}

impl Clone for MarkedGraph {
    fn clone(&self) -> Self {
        assert!(
            self.expander.is_none(),
            "lazy graphs cannot be cloned; clone the generator instead"
        );
        MarkedGraph {
            vertices: self.vertices.clone(),
            edge_marks: self.edge_marks.clone(),
            root: self.root,
            expander: None,
            budget: self.budget,
        }
    }
}

impl std::fmt::Debug for MarkedGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkedGraph")
            .field("n", &self.vertices.len())
            .field("root", &self.root)
            .field("lazy", &self.expander.is_some())
            .finish()
    }
}

fn edge_id(u: VertexId, v: VertexId) -> (VertexId, VertexId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl MarkedGraph {
    pub fn new() -> Self {
        MarkedGraph {
            vertices: BTreeMap::new(),
            edge_marks: BTreeMap::new(),
            root: None,
            expander: None,
            budget: usize::MAX,
        }
    }

    /// A lazy graph seeded with a single root vertex; neighbors materialize
    /// on demand through `expander`.
    pub fn new_lazy(
        root_id: VertexId,
        root_key: u64,
        root_state: i64,
        root_mark: VertexMark,
        expander: Box<dyn Expand>,
        budget: usize,
    ) -> Self {
        let mut g = MarkedGraph::new();
        g.add_vertex_with_key(root_id, root_state, root_mark, root_key);
        g.vertices.get_mut(&root_id).unwrap().depth = Some(0);
        g.root = Some(root_id);
        g.expander = Some(expander);
        g.budget = budget;
        g
    }

    pub fn add_vertex(&mut self, id: VertexId, state: i64, mark: VertexMark) {
        self.add_vertex_with_key(id, state, mark, id);
    }

    pub fn add_vertex_with_key(&mut self, id: VertexId, state: i64, mark: VertexMark, key: u64) {
        let prev = self.vertices.insert(
            id,
            VertexData {
                neighbors: Vec::new(),
                state,
                mark,
                key,
                depth: None,
                expanded: false,
            },
        );
        assert!(prev.is_none(), "duplicate vertex id {id}");
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, mark: EdgeMark) -> Result<()> {
        if u == v {
            return Err(IpsError::InvalidParameter(format!("self-loop at {u}")));
        }
        if !self.vertices.contains_key(&u) {
            return Err(IpsError::UnknownVertex(u));
        }
        if !self.vertices.contains_key(&v) {
            return Err(IpsError::UnknownVertex(v));
        }
        if self.edge_marks.contains_key(&edge_id(u, v)) {
            return Ok(()); // already present; keep the graph simple
        }
        self.edge_marks.insert(edge_id(u, v), mark);
        let nu = &mut self.vertices.get_mut(&u).unwrap().neighbors;
        let pos = nu.binary_search(&v).unwrap_err();
        nu.insert(pos, v);
        let nv = &mut self.vertices.get_mut(&v).unwrap().neighbors;
        let pos = nv.binary_search(&u).unwrap_err();
        nv.insert(pos, u);
        Ok(())
    }

    pub fn set_root(&mut self, v: Option<VertexId>) {
        self.root = v;
    }

    pub fn root(&self) -> Option<VertexId> {
        self.root
    }

    pub fn is_lazy(&self) -> bool {
        self.expander.is_some()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.contains_key(&v)
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.vertices[&v].neighbors
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.vertices[&v].neighbors.len()
    }

    /// |cl(v)| = deg(v) + 1. On lazy graphs call `ensure_expanded` first.
    pub fn closure_size(&self, v: VertexId) -> usize {
        self.degree(v) + 1
    }

    pub fn state(&self, v: VertexId) -> i64 {
        self.vertices[&v].state
    }

    pub fn set_state(&mut self, v: VertexId, state: i64) {
        self.vertices.get_mut(&v).unwrap().state = state;
    }

    pub fn vertex_mark(&self, v: VertexId) -> &VertexMark {
        &self.vertices[&v].mark
    }

    pub fn set_vertex_mark(&mut self, v: VertexId, mark: VertexMark) {
        self.vertices.get_mut(&v).unwrap().mark = mark;
    }

    pub fn edge_mark(&self, u: VertexId, v: VertexId) -> Option<&EdgeMark> {
        self.edge_marks.get(&edge_id(u, v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, &EdgeMark)> + '_ {
        self.edge_marks.iter().map(|(&(u, v), m)| (u, v, m))
    }

    pub fn noise_key(&self, v: VertexId) -> u64 {
        self.vertices[&v].key
    }

    /// Materialize the children of `v` if the graph is lazy and `v` has not
    /// been expanded yet. After this call `neighbors(v)` is complete.
    pub fn ensure_expanded(&mut self, v: VertexId) -> Result<()> {
        if !self.vertices.contains_key(&v) {
            return Err(IpsError::UnknownVertex(v));
        }
        let Some(expander) = self.expander.as_ref() else {
            return Ok(());
        };
        let data = &self.vertices[&v];
        if data.expanded {
            return Ok(());
        }
        let depth = data
            .depth
            .expect("lazy vertices track their depth");
        let key = data.key;
        let children = expander.children(key, depth);
        if self.vertices.len() + children.len() > self.budget {
            return Err(IpsError::BudgetExceeded { budget: self.budget });
        }
        for child in children {
            let mut id = child.key;
            while self.vertices.contains_key(&id) {
                // u64 key collision; essentially never happens
                id = crate::seeding::mix(id);
            }
            self.add_vertex_with_key(id, child.state, child.mark, child.key);
            self.vertices.get_mut(&id).unwrap().depth = Some(depth + 1);
            self.add_edge(v, id, child.edge_mark)?;
        }
        self.vertices.get_mut(&v).unwrap().expanded = true;
        Ok(())
    }

    /// Distances from `from` over the materialized part of the graph.
    pub fn distances(&self, from: VertexId) -> BTreeMap<VertexId, u32> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(from, 0u32);
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &u in self.neighbors(v) {
                dist.entry(u).or_insert_with(|| {
                    queue.push_back(u);
                    d + 1
                });
            }
        }
        dist
    }

    /// B_m(g): the induced rooted subgraph on vertices within distance `m`
    /// of the root. Lazy graphs are expanded to depth `m` first; the
    /// returned graph is finite (non-lazy).
    pub fn truncate_ball(&mut self, m: u32) -> Result<MarkedGraph> {
        let root = self.root.ok_or(IpsError::NoRoot)?;
        if self.expander.is_some() {
            // BFS expansion to depth m
            let mut queue = VecDeque::new();
            let mut seen = BTreeSet::new();
            queue.push_back((root, 0u32));
            seen.insert(root);
            while let Some((v, d)) = queue.pop_front() {
                if d >= m {
                    continue;
                }
                self.ensure_expanded(v)?;
                for &u in self.vertices[&v].neighbors.clone().iter() {
                    if seen.insert(u) {
                        queue.push_back((u, d + 1));
                    }
                }
            }
        }
        let dist = self.distances(root);
        let keep: BTreeSet<VertexId> = dist
            .iter()
            .filter(|&(_, &d)| d <= m)
            .map(|(&v, _)| v)
            .collect();
        let mut ball = self.induced_subgraph(&keep);
        ball.root = Some(root);
        Ok(ball)
    }

    /// Induced subgraph on `keep` (materialized vertices only), preserving
    /// marks, states, noise keys and the root when it lies in `keep`.
    pub fn induced_subgraph(&self, keep: &BTreeSet<VertexId>) -> MarkedGraph {
        let mut g = MarkedGraph::new();
        for &v in keep {
            let data = &self.vertices[&v];
            g.add_vertex_with_key(v, data.state, data.mark.clone(), data.key);
        }
        for &v in keep {
            for &u in self.neighbors(v) {
                if u > v && keep.contains(&u) {
                    let mark = self.edge_mark(v, u).cloned().unwrap_or_default();
                    g.add_edge(v, u, mark).unwrap();
                }
            }
        }
        g.root = self.root.filter(|r| keep.contains(r));
        g
    }

    /// The connected component of `v`, rooted at `v`. Finite graphs only.
    pub fn connected_component(&self, v: VertexId) -> Result<MarkedGraph> {
        if !self.vertices.contains_key(&v) {
            return Err(IpsError::UnknownVertex(v));
        }
        let comp: BTreeSet<VertexId> = self.distances(v).into_keys().collect();
        let mut g = self.induced_subgraph(&comp);
        g.root = Some(v);
        Ok(g)
    }

    /// cl(U) = U together with all neighbors of U.
    pub fn closure(&self, set: &BTreeSet<VertexId>) -> Result<BTreeSet<VertexId>> {
        let mut out = BTreeSet::new();
        for &v in set {
            if !self.vertices.contains_key(&v) {
                return Err(IpsError::UnknownVertex(v));
            }
            out.insert(v);
            out.extend(self.neighbors(v).iter().copied());
        }
        Ok(out)
    }

    /// Validate all structural invariants; used by the JSON loader and by
    /// tests on hand-built graphs.
    pub fn validate(&self) -> Result<()> {
        for (&v, data) in &self.vertices {
            let mut prev = None;
            for &u in &data.neighbors {
                if u == v {
                    return Err(IpsError::InvalidParameter(format!("self-loop at {v}")));
                }
                if prev == Some(u) {
                    return Err(IpsError::InvalidParameter(format!(
                        "duplicate edge {{{v},{u}}}"
                    )));
                }
                if !self.vertices[&u].neighbors.contains(&v) {
                    return Err(IpsError::InvalidParameter(format!(
                        "asymmetric adjacency {v}->{u}"
                    )));
                }
                if self.edge_mark(v, u).is_none() {
                    return Err(IpsError::InvalidParameter(format!(
                        "edge {{{v},{u}}} has no mark entry"
                    )));
                }
                prev = Some(u);
            }
        }
        if let Some(r) = self.root {
            if !self.vertices.contains_key(&r) {
                return Err(IpsError::UnknownVertex(r));
            }
        }
        Ok(())
    }
}

impl Default for MarkedGraph {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> MarkedGraph {
        // a--b--c with ids 0,1,2
        let mut g = MarkedGraph::new();
        for i in 0..3 {
            g.add_vertex(i, 0, VertexMark::Empty);
        }
        g.add_edge(0, 1, vec![]).unwrap();
        g.add_edge(1, 2, vec![]).unwrap();
        g
    }

    #[test]
    fn truncate_ball_single_vertex() {
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 1, VertexMark::Empty);
        g.set_root(Some(0));
        let b = g.truncate_ball(5).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.state(0), 1);
    }

    #[test]
    fn truncate_ball_path() {
        let mut g = path3();
        g.set_root(Some(0));
        let b = g.truncate_ball(1).unwrap();
        assert_eq!(b.vertex_ids().collect::<Vec<_>>(), vec![0, 1]);
        assert!(b.edge_mark(0, 1).is_some());
        assert!(!b.contains(2));
        // original unmodified
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn truncate_ball_requires_root() {
        let mut g = path3();
        assert!(matches!(g.truncate_ball(1), Err(IpsError::NoRoot)));
    }

    #[test]
    fn component_of_disjoint_edges() {
        let mut g = MarkedGraph::new();
        for i in 0..4 {
            g.add_vertex(i, 0, VertexMark::Empty);
        }
        g.add_edge(0, 1, vec![]).unwrap();
        g.add_edge(2, 3, vec![]).unwrap();
        let c = g.connected_component(0).unwrap();
        assert_eq!(c.vertex_ids().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(c.root(), Some(0));
    }

    #[test]
    fn component_of_isolated_vertex() {
        let mut g = path3();
        g.add_vertex(7, 0, VertexMark::Empty);
        let c = g.connected_component(7).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.root(), Some(7));
    }

    #[test]
    fn component_of_triangle_is_whole() {
        let mut g = MarkedGraph::new();
        for i in 0..3 {
            g.add_vertex(i, 0, VertexMark::Empty);
        }
        g.add_edge(0, 1, vec![]).unwrap();
        g.add_edge(1, 2, vec![]).unwrap();
        g.add_edge(0, 2, vec![]).unwrap();
        let c = g.connected_component(1).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.root(), Some(1));
    }

    #[test]
    fn closure_examples() {
        let g = path3();
        let cl = g.closure(&BTreeSet::from([1])).unwrap();
        assert_eq!(cl, BTreeSet::from([0, 1, 2]));
        assert!(g.closure(&BTreeSet::new()).unwrap().is_empty());

        let mut star = MarkedGraph::new();
        for i in 0..5 {
            star.add_vertex(i, 0, VertexMark::Empty);
        }
        for leaf in 1..5 {
            star.add_edge(0, leaf, vec![]).unwrap();
        }
        let cl = star.closure(&BTreeSet::from([1])).unwrap();
        assert_eq!(cl, BTreeSet::from([0, 1]));
    }

    #[test]
    fn closure_unknown_vertex() {
        let g = path3();
        assert!(matches!(
            g.closure(&BTreeSet::from([99])),
            Err(IpsError::UnknownVertex(99))
        ));
    }

    #[test]
    fn duplicate_edges_ignored() {
        let mut g = path3();
        g.add_edge(0, 1, vec![9.0]).unwrap();
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.edge_mark(0, 1), Some(&vec![]));
        g.validate().unwrap();
    }
}
