//! Graph generators: (unimodular) Galton-Watson trees with lazy
//! expansion, classic finite random-graph models, lattice boxes, and the
//! superexponential tree used by the two-solutions construction.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IpsError, Result};
use crate::graph::{ChildSpec, Expand, MarkedGraph, VertexId, VertexMark};
use crate::seeding::{combine, mix, tagged, Tag};

/// Offspring distribution with finite support. Unbounded laws are used
/// through a quantile truncation that moves at most 1e-12 of mass.
#[derive(Clone, Debug)]
pub struct OffspringDistribution {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringDistribution {
    pub fn new(pmf: Vec<f64>) -> Result<OffspringDistribution> {
        if pmf.is_empty() || pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(IpsError::InvalidParameter(
                "offspring pmf entries must lie in [0,1]".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(IpsError::InvalidParameter(format!(
                "offspring pmf sums to {total}, not 1"
            )));
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(OffspringDistribution { pmf, cdf })
    }

    /// Poisson(c) truncated at the 1 - 1e-12 quantile and renormalized.
    pub fn poisson(c: f64) -> Result<OffspringDistribution> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(IpsError::InvalidParameter(
                "poisson mean must be positive and finite".into(),
            ));
        }
        let mut pmf = Vec::new();
        let mut p = (-c).exp();
        let mut acc = p;
        let mut k = 0usize;
        pmf.push(p);
        while 1.0 - acc > 1e-12 && k < 10_000 {
            k += 1;
            p *= c / k as f64;
            acc += p;
            pmf.push(p);
        }
        let total: f64 = pmf.iter().sum();
        for p in &mut pmf {
            *p /= total;
        }
        OffspringDistribution::new(pmf)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .sum()
    }

    pub fn max_offspring(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.pmf.len() - 1)
    }

    /// Size-biased shift ρ̂_k = (k+1) ρ_{k+1} / mean(ρ): the offspring law
    /// of every non-root vertex of the unimodular tree.
    pub fn size_biased_shift(&self) -> Result<OffspringDistribution> {
        let mean = self.mean();
        if mean <= 0.0 {
            return Err(IpsError::ZeroMean);
        }
        let pmf: Vec<f64> = (1..self.pmf.len())
            .map(|k| k as f64 * self.pmf[k] / mean)
            .collect();
        if pmf.is_empty() {
            return Err(IpsError::ZeroMean);
        }
        OffspringDistribution::new(pmf)
    }
}

/// Initial condition for generated graphs.
#[derive(Clone, Copy, Debug)]
pub enum InitCondition {
    Constant(i64),
    /// State 1 with probability p, independently per vertex, else 0.
    Bernoulli(f64),
}

impl InitCondition {
    /// Deterministic function of (seed, vertex key).
    fn state(&self, seed: u64, key: u64) -> i64 {
        match *self {
            InitCondition::Constant(x) => x,
            InitCondition::Bernoulli(p) => {
                let sub = combine(tagged(seed, Tag::InitState), key);
                let u = (mix(sub) >> 11) as f64 / (1u64 << 53) as f64;
                i64::from(u < p)
            }
        }
    }
}

struct GwExpand {
    seed: u64,
    root_law: OffspringDistribution,
    law: OffspringDistribution,
    init: InitCondition,
}

impl Expand for GwExpand {
    fn children(&self, parent_key: u64, depth: u32) -> Vec<ChildSpec> {
        let law = if depth == 0 { &self.root_law } else { &self.law };
        let sub = combine(tagged(self.seed, Tag::Offspring), parent_key);
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        let n = law.sample(&mut rng);
        (0..n)
            .map(|i| {
                let key = combine(sub, i as u64 + 1);
                ChildSpec {
                    key,
                    state: self.init.state(self.seed, key),
                    mark: VertexMark::Empty,
                    edge_mark: vec![],
                }
            })
            .collect()
    }
}

/// Lazy Galton-Watson tree: every vertex draws offspring from `law`.
pub fn gw_tree(
    seed: u64,
    law: OffspringDistribution,
    init: InitCondition,
    budget: usize,
) -> MarkedGraph {
    let root_key = tagged(seed, Tag::RootDraw);
    MarkedGraph::new_lazy(
        root_key,
        root_key,
        init.state(seed, root_key),
        VertexMark::Empty,
        Box::new(GwExpand {
            seed,
            root_law: law.clone(),
            law,
            init,
        }),
        budget,
    )
}

/// Lazy unimodular Galton-Watson tree: the root draws from ρ, every
/// other vertex from the size-biased shift ρ̂.
pub fn ugw_tree(
    seed: u64,
    law: OffspringDistribution,
    init: InitCondition,
    budget: usize,
) -> Result<MarkedGraph> {
    let shifted = law.size_biased_shift()?;
    let root_key = tagged(seed, Tag::RootDraw);
    Ok(MarkedGraph::new_lazy(
        root_key,
        root_key,
        init.state(seed, root_key),
        VertexMark::Empty,
        Box::new(GwExpand {
            seed,
            root_law: law,
            law: shifted,
            init,
        }),
        budget,
    ))
}

fn seeded_rng(seed: u64, tag: Tag) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tagged(seed, tag))
}

fn finish(mut g: MarkedGraph, seed: u64, init: InitCondition, root: Option<VertexId>) -> MarkedGraph {
    let ids: Vec<VertexId> = g.vertex_ids().collect();
    for v in ids {
        g.set_state(v, init.state(seed, v));
    }
    g.set_root(root);
    g
}

/// G(n, p) with vertices 0..n, rooted at 0.
pub fn erdos_renyi(seed: u64, n: usize, p: f64, init: InitCondition) -> Result<MarkedGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(IpsError::InvalidParameter("p must lie in [0,1]".into()));
    }
    let mut g = MarkedGraph::new();
    for v in 0..n as VertexId {
        g.add_vertex(v, 0, VertexMark::Empty);
    }
    // Geometric edge skipping over the lexicographic pair order: O(n + m)
    // instead of O(n^2) coin flips.
    if p > 0.0 {
        let mut rng = seeded_rng(seed, Tag::EdgeCoin);
        let lq = (1.0 - p).ln();
        let mut v: i64 = 1;
        let mut w: i64 = -1;
        while (v as usize) < n {
            let r: f64 = rng.gen();
            let skip = if lq == f64::NEG_INFINITY {
                0
            } else {
                ((1.0 - r).ln() / lq).floor() as i64
            };
            w += 1 + skip;
            while w >= v && (v as usize) < n {
                w -= v;
                v += 1;
            }
            if (v as usize) < n {
                g.add_edge(w as VertexId, v as VertexId, vec![])?;
            }
        }
    }
    Ok(finish(g, seed, init, (n > 0).then_some(0)))
}

/// Configuration model with erasure: a uniform pairing of half-edges,
/// dropping self-loops and collapsing multi-edges.
pub fn configuration_model(
    seed: u64,
    degrees: &[usize],
    init: InitCondition,
) -> Result<MarkedGraph> {
    if degrees.iter().sum::<usize>() % 2 != 0 {
        return Err(IpsError::OddDegreeSum);
    }
    let mut g = MarkedGraph::new();
    let mut stubs: Vec<VertexId> = Vec::new();
    for (v, &d) in degrees.iter().enumerate() {
        g.add_vertex(v as VertexId, 0, VertexMark::Empty);
        stubs.extend(std::iter::repeat(v as VertexId).take(d));
    }
    let mut rng = seeded_rng(seed, Tag::Pairing);
    // Fisher-Yates pairing: consume stubs two at a time.
    let m = stubs.len();
    for i in (1..m).rev() {
        let j = Uniform::new(0, i + 1).sample(&mut rng);
        stubs.swap(i, j);
    }
    for pair in stubs.chunks(2) {
        if pair[0] != pair[1] {
            g.add_edge(pair[0], pair[1], vec![])?;
        }
    }
    Ok(finish(g, seed, init, (!degrees.is_empty()).then_some(0)))
}

/// Random d-regular simple graph by rejection: re-pair the half-edges
/// until the result has no self-loops or multi-edges.
pub fn regular_graph(seed: u64, n: usize, d: usize, init: InitCondition) -> Result<MarkedGraph> {
    if n * d % 2 != 0 {
        return Err(IpsError::OddDegreeSum);
    }
    if d >= n && n > 1 {
        return Err(IpsError::InvalidParameter(
            "regular graph needs d < n".into(),
        ));
    }
    let mut rng = seeded_rng(seed, Tag::Pairing);
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<VertexId> = (0..n as VertexId)
            .flat_map(|v| std::iter::repeat(v).take(d))
            .collect();
        let m = stubs.len();
        for i in (1..m).rev() {
            let j = Uniform::new(0, i + 1).sample(&mut rng);
            stubs.swap(i, j);
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut g = MarkedGraph::new();
        for v in 0..n as VertexId {
            g.add_vertex(v, 0, VertexMark::Empty);
        }
        for pair in stubs.chunks(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'attempt;
            }
            g.add_edge(u, v, vec![])?;
        }
        return Ok(finish(g, seed, init, (n > 0).then_some(0)));
    }
    Err(IpsError::Exhausted)
}

/// Axis-aligned box with nearest-neighbor edges (no wrap-around), rooted
/// at the all-zero corner. Vertex id = row-major index.
pub fn grid(seed: u64, dims: &[usize], init: InitCondition) -> Result<MarkedGraph> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(IpsError::InvalidParameter(
            "grid dims must be nonempty and positive".into(),
        ));
    }
    let n: usize = dims.iter().product();
    let mut g = MarkedGraph::new();
    for v in 0..n as VertexId {
        g.add_vertex(v, 0, VertexMark::Empty);
    }
    for idx in 0..n {
        let mut rem = idx;
        let mut stride = 1usize;
        for &d in dims.iter().rev() {
            let coord = rem % d;
            rem /= d;
            if coord + 1 < d {
                g.add_edge(idx as VertexId, (idx + stride) as VertexId, vec![])?;
            }
            stride *= d;
        }
    }
    Ok(finish(g, seed, init, Some(0)))
}

struct CounterexampleExpand {
    depth_cap: u32,
}

impl Expand for CounterexampleExpand {
    fn children(&self, parent_key: u64, depth: u32) -> Vec<ChildSpec> {
        if depth >= self.depth_cap {
            return vec![];
        }
        let n = if depth == 0 { 1 } else { 4usize.pow(depth) };
        (0..n)
            .map(|i| ChildSpec {
                key: combine(parent_key, i as u64 + 1),
                state: 0,
                mark: VertexMark::Empty,
                edge_mark: vec![],
            })
            .collect()
    }
}

/// Deterministic superexponential tree: the root has one child and every
/// generation-k vertex has 4^k children, down to `depth` generations.
/// All states start at 0.
pub fn counterexample_tree(depth: u32, budget: usize) -> MarkedGraph {
    MarkedGraph::new_lazy(
        1,
        1,
        0,
        VertexMark::Empty,
        Box::new(CounterexampleExpand { depth_cap: depth }),
        budget,
    )
}
