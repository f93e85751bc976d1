//! Dissociation percolation: chop time into windows of length Δ and
//! call a vertex active when its driving noise fires at all during the
//! first window (at the vertex's level cap). Inactive vertices are
//! frozen on the window, so information can only cross the active set;
//! a subcritical active cluster at the root certifies that finite
//! simulation windows capture the root's law.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gen::OffspringDistribution;
use crate::graph::{MarkedGraph, VertexId};
use crate::noise::DrivingNoise;
use crate::rates::RateModel;
use crate::seeding::{combine, tagged, Tag};

/// P(at least one event in a window of length `delta` under level cap
/// `cap`) = 1 - exp(-delta * sigma_total * cap).
pub fn activation_probability(delta: f64, sigma_total: f64, cap: f64) -> f64 {
    -(-delta * sigma_total * cap).exp_m1()
}

/// Active vertices of a finite graph: some event in (0, delta].
pub fn active_vertices(
    graph: &MarkedGraph,
    noise: &DrivingNoise,
    model: &dyn RateModel,
    horizon: f64,
    delta: f64,
) -> Result<BTreeSet<VertexId>> {
    let mut active = BTreeSet::new();
    for v in graph.vertex_ids() {
        let cap = model.bound(graph.closure_size(v), horizon);
        if !noise
            .events(graph.noise_key(v), cap, (0.0, delta))?
            .is_empty()
        {
            active.insert(v);
        }
    }
    Ok(active)
}

/// The root's cluster in the subgraph induced by the active vertices
/// (the root itself always counts). Expands lazy graphs on demand;
/// `budget` bounds the cluster size, with `exhausted = true` when hit.
pub fn root_active_component(
    graph: &mut MarkedGraph,
    noise: &DrivingNoise,
    model: &dyn RateModel,
    horizon: f64,
    delta: f64,
    budget: usize,
) -> Result<(BTreeSet<VertexId>, bool)> {
    let root = graph.root().ok_or(crate::error::IpsError::NoRoot)?;
    let mut component = BTreeSet::from([root]);
    let mut frontier = vec![root];
    while let Some(v) = frontier.pop() {
        if component.len() >= budget {
            return Ok((component, true));
        }
        graph.ensure_expanded(v)?;
        let neighbors: Vec<VertexId> = graph.neighbors(v).to_vec();
        for u in neighbors {
            if component.contains(&u) {
                continue;
            }
            graph.ensure_expanded(u)?;
            let cap = model.bound(graph.closure_size(u), horizon);
            let is_active = !noise
                .events(graph.noise_key(u), cap, (0.0, delta))?
                .is_empty();
            if is_active {
                component.insert(u);
                frontier.push(u);
            }
        }
    }
    Ok((component, false))
}

/// Monte-Carlo estimate of E[Z] with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct HalfPercEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl HalfPercEstimate {
    /// Conservative certificate: 99% upper confidence bound below 1.
    pub fn certified_subcritical(&self) -> bool {
        self.mean + 2.326 * self.stderr < 1.0
    }
}

/// One-generation branching functional on the unimodular tree:
///   Z = sum over children u of the root of 1{u active} * #children(u),
/// where a child with k children has closure size k + 2 and is active
/// when its noise fires in (0, delta] under the corresponding cap.
/// E[Z] < 1 makes the active cluster at the root a subcritical branching
/// process, hence a.s. finite.
pub fn halfperc_grandchild_mean(
    seed: u64,
    rho: &OffspringDistribution,
    model: &dyn RateModel,
    horizon: f64,
    delta: f64,
    replicas: usize,
) -> Result<HalfPercEstimate> {
    let noise = DrivingNoise::new(tagged(seed, Tag::Replica), horizon, model.jump_spec().clone());
    let rho_hat = rho.size_biased_shift()?;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for rep in 0..replicas {
        let mut rng = ChaCha8Rng::seed_from_u64(combine(tagged(seed, Tag::Replica), rep as u64));
        let n = rho.sample(&mut rng);
        let mut z = 0.0;
        for child in 0..n {
            let k = rho_hat.sample(&mut rng);
            let cap = model.bound(k + 2, horizon);
            let key = combine(rep as u64, child as u64 + 1);
            let active = !noise.events(key, cap, (0.0, delta))?.is_empty();
            if active {
                z += k as f64;
            }
        }
        sum += z;
        sumsq += z * z;
    }
    let n = replicas as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(HalfPercEstimate {
        mean,
        stderr: (var / n).sqrt(),
        replicas,
    })
}

/// Closed form of E[Z] for cross-checking the Monte Carlo:
///   E[Z] = mean(rho) * E_{k~rho_hat}[ k * p(delta, C_{k+2,T}) ].
pub fn halfperc_expected(
    rho: &OffspringDistribution,
    model: &dyn RateModel,
    horizon: f64,
    delta: f64,
) -> Result<f64> {
    let sigma = model.jump_spec().total();
    let rho_hat = rho.size_biased_shift()?;
    let inner: f64 = rho_hat
        .pmf()
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            p * k as f64 * activation_probability(delta, sigma, model.bound(k + 2, horizon))
        })
        .sum();
    Ok(rho.mean() * inner)
}

#[derive(Clone, Copy, Debug)]
pub struct ScanPoint {
    pub delta: f64,
    pub estimate: HalfPercEstimate,
    pub certified: bool,
}

/// Evaluate the half-percolation mean across window lengths.
pub fn dissociation_scan(
    seed: u64,
    rho: &OffspringDistribution,
    model: &dyn RateModel,
    horizon: f64,
    deltas: &[f64],
    replicas: usize,
) -> Result<Vec<ScanPoint>> {
    deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let estimate = halfperc_grandchild_mean(
                combine(seed, i as u64),
                rho,
                model,
                horizon,
                delta,
                replicas,
            )?;
            Ok(ScanPoint {
                delta,
                estimate,
                certified: estimate.certified_subcritical(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexMark;
    use crate::rates::ContactModel;

    #[test]
    fn activation_probability_formula() {
        assert_eq!(activation_probability(0.0, 2.0, 3.0), 0.0);
        let p = activation_probability(0.125, 1.0, 4.0);
        assert!((p - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!(activation_probability(1e6, 1.0, 1.0) > 0.999999);
    }

    #[test]
    fn activation_frequency_matches_noise() {
        // Empirical activation over many keys matches the closed form.
        let model = ContactModel::new(0.5);
        let horizon = 1.0;
        let delta = 0.3;
        let cap = model.bound(3, horizon);
        let noise = DrivingNoise::new(99, horizon, model.jump_spec().clone());
        let reps = 20_000;
        let mut hits = 0usize;
        for k in 0..reps {
            if !noise.events(k as u64, cap, (0.0, delta)).unwrap().is_empty() {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / reps as f64;
        let p = activation_probability(delta, model.jump_spec().total(), cap);
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((p_hat - p).abs() < 4.0 * se, "{p_hat} vs {p}");
    }

    #[test]
    fn path_active_set_law() {
        // 3-path: ends have closure 2, middle 3. Each vertex activates
        // independently; check per-vertex frequencies and independence
        // via the all-active pattern.
        let model = ContactModel::new(1.0);
        let horizon = 1.0;
        let delta = 0.2;
        let reps = 5_000;
        let mut counts = [0usize; 3];
        let mut all = 0usize;
        for seed in 0..reps {
            let mut g = MarkedGraph::new();
            for v in 0..3 {
                g.add_vertex(v, 0, VertexMark::Empty);
            }
            g.add_edge(0, 1, vec![]).unwrap();
            g.add_edge(1, 2, vec![]).unwrap();
            let noise = DrivingNoise::new(seed as u64, horizon, model.jump_spec().clone());
            let active = active_vertices(&g, &noise, &model, horizon, delta).unwrap();
            for v in 0..3u64 {
                if active.contains(&v) {
                    counts[v as usize] += 1;
                }
            }
            if active.len() == 3 {
                all += 1;
            }
        }
        let sigma = model.jump_spec().total();
        let p_end = activation_probability(delta, sigma, model.bound(2, horizon));
        let p_mid = activation_probability(delta, sigma, model.bound(3, horizon));
        let n = reps as f64;
        for (v, &c) in counts.iter().enumerate() {
            let p = if v == 1 { p_mid } else { p_end };
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((c as f64 / n - p).abs() < 4.5 * se, "vertex {v}");
        }
        let p_all = p_end * p_end * p_mid;
        let se = (p_all * (1.0 - p_all) / n).sqrt();
        assert!((all as f64 / n - p_all).abs() < 4.5 * se);
    }

    #[test]
    fn root_component_respects_activity() {
        // Star where no leaf can be active (delta tiny) => component is
        // just the root.
        let model = ContactModel::new(1.0);
        let horizon = 1.0;
        let mut g = MarkedGraph::new();
        for v in 0..5 {
            g.add_vertex(v, 0, VertexMark::Empty);
            if v > 0 {
                g.add_edge(0, v, vec![]).unwrap();
            }
        }
        g.set_root(Some(0));
        let noise = DrivingNoise::new(1, horizon, model.jump_spec().clone());
        let (comp, exhausted) =
            root_active_component(&mut g, &noise, &model, horizon, 1e-12, 100).unwrap();
        assert_eq!(comp, BTreeSet::from([0]));
        assert!(!exhausted);
        // Huge delta: everything is active.
        let noise = DrivingNoise::new(1, horizon, model.jump_spec().clone());
        let (comp, _) =
            root_active_component(&mut g, &noise, &model, horizon, horizon, 100).unwrap();
        assert_eq!(comp.len(), 5);
    }

    #[test]
    fn halfperc_mc_matches_closed_form() {
        let rho = OffspringDistribution::poisson(2.0).unwrap();
        let model = ContactModel::new(0.5);
        let horizon = 1.0;
        let delta = 0.05;
        let est = halfperc_grandchild_mean(7, &rho, &model, horizon, delta, 40_000).unwrap();
        let exact = halfperc_expected(&rho, &model, horizon, delta).unwrap();
        assert!(
            (est.mean - exact).abs() < 4.0 * est.stderr,
            "{} vs {exact} (se {})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn scan_is_monotone_and_certifies_small_delta() {
        let rho = OffspringDistribution::poisson(2.0).unwrap();
        let model = ContactModel::new(0.5);
        let horizon = 1.0;
        let points = dissociation_scan(
            3,
            &rho,
            &model,
            horizon,
            &[0.01, 0.05, 0.2, 1.0],
            20_000,
        )
        .unwrap();
        assert!(points[0].certified);
        // Closed form is increasing in delta; MC means should follow
        // within noise tolerance.
        for w in points.windows(2) {
            assert!(
                w[1].estimate.mean + 4.0 * w[1].estimate.stderr
                    > w[0].estimate.mean - 4.0 * w[0].estimate.stderr
            );
        }
    }
}
