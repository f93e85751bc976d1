//! Canonical signatures of finite rooted marked graphs: iterative color
//! refinement seeded with (distance-to-root, degree, discretized marks),
//! with exhaustive tie-breaking over refinement-equivalent vertices. Two
//! balls produce equal bytes iff they are isomorphic as rooted marked
//! graphs after mark discretization.

use std::collections::BTreeMap;

use crate::error::{IpsError, Result};
use crate::graph::{MarkedGraph, VertexId, VertexMark};

/// Maps real-valued marks to finite integer tokens by grid rounding.
#[derive(Clone, Debug)]
pub struct MarkDiscretizer {
    pub grid: f64,
    /// Max ball size accepted by `canonical_signature`.
    pub cap: usize,
}

impl Default for MarkDiscretizer {
    fn default() -> Self {
        MarkDiscretizer {
            grid: 1e-6,
            cap: 64,
        }
    }
}

impl MarkDiscretizer {
    fn real(&self, x: f64) -> i64 {
        (x / self.grid).round() as i64
    }

    fn vertex_token(&self, state: i64, mark: &VertexMark) -> Vec<i64> {
        let mut tok = vec![state];
        match mark {
            VertexMark::Empty => tok.push(0),
            VertexMark::Reals(xs) => {
                tok.push(1);
                tok.extend(xs.iter().map(|&x| self.real(x)));
            }
            VertexMark::History(h) => {
                tok.push(2);
                tok.push(h.x0);
                for &(t, j) in &h.jumps {
                    tok.push(self.real(t));
                    tok.push(j);
                }
            }
        }
        tok
    }

    fn edge_token(&self, mark: &[f64]) -> Vec<i64> {
        mark.iter().map(|&x| self.real(x)).collect()
    }
}

/// Canonical byte encoding of the isomorphism class of a finite rooted
/// marked graph (after discretization).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BallSignature {
    pub canonical_bytes: Vec<u8>,
}

struct Canonizer {
    n: usize,
    adj: Vec<Vec<(usize, usize)>>, // neighbor index, edge token id
    init_key: Vec<(u32, usize, usize)>, // (dist to root, degree, vertex token id)
    vertex_tok: Vec<usize>,
    vtok_table: Vec<Vec<i64>>,
    etok_table: Vec<Vec<i64>>,
}

impl Canonizer {
    /// Rank colors by refinement key until the partition stabilizes.
    /// `colors` values are arbitrary integers; output colors are 0..k-1 in
    /// canonical (content-based) order.
    fn refine(&self, colors: &mut Vec<usize>) {
        loop {
            let mut keys: Vec<(usize, Vec<(usize, usize)>)> = Vec::with_capacity(self.n);
            for v in 0..self.n {
                let mut nb: Vec<(usize, usize)> = self.adj[v]
                    .iter()
                    .map(|&(u, etok)| (etok, colors[u]))
                    .collect();
                nb.sort_unstable();
                keys.push((colors[v], nb));
            }
            let mut sorted: Vec<&(usize, Vec<(usize, usize)>)> = keys.iter().collect();
            sorted.sort();
            sorted.dedup();
            let rank: BTreeMap<&(usize, Vec<(usize, usize)>), usize> =
                sorted.iter().enumerate().map(|(i, k)| (*k, i)).collect();
            let new: Vec<usize> = (0..self.n).map(|v| rank[&keys[v]]).collect();
            if new == *colors {
                return;
            }
            *colors = new;
        }
    }

    /// Smallest color class with more than one vertex, if any.
    fn target_cell(&self, colors: &[usize]) -> Option<Vec<usize>> {
        let k = colors.iter().max().map_or(0, |&c| c + 1);
        for c in 0..k {
            let cell: Vec<usize> = (0..self.n).filter(|&v| colors[v] == c).collect();
            if cell.len() > 1 {
                return Some(cell);
            }
        }
        None
    }

    fn search(&self, colors: Vec<usize>) -> Vec<u8> {
        match self.target_cell(&colors) {
            None => self.certificate(&colors),
            Some(cell) => cell
                .into_iter()
                .map(|v| {
                    // individualize v within its cell, then re-refine
                    let mut c: Vec<usize> = colors.iter().map(|&x| 2 * x + 1).collect();
                    c[v] -= 1;
                    self.refine(&mut c);
                    self.search(c)
                })
                .min()
                .unwrap(),
        }
    }

    /// Discrete coloring -> byte certificate. Vertices are emitted in color
    /// order; token tables are sorted by content, so the bytes depend only
    /// on the isomorphism class.
    fn certificate(&self, colors: &[usize]) -> Vec<u8> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&v| colors[v]);
        let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let mut out: Vec<u8> = Vec::new();
        let push_i64 = |out: &mut Vec<u8>, x: i64| out.extend(x.to_le_bytes());
        push_i64(&mut out, self.n as i64);
        push_i64(&mut out, self.vtok_table.len() as i64);
        for tok in &self.vtok_table {
            push_i64(&mut out, tok.len() as i64);
            for &x in tok {
                push_i64(&mut out, x);
            }
        }
        push_i64(&mut out, self.etok_table.len() as i64);
        for tok in &self.etok_table {
            push_i64(&mut out, tok.len() as i64);
            for &x in tok {
                push_i64(&mut out, x);
            }
        }
        for &v in &order {
            push_i64(&mut out, self.vertex_tok[v] as i64);
            push_i64(&mut out, self.init_key[v].0 as i64); // distance to root
        }
        let mut edges: Vec<(usize, usize, usize)> = Vec::new();
        for v in 0..self.n {
            for &(u, etok) in &self.adj[v] {
                if pos[&v] < pos[&u] {
                    edges.push((pos[&v], pos[&u], etok));
                }
            }
        }
        edges.sort_unstable();
        push_i64(&mut out, edges.len() as i64);
        for (a, b, e) in edges {
            push_i64(&mut out, a as i64);
            push_i64(&mut out, b as i64);
            push_i64(&mut out, e as i64);
        }
        out
    }
}

/// Canonical signature of a finite rooted marked ball.
pub fn canonical_signature(ball: &MarkedGraph, disc: &MarkDiscretizer) -> Result<BallSignature> {
    let root = ball.root().ok_or(IpsError::NoRoot)?;
    let n = ball.len();
    if n > disc.cap {
        return Err(IpsError::TooLarge {
            size: n,
            cap: disc.cap,
        });
    }
    let ids: Vec<VertexId> = ball.vertex_ids().collect();
    let index: BTreeMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // token tables sorted by content
    let mut vtoks: Vec<Vec<i64>> = ids
        .iter()
        .map(|&v| disc.vertex_token(ball.state(v), ball.vertex_mark(v)))
        .collect();
    let mut vtok_table = vtoks.clone();
    vtok_table.sort();
    vtok_table.dedup();
    let vertex_tok: Vec<usize> = vtoks
        .drain(..)
        .map(|t| vtok_table.binary_search(&t).unwrap())
        .collect();

    let mut etok_table: Vec<Vec<i64>> = ball
        .edges()
        .map(|(_, _, m)| disc.edge_token(m))
        .collect();
    etok_table.sort();
    etok_table.dedup();

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (u, v, m) in ball.edges() {
        let etok = etok_table.binary_search(&disc.edge_token(m)).unwrap();
        adj[index[&u]].push((index[&v], etok));
        adj[index[&v]].push((index[&u], etok));
    }

    let dist = ball.distances(root);
    let init_key: Vec<(u32, usize, usize)> = ids
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = dist.get(&v).copied().unwrap_or(u32::MAX);
            (d, ball.degree(v), vertex_tok[i])
        })
        .collect();

    let canonizer = Canonizer {
        n,
        adj,
        init_key,
        vertex_tok,
        vtok_table,
        etok_table,
    };
    let mut sorted_keys: Vec<&(u32, usize, usize)> = canonizer.init_key.iter().collect();
    sorted_keys.sort();
    sorted_keys.dedup();
    let rank: BTreeMap<&(u32, usize, usize), usize> = sorted_keys
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, i))
        .collect();
    let mut colors: Vec<usize> = (0..n).map(|v| rank[&canonizer.init_key[v]]).collect();
    canonizer.refine(&mut colors);
    Ok(BallSignature {
        canonical_bytes: canonizer.search(colors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaf_states: &[i64]) -> MarkedGraph {
        let mut g = MarkedGraph::new();
        g.add_vertex(0, 0, VertexMark::Empty);
        for (i, &s) in leaf_states.iter().enumerate() {
            let id = i as VertexId + 1;
            g.add_vertex(id, s, VertexMark::Empty);
            g.add_edge(0, id, vec![]).unwrap();
        }
        g.set_root(Some(0));
        g
    }

    fn sig(g: &MarkedGraph) -> BallSignature {
        canonical_signature(g, &MarkDiscretizer::default()).unwrap()
    }

    #[test]
    fn leaf_permutation_is_isomorphic() {
        assert_eq!(sig(&star(&[0, 1])), sig(&star(&[1, 0])));
    }

    #[test]
    fn leaf_state_multiset_distinguishes() {
        assert_ne!(sig(&star(&[1, 1])), sig(&star(&[0, 1])));
    }

    #[test]
    fn path_root_position_distinguishes() {
        let mut end = MarkedGraph::new();
        let mut center = MarkedGraph::new();
        for g in [&mut end, &mut center] {
            for i in 0..3 {
                g.add_vertex(i, 0, VertexMark::Empty);
            }
            g.add_edge(0, 1, vec![]).unwrap();
            g.add_edge(1, 2, vec![]).unwrap();
        }
        end.set_root(Some(0));
        center.set_root(Some(1));
        assert_ne!(sig(&end), sig(&center));
    }

    #[test]
    fn edge_marks_distinguish_up_to_grid() {
        let mut a = star(&[0, 0]);
        let mut b = star(&[0, 0]);
        *a.edge_marks.get_mut(&(0, 1)).unwrap() = vec![0.25];
        *b.edge_marks.get_mut(&(0, 2)).unwrap() = vec![0.25];
        assert_eq!(sig(&a), sig(&b)); // swapping the marked leaf is an isomorphism
        *b.edge_marks.get_mut(&(0, 1)).unwrap() = vec![0.5];
        assert_ne!(sig(&a), sig(&b));
    }

    #[test]
    fn cap_enforced() {
        let g = star(&[0; 70]);
        assert!(matches!(
            canonical_signature(&g, &MarkDiscretizer::default()),
            Err(IpsError::TooLarge { .. })
        ));
    }

    #[test]
    fn requires_root() {
        let mut g = star(&[0]);
        g.set_root(None);
        assert!(matches!(sig_err(&g), IpsError::NoRoot));
    }

    fn sig_err(g: &MarkedGraph) -> IpsError {
        canonical_signature(g, &MarkDiscretizer::default()).unwrap_err()
    }
}
