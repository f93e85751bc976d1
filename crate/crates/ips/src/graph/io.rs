//! Graph file format (JSON):
//! `{"vertices":[{"id":0,"state":1,"mark":[0.5]}],
//!   "edges":[{"u":0,"v":1,"mark":[]}], "root":0}`

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{MarkedGraph, VertexId, VertexMark};

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: VertexId,
    state: i64,
    #[serde(default)]
    mark: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    u: VertexId,
    v: VertexId,
    #[serde(default)]
    mark: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
    root: Option<VertexId>,
}

impl MarkedGraph {
    pub fn from_json(json: &str) -> Result<MarkedGraph> {
        let file: GraphFile = serde_json::from_str(json)?;
        let mut g = MarkedGraph::new();
        for v in file.vertices {
            let mark = if v.mark.is_empty() {
                VertexMark::Empty
            } else {
                VertexMark::Reals(v.mark)
            };
            g.add_vertex(v.id, v.state, mark);
        }
        for e in file.edges {
            g.add_edge(e.u, e.v, e.mark)?;
        }
        g.set_root(file.root);
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vertices: self
                .vertex_ids()
                .map(|id| VertexRecord {
                    id,
                    state: self.state(id),
                    mark: match self.vertex_mark(id) {
                        VertexMark::Reals(xs) => xs.clone(),
                        _ => vec![],
                    },
                })
                .collect(),
            edges: self
                .edges()
                .map(|(u, v, m)| EdgeRecord {
                    u,
                    v,
                    mark: m.clone(),
                })
                .collect(),
            root: self.root(),
        };
        serde_json::to_string(&file).unwrap()
    }
}
