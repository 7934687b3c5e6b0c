//! Labeled graph states with photon and emitter vertices, and the standard
//! graph rewrite rules for CZ, local complementation and Pauli measurements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable vertex label. Ids are never reused within one compilation.
pub type VertexId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    Photon,
    Emitter,
}

impl VertexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexKind::Photon => "photon",
            VertexKind::Emitter => "emitter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

/// Undirected simple graph whose vertices carry a [`VertexKind`].
///
/// Adjacency is stored as sorted sets so neighborhood queries cost O(deg)
/// and iteration order is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphState {
    kinds: BTreeMap<VertexId, VertexKind>,
    adj: BTreeMap<VertexId, BTreeSet<VertexId>>,
}

impl GraphState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with photon vertices `0..n` and the given edges.
    pub fn from_edges(n: u32, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        let mut g = Self::new();
        for v in 0..n {
            g.add_vertex(v, VertexKind::Photon)?;
        }
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: VertexId, kind: VertexKind) -> Result<()> {
        if self.kinds.contains_key(&v) {
            return Err(Error::DuplicateVertex(v));
        }
        self.kinds.insert(v, kind);
        self.adj.insert(v, BTreeSet::new());
        Ok(())
    }

    /// Adds edge `{u, v}`; rejects self-loops and existing edges.
    pub fn add_edge(&mut self, u: VertexId, v: VertexId) -> Result<()> {
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        self.check(u)?;
        self.check(v)?;
        if self.adj[&u].contains(&v) {
            return Err(Error::DuplicateEdge(u.min(v), u.max(v)));
        }
        self.adj.get_mut(&u).unwrap().insert(v);
        self.adj.get_mut(&v).unwrap().insert(u);
        Ok(())
    }

    /// Removes `v` and all its incident edges.
    pub fn remove_vertex(&mut self, v: VertexId) -> Result<()> {
        let nbrs = self.adj.remove(&v).ok_or(Error::VertexNotFound(v))?;
        self.kinds.remove(&v);
        for u in nbrs {
            self.adj.get_mut(&u).unwrap().remove(&v);
        }
        Ok(())
    }

    fn check(&self, v: VertexId) -> Result<()> {
        if self.kinds.contains_key(&v) {
            Ok(())
        } else {
            Err(Error::VertexNotFound(v))
        }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.kinds.contains_key(&v)
    }

    pub fn kind(&self, v: VertexId) -> Result<VertexKind> {
        self.kinds.get(&v).copied().ok_or(Error::VertexNotFound(v))
    }

    pub fn is_photon(&self, v: VertexId) -> bool {
        self.kinds.get(&v) == Some(&VertexKind::Photon)
    }

    pub fn is_emitter(&self, v: VertexId) -> bool {
        self.kinds.get(&v) == Some(&VertexKind::Emitter)
    }

    pub fn neighbors(&self, v: VertexId) -> Result<&BTreeSet<VertexId>> {
        self.adj.get(&v).ok_or(Error::VertexNotFound(v))
    }

    pub fn degree(&self, v: VertexId) -> Result<usize> {
        Ok(self.neighbors(v)?.len())
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.adj.get(&u).is_some_and(|n| n.contains(&v))
    }

    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.values().map(|n| n.len()).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// All vertex ids in ascending order.
    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.kinds.keys().copied()
    }

    pub fn vertices_with_kind(&self) -> impl Iterator<Item = (VertexId, VertexKind)> + '_ {
        self.kinds.iter().map(|(&v, &k)| (v, k))
    }

    pub fn photons(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.kinds.iter().filter(|(_, &k)| k == VertexKind::Photon).map(|(&v, _)| v)
    }

    pub fn emitters(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.kinds.iter().filter(|(_, &k)| k == VertexKind::Emitter).map(|(&v, _)| v)
    }

    pub fn num_photons(&self) -> usize {
        self.photons().count()
    }

    /// Edges as ordered pairs `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&u, n)| n.range(u + 1..).map(move |&v| (u, v)))
    }

    /// In-place CZ: toggles edge `{u, v}`.
    pub fn toggle_edge(&mut self, u: VertexId, v: VertexId) -> Result<()> {
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        self.check(u)?;
        self.check(v)?;
        if self.adj[&u].contains(&v) {
            self.adj.get_mut(&u).unwrap().remove(&v);
            self.adj.get_mut(&v).unwrap().remove(&u);
        } else {
            self.adj.get_mut(&u).unwrap().insert(v);
            self.adj.get_mut(&v).unwrap().insert(u);
        }
        Ok(())
    }

    /// Applies CZ between `u` and `v`, returning the new graph.
    pub fn apply_cz(&self, u: VertexId, v: VertexId) -> Result<GraphState> {
        let mut g = self.clone();
        g.toggle_edge(u, v)?;
        Ok(g)
    }

    /// In-place local complementation at `v`.
    pub fn local_complement_mut(&mut self, v: VertexId) -> Result<()> {
        let nbrs: Vec<VertexId> = self.neighbors(v)?.iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                self.toggle_edge(a, b)?;
            }
        }
        Ok(())
    }

    /// Complements the subgraph induced by the neighborhood of `v`.
    pub fn local_complement(&self, v: VertexId) -> Result<GraphState> {
        let mut g = self.clone();
        g.local_complement_mut(v)?;
        Ok(g)
    }

    /// In-place Pauli measurement of `v` (+1 branch), see [`GraphState::measure_vertex`].
    pub fn measure_vertex_mut(&mut self, v: VertexId, basis: Basis) -> Result<()> {
        self.check(v)?;
        match basis {
            Basis::Z => {}
            Basis::Y => self.local_complement_mut(v)?,
            Basis::X => {
                if let Some(&b0) = self.adj[&v].iter().next() {
                    self.local_complement_mut(b0)?;
                    self.local_complement_mut(v)?;
                    self.remove_vertex(v)?;
                    self.local_complement_mut(b0)?;
                    return Ok(());
                }
            }
        }
        self.remove_vertex(v)
    }

    /// Graph rule for measuring `v` in `basis`. Z deletes `v`; Y complements
    /// the neighborhood of `v` and deletes it; X complements at the lowest-id
    /// neighbor `b0`, applies the Y rule at `v` and complements at `b0` again.
    /// The result equals the post-measurement state up to local Cliffords on
    /// the former neighborhood of `v`.
    pub fn measure_vertex(&self, v: VertexId, basis: Basis) -> Result<GraphState> {
        let mut g = self.clone();
        g.measure_vertex_mut(v, basis)?;
        Ok(g)
    }

    /// Induced subgraph on the vertices accepted by `keep`.
    pub fn induced(&self, keep: impl Fn(VertexId) -> bool) -> GraphState {
        let mut g = GraphState::new();
        for (v, k) in self.vertices_with_kind() {
            if keep(v) {
                g.add_vertex(v, k).unwrap();
            }
        }
        for (u, v) in self.edges() {
            if keep(u) && keep(v) {
                g.add_edge(u, v).unwrap();
            }
        }
        g
    }

    /// Serializable description with dense ids `0..num_vertices`.
    /// Fails if the ids are not dense.
    pub fn to_document(&self) -> Result<GraphDocument> {
        for (i, v) in self.vertices().enumerate() {
            if v as usize != i {
                return Err(Error::Parse(format!("vertex ids are not dense at {v}")));
            }
        }
        Ok(GraphDocument {
            num_vertices: self.num_vertices() as u32,
            kinds: self
                .kinds
                .values()
                .map(|k| match k {
                    VertexKind::Photon => "p".to_string(),
                    VertexKind::Emitter => "e".to_string(),
                })
                .collect(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
        })
    }

    pub fn from_document(doc: &GraphDocument) -> Result<GraphState> {
        if doc.kinds.len() != doc.num_vertices as usize {
            return Err(Error::Parse(format!(
                "kinds has {} entries, expected {}",
                doc.kinds.len(),
                doc.num_vertices
            )));
        }
        let mut g = GraphState::new();
        for (i, k) in doc.kinds.iter().enumerate() {
            let kind = match k.as_str() {
                "p" => VertexKind::Photon,
                "e" => VertexKind::Emitter,
                other => return Err(Error::Parse(format!("unknown vertex kind '{other}'"))),
            };
            g.add_vertex(i as VertexId, kind)?;
        }
        for &[u, v] in &doc.edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Parses a graph document, as JSON when the text starts with `{` and as
    /// TOML otherwise.
    pub fn parse(text: &str) -> Result<GraphState> {
        let doc: GraphDocument = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        GraphState::from_document(&doc)
    }
}

impl fmt::Display for GraphState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph({} vertices; edges:", self.num_vertices())?;
        for (u, v) in self.edges() {
            write!(f, " {u}-{v}")?;
        }
        write!(f, ")")
    }
}

/// On-disk graph format.
///
/// ```toml
/// num_vertices = 3
/// kinds = ["p", "p", "p"]
/// edges = [[0, 1], [1, 2]]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub num_vertices: u32,
    pub kinds: Vec<String>,
    pub edges: Vec<[VertexId; 2]>,
}
