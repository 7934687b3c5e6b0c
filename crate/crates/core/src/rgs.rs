//! Tree graph states, repeater graph states, and tree-code logical
//! measurement probabilities under per-qubit loss.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::InitialConditions;
use crate::error::{Error, Result};
use crate::graphstate::{Basis, GraphState, VertexId, VertexKind};
use crate::tableau::{graph_to_tableau, local_clifford_equivalent, StabilizerTableau};

/// Per-level child counts `[b_0, ..., b_d]` of a tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BranchingVector(Vec<usize>);

impl BranchingVector {
    pub fn new(b: Vec<usize>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::InvalidParameter("branching vector is empty".into()));
        }
        if b.contains(&0) {
            return Err(Error::InvalidParameter("branching entries must be at least 1".into()));
        }
        Ok(Self(b))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of qubits in the tree, root included.
    pub fn tree_size(&self) -> usize {
        let mut level = 1;
        let mut total = 1;
        for &b in &self.0 {
            level *= b;
            total += level;
        }
        total
    }

    /// Parses `"7,3"` or `"[7,3]"`.
    pub fn parse(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('[').trim_end_matches(']');
        let b = body
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad branching entry {x:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(b)
    }
}

impl TryFrom<Vec<usize>> for BranchingVector {
    type Error = Error;
    fn try_from(b: Vec<usize>) -> Result<Self> {
        Self::new(b)
    }
}

impl From<BranchingVector> for Vec<usize> {
    fn from(b: BranchingVector) -> Self {
        b.0
    }
}

impl fmt::Display for BranchingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Tree levels in breadth-first order, with ids starting at `first`.
fn tree_levels(b: &BranchingVector, first: VertexId) -> (Vec<Vec<VertexId>>, Vec<(VertexId, VertexId)>) {
    let mut next = first + 1;
    let mut levels = vec![vec![first]];
    let mut edges = Vec::new();
    for &bk in b.as_slice() {
        let mut level = Vec::new();
        for &parent in levels.last().unwrap() {
            for _ in 0..bk {
                edges.push((parent, next));
                level.push(next);
                next += 1;
            }
        }
        levels.push(level);
    }
    (levels, edges)
}

/// Rooted tree graph state; vertex 0 is the root and ids follow
/// breadth-first order.
pub fn build_tree(b: &BranchingVector) -> GraphState {
    let (_, edges) = tree_levels(b, 0);
    GraphState::from_edges(b.tree_size() as u32, &edges).expect("tree edges are valid")
}

/// Tree code with per-node loss probabilities. Node 0 is the root; nodes are
/// in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCode {
    children: Vec<Vec<usize>>,
    level: Vec<usize>,
    loss: Vec<f64>,
}

impl TreeCode {
    pub fn new(b: &BranchingVector, loss: Vec<f64>) -> Result<Self> {
        let n = b.tree_size();
        if loss.len() != n {
            return Err(Error::InvalidParameter(format!("expected {n} loss values, got {}", loss.len())));
        }
        if let Some(l) = loss.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidParameter(format!("loss probability {l} outside [0, 1]")));
        }
        let (levels, edges) = tree_levels(b, 0);
        let mut children = vec![Vec::new(); n];
        for (p, c) in edges {
            children[p as usize].push(c as usize);
        }
        let mut level = vec![0; n];
        for (k, nodes) in levels.iter().enumerate() {
            for &v in nodes {
                level[v as usize] = k;
            }
        }
        Ok(Self { children, level, loss })
    }

    pub fn uniform(b: &BranchingVector, l: f64) -> Result<Self> {
        Self::new(b, vec![l; b.tree_size()])
    }

    /// Loss probability of each level, root level first.
    pub fn by_level(b: &BranchingVector, per_level: &[f64]) -> Result<Self> {
        if per_level.len() != b.as_slice().len() + 1 {
            return Err(Error::InvalidParameter("one loss value per level is required".into()));
        }
        let (levels, _) = tree_levels(b, 0);
        let mut loss = vec![0.0; b.tree_size()];
        for (k, nodes) in levels.iter().enumerate() {
            for &v in nodes {
                loss[v as usize] = per_level[k];
            }
        }
        Self::new(b, loss)
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn level(&self, i: usize) -> usize {
        self.level[i]
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    pub fn level1(&self) -> &[usize] {
        &self.children[0]
    }
}

/// Probabilities `(P_X, P_Z)` of measuring the logical X and Z of a tree
/// code, using direct measurements where the qubit arrived and indirect Z
/// measurements through the subtree where it was lost.
pub fn logical_meas_probs(t: &TreeCode) -> (f64, f64) {
    let n = t.len();
    let mut xi = vec![0.0; n];
    let mut pz = vec![0.0; n];
    // Breadth-first order puts every child after its parent.
    for i in (0..n).rev() {
        if !t.children[i].is_empty() {
            let fail: f64 = t.children[i]
                .iter()
                .map(|&j| {
                    let below: f64 = t.children[j].iter().map(|&k| pz[k]).product();
                    1.0 - (1.0 - t.loss[j]) * below
                })
                .product();
            xi[i] = 1.0 - fail;
        }
        pz[i] = (1.0 - t.loss[i]) + t.loss[i] * xi[i];
    }
    let p_z = t.level1().iter().map(|&i| pz[i]).product();
    (xi[0], p_z)
}

/// Whether node `i`'s Z value is known: measured directly or inferred.
pub fn z_known(t: &TreeCode, received: &[bool], i: usize) -> bool {
    received[i] || indirect_z(t, received, i)
}

/// Whether some child `j` of `i` arrived and the Z values of all of `j`'s
/// children are known, which reveals the Z value of `i`.
pub fn indirect_z(t: &TreeCode, received: &[bool], i: usize) -> bool {
    t.children[i]
        .iter()
        .any(|&j| received[j] && t.children[j].iter().all(|&k| z_known(t, received, k)))
}

/// Logical X succeeds for this arrival pattern.
pub fn logical_x_ok(t: &TreeCode, received: &[bool]) -> bool {
    indirect_z(t, received, 0)
}

/// Logical Z succeeds for this arrival pattern.
pub fn logical_z_ok(t: &TreeCode, received: &[bool]) -> bool {
    t.level1().iter().all(|&i| z_known(t, received, i))
}

/// Role of a vertex in a repeater graph state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Role {
    Link { index: usize },
    /// Tree qubit; level 0 is the root.
    Tree { index: usize, level: usize },
}

/// One logical qubit: the tree attached to a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalTree {
    pub link: VertexId,
    pub root: VertexId,
    /// Vertices by level, root first.
    pub levels: Vec<Vec<VertexId>>,
}

/// Repeater graph state with `2m` link qubits and `2m` tree-encoded
/// logical qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct RgsState {
    pub m: usize,
    pub b: BranchingVector,
    pub graph: GraphState,
    pub links: Vec<VertexId>,
    pub trees: Vec<LogicalTree>,
}

impl RgsState {
    pub fn role(&self, v: VertexId) -> Option<Role> {
        if let Some(index) = self.links.iter().position(|&l| l == v) {
            return Some(Role::Link { index });
        }
        self.trees.iter().enumerate().find_map(|(index, t)| {
            t.levels.iter().position(|lv| lv.contains(&v)).map(|level| Role::Tree { index, level })
        })
    }

    /// Tree leaves (deepest level first, tree by tree), then the upper
    /// levels, then the roots, then the links.
    pub fn leaves_first_initial_conditions(&self) -> InitialConditions {
        let depth = self.b.as_slice().len();
        let mut init = Vec::new();
        for level in (1..=depth).rev() {
            for t in &self.trees {
                init.extend(&t.levels[level]);
            }
        }
        init.extend(self.trees.iter().map(|t| t.root));
        init.extend(&self.links);
        InitialConditions(init)
    }

    pub fn reversed_initial_conditions(&self) -> InitialConditions {
        let mut init = self.leaves_first_initial_conditions().0;
        init.reverse();
        InitialConditions(init)
    }

    pub fn summary(&self) -> RgsSummary {
        let mut roles = BTreeMap::new();
        for v in self.graph.vertices() {
            let name = match self.role(v) {
                Some(Role::Link { .. }) => "link".to_string(),
                Some(Role::Tree { level: 0, .. }) => "root".to_string(),
                Some(Role::Tree { level, .. }) => format!("level_{level}"),
                None => "other".to_string(),
            };
            *roles.entry(name).or_insert(0) += 1;
        }
        RgsSummary {
            m: self.m,
            b: self.b.as_slice().to_vec(),
            num_vertices: self.graph.num_vertices(),
            num_edges: self.graph.num_edges(),
            num_links: self.links.len(),
            num_trees: self.trees.len(),
            tree_size: self.b.tree_size(),
            roles,
        }
    }
}

/// Structured description of an RGS for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RgsSummary {
    pub m: usize,
    pub b: Vec<usize>,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_links: usize,
    pub num_trees: usize,
    pub tree_size: usize,
    pub roles: BTreeMap<String, usize>,
}

/// Pre-measurement construction: a star whose `2m` outer qubits each carry
/// a link qubit and a tree root. Survivor ids come first (links, then trees
/// in breadth-first order); the center and outer qubits follow.
struct Construction {
    graph: GraphState,
    links: Vec<VertexId>,
    trees: Vec<LogicalTree>,
    tree_edges: Vec<(VertexId, VertexId)>,
    center: VertexId,
    outers: Vec<VertexId>,
}

fn construct(m: usize, b: &BranchingVector) -> Construction {
    let k = 2 * m as VertexId;
    let size = b.tree_size() as VertexId;
    let links: Vec<VertexId> = (0..k).collect();
    let mut trees = Vec::new();
    let mut tree_edges = Vec::new();
    for i in 0..k {
        let (levels, edges) = tree_levels(b, k + i * size);
        tree_edges.extend(edges);
        trees.push(LogicalTree { link: links[i as usize], root: levels[0][0], levels });
    }
    let center = k + k * size;
    let outers: Vec<VertexId> = (0..k).map(|i| center + 1 + i).collect();
    let mut edges = tree_edges.clone();
    for i in 0..k as usize {
        edges.push((center, outers[i]));
        edges.push((outers[i], links[i]));
        edges.push((outers[i], trees[i].root));
    }
    let graph = GraphState::from_edges(center + k + 1, &edges).expect("construction edges are valid");
    Construction { graph, links, trees, tree_edges, center, outers }
}

/// Builds the repeater graph state: X measurements on the outer star qubits
/// and a Y measurement on the center leave the links fully connected, with
/// each tree root hanging off its link.
///
/// The result is checked against a stabilizer simulation of the projective
/// measurements: both the measurement-rule graph and the returned graph must
/// be local-Clifford equivalent to it on the links and roots.
pub fn build_rgs(m: usize, b: &BranchingVector) -> Result<RgsState> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let c = construct(m, b);

    let mut ruled = c.graph.clone();
    for &o in &c.outers {
        ruled.measure_vertex_mut(o, Basis::X)?;
    }
    ruled.measure_vertex_mut(c.center, Basis::Y)?;

    let mut edges = c.tree_edges.clone();
    for (i, &a) in c.links.iter().enumerate() {
        for &d in &c.links[i + 1..] {
            edges.push((a, d));
        }
        edges.push((a, c.trees[i].root));
    }
    let n = (c.links.len() + c.links.len() * b.tree_size()) as u32;
    let canonical = GraphState::from_edges(n, &edges)?;

    let oracle = project(&c)?;
    let free: Vec<VertexId> = c.links.iter().copied().chain(c.trees.iter().map(|t| t.root)).collect();
    for candidate in [&ruled, &canonical] {
        if !local_clifford_equivalent(&oracle, &graph_to_tableau(candidate), &free, 16)? {
            return Err(Error::InvalidParameter("repeater graph state failed oracle check".into()));
        }
    }
    Ok(RgsState { m, b: b.clone(), graph: canonical, links: c.links, trees: c.trees })
}

/// Stabilizer state after measuring the construction's star qubits.
fn project(c: &Construction) -> Result<StabilizerTableau> {
    let mut t = graph_to_tableau(&c.graph);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for &o in &c.outers {
        t.measure(o, Basis::X, Some(false), &mut rng)?;
        t.discard(o)?;
    }
    t.measure(c.center, Basis::Y, Some(false), &mut rng)?;
    t.discard(c.center)?;
    Ok(t)
}

/// All vertices of an RGS are photons.
pub fn is_all_photonic(s: &RgsState) -> bool {
    s.graph.vertices().all(|v| s.graph.kind(v) == Ok(VertexKind::Photon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(b: &[usize]) -> BranchingVector {
        BranchingVector::new(b.to_vec()).unwrap()
    }

    #[test]
    fn tree_sizes() {
        assert_eq!(build_tree(&bv(&[3, 2])).num_vertices(), 10);
        let t = build_tree(&bv(&[1]));
        assert_eq!((t.num_vertices(), t.num_edges()), (2, 1));
        let t = build_tree(&bv(&[2, 2]));
        assert_eq!((t.num_vertices(), t.num_edges()), (7, 6));
        assert!(BranchingVector::new(vec![]).is_err());
        assert!(BranchingVector::new(vec![2, 0]).is_err());
        assert_eq!(BranchingVector::parse("[7, 3]").unwrap(), bv(&[7, 3]));
    }

    #[test]
    fn rgs_counts_and_roles() {
        let s = build_rgs(2, &bv(&[3, 2])).unwrap();
        assert_eq!(s.graph.num_vertices(), 44);
        assert!(is_all_photonic(&s));
        for (i, &l) in s.links.iter().enumerate() {
            assert_eq!(s.role(l), Some(Role::Link { index: i }));
            assert!(s.graph.has_edge(l, s.trees[i].root));
        }
        let summary = s.summary();
        assert_eq!(summary.roles["link"], 4);
        assert_eq!(summary.roles["root"], 4);
        assert_eq!(summary.roles["level_2"], 24);
        let init = s.leaves_first_initial_conditions();
        assert_eq!(init.0.len(), 44);
        assert_eq!(&init.0[40..], &s.links[..]);
    }

    #[test]
    fn oracle_rejects_a_wrong_link_structure() {
        let b = bv(&[2]);
        let c = construct(2, &b);
        let oracle = project(&c).unwrap();
        // Links joined in a path instead of a clique.
        let mut edges = c.tree_edges.clone();
        for i in 0..c.links.len() {
            if i + 1 < c.links.len() {
                edges.push((c.links[i], c.links[i + 1]));
            }
            edges.push((c.links[i], c.trees[i].root));
        }
        let wrong = GraphState::from_edges(c.center, &edges).unwrap();
        let free: Vec<VertexId> = c.links.iter().copied().chain(c.trees.iter().map(|t| t.root)).collect();
        assert!(!local_clifford_equivalent(&oracle, &graph_to_tableau(&wrong), &free, 16).unwrap());
    }

    #[test]
    fn smallest_rgs() {
        let s = build_rgs(1, &bv(&[1])).unwrap();
        assert_eq!(s.graph.num_vertices(), 6);
        assert!(build_rgs(0, &bv(&[1])).is_err());
    }

    #[test]
    fn extreme_losses() {
        let b = bv(&[2, 2]);
        assert_eq!(logical_meas_probs(&TreeCode::uniform(&b, 0.0).unwrap()), (1.0, 1.0));
        assert_eq!(logical_meas_probs(&TreeCode::uniform(&b, 1.0).unwrap()), (0.0, 0.0));
        assert!(TreeCode::uniform(&b, 1.5).is_err());
    }

    #[test]
    fn single_level1_child_reduces_to_its_z() {
        let t = TreeCode::uniform(&bv(&[1, 3]), 0.2).unwrap();
        let (_, pz) = logical_meas_probs(&t);
        let xi: f64 = 1.0 - (0..3).map(|_| 1.0 - 0.8).product::<f64>();
        assert!((pz - (0.8 + 0.2 * xi)).abs() < 1e-15);
    }
}
