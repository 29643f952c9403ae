//! Finite simple undirected graphs over at most 64 vertices.
//!
//! Vertices carry opaque string names externally and dense indices internally.
//! Vertex subsets are `u64` bit sets, which keeps cluster bookkeeping cheap in
//! the exhaustive enumerators.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of vertices a [`Graph`] can hold.
pub const MAX_VERTICES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: self-loop on vertex `{vertex}`")]
    SelfLoop { line: usize, vertex: String },
    #[error("line {line}: duplicate edge {u} {v}")]
    DuplicateEdge { line: usize, u: String, v: String },
    #[error("line {line}: malformed line `{text}`")]
    Malformed { line: usize, text: String },
    #[error("duplicate vertex identifier `{0}`")]
    DuplicateVertex(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("graph would need {0} vertices, capacity is {MAX_VERTICES}")]
    CapacityExceeded(usize),
    #[error("vertex {0} is a member of the set it is compared against")]
    VertexInSet(usize),
    #[error("labeled graph enumeration supports 1..=6 vertices, got {0}")]
    EnumerationRange(usize),
    #[error("graph must have at least one vertex")]
    Empty,
}

/// Fixed-width set of vertex indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet(u64);

impl VertexSet {
    pub const EMPTY: VertexSet = VertexSet(0);

    pub const fn from_bits(bits: u64) -> Self {
        VertexSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(v: usize) -> Self {
        debug_assert!(v < MAX_VERTICES);
        VertexSet(1u64 << v)
    }

    /// The set `{0, 1, .., n-1}`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_VERTICES);
        if n == MAX_VERTICES {
            VertexSet(u64::MAX)
        } else {
            VertexSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, v: usize) -> bool {
        v < MAX_VERTICES && self.0 >> v & 1 == 1
    }

    pub fn with(self, v: usize) -> Self {
        self | VertexSet::singleton(v)
    }

    pub fn without(self, v: usize) -> Self {
        VertexSet(self.0 & !(1u64 << v))
    }

    pub fn insert(&mut self, v: usize) {
        *self = self.with(v);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: VertexSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: VertexSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn lowest(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> VertexIter {
        VertexIter(self.0)
    }

    /// All subsets of `self`, in increasing bitmask order.
    pub fn subsets(self) -> SubsetIter {
        SubsetIter { mask: self.0, next: Some(0) }
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl std::ops::BitOr for VertexSet {
    type Output = VertexSet;
    fn bitor(self, rhs: Self) -> Self {
        VertexSet(self.0 | rhs.0)
    }
}

impl std::ops::BitAnd for VertexSet {
    type Output = VertexSet;
    fn bitand(self, rhs: Self) -> Self {
        VertexSet(self.0 & rhs.0)
    }
}

impl std::ops::Sub for VertexSet {
    type Output = VertexSet;
    fn sub(self, rhs: Self) -> Self {
        VertexSet(self.0 & !rhs.0)
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(VertexSet::EMPTY, VertexSet::with)
    }
}

pub struct VertexIter(u64);

impl Iterator for VertexIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(v)
    }
}

/// Subset enumeration by the `(s - mask) & mask` trick.
pub struct SubsetIter {
    mask: u64,
    next: Option<u64>,
}

impl Iterator for SubsetIter {
    type Item = VertexSet;
    fn next(&mut self) -> Option<VertexSet> {
        let cur = self.next?;
        let succ = cur.wrapping_sub(self.mask) & self.mask;
        self.next = (succ != 0).then_some(succ);
        Some(VertexSet(cur))
    }
}

/// A finite simple undirected graph.
///
/// Edge `k` is stored as the ordered pair `(i, j)`; the order fixes what
/// "forward" means for orientations of that edge.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    adj: Vec<VertexSet>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("names", &self.names)
            .field("edges", &self.edges)
            .finish()
    }
}

impl Graph {
    /// Builds a graph, validating the simple-graph invariants.
    pub fn new(names: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let n = names.len();
        if n > MAX_VERTICES {
            return Err(GraphError::CapacityExceeded(n));
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.as_str(), i).is_some() {
                return Err(GraphError::DuplicateVertex(name.clone()));
            }
        }
        let mut adj = vec![VertexSet::EMPTY; n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            for x in [i, j] {
                if x >= n {
                    return Err(GraphError::IndexOutOfRange(x));
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop { line: k + 1, vertex: names[i].clone() });
            }
            if adj[i].contains(j) {
                return Err(GraphError::DuplicateEdge {
                    line: k + 1,
                    u: names[i].clone(),
                    v: names[j].clone(),
                });
            }
            adj[i].insert(j);
            adj[j].insert(i);
        }
        Ok(Graph { names, edges, adj })
    }

    /// Graph on vertices `v0..v(n-1)`.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::new((0..n).map(|i| format!("v{i}")).collect(), edges.to_vec())
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn vertices(&self) -> VertexSet {
        VertexSet::full(self.n())
    }

    pub fn index_of(&self, name: &str) -> Result<usize, GraphError> {
        self.names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| GraphError::UnknownVertex(name.to_string()))
    }

    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<VertexSet, GraphError> {
        names.iter().map(|s| self.index_of(s.as_ref())).collect()
    }

    pub fn set_names(&self, set: VertexSet) -> Vec<String> {
        set.iter().map(|v| self.names[v].clone()).collect()
    }

    pub fn neighbors(&self, v: usize) -> VertexSet {
        self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v)
    }

    /// Vertices of the connected component containing `v`.
    pub fn component(&self, v: usize) -> VertexSet {
        let mut seen = VertexSet::singleton(v);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let mut next = VertexSet::EMPTY;
            for x in frontier.iter() {
                next = next | self.adj[x];
            }
            frontier = next - seen;
            seen = seen | frontier;
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.component(0) == self.vertices()
    }

    /// Number of edges joining `v` to a vertex of `set`. `v` must lie outside `set`.
    pub fn edges_between(&self, set: VertexSet, v: usize) -> Result<usize, GraphError> {
        if v >= self.n() {
            return Err(GraphError::IndexOutOfRange(v));
        }
        if set.contains(v) {
            return Err(GraphError::VertexInSet(v));
        }
        Ok((self.adj[v] & set).len())
    }

    /// Induced subgraph on the complement of `removed`, with edge indices reassigned densely.
    pub fn delete_vertices(&self, removed: VertexSet) -> Graph {
        let mut remap = vec![usize::MAX; self.n()];
        let mut names = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            if !removed.contains(i) {
                remap[i] = names.len();
                names.push(name.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| !removed.contains(*i) && !removed.contains(*j))
            .map(|&(i, j)| (remap[i], remap[j]))
            .collect();
        Graph::new(names, edges).expect("induced subgraph of a simple graph is simple")
    }

    /// The product `G x K2`: two layers of `g` joined by a vertical edge at every vertex.
    ///
    /// Vertex `v` becomes `v0` (index `v`) and `v1` (index `n + v`). Layer-0
    /// edges come first, then layer-1 edges, then the vertical edges.
    pub fn bunkbed_product(&self) -> Result<Graph, GraphError> {
        let n = self.n();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if 2 * n > MAX_VERTICES {
            return Err(GraphError::CapacityExceeded(2 * n));
        }
        let names = (0..2)
            .flat_map(|layer| self.names.iter().map(move |x| format!("{x}{layer}")))
            .collect();
        let mut edges = Vec::with_capacity(2 * self.m() + n);
        for layer in 0..2 {
            edges.extend(self.edges.iter().map(|&(i, j)| (i + layer * n, j + layer * n)));
        }
        edges.extend((0..n).map(|v| (v, v + n)));
        Graph::new(names, edges)
    }

    /// Parses the edge-list text format.
    ///
    /// An optional first line `vertices: a b c` declares vertices (possibly
    /// isolated); every other non-empty line is one edge `u v`. `#` starts a
    /// comment.
    pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut seen_content = false;

        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("vertices:") {
                if seen_content {
                    return Err(GraphError::Malformed { line: line_no, text: raw.to_string() });
                }
                for name in rest.split_whitespace() {
                    let before = names.len();
                    intern(name, &mut names);
                    if names.len() == before {
                        return Err(GraphError::DuplicateVertex(name.to_string()));
                    }
                }
                seen_content = true;
                continue;
            }
            seen_content = true;
            let mut parts = line.split_whitespace();
            let (u, v) = match (parts.next(), parts.next(), parts.next()) {
                (Some(u), Some(v), None) => (u, v),
                _ => return Err(GraphError::Malformed { line: line_no, text: raw.to_string() }),
            };
            if u == v {
                return Err(GraphError::SelfLoop { line: line_no, vertex: u.to_string() });
            }
            let i = intern(u, &mut names);
            let j = intern(v, &mut names);
            if names.len() > MAX_VERTICES {
                return Err(GraphError::CapacityExceeded(names.len()));
            }
            if edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i)) {
                return Err(GraphError::DuplicateEdge {
                    line: line_no,
                    u: u.to_string(),
                    v: v.to_string(),
                });
            }
            edges.push((i, j));
        }
        Graph::new(names, edges)
    }

    /// Writes the graph in the edge-list format; always emits the vertex header.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("vertices: {}\n", self.names.join(" "));
        for &(i, j) in &self.edges {
            out.push_str(&self.names[i]);
            out.push(' ');
            out.push_str(&self.names[j]);
            out.push('\n');
        }
        out
    }
}

/// All labeled simple graphs on `v0..v(n-1)`, ordered by edge-subset bitmask.
///
/// Bit `k` of the mask selects the `k`-th pair in lexicographic order
/// `(0,1), (0,2), .., (n-2,n-1)`.
pub fn enumerate_labeled_graphs(n: usize) -> Result<LabeledGraphs, GraphError> {
    if !(1..=6).contains(&n) {
        return Err(GraphError::EnumerationRange(n));
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let end = 1u64 << pairs.len();
    Ok(LabeledGraphs { n, pairs, next: 0, end })
}

#[derive(Clone, Debug)]
pub struct LabeledGraphs {
    n: usize,
    pairs: Vec<(usize, usize)>,
    next: u64,
    end: u64,
}

impl LabeledGraphs {
    pub fn len(&self) -> u64 {
        self.end - self.next
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Restricts the stream to masks in `[start, end)`, for chunked sweeps.
    pub fn range(mut self, start: u64, end: u64) -> Self {
        self.next = start.min(self.end);
        self.end = end.min(self.end).max(self.next);
        self
    }

    pub fn graph_for_mask(&self, mask: u64) -> Graph {
        let edges: Vec<_> = self
            .pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        Graph::from_index_edges(self.n, &edges).expect("labeled pairs are simple")
    }
}

impl Iterator for LabeledGraphs {
    type Item = Graph;
    fn next(&mut self) -> Option<Graph> {
        if self.next >= self.end {
            return None;
        }
        let g = self.graph_for_mask(self.next);
        self.next += 1;
        Some(g)
    }
}

/// Connected labeled graphs on `n` vertices with at most `max_edges` edges.
pub fn connected_labeled_graphs(n: usize, max_edges: usize) -> Result<Vec<Graph>, GraphError> {
    Ok(enumerate_labeled_graphs(n)?
        .filter(|g| g.m() <= max_edges && g.is_connected())
        .collect())
}
