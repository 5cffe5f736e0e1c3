//! Simple undirected graphs, vertex subsets, and the generators used as test inputs.
//!
//! Adjacency lists are kept sorted so every iteration order in the crate is a
//! function of the graph alone; the only randomness downstream comes from
//! explicit seeds.

use std::fmt;
use std::io::{BufRead, Write};

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("a graph needs at least one vertex")]
    NoVertices,
    #[error("vertex {vertex} out of range for a graph on {n} vertices")]
    OutOfRange { vertex: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("no {d}-regular graph on {n} vertices")]
    RegularInfeasible { n: usize, d: usize },
    #[error("pairing sampler for a {d}-regular graph on {n} vertices gave up after {attempts} restarts")]
    RegularGaveUp { n: usize, d: usize, attempts: usize },
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense vertex identifier in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
#[repr(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    #[inline]
    fn from(i: usize) -> Self {
        debug_assert!(i <= u32::MAX as usize);
        VertexId(i as u32)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Membership bitmap over `[0, n)`.
#[derive(Clone, PartialEq, Eq)]
pub struct VertexSubset {
    bits: FixedBitSet,
}

impl VertexSubset {
    pub fn empty(n: usize) -> Self {
        VertexSubset { bits: FixedBitSet::with_capacity(n) }
    }

    pub fn full(n: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n);
        bits.insert_range(..);
        VertexSubset { bits }
    }

    pub fn from_vertices<I>(n: usize, vertices: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<VertexId>,
    {
        let mut s = Self::empty(n);
        for v in vertices {
            s.insert(v.into());
        }
        s
    }

    /// Size of the universe `[0, n)`.
    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        self.bits.contains(v.index())
    }

    /// Returns `true` if `v` was not already present.
    #[inline]
    pub fn insert(&mut self, v: VertexId) -> bool {
        !self.bits.put(v.index())
    }

    /// Returns `true` if `v` was present.
    #[inline]
    pub fn remove(&mut self, v: VertexId) -> bool {
        let was = self.bits.contains(v.index());
        self.bits.set(v.index(), false);
        was
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.bits.ones().map(VertexId::from)
    }

    pub fn is_subset(&self, other: &VertexSubset) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn union_with(&mut self, other: &VertexSubset) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &VertexSubset) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn to_vec(&self) -> Vec<VertexId> {
        self.iter().collect()
    }
}

impl fmt::Debug for VertexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|v| v.0)).finish()
    }
}

/// Simple undirected graph on vertices `[0, n)` with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<VertexId>>,
    edge_count: usize,
}

/// An induced subgraph re-indexed to `[0, |s|)`, with the map back to parent IDs.
#[derive(Clone, Debug)]
pub struct InducedSubgraph {
    pub graph: Graph,
    /// `to_parent[i]` is the parent vertex of local vertex `i`, increasing in `i`.
    pub to_parent: Vec<VertexId>,
}

impl InducedSubgraph {
    /// Edges expressed in parent vertex IDs, each as `(u, v)` with `u < v`.
    pub fn parent_edges(&self) -> Vec<(VertexId, VertexId)> {
        self.graph
            .edges()
            .map(|(u, v)| (self.to_parent[u.index()], self.to_parent[v.index()]))
            .collect()
    }
}

impl Graph {
    pub fn edgeless(n: usize) -> Self {
        Graph { adjacency: vec![Vec::new(); n], edge_count: 0 }
    }

    /// Builds a simple graph. Self-loops, duplicate edges and out-of-range endpoints are errors.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(GraphError::OutOfRange { vertex: x, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(VertexId::from(v));
            adjacency[v].push(VertexId::from(u));
        }
        let mut degree_sum = 0;
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                let (a, b) = (u.min(w[0].index()), u.max(w[0].index()));
                return Err(GraphError::DuplicateEdge(a, b));
            }
            degree_sum += list.len();
        }
        Ok(Graph { adjacency, edge_count: degree_sum / 2 })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("complete graph is simple")
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|v| (v - 1, v))).expect("path is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a simple cycle needs at least 3 vertices");
        Self::from_edges(n, (0..n).map(|v| (v, (v + 1) % n))).expect("cycle is simple")
    }

    /// Star with centre 0 and `n - 1` leaves.
    pub fn star(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|v| (0, v))).expect("star is simple")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v.index()]
    }

    #[inline]
    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v.index()].len()
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.adjacency[u.index()].binary_search(&v).is_ok()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.n()).map(VertexId::from)
    }

    /// Every edge once, as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            let u = VertexId::from(u);
            list.iter().copied().filter(move |&v| u < v).map(move |v| (u, v))
        })
    }

    /// Δ(G); zero for edgeless graphs.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn induced_subgraph(&self, s: &VertexSubset) -> InducedSubgraph {
        debug_assert_eq!(s.universe(), self.n());
        let to_parent: Vec<VertexId> = s.iter().collect();
        let mut local = vec![u32::MAX; self.n()];
        for (i, v) in to_parent.iter().enumerate() {
            local[v.index()] = i as u32;
        }
        let mut edge_count = 0;
        let adjacency: Vec<Vec<VertexId>> = to_parent
            .iter()
            .map(|&v| {
                // parent lists are sorted and `local` is increasing on s, so this stays sorted
                let list: Vec<VertexId> = self
                    .neighbors(v)
                    .iter()
                    .filter(|w| s.contains(**w))
                    .map(|w| VertexId(local[w.index()]))
                    .collect();
                edge_count += list.len();
                list
            })
            .collect();
        InducedSubgraph { graph: Graph { adjacency, edge_count: edge_count / 2 }, to_parent }
    }

    /// Γ[S]: `s` together with every vertex adjacent to a member of `s`.
    pub fn closed_neighborhood(&self, s: &VertexSubset) -> VertexSubset {
        let mut out = s.clone();
        for v in s.iter() {
            for &w in self.neighbors(v) {
                out.insert(w);
            }
        }
        out
    }

    /// Max degree of G[s] without materializing the subgraph.
    pub fn induced_max_degree(&self, s: &VertexSubset) -> usize {
        s.iter()
            .map(|v| self.neighbors(v).iter().filter(|w| s.contains(**w)).count())
            .max()
            .unwrap_or(0)
    }

    /// Writes the plain-text edge list: `n m`, then `u v` per edge with `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n(), self.edge_count)?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let parse_err = |line: usize, message: String| GraphError::Parse { line, message };
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));

        let (line_no, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header?;
        let nums = parse_pair(&header).map_err(|m| parse_err(line_no, m))?;
        let (n, m) = nums;

        let mut edges = Vec::with_capacity(m);
        for (line_no, line) in lines {
            let line = line?;
            let (u, v) = parse_pair(&line).map_err(|msg| parse_err(line_no, msg))?;
            if u >= v {
                return Err(parse_err(line_no, format!("expected u < v, got {u} {v}")));
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(parse_err(line_no, format!("header declares {m} edges, found {}", edges.len())));
        }
        Self::from_edges(n, edges)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize), String> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize, String> {
        let tok = it.next().ok_or_else(|| format!("expected two integers in {line:?}"))?;
        tok.parse().map_err(|e| format!("bad integer {tok:?}: {e}"))
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(format!("trailing tokens in {line:?}"));
    }
    Ok((a, b))
}

/// G(n, p): each unordered pair is an edge independently with probability `p`.
pub fn gnp_random(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::NoVertices);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

const REGULAR_RESTARTS: usize = 1000;
const PAIRING_STALL_LIMIT: usize = 64;

/// Random d-regular graph from the pairing model: stubs are matched at random,
/// pairs that would create a loop or a multi-edge are rejected, and the whole
/// pairing restarts only when no valid pair remains.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::NoVertices);
    }
    if d >= n || (n * d) % 2 == 1 {
        return Err(GraphError::RegularInfeasible { n, d });
    }
    if d == 0 {
        return Ok(Graph::edgeless(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..REGULAR_RESTARTS {
        if let Some(edges) = try_pairing(n, d, &mut rng) {
            return Graph::from_edges(n, edges);
        }
    }
    Err(GraphError::RegularGaveUp { n, d, attempts: REGULAR_RESTARTS })
}

fn try_pairing(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut edges = std::collections::BTreeSet::new();
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut stalled = 0;
    while !stubs.is_empty() {
        stubs.shuffle(rng);
        let mut leftover = Vec::new();
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u != v && edges.insert((u, v)) {
                continue;
            }
            leftover.extend_from_slice(pair);
        }
        if leftover.len() == stubs.len() {
            stalled += 1;
            if stalled > PAIRING_STALL_LIMIT {
                return None;
            }
        } else {
            stalled = 0;
        }
        stubs = leftover;
    }
    Some(edges.into_iter().collect())
}
