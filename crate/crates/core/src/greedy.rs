//! Sequential random-order Greedy MIS with a full residual trace.
//!
//! Step `t` (1-based) looks at the `t`-th vertex of the order; `U_t` is the
//! uncovered set at the beginning of step `t`, so `U_1 = V`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, VertexId, VertexSubset};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("order has {got} entries, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("vertex {0} appears twice or is out of range")]
    NotAPermutation(VertexId),
}

/// A processing order: `perm[r]` is the vertex of rank `r` (0-based) and
/// `position[v]` is the rank of `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexOrder {
    perm: Vec<VertexId>,
    position: Vec<u32>,
}

impl VertexOrder {
    pub fn identity(n: usize) -> Self {
        Self::from_perm((0..n).map(VertexId::from).collect()).expect("identity is a permutation")
    }

    pub fn from_perm(perm: Vec<VertexId>) -> Result<Self, OrderError> {
        let n = perm.len();
        let mut position = vec![u32::MAX; n];
        for (r, &v) in perm.iter().enumerate() {
            if v.index() >= n || position[v.index()] != u32::MAX {
                return Err(OrderError::NotAPermutation(v));
            }
            position[v.index()] = r as u32;
        }
        Ok(VertexOrder { perm, position })
    }

    /// Inverse of [`VertexOrder::from_perm`]: `positions[v]` is the rank of `v`.
    pub fn from_positions(positions: &[u64]) -> Result<Self, OrderError> {
        let n = positions.len();
        let mut perm = vec![VertexId(u32::MAX); n];
        for (v, &r) in positions.iter().enumerate() {
            let r = r as usize;
            if r >= n || perm[r].0 != u32::MAX {
                return Err(OrderError::NotAPermutation(VertexId::from(v)));
            }
            perm[r] = VertexId::from(v);
        }
        Self::from_perm(perm)
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    #[inline]
    pub fn vertex_at(&self, rank: usize) -> VertexId {
        self.perm[rank]
    }

    #[inline]
    pub fn rank(&self, v: VertexId) -> usize {
        self.position[v.index()] as usize
    }

    pub fn perm(&self) -> &[VertexId] {
        &self.perm
    }
}

/// Fisher–Yates shuffle of `[0, n)` driven by a ChaCha8 stream seeded with `seed`.
pub fn uniform_order(n: usize, seed: u64) -> VertexOrder {
    let mut perm: Vec<VertexId> = (0..n).map(VertexId::from).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    VertexOrder::from_perm(perm).expect("shuffle preserves the permutation")
}

#[derive(Clone, Debug)]
pub struct GreedyTrace {
    pub order: VertexOrder,
    pub chosen: VertexSubset,
    /// Vertices leaving `U` at step `t` are `removed[offsets[t-1]..offsets[t]]`.
    removed: Vec<VertexId>,
    offsets: Vec<usize>,
    /// Index `t - 1` holds Δ(G[U_t]) for `t = 1..=n+1`.
    residual_max_degree: Vec<usize>,
    /// Index `t - 1` holds |U_t|.
    uncovered_len: Vec<usize>,
}

impl GreedyTrace {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// U_t for `1 <= t <= n + 1`.
    pub fn uncovered_at(&self, t: usize) -> VertexSubset {
        assert!(t >= 1 && t <= self.n() + 1, "step {t} outside 1..={}", self.n() + 1);
        let mut u = VertexSubset::full(self.n());
        for &v in &self.removed[..self.offsets[t - 1]] {
            u.remove(v);
        }
        u
    }

    /// Vertices removed from `U` during step `t`.
    pub fn removed_at(&self, t: usize) -> &[VertexId] {
        &self.removed[self.offsets[t - 1]..self.offsets[t]]
    }

    pub fn residual_max_degree_at(&self, t: usize) -> usize {
        self.residual_max_degree[t - 1]
    }

    pub fn uncovered_len_at(&self, t: usize) -> usize {
        self.uncovered_len[t - 1]
    }

    /// Chosen vertices whose rank is below `k` (the first `k` steps).
    pub fn chosen_within(&self, k: usize) -> VertexSubset {
        let mut s = VertexSubset::empty(self.n());
        for &v in &self.order.perm()[..k.min(self.n())] {
            if self.chosen.contains(v) {
                s.insert(v);
            }
        }
        s
    }
}

/// Runs Greedy over `order`, recording every removal and the residual maximum degree.
pub fn greedy_mis(g: &Graph, order: &VertexOrder) -> GreedyTrace {
    let n = g.n();
    assert_eq!(order.len(), n, "order must cover the graph's vertices");

    let mut uncovered = VertexSubset::full(n);
    let mut chosen = VertexSubset::empty(n);
    // uncovered-neighbour count per vertex and how many uncovered vertices have each count
    let mut live_degree: Vec<usize> = g.vertices().map(|v| g.degree(v)).collect();
    let mut bucket = vec![0usize; g.max_degree() + 1];
    for &d in &live_degree {
        bucket[d] += 1;
    }
    let mut max_deg = g.max_degree();

    let mut removed = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n + 1);
    let mut residual_max_degree = Vec::with_capacity(n + 1);
    let mut uncovered_len = Vec::with_capacity(n + 1);
    let mut remaining = n;
    offsets.push(0);

    for &v in order.perm() {
        residual_max_degree.push(if remaining == 0 { 0 } else { max_deg });
        uncovered_len.push(remaining);
        if uncovered.contains(v) {
            chosen.insert(v);
            let closed = std::iter::once(v).chain(g.neighbors(v).iter().copied());
            for w in closed {
                if !uncovered.remove(w) {
                    continue;
                }
                removed.push(w);
                remaining -= 1;
                bucket[live_degree[w.index()]] -= 1;
                for &x in g.neighbors(w) {
                    if uncovered.contains(x) {
                        let d = &mut live_degree[x.index()];
                        bucket[*d] -= 1;
                        *d -= 1;
                        bucket[*d] += 1;
                    }
                }
            }
            while max_deg > 0 && bucket[max_deg] == 0 {
                max_deg -= 1;
            }
        }
        offsets.push(removed.len());
    }
    residual_max_degree.push(0);
    uncovered_len.push(remaining);
    debug_assert_eq!(remaining, 0);

    GreedyTrace { order: order.clone(), chosen, removed, offsets, residual_max_degree, uncovered_len }
}

/// A step where Δ(G[U_t]) exceeded `10 ln(n) n / t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsityViolation {
    pub t: usize,
    pub residual_max_degree: usize,
    pub bound: f64,
}

/// Residual-sparsity bound `10 ln(n) n / t`.
pub fn residual_sparsity_bound(n: usize, t: usize) -> f64 {
    let n = n as f64;
    10.0 * n.ln() * n / t as f64
}

/// Checks Δ(G[U_t]) ≤ 10 ln(n) n / t at every `t` in `[1, n)`.
pub fn check_residual_sparsity(trace: &GreedyTrace, n: usize) -> Vec<SparsityViolation> {
    (1..n)
        .filter_map(|t| {
            let d = trace.residual_max_degree_at(t);
            let bound = residual_sparsity_bound(n, t);
            (d as f64 > bound).then_some(SparsityViolation { t, residual_max_degree: d, bound })
        })
        .collect()
}

#[derive(Serialize)]
struct TraceRow {
    t: usize,
    uncovered: usize,
    residual_max_degree: usize,
    bound: f64,
    violated: bool,
}

/// CSV with columns `t, uncovered, residual_max_degree, bound, violated` for `t` in `[1, n)`.
pub fn write_trace_csv<W: Write>(trace: &GreedyTrace, out: W) -> csv::Result<()> {
    let n = trace.n();
    let mut w = csv::Writer::from_writer(out);
    for t in 1..n {
        let d = trace.residual_max_degree_at(t);
        let bound = residual_sparsity_bound(n, t);
        w.serialize(TraceRow {
            t,
            uncovered: trace.uncovered_len_at(t),
            residual_max_degree: d,
            bound,
            violated: d as f64 > bound,
        })?;
    }
    w.flush()?;
    Ok(())
}
