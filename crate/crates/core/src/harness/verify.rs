//! MIS verification and the exhaustive oracle for tiny graphs.

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, VertexId, VertexSubset};

/// Why a set is not a maximal independent set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MisWitness {
    /// Both endpoints of this edge are in the set.
    Adjacent { u: VertexId, v: VertexId },
    /// This vertex has no neighbour in the set and is not in it.
    Extendable { v: VertexId },
    UniverseMismatch { expected: usize, got: usize },
}

/// `Ok` iff `set` is independent and maximal in `g`; otherwise the first witness found.
pub fn verify_mis(g: &Graph, set: &VertexSubset) -> Result<(), MisWitness> {
    if set.universe() != g.n() {
        return Err(MisWitness::UniverseMismatch { expected: g.n(), got: set.universe() });
    }
    for u in set.iter() {
        if let Some(&v) = g.neighbors(u).iter().find(|w| set.contains(**w)) {
            return Err(MisWitness::Adjacent { u: u.min(v), v: u.max(v) });
        }
    }
    for v in g.vertices() {
        if !set.contains(v) && !g.neighbors(v).iter().any(|w| set.contains(*w)) {
            return Err(MisWitness::Extendable { v });
        }
    }
    Ok(())
}

pub const BRUTE_FORCE_MAX_N: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("exhaustive enumeration is limited to {BRUTE_FORCE_MAX_N} vertices, got {n}")]
pub struct SizeLimit {
    pub n: usize,
}

/// Every maximal independent set of `g`, by enumerating all `2^n` subsets.
/// Sets are returned in increasing bitmask order.
pub fn brute_force_all_mis(g: &Graph) -> Result<Vec<VertexSubset>, SizeLimit> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(SizeLimit { n });
    }
    let closed: Vec<u32> = g
        .vertices()
        .map(|v| g.neighbors(v).iter().fold(1u32 << v.0, |m, w| m | (1 << w.0)))
        .collect();
    let open: Vec<u32> = closed.iter().enumerate().map(|(v, m)| m & !(1 << v)).collect();
    let all = if n == 0 { 0 } else { u32::MAX >> (32 - n) };

    let mut out = Vec::new();
    for mask in 0..=all {
        let members = (0..n).filter(|&v| mask & (1 << v) != 0);
        if members.clone().any(|v| open[v] & mask != 0) {
            continue;
        }
        let dominated = members.fold(0u32, |d, v| d | closed[v]);
        if dominated == all {
            out.push(VertexSubset::from_vertices(n, (0..n).filter(|&v| mask & (1 << v) != 0)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, vs: &[usize]) -> VertexSubset {
        VertexSubset::from_vertices(n, vs.iter().copied())
    }

    #[test]
    fn verify_examples() {
        let k3 = Graph::complete(3);
        assert_eq!(verify_mis(&k3, &set(3, &[0])), Ok(()));
        assert_eq!(
            verify_mis(&k3, &set(3, &[0, 1])),
            Err(MisWitness::Adjacent { u: VertexId(0), v: VertexId(1) })
        );
        let p3 = Graph::path(3);
        assert_eq!(verify_mis(&p3, &set(3, &[0])), Err(MisWitness::Extendable { v: VertexId(2) }));
        assert!(matches!(verify_mis(&p3, &set(4, &[0])), Err(MisWitness::UniverseMismatch { .. })));
    }

    #[test]
    fn brute_force_examples() {
        let k3 = brute_force_all_mis(&Graph::complete(3)).unwrap();
        assert_eq!(k3, vec![set(3, &[0]), set(3, &[1]), set(3, &[2])]);
        let e3 = brute_force_all_mis(&Graph::edgeless(3)).unwrap();
        assert_eq!(e3, vec![set(3, &[0, 1, 2])]);
        let c4 = brute_force_all_mis(&Graph::cycle(4)).unwrap();
        assert_eq!(c4, vec![set(4, &[0, 2]), set(4, &[1, 3])]);
        assert_eq!(brute_force_all_mis(&Graph::edgeless(21)), Err(SizeLimit { n: 21 }));
    }

    #[test]
    fn brute_force_agrees_with_verifier() {
        // every enumerated set verifies, and their number matches a direct subset scan
        let g = crate::graph::gnp_random(10, 0.3, 2).unwrap();
        let all = brute_force_all_mis(&g).unwrap();
        assert!(all.iter().all(|s| verify_mis(&g, s).is_ok()));
        let direct = (0u32..1 << 10)
            .filter(|m| verify_mis(&g, &VertexSubset::from_vertices(10, (0..10).filter(|v| m & (1 << v) != 0))).is_ok())
            .count();
        assert_eq!(all.len(), direct);
    }
}
