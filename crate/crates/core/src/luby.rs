//! Luby's randomized MIS, run inside the clique engine as the low-degree finisher.
//!
//! One Luby round costs two engine rounds: active vertices exchange fresh
//! random priorities with their active neighbours, then strict local minima
//! join and notify their neighbours, who become covered. Vertices that have no
//! active neighbour at all join without communicating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Clique, EngineConfig, Message, Outbox, RoundCtx, SimClock, SimError, Tag, Word};
use crate::graph::{Graph, VertexId, VertexSubset};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FinisherError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("finisher did not terminate within {cap} luby rounds")]
    SafetyCapExceeded { cap: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Active,
    InMis,
    Covered,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LubyNode {
    pub status: Status,
    /// Neighbours that were active when last heard from.
    pub active_neighbors: Vec<VertexId>,
    priority: u64,
}

impl LubyNode {
    pub fn active(active_neighbors: Vec<VertexId>) -> Self {
        LubyNode { status: Status::Active, active_neighbors, priority: 0 }
    }

    pub fn inactive() -> Self {
        LubyNode { status: Status::Covered, active_neighbors: Vec::new(), priority: 0 }
    }
}

/// Builds finisher states for the residual graph `g[active]`.
pub fn residual_nodes(g: &Graph, active: &VertexSubset) -> Vec<LubyNode> {
    g.vertices()
        .map(|v| {
            if active.contains(v) {
                LubyNode::active(g.neighbors(v).iter().copied().filter(|w| active.contains(*w)).collect())
            } else {
                LubyNode::inactive()
            }
        })
        .collect()
}

pub trait PrioritySource: Sync {
    fn priority(&self, v: VertexId, luby_round: u64) -> u64;
}

impl<F> PrioritySource for F
where
    F: Fn(VertexId, u64) -> u64 + Sync,
{
    fn priority(&self, v: VertexId, luby_round: u64) -> u64 {
        self(v, luby_round)
    }
}

/// Uniform priorities in `[0, min(n^6, 2^64))`, one independent stream per (seed, vertex, round).
///
/// `n^6` is the largest range that fits three payload words below `n²`.
#[derive(Clone, Copy, Debug)]
pub struct SeededPriorities {
    seed: u64,
    space: Option<u64>,
}

impl SeededPriorities {
    pub fn new(n: usize, seed: u64) -> Self {
        SeededPriorities { seed, space: (n.max(1) as u64).checked_pow(6) }
    }
}

impl PrioritySource for SeededPriorities {
    fn priority(&self, v: VertexId, luby_round: u64) -> u64 {
        let key = mix(mix(self.seed ^ mix(u64::from(v.0))) ^ luby_round);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        match self.space {
            Some(space) => rng.gen_range(0..space),
            None => rng.gen(),
        }
    }
}

// splitmix64 finalizer
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits a priority into three base-`n²` digits.
pub fn encode_priority(p: u64, n: usize) -> [Word; 3] {
    let base = ((n as u128) * (n as u128)).max(1);
    let p = p as u128;
    [(p % base) as Word, ((p / base) % base) as Word, (p / (base * base)) as Word]
}

pub fn decode_priority(words: &[Word], n: usize) -> u64 {
    let base = ((n as u128) * (n as u128)).max(1);
    (words[0] as u128 + words[1] as u128 * base + words[2] as u128 * base * base) as u64
}

fn exchange_priorities<P: PrioritySource>(luby_round: u64, source: &P) -> impl Fn(&mut LubyNode, &RoundCtx<'_>, &mut Outbox) + Sync + '_ {
    move |node, ctx, out| {
        if node.status != Status::Active {
            return;
        }
        node.priority = source.priority(ctx.id, luby_round);
        let words = encode_priority(node.priority, ctx.n);
        for &w in &node.active_neighbors {
            out.send(w, Message::new(Tag::Priority, &words));
        }
    }
}

fn join_if_minimal(node: &mut LubyNode, ctx: &RoundCtx<'_>, out: &mut Outbox) {
    if node.status != Status::Active {
        return;
    }
    // only active neighbours sent a priority, so the senders are the live neighbourhood
    let mut live = Vec::with_capacity(node.active_neighbors.len());
    let mut minimal = true;
    for (from, msg) in ctx.inbox.with_tag(Tag::Priority) {
        live.push(from);
        let theirs = decode_priority(&msg.words, ctx.n);
        if (theirs, from) < (node.priority, ctx.id) {
            minimal = false;
        }
    }
    node.active_neighbors = live;
    if minimal {
        node.status = Status::InMis;
        for &w in &node.active_neighbors {
            out.send(w, Message::new(Tag::Join, &[]));
        }
    }
}

/// One Luby step (two engine rounds). Returns how many vertices joined.
pub fn luby_round<P: PrioritySource>(
    engine: &mut Clique,
    nodes: &mut [LubyNode],
    luby_round_index: u64,
    source: &P,
) -> Result<usize, SimError> {
    let before = nodes.iter().filter(|s| s.status == Status::InMis).count();
    engine.run_round(nodes, &exchange_priorities(luby_round_index, source))?;
    engine.run_round(nodes, &join_if_minimal)?;
    engine.compute(nodes, |node, _, inbox| {
        if node.status == Status::Active && inbox.with_tag(Tag::Join).next().is_some() {
            node.status = Status::Covered;
        }
    })?;
    Ok(nodes.iter().filter(|s| s.status == Status::InMis).count() - before)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinisherOutcome {
    pub mis: Vec<VertexId>,
    pub luby_rounds: u64,
    pub rounds: u64,
    /// Active vertices before the first Luby round and after each one.
    pub active_curve: Vec<usize>,
}

/// Luby round cap: `64 · ⌈log₂ n⌉`, at least 64.
pub fn luby_round_cap(n: usize) -> u64 {
    let log2 = (n.max(2) as f64).log2().ceil() as u64;
    64 * log2.max(1)
}

fn active_count(nodes: &[LubyNode]) -> usize {
    nodes.iter().filter(|s| s.status == Status::Active).count()
}

/// Runs Luby until no vertex is active. Expects no pending messages on the engine.
pub fn run_finisher<P: PrioritySource>(
    engine: &mut Clique,
    nodes: &mut [LubyNode],
    source: &P,
) -> Result<FinisherOutcome, FinisherError> {
    let start = engine.clock().logical_rounds;
    engine.compute(nodes, |node, _, _| {
        if node.status == Status::Active && node.active_neighbors.is_empty() {
            node.status = Status::InMis;
        }
    })?;
    let cap = luby_round_cap(engine.n());
    let mut active_curve = vec![active_count(nodes)];
    let mut luby_rounds = 0;
    while active_curve.last() != Some(&0) {
        if luby_rounds >= cap {
            return Err(FinisherError::SafetyCapExceeded { cap });
        }
        luby_round(engine, nodes, luby_rounds, source)?;
        luby_rounds += 1;
        active_curve.push(active_count(nodes));
    }
    let mis = nodes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.status == Status::InMis)
        .map(|(i, _)| VertexId::from(i))
        .collect();
    Ok(FinisherOutcome { mis, luby_rounds, rounds: engine.clock().logical_rounds - start, active_curve })
}

/// Stand-alone finisher on `g[active]` with its own engine.
pub fn run_finisher_on(
    g: &Graph,
    active: &VertexSubset,
    seed: u64,
    config: EngineConfig,
) -> Result<(FinisherOutcome, SimClock), FinisherError> {
    let mut engine = Clique::new(g.n(), config);
    let mut nodes = residual_nodes(g, active);
    let outcome = run_finisher(&mut engine, &mut nodes, &SeededPriorities::new(g.n(), seed))?;
    Ok((outcome, engine.clock()))
}
