//! O(log log Δ)-round MIS in the congested clique.
//!
//! The nodes agree on a uniform random order, then repeatedly let the first
//! vertex of the order replay Greedy on a prefix block of that order:
//!
//! 1. every node computes `k = n / (√Δ' · C)` from the current residual degree Δ';
//! 2. every uncovered vertex of rank below `k` routes its edges to uncovered
//!    lower-rank vertices to `v_1` (one routing-primitive call);
//! 3. `v_1` continues Greedy over the block and tells the selected vertices,
//!    which tell their neighbours;
//! 4. uncovered flags and residual degrees are broadcast, so everyone knows Δ'.
//!
//! Once Δ' drops to the threshold τ(n), the residual graph is handed to the
//! Luby finisher. The run is audited throughout: routing precondition,
//! congestion, word sizes, and (optionally) the residual graph against ground truth.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    Board, Clique, EngineConfig, Message, Outbox, RoundCtx, RoundReport, SimClock, SimError, Tag, Word,
};
use crate::graph::{Graph, VertexId, VertexSubset};
use crate::greedy::{uniform_order, VertexOrder};
use crate::harness::verify::{verify_mis, MisWitness};
use crate::luby::{self, FinisherError, FinisherOutcome, LubyNode, SeededPriorities};

/// Rounds spent agreeing on the order: ID exchange, position delivery, position broadcast.
pub const ORDER_ROUNDS: u64 = 3;
/// Engine rounds per while-iteration besides the routing call.
pub const ITERATION_EXCHANGE_ROUNDS: u64 = 4;

#[derive(Debug, Error)]
pub enum Algo2Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("iteration {iteration}: block of {total} edges exceeds the routing capacity {capacity}")]
    Routing { iteration: usize, total: usize, capacity: usize },
    #[error("while-loop exceeded the safety cap of {cap} iterations")]
    SafetyCapExceeded { cap: usize },
    #[error(transparent)]
    Finisher(#[from] FinisherError),
    #[error("iteration {iteration}: residual graph disagrees with ground truth ({detail})")]
    ResidualMismatch { iteration: usize, detail: String },
    #[error("output is not a maximal independent set: {0:?}")]
    InvalidOutput(MisWitness),
}

/// τ(n), the residual degree at which the while-loop stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeThreshold {
    /// `max(1, ln(n)^exponent)`.
    PolyLog { exponent: f64 },
    Fixed { value: u64 },
}

impl DegreeThreshold {
    pub fn evaluate(&self, n: usize) -> f64 {
        match *self {
            DegreeThreshold::PolyLog { exponent } => (n as f64).ln().max(0.0).powf(exponent).max(1.0),
            DegreeThreshold::Fixed { value } => value as f64,
        }
    }
}

impl Default for DegreeThreshold {
    fn default() -> Self {
        DegreeThreshold::PolyLog { exponent: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Algo2Config {
    /// The constant `C` in `k = n / (√Δ' C)`.
    pub c: u64,
    pub degree_threshold: DegreeThreshold,
    /// Rounds charged per routing-primitive call.
    pub c_l: u64,
    pub seed: u64,
    /// Halve the block instead of aborting when it would exceed `n` edges.
    pub adaptive_k_fallback: bool,
    pub max_iterations: usize,
    /// Cross-check flags and Δ' against the induced residual graph each iteration.
    pub verify_residual: bool,
    pub check_order_independence: bool,
    pub parallel_nodes: bool,
}

impl Default for Algo2Config {
    fn default() -> Self {
        Algo2Config {
            c: 5,
            degree_threshold: DegreeThreshold::default(),
            c_l: crate::engine::DEFAULT_ROUTING_COST,
            seed: 0,
            adaptive_k_fallback: true,
            max_iterations: 256,
            verify_residual: true,
            check_order_independence: false,
            parallel_nodes: false,
        }
    }
}

impl Algo2Config {
    pub fn validate(&self) -> Result<(), Algo2Error> {
        if self.c < 5 {
            return Err(Algo2Error::InvalidConfig(format!("C must be at least 5, got {}", self.c)));
        }
        match self.degree_threshold {
            DegreeThreshold::Fixed { value: 0 } => {
                Err(Algo2Error::InvalidConfig("degree threshold must be at least 1".into()))
            }
            DegreeThreshold::PolyLog { exponent } if !exponent.is_finite() || exponent < 0.0 => {
                Err(Algo2Error::InvalidConfig(format!("bad poly-log exponent {exponent}")))
            }
            _ => Ok(()),
        }
    }

    fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            c_l: self.c_l,
            check_order_independence: self.check_order_independence,
            parallel: self.parallel_nodes,
        }
    }
}

/// `⌊n / (√Δ' · C)⌋` clamped to `[1, n]`, computed exactly in integers.
pub fn compute_k(n: usize, delta_prime: usize, c: u64) -> usize {
    assert!(delta_prime >= 1, "k is only defined for a non-empty residual graph");
    let fits = |k: u128| (k * c as u128).pow(2) * delta_prime as u128 <= (n as u128).pow(2);
    let mut k = (n as f64 / ((delta_prime as f64).sqrt() * c as f64)).floor() as u128;
    while k > 0 && !fits(k) {
        k -= 1;
    }
    while fits(k + 1) {
        k += 1;
    }
    (k as usize).clamp(1, n.max(1))
}

/// `Δ^(1/2^(i-1)) · 100 · C² · ln² n`.
pub fn lemma2_bound(delta: usize, iteration: usize, c: u64, n: usize) -> f64 {
    let exponent = 0.5f64.powi(iteration as i32 - 1);
    let ln_n = (n as f64).ln();
    (delta as f64).powf(exponent) * 100.0 * (c as f64).powi(2) * ln_n * ln_n
}

/// The graph `v_1` holds after collection: uncovered block members in rank order and
/// the edges between them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    pub members: Vec<VertexId>,
    pub edges: Vec<(VertexId, VertexId)>,
}

/// Greedy over the block in rank order. Every member is uncovered with respect to
/// the independent set built so far, so only block-internal edges matter.
pub fn simulate_block(block: &Block) -> Vec<VertexId> {
    let index: HashMap<VertexId, usize> = block.members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adjacency = vec![Vec::new(); block.members.len()];
    for &(a, b) in &block.edges {
        let (ia, ib) = (index[&a], index[&b]);
        adjacency[ia].push(ib);
        adjacency[ib].push(ia);
    }
    let mut blocked = vec![false; block.members.len()];
    let mut selected = Vec::new();
    for (i, &v) in block.members.iter().enumerate() {
        if blocked[i] {
            continue;
        }
        selected.push(v);
        for &j in &adjacency[i] {
            blocked[j] = true;
        }
    }
    selected
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub i: usize,
    /// Δ_i, residual max degree at the start of the iteration.
    pub delta: usize,
    /// k from the formula before any fallback.
    pub k_requested: usize,
    /// k actually used (ranks below it are processed after the iteration).
    pub k: usize,
    pub k_prev: usize,
    pub h_vertices: usize,
    pub h_edges: usize,
    pub selected: usize,
    pub rounds: u64,
    pub fallback_retries: u32,
    pub lemma2_bound: f64,
    pub lemma2_ok: bool,
    /// The unmodified k kept the block within `n` edges.
    pub lemma3_ok: bool,
    /// Largest number of block neighbours of any residual vertex.
    pub max_block_degree: usize,
    /// `n / k`.
    pub block_degree_bound: f64,
    pub delta_after: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Algo2Stats {
    pub n: usize,
    pub edges: usize,
    /// Δ of the input graph.
    pub delta: usize,
    pub tau: f64,
    pub c: u64,
    pub c_l: u64,
    pub iterations: Vec<IterationRecord>,
    pub while_iterations: usize,
    pub rounds_order: u64,
    /// Initial degree broadcast plus every while-iteration.
    pub rounds_stage2: u64,
    pub rounds_finisher: u64,
    pub luby_rounds: u64,
    pub finisher_active_curve: Vec<usize>,
    pub fallback_retries: u64,
    pub k_final: usize,
    pub residual_vertices: usize,
    pub residual_delta: usize,
    pub stage2_selected: usize,
    pub mis_size: usize,
    pub logical_rounds: u64,
    pub max_pair_load: u32,
    pub finisher: String,
}

impl Algo2Stats {
    /// `3 + 1 + T (c_L + 4) + retries · c_L + rounds_finisher`.
    pub fn closed_form_rounds(&self) -> u64 {
        ORDER_ROUNDS
            + 1
            + self.while_iterations as u64 * (self.c_l + ITERATION_EXCHANGE_ROUNDS)
            + self.fallback_retries * self.c_l
            + self.rounds_finisher
    }

    pub fn lemma2_violations(&self) -> usize {
        self.iterations.iter().filter(|r| !r.lemma2_ok).count()
    }

    pub fn progress_violations(&self) -> usize {
        self.iterations.iter().filter(|r| r.delta_after >= r.delta).count()
    }

    pub fn write_iterations_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.iterations {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Algo2Outcome {
    pub mis: VertexSubset,
    /// Vertices selected by the block simulations (before the finisher).
    pub stage2_selected: VertexSubset,
    pub order: VertexOrder,
    pub stats: Algo2Stats,
    pub clock: SimClock,
    pub reports: Vec<RoundReport>,
}

/// Local state of one simulated node.
#[derive(Clone, Debug, PartialEq)]
pub struct MisNode {
    leader: VertexId,
    position: Option<Word>,
    positions: Option<Board>,
    first: VertexId,
    uncovered: Board,
    own_uncovered: bool,
    selected: bool,
    notified: bool,
    degrees: Option<Board>,
    delta: usize,
    k_prev: usize,
    k: usize,
    /// At `v_1` only: the latest block and its selection.
    block: Block,
    block_selection: Vec<VertexId>,
}

impl MisNode {
    fn new(n: usize) -> Self {
        MisNode {
            leader: VertexId(0),
            position: None,
            positions: None,
            first: VertexId(0),
            uncovered: Board::new(vec![1; n]),
            own_uncovered: true,
            selected: false,
            notified: false,
            degrees: None,
            delta: 0,
            k_prev: 0,
            k: 0,
            block: Block::default(),
            block_selection: Vec::new(),
        }
    }

    fn rank_of(&self, v: VertexId) -> usize {
        self.positions.as_ref().expect("order agreed").get(v) as usize
    }

    fn is_uncovered(&self, v: VertexId) -> bool {
        self.uncovered.get(v) == 1
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_uncovered_locally(&self) -> bool {
        self.own_uncovered
    }
}

/// A run in progress: the engine, the node states, and the graph they sit on.
pub struct Algo2Run<'g> {
    g: &'g Graph,
    cfg: Algo2Config,
    engine: Clique,
    nodes: Vec<MisNode>,
    forced_order: Option<VertexOrder>,
}

impl<'g> Algo2Run<'g> {
    pub fn new(g: &'g Graph, cfg: Algo2Config) -> Result<Self, Algo2Error> {
        cfg.validate()?;
        let n = g.n();
        Ok(Algo2Run {
            g,
            engine: Clique::new(n, cfg.engine_config()),
            nodes: vec![MisNode::new(n); n],
            cfg,
            forced_order: None,
        })
    }

    /// Makes the leader hand out `order` instead of drawing a uniform one.
    /// For constructing adversarial or hand-checked instances.
    pub fn with_order(mut self, order: VertexOrder) -> Self {
        assert_eq!(order.len(), self.g.n());
        self.forced_order = Some(order);
        self
    }

    pub fn engine(&self) -> &Clique {
        &self.engine
    }

    pub fn nodes(&self) -> &[MisNode] {
        &self.nodes
    }

    fn first(&self) -> VertexId {
        self.nodes.first().map(|s| s.first).unwrap_or(VertexId(0))
    }

    /// Step 1: ID exchange, the smallest ID draws `uniform_order(n, seed)` and tells
    /// every node its position, positions are broadcast. Returns the agreed order.
    pub fn agree_on_order(&mut self) -> Result<VertexOrder, Algo2Error> {
        let n = self.g.n();
        let seed = self.cfg.seed;

        self.engine.broadcast_all((0..n as Word).collect())?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            let ids = &inbox.boards[0];
            s.leader = VertexId::from(ids.iter().copied().min().unwrap_or(0) as usize);
        })?;

        let forced = self.forced_order.as_ref();
        let hand_out = move |s: &mut MisNode, ctx: &RoundCtx<'_>, out: &mut Outbox| {
            if ctx.id != s.leader {
                return;
            }
            let order = forced.cloned().unwrap_or_else(|| uniform_order(ctx.n, seed));
            for v in (0..ctx.n).map(VertexId::from) {
                let r = order.rank(v) as Word;
                if v == ctx.id {
                    s.position = Some(r);
                } else {
                    out.send(v, Message::new(Tag::Position, &[r]));
                }
            }
        };
        self.engine.run_round(&mut self.nodes, &hand_out)?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            if let Some((_, m)) = inbox.with_tag(Tag::Position).next() {
                s.position = Some(m.word(0));
            }
        })?;

        let positions = self.nodes.iter().map(|s| s.position.expect("every node got a position")).collect();
        self.engine.broadcast_all(positions)?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            let board = inbox.boards[0].clone();
            s.first = VertexId::from(board.iter().position(|&r| r == 0).unwrap_or(0));
            s.positions = Some(board);
        })?;

        let order = match self.nodes.first() {
            Some(s) => VertexOrder::from_positions(s.positions.as_ref().unwrap())
                .expect("leader hands out a permutation"),
            None => VertexOrder::identity(0),
        };
        Ok(order)
    }

    /// Every node broadcasts its residual degree; afterwards every node knows Δ'.
    fn broadcast_degrees(&mut self) -> Result<(), Algo2Error> {
        let g = self.g;
        let degrees = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let v = VertexId::from(i);
                if !s.own_uncovered {
                    return 0;
                }
                g.neighbors(v).iter().filter(|w| s.is_uncovered(**w)).count() as Word
            })
            .collect();
        self.engine.broadcast_all(degrees)?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            let board = inbox.boards[0].clone();
            s.delta = board.iter().copied().max().unwrap_or(0) as usize;
            s.degrees = Some(board);
        })?;
        Ok(())
    }

    /// Sets the block end `k` at every node.
    fn set_k(&mut self, k: usize) -> Result<(), Algo2Error> {
        self.engine.compute(&mut self.nodes, |s, _, _| s.k = k)?;
        Ok(())
    }

    /// Routes the edges of the uncovered block `[k_prev, k)` to `v_1`, each edge sent
    /// once by its higher-rank endpoint. Returns the number of routed edges.
    pub fn collect_block(&mut self) -> Result<usize, SimError> {
        let g = self.g;
        let mut sources = BTreeMap::new();
        for (i, s) in self.nodes.iter().enumerate() {
            let v = VertexId::from(i);
            let rank = s.rank_of(v);
            if !s.own_uncovered || rank >= s.k {
                continue;
            }
            debug_assert!(rank >= s.k_prev, "uncovered vertex below the processed prefix");
            let edges: Vec<Message> = g
                .neighbors(v)
                .iter()
                .filter(|&&w| s.is_uncovered(w) && s.rank_of(w) < rank)
                .map(|&w| Message::new(Tag::Edge, &[w.0 as Word, v.0 as Word]))
                .collect();
            if !edges.is_empty() {
                sources.insert(v, edges);
            }
        }
        self.engine.lenzen_route(sources, self.first())
    }

    /// `v_1` assembles the block from its inbox, replays Greedy on it and notifies the
    /// selected vertices; they notify their neighbours; neighbours drop their flag.
    /// Two engine rounds. Returns the block and `I'`.
    fn simulate_and_notify(&mut self) -> Result<(Block, Vec<VertexId>), Algo2Error> {
        let n = self.g.n();
        let at_first = move |s: &mut MisNode, ctx: &RoundCtx<'_>, out: &mut Outbox| {
            if ctx.id != s.first {
                return;
            }
            let order = VertexOrder::from_positions(s.positions.as_ref().unwrap()).expect("agreed order");
            let members: Vec<VertexId> = (s.k_prev..s.k)
                .map(|r| order.vertex_at(r))
                .filter(|&w| s.is_uncovered(w))
                .collect();
            let edges = ctx
                .inbox
                .with_tag(Tag::Edge)
                .map(|(_, m)| (VertexId(m.word(0) as u32), VertexId(m.word(1) as u32)))
                .collect();
            s.block = Block { members, edges };
            s.block_selection = simulate_block(&s.block);
            for &w in &s.block_selection {
                if w == ctx.id {
                    s.notified = true;
                } else {
                    out.send(w, Message::new(Tag::Selected, &[]));
                }
            }
        };
        self.engine.run_round(&mut self.nodes, &at_first)?;

        let g = self.g;
        let announce = move |s: &mut MisNode, ctx: &RoundCtx<'_>, out: &mut Outbox| {
            if s.notified || ctx.inbox.with_tag(Tag::Selected).next().is_some() {
                s.notified = false;
                s.selected = true;
                s.own_uncovered = false;
                for &w in g.neighbors(ctx.id) {
                    out.send(w, Message::new(Tag::NeighborSelected, &[]));
                }
            }
        };
        self.engine.run_round(&mut self.nodes, &announce)?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            if inbox.with_tag(Tag::NeighborSelected).next().is_some() {
                s.own_uncovered = false;
            }
        })?;
        debug_assert!(n == 0 || self.engine.pending() == 0);

        let first = &self.nodes[self.first().index()];
        Ok((first.block.clone(), first.block_selection.clone()))
    }

    /// Steps (d)–(f): selection notices, flag broadcast, degree broadcast. Four engine rounds.
    pub fn disseminate_and_update(&mut self) -> Result<(Block, Vec<VertexId>), Algo2Error> {
        let out = self.simulate_and_notify()?;
        let flags = self.nodes.iter().map(|s| Word::from(s.own_uncovered)).collect();
        self.engine.broadcast_all(flags)?;
        self.engine.compute(&mut self.nodes, |s, _, inbox| {
            s.uncovered = inbox.boards[0].clone();
            s.k_prev = s.k;
        })?;
        self.broadcast_degrees()?;
        Ok(out)
    }

    /// Ground-truth uncovered set `V \ Γ[I]` for the current selections.
    fn true_uncovered(&self) -> VertexSubset {
        let n = self.g.n();
        let selected = VertexSubset::from_vertices(n, (0..n).filter(|&i| self.nodes[i].selected));
        let mut u = VertexSubset::full(n);
        for v in self.g.closed_neighborhood(&selected).iter() {
            u.remove(v);
        }
        u
    }

    fn check_residual(&self, iteration: usize) -> Result<(), Algo2Error> {
        let truth = self.true_uncovered();
        for (i, s) in self.nodes.iter().enumerate() {
            let v = VertexId::from(i);
            if s.own_uncovered != truth.contains(v) {
                return Err(Algo2Error::ResidualMismatch {
                    iteration,
                    detail: format!("flag of vertex {v}"),
                });
            }
            if s.delta != self.nodes[0].delta || s.uncovered != self.nodes[0].uncovered {
                return Err(Algo2Error::ResidualMismatch {
                    iteration,
                    detail: format!("vertex {v} disagrees on the residual graph"),
                });
            }
        }
        let truth_delta = self.g.induced_subgraph(&truth).graph.max_degree();
        if self.nodes.first().map(|s| s.delta).unwrap_or(0) != truth_delta {
            return Err(Algo2Error::ResidualMismatch {
                iteration,
                detail: format!("broadcast Δ' = {}, true Δ' = {truth_delta}", self.nodes[0].delta),
            });
        }
        Ok(())
    }

    /// max over residual vertices of the number of neighbours in the new block.
    fn max_block_degree(&self, k_prev: usize, k: usize, order: &VertexOrder) -> usize {
        let s = &self.nodes[0];
        let mut count: HashMap<VertexId, usize> = HashMap::new();
        for r in k_prev..k {
            let v = order.vertex_at(r);
            if !s.is_uncovered(v) {
                continue;
            }
            for &w in self.g.neighbors(v) {
                if s.is_uncovered(w) {
                    *count.entry(w).or_default() += 1;
                }
            }
        }
        count.values().copied().max().unwrap_or(0)
    }

    /// Orchestrates the whole algorithm and verifies the output.
    pub fn run(mut self) -> Result<Algo2Outcome, Algo2Error> {
        let g = self.g;
        let n = g.n();
        let tau = self.cfg.degree_threshold.evaluate(n);
        let c = self.cfg.c;
        let mut stats = Algo2Stats {
            n,
            edges: g.edge_count(),
            delta: g.max_degree(),
            tau,
            c,
            c_l: self.cfg.c_l,
            finisher: "luby".into(),
            ..Default::default()
        };

        let order = self.agree_on_order()?;
        stats.rounds_order = self.engine.clock().logical_rounds;
        debug_assert_eq!(stats.rounds_order, ORDER_ROUNDS);

        self.broadcast_degrees()?;
        if self.cfg.verify_residual {
            self.check_residual(0)?;
        }

        let mut iteration = 0;
        while n > 0 && self.nodes[0].delta as f64 > tau {
            iteration += 1;
            if iteration > self.cfg.max_iterations {
                return Err(Algo2Error::SafetyCapExceeded { cap: self.cfg.max_iterations });
            }
            let start = self.engine.clock().logical_rounds;
            let delta = self.nodes[0].delta;
            let k_prev = self.nodes[0].k_prev;
            let k_requested = compute_k(n, delta, c).max(k_prev + 1).min(n);
            let mut k = k_requested;
            self.set_k(k)?;
            let max_block_degree = self.max_block_degree(k_prev, k, &order);

            let mut retries = 0u32;
            let h_edges = loop {
                match self.collect_block() {
                    Ok(count) => break count,
                    Err(SimError::RoutingPreconditionViolation { total, capacity }) => {
                        if !self.cfg.adaptive_k_fallback || k - k_prev <= 1 {
                            return Err(Algo2Error::Routing { iteration, total, capacity });
                        }
                        retries += 1;
                        k = k_prev + ((k - k_prev) / 2).max(1);
                        self.set_k(k)?;
                    }
                    Err(e) => return Err(e.into()),
                }
            };

            let (block, selection) = self.disseminate_and_update()?;
            if self.cfg.verify_residual {
                self.check_residual(iteration)?;
            }

            let bound = lemma2_bound(stats.delta, iteration, c, n);
            stats.iterations.push(IterationRecord {
                i: iteration,
                delta,
                k_requested,
                k,
                k_prev,
                h_vertices: block.members.len(),
                h_edges,
                selected: selection.len(),
                rounds: self.engine.clock().logical_rounds - start,
                fallback_retries: retries,
                lemma2_bound: bound,
                lemma2_ok: delta as f64 <= bound,
                lemma3_ok: retries == 0,
                max_block_degree,
                block_degree_bound: n as f64 / k_requested as f64,
                delta_after: self.nodes[0].delta,
            });
            stats.fallback_retries += u64::from(retries);
            stats.k_final = k;
        }
        stats.while_iterations = iteration;
        stats.rounds_stage2 = self.engine.clock().logical_rounds - stats.rounds_order;

        let stage2_selected =
            VertexSubset::from_vertices(n, (0..n).filter(|&i| self.nodes[i].selected));
        let residual = VertexSubset::from_vertices(n, (0..n).filter(|&i| self.nodes[i].own_uncovered));
        stats.stage2_selected = stage2_selected.len();
        stats.residual_vertices = residual.len();
        stats.residual_delta = self.nodes.first().map(|s| s.delta).unwrap_or(0);

        // each residual vertex builds its finisher state from its own adjacency and the flags
        let mut luby_nodes: Vec<LubyNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !s.own_uncovered {
                    return LubyNode::inactive();
                }
                let v = VertexId::from(i);
                LubyNode::active(g.neighbors(v).iter().copied().filter(|w| s.is_uncovered(*w)).collect())
            })
            .collect();
        let priorities = SeededPriorities::new(n, luby::mix(self.cfg.seed ^ 0x4C55_4259));
        let FinisherOutcome { mis: finisher_mis, luby_rounds, rounds, active_curve } =
            luby::run_finisher(&mut self.engine, &mut luby_nodes, &priorities)?;
        stats.rounds_finisher = rounds;
        stats.luby_rounds = luby_rounds;
        stats.finisher_active_curve = active_curve;

        let mut mis = stage2_selected.clone();
        for v in finisher_mis {
            mis.insert(v);
        }
        verify_mis(g, &mis).map_err(Algo2Error::InvalidOutput)?;
        stats.mis_size = mis.len();

        let clock = self.engine.clock();
        stats.logical_rounds = clock.logical_rounds;
        let reports = self.engine.into_reports();
        stats.max_pair_load = reports.iter().map(|r| r.max_pair_load).max().unwrap_or(0);

        Ok(Algo2Outcome { mis, stage2_selected, order, stats, clock, reports })
    }
}

pub fn run_algorithm2(g: &Graph, cfg: &Algo2Config) -> Result<Algo2Outcome, Algo2Error> {
    Algo2Run::new(g, cfg.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gnp_random;
    use crate::greedy::greedy_mis;

    fn cfg(tau: u64, seed: u64) -> Algo2Config {
        Algo2Config { degree_threshold: DegreeThreshold::Fixed { value: tau }, seed, ..Default::default() }
    }

    #[test]
    fn compute_k_examples() {
        assert_eq!(compute_k(10_000, 10_000, 5), 20);
        assert_eq!(compute_k(100, 100, 5), 2);
        assert_eq!(compute_k(16, 16, 5), 1);
        assert_eq!(compute_k(10, 1, 5), 2);
        assert_eq!(compute_k(3, 1, 5), 1);
    }

    #[test]
    fn compute_k_matches_real_formula() {
        for n in [7usize, 100, 999, 4096] {
            for d in 1..200usize {
                let raw = n as f64 / ((d as f64).sqrt() * 5.0);
                let expected = (raw.floor() as usize).clamp(1, n);
                let got = compute_k(n, d, 5);
                // only exact integer boundaries may differ from the float evaluation
                assert!(got == expected || (raw - raw.round()).abs() < 1e-9, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(Algo2Config { c: 4, ..Default::default() }.validate().is_err());
        assert!(cfg(0, 0).validate().is_err());
        assert!(cfg(1, 0).validate().is_ok());
        let g = Graph::edgeless(3);
        assert!(matches!(run_algorithm2(&g, &Algo2Config { c: 3, ..Default::default() }), Err(Algo2Error::InvalidConfig(_))));
    }

    #[test]
    fn agreed_order_is_the_leaders_draw() {
        for n in [1usize, 4, 37] {
            let g = Graph::edgeless(n);
            let mut run = Algo2Run::new(&g, cfg(64, 1)).unwrap();
            let order = run.agree_on_order().unwrap();
            assert_eq!(order, uniform_order(n, 1));
            assert_eq!(run.engine().clock().logical_rounds, ORDER_ROUNDS);
            let tables: Vec<_> = run.nodes().iter().map(|s| s.positions.clone()).collect();
            assert!(tables.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn collect_block_on_path() {
        // P4 with the identity order and k = 3: H is the path 0-1-2, delivered only at v_1 = 0
        let g = Graph::path(4);
        let mut run = Algo2Run::new(&g, cfg(1, 0)).unwrap().with_order(VertexOrder::identity(4));
        run.agree_on_order().unwrap();
        run.set_k(3).unwrap();
        let routed = run.collect_block().unwrap();
        assert_eq!(routed, 2);
        let mut edges_at = vec![Vec::new(); 4];
        run.engine
            .compute(&mut edges_at, |e, _, inbox| {
                *e = inbox.with_tag(Tag::Edge).map(|(_, m)| (m.word(0), m.word(1))).collect();
            })
            .unwrap();
        assert_eq!(edges_at[0], vec![(0, 1), (1, 2)]);
        assert!(edges_at[1..].iter().all(Vec::is_empty));
    }

    #[test]
    fn collect_block_single_vertex_and_covered_prefix() {
        let g = Graph::complete(5);
        let mut run = Algo2Run::new(&g, cfg(1, 2)).unwrap();
        run.agree_on_order().unwrap();
        for s in &mut run.nodes {
            s.k = 1;
        }
        assert_eq!(run.collect_block().unwrap(), 0);
        for s in &mut run.nodes {
            s.uncovered = Board::new(vec![0; 5]);
            s.own_uncovered = false;
            s.k = 5;
        }
        assert_eq!(run.collect_block().unwrap(), 0);
    }

    #[test]
    fn simulate_block_examples() {
        assert!(simulate_block(&Block::default()).is_empty());
        let b = Block { members: vec![VertexId(4), VertexId(2)], edges: vec![] };
        assert_eq!(simulate_block(&b), vec![VertexId(4), VertexId(2)]);
        let b = Block {
            members: vec![VertexId(3), VertexId(1), VertexId(0)],
            edges: vec![(VertexId(3), VertexId(1)), (VertexId(1), VertexId(0))],
        };
        assert_eq!(simulate_block(&b), vec![VertexId(3), VertexId(0)]);
    }

    #[test]
    fn dissemination_with_empty_and_full_selection() {
        // nothing uncovered in the block: flags stay, four rounds are still charged
        let g = Graph::path(3);
        let mut run = Algo2Run::new(&g, cfg(1, 0)).unwrap();
        run.agree_on_order().unwrap();
        run.broadcast_degrees().unwrap();
        let before = run.engine().clock().logical_rounds;
        let (_, sel) = run.disseminate_and_update().unwrap();
        assert!(sel.is_empty());
        assert_eq!(run.engine().clock().logical_rounds - before, 4);
        assert!(run.nodes().iter().all(|s| s.own_uncovered));

        // K4 with v_1 selected covers everything
        let g = Graph::complete(4);
        let mut run = Algo2Run::new(&g, cfg(1, 0)).unwrap();
        run.agree_on_order().unwrap();
        run.broadcast_degrees().unwrap();
        run.set_k(1).unwrap();
        run.collect_block().unwrap();
        let (_, sel) = run.disseminate_and_update().unwrap();
        assert_eq!(sel.len(), 1);
        assert!(run.nodes().iter().all(|s| !s.own_uncovered));
        assert_eq!(run.nodes()[0].delta, 0);
    }

    #[test]
    fn edgeless_graph_skips_the_loop() {
        let g = Graph::edgeless(10);
        let out = run_algorithm2(&g, &Algo2Config::default()).unwrap();
        assert_eq!(out.mis.len(), 10);
        assert_eq!(out.stats.while_iterations, 0);
        assert_eq!(out.stats.rounds_finisher, 0);
        assert_eq!(out.clock.logical_rounds, ORDER_ROUNDS + 1);
    }

    #[test]
    fn complete_graph_gives_one_vertex() {
        for tau in [1, 64] {
            let out = run_algorithm2(&Graph::complete(12), &cfg(tau, 5)).unwrap();
            assert_eq!(out.mis.len(), 1);
        }
    }

    #[test]
    fn block_selections_replay_greedy_exactly() {
        for seed in 0..10 {
            let g = gnp_random(300, 0.15, seed).unwrap();
            let out = run_algorithm2(&g, &cfg(8, seed)).unwrap();
            let trace = greedy_mis(&g, &out.order);
            assert_eq!(out.stage2_selected, trace.chosen_within(out.stats.k_final), "seed {seed}");
            assert_eq!(out.stats.closed_form_rounds(), out.clock.logical_rounds);
            let clock = out.clock;
            assert_eq!(clock.logical_rounds, clock.engine_rounds + clock.c_l * clock.primitive_invocations);
        }
    }

    #[test]
    fn order_independence_mode_passes() {
        let g = gnp_random(60, 0.2, 3).unwrap();
        let c = Algo2Config { check_order_independence: true, parallel_nodes: true, ..cfg(2, 3) };
        let a = run_algorithm2(&g, &c).unwrap();
        let b = run_algorithm2(&g, &cfg(2, 3)).unwrap();
        assert_eq!(a.mis, b.mis);
        assert_eq!(a.reports, b.reports);
    }

    /// K_144 plus isolated vertices, n = 8000, with the clique first in the order:
    /// Δ = 143 and k = ⌊8000 / (√143 · 5)⌋ = 133, so the first block has
    /// 133·132/2 = 8778 > n edges. Halving gives k = 66 and 2145 edges.
    fn dense_prefix_instance() -> (Graph, VertexOrder) {
        let n = 8000;
        let edges = (0..144).flat_map(|u| (u + 1..144).map(move |v| (u, v)));
        (Graph::from_edges(n, edges).unwrap(), VertexOrder::identity(n))
    }

    #[test]
    fn fallback_halves_the_block_and_charges_each_attempt() {
        let (g, order) = dense_prefix_instance();
        assert_eq!(compute_k(g.n(), 143, 5), 133);
        let out = Algo2Run::new(&g, cfg(64, 0)).unwrap().with_order(order).run().unwrap();
        let first = &out.stats.iterations[0];
        assert_eq!((first.k_requested, first.k, first.fallback_retries), (133, 66, 1));
        assert_eq!(first.h_edges, 66 * 65 / 2);
        assert!(!first.lemma3_ok);
        assert_eq!(first.rounds, 2 * out.stats.c_l + 4);
        assert_eq!(out.stats.closed_form_rounds(), out.clock.logical_rounds);
        assert_eq!(out.mis.len(), 8000 - 143);
    }

    #[test]
    fn fallback_off_aborts_with_iteration() {
        let (g, order) = dense_prefix_instance();
        let c = Algo2Config { adaptive_k_fallback: false, ..cfg(64, 0) };
        let err = Algo2Run::new(&g, c).unwrap().with_order(order).run().unwrap_err();
        assert!(matches!(err, Algo2Error::Routing { iteration: 1, total: 8778, capacity: 8000 }), "{err}");
    }

    #[test]
    fn whole_clique_block_violates_routing_capacity() {
        let g = Graph::complete(12);
        let mut run = Algo2Run::new(&g, cfg(1, 0)).unwrap();
        run.agree_on_order().unwrap();
        run.broadcast_degrees().unwrap();
        run.set_k(12).unwrap();
        assert!(matches!(
            run.collect_block(),
            Err(SimError::RoutingPreconditionViolation { total: 66, capacity: 12 })
        ));
    }

    #[test]
    fn stats_export() {
        let g = gnp_random(200, 0.2, 1).unwrap();
        let out = run_algorithm2(&g, &cfg(4, 1)).unwrap();
        let mut buf = Vec::new();
        out.stats.write_iterations_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,delta,k_requested,k,k_prev,h_vertices,h_edges"));
        assert_eq!(text.lines().count(), out.stats.while_iterations + 1);
        let json = serde_json::to_string(&out.stats).unwrap();
        let back: Algo2Stats = serde_json::from_str(&json).unwrap();
        assert_eq!(back.iterations, out.stats.iterations);
    }
}
