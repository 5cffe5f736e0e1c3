//! Synchronous round engine for the congested clique.
//!
//! Every ordered pair of the `n` nodes may carry one message per round, and a
//! message is a small tag plus at most [`MAX_WORDS`] integers, each below `n²`.
//! The engine audits both limits on every round it runs. Messages sent in a
//! round become readable only in the next round (or in a [`Clique::compute`]
//! step, which is the local computation phase of the following round).
//!
//! Two collective operations are built in:
//! - [`Clique::broadcast_all`]: every node sends one word to every other node.
//!   Delivered as a shared read-only [`Board`] instead of `n(n-1)` message copies.
//! - [`Clique::lenzen_route`]: the many-to-one routing primitive. It is charged a
//!   configurable constant `c_L` rounds and only checks its precondition
//!   (at most `n` messages in total).

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Deref;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::graph::VertexId;

pub type Word = u64;

/// Maximum number of integers in one message payload.
pub const MAX_WORDS: usize = 3;

/// Default round cost charged per routing-primitive call.
pub const DEFAULT_ROUTING_COST: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("round {round}: node {from} sent more than one message to node {to}")]
    CongestionViolation { round: u64, from: VertexId, to: VertexId },
    #[error("round {round}: message from node {from} exceeds the word budget ({detail})")]
    WordSizeViolation { round: u64, from: VertexId, detail: String },
    #[error("routing precondition violated: {total} messages for a clique of {capacity} nodes")]
    RoutingPreconditionViolation { total: usize, capacity: usize },
    #[error("round {round}: node {from} addressed nonexistent node {to}")]
    UnknownDestination { round: u64, from: VertexId, to: VertexId },
    #[error("expected {expected} node states, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },
    #[error("round {round}: outcome at node {vertex} depends on the node update order")]
    OrderDependence { round: u64, vertex: VertexId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Id,
    Position,
    Degree,
    Uncovered,
    Edge,
    Selected,
    NeighborSelected,
    Priority,
    Join,
    Data,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub tag: Tag,
    pub words: SmallVec<[Word; MAX_WORDS]>,
}

impl Message {
    pub fn new(tag: Tag, words: &[Word]) -> Self {
        Message { tag, words: SmallVec::from_slice(words) }
    }

    #[inline]
    pub fn word(&self, i: usize) -> Word {
        self.words[i]
    }
}

/// `n²`, the exclusive upper limit on every payload integer.
#[inline]
pub fn word_limit(n: usize) -> u128 {
    (n as u128) * (n as u128)
}

fn audit_payload(n: usize, round: u64, from: VertexId, msg: &Message) -> Result<(), SimError> {
    if msg.words.len() > MAX_WORDS {
        return Err(SimError::WordSizeViolation {
            round,
            from,
            detail: format!("{} words, at most {MAX_WORDS} allowed", msg.words.len()),
        });
    }
    audit_words(n, round, from, &msg.words)
}

fn audit_words(n: usize, round: u64, from: VertexId, words: &[Word]) -> Result<(), SimError> {
    let limit = word_limit(n);
    match words.iter().find(|&&w| w as u128 >= limit) {
        Some(w) => Err(SimError::WordSizeViolation {
            round,
            from,
            detail: format!("value {w} >= n^2 = {limit}"),
        }),
        None => Ok(()),
    }
}

/// One word per node, as received by everyone after [`Clique::broadcast_all`].
/// Indexed by sender.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Board(Arc<[Word]>);

impl Board {
    pub fn new(values: Vec<Word>) -> Self {
        Board(values.into())
    }

    pub fn get(&self, v: VertexId) -> Word {
        self.0[v.index()]
    }
}

impl Deref for Board {
    type Target = [Word];

    fn deref(&self) -> &[Word] {
        &self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Inbox {
    pub messages: Vec<(VertexId, Message)>,
    pub boards: Vec<Board>,
}

impl Inbox {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty() && self.boards.is_empty()
    }

    pub fn with_tag(&self, tag: Tag) -> impl Iterator<Item = (VertexId, &Message)> + '_ {
        self.messages.iter().filter(move |(_, m)| m.tag == tag).map(|(s, m)| (*s, m))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outbox {
    sends: Vec<(VertexId, Message)>,
}

impl Outbox {
    pub fn send(&mut self, to: VertexId, msg: Message) {
        self.sends.push((to, msg));
    }

    pub fn len(&self) -> usize {
        self.sends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty()
    }
}

/// What a node sees during one round.
pub struct RoundCtx<'a> {
    pub id: VertexId,
    pub n: usize,
    pub round: u64,
    pub inbox: &'a Inbox,
}

/// Behaviour of a node for one round: read the inbox, update local state,
/// emit at most one message per destination.
pub trait NodeProgram<S> {
    fn step(&self, state: &mut S, ctx: &RoundCtx<'_>, out: &mut Outbox);
}

impl<S, F> NodeProgram<S> for F
where
    F: Fn(&mut S, &RoundCtx<'_>, &mut Outbox),
{
    fn step(&self, state: &mut S, ctx: &RoundCtx<'_>, out: &mut Outbox) {
        self(state, ctx, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Exchange,
    Broadcast,
    Routing,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    /// Logical round counter when this step started.
    pub round_index: u64,
    pub kind: RoundKind,
    pub messages_sent: u64,
    pub max_pair_load: u32,
    pub primitive_invocations: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub logical_rounds: u64,
    /// Exchange and broadcast rounds.
    pub engine_rounds: u64,
    pub primitive_invocations: u64,
    pub c_l: u64,
}

impl SimClock {
    fn new(c_l: u64) -> Self {
        SimClock { logical_rounds: 0, engine_rounds: 0, primitive_invocations: 0, c_l }
    }

    fn tick(&mut self) {
        self.logical_rounds += 1;
        self.engine_rounds += 1;
    }

    fn charge_primitive(&mut self) {
        self.logical_rounds += self.c_l;
        self.primitive_invocations += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub c_l: u64,
    /// Re-run every exchange round with the reverse node order and compare.
    pub check_order_independence: bool,
    /// Step nodes of a round on the rayon pool.
    pub parallel: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { c_l: DEFAULT_ROUTING_COST, check_order_independence: false, parallel: false }
    }
}

pub struct Clique {
    n: usize,
    config: EngineConfig,
    clock: SimClock,
    inboxes: Vec<Inbox>,
    reports: Vec<RoundReport>,
}

impl Clique {
    pub fn new(n: usize, config: EngineConfig) -> Self {
        Clique {
            n,
            config,
            clock: SimClock::new(config.c_l),
            inboxes: vec![Inbox::default(); n],
            reports: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn reports(&self) -> &[RoundReport] {
        &self.reports
    }

    pub fn into_reports(self) -> Vec<RoundReport> {
        self.reports
    }

    /// Number of undelivered-to-program messages and boards across all nodes.
    pub fn pending(&self) -> usize {
        self.inboxes.iter().map(|i| i.messages.len() + i.boards.len()).sum()
    }

    fn check_len<S>(&self, nodes: &[S]) -> Result<(), SimError> {
        if nodes.len() != self.n {
            return Err(SimError::NodeCountMismatch { expected: self.n, got: nodes.len() });
        }
        Ok(())
    }

    /// One synchronous round: every node consumes its inbox and fills an outbox;
    /// outboxes are audited and delivered for the next round.
    pub fn run_round<S, P>(&mut self, nodes: &mut [S], program: &P) -> Result<RoundReport, SimError>
    where
        S: Clone + PartialEq + Send,
        P: NodeProgram<S> + Sync,
    {
        self.check_len(nodes)?;
        let n = self.n;
        let round = self.clock.logical_rounds;
        let inboxes = std::mem::replace(&mut self.inboxes, vec![Inbox::default(); n]);

        let shadow = self
            .config
            .check_order_independence
            .then(|| (nodes.to_vec(), inboxes.clone()));

        let step = |i: usize, state: &mut S, inbox: &Inbox| {
            let mut out = Outbox::default();
            let ctx = RoundCtx { id: VertexId::from(i), n, round, inbox };
            program.step(state, &ctx, &mut out);
            out
        };

        let outboxes: Vec<Outbox> = if self.config.parallel {
            nodes
                .par_iter_mut()
                .zip(inboxes.par_iter())
                .enumerate()
                .map(|(i, (s, inbox))| step(i, s, inbox))
                .collect()
        } else {
            nodes
                .iter_mut()
                .zip(&inboxes)
                .enumerate()
                .map(|(i, (s, inbox))| step(i, s, inbox))
                .collect()
        };

        if let Some((mut shadow_nodes, shadow_inboxes)) = shadow {
            let mut shadow_out = vec![Outbox::default(); n];
            for i in (0..n).rev() {
                shadow_out[i] = step(i, &mut shadow_nodes[i], &shadow_inboxes[i]);
            }
            for i in 0..n {
                if shadow_nodes[i] != nodes[i] || shadow_out[i] != outboxes[i] {
                    return Err(SimError::OrderDependence { round, vertex: VertexId::from(i) });
                }
            }
        }

        let mut last_sender = vec![u32::MAX; n];
        let mut messages_sent = 0u64;
        for (from, out) in outboxes.iter().enumerate() {
            let from_id = VertexId::from(from);
            for (to, msg) in &out.sends {
                if to.index() >= n {
                    return Err(SimError::UnknownDestination { round, from: from_id, to: *to });
                }
                if last_sender[to.index()] == from as u32 {
                    return Err(SimError::CongestionViolation { round, from: from_id, to: *to });
                }
                last_sender[to.index()] = from as u32;
                audit_payload(n, round, from_id, msg)?;
                messages_sent += 1;
            }
        }
        for (from, out) in outboxes.into_iter().enumerate() {
            for (to, msg) in out.sends {
                self.inboxes[to.index()].messages.push((VertexId::from(from), msg));
            }
        }

        self.clock.tick();
        let report = RoundReport {
            round_index: round,
            kind: RoundKind::Exchange,
            messages_sent,
            max_pair_load: u32::from(messages_sent > 0),
            primitive_invocations: 0,
        };
        self.reports.push(report.clone());
        Ok(report)
    }

    /// Local computation over the delivered inboxes. Costs no rounds and sends nothing.
    pub fn compute<S, F>(&mut self, nodes: &mut [S], f: F) -> Result<(), SimError>
    where
        F: Fn(&mut S, VertexId, &Inbox),
    {
        self.check_len(nodes)?;
        for (i, (state, inbox)) in nodes.iter_mut().zip(self.inboxes.iter_mut()).enumerate() {
            f(state, VertexId::from(i), inbox);
            *inbox = Inbox::default();
        }
        Ok(())
    }

    /// Every node sends its single word to every other node (one round).
    pub fn broadcast_all(&mut self, values: Vec<Word>) -> Result<RoundReport, SimError> {
        self.check_len(&values)?;
        let n = self.n;
        let round = self.clock.logical_rounds;
        if n > 1 {
            for (i, &v) in values.iter().enumerate() {
                audit_words(n, round, VertexId::from(i), &[v])?;
            }
        }
        let board = Board::new(values);
        for inbox in &mut self.inboxes {
            inbox.boards.push(board.clone());
        }
        self.clock.tick();
        let pairs = (n as u64) * (n.saturating_sub(1) as u64);
        let report = RoundReport {
            round_index: round,
            kind: RoundKind::Broadcast,
            messages_sent: pairs,
            max_pair_load: u32::from(pairs > 0),
            primitive_invocations: 0,
        };
        self.reports.push(report.clone());
        Ok(report)
    }

    /// Many-to-one routing of at most `n` messages in total to `dest`.
    ///
    /// The call is charged `c_L` rounds whether or not the precondition holds.
    /// Returns the number of delivered messages.
    pub fn lenzen_route(
        &mut self,
        sources: BTreeMap<VertexId, Vec<Message>>,
        dest: VertexId,
    ) -> Result<usize, SimError> {
        let n = self.n;
        let round = self.clock.logical_rounds;
        self.clock.charge_primitive();
        let total: usize = sources.values().map(Vec::len).sum();
        let mut report = RoundReport {
            round_index: round,
            kind: RoundKind::Routing,
            messages_sent: 0,
            max_pair_load: 0,
            primitive_invocations: 1,
        };
        if total > n {
            self.reports.push(report);
            return Err(SimError::RoutingPreconditionViolation { total, capacity: n });
        }
        for (&from, msgs) in &sources {
            if from.index() >= n {
                self.reports.push(report);
                return Err(SimError::UnknownDestination { round, from, to: from });
            }
            for m in msgs {
                if let Err(e) = audit_payload(n, round, from, m) {
                    self.reports.push(report);
                    return Err(e);
                }
            }
        }
        if dest.index() >= n {
            self.reports.push(report);
            return Err(SimError::UnknownDestination { round, from: dest, to: dest });
        }
        let inbox = &mut self.inboxes[dest.index()];
        for (from, msgs) in sources {
            inbox.messages.extend(msgs.into_iter().map(|m| (from, m)));
        }
        report.messages_sent = total as u64;
        self.reports.push(report);
        Ok(total)
    }
}

/// Writes one JSON object per line.
pub fn write_reports_jsonl<W: Write>(reports: &[RoundReport], mut out: W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Default, PartialEq, Debug)]
    struct Log {
        got: Vec<(VertexId, Word)>,
    }

    fn clique(n: usize) -> Clique {
        Clique::new(n, EngineConfig::default())
    }

    fn data(w: Word) -> Message {
        Message::new(Tag::Data, &[w])
    }

    #[test]
    fn silent_round() {
        let mut c = clique(4);
        let mut nodes = vec![Log::default(); 4];
        let r = c.run_round(&mut nodes, &|_: &mut Log, _: &RoundCtx<'_>, _: &mut Outbox| {}).unwrap();
        assert_eq!((r.messages_sent, r.max_pair_load), (0, 0));
        assert_eq!(c.clock().logical_rounds, 1);
    }

    #[test]
    fn one_to_all() {
        let n = 6;
        let mut c = clique(n);
        let mut nodes = vec![Log::default(); n];
        let r = c
            .run_round(&mut nodes, &|_: &mut Log, ctx: &RoundCtx<'_>, out: &mut Outbox| {
                if ctx.id.0 == 0 {
                    for v in 1..ctx.n {
                        out.send(VertexId::from(v), data(7));
                    }
                }
            })
            .unwrap();
        assert_eq!((r.messages_sent, r.max_pair_load), (n as u64 - 1, 1));
        c.compute(&mut nodes, |s, _, inbox| {
            s.got = inbox.messages.iter().map(|(f, m)| (*f, m.word(0))).collect();
        })
        .unwrap();
        assert!(nodes[0].got.is_empty());
        assert!(nodes[1..].iter().all(|s| s.got == vec![(VertexId(0), 7)]));
    }

    #[test]
    fn double_send_is_congestion() {
        let mut c = clique(3);
        let mut nodes = vec![Log::default(); 3];
        let err = c
            .run_round(&mut nodes, &|_: &mut Log, ctx: &RoundCtx<'_>, out: &mut Outbox| {
                if ctx.id.0 == 0 {
                    out.send(VertexId(1), data(1));
                    out.send(VertexId(1), data(2));
                }
            })
            .unwrap_err();
        assert_eq!(err, SimError::CongestionViolation { round: 0, from: VertexId(0), to: VertexId(1) });
    }

    #[test]
    fn word_budget_enforced() {
        // n = 4: integers must be < 16
        let mut c = clique(4);
        let mut nodes = vec![Log::default(); 4];
        let ok = |w: Word| move |_: &mut Log, ctx: &RoundCtx<'_>, out: &mut Outbox| {
            if ctx.id.0 == 0 {
                out.send(VertexId(1), data(w));
            }
        };
        assert!(c.run_round(&mut nodes, &ok(15)).is_ok());
        assert!(matches!(c.run_round(&mut nodes, &ok(16)), Err(SimError::WordSizeViolation { .. })));
        let four_words = |_: &mut Log, ctx: &RoundCtx<'_>, out: &mut Outbox| {
            if ctx.id.0 == 0 {
                out.send(VertexId(1), Message::new(Tag::Data, &[1, 2, 3, 4]));
            }
        };
        assert!(matches!(c.run_round(&mut nodes, &four_words), Err(SimError::WordSizeViolation { .. })));
    }

    #[test]
    fn lenzen_capacity_boundary() {
        let n = 5;
        let mut c = clique(n);
        let mut sources = BTreeMap::new();
        sources.insert(VertexId(1), vec![data(1), data(0)]);
        for v in 2..n {
            sources.insert(VertexId::from(v), vec![data(v as Word)]);
        }
        assert_eq!(c.lenzen_route(sources, VertexId(0)).unwrap(), n);
        assert_eq!(c.clock().logical_rounds, DEFAULT_ROUTING_COST);
        assert_eq!(c.pending(), n);

        let mut too_many = BTreeMap::new();
        too_many.insert(VertexId(2), (0..=n as Word).map(data).collect::<Vec<_>>());
        assert_eq!(
            c.lenzen_route(too_many, VertexId(0)).unwrap_err(),
            SimError::RoutingPreconditionViolation { total: n + 1, capacity: n }
        );
        assert_eq!(c.clock().logical_rounds, 2 * DEFAULT_ROUTING_COST);

        assert_eq!(c.lenzen_route(BTreeMap::new(), VertexId(0)).unwrap(), 0);
        let clock = c.clock();
        assert_eq!(clock.logical_rounds, 3 * DEFAULT_ROUTING_COST);
        assert_eq!(clock.primitive_invocations, 3);
    }

    #[test]
    fn broadcast_examples() {
        let mut c = clique(3);
        let r = c.broadcast_all(vec![5, 7, 8]).unwrap();
        assert_eq!((r.messages_sent, r.max_pair_load), (6, 1));
        let mut nodes = vec![Log::default(); 3];
        c.compute(&mut nodes, |s, _, inbox| {
            s.got = inbox.boards[0].iter().enumerate().map(|(i, &w)| (VertexId::from(i), w)).collect();
        })
        .unwrap();
        for s in &nodes {
            assert_eq!(s.got, vec![(VertexId(0), 5), (VertexId(1), 7), (VertexId(2), 8)]);
        }
        // 9 = n^2 is outside the budget
        assert!(matches!(c.broadcast_all(vec![5, 7, 9]), Err(SimError::WordSizeViolation { .. })));

        let mut single = clique(1);
        let r = single.broadcast_all(vec![0]).unwrap();
        assert_eq!(r.messages_sent, 0);
        assert_eq!(single.clock().logical_rounds, 1);
    }

    #[test]
    fn clock_invariant_and_determinism() {
        let run = || {
            let mut c = Clique::new(8, EngineConfig { c_l: 3, check_order_independence: true, parallel: true });
            let mut nodes = vec![Log::default(); 8];
            let ring = |s: &mut Log, ctx: &RoundCtx<'_>, out: &mut Outbox| {
                s.got.extend(ctx.inbox.messages.iter().map(|(f, m)| (*f, m.word(0))));
                out.send(VertexId::from((ctx.id.index() + 1) % ctx.n), data(ctx.round));
            };
            for _ in 0..4 {
                c.run_round(&mut nodes, &ring).unwrap();
                c.broadcast_all((0..8).collect()).unwrap();
                c.lenzen_route(BTreeMap::new(), VertexId(0)).unwrap();
            }
            let clock = c.clock();
            assert_eq!(clock.logical_rounds, clock.engine_rounds + clock.c_l * clock.primitive_invocations);
            (c.into_reports(), nodes)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn order_dependence_is_detected() {
        use std::sync::atomic::{AtomicU64, Ordering};
        let counter = AtomicU64::new(0);
        let mut c = Clique::new(3, EngineConfig { check_order_independence: true, ..Default::default() });
        let mut nodes = vec![0u64; 3];
        let leaky = |s: &mut u64, _: &RoundCtx<'_>, _: &mut Outbox| {
            *s = counter.fetch_add(1, Ordering::SeqCst);
        };
        assert!(matches!(c.run_round(&mut nodes, &leaky), Err(SimError::OrderDependence { .. })));
    }

    #[test]
    fn reports_serialize_as_json_lines() {
        let mut c = clique(2);
        c.broadcast_all(vec![1, 2]).unwrap();
        c.lenzen_route(BTreeMap::new(), VertexId(1)).unwrap();
        let mut buf = Vec::new();
        write_reports_jsonl(c.reports(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let back: RoundReport = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(back.kind, RoundKind::Routing);
        assert_eq!(back.round_index, 1);
    }
}
