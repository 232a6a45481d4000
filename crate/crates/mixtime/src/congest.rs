//! Synchronous round engine with per-edge bandwidth accounting, plus the
//! tree primitives built on it: BFS construction by flooding, pipelined
//! broadcast, and exact-sum convergecast.
//!
//! Messages sent in round `r` are delivered at the end of `r` and readable
//! only in round `r + 1`; the engine hands each round's inboxes back to the
//! caller, so delivery is exactly-once by construction.

use crate::graph::Graph;
use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

/// Constant framing overhead charged to every message on top of the
/// minimal binary width of its payload.
pub const TAG_BITS: u64 = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CongestError {
    #[error("message from {src} to {dst} in round {round} does not follow an edge")]
    NonAdjacentSend { round: u64, src: usize, dst: usize },
    #[error("bandwidth exceeded in round {round} on edge ({src}, {dst}): {detail}")]
    BandwidthExceeded {
        round: u64,
        src: usize,
        dst: usize,
        detail: String,
    },
}

/// What a message carries; the tag travels inside the fixed framing bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PayloadKind {
    /// BFS wave; payload is the sender's depth.
    Flood,
    /// Subtree-complete acknowledgment up the BFS tree.
    FloodAck,
    /// Value pushed down the tree.
    Broadcast,
    /// Number of walk tokens crossing the edge this round.
    WalkCount,
    /// One limb of a convergecast numerator.
    UpcastLimb,
}

/// A single point-to-point message between adjacent nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub src: usize,
    pub dst: usize,
    pub kind: PayloadKind,
    pub value: BigUint,
    /// Minimal binary width of `value` (at least 1).
    pub payload_bits: u64,
    /// `payload_bits + TAG_BITS`.
    pub bit_size: u64,
}

impl Message {
    pub fn new(src: usize, dst: usize, kind: PayloadKind, value: BigUint) -> Self {
        let payload_bits = value.bits().max(1);
        Message {
            src,
            dst,
            kind,
            value,
            payload_bits,
            bit_size: payload_bits + TAG_BITS,
        }
    }
}

/// Per-round, per-directed-edge traffic summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeTraffic {
    pub messages: u32,
    pub max_bits: u64,
}

/// Which protocol step a round belongs to (not exported to CSV; used by
/// congestion assertions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Bfs,
    Broadcast,
    Walk,
    Upcast,
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub phase: Phase,
    pub edges: BTreeMap<(usize, usize), EdgeTraffic>,
}

/// Append-only evidence of every message the simulation moved.
#[derive(Debug, Clone, Default)]
pub struct CongestLedger {
    rounds: Vec<RoundRecord>,
}

impl CongestLedger {
    pub fn rounds(&self) -> u64 {
        self.rounds.len() as u64
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn total_messages(&self) -> u64 {
        self.rounds
            .iter()
            .flat_map(|r| r.edges.values())
            .map(|t| t.messages as u64)
            .sum()
    }

    /// Largest per-edge message count in any single round, optionally
    /// restricted to one phase.
    pub fn max_messages_per_edge_round(&self, phase: Option<Phase>) -> u32 {
        self.rounds
            .iter()
            .filter(|r| phase.is_none_or(|p| r.phase == p))
            .flat_map(|r| r.edges.values())
            .map(|t| t.messages)
            .max()
            .unwrap_or(0)
    }

    /// Widest payload seen, excluding the framing tag.
    pub fn max_payload_bits(&self, phase: Option<Phase>) -> u64 {
        self.rounds
            .iter()
            .filter(|r| phase.is_none_or(|p| r.phase == p))
            .flat_map(|r| r.edges.values())
            .map(|t| t.max_bits.saturating_sub(TAG_BITS))
            .max()
            .unwrap_or(0)
    }

    /// CSV export: `round,edge_src,edge_dst,msg_count,max_bits`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,edge_src,edge_dst,msg_count,max_bits\n");
        for (i, record) in self.rounds.iter().enumerate() {
            for ((src, dst), traffic) in &record.edges {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    i + 1,
                    src,
                    dst,
                    traffic.messages,
                    traffic.max_bits
                ));
            }
        }
        out
    }
}

/// Per-round budget the engine enforces on every directed edge.
#[derive(Debug, Clone)]
pub struct RoundBudget {
    pub max_messages_per_edge: u32,
    pub max_payload_bits: Option<u64>,
}

impl Default for RoundBudget {
    fn default() -> Self {
        RoundBudget {
            max_messages_per_edge: 1,
            max_payload_bits: None,
        }
    }
}

/// Drives synchronous rounds over one graph, accumulating the ledger.
#[derive(Debug)]
pub struct RoundEngine<'g> {
    graph: &'g Graph,
    budget: RoundBudget,
    ledger: CongestLedger,
}

impl<'g> RoundEngine<'g> {
    pub fn new(graph: &'g Graph, budget: RoundBudget) -> Self {
        RoundEngine {
            graph,
            budget,
            ledger: CongestLedger::default(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Rounds completed so far.
    pub fn rounds(&self) -> u64 {
        self.ledger.rounds()
    }

    pub fn ledger(&self) -> &CongestLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> CongestLedger {
        self.ledger
    }

    /// Delivers one synchronous round: validates adjacency and budget,
    /// records traffic, and returns the per-node inboxes readable next
    /// round. Inboxes are ordered by sender label, then emission order.
    pub fn run_round(
        &mut self,
        phase: Phase,
        outboxes: Vec<Vec<Message>>,
    ) -> Result<Vec<Vec<Message>>, CongestError> {
        let n = self.graph.node_count();
        assert_eq!(outboxes.len(), n, "one outbox per node");
        let round = self.ledger.rounds() + 1;
        let mut edges: BTreeMap<(usize, usize), EdgeTraffic> = BTreeMap::new();
        let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        for (src, outbox) in outboxes.into_iter().enumerate() {
            for msg in outbox {
                assert_eq!(msg.src, src, "message source must match its outbox");
                if !self.graph.has_edge(msg.src, msg.dst) {
                    return Err(CongestError::NonAdjacentSend {
                        round,
                        src: msg.src,
                        dst: msg.dst,
                    });
                }
                let traffic = edges.entry((msg.src, msg.dst)).or_insert(EdgeTraffic {
                    messages: 0,
                    max_bits: 0,
                });
                traffic.messages += 1;
                traffic.max_bits = traffic.max_bits.max(msg.bit_size);
                if traffic.messages > self.budget.max_messages_per_edge {
                    return Err(CongestError::BandwidthExceeded {
                        round,
                        src: msg.src,
                        dst: msg.dst,
                        detail: format!(
                            "{} messages against a budget of {}",
                            traffic.messages, self.budget.max_messages_per_edge
                        ),
                    });
                }
                if let Some(limit) = self.budget.max_payload_bits {
                    if msg.payload_bits > limit {
                        return Err(CongestError::BandwidthExceeded {
                            round,
                            src: msg.src,
                            dst: msg.dst,
                            detail: format!(
                                "payload of {} bits against a budget of {} bits",
                                msg.payload_bits, limit
                            ),
                        });
                    }
                }
                let dst = msg.dst;
                inboxes[dst].push(msg);
            }
        }
        self.ledger.rounds.push(RoundRecord { phase, edges });
        Ok(inboxes)
    }
}

/// BFS tree rooted at a source node; parents point toward the root and the
/// root maps to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfsTree {
    pub root: usize,
    pub parent: Vec<usize>,
    pub depth: Vec<u64>,
    pub height: u64,
}

impl BfsTree {
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.parent.len()];
        for (v, &p) in self.parent.iter().enumerate() {
            if v != self.root {
                children[p].push(v);
            }
        }
        children
    }
}

/// Builds a BFS tree by flooding from `root`. Every node learns its parent
/// from the first wave to reach it (smallest sender label on ties), and the
/// root detects completion through an acknowledgment convergecast: each
/// flooded edge is answered either by the neighbor's own flood (not a
/// child) or by its subtree-complete acknowledgment (a child).
pub fn build_bfs_tree(
    engine: &mut RoundEngine,
    root: usize,
) -> Result<(BfsTree, u64), CongestError> {
    let g = engine.graph();
    let n = g.node_count();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut depth = vec![0u64; n];
    let mut answered: Vec<Vec<bool>> = (0..n).map(|v| vec![false; g.degree(v)]).collect();
    let mut flooded = vec![false; n];
    let mut complete = vec![false; n];
    parent[root] = Some(root);
    flooded[root] = true;

    let neighbor_slot = |v: usize, w: usize| -> usize {
        g.neighbors(v).binary_search(&w).expect("adjacent")
    };

    let mut outboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
    for &w in g.neighbors(root) {
        outboxes[root].push(Message::new(root, w, PayloadKind::Flood, BigUint::zero()));
    }
    if g.degree(root) == 0 {
        complete[root] = true;
    }

    let mut rounds = 0u64;
    while !complete[root] {
        let inboxes = engine.run_round(Phase::Bfs, std::mem::take(&mut outboxes))?;
        rounds += 1;
        outboxes = vec![Vec::new(); n];
        for v in 0..n {
            let mut best: Option<(u64, usize)> = None;
            for msg in &inboxes[v] {
                answered[v][neighbor_slot(v, msg.src)] = true;
                if msg.kind == PayloadKind::Flood && parent[v].is_none() {
                    let sender_depth = u64::try_from(&msg.value).expect("depth fits u64");
                    let candidate = (sender_depth, msg.src);
                    if best.is_none() || candidate < best.unwrap() {
                        best = Some(candidate);
                    }
                }
            }
            if let (None, Some((sender_depth, p))) = (parent[v], best) {
                parent[v] = Some(p);
                depth[v] = sender_depth + 1;
                flooded[v] = true;
                // the flood to every non-parent neighbor doubles as the
                // "not your child" answer to any simultaneous wave
                for &w in g.neighbors(v) {
                    if w != p {
                        outboxes[v].push(Message::new(
                            v,
                            w,
                            PayloadKind::Flood,
                            BigUint::from(depth[v]),
                        ));
                    }
                }
            }
            if flooded[v] && !complete[v] {
                let p = parent[v].expect("flooded implies adopted");
                let all_answered = g
                    .neighbors(v)
                    .iter()
                    .enumerate()
                    .all(|(slot, &w)| w == p || answered[v][slot]);
                if all_answered {
                    complete[v] = true;
                    if v != root {
                        outboxes[v].push(Message::new(v, p, PayloadKind::FloodAck, BigUint::zero()));
                    }
                }
            }
        }
    }

    let parent: Vec<usize> = parent
        .into_iter()
        .map(|p| p.expect("connected graph reaches every node"))
        .collect();
    let height = depth.iter().copied().max().unwrap_or(0);
    Ok((
        BfsTree {
            root,
            parent,
            depth,
            height,
        },
        rounds,
    ))
}

/// Pushes `values` down the tree in pipelined waves, one value per tree
/// edge per round. Returns each node's receipt sequence and the number of
/// rounds used.
pub fn broadcast_values(
    engine: &mut RoundEngine,
    tree: &BfsTree,
    values: &[BigUint],
) -> Result<(Vec<Vec<BigUint>>, u64), CongestError> {
    let n = tree.parent.len();
    let children = tree.children();
    let mut received: Vec<Vec<BigUint>> = vec![Vec::new(); n];
    let mut queues: Vec<VecDeque<BigUint>> = vec![VecDeque::new(); n];
    queues[tree.root].extend(values.iter().cloned());
    received[tree.root] = values.to_vec();

    let mut rounds = 0u64;
    loop {
        let mut outboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        let mut any = false;
        for (v, queue) in queues.iter_mut().enumerate() {
            if children[v].is_empty() {
                queue.clear();
                continue;
            }
            if let Some(value) = queue.pop_front() {
                any = true;
                for &c in &children[v] {
                    outboxes[v].push(Message::new(v, c, PayloadKind::Broadcast, value.clone()));
                }
            }
        }
        if !any {
            return Ok((received, rounds));
        }
        let inboxes = engine.run_round(Phase::Broadcast, outboxes)?;
        rounds += 1;
        for (v, inbox) in inboxes.into_iter().enumerate() {
            for msg in inbox {
                received[v].push(msg.value.clone());
                queues[v].push_back(msg.value);
            }
        }
    }
}

/// Chunking contract for convergecast numerators: every value is split
/// into exactly `ceil(bits(value_bound) / payload_bits)` little-endian
/// limbs so receivers know when a neighbor is done without any header.
#[derive(Debug, Clone)]
pub struct ChunkSpec {
    pub payload_bits: u64,
    pub value_bound: BigUint,
}

impl ChunkSpec {
    fn limb_count(&self) -> u64 {
        let bound_bits = self.value_bound.bits().max(1);
        bound_bits.div_ceil(self.payload_bits).max(1)
    }
}

/// Aggregates per-node non-negative numerators to the root by summing up
/// the tree. With a `ChunkSpec`, numerators travel as fixed-length limb
/// sequences so every payload stays inside the bit budget.
pub fn upcast_numerators(
    engine: &mut RoundEngine,
    tree: &BfsTree,
    numerators: &[BigUint],
    chunk: Option<&ChunkSpec>,
    phase: Phase,
) -> Result<(BigUint, u64), CongestError> {
    let n = tree.parent.len();
    assert_eq!(numerators.len(), n);
    let children = tree.children();
    let limb_count = chunk.map(ChunkSpec::limb_count).unwrap_or(1);
    let payload_bits = chunk.map(|c| c.payload_bits);

    let mut acc: Vec<BigUint> = numerators.to_vec();
    let mut pending: Vec<usize> = children.iter().map(Vec::len).collect();
    // per-node partial receipt per child edge: (limbs seen, value so far)
    let mut partial: Vec<BTreeMap<usize, (u64, BigUint)>> =
        (0..n).map(|_| BTreeMap::new()).collect();
    // remaining limbs of our own value once sending started
    let mut sending: Vec<Option<VecDeque<BigUint>>> = vec![None; n];

    let split = |value: &BigUint| -> VecDeque<BigUint> {
        match payload_bits {
            None => VecDeque::from([value.clone()]),
            Some(bits) => {
                let mask = (BigUint::one() << bits) - BigUint::one();
                let mut rest = value.clone();
                let mut limbs = VecDeque::new();
                for _ in 0..limb_count {
                    limbs.push_back(&rest & &mask);
                    rest >>= bits;
                }
                assert!(rest.is_zero(), "numerator exceeded its agreed bound");
                limbs
            }
        }
    };

    let mut rounds = 0u64;
    loop {
        if pending[tree.root] == 0 {
            return Ok((acc[tree.root].clone(), rounds));
        }
        let mut outboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        for v in 0..n {
            if v == tree.root {
                continue;
            }
            if pending[v] == 0 && sending[v].is_none() {
                sending[v] = Some(split(&acc[v]));
            }
            if let Some(limbs) = &mut sending[v] {
                if let Some(limb) = limbs.pop_front() {
                    outboxes[v].push(Message::new(
                        v,
                        tree.parent[v],
                        PayloadKind::UpcastLimb,
                        limb,
                    ));
                }
            }
        }
        let inboxes = engine.run_round(phase, outboxes)?;
        rounds += 1;
        for (v, inbox) in inboxes.into_iter().enumerate() {
            for msg in inbox {
                let (seen, value) = partial[v]
                    .entry(msg.src)
                    .or_insert_with(|| (0, BigUint::zero()));
                if let Some(bits) = payload_bits {
                    *value += msg.value << (*seen * bits);
                } else {
                    *value += msg.value;
                }
                *seen += 1;
                if *seen == limb_count {
                    let (_, done) = partial[v].remove(&msg.src).unwrap();
                    acc[v] += done;
                    pending[v] -= 1;
                }
            }
        }
    }
}

/// Exact-sum convergecast of per-node rationals: values are rescaled to a
/// common denominator and their integer numerators summed up the tree.
pub fn upcast_sum(
    engine: &mut RoundEngine,
    tree: &BfsTree,
    values: &[BigRational],
) -> Result<(BigRational, u64), CongestError> {
    let mut den = num_bigint::BigInt::one();
    for v in values {
        assert!(!v.is_negative(), "convergecast values must be non-negative");
        den = den.lcm(v.denom());
    }
    let numerators: Vec<BigUint> = values
        .iter()
        .map(|v| {
            let scaled = v.numer() * (&den / v.denom());
            scaled.to_biguint().expect("non-negative numerator")
        })
        .collect();
    let (total, rounds) = upcast_numerators(engine, tree, &numerators, None, Phase::Upcast)?;
    Ok((
        BigRational::new(total.into(), den),
        rounds,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, generate, stationary_distribution, GraphFamily};
    use num_bigint::BigInt;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        build_graph(&[(0, 1), (1, 2), (0, 2)], 3).unwrap()
    }

    fn msg(src: usize, dst: usize, value: u64) -> Message {
        Message::new(src, dst, PayloadKind::WalkCount, BigUint::from(value))
    }

    #[test]
    fn empty_round_records_zero_messages() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let inboxes = engine.run_round(Phase::Walk, vec![vec![], vec![], vec![]]).unwrap();
        assert!(inboxes.iter().all(Vec::is_empty));
        assert_eq!(engine.rounds(), 1);
        assert_eq!(engine.ledger().total_messages(), 0);
    }

    #[test]
    fn single_message_reaches_only_its_target() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let inboxes = engine
            .run_round(Phase::Walk, vec![vec![msg(0, 1, 5)], vec![], vec![]])
            .unwrap();
        assert_eq!(inboxes[1].len(), 1);
        assert_eq!(inboxes[1][0].value, BigUint::from(5u32));
        assert!(inboxes[0].is_empty() && inboxes[2].is_empty());
    }

    #[test]
    fn delivery_is_round_atomic() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let first = engine
            .run_round(Phase::Walk, vec![vec![msg(0, 1, 1)], vec![], vec![]])
            .unwrap();
        assert_eq!(first[1].len(), 1);
        // the next round starts from fresh outboxes; nothing is redelivered
        let second = engine.run_round(Phase::Walk, vec![vec![], vec![], vec![]]).unwrap();
        assert!(second.iter().all(Vec::is_empty));
    }

    #[test]
    fn two_messages_on_one_edge_exceed_default_budget() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let err = engine
            .run_round(Phase::Walk, vec![vec![msg(0, 1, 1), msg(0, 1, 2)], vec![], vec![]])
            .unwrap_err();
        assert!(matches!(err, CongestError::BandwidthExceeded { src: 0, dst: 1, .. }));
    }

    #[test]
    fn non_adjacent_send_is_rejected() {
        let g = build_graph(&[(0, 1), (1, 2)], 3).unwrap();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let err = engine
            .run_round(Phase::Walk, vec![vec![msg(0, 2, 1)], vec![], vec![]])
            .unwrap_err();
        assert_eq!(
            err,
            CongestError::NonAdjacentSend { round: 1, src: 0, dst: 2 }
        );
    }

    #[test]
    fn payload_budget_is_enforced() {
        let g = triangle();
        let budget = RoundBudget {
            max_messages_per_edge: 1,
            max_payload_bits: Some(4),
        };
        let mut engine = RoundEngine::new(&g, budget);
        let err = engine
            .run_round(Phase::Walk, vec![vec![msg(0, 1, 1 << 10)], vec![], vec![]])
            .unwrap_err();
        assert!(matches!(err, CongestError::BandwidthExceeded { .. }));
    }

    #[test]
    fn message_bit_accounting() {
        let m = msg(0, 1, 0);
        assert_eq!(m.payload_bits, 1);
        assert_eq!(m.bit_size, 1 + TAG_BITS);
        let m = msg(0, 1, 255);
        assert_eq!(m.payload_bits, 8);
        assert_eq!(m.bit_size, 8 + TAG_BITS);
    }

    #[test]
    fn bfs_on_triangle() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, rounds) = build_bfs_tree(&mut engine, 0).unwrap();
        assert_eq!(tree.parent, vec![0, 0, 0]);
        assert_eq!(tree.height, 1);
        assert!(rounds <= 2 * tree.height + 2);
    }

    #[test]
    fn bfs_on_lollipop_from_path_end() {
        let g = generate(&GraphFamily::Lollipop { clique: 4, path: 4 }, 0).unwrap();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 7).unwrap();
        assert_eq!(tree.height, 5);
    }

    #[test]
    fn bfs_on_cycle_5() {
        let g = generate(&GraphFamily::Cycle(5), 0).unwrap();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
        assert_eq!(tree.depth, vec![0, 1, 2, 2, 1]);
    }

    #[test]
    fn bfs_depths_match_plain_bfs_on_suite() {
        let suite = [
            triangle(),
            generate(&GraphFamily::Complete(6), 0).unwrap(),
            generate(&GraphFamily::Petersen, 0).unwrap(),
            generate(&GraphFamily::Lollipop { clique: 6, path: 6 }, 0).unwrap(),
            generate(&GraphFamily::Barbell(5), 0).unwrap(),
        ];
        for g in &suite {
            for root in 0..g.node_count() {
                let mut engine = RoundEngine::new(g, RoundBudget::default());
                let (tree, rounds) = build_bfs_tree(&mut engine, root).unwrap();
                let expect = g.bfs_distances(root);
                assert_eq!(tree.depth, expect);
                for v in 0..g.node_count() {
                    if v != root {
                        assert!(g.has_edge(v, tree.parent[v]));
                        assert_eq!(tree.depth[v], tree.depth[tree.parent[v]] + 1);
                    }
                }
                assert!(rounds <= 2 * tree.height + 2);
            }
        }
    }

    #[test]
    fn broadcast_delivers_in_order_everywhere() {
        let g = generate(&GraphFamily::Lollipop { clique: 4, path: 4 }, 0).unwrap();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
        let values: Vec<BigUint> = [7u32, 11, 13].iter().map(|&x| BigUint::from(x)).collect();
        let (received, rounds) = broadcast_values(&mut engine, &tree, &values).unwrap();
        for (v, got) in received.iter().enumerate() {
            assert_eq!(got, &values, "node {v}");
        }
        assert_eq!(rounds, tree.height + values.len() as u64 - 1);
    }

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn upcast_of_zeros_is_zero() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
        let values = vec![ratio(0, 1); 3];
        let (total, _) = upcast_sum(&mut engine, &tree, &values).unwrap();
        assert!(total.is_zero());
    }

    #[test]
    fn upcast_of_stationary_is_one() {
        for family in [
            GraphFamily::Complete(5),
            GraphFamily::Petersen,
            GraphFamily::Lollipop { clique: 4, path: 4 },
        ] {
            let g = generate(&family, 0).unwrap();
            let pi = stationary_distribution(&g);
            let mut engine = RoundEngine::new(&g, RoundBudget::default());
            let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
            let (total, rounds) = upcast_sum(&mut engine, &tree, pi.entries()).unwrap();
            assert!(total.is_one());
            assert!(rounds <= tree.height);
        }
    }

    #[test]
    fn upcast_exact_thirds() {
        let g = triangle();
        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
        let values = vec![ratio(1, 6), ratio(1, 3), ratio(1, 2)];
        let (total, rounds) = upcast_sum(&mut engine, &tree, &values).unwrap();
        assert!(total.is_one());
        assert!(rounds <= tree.height);
    }

    #[test]
    fn chunked_upcast_matches_plain_sum() {
        let g = generate(&GraphFamily::Lollipop { clique: 4, path: 4 }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let numerators: Vec<BigUint> = (0..g.node_count())
            .map(|_| BigUint::from(rng.random_range(0..u64::MAX)))
            .collect();
        let expect: BigUint = numerators.iter().sum();
        let bound: BigUint = &expect + BigUint::one();

        let mut engine = RoundEngine::new(&g, RoundBudget::default());
        let (tree, _) = build_bfs_tree(&mut engine, 0).unwrap();
        let spec = ChunkSpec {
            payload_bits: 10,
            value_bound: bound,
        };
        let (total, rounds) =
            upcast_numerators(&mut engine, &tree, &numerators, Some(&spec), Phase::Upcast).unwrap();
        assert_eq!(total, expect);
        assert!(rounds <= spec.limb_count() * (tree.height + 1));
        // every limb stayed inside the bit budget
        assert!(engine.ledger().max_payload_bits(Some(Phase::Upcast)) <= 10);
        assert_eq!(
            engine.ledger().max_messages_per_edge_round(Some(Phase::Upcast)),
            1
        );
    }

    proptest! {
        #[test]
        fn bfs_matches_plain_bfs_on_random_graphs(seed in any::<u64>(), n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for v in 1..n {
                edges.push((rng.random_range(0..v), v));
            }
            for u in 0..n {
                for v in (u + 1)..n {
                    if !edges.contains(&(u, v)) && rng.random_range(0..3u32) == 0 {
                        edges.push((u, v));
                    }
                }
            }
            let g = build_graph(&edges, n).unwrap();
            let root = rng.random_range(0..n);
            let mut engine = RoundEngine::new(&g, RoundBudget::default());
            let (tree, _) = build_bfs_tree(&mut engine, root).unwrap();
            prop_assert_eq!(tree.depth, g.bfs_distances(root));
        }
    }
}
