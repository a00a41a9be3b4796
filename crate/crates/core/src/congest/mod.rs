//! Synchronous CONGEST engine on the complete bipartite graph between
//! facilities and clients.
//!
//! A round has two phases. Every node first emits its outbox (at most one
//! message per opposite-side neighbour, or a single broadcast); the engine
//! validates and delivers all outboxes at once; then every node consumes its
//! inbox. A node therefore never observes a message sent in the round it is
//! currently sending in. Inboxes are ordered by sender index.

mod message;

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::par::Parallelism;

pub use message::{Message, MessageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Facility,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub side: Side,
    pub index: usize,
}

impl NodeId {
    pub fn facility(index: usize) -> Self {
        NodeId { side: Side::Facility, index }
    }

    pub fn client(index: usize) -> Self {
        NodeId { side: Side::Client, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Side::Facility => write!(f, "f{}", self.index),
            Side::Client => write!(f, "c{}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("round {round}: {sender} sent more than one message to {receiver}")]
    Bandwidth { round: u64, sender: NodeId, receiver: NodeId },
    #[error("round {round}: {sender} mixed a broadcast with other messages")]
    BroadcastConflict { round: u64, sender: NodeId },
    #[error("round {round}: {sender} addressed nonexistent node index {receiver}")]
    NoSuchReceiver { round: u64, sender: NodeId, receiver: usize },
    #[error("round {round}: {sender} sent scalar {value} above the bound {bound}")]
    ScalarTooLarge { round: u64, sender: NodeId, value: u64, bound: u64 },
    #[error("protocol failure: {0}")]
    Protocol(String),
}

/// Deterministic per-node random stream keyed by `(global seed, node)`.
#[derive(Debug, Clone)]
pub struct NodeRng(ChaCha8Rng);

impl NodeRng {
    pub fn new(seed: u64, node: NodeId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = match node.side {
            Side::Facility => 0u64,
            Side::Client => 1u64 << 63,
        };
        rng.set_stream(side | node.index as u64);
        NodeRng(rng)
    }

    /// Uniform over `1..=range`.
    pub fn random_int(&mut self, range: u64) -> u64 {
        assert!(range >= 1, "empty range");
        self.0.random_range(1..=range)
    }

    /// `true` with probability `p`, drawn as an integer on a `2^53` grid.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        const GRID: u64 = 1 << 53;
        let threshold = (p.clamp(0.0, 1.0) * GRID as f64).floor() as u64;
        self.random_int(GRID) <= threshold
    }

    /// Uniform index into a nonempty slice.
    pub fn pick(&mut self, len: usize) -> usize {
        (self.random_int(len as u64) - 1) as usize
    }
}

/// Messages leaving one node in one round.
#[derive(Debug, Default)]
pub struct Outbox {
    broadcast: Option<Message>,
    broadcasts: u32,
    unicast: Vec<(u32, Message)>,
}

impl Outbox {
    fn is_empty(&self) -> bool {
        self.broadcasts == 0 && self.unicast.is_empty()
    }
}

/// Context of the send phase.
pub struct SendCtx<'a> {
    pub round: u64,
    pub node: NodeId,
    pub n_f: usize,
    pub n_c: usize,
    pub rng: &'a mut NodeRng,
    outbox: &'a mut Outbox,
}

impl SendCtx<'_> {
    /// Queues one message to a node on the opposite side.
    pub fn send(&mut self, to: usize, msg: Message) {
        self.outbox.unicast.push((to as u32, msg));
    }

    /// Queues the same message to every node on the opposite side.
    pub fn broadcast(&mut self, msg: Message) {
        self.outbox.broadcast = Some(msg);
        self.outbox.broadcasts += 1;
    }

    /// Number of nodes on the opposite side.
    pub fn peers(&self) -> usize {
        match self.node.side {
            Side::Facility => self.n_c,
            Side::Client => self.n_f,
        }
    }
}

/// Messages delivered to one node, ordered by sender index.
#[derive(Clone, Copy)]
pub struct Inbox<'a> {
    broadcasts: &'a [(u32, Message)],
    unicasts: &'a [(u32, Message)],
}

impl<'a> Inbox<'a> {
    pub fn is_empty(&self) -> bool {
        self.broadcasts.is_empty() && self.unicasts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.broadcasts.len() + self.unicasts.len()
    }

    pub fn iter(&self) -> InboxIter<'a> {
        InboxIter { broadcasts: self.broadcasts, unicasts: self.unicasts }
    }
}

pub struct InboxIter<'a> {
    broadcasts: &'a [(u32, Message)],
    unicasts: &'a [(u32, Message)],
}

impl Iterator for InboxIter<'_> {
    type Item = (usize, Message);

    fn next(&mut self) -> Option<Self::Item> {
        let take_broadcast = match (self.broadcasts.first(), self.unicasts.first()) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(b), Some(u)) => b.0 < u.0,
        };
        let src = if take_broadcast { &mut self.broadcasts } else { &mut self.unicasts };
        let (sender, msg) = src[0];
        *src = &src[1..];
        Some((sender as usize, msg))
    }
}

/// Context of the receive phase.
pub struct RecvCtx<'a> {
    pub round: u64,
    pub node: NodeId,
    pub n_f: usize,
    pub n_c: usize,
    pub rng: &'a mut NodeRng,
    pub inbox: Inbox<'a>,
}

/// Local state machine of one node.
pub trait NodeProgram: Send {
    fn send(&mut self, ctx: &mut SendCtx<'_>);
    fn receive(&mut self, ctx: &mut RecvCtx<'_>);
}

/// A node that never sends and ignores its inbox.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

impl NodeProgram for Idle {
    fn send(&mut self, _: &mut SendCtx<'_>) {}
    fn receive(&mut self, _: &mut RecvCtx<'_>) {}
}

struct Slot<P> {
    id: NodeId,
    program: P,
    rng: NodeRng,
    outbox: Outbox,
    inbox: Vec<(u32, Message)>,
}

/// Outcome of [`Network::run_until`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Halted { rounds: u64 },
    CapExceeded { rounds: u64 },
}

impl RunOutcome {
    pub fn rounds(self) -> u64 {
        match self {
            RunOutcome::Halted { rounds } | RunOutcome::CapExceeded { rounds } => rounds,
        }
    }
}

/// Line-per-message log: `round sender→receiver kind a b`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript(String);

impl Transcript {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn lines(&self) -> usize {
        self.0.lines().count()
    }

    fn record(&mut self, round: u64, from: NodeId, to: NodeId, msg: &Message) {
        let _ = writeln!(self.0, "{round} {from}→{to} {} {} {}", msg.kind, msg.a, msg.b);
    }
}

/// The synchronous network: `n_f` facility programs and `n_c` client programs
/// with one random stream per node.
pub struct Network<F, C> {
    facilities: Vec<Slot<F>>,
    clients: Vec<Slot<C>>,
    round: u64,
    scalar_bound: u64,
    parallelism: Parallelism,
    transcript: Option<Transcript>,
    messages_delivered: u64,
    fac_broadcasts: Vec<(u32, Message)>,
    cli_broadcasts: Vec<(u32, Message)>,
    stamps: Vec<u64>,
}

impl<F: NodeProgram, C: NodeProgram> Network<F, C> {
    /// Builds a network; node programs are created from their index. Scalars
    /// above `scalar_bound` are rejected on delivery.
    pub fn new(
        n_f: usize,
        n_c: usize,
        seed: u64,
        scalar_bound: u64,
        mut facility: impl FnMut(usize) -> F,
        mut client: impl FnMut(usize) -> C,
    ) -> Self {
        assert!(n_f >= 1 && n_c >= 1, "network needs both sides");
        Network {
            facilities: (0..n_f).map(|i| Slot::new(facility(i), NodeId::facility(i), seed)).collect(),
            clients: (0..n_c).map(|j| Slot::new(client(j), NodeId::client(j), seed)).collect(),
            round: 0,
            scalar_bound,
            parallelism: Parallelism::default(),
            transcript: None,
            messages_delivered: 0,
            fac_broadcasts: Vec::new(),
            cli_broadcasts: Vec::new(),
            stamps: vec![u64::MAX; n_f.max(n_c)],
        }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_transcript(mut self, enabled: bool) -> Self {
        self.transcript = enabled.then(Transcript::default);
        self
    }

    /// Runs one synchronous round: send, validate and deliver, receive.
    pub fn run_round(&mut self) -> Result<(), SimError> {
        let round = self.round + 1;
        let (n_f, n_c) = (self.n_f(), self.n_c());

        self.parallelism.for_each_mut(&mut self.facilities, |s| s.send(round, n_f, n_c));
        self.parallelism.for_each_mut(&mut self.clients, |s| s.send(round, n_f, n_c));

        let delivered = deliver(
            round,
            &mut self.facilities,
            &mut self.clients,
            &mut self.fac_broadcasts,
            &mut self.stamps,
            0,
            self.scalar_bound,
            self.transcript.as_mut(),
        )? + deliver(
            round,
            &mut self.clients,
            &mut self.facilities,
            &mut self.cli_broadcasts,
            &mut self.stamps,
            1,
            self.scalar_bound,
            self.transcript.as_mut(),
        )?;
        self.messages_delivered += delivered;

        let (fb, cb) = (&self.fac_broadcasts, &self.cli_broadcasts);
        self.parallelism.for_each_mut(&mut self.facilities, |s| s.receive(round, n_f, n_c, cb));
        self.parallelism.for_each_mut(&mut self.clients, |s| s.receive(round, n_f, n_c, fb));

        self.round = round;
        Ok(())
    }

    /// Runs rounds until `halted` holds (checked before every round) or
    /// `round_cap` rounds have run.
    pub fn run_until(&mut self, halted: impl Fn(&Self) -> bool, round_cap: u64) -> Result<RunOutcome, SimError> {
        assert!(round_cap > 0, "round cap must be positive");
        let mut rounds = 0;
        while !halted(self) {
            if rounds == round_cap {
                return Ok(RunOutcome::CapExceeded { rounds });
            }
            self.run_round()?;
            rounds += 1;
        }
        Ok(RunOutcome::Halted { rounds })
    }
}

impl<F, C> Network<F, C> {
    pub fn n_f(&self) -> usize {
        self.facilities.len()
    }

    pub fn n_c(&self) -> usize {
        self.clients.len()
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn messages_delivered(&self) -> u64 {
        self.messages_delivered
    }

    pub fn scalar_bound(&self) -> u64 {
        self.scalar_bound
    }

    pub fn parallelism(&self) -> Parallelism {
        self.parallelism
    }

    pub fn facility(&self, i: usize) -> &F {
        &self.facilities[i].program
    }

    pub fn client(&self, j: usize) -> &C {
        &self.clients[j].program
    }

    pub fn facility_mut(&mut self, i: usize) -> &mut F {
        &mut self.facilities[i].program
    }

    pub fn client_mut(&mut self, j: usize) -> &mut C {
        &mut self.clients[j].program
    }

    pub fn facilities(&self) -> impl ExactSizeIterator<Item = &F> {
        self.facilities.iter().map(|s| &s.program)
    }

    pub fn clients(&self) -> impl ExactSizeIterator<Item = &C> {
        self.clients.iter().map(|s| &s.program)
    }

    pub fn transcript(&self) -> Option<&Transcript> {
        self.transcript.as_ref()
    }

    /// Draws from `node`'s own stream, uniform over `1..=range`.
    pub fn node_random_int(&mut self, node: NodeId, range: u64) -> u64 {
        match node.side {
            Side::Facility => self.facilities[node.index].rng.random_int(range),
            Side::Client => self.clients[node.index].rng.random_int(range),
        }
    }

    /// Replaces every node program by a per-node transformation of it,
    /// keeping the round counter, random streams and transcript. Each closure
    /// sees one node's state only. No message is ever in flight between
    /// rounds, so this is always safe.
    pub fn rebind<F2, C2>(
        self,
        mut facility: impl FnMut(usize, F) -> F2,
        mut client: impl FnMut(usize, C) -> C2,
    ) -> Network<F2, C2> {
        Network {
            facilities: self.facilities.into_iter().map(|s| s.map(&mut facility)).collect(),
            clients: self.clients.into_iter().map(|s| s.map(&mut client)).collect(),
            round: self.round,
            scalar_bound: self.scalar_bound,
            parallelism: self.parallelism,
            transcript: self.transcript,
            messages_delivered: self.messages_delivered,
            fac_broadcasts: Vec::new(),
            cli_broadcasts: Vec::new(),
            stamps: self.stamps,
        }
    }

    /// Consumes the network, returning the final node programs.
    pub fn into_programs(self) -> (Vec<F>, Vec<C>) {
        (
            self.facilities.into_iter().map(|s| s.program).collect(),
            self.clients.into_iter().map(|s| s.program).collect(),
        )
    }
}

impl<P> Slot<P> {
    fn new(program: P, id: NodeId, seed: u64) -> Self {
        Slot { id, program, rng: NodeRng::new(seed, id), outbox: Outbox::default(), inbox: Vec::new() }
    }

    fn map<Q>(self, f: &mut impl FnMut(usize, P) -> Q) -> Slot<Q> {
        Slot { id: self.id, program: f(self.id.index, self.program), rng: self.rng, outbox: self.outbox, inbox: self.inbox }
    }
}

impl<P: NodeProgram> Slot<P> {
    fn send(&mut self, round: u64, n_f: usize, n_c: usize) {
        let mut ctx = SendCtx { round, node: self.id, n_f, n_c, rng: &mut self.rng, outbox: &mut self.outbox };
        self.program.send(&mut ctx);
    }

    fn receive(&mut self, round: u64, n_f: usize, n_c: usize, broadcasts: &[(u32, Message)]) {
        let inbox = Inbox { broadcasts, unicasts: &self.inbox };
        let mut ctx = RecvCtx { round, node: self.id, n_f, n_c, rng: &mut self.rng, inbox };
        self.program.receive(&mut ctx);
    }
}

/// Validates the outboxes of one side and moves them into the other side's
/// inboxes. Returns the number of point-to-point deliveries.
#[allow(clippy::too_many_arguments)]
fn deliver<P, Q>(
    round: u64,
    senders: &mut [Slot<P>],
    receivers: &mut [Slot<Q>],
    broadcasts: &mut Vec<(u32, Message)>,
    stamps: &mut [u64],
    direction: u64,
    bound: u64,
    mut transcript: Option<&mut Transcript>,
) -> Result<u64, SimError> {
    broadcasts.clear();
    receivers.iter_mut().for_each(|r| r.inbox.clear());
    let peers = receivers.len();
    let mut delivered = 0u64;
    let check_scalar = |sender: NodeId, msg: &Message| {
        let value = msg.a.max(msg.b as u64);
        if value > bound {
            return Err(SimError::ScalarTooLarge { round, sender, value, bound });
        }
        Ok(())
    };
    for (s, slot) in senders.iter_mut().enumerate() {
        let sender = slot.id;
        if slot.outbox.is_empty() {
            continue;
        }
        let mut out = std::mem::take(&mut slot.outbox);
        if out.broadcasts > 0 {
            if out.broadcasts > 1 || !out.unicast.is_empty() {
                return Err(SimError::BroadcastConflict { round, sender });
            }
            let msg = out.broadcast.expect("counted broadcast");
            check_scalar(sender, &msg)?;
            broadcasts.push((s as u32, msg));
            delivered += peers as u64;
            if let Some(t) = transcript.as_deref_mut() {
                for r in receivers.iter() {
                    t.record(round, sender, r.id, &msg);
                }
            }
            continue;
        }
        let stamp = (round << 33) | (direction << 32) | s as u64;
        for &(to, msg) in &out.unicast {
            let to = to as usize;
            let Some(receiver) = receivers.get_mut(to) else {
                return Err(SimError::NoSuchReceiver { round, sender, receiver: to });
            };
            if stamps[to] == stamp {
                return Err(SimError::Bandwidth { round, sender, receiver: receiver.id });
            }
            stamps[to] = stamp;
            check_scalar(sender, &msg)?;
            receiver.inbox.push((s as u32, msg));
            if let Some(t) = transcript.as_deref_mut() {
                t.record(round, sender, receiver.id, &msg);
            }
        }
        delivered += out.unicast.len() as u64;
        out.unicast.clear();
        // keep the allocation for the next round
        slot.outbox = out;
    }
    Ok(delivered)
}

#[cfg(test)]
mod tests;
