//! Dissemination of duplicated adjacency messages.
//!
//! Clients hold overlapping sets of overlay edges and every client must end up
//! with their union, without knowing who else holds what. Iterations of
//! random cyclic-shift hashing push copies onto facilities, where duplicates
//! collapse, and spread the survivors back evenly over the clients. Once the
//! total number of held copies drops to `48·n_f`, a constant-length final
//! phase gathers everything at the facilities and broadcasts it.
//!
//! Round schedule of one hashing iteration (7 rounds):
//!
//! 1. clients report their counts `n_j` to facility 0;
//! 2. facility 0 answers each client with a verdict (continue, break, abort);
//! 3. client 0 relays the verdict to every facility while every facility
//!    broadcasts its random shift;
//! 4. clients hash their messages and send them, leftovers on unused links;
//! 5. facilities dedupe and report their counts `b_i` to client 0;
//! 6. client 0 returns start offsets `c(i) = Σ_{k<i} b_k mod n_c`;
//! 7. facilities hand their messages back to consecutive clients.
//!
//! A break verdict carries each client's offset and the number `K ≤ 48` of
//! spread rounds; `K` rounds of client-to-facility spreading and `K` rounds of
//! facility broadcasts follow. An abort verdict (issued when the iteration cap
//! is exhausted) ends the run after its relay, so every node learns of it.

mod hash;

use std::cell::RefCell;

use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::congest::{Idle, Message, MessageKind, Network, NodeProgram, RecvCtx, SendCtx, SimError};
use crate::par::Parallelism;

pub use hash::{group_of, hash_message, message_index, EdgeMessage, HashAssignment};

/// Break once at most this many copies per facility remain.
pub const BREAK_FACTOR: u64 = 48;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MddError {
    #[error("edge ({u}, {v}) is not in canonical u < v form")]
    NonCanonical { u: usize, v: usize },
    #[error("edge {edge} lies outside the universe of {n_f} facilities")]
    OutOfUniverse { edge: EdgeMessage, n_f: usize },
    #[error("shift {shift} outside 1..={n_f}")]
    ShiftOutOfRange { shift: u64, n_f: usize },
    #[error("expected {expected} witness sets, got {got}")]
    WitnessShape { expected: usize, got: usize },
    #[error("{n_f} facilities exceed the supported maximum of {MAX_FACILITIES}")]
    TooManyFacilities { n_f: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Largest `n_f` whose edge universe fits 32-bit indices.
pub const MAX_FACILITIES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MddStatus {
    Success,
    Timeout,
}

/// Per-run statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MddStats {
    pub iterations_used: u32,
    pub rounds_used: u64,
    pub initial_total_copies: u64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Params {
    n_f: usize,
    n_c: usize,
    cap: u32,
}

impl Params {
    fn threshold(&self) -> u64 {
        BREAK_FACTOR * self.n_f as u64
    }

    /// Generous bound on the rounds a run can take.
    fn round_budget(&self) -> u64 {
        7 * self.cap as u64 + 3 + 2 * BREAK_FACTOR + 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Report,
    Decide,
    Relay,
    Hash,
    CountBack,
    Index,
    Redistribute,
    Spread(u32),
    Broadcast(u32),
    Done(MddStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Continue,
    Break { rounds: u32 },
    Abort,
}

impl Verdict {
    fn message(self) -> Message {
        match self {
            Verdict::Continue => Message::signal(MessageKind::Continue),
            Verdict::Break { rounds } => Message::new(MessageKind::Break, 0, rounds),
            Verdict::Abort => Message::signal(MessageKind::Abort),
        }
    }

    fn parse(msg: Message) -> Option<Self> {
        match msg.kind {
            MessageKind::Continue => Some(Verdict::Continue),
            MessageKind::Break => Some(Verdict::Break { rounds: msg.b }),
            MessageKind::Abort => Some(Verdict::Abort),
            _ => None,
        }
    }

    /// Stage entered after the relay round.
    fn next_stage(self) -> Stage {
        match self {
            Verdict::Continue => Stage::Hash,
            Verdict::Break { rounds: 0 } => Stage::Done(MddStatus::Success),
            Verdict::Break { .. } => Stage::Spread(0),
            Verdict::Abort => Stage::Done(MddStatus::Timeout),
        }
    }
}

/// Facility-side dissemination program wrapping the facility's outer state.
pub struct MddFacility<T> {
    pub inner: T,
    params: Params,
    stage: Stage,
    held: Vec<EdgeMessage>,
    start: u64,
    verdict: Verdict,
    /// Facility 0 only: the counts reported in the current iteration.
    counts: Vec<u64>,
    iterations: u32,
    initial_total: Option<u64>,
}

/// Client-side dissemination program wrapping the client's outer state.
pub struct MddClient<T> {
    pub inner: T,
    params: Params,
    stage: Stage,
    held: Vec<EdgeMessage>,
    /// Universe indices received during the broadcast rounds; repeated
    /// copies are dropped whenever the buffer has grown by `8·n_f`.
    seen: Vec<u32>,
    compacted: usize,
    shifts: Vec<u64>,
    verdict: Verdict,
    offset: u64,
    iterations: u32,
    /// Client 0 only: facility counts `b_i` of the current iteration.
    facility_counts: Vec<u64>,
    received_per_iteration: Vec<u32>,
}

impl<T> MddFacility<T> {
    fn new(inner: T, params: Params) -> Self {
        MddFacility {
            inner,
            params,
            stage: Stage::Report,
            held: Vec::new(),
            start: 0,
            verdict: Verdict::Continue,
            counts: Vec::new(),
            iterations: 0,
            initial_total: None,
        }
    }

    pub fn status(&self) -> Option<MddStatus> {
        match self.stage {
            Stage::Done(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T> MddClient<T> {
    fn new(inner: T, params: Params, mut held: Vec<EdgeMessage>) -> Self {
        held.sort_unstable();
        held.dedup();
        MddClient {
            inner,
            params,
            stage: Stage::Report,
            held,
            seen: Vec::new(),
            compacted: 0,
            shifts: vec![0; params.n_f],
            verdict: Verdict::Continue,
            offset: 0,
            iterations: 0,
            facility_counts: Vec::new(),
            received_per_iteration: Vec::new(),
        }
    }

    pub fn status(&self) -> Option<MddStatus> {
        match self.stage {
            Stage::Done(s) => Some(s),
            _ => None,
        }
    }

    /// Messages currently held: the full union after success, the partial
    /// state after a timeout.
    pub fn held(&self) -> &[EdgeMessage] {
        &self.held
    }

    /// Messages received in the redistribution round of each iteration.
    pub fn received_per_iteration(&self) -> &[u32] {
        &self.received_per_iteration
    }

    pub fn into_parts(self) -> (T, Option<MddStatus>, Vec<EdgeMessage>) {
        let status = self.status();
        (self.inner, status, self.held)
    }

    fn hash_and_send(&mut self, ctx: &mut SendCtx<'_>) {
        let n_f = self.params.n_f;
        let assignment = HashAssignment::from_shifts(std::mem::take(&mut self.shifts)).expect("shifts are in range");
        // Bucket by destination; `held` is sorted, so each bucket is too.
        let dests: Vec<usize> = self.held.iter().map(|&e| assignment.destination(e)).collect();
        let mut start = vec![0usize; n_f + 1];
        for &d in &dests {
            start[d + 1] += 1;
        }
        for i in 0..n_f {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut bucketed = vec![EdgeMessage::between(0, 1); self.held.len()];
        for (&d, &e) in dests.iter().zip(&self.held) {
            bucketed[fill[d]] = e;
            fill[d] += 1;
        }
        let mut used = vec![false; n_f];
        let mut leftovers = Vec::new();
        for dest in 0..n_f {
            let group = &bucketed[start[dest]..start[dest + 1]];
            if group.is_empty() {
                continue;
            }
            let chosen = if group.len() > 1 { ctx.rng.pick(group.len()) } else { 0 };
            ctx.send(dest, edge_message(group[chosen]));
            used[dest] = true;
            leftovers.extend(group.iter().enumerate().filter(|&(k, _)| k != chosen).map(|(_, &e)| e));
        }
        leftovers.sort_unstable();
        let mut free = (0..n_f).filter(|&i| !used[i]);
        let mut kept = Vec::new();
        for edge in leftovers {
            match free.next() {
                Some(dest) => ctx.send(dest, edge_message(edge)),
                None => kept.push(edge),
            }
        }
        self.held = kept;
        self.shifts = vec![0; n_f];
    }
}

fn edge_message(e: EdgeMessage) -> Message {
    Message::new(MessageKind::Edge, e.u() as u64, e.v() as u32)
}

fn edges_in<'a>(ctx: &'a RecvCtx<'a>) -> impl Iterator<Item = EdgeMessage> + 'a {
    ctx.inbox
        .iter()
        .filter(|(_, m)| m.kind == MessageKind::Edge)
        .map(|(_, m)| EdgeMessage::between(m.a as usize, m.b as usize))
}

thread_local! {
    static SCRATCH: RefCell<FxHashSet<EdgeMessage>> = RefCell::new(FxHashSet::default());
}

thread_local! {
    static MARKS: RefCell<Vec<u64>> = const { RefCell::new(Vec::new()) };
}

/// Drops repeated indices below `universe`, keeping first occurrences in
/// place. The marks are shared by all nodes run on one thread and are left
/// cleared.
fn dedup_indices(v: &mut Vec<u32>, universe: usize) {
    MARKS.with_borrow_mut(|marks| {
        let words = universe.div_ceil(64);
        if marks.len() < words {
            marks.resize(words, 0);
        }
        v.retain(|&k| {
            let (w, bit) = (k as usize / 64, 1u64 << (k % 64));
            let fresh = marks[w] & bit == 0;
            marks[w] |= bit;
            fresh
        });
        for &k in v.iter() {
            marks[k as usize / 64] &= !(1u64 << (k % 64));
        }
    });
}

/// Drops repeated copies, keeping first occurrences in place.
fn dedup_unordered(v: &mut Vec<EdgeMessage>) {
    SCRATCH.with_borrow_mut(|seen| {
        seen.clear();
        v.retain(|&e| seen.insert(e));
    });
}

fn sort_dedup(v: &mut Vec<EdgeMessage>) {
    v.sort_unstable();
    v.dedup();
}

impl<T: Send> NodeProgram for MddFacility<T> {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        let coordinator = ctx.node.index == 0;
        match self.stage {
            Stage::Decide if coordinator => {
                let total: u64 = self.counts.iter().sum();
                self.initial_total.get_or_insert(total);
                if total <= self.params.threshold() {
                    let rounds = total.div_ceil(self.params.n_f as u64) as u32;
                    let mut prefix = 0u64;
                    for (j, &n_j) in self.counts.iter().enumerate() {
                        let offset = prefix % self.params.n_f as u64;
                        ctx.send(j, Message::new(MessageKind::Break, offset, rounds));
                        prefix += n_j;
                    }
                } else if self.iterations >= self.params.cap {
                    ctx.broadcast(Verdict::Abort.message());
                } else {
                    ctx.broadcast(Verdict::Continue.message());
                }
            }
            Stage::Relay => {
                let shift = ctx.rng.random_int(self.params.n_f as u64);
                ctx.broadcast(Message::scalar(MessageKind::Shift, shift));
            }
            Stage::CountBack if !self.held.is_empty() => {
                ctx.send(0, Message::scalar(MessageKind::Count, self.held.len() as u64));
            }
            Stage::Redistribute => {
                let n_c = self.params.n_c as u64;
                for (t, &edge) in self.held.iter().enumerate() {
                    ctx.send(((self.start + t as u64) % n_c) as usize, edge_message(edge));
                }
                self.held.clear();
            }
            Stage::Broadcast(q) => {
                if let Some(&edge) = self.held.get(q as usize) {
                    ctx.broadcast(edge_message(edge));
                }
            }
            _ => {}
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Report => {
                if ctx.node.index == 0 {
                    self.counts = vec![0; self.params.n_c];
                    for (j, m) in ctx.inbox.iter() {
                        if m.kind == MessageKind::Count {
                            self.counts[j] = m.a;
                        }
                    }
                }
                Stage::Decide
            }
            Stage::Decide => Stage::Relay,
            Stage::Relay => {
                let relayed = ctx.inbox.iter().find(|(s, _)| *s == 0).and_then(|(_, m)| Verdict::parse(m));
                self.verdict = relayed.expect("client 0 relays the verdict");
                self.verdict.next_stage()
            }
            Stage::Hash => {
                self.held = edges_in(ctx).collect();
                dedup_unordered(&mut self.held);
                self.held.sort_unstable();
                Stage::CountBack
            }
            Stage::CountBack => Stage::Index,
            Stage::Index => {
                if let Some((_, m)) = ctx.inbox.iter().find(|(_, m)| m.kind == MessageKind::Index) {
                    self.start = m.a;
                }
                Stage::Redistribute
            }
            Stage::Redistribute => {
                self.iterations += 1;
                Stage::Report
            }
            Stage::Spread(q) => {
                self.held.extend(edges_in(ctx));
                let Verdict::Break { rounds } = self.verdict else { unreachable!() };
                if q + 1 < rounds {
                    Stage::Spread(q + 1)
                } else {
                    sort_dedup(&mut self.held);
                    Stage::Broadcast(0)
                }
            }
            Stage::Broadcast(q) => {
                let Verdict::Break { rounds } = self.verdict else { unreachable!() };
                if q + 1 < rounds {
                    Stage::Broadcast(q + 1)
                } else {
                    Stage::Done(MddStatus::Success)
                }
            }
            done @ Stage::Done(_) => done,
        }
    }
}

impl<T: Send> NodeProgram for MddClient<T> {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        let relay = ctx.node.index == 0;
        match self.stage {
            Stage::Report => ctx.send(0, Message::scalar(MessageKind::Count, self.held.len() as u64)),
            Stage::Relay if relay => ctx.broadcast(self.verdict.message()),
            Stage::Hash => self.hash_and_send(ctx),
            Stage::Index if relay => {
                let n_c = self.params.n_c as u64;
                let mut prefix = 0u64;
                for (i, &b) in self.facility_counts.iter().enumerate() {
                    if b > 0 {
                        ctx.send(i, Message::scalar(MessageKind::Index, prefix % n_c));
                    }
                    prefix += b;
                }
            }
            Stage::Spread(q) => {
                let n_f = self.params.n_f;
                let lo = q as usize * n_f;
                let hi = (lo + n_f).min(self.held.len());
                for t in lo..hi {
                    let dest = ((self.offset + t as u64) % n_f as u64) as usize;
                    ctx.send(dest, edge_message(self.held[t]));
                }
            }
            _ => {}
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Report => Stage::Decide,
            Stage::Decide => {
                let (_, m) = ctx.inbox.iter().find(|(s, _)| *s == 0).expect("facility 0 always answers");
                self.verdict = Verdict::parse(m).expect("verdict message");
                if m.kind == MessageKind::Break {
                    self.offset = m.a;
                }
                Stage::Relay
            }
            Stage::Relay => {
                for (i, m) in ctx.inbox.iter() {
                    if m.kind == MessageKind::Shift {
                        self.shifts[i] = m.a;
                    }
                }
                let next = self.verdict.next_stage();
                if next == Stage::Done(MddStatus::Success) {
                    self.held.clear();
                }
                next
            }
            Stage::Hash => Stage::CountBack,
            Stage::CountBack => {
                if ctx.node.index == 0 {
                    self.facility_counts = vec![0; self.params.n_f];
                    for (i, m) in ctx.inbox.iter() {
                        if m.kind == MessageKind::Count {
                            self.facility_counts[i] = m.a;
                        }
                    }
                }
                Stage::Index
            }
            Stage::Index => Stage::Redistribute,
            Stage::Redistribute => {
                let before = self.held.len();
                self.held.extend(edges_in(ctx));
                self.received_per_iteration.push((self.held.len() - before) as u32);
                sort_dedup(&mut self.held);
                self.iterations += 1;
                Stage::Report
            }
            Stage::Spread(q) => {
                let Verdict::Break { rounds } = self.verdict else { unreachable!() };
                if q + 1 < rounds {
                    Stage::Spread(q + 1)
                } else {
                    self.held.clear();
                    Stage::Broadcast(0)
                }
            }
            Stage::Broadcast(q) => {
                let n_f = self.params.n_f;
                self.seen.extend(edges_in(ctx).map(|e| (e.u() * n_f + e.v()) as u32));
                let Verdict::Break { rounds } = self.verdict else { unreachable!() };
                if q + 1 < rounds {
                    if self.seen.len() >= self.compacted + 8 * n_f {
                        dedup_indices(&mut self.seen, n_f * n_f);
                        self.compacted = self.seen.len();
                    }
                    Stage::Broadcast(q + 1)
                } else {
                    dedup_indices(&mut self.seen, n_f * n_f);
                    self.seen.sort_unstable();
                    self.held = self.seen.drain(..).map(|k| EdgeMessage::between(k as usize / n_f, k as usize % n_f)).collect();
                    self.seen = Vec::new();
                    Stage::Done(MddStatus::Success)
                }
            }
            done @ Stage::Done(_) => done,
        }
    }
}

/// Iteration cap used inside the ruling-set computation:
/// `max(7, ⌈7·log₂log₂ min(n_f, n_c)⌉)` with the minimum clamped to at least 4.
pub fn iteration_cap(n_f: usize, n_c: usize) -> u32 {
    let m = n_f.min(n_c).max(4) as f64;
    ((7.0 * m.log2().log2()).ceil() as u32).max(7)
}

/// Runs dissemination on an existing network. Client `j` starts from
/// `witnesses(j, &state_j)`; the returned network holds the final per-node
/// dissemination states (unwrap them with `into_parts` / `into_inner`).
#[allow(clippy::type_complexity)]
pub fn run_dissemination<F: Send, C: Send>(
    net: Network<F, C>,
    iteration_cap: u32,
    mut witnesses: impl FnMut(usize, &C) -> Vec<EdgeMessage>,
) -> Result<(Network<MddFacility<F>, MddClient<C>>, MddStats), MddError> {
    if net.n_f() > MAX_FACILITIES {
        return Err(MddError::TooManyFacilities { n_f: net.n_f() });
    }
    let params = Params { n_f: net.n_f(), n_c: net.n_c(), cap: iteration_cap };
    let start = net.round();
    let mut net = net.rebind(
        |_, f| MddFacility::new(f, params),
        |j, c| {
            let held = witnesses(j, &c);
            MddClient::new(c, params, held)
        },
    );
    let finished = |n: &Network<MddFacility<F>, MddClient<C>>| {
        n.facilities().all(|f| f.status().is_some()) && n.clients().all(|c| c.status().is_some())
    };
    let outcome = net.run_until(finished, params.round_budget())?;
    if !finished(&net) {
        return Err(SimError::Protocol(format!("dissemination still running after {} rounds", outcome.rounds())).into());
    }
    let status = net.facility(0).status().expect("finished");
    if net.clients().any(|c| c.status() != Some(status)) || net.facilities().any(|f| f.status() != Some(status)) {
        return Err(SimError::Protocol("nodes disagree on the dissemination outcome".into()).into());
    }
    let stats = MddStats {
        iterations_used: net.client(0).iterations,
        rounds_used: net.round() - start,
        initial_total_copies: net.facility(0).initial_total.unwrap_or(0),
        success: status == MddStatus::Success,
    };
    Ok((net, stats))
}

/// Configuration of a standalone dissemination run.
#[derive(Debug, Clone, Copy)]
pub struct MddConfig {
    pub iteration_cap: u32,
    pub seed: u64,
    pub parallelism: Parallelism,
    pub transcript: bool,
}

impl MddConfig {
    pub fn new(iteration_cap: u32, seed: u64) -> Self {
        MddConfig { iteration_cap, seed, parallelism: Parallelism::default(), transcript: false }
    }
}

/// Result of a standalone run: per-client final sets (the union on success,
/// the partial state on timeout).
#[derive(Debug, Clone)]
pub struct MddRun {
    pub status: MddStatus,
    pub client_sets: Vec<Vec<EdgeMessage>>,
    pub received_per_iteration: Vec<Vec<u32>>,
    pub stats: MddStats,
    pub transcript: Option<String>,
}

/// Disseminates `witness_sets[j]` (client `j`'s initial messages) on a fresh
/// `n_f × n_c` network.
pub fn disseminate(
    n_f: usize,
    n_c: usize,
    witness_sets: &[Vec<EdgeMessage>],
    config: &MddConfig,
) -> Result<MddRun, MddError> {
    if witness_sets.len() != n_c {
        return Err(MddError::WitnessShape { expected: n_c, got: witness_sets.len() });
    }
    for &e in witness_sets.iter().flatten() {
        message_index(e, n_f)?;
    }
    let bound = ((n_f * n_f) as u64).max(n_c as u64).max(BREAK_FACTOR);
    let net = Network::new(n_f, n_c, config.seed, bound, |_| Idle, |_| Idle)
        .with_parallelism(config.parallelism)
        .with_transcript(config.transcript);
    let (net, stats) = run_dissemination(net, config.iteration_cap, |j, _| witness_sets[j].clone())?;
    let transcript = net.transcript().map(|t| t.as_str().to_string());
    let status = if stats.success { MddStatus::Success } else { MddStatus::Timeout };
    let received_per_iteration = net.clients().map(|c| c.received_per_iteration().to_vec()).collect();
    let (_, clients) = net.into_programs();
    let client_sets = clients.into_iter().map(|c| c.into_parts().2).collect();
    Ok(MddRun { status, client_sets, received_per_iteration, stats, transcript })
}
