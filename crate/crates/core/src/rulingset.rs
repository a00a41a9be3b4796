//! 2-ruling sets of the witness-distributed overlay graph.
//!
//! Every iteration, active facilities become candidates with probability
//! `p_i = 1/(8·n_f^{2^{-i}})`; clients disseminate the overlay edges among
//! candidates, compute the same greedy MIS of that induced subgraph, add it to
//! the ruling set and retire the candidates together with their neighbours.
//! A successful dissemination moves the walk to the next state `i + 1`, a
//! timeout moves it back. The loop stops once no client holds an active
//! edge; the remaining isolated facilities then join the ruling set.
//!
//! Round schedule of one iteration:
//!
//! 1. clients report their active witness counts to facility 0;
//! 2. facility 0 broadcasts continue or stop;
//! 3. client 0 relays the verdict while active facilities announce candidacy;
//! 4. dissemination of the candidate-induced edges;
//! 5. after a success, clients tell non-candidate neighbours of candidates
//!    that they are dominated;
//! 6. candidates and dominated facilities broadcast their removal.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::congest::{Idle, Message, MessageKind, Network, NodeProgram, RecvCtx, SendCtx, SimError};
use crate::mdd::{self, iteration_cap, message_index, EdgeMessage, MddError, MddStatus};
use crate::par::Parallelism;

#[derive(Debug, thiserror::Error)]
pub enum RulingError {
    #[error(transparent)]
    Mdd(#[from] MddError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Overlay graph `H` stored as it is distributed: each client keeps the edges
/// its own distances certify. The logical edge set is the union of the
/// witness sets over pairs of active facilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayGraph {
    n_f: usize,
    witnesses: Vec<Vec<EdgeMessage>>,
    active: Vec<bool>,
}

impl OverlayGraph {
    pub fn new(n_f: usize, mut witnesses: Vec<Vec<EdgeMessage>>) -> Result<Self, MddError> {
        for set in &mut witnesses {
            for &e in set.iter() {
                message_index(e, n_f)?;
            }
            set.sort_unstable();
            set.dedup();
        }
        Ok(OverlayGraph { n_f, witnesses, active: vec![true; n_f] })
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_c(&self) -> usize {
        self.witnesses.len()
    }

    pub fn witnesses(&self, client: usize) -> &[EdgeMessage] {
        &self.witnesses[client]
    }

    pub fn witness_sets(&self) -> &[Vec<EdgeMessage>] {
        &self.witnesses
    }

    pub fn is_active(&self, facility: usize) -> bool {
        self.active[facility]
    }

    /// Deactivates a facility and erases every witness record touching it.
    pub fn deactivate(&mut self, facility: usize) {
        self.active[facility] = false;
        for set in &mut self.witnesses {
            set.retain(|e| !e.touches(facility));
        }
    }

    /// Total number of witness records, duplicates included.
    pub fn witness_copies(&self) -> usize {
        self.witnesses.iter().map(Vec::len).sum()
    }

    /// `E(H)`: distinct edges between active facilities, ascending.
    pub fn logical_edges(&self) -> Vec<EdgeMessage> {
        let mut seen = EdgeSet::new(self.n_f);
        for &e in self.witnesses.iter().flatten() {
            if self.active[e.u()] && self.active[e.v()] {
                seen.insert(e);
            }
        }
        seen.edges()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_f];
        for e in self.logical_edges() {
            adj[e.u()].push(e.v());
            adj[e.v()].push(e.u());
        }
        adj
    }
}

/// Bitset over the `n_f²` edge universe; deduplicates millions of witness
/// copies far faster than a hash set.
struct EdgeSet {
    n_f: usize,
    bits: Vec<u64>,
    len: usize,
}

impl EdgeSet {
    fn new(n_f: usize) -> Self {
        EdgeSet { n_f, bits: vec![0; (n_f * n_f).div_ceil(64)], len: 0 }
    }

    fn insert(&mut self, e: EdgeMessage) {
        let k = e.u() * self.n_f + e.v();
        let (word, bit) = (k / 64, 1u64 << (k % 64));
        if self.bits[word] & bit == 0 {
            self.bits[word] |= bit;
            self.len += 1;
        }
    }

    fn edges(&self) -> Vec<EdgeMessage> {
        let mut out = Vec::with_capacity(self.len);
        for (w, &word) in self.bits.iter().enumerate() {
            let mut rest = word;
            while rest != 0 {
                let k = w * 64 + rest.trailing_zeros() as usize;
                out.push(EdgeMessage::between(k / self.n_f, k % self.n_f));
                rest &= rest - 1;
            }
        }
        out
    }
}

/// Ascending-id greedy maximal independent set of the graph `edges` on
/// `candidates`. Edges with an endpoint outside `candidates` are ignored.
pub fn greedy_mis(edges: &[EdgeMessage], candidates: &[usize]) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in edges {
        adj.entry(e.u()).or_default().push(e.v());
        adj.entry(e.v()).or_default().push(e.u());
    }
    let mut chosen = HashSet::new();
    let mut mis = Vec::new();
    for c in order {
        if adj.get(&c).is_none_or(|ns| ns.iter().all(|n| !chosen.contains(n))) {
            chosen.insert(c);
            mis.push(c);
        }
    }
    mis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RulingViolation {
    #[error("facility {facility} is not in the overlay")]
    UnknownFacility { facility: usize },
    #[error("ruling set members {a} and {b} are adjacent")]
    Adjacent { a: usize, b: usize },
    #[error("facility {facility} is more than two hops from the ruling set")]
    Uncovered { facility: usize },
}

/// Checks that `ruling` is independent in `overlay` and that every facility
/// lies within two hops of it.
pub fn verify_ruling(overlay: &OverlayGraph, ruling: &[usize]) -> Result<(), RulingViolation> {
    let n_f = overlay.n_f();
    let mut member = vec![false; n_f];
    for &t in ruling {
        if t >= n_f {
            return Err(RulingViolation::UnknownFacility { facility: t });
        }
        member[t] = true;
    }
    let edges = overlay.logical_edges();
    let mut adj = vec![Vec::new(); n_f];
    for e in &edges {
        if member[e.u()] && member[e.v()] {
            return Err(RulingViolation::Adjacent { a: e.u(), b: e.v() });
        }
        adj[e.u()].push(e.v());
        adj[e.v()].push(e.u());
    }
    let mut hops = vec![u32::MAX; n_f];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &t in ruling {
        if hops[t] != 0 {
            hops[t] = 0;
            queue.push_back(t);
        }
    }
    while let Some(x) = queue.pop_front() {
        if hops[x] == 2 {
            continue;
        }
        for &y in &adj[x] {
            if hops[y] == u32::MAX {
                hops[y] = hops[x] + 1;
                queue.push_back(y);
            }
        }
    }
    match hops.iter().position(|&h| h == u32::MAX) {
        Some(facility) => Err(RulingViolation::Uncovered { facility }),
        None => Ok(()),
    }
}

/// Largest walk state: `⌈log₂log₂ max(n_f, 4)⌉ + 1`.
pub fn max_level(n_f: usize) -> u32 {
    (n_f.max(4) as f64).log2().log2().ceil() as u32 + 1
}

/// `1/(8·n_f^{2^{-i}})`, the root taken as `i` repeated square roots.
pub fn sampling_probability(n_f: usize, level: u32) -> f64 {
    let mut root = n_f as f64;
    for _ in 0..level {
        root = root.sqrt();
    }
    1.0 / (8.0 * root)
}

/// Position of the random walk, tracked identically by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Walk {
    level: u32,
    max: u32,
}

impl Walk {
    fn step(&mut self, success: bool) {
        self.level = if success { (self.level + 1).min(self.max) } else { self.level.saturating_sub(1) };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Report,
    Decide,
    Relay,
    /// Waiting for the dissemination phase.
    Suspended,
    Dominate,
    Remove,
    Done,
}

pub struct RsFacility<T> {
    pub inner: T,
    walk: Walk,
    stage: Stage,
    active: bool,
    candidate: bool,
    dominated: bool,
    /// Facility 0 only: active witness records reported this iteration.
    reported: u64,
}

pub struct RsClient<T> {
    pub inner: T,
    walk: Walk,
    stage: Stage,
    records: Vec<EdgeMessage>,
    active: Vec<bool>,
    candidates: Vec<bool>,
    stop: bool,
    ruling: Vec<usize>,
}

impl<T> RsFacility<T> {
    fn new(inner: T, walk: Walk) -> Self {
        RsFacility { inner, walk, stage: Stage::Report, active: true, candidate: false, dominated: false, reported: 0 }
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn into_inner(self) -> T {
        self.inner
    }

    fn after_dissemination(&mut self, status: Option<MddStatus>) {
        let success = status == Some(MddStatus::Success);
        self.walk.step(success);
        if success {
            self.stage = Stage::Dominate;
        } else {
            self.candidate = false;
            self.stage = Stage::Report;
        }
    }
}

impl<T> RsClient<T> {
    fn new(inner: T, walk: Walk, n_f: usize, mut records: Vec<EdgeMessage>) -> Self {
        records.sort_unstable();
        records.dedup();
        RsClient {
            inner,
            walk,
            stage: Stage::Report,
            records,
            active: vec![true; n_f],
            candidates: vec![false; n_f],
            stop: false,
            ruling: Vec::new(),
        }
    }

    /// The ruling set as computed by this client.
    pub fn ruling(&self) -> &[usize] {
        &self.ruling
    }

    pub fn records(&self) -> &[EdgeMessage] {
        &self.records
    }

    pub fn into_parts(self) -> (T, Vec<usize>) {
        (self.inner, self.ruling)
    }

    fn candidate_edges(&self) -> Vec<EdgeMessage> {
        self.records.iter().copied().filter(|e| self.candidates[e.u()] && self.candidates[e.v()]).collect()
    }

    fn after_dissemination(&mut self, status: Option<MddStatus>, edges: Vec<EdgeMessage>) {
        let success = status == Some(MddStatus::Success);
        self.walk.step(success);
        if success {
            let m: Vec<usize> = (0..self.candidates.len()).filter(|&i| self.candidates[i]).collect();
            self.ruling.extend(greedy_mis(&edges, &m));
            self.ruling.sort_unstable();
            self.stage = Stage::Dominate;
        } else {
            self.candidates.fill(false);
            self.stage = Stage::Report;
        }
    }
}

fn verdict_of<'a>(ctx: &RecvCtx<'a>) -> Option<bool> {
    ctx.inbox.iter().find(|(s, _)| *s == 0).and_then(|(_, m)| match m.kind {
        MessageKind::Stop => Some(true),
        MessageKind::Continue => Some(false),
        _ => None,
    })
}

impl<T: Send> NodeProgram for RsFacility<T> {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        match self.stage {
            Stage::Decide if ctx.node.index == 0 => {
                let kind = if self.reported == 0 { MessageKind::Stop } else { MessageKind::Continue };
                ctx.broadcast(Message::signal(kind));
            }
            Stage::Relay => {
                self.candidate = self.active && ctx.rng.bernoulli(sampling_probability(ctx.n_f, self.walk.level));
                if self.candidate {
                    ctx.broadcast(Message::signal(MessageKind::Candidate));
                }
            }
            Stage::Remove if self.active && (self.candidate || self.dominated) => {
                ctx.broadcast(Message::signal(MessageKind::Removed));
                self.active = false;
            }
            _ => {}
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Report => {
                if ctx.node.index == 0 {
                    self.reported = ctx.inbox.iter().filter(|(_, m)| m.kind == MessageKind::Count).map(|(_, m)| m.a).sum();
                }
                Stage::Decide
            }
            Stage::Decide => Stage::Relay,
            Stage::Relay => match verdict_of(ctx).expect("client 0 relays the verdict") {
                true => Stage::Done,
                false => Stage::Suspended,
            },
            Stage::Dominate => {
                self.dominated = ctx.inbox.iter().any(|(_, m)| m.kind == MessageKind::Dominated);
                Stage::Remove
            }
            Stage::Remove => {
                self.candidate = false;
                self.dominated = false;
                Stage::Report
            }
            other => other,
        }
    }
}

impl<T: Send> NodeProgram for RsClient<T> {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        match self.stage {
            Stage::Report => ctx.send(0, Message::scalar(MessageKind::Count, self.records.len() as u64)),
            Stage::Relay if ctx.node.index == 0 => {
                let kind = if self.stop { MessageKind::Stop } else { MessageKind::Continue };
                ctx.broadcast(Message::signal(kind));
            }
            Stage::Dominate => {
                let targets: BTreeSet<usize> = self
                    .records
                    .iter()
                    .filter_map(|e| match (self.candidates[e.u()], self.candidates[e.v()]) {
                        (true, false) => Some(e.v()),
                        (false, true) => Some(e.u()),
                        _ => None,
                    })
                    .collect();
                for t in targets {
                    ctx.send(t, Message::signal(MessageKind::Dominated));
                }
            }
            _ => {}
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Report => Stage::Decide,
            Stage::Decide => {
                self.stop = verdict_of(ctx).expect("facility 0 broadcasts the verdict");
                Stage::Relay
            }
            Stage::Relay => {
                if self.stop {
                    self.ruling.extend((0..self.active.len()).filter(|&i| self.active[i]));
                    self.ruling.sort_unstable();
                    Stage::Done
                } else {
                    self.candidates.fill(false);
                    for (i, m) in ctx.inbox.iter() {
                        if m.kind == MessageKind::Candidate {
                            self.candidates[i] = true;
                        }
                    }
                    Stage::Suspended
                }
            }
            Stage::Dominate => Stage::Remove,
            Stage::Remove => {
                for (i, m) in ctx.inbox.iter() {
                    if m.kind == MessageKind::Removed {
                        self.active[i] = false;
                    }
                }
                let active = &self.active;
                self.records.retain(|e| active[e.u()] && active[e.v()]);
                self.candidates.fill(false);
                Stage::Report
            }
            other => other,
        }
    }
}

/// Walk options. `initial_level` defaults to 1; `max_iterations` stops the
/// walk early (the ruling set is then incomplete).
#[derive(Debug, Clone, Copy)]
pub struct RsConfig {
    pub seed: u64,
    pub parallelism: Parallelism,
    pub transcript: bool,
    pub initial_level: Option<u32>,
    pub max_iterations: Option<u32>,
}

impl RsConfig {
    pub fn new(seed: u64) -> Self {
        RsConfig { seed, parallelism: Parallelism::default(), transcript: false, initial_level: None, max_iterations: None }
    }
}

/// Walk state and observed `|E(H)|` at the start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStep {
    pub level: u32,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsStats {
    pub iterations: u32,
    pub successes: u32,
    pub timeouts: u32,
    pub rounds: u64,
    pub ruling_size: usize,
    pub mdd_iterations: u64,
    pub completed: bool,
    pub trace: Vec<WalkStep>,
}

fn all_in<F, C>(net: &Network<RsFacility<F>, RsClient<C>>, pred: impl Fn(Stage) -> bool) -> bool {
    net.facilities().all(|f| pred(f.stage)) && net.clients().all(|c| pred(c.stage))
}

fn observed_edges<F, C>(net: &Network<RsFacility<F>, RsClient<C>>) -> usize {
    let mut seen = EdgeSet::new(net.n_f());
    for c in net.clients() {
        for &e in &c.records {
            seen.insert(e);
        }
    }
    seen.len
}

/// Runs the ruling-set walk on an existing network; client `j` starts from
/// the witness records `witnesses(j, &state_j)`.
#[allow(clippy::type_complexity)]
pub fn run_ruling_set<F: Send, C: Send>(
    net: Network<F, C>,
    mut witnesses: impl FnMut(usize, &C) -> Vec<EdgeMessage>,
    config: &RsConfig,
) -> Result<(Network<RsFacility<F>, RsClient<C>>, RsStats), RulingError> {
    let (n_f, n_c) = (net.n_f(), net.n_c());
    let max = max_level(n_f);
    let walk = Walk { level: config.initial_level.unwrap_or(1).min(max), max };
    let cap = iteration_cap(n_f, n_c);
    let start = net.round();
    let mut net = net.rebind(
        |_, f| RsFacility::new(f, walk),
        |j, c| {
            let records = witnesses(j, &c);
            RsClient::new(c, walk, n_f, records)
        },
    );
    let mut stats = RsStats {
        iterations: 0,
        successes: 0,
        timeouts: 0,
        rounds: 0,
        ruling_size: 0,
        mdd_iterations: 0,
        completed: false,
        trace: Vec::new(),
    };
    loop {
        if config.max_iterations.is_some_and(|m| stats.iterations >= m) {
            break;
        }
        stats.trace.push(WalkStep { level: net.client(0).walk.level, edges: observed_edges(&net) });
        net.run_until(|n| all_in(n, |s| matches!(s, Stage::Suspended | Stage::Done)), 3)?;
        if all_in(&net, |s| s == Stage::Done) {
            stats.trace.pop();
            stats.completed = true;
            break;
        }
        if !all_in(&net, |s| s == Stage::Suspended) {
            return Err(SimError::Protocol("nodes disagree on the ruling-set verdict".into()).into());
        }
        stats.iterations += 1;
        let (mdd_net, mdd_stats) = mdd::run_dissemination(net, cap, |_, c: &RsClient<C>| c.candidate_edges())?;
        stats.mdd_iterations += mdd_stats.iterations_used as u64;
        if mdd_stats.success {
            stats.successes += 1;
        } else {
            stats.timeouts += 1;
        }
        net = mdd_net.rebind(
            |_, f| {
                let status = f.status();
                let mut inner = f.into_inner();
                inner.after_dissemination(status);
                inner
            },
            |_, c| {
                let (mut inner, status, held) = c.into_parts();
                inner.after_dissemination(status, held);
                inner
            },
        );
        net.run_until(|n| all_in(n, |s| s == Stage::Report), 2)?;
        if !all_in(&net, |s| s == Stage::Report) {
            return Err(SimError::Protocol("removal phase did not settle".into()).into());
        }
    }
    let ruling = net.client(0).ruling();
    if net.clients().any(|c| c.ruling() != ruling) {
        return Err(SimError::Protocol("clients computed different ruling sets".into()).into());
    }
    stats.ruling_size = ruling.len();
    stats.rounds = net.round() - start;
    Ok((net, stats))
}

/// Result of a standalone ruling-set run.
#[derive(Debug, Clone)]
pub struct RulingRun {
    pub ruling: Vec<usize>,
    pub stats: RsStats,
    pub transcript: Option<String>,
}

/// Computes a 2-ruling set of `overlay` on a fresh network of matching size.
pub fn compute_2ruling_set(overlay: &OverlayGraph, config: &RsConfig) -> Result<RulingRun, RulingError> {
    let (n_f, n_c) = (overlay.n_f(), overlay.n_c());
    let bound = ((n_f * n_f) as u64).max(n_c as u64).max(mdd::BREAK_FACTOR);
    let net = Network::new(n_f, n_c, config.seed, bound, |_| Idle, |_| Idle)
        .with_parallelism(config.parallelism)
        .with_transcript(config.transcript);
    let (net, stats) = run_ruling_set(net, |j, _| overlay.witnesses(j).to_vec(), config)?;
    let transcript = net.transcript().map(|t| t.as_str().to_string());
    let ruling = net.client(0).ruling().to_vec();
    Ok(RulingRun { ruling, stats, transcript })
}
