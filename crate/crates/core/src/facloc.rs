//! The distributed facility-location pipeline.
//!
//! 1. Facilities broadcast their radii (1 round).
//! 2. Every client derives the radius classes and its own witness records of
//!    the overlay: a same-class pair `{i, i'}` is witnessed by `y` when
//!    `D(x_i, y) + D(x_{i'}, y) ≤ r_i + r_{i'}`.
//! 3. The ruling-set walk computes `T`, known to every client.
//! 4. Client `y` sends `open` to each `x_i ∈ T` unless `y` itself witnesses a
//!    facility `x_{i'}` of a lower class with `D(x_i, y) + D(x_{i'}, y) ≤ 2r_i`
//!    (1 round).
//! 5. Facilities that heard `open` from every client open and announce it;
//!    clients connect to their nearest open facility (1 round).

use serde::Serialize;

use crate::congest::{Message, MessageKind, Network, NodeProgram, RecvCtx, SendCtx, SimError};
use crate::instance::{Instance, InstanceError, Radius, RadiusProfile, Solution};
use crate::mdd::EdgeMessage;
use crate::par::Parallelism;
use crate::rational::Rational;
use crate::rulingset::{run_ruling_set, OverlayGraph, RsConfig, RsStats, RulingError};

#[derive(Debug, thiserror::Error)]
pub enum FlError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Ruling(#[from] RulingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Witness records of one client, given its distance column and the radius
/// profile. A same-class pair is witnessed iff the slacks `D − r` of its two
/// facilities sum to at most zero, so one slack is nonpositive and both are at
/// most `T`, the largest `−slack` in the class. Only those facilities are
/// sorted (by an approximate slack); for each one the facilities after it are
/// scanned until the approximate sum clears a rounding margin, and every pair
/// is decided exactly.
pub fn client_witnesses(column: &[u64], profile: &RadiusProfile) -> Vec<EdgeMessage> {
    let classes = profile.class_count() as usize;
    let keyed: Vec<(f64, f64)> = (0..column.len())
        .map(|i| {
            let r = profile.radius(i).to_f64();
            (column[i] as f64 - r, column[i] as f64 + r)
        })
        .collect();
    let mut reach = vec![f64::NEG_INFINITY; classes];
    for (i, &(key, mag)) in keyed.iter().enumerate() {
        if key <= MARGIN * mag {
            let k = profile.class_of(i) as usize;
            reach[k] = reach[k].max(-key + 2.0 * MARGIN * mag);
        }
    }
    let mut pool: Vec<(u32, f64, f64, usize)> = keyed
        .iter()
        .enumerate()
        .filter(|&(i, &(key, mag))| key <= reach[profile.class_of(i) as usize] + MARGIN * mag)
        .map(|(i, &(key, mag))| (profile.class_of(i), key, mag, i))
        .collect();
    pool.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.3.cmp(&b.3)));
    let mut out = Vec::new();
    for class in pool.chunk_by(|a, b| a.0 == b.0) {
        for p in 0..class.len() {
            let (_, key, mag, i) = class[p];
            for &(_, key2, mag2, i2) in &class[p + 1..] {
                if key + key2 > MARGIN * (mag + mag2) {
                    break;
                }
                if profile.radius(i).sum_at_least(profile.radius(i2), column[i] + column[i2]) {
                    out.push(EdgeMessage::between(i, i2));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Relative slack allowance for the approximate scan; far above the f64
/// rounding error of `D ± r`.
const MARGIN: f64 = 1e-9;

/// The distributed overlay: per-client witness records over same-class pairs.
pub fn build_overlay(inst: &Instance, profile: &RadiusProfile, parallelism: Parallelism) -> OverlayGraph {
    let columns = inst.columns();
    let sets = parallelism.map(&columns, |column| client_witnesses(column, profile));
    OverlayGraph::new(inst.n_f(), sets).expect("witness edges join known facilities")
}

/// For every class `k`, the client's smallest distance to a facility of a
/// class below `k`.
fn nearest_lower(column: &[u64], profile: &RadiusProfile) -> Vec<Option<u64>> {
    let classes = profile.class_count() as usize;
    let mut per_class = vec![u64::MAX; classes];
    for (i, &d) in column.iter().enumerate() {
        let k = profile.class_of(i) as usize;
        per_class[k] = per_class[k].min(d);
    }
    let mut out = Vec::with_capacity(classes);
    let mut best = None::<u64>;
    for &m in &per_class {
        out.push(best);
        if m != u64::MAX {
            best = Some(best.map_or(m, |b| b.min(m)));
        }
    }
    out
}

/// Whether a client vetoes opening `x_i`: it witnesses some lower-class
/// facility `x_{i'}` with `D(x_i, y) + D(x_{i'}, y) ≤ 2r_i`. Only the nearest
/// lower-class facility matters.
fn vetoes(column: &[u64], profile: &RadiusProfile, lower: &[Option<u64>], i: usize) -> bool {
    lower[profile.class_of(i) as usize].is_some_and(|d| profile.radius(i).scaled_at_least(2, column[i] + d))
}

/// Largest scalar the pipeline sends: radius numerators are below
/// `(f_max + D_max)·n_c`; counts and ids stay below `max(n_f², n_c)`.
pub fn pipeline_scalar_bound(inst: &Instance) -> u64 {
    let radius = (inst.max_opening_cost() + inst.max_distance()).saturating_mul(inst.n_c() as u64);
    ((inst.n_f() * inst.n_f()) as u64).max(inst.n_c() as u64).max(radius).max(crate::mdd::BREAK_FACTOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Radii,
    Ruling,
    Votes,
    Status,
    Done,
}

struct FlFacility {
    radius: Radius,
    stage: Stage,
    opened: bool,
}

struct FlClient {
    column: Vec<u64>,
    stage: Stage,
    profile: Option<RadiusProfile>,
    witnesses: Vec<EdgeMessage>,
    ruling: Vec<usize>,
    open: Vec<usize>,
    assigned: Option<usize>,
}

impl NodeProgram for FlFacility {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        match self.stage {
            Stage::Radii => ctx.broadcast(Message::new(MessageKind::Radius, self.radius.numer(), self.radius.denom() as u32)),
            Stage::Status if self.opened => ctx.broadcast(Message::signal(MessageKind::Opened)),
            _ => {}
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Radii => Stage::Ruling,
            Stage::Votes => {
                let votes = ctx.inbox.iter().filter(|(_, m)| m.kind == MessageKind::Open).count();
                self.opened = votes == ctx.n_c;
                Stage::Status
            }
            Stage::Status => Stage::Done,
            other => other,
        }
    }
}

impl NodeProgram for FlClient {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        if self.stage == Stage::Votes {
            let profile = self.profile.as_ref().expect("radii known");
            let lower = nearest_lower(&self.column, profile);
            for &i in &self.ruling {
                if !vetoes(&self.column, profile, &lower, i) {
                    ctx.send(i, Message::signal(MessageKind::Open));
                }
            }
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.stage = match self.stage {
            Stage::Radii => {
                let mut radii = vec![Radius::new(0, 1); ctx.n_f];
                for (i, m) in ctx.inbox.iter() {
                    if m.kind == MessageKind::Radius {
                        radii[i] = Radius::new(m.a, m.b as u64);
                    }
                }
                let profile = RadiusProfile::from_radii(radii);
                self.witnesses = client_witnesses(&self.column, &profile);
                self.profile = Some(profile);
                Stage::Ruling
            }
            Stage::Votes => Stage::Status,
            Stage::Status => {
                self.open = ctx.inbox.iter().filter(|(_, m)| m.kind == MessageKind::Opened).map(|(i, _)| i).collect();
                let column = &self.column;
                self.assigned = self.open.iter().copied().min_by_key(|&i| (column[i], i));
                Stage::Done
            }
            other => other,
        }
    }
}

/// Options of a pipeline run.
#[derive(Debug, Clone, Copy)]
pub struct LocateConfig {
    pub seed: u64,
    pub parallelism: Parallelism,
    pub transcript: bool,
}

impl LocateConfig {
    pub fn new(seed: u64) -> Self {
        LocateConfig { seed, parallelism: Parallelism::default(), transcript: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocateRun {
    pub solution: Solution,
    pub rounds: u64,
    pub ruling: Vec<usize>,
    pub ruling_stats: RsStats,
    pub messages: u64,
    #[serde(skip)]
    pub transcript: Option<String>,
}

/// Runs the full pipeline on `inst`.
pub fn locate_facilities(inst: &Instance, config: &LocateConfig) -> Result<LocateRun, FlError> {
    let (n_f, n_c) = (inst.n_f(), inst.n_c());
    let radii = RadiusProfile::compute(inst)?;
    let mut columns = inst.columns().into_iter();
    let mut net = Network::new(
        n_f,
        n_c,
        config.seed,
        pipeline_scalar_bound(inst),
        |i| FlFacility { radius: radii.radius(i), stage: Stage::Radii, opened: false },
        |_| FlClient {
            column: columns.next().expect("one column per client"),
            stage: Stage::Radii,
            profile: None,
            witnesses: Vec::new(),
            ruling: Vec::new(),
            open: Vec::new(),
            assigned: None,
        },
    )
    .with_parallelism(config.parallelism)
    .with_transcript(config.transcript);
    net.run_round()?;

    let rs_config = RsConfig { seed: config.seed, parallelism: config.parallelism, transcript: config.transcript, initial_level: None, max_iterations: None };
    let (rs_net, ruling_stats) = run_ruling_set(net, |_, c: &FlClient| c.witnesses.clone(), &rs_config)?;
    let mut net = rs_net.rebind(
        |_, f| {
            let mut f = f.into_inner();
            f.stage = Stage::Votes;
            f
        },
        |_, c| {
            let (mut c, ruling) = c.into_parts();
            c.ruling = ruling;
            c.stage = Stage::Votes;
            c
        },
    );
    net.run_until(|n| n.clients().all(|c| c.stage == Stage::Done), 2)?;

    let open = net.client(0).open.clone();
    if open.is_empty() {
        return Err(SimError::Protocol("no facility opened".into()).into());
    }
    if net.clients().any(|c| c.open != open) {
        return Err(SimError::Protocol("clients disagree on the open set".into()).into());
    }
    let assign: Vec<usize> = net.clients().map(|c| c.assigned.expect("open set is nonempty")).collect();
    let cost = open.iter().map(|&i| inst.opening_cost(i)).sum::<u64>()
        + assign.iter().enumerate().map(|(j, &i)| inst.dist(i, j)).sum::<u64>();
    Ok(LocateRun {
        solution: Solution { open, assign, cost: Rational::from(cost) },
        rounds: net.round(),
        ruling: net.client(0).ruling.clone(),
        ruling_stats,
        messages: net.messages_delivered(),
        transcript: net.transcript().map(|t| t.as_str().to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolutionViolation {
    #[error("no facility is open")]
    EmptyOpenSet,
    #[error("client {client} lies inside the radius balls of open facilities {a} and {b}")]
    SharedBall { client: usize, a: usize, b: usize },
    #[error("client {client} is assigned to {assigned}, which is not open")]
    NotOpen { client: usize, assigned: usize },
    #[error("client {client} is assigned to {assigned} but {nearest} is the nearest open facility")]
    NotNearest { client: usize, assigned: usize, nearest: usize },
    #[error("assignment covers {got} clients, expected {expected}")]
    AssignmentShape { expected: usize, got: usize },
    #[error("recorded cost {recorded} differs from recomputed cost {actual}")]
    Cost { recorded: String, actual: String },
}

/// Checks the structural guarantees of a pipeline solution: a nonempty open
/// set, at most one open facility per client whose radius ball contains it,
/// nearest-open assignment (lowest index on ties) and a consistent cost.
pub fn verify_solution(inst: &Instance, radii: &RadiusProfile, solution: &Solution) -> Result<(), SolutionViolation> {
    let open = &solution.open;
    if open.is_empty() {
        return Err(SolutionViolation::EmptyOpenSet);
    }
    if solution.assign.len() != inst.n_c() {
        return Err(SolutionViolation::AssignmentShape { expected: inst.n_c(), got: solution.assign.len() });
    }
    let mut sorted = open.clone();
    sorted.sort_unstable();
    sorted.dedup();
    for j in 0..inst.n_c() {
        let inside: Vec<usize> =
            sorted.iter().copied().filter(|&i| radii.radius(i).scaled_at_least(1, inst.dist(i, j))).collect();
        if inside.len() > 1 {
            return Err(SolutionViolation::SharedBall { client: j, a: inside[0], b: inside[1] });
        }
        let assigned = solution.assign[j];
        if sorted.binary_search(&assigned).is_err() {
            return Err(SolutionViolation::NotOpen { client: j, assigned });
        }
        let nearest = inst.nearest_in(&sorted, j);
        if nearest != assigned {
            return Err(SolutionViolation::NotNearest { client: j, assigned, nearest });
        }
    }
    let actual = inst.solution_cost(&sorted).expect("nonempty, in range").cost;
    if actual != solution.cost {
        return Err(SolutionViolation::Cost { recorded: solution.cost.to_string(), actual: actual.to_string() });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
