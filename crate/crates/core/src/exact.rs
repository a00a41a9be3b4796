//! Sequential reference algorithms: the bipartite Mettu–Plaxton greedy and an
//! exhaustive optimum. Every distributed result is checked against these.

use std::cmp::Ordering;

use crate::instance::{Instance, RadiusProfile, Solution};
use crate::par::Parallelism;

/// Largest facility count accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExactError {
    #[error("brute force refuses n_f = {n_f} (limit {limit})")]
    TooManyFacilities { n_f: usize, limit: usize },
}

/// Two members of a greedy solution that sit too close together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("facilities {a} and {b} are within 2·max(r) of each other (distance {distance})")]
pub struct SparsenessViolation {
    pub a: usize,
    pub b: usize,
    pub distance: u64,
}

/// Bipartite Mettu–Plaxton: scan facilities by nondecreasing radius (index
/// breaks ties) and open one iff every already-open facility is farther than
/// twice its radius in extended facility distance.
pub fn mettu_plaxton(inst: &Instance, radii: &RadiusProfile) -> Solution {
    let mut order: Vec<usize> = (0..inst.n_f()).collect();
    order.sort_by(|&a, &b| radii.radius(a).cmp(&radii.radius(b)).then(a.cmp(&b)));
    let mut open: Vec<usize> = Vec::new();
    for i in order {
        let r = radii.radius(i);
        let blocked = open.iter().any(|&o| r.scaled_at_least(2, inst.facility_distance(i, o)));
        if !blocked {
            open.push(i);
        }
    }
    inst.solution_cost(&open).expect("the first facility always opens")
}

pub fn verify_mp_sparseness(inst: &Instance, radii: &RadiusProfile, open: &[usize]) -> Result<(), SparsenessViolation> {
    for (k, &a) in open.iter().enumerate() {
        for &b in &open[k + 1..] {
            let distance = inst.facility_distance(a, b);
            let r = radii.radius(a).max(radii.radius(b));
            if r.scaled_at_least(2, distance) {
                return Err(SparsenessViolation { a: a.min(b), b: a.max(b), distance });
            }
        }
    }
    Ok(())
}

/// Facilities of a subset bitmask in ascending order.
pub fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Lexicographic order of the ascending member lists of two masks.
fn lex_cmp(mut a: u64, mut b: u64) -> Ordering {
    loop {
        match (a == 0, b == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let (la, lb) = (a.trailing_zeros(), b.trailing_zeros());
        if la != lb {
            return la.cmp(&lb);
        }
        a &= a - 1;
        b &= b - 1;
    }
}

fn better(a: (u64, u64), b: (u64, u64)) -> (u64, u64) {
    match a.0.cmp(&b.0).then_with(|| lex_cmp(a.1, b.1)) {
        Ordering::Greater => b,
        _ => a,
    }
}

/// Integer cost of every nonempty subset; index `mask − 1`.
pub fn subset_costs(inst: &Instance, parallelism: Parallelism) -> Result<Vec<u64>, ExactError> {
    guard(inst)?;
    let n_f = inst.n_f();
    let columns: Vec<Vec<u64>> = (0..inst.n_c()).map(|j| inst.column(j)).collect();
    Ok(parallelism.map_range(1..1usize << n_f, |mask| mask_cost(inst, &columns, mask as u64)))
}

fn guard(inst: &Instance) -> Result<(), ExactError> {
    if inst.n_f() > BRUTE_FORCE_LIMIT {
        return Err(ExactError::TooManyFacilities { n_f: inst.n_f(), limit: BRUTE_FORCE_LIMIT });
    }
    Ok(())
}

fn mask_cost(inst: &Instance, columns: &[Vec<u64>], mask: u64) -> u64 {
    let members = mask_members(mask);
    let opening: u64 = members.iter().map(|&i| inst.opening_cost(i)).sum();
    let connection: u64 = columns
        .iter()
        .map(|col| members.iter().map(|&i| col[i]).min().expect("nonempty mask"))
        .sum();
    opening + connection
}

/// Minimum-cost nonempty subset by exhaustive enumeration; ties go to the
/// lexicographically smallest member list.
pub fn brute_force_opt(inst: &Instance, parallelism: Parallelism) -> Result<Solution, ExactError> {
    guard(inst)?;
    let n_f = inst.n_f();
    let columns: Vec<Vec<u64>> = (0..inst.n_c()).map(|j| inst.column(j)).collect();
    let total = 1u64 << n_f;
    let chunk = 4096u64;
    let chunks = total.div_ceil(chunk) as usize;
    let best = parallelism
        .map_range(0..chunks, |c| {
            let lo = (c as u64 * chunk).max(1);
            let hi = ((c as u64 + 1) * chunk).min(total);
            (lo..hi).map(|m| (mask_cost(inst, &columns, m), m)).reduce(better)
        })
        .into_iter()
        .flatten()
        .reduce(better)
        .expect("at least one nonempty subset");
    Ok(inst.solution_cost(&mask_members(best.1)).expect("nonempty subset"))
}
