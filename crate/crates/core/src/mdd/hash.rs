use std::fmt;

use crate::congest::NodeRng;

use super::MddError;

/// An overlay adjacency `{u, v}` between two facilities, stored with `u < v`
/// so duplicate copies compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeMessage {
    u: u32,
    v: u32,
}

impl EdgeMessage {
    /// Canonical edge; fails unless `u < v`.
    pub fn new(u: usize, v: usize) -> Result<Self, MddError> {
        if u >= v {
            return Err(MddError::NonCanonical { u, v });
        }
        Ok(EdgeMessage { u: u as u32, v: v as u32 })
    }

    /// Edge between two distinct facilities in either order.
    pub fn between(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "overlay edges join distinct facilities");
        EdgeMessage { u: a.min(b) as u32, v: a.max(b) as u32 }
    }

    pub fn u(self) -> usize {
        self.u as usize
    }

    pub fn v(self) -> usize {
        self.v as usize
    }

    pub fn touches(self, x: usize) -> bool {
        self.u() == x || self.v() == x
    }

    /// The endpoint that is not `x`.
    pub fn other(self, x: usize) -> usize {
        if self.u() == x {
            self.v()
        } else {
            self.u()
        }
    }
}

impl fmt::Display for EdgeMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.u, self.v)
    }
}

/// 1-based position of an edge in the universe `[1, n_f²]`:
/// `u·n_f + v + 1` for 0-based endpoints `u < v`.
pub fn message_index(edge: EdgeMessage, n_f: usize) -> Result<u64, MddError> {
    if edge.v() >= n_f {
        return Err(MddError::OutOfUniverse { edge, n_f });
    }
    Ok((edge.u() * n_f + edge.v() + 1) as u64)
}

/// 1-based group `⌈index / n_f⌉` of a universe index.
pub fn group_of(index: u64, n_f: usize) -> u64 {
    index.div_ceil(n_f as u64)
}

/// A member of the hash family: group `g` of the universe is mapped onto the
/// facilities by the cyclic shift `shifts[g − 1] ∈ {1..n_f}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashAssignment {
    shifts: Vec<u64>,
}

impl HashAssignment {
    pub fn from_shifts(shifts: Vec<u64>) -> Result<Self, MddError> {
        let n_f = shifts.len() as u64;
        if let Some(&s) = shifts.iter().find(|&&s| s == 0 || s > n_f) {
            return Err(MddError::ShiftOutOfRange { shift: s, n_f: n_f as usize });
        }
        Ok(HashAssignment { shifts })
    }

    /// One uniform draw per group.
    pub fn sample(n_f: usize, rng: &mut NodeRng) -> Self {
        HashAssignment { shifts: (0..n_f).map(|_| rng.random_int(n_f as u64)).collect() }
    }

    pub fn n_f(&self) -> usize {
        self.shifts.len()
    }

    pub fn shifts(&self) -> &[u64] {
        &self.shifts
    }

    /// Destination facility (0-based) of an edge.
    pub fn destination(&self, edge: EdgeMessage) -> usize {
        // The edge's index lies in group u + 1 at offset v.
        let n_f = self.n_f();
        let d = edge.v() + self.shifts[edge.u()] as usize;
        if d >= n_f {
            d - n_f
        } else {
            d
        }
    }
}

/// `((index − 1) mod n_f + shift_g) mod n_f`, the 0-based facility receiving a
/// universe index (1-based facility `h` in the usual notation is this plus one).
pub fn hash_message(assignment: &HashAssignment, index: u64, n_f: usize) -> usize {
    debug_assert!(index >= 1 && index <= (n_f * n_f) as u64);
    let n = n_f as u64;
    let shift = assignment.shifts[(group_of(index, n_f) - 1) as usize];
    (((index - 1) % n + shift) % n) as usize
}
