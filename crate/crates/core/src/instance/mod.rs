//! Problem data for bipartite metric facility location, plus the closed-form
//! quantities derived from it (radii, extended distances, `r̄`, charges and
//! solution costs). All arithmetic is exact.

mod generate;
mod radius;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;

pub use generate::{generate_instance, Geometry};
pub use radius::{compute_radius, Radius, RadiusProfile};

/// Above this many `(facility, client)` pairs the literal quadruple sweep is
/// replaced by the facility-distance reduction.
const FULL_QUADRUPLE_CHECK: usize = 64;
/// Above this much work (`n_f² · n_c`) the metric check is sampled.
const EXACT_CHECK_BUDGET: usize = 1 << 27;
const SAMPLED_QUADRUPLES: usize = 1 << 18;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("instance needs at least one facility and one client")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("zero opening cost at facility {facility}")]
    ZeroCost { facility: usize },
    #[error("metric violation: {0}")]
    Metric(MetricViolation),
    #[error("open set is empty")]
    EmptyOpenSet,
    #[error("facility index {0} out of range")]
    FacilityOutOfRange(usize),
    #[error("invalid instance json")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A witness that the bipartite triangle inequality fails:
/// `D(facility, client) > D(facility, via_client) + D(via_facility, via_client)
/// + D(via_facility, client)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricViolation {
    pub facility: usize,
    pub client: usize,
    pub via_facility: usize,
    pub via_client: usize,
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "D(x{}, y{}) exceeds the path through y{} and x{}",
            self.facility, self.client, self.via_client, self.via_facility
        )
    }
}

/// Opening costs and the `n_f × n_c` connection-cost matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n_f: usize,
    n_c: usize,
    f: Vec<u64>,
    // row-major, one row per facility
    d: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n_f: usize,
    n_c: usize,
    f: Vec<u64>,
    #[serde(rename = "D")]
    d: Vec<Vec<u64>>,
}

impl Instance {
    /// Builds an instance after checking its shape. Opening costs and the
    /// metric are checked separately by [`Instance::validate_metric`].
    pub fn new(f: Vec<u64>, rows: Vec<Vec<u64>>) -> Result<Self, InstanceError> {
        let n_f = f.len();
        if n_f == 0 || rows.first().is_none_or(|r| r.is_empty()) {
            return Err(InstanceError::Empty);
        }
        if rows.len() != n_f {
            return Err(InstanceError::Shape(format!("{} cost entries but {} distance rows", n_f, rows.len())));
        }
        let n_c = rows[0].len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_c) {
            return Err(InstanceError::Shape(format!("row {i} has {} entries, expected {n_c}", row.len())));
        }
        Ok(Instance { n_f, n_c, f, d: rows.concat() })
    }

    /// Shape check plus full validation (positive costs, metric).
    pub fn validated(f: Vec<u64>, rows: Vec<Vec<u64>>) -> Result<Self, InstanceError> {
        let inst = Self::new(f, rows)?;
        inst.validate_metric()?;
        Ok(inst)
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn opening_cost(&self, i: usize) -> u64 {
        self.f[i]
    }

    pub fn opening_costs(&self) -> &[u64] {
        &self.f
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> u64 {
        self.d[i * self.n_c + j]
    }

    /// Distances from facility `i` to every client.
    pub fn row(&self, i: usize) -> &[u64] {
        &self.d[i * self.n_c..(i + 1) * self.n_c]
    }

    /// Distances from client `j` to every facility.
    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.n_f).map(|i| self.dist(i, j)).collect()
    }

    /// Every client's distance column, transposed in cache-sized tiles.
    pub fn columns(&self) -> Vec<Vec<u64>> {
        const TILE: usize = 64;
        let mut cols = vec![vec![0; self.n_f]; self.n_c];
        for i0 in (0..self.n_f).step_by(TILE) {
            for j0 in (0..self.n_c).step_by(TILE) {
                let j1 = (j0 + TILE).min(self.n_c);
                for i in i0..(i0 + TILE).min(self.n_f) {
                    let row = &self.d[i * self.n_c + j0..i * self.n_c + j1];
                    for (col, &d) in cols[j0..j1].iter_mut().zip(row) {
                        col[i] = d;
                    }
                }
            }
        }
        cols
    }

    pub fn max_distance(&self) -> u64 {
        self.d.iter().copied().max().unwrap_or(0)
    }

    pub fn max_opening_cost(&self) -> u64 {
        self.f.iter().copied().max().unwrap_or(0)
    }

    /// Extended facility–facility distance `min_y D(x_i,y) + D(x_i',y)`.
    pub fn facility_distance(&self, i: usize, i2: usize) -> u64 {
        self.facility_distance_via(i, i2).0
    }

    /// Like [`facility_distance`](Self::facility_distance), also returning the
    /// lowest-index client attaining the minimum.
    pub fn facility_distance_via(&self, i: usize, i2: usize) -> (u64, usize) {
        let (a, b) = (self.row(i), self.row(i2));
        let mut best = (u64::MAX, 0);
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            if x + y < best.0 {
                best = (x + y, j);
            }
        }
        best
    }

    /// Checks positive opening costs and the bipartite triangle inequality.
    ///
    /// Small instances are checked quadruple by quadruple; medium ones exactly
    /// through the extended facility distance; large ones on a seeded sample.
    pub fn validate_metric(&self) -> Result<(), InstanceError> {
        if let Some(i) = self.f.iter().position(|&c| c == 0) {
            return Err(InstanceError::ZeroCost { facility: i });
        }
        let violation = if self.n_f * self.n_c <= FULL_QUADRUPLE_CHECK {
            self.quadruple_sweep()
        } else if self.n_f * self.n_f * self.n_c <= EXACT_CHECK_BUDGET {
            self.reduced_check()
        } else {
            self.sampled_check(SAMPLED_QUADRUPLES)
        };
        match violation {
            Some(v) => Err(InstanceError::Metric(v)),
            None => Ok(()),
        }
    }

    fn violates(&self, i: usize, j: usize, i2: usize, j2: usize) -> bool {
        self.dist(i, j) > self.dist(i, j2) + self.dist(i2, j2) + self.dist(i2, j)
    }

    fn quadruple_sweep(&self) -> Option<MetricViolation> {
        for i in 0..self.n_f {
            for j in 0..self.n_c {
                for i2 in 0..self.n_f {
                    for j2 in 0..self.n_c {
                        if self.violates(i, j, i2, j2) {
                            return Some(MetricViolation { facility: i, client: j, via_facility: i2, via_client: j2 });
                        }
                    }
                }
            }
        }
        None
    }

    // D(i,j) <= D(i,j') + D(i',j') + D(i',j) for all (i',j') is equivalent to
    // D(i,j) <= min_i' (facility_distance(i,i') + D(i',j)).
    fn reduced_check(&self) -> Option<MetricViolation> {
        for i in 0..self.n_f {
            for i2 in 0..self.n_f {
                let (fd, via) = self.facility_distance_via(i, i2);
                for (j, &d) in self.row(i2).iter().enumerate() {
                    if self.dist(i, j) > fd + d {
                        return Some(MetricViolation { facility: i, client: j, via_facility: i2, via_client: via });
                    }
                }
            }
        }
        None
    }

    fn sampled_check(&self, samples: usize) -> Option<MetricViolation> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6d65_7472_6963);
        (0..samples).find_map(|_| {
            let (i, i2) = (rng.random_range(0..self.n_f), rng.random_range(0..self.n_f));
            let (j, j2) = (rng.random_range(0..self.n_c), rng.random_range(0..self.n_c));
            self.violates(i, j, i2, j2)
                .then_some(MetricViolation { facility: i, client: j, via_facility: i2, via_client: j2 })
        })
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            n_f: self.n_f,
            n_c: self.n_c,
            f: self.f.clone(),
            d: (0..self.n_f).map(|i| self.row(i).to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("instance serialization is infallible")
    }

    /// Parses and fully validates an instance.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.f.len() != file.n_f || file.d.len() != file.n_f || file.d.iter().any(|r| r.len() != file.n_c) {
            return Err(InstanceError::Shape(format!(
                "declared {}x{} does not match the cost vector and distance matrix",
                file.n_f, file.n_c
            )));
        }
        Self::validated(file.f, file.d)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// `r̄_j = min_i (r_i + D(x_i, y_j))`.
    pub fn rbar(&self, radii: &RadiusProfile, j: usize) -> Rational {
        (0..self.n_f)
            .map(|i| radii.radius(i).plus_int(self.dist(i, j)))
            .min()
            .expect("n_f >= 1")
            .to_rational()
    }

    pub fn rbar_sum(&self, radii: &RadiusProfile) -> Rational {
        (0..self.n_c).map(|j| self.rbar(radii, j)).sum()
    }

    fn check_open_set(&self, open: &[usize]) -> Result<(), InstanceError> {
        if open.is_empty() {
            return Err(InstanceError::EmptyOpenSet);
        }
        match open.iter().find(|&&i| i >= self.n_f) {
            Some(&i) => Err(InstanceError::FacilityOutOfRange(i)),
            None => Ok(()),
        }
    }

    /// `D(F, y_j) + Σ_{i∈F} max(0, r_i − D(x_i, y_j))`.
    pub fn charge(&self, radii: &RadiusProfile, open: &[usize], j: usize) -> Result<Rational, InstanceError> {
        self.check_open_set(open)?;
        let nearest = open.iter().map(|&i| self.dist(i, j)).min().expect("nonempty");
        let mut total = Rational::from(nearest);
        for &i in open {
            let r = radii.radius(i);
            if r.exceeds_int(self.dist(i, j)) {
                total = total + r.minus_int(self.dist(i, j));
            }
        }
        Ok(total)
    }

    /// Integer cost `Σ_{i∈F} f_i + Σ_j D(F, y_j)`; `open` must be nonempty.
    pub fn facloc_cost(&self, open: &[usize]) -> u64 {
        let opening: u64 = open.iter().map(|&i| self.f[i]).sum();
        let connection: u64 = (0..self.n_c)
            .map(|j| open.iter().map(|&i| self.dist(i, j)).min().expect("nonempty open set"))
            .sum();
        opening + connection
    }

    /// Connects every client to its nearest open facility (lowest index on
    /// ties) and prices the result.
    pub fn solution_cost(&self, open: &[usize]) -> Result<Solution, InstanceError> {
        self.check_open_set(open)?;
        let mut open = open.to_vec();
        open.sort_unstable();
        open.dedup();
        let assign: Vec<usize> = (0..self.n_c).map(|j| self.nearest_in(&open, j)).collect();
        let cost = open.iter().map(|&i| self.f[i]).sum::<u64>()
            + assign.iter().enumerate().map(|(j, &i)| self.dist(i, j)).sum::<u64>();
        Ok(Solution { open, assign, cost: Rational::from(cost) })
    }

    /// Nearest facility of a sorted set to client `j`, lowest index on ties.
    pub fn nearest_in(&self, sorted_open: &[usize], j: usize) -> usize {
        let mut best = sorted_open[0];
        for &i in &sorted_open[1..] {
            if self.dist(i, j) < self.dist(best, j) {
                best = i;
            }
        }
        best
    }
}

/// A set of open facilities and the client assignment it induces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub open: Vec<usize>,
    pub assign: Vec<usize>,
    pub cost: Rational,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Instance {
        Instance::new(vec![1, 1], vec![vec![1, 5], vec![4, 2]]).unwrap()
    }

    #[test]
    fn columns_transpose_rows() {
        let inst = Instance::new(vec![1; 3], vec![vec![1, 2, 3, 4], vec![5, 6, 7, 8], vec![9, 10, 11, 12]]).unwrap();
        let cols = inst.columns();
        assert_eq!(cols.len(), 4);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col, &inst.column(j));
        }
    }

    #[test]
    fn facility_distance_examples() {
        let inst = two_by_two();
        assert_eq!(inst.facility_distance(0, 1), 5);
        assert_eq!(inst.facility_distance(1, 0), 5);
        assert_eq!(inst.facility_distance(0, 0), 2);
        assert_eq!(inst.facility_distance(1, 1), 4);
    }

    #[test]
    fn solution_cost_on_two_by_two() {
        let inst = two_by_two();
        let sol = inst.solution_cost(&[0]).unwrap();
        assert_eq!(sol.cost, Rational::from_integer(7));
        assert_eq!(sol.assign, vec![0, 0]);
        let both = inst.solution_cost(&[1, 0]).unwrap();
        assert_eq!(both.open, vec![0, 1]);
        assert_eq!(both.assign, vec![0, 1]);
        assert_eq!(both.cost, Rational::from_integer(5));
    }

    #[test]
    fn single_facility_cost() {
        let inst = Instance::new(vec![9], vec![vec![3, 4, 0]]).unwrap();
        assert_eq!(inst.solution_cost(&[0]).unwrap().cost, Rational::from_integer(16));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let inst = Instance::new(vec![1, 1, 1], vec![vec![3], vec![2], vec![2]]).unwrap();
        assert_eq!(inst.solution_cost(&[2, 1, 0]).unwrap().assign, vec![1]);
    }

    #[test]
    fn empty_open_set_rejected() {
        let inst = two_by_two();
        assert!(matches!(inst.solution_cost(&[]), Err(InstanceError::EmptyOpenSet)));
        let radii = RadiusProfile::compute(&inst).unwrap();
        assert!(matches!(inst.charge(&radii, &[], 0), Err(InstanceError::EmptyOpenSet)));
        assert!(matches!(inst.solution_cost(&[7]), Err(InstanceError::FacilityOutOfRange(7))));
    }

    #[test]
    fn metric_violation_reported() {
        let inst = Instance::new(vec![1, 1], vec![vec![1, 100], vec![1, 1]]).unwrap();
        match inst.validate_metric() {
            Err(InstanceError::Metric(v)) => {
                assert_eq!(v, MetricViolation { facility: 0, client: 1, via_facility: 1, via_client: 0 });
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn zero_cost_rejected() {
        let inst = Instance::new(vec![0, 2], vec![vec![1, 1], vec![1, 1]]).unwrap();
        let err = inst.validate_metric().unwrap_err();
        assert!(matches!(err, InstanceError::ZeroCost { facility: 0 }));
        assert_eq!(err.to_string(), "zero opening cost at facility 0");
    }

    #[test]
    fn reduced_and_sampled_checks_agree_with_sweep() {
        // 4 x 20 exceeds the literal-sweep threshold.
        let mut inst = generate_instance(4, 20, 11, &Geometry::for_size(4, 20));
        assert!(inst.validate_metric().is_ok());
        assert!(inst.quadruple_sweep().is_none());
        inst.d[3] += 1000;
        assert!(inst.quadruple_sweep().is_some());
        let v = inst.reduced_check().expect("violation");
        assert!(inst.violates(v.facility, v.client, v.via_facility, v.via_client));
        let v = inst.sampled_check(1 << 16).expect("violation");
        assert!(inst.violates(v.facility, v.client, v.via_facility, v.via_client));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(Instance::new(vec![], vec![]), Err(InstanceError::Empty)));
        assert!(matches!(Instance::new(vec![1], vec![vec![]]), Err(InstanceError::Empty)));
        assert!(matches!(Instance::new(vec![1, 2], vec![vec![1]]), Err(InstanceError::Shape(_))));
        assert!(matches!(Instance::new(vec![1, 2], vec![vec![1], vec![1, 2]]), Err(InstanceError::Shape(_))));
        let bad = r#"{"n_f":2,"n_c":1,"f":[1],"D":[[1],[1]]}"#;
        assert!(matches!(Instance::from_json(bad), Err(InstanceError::Shape(_))));
    }

    #[test]
    fn json_round_trip() {
        let inst = two_by_two();
        assert_eq!(inst.to_json(), r#"{"n_f":2,"n_c":2,"f":[1,1],"D":[[1,5],[4,2]]}"#);
        assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);
    }
}
