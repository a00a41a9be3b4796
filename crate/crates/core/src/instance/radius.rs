use std::cmp::Ordering;

use num_integer::Integer;

use super::{Instance, InstanceError};
use crate::rational::Rational;

/// A characteristic radius: an exact nonnegative fraction whose denominator is
/// at most `n_c`. Kept in fixed width so the hot comparisons in overlay
/// construction stay cheap; all products fit in `u128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Radius {
    num: u64,
    den: u64,
}

impl Radius {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "radius with zero denominator");
        let g = num.gcd(&den).max(1);
        Radius { num: num / g, den: den / g }
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn to_rational(self) -> Rational {
        Rational::new(self.num as i128, self.den as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self > d`.
    pub fn exceeds_int(self, d: u64) -> bool {
        self.num as u128 > d as u128 * self.den as u128
    }

    /// `self + d`, exact.
    pub fn plus_int(self, d: u64) -> Radius {
        Radius::new(self.num + d * self.den, self.den)
    }

    /// `self − d` as a signed rational.
    pub fn minus_int(self, d: u64) -> Rational {
        Rational::new(self.num as i128 - d as i128 * self.den as i128, self.den as i128)
    }

    /// `d ≤ self + other`, exact.
    pub fn sum_at_least(self, other: Radius, d: u64) -> bool {
        let lhs = d as u128 * self.den as u128 * other.den as u128;
        let rhs = self.num as u128 * other.den as u128 + other.num as u128 * self.den as u128;
        lhs <= rhs
    }

    /// `d ≤ k · self`, exact.
    pub fn scaled_at_least(self, k: u64, d: u64) -> bool {
        d as u128 * self.den as u128 <= k as u128 * self.num as u128
    }
}

impl PartialOrd for Radius {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Radius {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Solves `Σ_y max(0, r − d_y) = f` exactly.
///
/// `g(r) = Σ max(0, r − d)` is piecewise linear: on the segment where the `k`
/// nearest distances are inside the ball it equals `k·r − S_k`. Walk the sorted
/// distances until the segment containing `f` and solve there.
pub fn compute_radius(distances: &[u64], f: u64) -> Result<Radius, InstanceError> {
    if f == 0 {
        return Err(InstanceError::ZeroCost { facility: usize::MAX });
    }
    assert!(!distances.is_empty(), "a facility needs at least one client");
    let mut sorted = distances.to_vec();
    sorted.sort_unstable();
    let mut prefix: u64 = 0;
    for k in 1..=sorted.len() {
        prefix += sorted[k - 1];
        let value_at_next = match sorted.get(k) {
            Some(&next) => k as u64 * next - prefix,
            None => u64::MAX,
        };
        if value_at_next >= f {
            return Ok(Radius::new(f + prefix, k as u64));
        }
    }
    unreachable!("the last segment is unbounded")
}

/// Radii of every facility and the class partition `3^k·r_0 ≤ r_i < 3^{k+1}·r_0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiusProfile {
    radii: Vec<Radius>,
    r0: Radius,
    class_of: Vec<u32>,
}

impl RadiusProfile {
    pub fn compute(inst: &Instance) -> Result<Self, InstanceError> {
        let radii = (0..inst.n_f())
            .map(|i| {
                compute_radius(inst.row(i), inst.opening_cost(i)).map_err(|_| InstanceError::ZeroCost { facility: i })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_radii(radii))
    }

    pub fn from_radii(radii: Vec<Radius>) -> Self {
        let r0 = *radii.iter().min().expect("at least one facility");
        let class_of = radii.iter().map(|&r| class_index(r, r0)).collect();
        RadiusProfile { radii, r0, class_of }
    }

    pub fn radius(&self, i: usize) -> Radius {
        self.radii[i]
    }

    pub fn radii(&self) -> &[Radius] {
        &self.radii
    }

    pub fn r0(&self) -> Radius {
        self.r0
    }

    pub fn class_of(&self, i: usize) -> u32 {
        self.class_of[i]
    }

    pub fn classes(&self) -> &[u32] {
        &self.class_of
    }

    pub fn class_count(&self) -> u32 {
        self.class_of.iter().max().map_or(0, |k| k + 1)
    }
}

/// Largest `k` with `3^k · r0 ≤ r`; `r ≥ r0 > 0` is required.
pub(crate) fn class_index(r: Radius, r0: Radius) -> u32 {
    assert!(r0.num > 0, "class partition needs a positive minimum radius");
    // 3^k ≤ r/r0  ⇔  3^k ≤ ⌊r/r0⌋ for integral 3^k.
    let q = (r.num as u128 * r0.den as u128) / (r.den as u128 * r0.num as u128);
    let mut k = 0;
    let mut p: u128 = 3;
    while p <= q {
        k += 1;
        p *= 3;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent oracle: bisection on g(r) = Σ max(0, r − d) in floating point.
    fn bisect_radius(distances: &[u64], f: u64) -> f64 {
        let g = |r: f64| distances.iter().map(|&d| (r - d as f64).max(0.0)).sum::<f64>();
        let (mut lo, mut hi) = (0.0f64, (f + distances.iter().max().unwrap()) as f64 + 1.0);
        while (hi - lo) > hi * 2f64.powi(-45) {
            let mid = 0.5 * (lo + hi);
            if g(mid) < f as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn g_exact(distances: &[u64], r: Radius) -> Rational {
        distances.iter().filter(|&&d| r.exceeds_int(d)).map(|&d| r.minus_int(d)).sum()
    }

    #[test]
    fn oracle_values() {
        // Frozen from the bisection oracle: 5.0, 3.0, 10.5.
        assert!((bisect_radius(&[0], 5) - 5.0).abs() < 1e-9);
        assert!((bisect_radius(&[1, 2, 4], 3) - 3.0).abs() < 1e-9);
        assert!((bisect_radius(&[10, 10], 1) - 10.5).abs() < 1e-9);
    }

    #[test]
    fn radius_examples() {
        assert_eq!(compute_radius(&[0], 5).unwrap(), Radius::new(5, 1));
        assert_eq!(compute_radius(&[1, 2, 4], 3).unwrap(), Radius::new(3, 1));
        assert_eq!(compute_radius(&[10, 10], 1).unwrap(), Radius::new(21, 2));
        assert!(compute_radius(&[1], 0).is_err());
    }

    #[test]
    fn segment_boundary_lands_exactly() {
        // g(4) = 3 + 2 + 0 = 5 exactly at the third distance.
        assert_eq!(compute_radius(&[1, 2, 4], 5).unwrap(), Radius::new(4, 1));
    }

    #[test]
    fn class_partition_is_half_open() {
        let r0 = Radius::new(2, 3);
        assert_eq!(class_index(r0, r0), 0);
        assert_eq!(class_index(Radius::new(5, 3), r0), 0);
        assert_eq!(class_index(Radius::new(2, 1), r0), 1);
        assert_eq!(class_index(Radius::new(6, 1), r0), 2);
        assert_eq!(class_index(Radius::new(17, 3), r0), 1);
    }

    #[test]
    fn profile_on_small_instance() {
        let inst = Instance::new(vec![5, 3, 1], vec![vec![0, 7], vec![1, 2], vec![10, 10]]).unwrap();
        let p = RadiusProfile::compute(&inst).unwrap();
        assert_eq!(p.radius(0), Radius::new(5, 1));
        assert_eq!(p.radius(1), Radius::new(3, 1));
        assert_eq!(p.radius(2), Radius::new(21, 2));
        assert_eq!(p.r0(), Radius::new(3, 1));
        assert_eq!(p.classes(), &[0, 0, 1]);
    }

    proptest! {
        #[test]
        fn radius_solves_its_equation(ds in prop::collection::vec(0u64..200, 1..40), f in 1u64..5_000) {
            let r = compute_radius(&ds, f).unwrap();
            prop_assert_eq!(g_exact(&ds, r), Rational::from(f));
            let oracle = bisect_radius(&ds, f);
            prop_assert!((r.to_f64() - oracle).abs() <= oracle * 2f64.powi(-40));
        }

        #[test]
        fn classes_bracket_radii(ds in prop::collection::vec(prop::collection::vec(0u64..100, 3), 1..12),
                                 fs in prop::collection::vec(1u64..3_000, 12)) {
            let radii: Vec<Radius> = ds.iter().zip(&fs).map(|(d, &f)| compute_radius(d, f).unwrap()).collect();
            let p = RadiusProfile::from_radii(radii);
            prop_assert!(p.classes().contains(&0));
            for (i, &r) in p.radii().iter().enumerate() {
                let k = p.class_of(i);
                let low = p.r0().to_rational() * Rational::from_integer(3i128.pow(k));
                let high = low.clone() * Rational::from_integer(3);
                prop_assert!(low <= r.to_rational() && r.to_rational() < high);
            }
        }
    }
}
