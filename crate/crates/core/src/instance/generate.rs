use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Instance;

/// Grid geometry for seeded instances: facilities and clients are placed
/// uniformly on `[0, span]²` and connected by L1 distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub span: u64,
    pub f_max: u64,
}

impl Geometry {
    /// Default geometry: span `4·⌈√(n_f + n_c)⌉` and opening costs up to
    /// four grid spans.
    pub fn for_size(n_f: usize, n_c: usize) -> Self {
        let span = 4 * ((n_f + n_c) as f64).sqrt().ceil() as u64;
        Geometry { span, f_max: 4 * span }
    }

    pub fn with_f_max(mut self, f_max: u64) -> Self {
        self.f_max = f_max;
        self
    }
}

/// Deterministic instance for `seed`. L1 distances between points of a common
/// grid always satisfy the bipartite triangle inequality.
pub fn generate_instance(n_f: usize, n_c: usize, seed: u64, geometry: &Geometry) -> Instance {
    assert!(n_f >= 1 && n_c >= 1, "instance needs a facility and a client");
    assert!(geometry.f_max >= 1, "f_max must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| (rng.random_range(0..=geometry.span), rng.random_range(0..=geometry.span));
    let facilities: Vec<(u64, u64)> = (0..n_f).map(|_| point(&mut rng)).collect();
    let clients: Vec<(u64, u64)> = (0..n_c).map(|_| point(&mut rng)).collect();
    let f = (0..n_f).map(|_| rng.random_range(1..=geometry.f_max)).collect();
    let rows = facilities
        .iter()
        .map(|&(fx, fy)| clients.iter().map(|&(cx, cy)| fx.abs_diff(cx) + fy.abs_diff(cy)).collect())
        .collect();
    Instance::new(f, rows).expect("generated shape is consistent")
}
