use proptest::prelude::*;

use super::*;
use crate::exact::brute_force_opt;
use crate::instance::{generate_instance, Geometry};
use crate::rulingset::verify_ruling;

fn seeded(n_f: usize, n_c: usize, seed: u64) -> Instance {
    generate_instance(n_f, n_c, seed, &Geometry::for_size(n_f, n_c))
}

/// Same-class pairs with `facility_distance ≤ r_i + r_{i'}`, by exhaustion.
fn brute_force_edges(inst: &Instance, profile: &RadiusProfile) -> Vec<EdgeMessage> {
    let mut out = Vec::new();
    for i in 0..inst.n_f() {
        for i2 in i + 1..inst.n_f() {
            if profile.class_of(i) == profile.class_of(i2)
                && profile.radius(i).sum_at_least(profile.radius(i2), inst.facility_distance(i, i2))
            {
                out.push(EdgeMessage::between(i, i2));
            }
        }
    }
    out
}

#[test]
fn single_facility_opens() {
    let inst = Instance::new(vec![3], vec![vec![1, 2, 5]]).unwrap();
    let run = locate_facilities(&inst, &LocateConfig::new(0)).unwrap();
    assert_eq!(run.solution.open, vec![0]);
    assert_eq!(run.solution.assign, vec![0, 0, 0]);
    assert_eq!(run.solution.cost, Rational::from(11u64));
    assert_eq!(run.rounds, 6);
}

#[test]
fn co_located_twins_open_once() {
    let row = vec![2, 3, 7, 1];
    let inst = Instance::new(vec![4, 4, 40], vec![row.clone(), row, vec![9, 9, 9, 9]]).unwrap();
    let profile = RadiusProfile::compute(&inst).unwrap();
    assert_eq!(profile.class_of(0), profile.class_of(1));
    for seed in 0..10 {
        let run = locate_facilities(&inst, &LocateConfig::new(seed)).unwrap();
        assert_eq!(run.solution.open.iter().filter(|&&i| i < 2).count(), 1, "seed {seed}");
        verify_solution(&inst, &profile, &run.solution).unwrap();
    }
}

#[test]
fn different_classes_never_adjacent() {
    // Radii 1 and 10: same location, classes 0 and 2.
    let inst = Instance::new(vec![1, 10], vec![vec![0], vec![0]]).unwrap();
    let profile = RadiusProfile::compute(&inst).unwrap();
    assert_ne!(profile.class_of(0), profile.class_of(1));
    assert!(build_overlay(&inst, &profile, Parallelism::Sequential).logical_edges().is_empty());
}

#[test]
fn co_located_same_class_is_witnessed() {
    let inst = Instance::new(vec![2, 2], vec![vec![0, 6], vec![0, 6]]).unwrap();
    let profile = RadiusProfile::compute(&inst).unwrap();
    let overlay = build_overlay(&inst, &profile, Parallelism::Sequential);
    assert_eq!(overlay.witnesses(0), &[EdgeMessage::between(0, 1)]);
}

#[test]
fn overlay_matches_exhaustive_edges() {
    for seed in 0..40 {
        let inst = seeded(10 + (seed as usize % 20), 30, seed);
        let profile = RadiusProfile::compute(&inst).unwrap();
        let overlay = build_overlay(&inst, &profile, Parallelism::Parallel);
        assert_eq!(overlay.logical_edges(), brute_force_edges(&inst, &profile), "seed {seed}");
    }
}

#[test]
fn seeded_runs_pass_every_check() {
    for seed in 0..30 {
        let inst = seeded(3 + seed as usize % 10, 20, seed);
        let profile = RadiusProfile::compute(&inst).unwrap();
        let run = locate_facilities(&inst, &LocateConfig::new(seed)).unwrap();
        verify_solution(&inst, &profile, &run.solution).unwrap();
        let overlay = build_overlay(&inst, &profile, Parallelism::Sequential);
        verify_ruling(&overlay, &run.ruling).unwrap();
        assert!(run.solution.open.iter().all(|i| run.ruling.binary_search(i).is_ok()));
        assert_eq!(run.rounds, run.ruling_stats.rounds + 3);

        let opt = brute_force_opt(&inst, Parallelism::Parallel).unwrap().cost;
        let rbar = inst.rbar_sum(&profile);
        assert!(rbar.clone() / Rational::from(6u64) <= opt);
        assert!(opt <= run.solution.cost);
        assert!(run.solution.cost <= Rational::from(48u64) * rbar);
        assert!(run.solution.cost <= Rational::from(288u64) * opt);
    }
}

#[test]
fn lowest_class_ruling_members_always_open() {
    for seed in 0..20 {
        let inst = seeded(16, 40, seed);
        let profile = RadiusProfile::compute(&inst).unwrap();
        let run = locate_facilities(&inst, &LocateConfig::new(seed)).unwrap();
        for &t in &run.ruling {
            if profile.class_of(t) == 0 {
                assert!(run.solution.open.contains(&t), "seed {seed}: {t}");
            }
        }
    }
}

#[test]
fn verify_solution_flags_shared_balls() {
    let inst = Instance::new(vec![2, 2], vec![vec![0, 6], vec![0, 6]]).unwrap();
    let profile = RadiusProfile::compute(&inst).unwrap();
    let both = inst.solution_cost(&[0, 1]).unwrap();
    assert_eq!(verify_solution(&inst, &profile, &both), Err(SolutionViolation::SharedBall { client: 0, a: 0, b: 1 }));
    let one = inst.solution_cost(&[1]).unwrap();
    assert_eq!(verify_solution(&inst, &profile, &one), Ok(()));
    let mut bad = one.clone();
    bad.assign[1] = 0;
    assert_eq!(verify_solution(&inst, &profile, &bad), Err(SolutionViolation::NotOpen { client: 1, assigned: 0 }));
    let empty = Solution { open: vec![], assign: vec![], cost: Rational::zero() };
    assert_eq!(verify_solution(&inst, &profile, &empty), Err(SolutionViolation::EmptyOpenSet));
}

#[test]
fn sequential_and_parallel_agree() {
    let inst = seeded(24, 60, 4);
    let run = |parallelism| {
        locate_facilities(&inst, &LocateConfig { parallelism, transcript: true, ..LocateConfig::new(4) }).unwrap()
    };
    let (a, b) = (run(Parallelism::Sequential), run(Parallelism::Parallel));
    assert_eq!(a.solution, b.solution);
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.rounds, b.rounds);
}

fn naive_veto(column: &[u64], profile: &RadiusProfile, i: usize) -> bool {
    (0..column.len())
        .any(|i2| profile.class_of(i2) < profile.class_of(i) && profile.radius(i).scaled_at_least(2, column[i] + column[i2]))
}

proptest! {
    #[test]
    fn nearest_lower_veto_matches_scan(n_f in 1usize..20, n_c in 1usize..10, seed in any::<u64>()) {
        let inst = seeded(n_f, n_c, seed);
        let profile = RadiusProfile::compute(&inst).unwrap();
        for j in 0..n_c {
            let column = inst.column(j);
            let lower = nearest_lower(&column, &profile);
            for i in 0..n_f {
                prop_assert_eq!(vetoes(&column, &profile, &lower, i), naive_veto(&column, &profile, i));
            }
        }
    }

    #[test]
    fn witnesses_match_pair_scan(n_f in 1usize..25, seed in any::<u64>()) {
        let inst = seeded(n_f, 6, seed);
        let profile = RadiusProfile::compute(&inst).unwrap();
        for j in 0..6 {
            let column = inst.column(j);
            let mut expected = Vec::new();
            for i in 0..n_f {
                for i2 in i + 1..n_f {
                    if profile.class_of(i) == profile.class_of(i2)
                        && profile.radius(i).sum_at_least(profile.radius(i2), column[i] + column[i2]) {
                        expected.push(EdgeMessage::between(i, i2));
                    }
                }
            }
            prop_assert_eq!(client_witnesses(&column, &profile), expected);
        }
    }
}
