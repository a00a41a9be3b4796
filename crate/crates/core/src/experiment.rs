//! Benchmark grid over seeded instances: each cell generates an instance,
//! runs the pipeline, checks it and compares its cost with the greedy
//! reference.

use serde::Serialize;

use crate::exact::mettu_plaxton;
use crate::facloc::{build_overlay, locate_facilities, verify_solution, FlError, LocateConfig, LocateRun};
use crate::instance::{generate_instance, Geometry, Instance, RadiusProfile};
use crate::par::Parallelism;
use crate::rulingset::verify_ruling;

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_f: usize,
    pub n_c: usize,
    pub seed: u64,
    pub rounds: u64,
    pub mdd_iterations: u64,
    pub cost_ratio_vs_mp: f64,
    pub verdict: String,
}

/// Checker verdicts of one pipeline run: `"ok"` or the first violation.
pub fn verdict(inst: &Instance, profile: &RadiusProfile, run: &LocateRun) -> String {
    if let Err(v) = verify_solution(inst, profile, &run.solution) {
        return format!("solution: {v}");
    }
    let overlay = build_overlay(inst, profile, Parallelism::Sequential);
    match verify_ruling(&overlay, &run.ruling) {
        Ok(()) => "ok".to_string(),
        Err(v) => format!("ruling: {v}"),
    }
}

/// Runs one `(n_f, n_c, seed)` cell. The simulation inside a cell is
/// sequential; parallelism is spent across cells.
pub fn bench_cell(n_f: usize, n_c: usize, seed: u64) -> Result<BenchRow, FlError> {
    let inst = generate_instance(n_f, n_c, seed, &Geometry::for_size(n_f, n_c));
    let profile = RadiusProfile::compute(&inst)?;
    let config = LocateConfig { parallelism: Parallelism::Sequential, ..LocateConfig::new(seed) };
    let run = locate_facilities(&inst, &config)?;
    let mp = mettu_plaxton(&inst, &profile);
    Ok(BenchRow {
        n_f,
        n_c,
        seed,
        rounds: run.rounds,
        mdd_iterations: run.ruling_stats.mdd_iterations,
        cost_ratio_vs_mp: run.solution.cost.to_f64() / mp.cost.to_f64(),
        verdict: verdict(&inst, &profile, &run),
    })
}

/// Runs `n_f = n_c = n` for every `n` in `sizes` and seeds `0..trials`,
/// sorted by `(n_f, seed)`.
pub fn bench_grid(sizes: &[usize], trials: u64, parallelism: Parallelism) -> Result<Vec<BenchRow>, FlError> {
    let cells: Vec<(usize, u64)> = sizes.iter().flat_map(|&n| (0..trials).map(move |s| (n, s))).collect();
    let mut rows = parallelism.map(&cells, |&(n, seed)| bench_cell(n, n, seed)).into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(|r| (r.n_f, r.n_c, r.seed));
    Ok(rows)
}

/// Median of a nonempty list (mean of the middle pair for even lengths).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}
