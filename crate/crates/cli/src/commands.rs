use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use congest_facloc::exact::{brute_force_opt, mettu_plaxton, verify_mp_sparseness, BRUTE_FORCE_LIMIT};
use congest_facloc::experiment::{bench_grid, median};
use congest_facloc::facloc::{build_overlay, locate_facilities, verify_solution, LocateConfig};
use congest_facloc::instance::{generate_instance, Geometry};
use congest_facloc::rulingset::{verify_ruling, RsStats};
use congest_facloc::{Instance, Parallelism, RadiusProfile, Rational, Solution};
use serde::{Deserialize, Serialize};

use crate::Algorithm;

/// Largest `n_f` or `n_c` accepted by `bench`.
const BENCH_LIMIT: usize = 1 << 13;

/// Constant of the end-to-end approximation bound.
const APPROXIMATION_BOUND: u64 = 288;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub algorithm: Algorithm,
    pub cost: Rational,
    pub ratio: f64,
}

/// Output of `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n_f: usize,
    pub n_c: usize,
    pub cost: Rational,
    pub open: Vec<usize>,
    pub assign: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruling: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruling_stats: Option<RsStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    pub verdicts: BTreeMap<String, String>,
}

fn verdict<E: std::fmt::Display>(r: Result<(), E>) -> String {
    match r {
        Ok(()) => "ok".into(),
        Err(e) => e.to_string(),
    }
}

fn check(ok: bool, failure: impl FnOnce() -> String) -> String {
    if ok {
        "ok".into()
    } else {
        failure()
    }
}

fn all_ok(verdicts: &BTreeMap<String, String>) -> bool {
    verdicts.values().all(|v| v == "ok")
}

fn load_instance(path: &Path) -> Result<Instance> {
    let inst = Instance::load(path).with_context(|| format!("reading {}", path.display()))?;
    inst.validate_metric().with_context(|| format!("validating {}", path.display()))?;
    Ok(inst)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(n_f: usize, n_c: usize, seed: u64, f_max: Option<u64>, span: Option<u64>, out: &Path) -> Result<bool> {
    ensure!(n_f >= 1 && n_c >= 1, "an instance needs at least one facility and one client");
    let mut geometry = Geometry::for_size(n_f, n_c);
    if let Some(span) = span {
        geometry = Geometry { span, f_max: 4 * span.max(1) };
    }
    if let Some(f_max) = f_max {
        ensure!(f_max >= 1, "--f-max must be positive");
        geometry = geometry.with_f_max(f_max);
    }
    let inst = generate_instance(n_f, n_c, seed, &geometry);
    inst.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {}: n_f={n_f} n_c={n_c} seed={seed} span={} f_max={}",
        out.display(),
        geometry.span,
        geometry.f_max
    );
    Ok(true)
}

fn ratio(cost: &Rational, reference: &Rational) -> f64 {
    cost.to_f64() / reference.to_f64()
}

fn base_record(algorithm: Algorithm, seed: u64, inst: &Instance, solution: Solution) -> RunRecord {
    RunRecord {
        algorithm,
        seed,
        n_f: inst.n_f(),
        n_c: inst.n_c(),
        cost: solution.cost,
        open: solution.open,
        assign: solution.assign,
        rounds: None,
        messages: None,
        ruling: None,
        ruling_stats: None,
        reference: None,
        verdicts: BTreeMap::new(),
    }
}

fn run_record(inst: &Instance, algorithm: Algorithm, seed: u64) -> Result<RunRecord> {
    let profile = RadiusProfile::compute(inst)?;
    let record = match algorithm {
        Algorithm::Locate => {
            let run = locate_facilities(inst, &LocateConfig::new(seed))?;
            let mut verdicts = BTreeMap::new();
            verdicts.insert("solution".into(), verdict(verify_solution(inst, &profile, &run.solution)));
            let overlay = build_overlay(inst, &profile, Parallelism::default());
            verdicts.insert("ruling".into(), verdict(verify_ruling(&overlay, &run.ruling)));
            let reference = if inst.n_f() <= BRUTE_FORCE_LIMIT {
                let opt = brute_force_opt(inst, Parallelism::default())?.cost;
                let bound = Rational::from(APPROXIMATION_BOUND) * opt.clone();
                verdicts.insert(
                    "approximation".into(),
                    check(run.solution.cost <= bound, || format!("cost {} exceeds {APPROXIMATION_BOUND}·OPT", run.solution.cost)),
                );
                Reference { algorithm: Algorithm::Opt, ratio: ratio(&run.solution.cost, &opt), cost: opt }
            } else {
                let mp = mettu_plaxton(inst, &profile).cost;
                Reference { algorithm: Algorithm::Mp, ratio: ratio(&run.solution.cost, &mp), cost: mp }
            };
            RunRecord {
                rounds: Some(run.rounds),
                messages: Some(run.messages),
                ruling: Some(run.ruling),
                ruling_stats: Some(run.ruling_stats),
                reference: Some(reference),
                verdicts,
                ..base_record(algorithm, seed, inst, run.solution)
            }
        }
        Algorithm::Mp => {
            let solution = mettu_plaxton(inst, &profile);
            let mut verdicts = BTreeMap::new();
            verdicts.insert("sparseness".into(), verdict(verify_mp_sparseness(inst, &profile, &solution.open)));
            verdicts.insert("solution".into(), verdict(verify_solution(inst, &profile, &solution)));
            RunRecord { verdicts, ..base_record(algorithm, seed, inst, solution) }
        }
        Algorithm::Opt => {
            let solution = brute_force_opt(inst, Parallelism::default())?;
            let rbar = inst.rbar_sum(&profile);
            let mp = mettu_plaxton(inst, &profile).cost;
            let mut verdicts = BTreeMap::new();
            verdicts.insert(
                "lower_bound".into(),
                check(rbar.clone() / Rational::from(6u64) <= solution.cost, || format!("OPT below Σ r̄ / 6 = {rbar}/6")),
            );
            verdicts.insert(
                "mp_factor".into(),
                check(mp <= Rational::from(3u64) * solution.cost.clone(), || format!("greedy cost {mp} exceeds 3·OPT")),
            );
            RunRecord { verdicts, ..base_record(algorithm, seed, inst, solution) }
        }
    };
    Ok(record)
}

pub fn run(instance: &Path, algorithm: Algorithm, seed: u64, out: Option<&Path>) -> Result<bool> {
    let inst = load_instance(instance)?;
    let record = run_record(&inst, algorithm, seed)?;
    let text = serde_json::to_string_pretty(&record)? + "\n";
    match out {
        Some(path) => {
            write_text(path, &text)?;
            println!("cost {} with {} open; checks: {}", record.cost, record.open.len(), summary(&record.verdicts));
        }
        None => print!("{text}"),
    }
    Ok(all_ok(&record.verdicts))
}

fn summary(verdicts: &BTreeMap<String, String>) -> String {
    verdicts.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

pub fn bench(sizes: &[usize], trials: u64, out: &Path, sequential: bool) -> Result<bool> {
    ensure!(!sizes.is_empty(), "--sizes is empty");
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > BENCH_LIMIT) {
        bail!("size {n} outside 1..={BENCH_LIMIT}");
    }
    let parallelism = if sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    let rows = bench_grid(sizes, trials, parallelism)?;
    let mut writer = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    let mut distinct: Vec<usize> = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for n in distinct {
        let mut rounds: Vec<f64> = rows.iter().filter(|r| r.n_f == n).map(|r| r.rounds as f64).collect();
        if !rounds.is_empty() {
            println!("n={n}: median rounds {}", median(&mut rounds));
        }
    }
    let failed = rows.iter().filter(|r| r.verdict != "ok").count();
    println!("{} rows written to {}, {failed} failed checks", rows.len(), out.display());
    Ok(failed == 0)
}

pub fn verify(instance: &Path, result: Option<&Path>) -> Result<bool> {
    let inst = load_instance(instance)?;
    println!("instance: ok (n_f={}, n_c={})", inst.n_f(), inst.n_c());
    let Some(path) = result else {
        return Ok(true);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: RunRecord = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(record.n_f == inst.n_f() && record.n_c == inst.n_c(), "result does not belong to this instance");
    let verdicts = verify_record(&inst, &record)?;
    for (name, v) in &verdicts {
        println!("{name}: {v}");
    }
    Ok(all_ok(&verdicts))
}

fn verify_record(inst: &Instance, record: &RunRecord) -> Result<BTreeMap<String, String>> {
    let profile = RadiusProfile::compute(inst)?;
    let solution = Solution { open: record.open.clone(), assign: record.assign.clone(), cost: record.cost.clone() };
    let mut verdicts = BTreeMap::new();
    let priced = if solution.open.is_empty() { None } else { inst.solution_cost(&solution.open).ok() };
    verdicts.insert(
        "cost".into(),
        check(priced.as_ref().is_some_and(|p| p.cost == solution.cost && p.assign == solution.assign), || {
            "open set, assignment and cost are inconsistent".into()
        }),
    );
    match record.algorithm {
        Algorithm::Locate => {
            verdicts.insert("solution".into(), verdict(verify_solution(inst, &profile, &solution)));
            let ruling = record.ruling.clone().unwrap_or_default();
            let overlay = build_overlay(inst, &profile, Parallelism::default());
            verdicts.insert("ruling".into(), verdict(verify_ruling(&overlay, &ruling)));
            let subset = solution.open.iter().all(|i| ruling.binary_search(i).is_ok());
            verdicts.insert("open_in_ruling".into(), check(subset, || "an open facility is outside the ruling set".into()));
        }
        Algorithm::Mp => {
            verdicts.insert("sparseness".into(), verdict(verify_mp_sparseness(inst, &profile, &solution.open)));
            let expected = mettu_plaxton(inst, &profile);
            verdicts.insert("greedy".into(), check(expected.open == solution.open, || "differs from the greedy selection".into()));
        }
        Algorithm::Opt => {
            let opt = brute_force_opt(inst, Parallelism::default())?;
            verdicts.insert("optimal".into(), check(opt.cost == solution.cost, || format!("optimum is {}", opt.cost)));
        }
    }
    Ok(verdicts)
}
