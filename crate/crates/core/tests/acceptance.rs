//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use gridsim::auction::oracle::brute_force;
use gridsim::auction::{solve, solve_with, AssignmentInstance, SolverConfig};
use gridsim::cost::{effective_cost, ResourceView, StrategyParams};
use gridsim::domain::{JobId, JobSpec, UserId, UserSpec};
use gridsim::engine::{run, run_simulation, FailureModel, RunLimit, Simulation};
use gridsim::generate::{generate_scenario, ArrivalMode, GenerateOptions};
use gridsim::properties::{
    parse_properties, presets, print_properties, GridProperties, JobProperties, PropertyFile, Range,
    UserProperties,
};
use gridsim::sweep::{run_sweep, Regime, ScenarioSource, SweepParameter, SweepResult, SweepSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

/// m ≤ 8 jobs, Σ capacities ≤ 8, integer costs in [0, 1000].
fn random_instances(n: usize) -> Vec<AssignmentInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    (0..n)
        .map(|_| {
            let rows = rng.random_range(0..=8usize);
            let cols = rng.random_range(1..=4usize);
            let mut budget = rng.random_range(0..=8usize);
            let mut caps = vec![0; cols];
            while budget > 0 {
                caps[rng.random_range(0..cols)] += 1;
                budget -= 1;
            }
            let costs = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0..=1000u32) as f64).collect())
                .collect();
            AssignmentInstance::new(costs, caps).unwrap()
        })
        .collect()
}

fn c1_solver_optimality() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let instances = random_instances(1000);
    for inst in &instances {
        let auction = solve(inst, 1000).map_err(|e| e.to_string())?;
        let oracle = brute_force(inst).map_err(|e| e.to_string())?;
        let cardinality = auction.matching.iter().flatten().count();
        if auction.objective != oracle.objective || cardinality != oracle.assigned() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{} instances, {mismatches} objective mismatches, {elapsed:.2?} (limit 10s)", instances.len()),
    )
}

fn c2_eps_cs() -> Outcome {
    let cfg = SolverConfig {
        verify_eps_cs: true,
        ..Default::default()
    };
    let (mut checks, mut violations) = (0u64, 0u64);
    for inst in &random_instances(1000) {
        let r = solve_with(inst, &cfg).map_err(|e| e.to_string())?;
        checks += r.cs_checks;
        violations += r.cs_violations;
    }
    check(
        violations == 0 && checks > 0,
        format!("{checks} slackness checks, {violations} violations"),
    )
}

fn c3_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let zero = StrategyParams::default();
    let mut worst = 0u64;
    for _ in 0..10_000 {
        let arrival = rng.random_range(0..1000u64);
        let job = JobSpec {
            id: JobId(0),
            owner: UserId(0),
            arrival_time: arrival,
            priority: rng.random_range(1.0..5.0),
            length: rng.random_range(1.0..20_000.0),
            volume: rng.random_range(1.0..2048.0),
        };
        let user = UserSpec {
            id: UserId(0),
            qos: rng.random_range(1.0..20.0),
            bandwidth: rng.random_range(1.0..1024.0),
            net_mtbf: rng.random_range(1.0..500.0),
        };
        let view = ResourceView {
            bandwidth: rng.random_range(1.0..1024.0),
            quality: rng.random_range(100.0..4000.0),
            net_mtbf: rng.random_range(1.0..500.0),
            machine_mtbf: rng.random_range(1.0..500.0),
        };
        let t = arrival + rng.random_range(0..100u64);
        let got = effective_cost(&job, &user, &view, &zero, t).map_err(|e| e.to_string())?.effective;
        let link = if user.bandwidth < view.bandwidth { user.bandwidth } else { view.bandwidth };
        let expected = job.volume / link + job.length / view.quality;
        worst = worst.max(got.to_bits().abs_diff(expected.to_bits()));
    }
    check(worst <= 1, format!("10000 triples, worst distance {worst} ulp"))
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn generated(grid: GridProperties, options: GenerateOptions) -> ScenarioSource {
    ScenarioSource::Generated {
        grid,
        users: presets::user_group(1).unwrap(),
        jobs: presets::JOBS,
        options,
    }
}

fn sweep(parameter: SweepParameter, values: Vec<f64>, scenario: ScenarioSource, limit: RunLimit) -> Result<SweepResult, String> {
    run_sweep(&SweepSpec {
        parameter,
        values,
        seeds: SEEDS.collect(),
        scenario,
        regime: Regime::UnderPeak,
        base: StrategyParams::default(),
        failures: FailureModel::default(),
        limit,
    })
    .map_err(|e| e.to_string())
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

/// G1 with a backlog: 3000 jobs arriving over 100 ticks, observed for 300 ticks.
fn c4_starvation() -> Outcome {
    let start = Instant::now();
    let values = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let res = sweep(
        SweepParameter::Sp,
        values.clone(),
        generated(presets::grid_preset("G1").unwrap(), GenerateOptions::default()),
        RunLimit::Horizon(300),
    )?;
    let cost: Vec<f64> = res.cells.iter().map(|c| c.mean_assigned_cost).collect();
    let processed: Vec<f64> = res.cells.iter().map(|c| c.processed).collect();
    let rho = spearman(&values, &cost);
    let elapsed = start.elapsed();
    check(
        rho >= 0.8 && processed[4] <= processed[0] && elapsed < Duration::from_secs(120),
        format!(
            "mean assigned cost {} (Spearman {rho:.2}), processed {}, {elapsed:.2?}",
            fmt(&cost),
            fmt(&processed)
        ),
    )
}

/// G11 grid with machine MTBFs at the lowest published bounds, under-peak load.
fn c5_failing() -> Outcome {
    let mut grid = presets::grid_preset("G11").unwrap();
    grid.machine_fail_rate = Range::new(10, 60);
    let res = sweep(
        SweepParameter::Fp,
        vec![0.0, 1.0, 2.0],
        generated(
            grid,
            GenerateOptions {
                jobs_per_set: 1,
                horizon: 1000,
                ..Default::default()
            },
        ),
        RunLimit::AllTerminal(100_000),
    )?;
    let failed: Vec<f64> = res.cells.iter().map(|c| c.failed).collect();
    let drop = (failed[0] - failed[2]) / failed[0];
    check(
        failed[0] >= failed[1] && failed[1] >= failed[2] && drop >= 0.05,
        format!("mean failed {}, drop fp 0→2 {:.1}%", fmt(&failed), drop * 100.0),
    )
}

/// G1 with a backlog; users split between the lowest and highest qos.
fn c6_qos() -> Outcome {
    let res = sweep(
        SweepParameter::Qp,
        vec![0.0, 1.0, 2.0, 3.0],
        generated(presets::grid_preset("G1").unwrap(), GenerateOptions::default()),
        RunLimit::Horizon(300),
    )?;
    let hi: Vec<f64> = res.cells.iter().map(|c| c.max_qos_processed).collect();
    let lo: Vec<f64> = res.cells.iter().map(|c| c.min_qos_processed).collect();
    let hi_up = hi.windows(2).all(|w| w[1] >= w[0]);
    let lo_down = lo.windows(2).all(|w| w[1] <= w[0]);
    let plateau = (hi[3] - hi[2]).abs() < (hi[1] - hi[0]).abs();
    check(
        hi_up && lo_down && plateau,
        format!("max-qos processed {}, min-qos processed {}", fmt(&hi), fmt(&lo)),
    )
}

struct BalanceRun {
    variance: Vec<f64>,
    /// Ticks where the queued jobs fit in the free processors.
    under_peak_ticks: usize,
}

fn balance_run(options: GenerateOptions, balance: bool, seed: u64, ticks: u64) -> Result<BalanceRun, String> {
    let scenario = generate_scenario(
        &presets::grid_preset("G11").unwrap(),
        &presets::user_group(1).unwrap(),
        &presets::JOBS,
        &options,
        seed,
    );
    let params = StrategyParams {
        balance_global: balance,
        ..Default::default()
    };
    let mut sim = Simulation::new(scenario, params, FailureModel::none(seed)).map_err(|e| e.to_string())?;
    let mut under = 0;
    let report = run_simulation(&mut sim, RunLimit::Horizon(ticks), |_, tick| {
        let queued = tick.global.assignments.len() + tick.global.deferred.len();
        let free: u32 = tick.audit.resource_free.iter().sum();
        if queued <= free as usize {
            under += 1;
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(BalanceRun {
        variance: report.loading_variance,
        under_peak_ticks: under,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Seven resources (G11), no component failures so only the policy differs.
/// Under-peak: 1200 jobs spread over 200 ticks. In-peak: 3000 jobs arriving
/// within the first 10 ticks, observed for 150.
fn c7_balancing() -> Outcome {
    let under = GenerateOptions {
        jobs_per_set: 4,
        horizon: 200,
        ..Default::default()
    };
    let (mut le, mut total, mut under_ticks) = (0usize, 0usize, 0usize);
    let (mut on_sum, mut off_sum) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let off = balance_run(under, false, seed, 200)?;
        let on = balance_run(under, true, seed, 200)?;
        for (a, b) in off.variance.iter().zip(&on.variance) {
            total += 1;
            if *b <= *a {
                le += 1;
            }
        }
        under_ticks += off.under_peak_ticks;
        on_sum.extend(on.variance);
        off_sum.extend(off.variance);
    }
    let share = le as f64 / total as f64;
    let regime = under_ticks as f64 / total as f64;
    let on_mean = mean(on_sum.into_iter());
    let off_mean = mean(off_sum.into_iter());

    let peak = GenerateOptions {
        horizon: 40,
        arrivals: ArrivalMode::Peak,
        ..Default::default()
    };
    let (mut peak_on, mut peak_off, mut peak_ticks, mut peak_total) = (Vec::new(), Vec::new(), 0usize, 0usize);
    for seed in SEEDS {
        let off = balance_run(peak, false, seed, 150)?;
        let on = balance_run(peak, true, seed, 150)?;
        peak_total += off.variance.len();
        peak_ticks += off.variance.len() - off.under_peak_ticks;
        peak_on.extend(on.variance);
        peak_off.extend(off.variance);
    }
    let (pon, poff) = (mean(peak_on.into_iter()), mean(peak_off.into_iter()));
    let rel = (pon - poff).abs() / poff.max(pon);
    let peak_regime = peak_ticks as f64 / peak_total as f64;
    check(
        share >= 0.9 && on_mean < 0.01 && rel < 0.25 && regime >= 0.9 && peak_regime >= 0.9,
        format!(
            "under-peak ({:.0}% of ticks): on≤off at {:.1}% of ticks, mean variance on {on_mean:.5} / off {off_mean:.5}; \
             in-peak ({:.0}% of ticks): means on {pon:.5} / off {poff:.5}, differ {:.1}%",
            regime * 100.0,
            share * 100.0,
            peak_regime * 100.0,
            rel * 100.0
        ),
    )
}

fn random_range(rng: &mut ChaCha8Rng) -> Range {
    let a = rng.random_range(1..1_000_000u64);
    let b = rng.random_range(1..1_000_000u64);
    Range::new(a.min(b), a.max(b))
}

fn round_trips<P: PropertyFile + PartialEq + std::fmt::Debug>(p: &P) -> bool {
    parse_properties::<P>(&print_properties(p)).as_ref() == Ok(p)
}

fn c8_parser() -> Outcome {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");
    let read = |f: &str| std::fs::read_to_string(format!("{dir}/{f}")).map_err(|e| e.to_string());
    let grid: GridProperties = parse_properties(&read("grid_properties.txt")?).map_err(|e| e.to_string())?;
    let users: UserProperties = parse_properties(&read("user_properties.txt")?).map_err(|e| e.to_string())?;
    let jobs: JobProperties = parse_properties(&read("job_properties.txt")?).map_err(|e| e.to_string())?;
    let figures = grid.values() == [3, 32, 512, 30, 120, 1, 4, 15, 90, 1200, 3600, 1, 8]
        && users.values() == [10, 20, 100, 16, 512, 2, 10]
        && jobs.values() == [1200, 12000, 32, 1024];

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..1000 {
        let g = GridProperties {
            number_of_resources: rng.random_range(1..100),
            resource_bandwidth: random_range(&mut rng),
            resource_bandwidth_fail_rate: random_range(&mut rng),
            machines_per_resource: random_range(&mut rng),
            machine_fail_rate: random_range(&mut rng),
            processor_speed: random_range(&mut rng),
            processors_per_machine: random_range(&mut rng),
        };
        let u = UserProperties {
            number_of_users: rng.random_range(1..100),
            user_bandwidth_fail_rate: random_range(&mut rng),
            user_bandwidth: random_range(&mut rng),
            user_quality_of_service: random_range(&mut rng),
        };
        let j = JobProperties {
            job_length: random_range(&mut rng),
            job_input_volume: random_range(&mut rng),
        };
        if !(round_trips(&g) && round_trips(&u) && round_trips(&j)) {
            failures += 1;
        }
    }
    check(
        figures && failures == 0,
        format!("sample files parse exactly: {figures}; 1000 random records, {failures} round-trip failures"),
    )
}

fn c9_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grids = presets::GRIDS;
    let mut ticks = 0u64;
    for k in 0..100u64 {
        let (_, grid) = grids[rng.random_range(0..grids.len())];
        let options = GenerateOptions {
            n_job_sets: rng.random_range(1..=10),
            jobs_per_set: rng.random_range(1..=10),
            horizon: rng.random_range(1..=150),
            arrivals: if rng.random_bool(0.5) { ArrivalMode::Peak } else { ArrivalMode::Spread },
            qos_extremes: false,
        };
        let users = presets::user_group(rng.random_range(1..=2)).unwrap();
        let scenario = generate_scenario(&grid, &users, &presets::JOBS, &options, k);
        let params = StrategyParams {
            fp: rng.random_range(0.0..2.0),
            qp: rng.random_range(0.0..2.0),
            sp: rng.random_range(0.0..2.0),
            balance_global: rng.random_bool(0.5),
            balance_local: rng.random_bool(0.5),
        };
        let failures = FailureModel {
            user_networks: rng.random_bool(0.5),
            ..FailureModel::default().with_seed(k)
        };
        let mut sim = Simulation::new(scenario.clone(), params, failures).map_err(|e| e.to_string())?;
        let mut broken: Option<String> = None;
        let report = run_simulation(&mut sim, RunLimit::Horizon(200), |sim, tick| {
            if broken.is_some() {
                return;
            }
            if let Err(e) = sim.check_invariants() {
                broken = Some(format!("tick {}: {e}", tick.tick));
                return;
            }
            // each queued job goes to at most one resource, within its free processors
            let mut seen = HashSet::new();
            let mut per_resource = vec![0u32; tick.audit.resource_free.len()];
            for a in &tick.global.assignments {
                if !seen.insert(a.job) {
                    broken = Some(format!("tick {}: {} assigned twice", tick.tick, a.job));
                }
                per_resource[a.resource.index()] += 1;
            }
            for (r, (&n, &free)) in per_resource.iter().zip(&tick.audit.resource_free).enumerate() {
                if n > free {
                    broken = Some(format!("tick {}: r{r} got {n} jobs for {free} free processors", tick.tick));
                }
            }
            // each placed job lands on one machine, within its free processors
            let mut placed = HashSet::new();
            let mut per_machine = vec![0u32; tick.audit.machine_free.len()];
            for (_, plan) in &tick.local {
                for &(job, m) in &plan.placements {
                    if !placed.insert(job) {
                        broken = Some(format!("tick {}: {job} placed twice", tick.tick));
                    }
                    per_machine[m.index()] += 1;
                }
            }
            for (m, (&n, &free)) in per_machine.iter().zip(&tick.audit.machine_free).enumerate() {
                if n > free {
                    broken = Some(format!("tick {}: m{m} got {n} jobs for {free} free processors", tick.tick));
                }
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(e) = broken {
            return Err(format!("scenario {k}: {e}"));
        }
        let again = run(scenario, params, failures, RunLimit::Horizon(200)).map_err(|e| e.to_string())?;
        let a = serde_json::to_vec(&report).map_err(|e| e.to_string())?;
        let b = serde_json::to_vec(&again).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("scenario {k}: repeated run differs"));
        }
        ticks += report.metrics.ticks;
    }
    Ok(format!("100 scenarios, {ticks} ticks checked, repeated runs byte-identical"))
}

fn c10_scale() -> Outcome {
    let options = GenerateOptions {
        n_job_sets: 6,
        jobs_per_set: 10,
        ..Default::default()
    };
    let scenario = generate_scenario(
        &presets::grid_preset("G11").unwrap(),
        &presets::user_group(1).unwrap(),
        &presets::JOBS,
        &options,
        10,
    );
    let jobs = scenario.jobs.len();
    let procs: u32 = scenario.resources.iter().map(|r| r.total_procs()).sum();
    let start = Instant::now();
    let report = run(
        scenario,
        StrategyParams::default(),
        FailureModel::default().with_seed(10),
        RunLimit::AllTerminal(100_000),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        jobs == 600 && !report.metrics.truncated && elapsed < Duration::from_secs(5),
        format!(
            "{jobs} jobs on 7 resources / {procs} processors, {} ticks, {elapsed:.2?} (limit 5s)",
            report.metrics.ticks
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 solver optimality", c1_solver_optimality),
        ("2 eps-CS invariant", c2_eps_cs),
        ("3 zero-exponent reduction", c3_reduction),
        ("4 starvation trend", c4_starvation),
        ("5 failing trend", c5_failing),
        ("6 qos trend", c6_qos),
        ("7 load balancing", c7_balancing),
        ("8 parser fidelity", c8_parser),
        ("9 simulation conservation", c9_conservation),
        ("10 scale", c10_scale),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
