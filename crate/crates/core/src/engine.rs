//! The discrete-time simulation loop.
//!
//! Each tick runs, in order: failure/repair sampling, eviction of jobs that
//! lost a component, completions, arrivals, global scheduling, local
//! scheduling, and placement. One tick is one second.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::DEFAULT_PRECISION;
use crate::cost::{CostError, StrategyParams};
use crate::domain::{
    AssignmentRecord, Component, DomainError, EvictionReason, GridState, JobId, JobPhase, MachineId,
    ResourceId, Scenario, UserId,
};
use crate::scheduler::{schedule_global, schedule_local, GlobalPlan, LocalPlan, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("repair time must be at least one tick")]
    ZeroRepairTime,
}

pub const DEFAULT_REPAIR_TIME: u64 = 30;

/// Which components may fail, how long repairs take, and the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub machines: bool,
    pub resource_networks: bool,
    pub user_networks: bool,
    pub repair_time: u64,
    pub seed: u64,
}

impl Default for FailureModel {
    fn default() -> Self {
        Self {
            machines: true,
            resource_networks: true,
            user_networks: false,
            repair_time: DEFAULT_REPAIR_TIME,
            seed: 0,
        }
    }
}

impl FailureModel {
    pub fn none(seed: u64) -> Self {
        Self {
            machines: false,
            resource_networks: false,
            user_networks: false,
            seed,
            ..Default::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Per-tick failure probability of a component with the given MTBF.
#[inline]
pub fn failure_probability(mtbf: f64) -> f64 {
    1.0 - (-1.0 / mtbf).exp()
}

const STREAM_USER: u64 = 1 << 40;
const STREAM_RESOURCE: u64 = 2 << 40;
const STREAM_MACHINE: u64 = 3 << 40;

/// One independent random stream per component, all derived from the master seed.
#[derive(Debug, Clone)]
pub struct FailureStreams {
    users: Vec<ChaCha8Rng>,
    resources: Vec<ChaCha8Rng>,
    machines: Vec<ChaCha8Rng>,
}

impl FailureStreams {
    pub fn new(seed: u64, users: usize, resources: usize, machines: usize) -> Self {
        let make = |base: u64, n: usize| {
            (0..n as u64)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(base | i);
                    rng
                })
                .collect()
        };
        Self {
            users: make(STREAM_USER, users),
            resources: make(STREAM_RESOURCE, resources),
            machines: make(STREAM_MACHINE, machines),
        }
    }

    pub fn for_state(seed: u64, state: &GridState) -> Self {
        let sc = state.scenario();
        Self::new(seed, sc.users.len(), sc.resources.len(), sc.machine_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceChange {
    pub component: Component,
    pub up: bool,
}

/// Repairs due components, then lets every up component of an enabled class
/// fail with probability `1 - e^(-1/MTBF)`.
///
/// Every stream is advanced exactly once per tick whether or not its
/// component can fail, so enabling one class never shifts another's draws.
pub fn sample_failures(
    state: &mut GridState,
    model: &FailureModel,
    streams: &mut FailureStreams,
    t: u64,
) -> Vec<PresenceChange> {
    let mut changes = Vec::new();
    let sc = state.scenario();
    let user_mtbf: Vec<f64> = sc.users.iter().map(|u| u.net_mtbf).collect();
    let res_mtbf: Vec<f64> = sc.resources.iter().map(|r| r.net_mtbf).collect();
    let mach_mtbf: Vec<f64> = sc
        .resources
        .iter()
        .flat_map(|r| r.machines.iter().map(|m| m.mtbf))
        .collect();

    let classes: [(bool, &[f64], &mut Vec<ChaCha8Rng>, fn(u32) -> Component); 3] = [
        (model.user_networks, &user_mtbf, &mut streams.users, |i| Component::User(UserId(i))),
        (model.resource_networks, &res_mtbf, &mut streams.resources, |i| {
            Component::ResourceNetwork(ResourceId(i))
        }),
        (model.machines, &mach_mtbf, &mut streams.machines, |i| Component::Machine(MachineId(i))),
    ];
    for (enabled, mtbfs, rngs, make) in classes {
        for (i, (rng, &mtbf)) in rngs.iter_mut().zip(mtbfs).enumerate() {
            let u: f64 = rng.random();
            let component = make(i as u32);
            let status = state
                .presence
                .status_mut(component)
                .expect("streams match scenario");
            if !status.up && status.repair_at.is_some_and(|at| at <= t) {
                status.up = true;
                status.repair_at = None;
                changes.push(PresenceChange { component, up: true });
            }
            if enabled && status.up && u < failure_probability(mtbf) {
                status.up = false;
                status.repair_at = Some(t + model.repair_time);
                changes.push(PresenceChange { component, up: false });
            }
        }
    }
    changes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobStatus {
    Completed,
    FailedMachine,
    FailedResourceNetwork,
    FailedUserNetwork,
    RemovedUserLeft,
}

impl JobStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Completed => "completed",
            JobStatus::FailedMachine => "failed-machine",
            JobStatus::FailedResourceNetwork => "failed-resource-network",
            JobStatus::FailedUserNetwork => "failed-user-network",
            JobStatus::RemovedUserLeft => "removed-user-left",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(
            self,
            JobStatus::FailedMachine | JobStatus::FailedResourceNetwork | JobStatus::FailedUserNetwork
        )
    }
}

/// Terminal record of a job, as kept by the report system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    #[serde(rename = "job_id")]
    pub job: JobId,
    pub owner: UserId,
    pub status: JobStatus,
    pub arrival: u64,
    pub assign: Option<u64>,
    /// Tick the job started processing (after its transfer).
    pub start: Option<u64>,
    pub termination: u64,
    pub resource: Option<ResourceId>,
    pub machine: Option<MachineId>,
    /// Strategy-weighted cost the global scheduler saw.
    pub effective_cost: Option<f64>,
    /// Transfer plus processing time at the assigned resource.
    pub raw_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingSample {
    pub tick: u64,
    #[serde(rename = "resource_id")]
    pub resource: ResourceId,
    /// `1 - ACR_r / Σ c_m S_m`. Only reachable resources (network up, some
    /// machine up) are sampled.
    pub fraction: f64,
}

/// Free capacity seen by the schedulers this tick, for auditing plans.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityAudit {
    pub resource_free: Vec<u32>,
    pub machine_free: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub tick: u64,
    pub presence_changes: Vec<PresenceChange>,
    pub outcomes: Vec<JobOutcome>,
    pub arrivals: Vec<JobId>,
    pub global: GlobalPlan,
    pub local: Vec<(ResourceId, LocalPlan)>,
    pub audit: CapacityAudit,
    pub loading: Vec<LoadingSample>,
    pub loading_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AssignedCost {
    effective: f64,
    raw: f64,
}

/// A running simulation of one scenario under one strategy.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: GridState,
    params: StrategyParams,
    failures: FailureModel,
    streams: FailureStreams,
    precision: u32,
    arrival_order: Vec<JobId>,
    next_arrival: usize,
    costs: Vec<Option<AssignedCost>>,
    assigned: u64,
    assigned_raw_sum: f64,
    assigned_effective_sum: f64,
    reported: usize,
}

impl Simulation {
    pub fn new(scenario: Scenario, params: StrategyParams, failures: FailureModel) -> Result<Self, EngineError> {
        params.validate()?;
        if failures.repair_time == 0 {
            return Err(EngineError::ZeroRepairTime);
        }
        let state = GridState::new(scenario)?;
        let streams = FailureStreams::for_state(failures.seed, &state);
        let mut arrival_order: Vec<JobId> = state.scenario().jobs.iter().map(|j| j.id).collect();
        arrival_order.sort_by_key(|&j| (state.scenario().jobs[j.index()].arrival_time, j));
        let jobs = state.scenario().jobs.len();
        Ok(Self {
            state,
            params,
            failures,
            streams,
            precision: DEFAULT_PRECISION,
            arrival_order,
            next_arrival: 0,
            costs: vec![None; jobs],
            assigned: 0,
            assigned_raw_sum: 0.0,
            assigned_effective_sum: 0.0,
            reported: 0,
        })
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn clock(&self) -> u64 {
        self.state.clock
    }

    pub fn total_jobs(&self) -> usize {
        self.state.scenario().jobs.len()
    }

    pub fn reported(&self) -> usize {
        self.reported
    }

    pub fn all_terminal(&self) -> bool {
        self.reported == self.total_jobs()
    }

    /// Jobs assigned so far, with the summed raw and effective cost of their assignments.
    pub fn assignment_totals(&self) -> (u64, f64, f64) {
        (self.assigned, self.assigned_raw_sum, self.assigned_effective_sum)
    }

    fn outcome(&self, job: JobId, status: JobStatus, t: u64, record: Option<&AssignmentRecord>) -> JobOutcome {
        let spec = &self.state.scenario().jobs[job.index()];
        let cost = self.costs[job.index()];
        JobOutcome {
            job,
            owner: spec.owner,
            status,
            arrival: spec.arrival_time,
            assign: record.map(|r| r.assign_time),
            start: record.map(|r| r.assign_time + r.transfer_time),
            termination: t,
            resource: record.map(|r| r.resource),
            machine: record.map(|r| r.machine),
            effective_cost: cost.map(|c| c.effective),
            raw_cost: cost.map(|c| c.raw),
        }
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) -> Result<TickReport, EngineError> {
        let t = self.state.clock;
        let mut report = TickReport {
            tick: t,
            ..Default::default()
        };

        report.presence_changes = sample_failures(&mut self.state, &self.failures, &mut self.streams, t);

        for ev in self.state.apply_presence_rules(t) {
            let status = match (ev.reason, ev.record.is_some()) {
                (EvictionReason::UserDown, false) => JobStatus::RemovedUserLeft,
                (EvictionReason::UserDown, true) => JobStatus::FailedUserNetwork,
                (EvictionReason::MachineDown, _) => JobStatus::FailedMachine,
                (EvictionReason::ResourceNetworkDown, _) => JobStatus::FailedResourceNetwork,
            };
            report.outcomes.push(self.outcome(ev.job, status, t, ev.record.as_ref()));
        }

        for rec in self.state.take_completed(t) {
            report
                .outcomes
                .push(self.outcome(rec.job, JobStatus::Completed, rec.termination_time, Some(&rec)));
        }

        while let Some(&job) = self.arrival_order.get(self.next_arrival) {
            let spec = &self.state.scenario().jobs[job.index()];
            if spec.arrival_time > t {
                break;
            }
            self.next_arrival += 1;
            report.arrivals.push(job);
            if self.state.is_up(Component::User(spec.owner)) {
                self.state.enqueue(job)?;
            } else {
                self.state.reject_arrival(job)?;
                report
                    .outcomes
                    .push(self.outcome(job, JobStatus::RemovedUserLeft, t, None));
            }
        }

        report.audit = CapacityAudit {
            resource_free: self.state.free_procs_all_resources(t),
            machine_free: self.state.free_procs_all_machines(t),
        };

        let global = schedule_global(&self.state, &self.params, t, self.precision)?;
        for a in &global.assignments {
            self.state.assign_to_resource(a.job, a.resource)?;
            self.costs[a.job.index()] = Some(AssignedCost {
                effective: a.cost.effective,
                raw: a.cost.raw(),
            });
        }

        let resource_count = self.state.scenario().resources.len();
        for r in (0..resource_count).map(|i| ResourceId(i as u32)) {
            if self.state.local_queue(r)?.is_empty() {
                continue;
            }
            let plan = schedule_local(&self.state, r, &self.params, t)?;
            for &(job, machine) in &plan.placements {
                let spec = self.state.job(job)?.clone();
                let user = self.state.user(spec.owner)?;
                let res = self.state.resource(r)?;
                let transfer = spec.volume / user.bandwidth.min(res.bandwidth);
                let processing = spec.length / self.state.machine(machine)?.proc_quality;
                let rec = AssignmentRecord::new(
                    &spec,
                    r,
                    machine,
                    t,
                    transfer.ceil() as u64,
                    processing.ceil() as u64,
                );
                self.state.place(rec)?;
                if let Some(c) = self.costs[job.index()] {
                    self.assigned += 1;
                    self.assigned_raw_sum += c.raw;
                    self.assigned_effective_sum += c.effective;
                }
            }
            for &job in &plan.bounced {
                self.state.enqueue(job)?;
                self.costs[job.index()] = None;
            }
            report.local.push((r, plan));
        }
        report.global = global;

        let (loading, variance) = self.loading(t)?;
        report.loading = loading;
        report.loading_variance = variance;

        self.reported += report.outcomes.len();
        self.state.clock = t + 1;
        Ok(report)
    }

    fn loading(&self, t: u64) -> Result<(Vec<LoadingSample>, f64), EngineError> {
        let free = self.state.free_procs_all_resources(t);
        let mut samples = Vec::with_capacity(free.len());
        for (i, &acr) in free.iter().enumerate() {
            let r = ResourceId(i as u32);
            if !self.state.is_up(Component::ResourceNetwork(r)) {
                continue;
            }
            let total = self.state.up_procs_resource(r)?;
            if total == 0 {
                continue;
            }
            let fraction = 1.0 - f64::from(acr) / f64::from(total);
            samples.push(LoadingSample { tick: t, resource: r, fraction });
        }
        Ok((samples.clone(), population_variance(samples.iter().map(|s| s.fraction))))
    }

    /// Checks the job partition against the global count and recounts capacities.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.state.check_partition()?;
        self.state.check_capacity(self.state.clock)?;
        let s = &self.state;
        let not_arrived = s.count_phase(|p| p == JobPhase::NotArrived);
        let queued = s.global_queue().len()
            + (0..s.scenario().resources.len())
                .map(|r| s.local_queue(ResourceId(r as u32)).map_or(0, |q| q.len()))
                .sum::<usize>();
        let total = self.reported + queued + s.live().len() + not_arrived;
        if total != self.total_jobs() {
            return Err(format!(
                "conservation broken: {} reported + {queued} queued + {} live + {not_arrived} pending != {}",
                self.reported,
                s.live().len(),
                self.total_jobs()
            ));
        }
        Ok(())
    }
}

pub fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "ticks")]
pub enum RunLimit {
    /// Stop once every job is terminal; give up (truncated) after this many ticks.
    AllTerminal(u64),
    /// Run exactly this many ticks.
    Horizon(u64),
}

impl Default for RunLimit {
    fn default() -> Self {
        RunLimit::AllTerminal(100_000)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_jobs: u64,
    /// Completed jobs.
    pub processed: u64,
    /// Jobs lost to a machine, resource network or user network failure.
    pub failed: u64,
    pub removed: u64,
    pub assigned: u64,
    pub mean_assigned_cost: f64,
    pub mean_assigned_effective_cost: f64,
    /// Mean of termination minus arrival over completed jobs.
    pub mean_completion_time: f64,
    pub per_user_processed: Vec<u64>,
    pub mean_loading_variance: f64,
    pub ticks: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcomes: Vec<JobOutcome>,
    pub loading: Vec<LoadingSample>,
    /// Cross-resource loading variance, one entry per tick.
    pub loading_variance: Vec<f64>,
    pub metrics: RunMetrics,
}

/// Runs a scenario to its limit. Fully determined by its arguments.
pub fn run(
    scenario: Scenario,
    params: StrategyParams,
    failures: FailureModel,
    limit: RunLimit,
) -> Result<RunReport, EngineError> {
    let mut sim = Simulation::new(scenario, params, failures)?;
    run_simulation(&mut sim, limit, |_, _| {})
}

/// Drives an existing simulation, calling `observe` after every tick.
pub fn run_simulation(
    sim: &mut Simulation,
    limit: RunLimit,
    mut observe: impl FnMut(&Simulation, &TickReport),
) -> Result<RunReport, EngineError> {
    let mut outcomes = Vec::new();
    let mut loading = Vec::new();
    let mut variance = Vec::new();
    let mut truncated = false;
    loop {
        match limit {
            RunLimit::AllTerminal(max) => {
                if sim.all_terminal() {
                    break;
                }
                if sim.clock() >= max {
                    truncated = true;
                    break;
                }
            }
            RunLimit::Horizon(h) => {
                if sim.clock() >= h {
                    break;
                }
            }
        }
        let tick = sim.step()?;
        observe(sim, &tick);
        outcomes.extend(tick.outcomes);
        loading.extend(tick.loading);
        variance.push(tick.loading_variance);
    }

    let users = sim.state().scenario().users.len();
    let mut per_user = vec![0u64; users];
    let (mut processed, mut failed, mut removed) = (0u64, 0u64, 0u64);
    let mut completion_sum = 0.0;
    for o in &outcomes {
        match o.status {
            JobStatus::Completed => {
                processed += 1;
                per_user[o.owner.index()] += 1;
                completion_sum += (o.termination - o.arrival) as f64;
            }
            JobStatus::RemovedUserLeft => removed += 1,
            _ => failed += 1,
        }
    }
    let (assigned, raw_sum, eff_sum) = sim.assignment_totals();
    let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
    let metrics = RunMetrics {
        total_jobs: sim.total_jobs() as u64,
        processed,
        failed,
        removed,
        assigned,
        mean_assigned_cost: mean(raw_sum, assigned),
        mean_assigned_effective_cost: mean(eff_sum, assigned),
        mean_completion_time: mean(completion_sum, processed),
        per_user_processed: per_user,
        mean_loading_variance: mean(variance.iter().sum(), variance.len() as u64),
        ticks: sim.clock(),
        truncated,
    };
    Ok(RunReport {
        outcomes,
        loading,
        loading_variance: variance,
        metrics,
    })
}
