//! Grid entities and the grid information state.
//!
//! [`GridState`] is the single source of truth the schedulers read from:
//! component presence, the global queue, per-resource local queues and the
//! live assignment records. Free-processor counts are always recomputed from
//! the live records rather than cached, so they can be audited by recount.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }
    };
}

id_newtype!(
    /// Job identifier; equals the job's index in [`Scenario::jobs`].
    JobId,
    "j"
);
id_newtype!(
    /// User identifier; equals the user's index in [`Scenario::users`].
    UserId,
    "u"
);
id_newtype!(
    /// Resource identifier; equals the resource's index in [`Scenario::resources`].
    ResourceId,
    "r"
);
id_newtype!(
    /// Machine identifier, unique across the whole grid.
    MachineId,
    "m"
);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("unknown machine {0}")]
    UnknownMachine(MachineId),
    #[error("resource {0} has no free processors; its processing quality is undefined")]
    UndefinedQuality(ResourceId),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("job {job} is {actual:?}, expected {expected}")]
    WrongPhase {
        job: JobId,
        actual: JobPhase,
        expected: &'static str,
    },
    #[error("cannot place job {job} on {machine}: {reason}")]
    Placement {
        job: JobId,
        machine: MachineId,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: JobId,
    pub owner: UserId,
    /// Arrival tick (seconds).
    pub arrival_time: u64,
    /// Dimensionless, at least 1.
    pub priority: f64,
    /// Million instructions.
    pub length: f64,
    /// Input volume in KB.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: UserId,
    pub qos: f64,
    /// Link bandwidth in KB/s.
    pub bandwidth: f64,
    /// Mean time between link failures, seconds.
    pub net_mtbf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: MachineId,
    /// Per-processor speed in MI/s.
    pub proc_quality: f64,
    pub proc_count: u32,
    /// Mean time between machine failures, seconds.
    pub mtbf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub id: ResourceId,
    pub bandwidth: f64,
    pub net_mtbf: f64,
    pub machines: Vec<MachineSpec>,
}

impl ResourceSpec {
    pub fn total_procs(&self) -> u32 {
        self.machines.iter().map(|m| m.proc_count).sum()
    }
}

/// A complete, self-consistent grid workload: who submits what, and where it can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<UserSpec>,
    pub resources: Vec<ResourceSpec>,
    pub jobs: Vec<JobSpec>,
}

impl Scenario {
    /// Checks identifier layout and every entity invariant.
    ///
    /// Users, resources and jobs must be numbered by position; machines are
    /// numbered consecutively across resources in declaration order.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: String| Err(DomainError::InvalidScenario(msg));
        for (i, u) in self.users.iter().enumerate() {
            if u.id.index() != i {
                return bad(format!("user at position {i} has id {}", u.id));
            }
            if !(u.bandwidth > 0.0 && u.bandwidth.is_finite()) {
                return bad(format!("{}: bandwidth must be positive", u.id));
            }
            if !(u.net_mtbf > 0.0) {
                return bad(format!("{}: network mtbf must be positive", u.id));
            }
            if !(u.qos >= 1.0 && u.qos.is_finite()) {
                return bad(format!("{}: qos must be at least 1", u.id));
            }
        }
        let mut next_machine = 0u32;
        for (i, r) in self.resources.iter().enumerate() {
            if r.id.index() != i {
                return bad(format!("resource at position {i} has id {}", r.id));
            }
            if r.machines.is_empty() {
                return bad(format!("{}: no machines", r.id));
            }
            if !(r.bandwidth > 0.0 && r.bandwidth.is_finite()) {
                return bad(format!("{}: bandwidth must be positive", r.id));
            }
            if !(r.net_mtbf > 0.0) {
                return bad(format!("{}: network mtbf must be positive", r.id));
            }
            for m in &r.machines {
                if m.id.0 != next_machine {
                    return bad(format!(
                        "{}: expected machine id m{next_machine}, found {}",
                        r.id, m.id
                    ));
                }
                next_machine += 1;
                if !(m.proc_quality > 0.0 && m.proc_quality.is_finite()) {
                    return bad(format!("{}: processing quality must be positive", m.id));
                }
                if m.proc_count == 0 {
                    return bad(format!("{}: needs at least one processor", m.id));
                }
                if !(m.mtbf > 0.0) {
                    return bad(format!("{}: mtbf must be positive", m.id));
                }
            }
        }
        for (i, j) in self.jobs.iter().enumerate() {
            if j.id.index() != i {
                return bad(format!("job at position {i} has id {}", j.id));
            }
            if j.owner.index() >= self.users.len() {
                return bad(format!("{}: owner {} does not exist", j.id, j.owner));
            }
            if !(j.length > 0.0 && j.length.is_finite()) {
                return bad(format!("{}: length must be positive", j.id));
            }
            if !(j.volume > 0.0 && j.volume.is_finite()) {
                return bad(format!("{}: volume must be positive", j.id));
            }
            if !(j.priority >= 1.0 && j.priority.is_finite()) {
                return bad(format!("{}: priority must be at least 1", j.id));
            }
        }
        Ok(())
    }

    pub fn machine_count(&self) -> usize {
        self.resources.iter().map(|r| r.machines.len()).sum()
    }
}

/// One row of the live assignment table. All times are whole ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub job: JobId,
    pub owner: UserId,
    pub resource: ResourceId,
    pub machine: MachineId,
    pub arrival_time: u64,
    pub assign_time: u64,
    pub transfer_time: u64,
    pub processing_time: u64,
    pub termination_time: u64,
}

impl AssignmentRecord {
    pub fn new(
        job: &JobSpec,
        resource: ResourceId,
        machine: MachineId,
        assign_time: u64,
        transfer_time: u64,
        processing_time: u64,
    ) -> Self {
        Self {
            job: job.id,
            owner: job.owner,
            resource,
            machine,
            arrival_time: job.arrival_time,
            assign_time,
            transfer_time,
            processing_time,
            termination_time: assign_time + transfer_time + processing_time,
        }
    }

    /// The processor stays reserved while this holds.
    #[inline]
    pub fn occupies(&self, t: u64) -> bool {
        self.termination_time > t
    }
}

/// Where a job currently sits. Exactly one phase per job at any time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobPhase {
    NotArrived,
    Global,
    Local(ResourceId),
    Live,
    Reported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    User(UserId),
    ResourceNetwork(ResourceId),
    Machine(MachineId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentStatus {
    pub up: bool,
    /// Tick at which a down component comes back.
    pub repair_at: Option<u64>,
}

impl Default for ComponentStatus {
    fn default() -> Self {
        Self {
            up: true,
            repair_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub users: Vec<ComponentStatus>,
    pub resources: Vec<ComponentStatus>,
    pub machines: Vec<ComponentStatus>,
}

impl Presence {
    fn all_up(users: usize, resources: usize, machines: usize) -> Self {
        Self {
            users: vec![ComponentStatus::default(); users],
            resources: vec![ComponentStatus::default(); resources],
            machines: vec![ComponentStatus::default(); machines],
        }
    }

    pub fn status(&self, c: Component) -> Option<&ComponentStatus> {
        match c {
            Component::User(u) => self.users.get(u.index()),
            Component::ResourceNetwork(r) => self.resources.get(r.index()),
            Component::Machine(m) => self.machines.get(m.index()),
        }
    }

    pub fn status_mut(&mut self, c: Component) -> Option<&mut ComponentStatus> {
        match c {
            Component::User(u) => self.users.get_mut(u.index()),
            Component::ResourceNetwork(r) => self.resources.get_mut(r.index()),
            Component::Machine(m) => self.machines.get_mut(m.index()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvictionReason {
    UserDown,
    MachineDown,
    ResourceNetworkDown,
}

/// A job removed by the presence rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Eviction {
    pub job: JobId,
    pub reason: EvictionReason,
    /// The live record, when the job had already been placed.
    pub record: Option<AssignmentRecord>,
}

#[derive(Debug, Clone)]
pub struct GridState {
    scenario: Scenario,
    /// machine id -> (resource index, position within resource)
    machine_loc: Vec<(usize, usize)>,
    pub clock: u64,
    pub presence: Presence,
    global_queue: Vec<JobId>,
    local_queues: Vec<Vec<JobId>>,
    live: Vec<AssignmentRecord>,
    phase: Vec<JobPhase>,
}

impl GridState {
    pub fn new(scenario: Scenario) -> Result<Self, DomainError> {
        scenario.validate()?;
        let mut machine_loc = Vec::with_capacity(scenario.machine_count());
        for (ri, r) in scenario.resources.iter().enumerate() {
            for mi in 0..r.machines.len() {
                machine_loc.push((ri, mi));
            }
        }
        let presence = Presence::all_up(
            scenario.users.len(),
            scenario.resources.len(),
            machine_loc.len(),
        );
        Ok(Self {
            local_queues: vec![Vec::new(); scenario.resources.len()],
            phase: vec![JobPhase::NotArrived; scenario.jobs.len()],
            scenario,
            machine_loc,
            clock: 0,
            presence,
            global_queue: Vec::new(),
            live: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn job(&self, id: JobId) -> Result<&JobSpec, DomainError> {
        self.scenario.jobs.get(id.index()).ok_or(DomainError::UnknownJob(id))
    }

    pub fn user(&self, id: UserId) -> Result<&UserSpec, DomainError> {
        self.scenario
            .users
            .get(id.index())
            .ok_or(DomainError::UnknownUser(id))
    }

    pub fn resource(&self, id: ResourceId) -> Result<&ResourceSpec, DomainError> {
        self.scenario
            .resources
            .get(id.index())
            .ok_or(DomainError::UnknownResource(id))
    }

    pub fn machine(&self, id: MachineId) -> Result<&MachineSpec, DomainError> {
        let &(r, m) = self
            .machine_loc
            .get(id.index())
            .ok_or(DomainError::UnknownMachine(id))?;
        Ok(&self.scenario.resources[r].machines[m])
    }

    pub fn machine_resource(&self, id: MachineId) -> Result<ResourceId, DomainError> {
        self.machine_loc
            .get(id.index())
            .map(|&(r, _)| ResourceId(r as u32))
            .ok_or(DomainError::UnknownMachine(id))
    }

    pub fn phase(&self, id: JobId) -> Result<JobPhase, DomainError> {
        self.phase
            .get(id.index())
            .copied()
            .ok_or(DomainError::UnknownJob(id))
    }

    pub fn global_queue(&self) -> &[JobId] {
        &self.global_queue
    }

    pub fn local_queue(&self, r: ResourceId) -> Result<&[JobId], DomainError> {
        self.local_queues
            .get(r.index())
            .map(Vec::as_slice)
            .ok_or(DomainError::UnknownResource(r))
    }

    pub fn live(&self) -> &[AssignmentRecord] {
        &self.live
    }

    pub fn is_up(&self, c: Component) -> bool {
        self.presence.status(c).is_some_and(|s| s.up)
    }

    pub fn set_up(&mut self, c: Component, up: bool) {
        if let Some(s) = self.presence.status_mut(c) {
            s.up = up;
            if up {
                s.repair_at = None;
            }
        }
    }

    /// ACM_m(t): free processors on one machine.
    pub fn free_procs_machine(&self, id: MachineId, t: u64) -> Result<u32, DomainError> {
        let spec = self.machine(id)?;
        if !self.presence.machines[id.index()].up {
            return Ok(0);
        }
        let busy = self
            .live
            .iter()
            .filter(|rec| rec.machine == id && rec.occupies(t))
            .count() as u32;
        Ok(spec.proc_count.saturating_sub(busy))
    }

    /// ACM for every machine, indexed by machine id, in one pass over the live table.
    pub fn free_procs_all_machines(&self, t: u64) -> Vec<u32> {
        let mut busy = vec![0u32; self.machine_loc.len()];
        for rec in self.live.iter().filter(|rec| rec.occupies(t)) {
            busy[rec.machine.index()] += 1;
        }
        self.machine_loc
            .iter()
            .enumerate()
            .map(|(i, &(r, m))| {
                if self.presence.machines[i].up {
                    self.scenario.resources[r].machines[m]
                        .proc_count
                        .saturating_sub(busy[i])
                } else {
                    0
                }
            })
            .collect()
    }

    /// ACR_r(t): free processors on a resource, zero when its network is down.
    pub fn free_procs_resource(&self, id: ResourceId, t: u64) -> Result<u32, DomainError> {
        let spec = self.resource(id)?;
        if !self.presence.resources[id.index()].up {
            return Ok(0);
        }
        spec.machines
            .iter()
            .map(|m| self.free_procs_machine(m.id, t))
            .sum()
    }

    /// ACR for every resource, indexed by resource id.
    pub fn free_procs_all_resources(&self, t: u64) -> Vec<u32> {
        let acm = self.free_procs_all_machines(t);
        self.scenario
            .resources
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if self.presence.resources[i].up {
                    r.machines.iter().map(|m| acm[m.id.index()]).sum()
                } else {
                    0
                }
            })
            .collect()
    }

    /// Σ c_m·S_m(t) over a resource's machines.
    pub fn up_procs_resource(&self, id: ResourceId) -> Result<u32, DomainError> {
        Ok(self
            .resource(id)?
            .machines
            .iter()
            .filter(|m| self.presence.machines[m.id.index()].up)
            .map(|m| m.proc_count)
            .sum())
    }

    pub fn ready_resources(&self, t: u64) -> Vec<ResourceId> {
        self.free_procs_all_resources(t)
            .into_iter()
            .enumerate()
            .filter(|&(_, free)| free > 0)
            .map(|(i, _)| ResourceId(i as u32))
            .collect()
    }

    pub fn ready_machines(&self, id: ResourceId, t: u64) -> Result<Vec<MachineId>, DomainError> {
        let spec = self.resource(id)?;
        let mut out = Vec::new();
        for m in &spec.machines {
            if self.free_procs_machine(m.id, t)? > 0 {
                out.push(m.id);
            }
        }
        Ok(out)
    }

    /// pq_r(t): processing quality weighted by free processors.
    pub fn resource_quality(&self, id: ResourceId, t: u64) -> Result<f64, DomainError> {
        let spec = self.resource(id)?;
        let mut weighted = 0.0;
        let mut free_total = 0u32;
        if self.presence.resources[id.index()].up {
            for m in &spec.machines {
                let free = self.free_procs_machine(m.id, t)?;
                weighted += f64::from(free) * m.proc_quality;
                free_total += free;
            }
        }
        if free_total == 0 {
            return Err(DomainError::UndefinedQuality(id));
        }
        Ok(weighted / f64::from(free_total))
    }

    /// af_r: mean machine MTBF over the resource's up machines.
    pub fn mean_machine_mtbf(&self, id: ResourceId) -> Result<Option<f64>, DomainError> {
        let spec = self.resource(id)?;
        let (sum, n) = spec
            .machines
            .iter()
            .filter(|m| self.presence.machines[m.id.index()].up)
            .fold((0.0, 0u32), |(s, n), m| (s + m.mtbf, n + 1));
        Ok((n > 0).then(|| sum / f64::from(n)))
    }

    /// Removes every job that lost a component it depends on.
    ///
    /// Queued jobs (global or local) are removed when their owner is down.
    /// Live jobs are removed when their resource network, their machine or
    /// their owner is down; the first matching cause in that order is reported.
    pub fn apply_presence_rules(&mut self, _t: u64) -> Vec<Eviction> {
        let mut evicted = Vec::new();
        let user_down = |state: &Self, u: UserId| !state.presence.users[u.index()].up;

        let mut keep = Vec::with_capacity(self.global_queue.len());
        for &job in &self.global_queue {
            if user_down(self, self.scenario.jobs[job.index()].owner) {
                evicted.push(Eviction {
                    job,
                    reason: EvictionReason::UserDown,
                    record: None,
                });
            } else {
                keep.push(job);
            }
        }
        self.global_queue = keep;

        for r in 0..self.local_queues.len() {
            let queue = std::mem::take(&mut self.local_queues[r]);
            let (gone, stay): (Vec<_>, Vec<_>) = queue
                .into_iter()
                .partition(|j| user_down(self, self.scenario.jobs[j.index()].owner));
            evicted.extend(gone.into_iter().map(|job| Eviction {
                job,
                reason: EvictionReason::UserDown,
                record: None,
            }));
            self.local_queues[r] = stay;
        }

        let live = std::mem::take(&mut self.live);
        for rec in live {
            let reason = if !self.presence.resources[rec.resource.index()].up {
                Some(EvictionReason::ResourceNetworkDown)
            } else if !self.presence.machines[rec.machine.index()].up {
                Some(EvictionReason::MachineDown)
            } else if user_down(self, rec.owner) {
                Some(EvictionReason::UserDown)
            } else {
                None
            };
            match reason {
                Some(reason) => evicted.push(Eviction {
                    job: rec.job,
                    reason,
                    record: Some(rec),
                }),
                None => self.live.push(rec),
            }
        }

        for e in &evicted {
            self.phase[e.job.index()] = JobPhase::Reported;
        }
        evicted
    }

    fn expect_phase(&self, job: JobId, want: JobPhase, label: &'static str) -> Result<(), DomainError> {
        let actual = self.phase(job)?;
        if actual != want {
            return Err(DomainError::WrongPhase {
                job,
                actual,
                expected: label,
            });
        }
        Ok(())
    }

    /// Adds an arrived job to the global queue, keeping it ordered by (arrival, id).
    pub fn enqueue(&mut self, job: JobId) -> Result<(), DomainError> {
        let phase = self.phase(job)?;
        if !matches!(phase, JobPhase::NotArrived | JobPhase::Local(_)) {
            return Err(DomainError::WrongPhase {
                job,
                actual: phase,
                expected: "not-arrived or local",
            });
        }
        if let JobPhase::Local(r) = phase {
            self.local_queues[r.index()].retain(|&j| j != job);
        }
        let key = |j: JobId| (self.scenario.jobs[j.index()].arrival_time, j);
        let pos = self
            .global_queue
            .partition_point(|&other| key(other) < key(job));
        self.global_queue.insert(pos, job);
        self.phase[job.index()] = JobPhase::Global;
        Ok(())
    }

    /// Moves a queued job to a resource's local queue (x_{j r}(t) = 1).
    pub fn assign_to_resource(&mut self, job: JobId, r: ResourceId) -> Result<(), DomainError> {
        self.resource(r)?;
        self.expect_phase(job, JobPhase::Global, "global")?;
        self.global_queue.retain(|&j| j != job);
        self.local_queues[r.index()].push(job);
        self.phase[job.index()] = JobPhase::Local(r);
        Ok(())
    }

    /// Turns a locally queued job into a live record.
    pub fn place(&mut self, record: AssignmentRecord) -> Result<(), DomainError> {
        self.expect_phase(record.job, JobPhase::Local(record.resource), "local on target resource")?;
        if self.machine_resource(record.machine)? != record.resource {
            return Err(DomainError::Placement {
                job: record.job,
                machine: record.machine,
                reason: "machine belongs to another resource",
            });
        }
        if !self.presence.resources[record.resource.index()].up
            || self.free_procs_machine(record.machine, record.assign_time)? == 0
        {
            return Err(DomainError::Placement {
                job: record.job,
                machine: record.machine,
                reason: "no free processor",
            });
        }
        self.local_queues[record.resource.index()].retain(|&j| j != record.job);
        self.phase[record.job.index()] = JobPhase::Live;
        self.live.push(record);
        Ok(())
    }

    /// Removes and returns the live records whose termination time has passed.
    pub fn take_completed(&mut self, t: u64) -> Vec<AssignmentRecord> {
        let (done, running): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|rec| !rec.occupies(t));
        self.live = running;
        for rec in &done {
            self.phase[rec.job.index()] = JobPhase::Reported;
        }
        done
    }

    /// Marks a job terminal without it ever being queued (owner down at arrival).
    pub fn reject_arrival(&mut self, job: JobId) -> Result<(), DomainError> {
        self.expect_phase(job, JobPhase::NotArrived, "not-arrived")?;
        self.phase[job.index()] = JobPhase::Reported;
        Ok(())
    }

    pub fn count_phase(&self, pred: impl Fn(JobPhase) -> bool) -> usize {
        self.phase.iter().filter(|&&p| pred(p)).count()
    }

    /// Verifies that queue contents and the phase table agree exactly.
    pub fn check_partition(&self) -> Result<(), String> {
        let mut seen = vec![None::<JobPhase>; self.phase.len()];
        let mut mark = |job: JobId, p: JobPhase| -> Result<(), String> {
            let slot = seen
                .get_mut(job.index())
                .ok_or_else(|| format!("{job} out of range"))?;
            if let Some(prev) = slot {
                return Err(format!("{job} appears in both {prev:?} and {p:?}"));
            }
            *slot = Some(p);
            Ok(())
        };
        for &j in &self.global_queue {
            mark(j, JobPhase::Global)?;
        }
        for (r, q) in self.local_queues.iter().enumerate() {
            for &j in q {
                mark(j, JobPhase::Local(ResourceId(r as u32)))?;
            }
        }
        for rec in &self.live {
            mark(rec.job, JobPhase::Live)?;
        }
        for (i, p) in self.phase.iter().enumerate() {
            let job = JobId(i as u32);
            match (p, seen[i]) {
                (JobPhase::NotArrived | JobPhase::Reported, None) => {}
                (p, Some(s)) if *p == s => {}
                (p, s) => return Err(format!("{job}: phase table says {p:?}, containers say {s:?}")),
            }
        }
        Ok(())
    }

    /// Recounts live records per machine and resource against processor totals.
    pub fn check_capacity(&self, t: u64) -> Result<(), String> {
        let mut per_machine = vec![0u32; self.machine_loc.len()];
        for rec in self.live.iter().filter(|r| r.occupies(t)) {
            per_machine[rec.machine.index()] += 1;
            let owner = self.machine_loc[rec.machine.index()].0;
            if owner != rec.resource.index() {
                return Err(format!("{} placed on {} of another resource", rec.job, rec.machine));
            }
            if rec.termination_time != rec.assign_time + rec.transfer_time + rec.processing_time {
                return Err(format!("{}: inconsistent termination time", rec.job));
            }
        }
        for (i, &(r, m)) in self.machine_loc.iter().enumerate() {
            let cap = self.scenario.resources[r].machines[m].proc_count;
            if per_machine[i] > cap {
                return Err(format!("m{i}: {} live jobs on {cap} processors", per_machine[i]));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn state_with(machines: Vec<(f64, u32)>, jobs: usize) -> GridState {
        let ms = machines
            .into_iter()
            .enumerate()
            .map(|(i, (pq, c))| machine(i as u32, pq, c))
            .collect();
        GridState::new(Scenario {
            users: vec![user(0)],
            resources: vec![resource(0, ms)],
            jobs: (0..jobs as u32).map(|i| job(i, 0, 1200.0)).collect(),
        })
        .unwrap()
    }

    #[test]
    fn machine_free_counts() {
        let mut s = state_with(vec![(1200.0, 8)], 5);
        assert_eq!(s.free_procs_machine(MachineId(0), 0).unwrap(), 8);
        for j in 0..3 {
            occupy(&mut s, j, 0, 10);
        }
        for j in 3..5 {
            occupy(&mut s, j, 0, 4);
        }
        // et > t counts; et <= t does not.
        assert_eq!(s.free_procs_machine(MachineId(0), 4).unwrap(), 5);
        s.set_up(Component::Machine(MachineId(0)), false);
        assert_eq!(s.free_procs_machine(MachineId(0), 4).unwrap(), 0);
        assert_eq!(
            s.free_procs_machine(MachineId(9), 0),
            Err(DomainError::UnknownMachine(MachineId(9)))
        );
    }

    #[test]
    fn resource_free_counts() {
        let mut s = state_with(vec![(1200.0, 4), (1200.0, 2)], 2);
        assert_eq!(s.free_procs_resource(ResourceId(0), 0).unwrap(), 6);
        occupy(&mut s, 0, 0, 5);
        occupy(&mut s, 1, 0, 5);
        assert_eq!(s.free_procs_resource(ResourceId(0), 1).unwrap(), 4);
        s.set_up(Component::ResourceNetwork(ResourceId(0)), false);
        assert_eq!(s.free_procs_resource(ResourceId(0), 1).unwrap(), 0);
        assert!(s.free_procs_resource(ResourceId(3), 0).is_err());
    }

    #[test]
    fn ready_sets() {
        let mut s = GridState::new(Scenario {
            users: vec![user(0)],
            resources: vec![
                resource(0, vec![machine(0, 1200.0, 1)]),
                resource(1, vec![machine(1, 1200.0, 4)]),
                resource(2, vec![machine(2, 1200.0, 1)]),
            ],
            jobs: (0..2).map(|i| job(i, 0, 1.0)).collect(),
        })
        .unwrap();
        assert_eq!(
            s.ready_resources(0),
            vec![ResourceId(0), ResourceId(1), ResourceId(2)]
        );
        occupy(&mut s, 0, 0, 9);
        occupy(&mut s, 1, 2, 9);
        assert_eq!(s.ready_resources(1), vec![ResourceId(1)]);
        assert_eq!(s.ready_machines(ResourceId(0), 1).unwrap(), vec![]);
    }

    #[test]
    fn ready_machines_filters_busy_and_down() {
        let mut s = state_with(vec![(1200.0, 2), (1200.0, 2)], 2);
        assert_eq!(
            s.ready_machines(ResourceId(0), 0).unwrap(),
            vec![MachineId(0), MachineId(1)]
        );
        occupy(&mut s, 0, 0, 9);
        occupy(&mut s, 1, 0, 9);
        assert_eq!(s.ready_machines(ResourceId(0), 0).unwrap(), vec![MachineId(1)]);
        s.set_up(Component::Machine(MachineId(1)), false);
        assert!(s.ready_machines(ResourceId(0), 0).unwrap().is_empty());
    }

    #[test]
    fn quality_is_weighted_by_free_processors() {
        let s = state_with(vec![(1200.0, 2), (3600.0, 2)], 0);
        assert_eq!(s.resource_quality(ResourceId(0), 0).unwrap(), 2400.0);

        let mut s = state_with(vec![(1200.0, 1), (3600.0, 4)], 1);
        occupy(&mut s, 0, 1, 9);
        assert_eq!(s.resource_quality(ResourceId(0), 0).unwrap(), 3000.0);

        let mut s = state_with(vec![(1200.0, 1), (3600.0, 1)], 0);
        s.set_up(Component::Machine(MachineId(0)), false);
        assert_eq!(s.resource_quality(ResourceId(0), 0).unwrap(), 3600.0);
        s.set_up(Component::Machine(MachineId(1)), false);
        assert_eq!(
            s.resource_quality(ResourceId(0), 0),
            Err(DomainError::UndefinedQuality(ResourceId(0)))
        );
    }

    #[test]
    fn presence_rules() {
        // user down with two queued jobs
        let mut s = GridState::new(Scenario {
            users: vec![user(0), user(1)],
            resources: vec![resource(0, vec![machine(0, 1200.0, 4), machine(1, 1200.0, 4)])],
            jobs: vec![job(0, 0, 1.0), job(1, 0, 1.0), job(2, 1, 1.0)],
        })
        .unwrap();
        for j in 0..3 {
            s.enqueue(JobId(j)).unwrap();
        }
        assert!(s.apply_presence_rules(0).is_empty());
        s.set_up(Component::User(UserId(0)), false);
        let ev = s.apply_presence_rules(0);
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.reason == EvictionReason::UserDown && e.record.is_none()));
        assert_eq!(s.global_queue(), &[JobId(2)]);
        s.check_partition().unwrap();

        // machine down with three live jobs, sibling unaffected
        let mut s = GridState::new(Scenario {
            users: vec![user(0)],
            resources: vec![resource(0, vec![machine(0, 1200.0, 4), machine(1, 1200.0, 4)])],
            jobs: (0..4).map(|i| job(i, 0, 1.0)).collect(),
        })
        .unwrap();
        for j in 0..3 {
            occupy(&mut s, j, 0, 20);
        }
        occupy(&mut s, 3, 1, 20);
        s.set_up(Component::Machine(MachineId(0)), false);
        let ev = s.apply_presence_rules(1);
        assert_eq!(ev.len(), 3);
        assert!(ev.iter().all(|e| e.reason == EvictionReason::MachineDown));
        assert_eq!(s.live().len(), 1);
        s.check_partition().unwrap();

        s.set_up(Component::ResourceNetwork(ResourceId(0)), false);
        let ev = s.apply_presence_rules(2);
        assert_eq!(ev[0].reason, EvictionReason::ResourceNetworkDown);
        assert!(s.live().is_empty());
    }

    #[test]
    fn enqueue_keeps_arrival_order() {
        let mut sc = Scenario {
            users: vec![user(0)],
            resources: vec![resource(0, vec![machine(0, 1200.0, 1)])],
            jobs: (0..3).map(|i| job(i, 0, 1.0)).collect(),
        };
        sc.jobs[0].arrival_time = 5;
        let mut s = GridState::new(sc).unwrap();
        s.enqueue(JobId(2)).unwrap();
        s.enqueue(JobId(0)).unwrap();
        s.enqueue(JobId(1)).unwrap();
        assert_eq!(s.global_queue(), &[JobId(1), JobId(2), JobId(0)]);
        assert!(matches!(s.enqueue(JobId(1)), Err(DomainError::WrongPhase { .. })));
    }

    #[test]
    fn place_rejects_full_machine() {
        let mut s = state_with(vec![(1200.0, 1)], 2);
        occupy(&mut s, 0, 0, 9);
        let spec = s.job(JobId(1)).unwrap().clone();
        s.enqueue(JobId(1)).unwrap();
        s.assign_to_resource(JobId(1), ResourceId(0)).unwrap();
        let rec = AssignmentRecord::new(&spec, ResourceId(0), MachineId(0), 0, 1, 1);
        assert!(matches!(s.place(rec), Err(DomainError::Placement { .. })));
    }

    #[test]
    fn scenario_validation() {
        let mut sc = Scenario {
            users: vec![user(0)],
            resources: vec![resource(0, vec![machine(1, 1200.0, 1)])],
            jobs: vec![],
        };
        assert!(sc.validate().is_err());
        sc.resources[0].machines[0].id = MachineId(0);
        sc.validate().unwrap();
        sc.resources[0].machines.clear();
        assert!(sc.validate().is_err());
    }
}
