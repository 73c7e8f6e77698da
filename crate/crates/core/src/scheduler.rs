//! Global (auction) and local (shortest-job-first) schedulers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{self, AssignmentInstance, AuctionError};
use crate::cost::{effective_cost, CostBreakdown, CostError, ResourceView, StrategyParams};
use crate::domain::{DomainError, GridState, JobId, MachineId, ResourceId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("quota input {index}: {free} free exceeds {total} total processors")]
    FreeExceedsTotal { index: usize, free: u32, total: u32 },
    #[error("free and total lists differ in length ({free} vs {total})")]
    LengthMismatch { free: usize, total: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

/// Integer water-filling approximation of equal free fractions.
///
/// Grants `min(demand, Σ free)` units one at a time to the index whose free
/// fraction after the grant, `(free - g) / total`, is currently largest
/// (lowest index on ties).
pub fn compute_quotas(free: &[u32], totals: &[u32], demand: usize) -> Result<Vec<u32>, ScheduleError> {
    if free.len() != totals.len() {
        return Err(ScheduleError::LengthMismatch {
            free: free.len(),
            total: totals.len(),
        });
    }
    for (index, (&f, &t)) in free.iter().zip(totals).enumerate() {
        if f > t {
            return Err(ScheduleError::FreeExceedsTotal {
                index,
                free: f,
                total: t,
            });
        }
    }
    let supply: u64 = free.iter().map(|&f| u64::from(f)).sum();
    let mut quota = vec![0u32; free.len()];
    if demand as u64 >= supply {
        quota.copy_from_slice(free);
        return Ok(quota);
    }
    for _ in 0..demand {
        let mut pick: Option<usize> = None;
        for k in 0..free.len() {
            if quota[k] >= free[k] {
                continue;
            }
            pick = match pick {
                None => Some(k),
                Some(p) => {
                    // (free_k - g_k)/total_k > (free_p - g_p)/total_p, cross-multiplied
                    let lhs = u64::from(free[k] - quota[k]) * u64::from(totals[p]);
                    let rhs = u64::from(free[p] - quota[p]) * u64::from(totals[k]);
                    if lhs > rhs { Some(k) } else { Some(p) }
                }
            };
        }
        match pick {
            Some(k) => quota[k] += 1,
            None => break,
        }
    }
    Ok(quota)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedAssignment {
    pub job: JobId,
    pub resource: ResourceId,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub assignments: Vec<PlannedAssignment>,
    pub deferred: Vec<JobId>,
    /// Column capacities handed to the solver, per ready resource.
    pub capacities: Vec<(ResourceId, u32)>,
}

impl GlobalPlan {
    pub fn pairs(&self) -> Vec<(JobId, ResourceId)> {
        self.assignments.iter().map(|a| (a.job, a.resource)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalPlan {
    pub placements: Vec<(JobId, MachineId)>,
    pub bounced: Vec<JobId>,
}

/// Largest entry of a global cost matrix after rescaling, in cost units.
pub const NORMALIZED_MAX_COST: f64 = 1000.0;

/// Assigns queued jobs to ready resources by solving the assignment problem
/// over strategy-weighted costs.
pub fn schedule_global(
    state: &GridState,
    params: &StrategyParams,
    t: u64,
    precision: u32,
) -> Result<GlobalPlan, ScheduleError> {
    let jobs = state.global_queue();
    let ready = state.ready_resources(t);
    if jobs.is_empty() || ready.is_empty() {
        return Ok(GlobalPlan {
            deferred: jobs.to_vec(),
            ..Default::default()
        });
    }

    let mut free = Vec::with_capacity(ready.len());
    let mut totals = Vec::with_capacity(ready.len());
    let mut views = Vec::with_capacity(ready.len());
    for &r in &ready {
        free.push(state.free_procs_resource(r, t)?);
        totals.push(state.up_procs_resource(r)?);
        views.push(ResourceView::observe(state, r, t)?);
    }
    let capacities = if params.balance_global {
        compute_quotas(&free, &totals, jobs.len())?
    } else {
        free
    };
    if capacities.iter().all(|&c| c == 0) {
        return Ok(GlobalPlan {
            deferred: jobs.to_vec(),
            capacities: ready.iter().copied().zip(capacities).collect(),
            ..Default::default()
        });
    }

    let mut breakdowns = Vec::with_capacity(jobs.len());
    let mut matrix: Vec<Vec<f64>> = Vec::with_capacity(jobs.len());
    for &j in jobs {
        let job = state.job(j)?;
        let user = state.user(job.owner)?;
        let row = views
            .iter()
            .map(|v| effective_cost(job, user, v, params, t))
            .collect::<Result<Vec<_>, _>>()?;
        matrix.push(row.iter().map(|c| c.effective).collect());
        breakdowns.push(row);
    }

    // The optimum is invariant under positive scaling; rescale so the
    // integerization keeps the same relative resolution whatever the
    // exponents did to the magnitudes.
    let max = matrix.iter().flatten().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        let k = NORMALIZED_MAX_COST / max;
        for c in matrix.iter_mut().flatten() {
            *c *= k;
        }
    }
    let inst = AssignmentInstance::new(matrix, capacities.iter().map(|&c| c as usize).collect())?;
    let result = auction::solve_pruned(&inst, precision)?;

    let mut plan = GlobalPlan {
        capacities: ready.iter().copied().zip(capacities).collect(),
        ..Default::default()
    };
    for (row, col) in result.matching.iter().enumerate() {
        match col {
            Some(c) => plan.assignments.push(PlannedAssignment {
                job: jobs[row],
                resource: ready[*c],
                cost: breakdowns[row][*c],
            }),
            None => plan.deferred.push(jobs[row]),
        }
    }
    Ok(plan)
}

/// Places a resource's locally queued jobs: shortest job onto the fastest free processor.
pub fn schedule_local(
    state: &GridState,
    r: ResourceId,
    params: &StrategyParams,
    t: u64,
) -> Result<LocalPlan, ScheduleError> {
    let spec = state.resource(r)?;
    let queue = state.local_queue(r)?;
    let mut plan = LocalPlan::default();
    if queue.is_empty() {
        return Ok(plan);
    }

    let mut free = Vec::with_capacity(spec.machines.len());
    let mut totals = Vec::with_capacity(spec.machines.len());
    let network_up = state.is_up(crate::domain::Component::ResourceNetwork(r));
    for m in &spec.machines {
        let acm = if network_up { state.free_procs_machine(m.id, t)? } else { 0 };
        free.push(acm);
        totals.push(if acm > 0 { m.proc_count } else { 0 });
    }
    let slots_per_machine = if params.balance_local {
        compute_quotas(&free, &totals, queue.len())?
    } else {
        free
    };

    let mut slots: Vec<(f64, MachineId)> = spec
        .machines
        .iter()
        .zip(&slots_per_machine)
        .flat_map(|(m, &n)| std::iter::repeat_n((m.proc_quality, m.id), n as usize))
        .collect();
    slots.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut jobs = Vec::with_capacity(queue.len());
    for &j in queue {
        jobs.push((state.job(j)?.length, j));
    }
    jobs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    for (k, &(_, job)) in jobs.iter().enumerate() {
        match slots.get(k) {
            Some(&(_, machine)) => plan.placements.push((job, machine)),
            None => plan.bounced.push(job),
        }
    }
    Ok(plan)
}
