//! Cost formulas used to build the scheduler's assignment matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, GridState, JobSpec, MachineSpec, ResourceId, UserSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("evaluated at tick {t}, before the job arrived at {arrival}")]
    BeforeArrival { t: u64, arrival: u64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Provider-chosen strategy exponents and balancing switches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Failure-avoidance exponent.
    pub fp: f64,
    /// QoS exponent.
    pub qp: f64,
    /// Starvation exponent.
    pub sp: f64,
    pub balance_global: bool,
    pub balance_local: bool,
}

impl StrategyParams {
    pub fn validate(&self) -> Result<(), CostError> {
        for (what, value) in [("fp", self.fp), ("qp", self.qp), ("sp", self.sp)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(CostError::NonPositive { what, value });
            }
        }
        Ok(())
    }
}

/// What the cost model needs to know about one resource at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceView {
    /// bw_r, KB/s
    pub bandwidth: f64,
    /// pq_r(t), MI/s
    pub quality: f64,
    /// bf_r, seconds
    pub net_mtbf: f64,
    /// af_r, seconds
    pub machine_mtbf: f64,
}

impl ResourceView {
    /// Snapshot of a ready resource. Fails if the resource has no free processors.
    pub fn observe(state: &GridState, r: ResourceId, t: u64) -> Result<Self, DomainError> {
        let spec = state.resource(r)?;
        let quality = state.resource_quality(r, t)?;
        let machine_mtbf = state
            .mean_machine_mtbf(r)?
            .ok_or(DomainError::UndefinedQuality(r))?;
        Ok(Self {
            bandwidth: spec.bandwidth,
            quality,
            net_mtbf: spec.net_mtbf,
            machine_mtbf,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawCost {
    /// st, seconds
    pub transfer: f64,
    /// pt, seconds
    pub processing: f64,
}

impl RawCost {
    #[inline]
    pub fn total(&self) -> f64 {
        self.transfer + self.processing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub transfer: f64,
    pub processing: f64,
    pub survival_proc: f64,
    pub survival_xfer: f64,
    pub starvation_weight: f64,
    pub effective: f64,
}

impl CostBreakdown {
    /// Transfer plus processing time, without strategy weighting.
    #[inline]
    pub fn raw(&self) -> f64 {
        self.transfer + self.processing
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64, CostError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CostError::NonPositive { what, value })
    }
}

/// Transfer over the slower of the two links plus processing at the resource's current quality.
pub fn raw_cost(job: &JobSpec, user: &UserSpec, view: &ResourceView) -> Result<RawCost, CostError> {
    let quality = positive("resource quality", view.quality)?;
    let link = positive("user bandwidth", user.bandwidth)?.min(positive("resource bandwidth", view.bandwidth)?);
    Ok(RawCost {
        transfer: job.volume / link,
        processing: job.length / quality,
    })
}

/// Processing time of a job on one processor of `machine`.
pub fn machine_cost(job: &JobSpec, machine: &MachineSpec) -> f64 {
    job.length / machine.proc_quality
}

/// Probability that a component with the given MTBF survives `duration` seconds.
#[inline]
pub fn survival(duration: f64, mtbf: f64) -> f64 {
    (-duration / mtbf).exp()
}

/// Grows linearly with ticks spent waiting, scaled by the job's priority.
pub fn starvation_weight(job: &JobSpec, t: u64) -> Result<f64, CostError> {
    if t < job.arrival_time {
        return Err(CostError::BeforeArrival {
            t,
            arrival: job.arrival_time,
        });
    }
    Ok(job.priority * (1.0 + (t - job.arrival_time) as f64))
}

/// Strategy-weighted expected time of running `job` on the viewed resource.
///
/// `a = (st + pt) / ((p(pt)·p(st))^fp · qos^qp · ρ^sp)` where `p(pt)` uses the
/// resource's mean machine MTBF and `p(st)` requires both the user link and
/// the resource link to survive the transfer. All-zero exponents give back
/// the plain transfer-plus-processing cost.
pub fn effective_cost(
    job: &JobSpec,
    user: &UserSpec,
    view: &ResourceView,
    params: &StrategyParams,
    t: u64,
) -> Result<CostBreakdown, CostError> {
    let raw = raw_cost(job, user, view)?;
    let survival_proc = survival(raw.processing, positive("machine mtbf", view.machine_mtbf)?);
    let survival_xfer = survival(raw.transfer, positive("resource network mtbf", view.net_mtbf)?)
        * survival(raw.transfer, positive("user network mtbf", user.net_mtbf)?);
    let rho = starvation_weight(job, t)?;
    let denom = (survival_proc * survival_xfer).powf(params.fp)
        * user.qos.powf(params.qp)
        * rho.powf(params.sp);
    Ok(CostBreakdown {
        transfer: raw.transfer,
        processing: raw.processing,
        survival_proc,
        survival_xfer,
        starvation_weight: rho,
        effective: (raw.transfer + raw.processing) / denom,
    })
}
