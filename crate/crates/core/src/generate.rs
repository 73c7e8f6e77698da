//! Random scenarios drawn from property-file ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{JobId, JobSpec, MachineId, MachineSpec, ResourceId, ResourceSpec, Scenario, UserId, UserSpec};
use crate::properties::{GridProperties, JobProperties, Range, UserProperties};

/// How a user's job sets spread over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalMode {
    /// Set arrival ticks uniform over `[0, horizon)`.
    #[default]
    Spread,
    /// Set arrival ticks uniform over the first quarter of the horizon.
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub n_job_sets: u32,
    pub jobs_per_set: u32,
    pub horizon: u64,
    pub arrivals: ArrivalMode,
    /// Give every user either the minimum or the maximum qos (alternating)
    /// instead of a uniform draw.
    pub qos_extremes: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            n_job_sets: 30,
            jobs_per_set: 10,
            horizon: 100,
            arrivals: ArrivalMode::Spread,
            qos_extremes: false,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, r: Range) -> u64 {
    rng.random_range(r.min..=r.max)
}

/// Draws a scenario. Every quantity is a uniform integer within its range.
/// The same inputs and seed always give the same scenario.
pub fn generate_scenario(
    grid: &GridProperties,
    users: &UserProperties,
    jobs: &JobProperties,
    options: &GenerateOptions,
    seed: u64,
) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut resources = Vec::with_capacity(grid.number_of_resources as usize);
    let mut next_machine = 0u32;
    for r in 0..grid.number_of_resources {
        let bandwidth = draw(&mut rng, grid.resource_bandwidth) as f64;
        let net_mtbf = draw(&mut rng, grid.resource_bandwidth_fail_rate) as f64;
        let n_machines = draw(&mut rng, grid.machines_per_resource);
        let machines = (0..n_machines)
            .map(|_| {
                let m = MachineSpec {
                    id: MachineId(next_machine),
                    proc_quality: draw(&mut rng, grid.processor_speed) as f64,
                    proc_count: draw(&mut rng, grid.processors_per_machine) as u32,
                    mtbf: draw(&mut rng, grid.machine_fail_rate) as f64,
                };
                next_machine += 1;
                m
            })
            .collect();
        resources.push(ResourceSpec {
            id: ResourceId(r as u32),
            bandwidth,
            net_mtbf,
            machines,
        });
    }

    let qos = users.user_quality_of_service;
    let user_specs: Vec<UserSpec> = (0..users.number_of_users)
        .map(|u| {
            let net_mtbf = draw(&mut rng, users.user_bandwidth_fail_rate) as f64;
            let bandwidth = draw(&mut rng, users.user_bandwidth) as f64;
            let q = if options.qos_extremes {
                if u % 2 == 0 { qos.min } else { qos.max }
            } else {
                draw(&mut rng, qos)
            };
            UserSpec {
                id: UserId(u as u32),
                qos: q as f64,
                bandwidth,
                net_mtbf,
            }
        })
        .collect();

    let window = match options.arrivals {
        ArrivalMode::Spread => options.horizon,
        ArrivalMode::Peak => options.horizon / 4,
    }
    .max(1);
    let mut job_specs = Vec::new();
    for u in &user_specs {
        for _ in 0..options.n_job_sets {
            let arrival = rng.random_range(0..window);
            for _ in 0..options.jobs_per_set {
                job_specs.push(JobSpec {
                    id: JobId(job_specs.len() as u32),
                    owner: u.id,
                    arrival_time: arrival,
                    priority: 1.0,
                    length: draw(&mut rng, jobs.job_length) as f64,
                    volume: draw(&mut rng, jobs.job_input_volume) as f64,
                });
            }
        }
    }

    Scenario {
        users: user_specs,
        resources,
        jobs: job_specs,
    }
}
