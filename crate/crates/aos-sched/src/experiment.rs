//! Replicated simulation runs and sweeps.

use aos_sched_core::bound::{solve_bound, BoundSolution};
use aos_sched_core::mdp::{structural_policy_iteration, MdpModel, SolverOptions, StationaryPolicy};
use aos_sched_core::policy::{AoiIndexBaseline, GreedyAos, Scheduler, WhittleAos};
use aos_sched_core::sim::{simulate, Recording, RunMetrics, Summary};
use aos_sched_core::{NetworkConfig, UserParams};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PolicyKind, SweepParam, SweepSpec};
use crate::{Error, Result};

/// Ages covered by the precomputed Whittle table.
pub const INDEX_TABLE_AGES: u64 = 512;
/// Schedules per user below which a run is flagged as too short.
pub const MIN_SCHEDULES: u64 = 10_000;

/// Solves the truncated MDP for `users`.
pub fn solve_mdp_policy(users: &[UserParams], truncation: u64, alpha: f64) -> Result<StationaryPolicy> {
    let model = MdpModel::new(users, truncation)?;
    Ok(structural_policy_iteration(&model, SolverOptions::new(alpha))?.policy)
}

pub fn build_policy(kind: PolicyKind, users: &[UserParams], truncation: u64, alpha: f64) -> Result<Box<dyn Scheduler>> {
    Ok(match kind {
        PolicyKind::Greedy => Box::new(GreedyAos),
        PolicyKind::Whittle => Box::new(WhittleAos::from_users(users, INDEX_TABLE_AGES)?),
        PolicyKind::Aoi => Box::new(AoiIndexBaseline::new(users)),
        PolicyKind::Mdp => Box::new(solve_mdp_policy(users, truncation, alpha)?),
    })
}

/// Replication results of one policy on one network.
#[derive(Debug, Clone)]
pub struct ExperimentMetrics {
    pub policy: String,
    pub horizon: u64,
    /// Raw counters, indexed by replication.
    pub runs: Vec<RunMetrics>,
    /// Network time-average AoS across replications.
    pub aos: Summary,
    pub aoi: Summary,
    pub user_aos: Vec<Summary>,
    pub user_aoi: Vec<Summary>,
    pub warnings: Vec<String>,
}

impl ExperimentMetrics {
    fn from_runs(policy: &str, horizon: u64, runs: Vec<RunMetrics>) -> Self {
        let users = runs[0].num_users();
        let collect = |f: &dyn Fn(&RunMetrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
        let aos = collect(&|r| r.network_aos());
        let aoi = collect(&|r| r.network_aoi());
        let user_aos = (0..users).map(|n| collect(&|r| r.user_aos(n))).collect();
        let user_aoi = (0..users).map(|n| collect(&|r| r.user_aoi(n))).collect();
        let mut warnings = Vec::new();
        for n in 0..users {
            let least = runs.iter().map(|r| r.scheduled[n]).min().unwrap_or(0);
            if least < MIN_SCHEDULES {
                warnings.push(format!(
                    "{policy}: user {n} was scheduled only {least} times in some replication (fewer than {MIN_SCHEDULES})"
                ));
            }
        }
        Self {
            policy: policy.to_string(),
            horizon,
            runs,
            aos,
            aoi,
            user_aos,
            user_aoi,
            warnings,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_aos.len()
    }

    /// Fraction of slots in which user `n` was served at AoS `s`, pooled
    /// over replications, as `[n][s]`.
    pub fn occupancy_histogram(&self) -> Result<Vec<Vec<f64>>> {
        let mut counts: Vec<Vec<u64>> = vec![Vec::new(); self.num_users()];
        for run in &self.runs {
            let hist = run
                .schedule_histogram
                .as_ref()
                .ok_or_else(|| Error::Usage("histogram requested but recording was disabled".into()))?;
            for (acc, h) in counts.iter_mut().zip(hist) {
                if acc.len() < h.len() {
                    acc.resize(h.len(), 0);
                }
                for (a, c) in acc.iter_mut().zip(h) {
                    *a += c;
                }
            }
        }
        let total = (self.horizon * self.runs.len() as u64) as f64;
        Ok(counts
            .into_iter()
            .map(|h| h.into_iter().map(|c| c as f64 / total).collect())
            .collect())
    }

    /// Mean AoS at which each user was served, summarized over replications.
    /// Users never served in some replication get `None`.
    pub fn mean_scheduled_age(&self) -> Result<Vec<Option<Summary>>> {
        (0..self.num_users())
            .map(|n| {
                let mut per_run = Vec::with_capacity(self.runs.len());
                for run in &self.runs {
                    if run.schedule_histogram.is_none() {
                        return Err(Error::Usage("histogram requested but recording was disabled".into()));
                    }
                    match run.mean_scheduled_age(n) {
                        Some(v) => per_run.push(v),
                        None => return Ok(None),
                    }
                }
                Ok(Some(Summary::of(&per_run)))
            })
            .collect()
    }
}

/// Runs `replications` independent replications of `policy`. Replication
/// `r` uses the substreams of `(master_seed, r)`, so different policies on
/// the same network see the same arrivals and channel draws.
pub fn run_experiment(
    network: &NetworkConfig,
    policy: &dyn Scheduler,
    replications: u64,
    recording: Recording,
) -> Result<ExperimentMetrics> {
    if replications == 0 {
        return Err(Error::Usage("at least one replication is required".into()));
    }
    let runs = (0..replications)
        .into_par_iter()
        .map(|r| simulate(network, policy, r, recording))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ExperimentMetrics::from_runs(policy.name(), network.horizon(), runs))
}

/// All policies on one network, plus the lower bound.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Swept value, `None` without a sweep.
    pub value: Option<f64>,
    pub network: NetworkConfig,
    pub bound: BoundSolution,
    pub results: Vec<ExperimentMetrics>,
}

impl SweepPoint {
    pub fn result(&self, policy: PolicyKind) -> Option<&ExperimentMetrics> {
        self.results.iter().find(|m| m.policy == policy.name())
    }
}

/// Runs every configured policy at every sweep point.
pub fn run_config(cfg: &ExperimentConfig, recording: Recording) -> Result<Vec<SweepPoint>> {
    let points = cfg.points();
    points
        .par_iter()
        .map(|&value| {
            let network = cfg.point(value)?;
            let bound = solve_bound(network.users())?;
            let results = cfg
                .policies
                .iter()
                .map(|&kind| {
                    let policy = build_policy(kind, network.users(), cfg.truncation, cfg.alpha)?;
                    run_experiment(&network, policy.as_ref(), cfg.replications, recording)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint {
                value,
                network,
                bound,
                results,
            })
        })
        .collect()
}

/// Sweeps the total arrival rate of `base` over `grid`.
pub fn sweep_lambda_total(base: &ExperimentConfig, grid: &[f64], recording: Recording) -> Result<Vec<SweepPoint>> {
    let mut cfg = base.clone();
    cfg.sweep = Some(SweepSpec {
        param: SweepParam::LambdaTotal,
        values: grid.to_vec(),
    });
    cfg.validate()?;
    run_config(&cfg, recording)
}
