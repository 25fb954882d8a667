//! The invariant suite behind `aos-sched verify`.
//!
//! Each check reports an observed statistic, the limit it is held to and
//! whether it passed. Everything is seeded, so the report is a pure
//! function of the options.

use std::io::Write;

use aos_sched_core::bandit::{
    avg_cost_f, bandit_dp_oracle, indexability_certify, steady_state, tau_opt, whittle_index, BanditParams,
    OracleOptions,
};
use aos_sched_core::bound::{kkt_residual, solve_bound};
use aos_sched_core::mdp::{
    plain_policy_iteration, structural_policy_iteration, verify_structure, MdpModel, SolverOptions, StructureProperty,
};
use aos_sched_core::policy::{GreedyAos, ThresholdPolicy};
use aos_sched_core::sim::{simulate, Recording};
use aos_sched_core::{NetworkConfig, UserParams};

use crate::config::{Generator, PolicyKind};
use crate::experiment::{build_policy, run_experiment};
use crate::output::fmt_f64;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Slots per simulated replication.
    pub horizon: u64,
    pub replications: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            horizon: 100_000,
            replications: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub observed: f64,
    /// Human-readable acceptance rule.
    pub limit: String,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &'static str, observed: f64, limit: f64) -> Self {
        Self {
            name,
            observed,
            limit: format!("<= {}", fmt_f64(limit)),
            pass: observed <= limit,
        }
    }

    fn zero(name: &'static str, count: usize) -> Self {
        Self {
            name,
            observed: count as f64,
            limit: "== 0".into(),
            pass: count == 0,
        }
    }
}

fn arm(l: f64, p: f64) -> UserParams {
    UserParams::new(l, p).expect("grid values lie in (0, 1]")
}

/// Full-arrival threshold `floor(3/2 - 1/p + sqrt((1/2 - 1/p)^2 + 2W/p))` for
/// `p = tenths/10` and `W = quarters/4`, in exact integer arithmetic: the
/// root equals `(3k - 20 + sqrt((k - 20)^2 + 20jk)) / 2k`.
pub fn full_arrival_threshold(tenths: i64, quarters: i64) -> u64 {
    let (k, j) = (tenths, quarters);
    let e = (k - 20) * (k - 20) + 20 * j * k;
    let q = (e as u64).isqrt() as i64;
    (3 * k - 20 + q).div_euclid(2 * k) as u64
}

fn grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    bandit_checks(&mut checks)?;
    mdp_checks(&mut checks)?;
    bound_checks(opts, &mut checks)?;
    Ok(checks)
}

fn bandit_checks(checks: &mut Vec<Check>) -> Result<()> {
    let mut worst: f64 = 0.0;
    let mut tau_mismatch = 0;
    for tenths in 1..=10 {
        let p = tenths as f64 / 10.0;
        let a = arm(1.0, p);
        for s in 1..=100u64 {
            let sf = s as f64;
            let expect = p * sf / 2.0 * (sf + (2.0 - p) / p);
            worst = worst.max(((whittle_index(s, a)? - expect) / expect).abs());
        }
        for quarters in 0..=200 {
            let w = quarters as f64 * 0.25;
            if tau_opt(&BanditParams::from_arm(a, w)?) != full_arrival_threshold(tenths, quarters) {
                tau_mismatch += 1;
            }
        }
    }
    checks.push(Check::at_most("whittle_full_arrival_closed_form", worst, 1e-10));
    checks.push(Check::zero("threshold_full_arrival_closed_form", tau_mismatch));

    let mut argmin_mismatch = 0;
    for l in grid(10) {
        for p in grid(10) {
            for k in 0..20 {
                let bp = BanditParams::new(l, p, k as f64 * 2.5)?;
                let tau = tau_opt(&bp);
                let f = avg_cost_f(tau, &bp)?;
                let best = (1..=200u64)
                    .map(|t| avg_cost_f(t, &bp))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let min = best.iter().copied().fold(f64::INFINITY, f64::min);
                if f > min + 1e-12 * min.abs().max(1.0) {
                    argmin_mismatch += 1;
                }
            }
        }
    }
    checks.push(Check::zero("threshold_is_argmin", argmin_mismatch));

    let mut oracle_gap: f64 = 0.0;
    let mut oracle_mismatch = 0;
    for l in [0.3, 0.6, 1.0] {
        for p in [0.3, 0.6, 1.0] {
            for w in [0.0, 3.7, 12.1] {
                let bp = BanditParams::new(l, p, w)?;
                let sol = bandit_dp_oracle(&bp, OracleOptions::default())?;
                let tau = tau_opt(&bp);
                let f = avg_cost_f(tau, &bp)?;
                oracle_gap = oracle_gap.max((sol.avg_cost - f).abs());
                let tie = (avg_cost_f(sol.threshold, &bp)? - f).abs() <= 1e-9;
                if sol.threshold != tau && !tie {
                    oracle_mismatch += 1;
                }
            }
        }
    }
    checks.push(Check::at_most("dp_oracle_average_cost", oracle_gap, 1e-6));
    checks.push(Check::zero("dp_oracle_threshold", oracle_mismatch));

    let mut not_indexable = 0;
    let ws: Vec<f64> = (0..=400).map(|k| k as f64 * 0.25).collect();
    for l in grid(20) {
        for p in grid(20) {
            if !indexability_certify(arm(l, p), &ws)?.indexable {
                not_indexable += 1;
            }
        }
    }
    checks.push(Check::zero("indexability", not_indexable));
    Ok(())
}

fn mdp_checks(checks: &mut Vec<Check>) -> Result<()> {
    let model = MdpModel::new(&[arm(0.3, 0.2), arm(0.4, 0.55)], 10)?;
    let opts = SolverOptions::new(0.95);
    let structured = structural_policy_iteration(&model, opts)?;
    let plain = plain_policy_iteration(&model, opts)?;
    let report = verify_structure(&model, &structured.values)?;
    checks.push(Check::zero(
        "mdp_monotonicity",
        report.count(StructureProperty::Monotonicity),
    ));
    checks.push(Check::zero(
        "mdp_submodularity",
        report.count(StructureProperty::Submodularity),
    ));
    checks.push(Check::zero(
        "mdp_increasing_differences",
        report.increasing_difference_violations,
    ));
    checks.push(Check::zero(
        "mdp_switching_persistence",
        report.count(StructureProperty::SwitchingPersistence),
    ));
    let gap = structured
        .values
        .relative()
        .iter()
        .zip(plain.values.relative())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("mdp_structured_matches_plain", gap, 1e-8));
    Ok(())
}

fn bound_checks(opts: &VerifyOptions, checks: &mut Vec<Check>) -> Result<()> {
    let fig2 = Generator::Fig2 { lambda_total: 2.4 }.users()?;
    let b = solve_bound(&fig2)?;
    let usage: f64 = b.gamma.iter().zip(&fig2).map(|(g, u)| g / u.p()).sum();
    checks.push(Check::at_most("bound_rate_constraint", (usage - 1.0).abs(), 1e-9));
    checks.push(Check::at_most("bound_kkt_residual", kkt_residual(&b, &fig2), 1e-7));

    let t = opts.horizon;
    let single = NetworkConfig::single_channel(vec![arm(1.0, 1.0)], t, opts.seed)?;
    let lb = solve_bound(single.users())?.aos_lb;
    let j = simulate(&single, &GreedyAos, 0, Recording::NONE)?.network_aos();
    // the synchronized first slot costs exactly 1/T
    checks.push(Check::at_most(
        "bound_tight_single_user",
        (j - lb).abs(),
        1.0 / t as f64 + 1e-12,
    ));

    let pair = NetworkConfig::single_channel(vec![arm(1.0, 1.0); 2], t, opts.seed)?;
    let lb = solve_bound(pair.users())?.aos_lb;
    let m = run_experiment(&pair, &GreedyAos, opts.replications, Recording::NONE)?;
    checks.push(Check::at_most(
        "bound_tight_symmetric_pair",
        (m.aos.mean - lb).abs(),
        2.0 * m.aos.std_err + 2.0 / t as f64 + 1e-12,
    ));

    let threshold = NetworkConfig::single_channel(vec![arm(0.7, 0.4)], t, opts.seed)?;
    let bp = BanditParams::new(0.7, 0.4, 0.0)?;
    let pol = ThresholdPolicy::new(vec![3])?;
    let m = run_experiment(&threshold, &pol, opts.replications, Recording::NONE)?;
    let f = steady_state(3, &bp)?.avg_cost;
    checks.push(Check::at_most(
        "threshold_simulated_cost",
        (m.aos.mean - f).abs() / f,
        0.01,
    ));

    let net = NetworkConfig::single_channel(Generator::Fig2 { lambda_total: 1.2 }.users()?, t, opts.seed)?;
    let lb = solve_bound(net.users())?.aos_lb;
    let mut slack = f64::INFINITY;
    for kind in PolicyKind::ALL {
        let pol = build_policy(kind, net.users(), 20, 0.99)?;
        let m = run_experiment(&net, pol.as_ref(), opts.replications, Recording::NONE)?;
        slack = slack.min(m.aos.mean + 3.0 * m.aos.std_err - lb);
    }
    checks.push(Check {
        name: "bound_dominance_fig2",
        observed: slack,
        limit: ">= 0".into(),
        pass: slack >= 0.0,
    });
    Ok(())
}

pub fn write_checks<W: Write>(out: W, checks: &[Check]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "observed", "limit", "pass"])?;
    for c in checks {
        w.write_record([
            c.name,
            &fmt_f64(c.observed),
            &c.limit,
            if c.pass { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
