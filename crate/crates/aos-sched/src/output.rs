//! CSV and binary writers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results always produce identical bytes.

use std::io::Write;

use aos_sched_core::bound::BoundSolution;
use aos_sched_core::mdp::{Action, StationaryPolicy};

use crate::experiment::SweepPoint;
use crate::Result;

pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";")
}

/// One row per (point, policy, replication), then one `mean` row per
/// (point, policy) carrying the standard error.
pub fn write_results<W: Write>(out: W, param: &str, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "param",
        "value",
        "lambda_total",
        "policy",
        "replication",
        "aos",
        "aoi",
        "aos_std_err",
        "aos_lb",
    ])?;
    for pt in points {
        let value = fmt_opt(pt.value);
        let lt = fmt_f64(pt.network.lambda_total());
        let lb = fmt_f64(pt.bound.aos_lb);
        for m in &pt.results {
            for (r, run) in m.runs.iter().enumerate() {
                w.write_record([
                    param,
                    &value,
                    &lt,
                    &m.policy,
                    &r.to_string(),
                    &fmt_f64(run.network_aos()),
                    &fmt_f64(run.network_aoi()),
                    "",
                    &lb,
                ])?;
            }
            w.write_record([
                param,
                &value,
                &lt,
                &m.policy,
                "mean",
                &fmt_f64(m.aos.mean),
                &fmt_f64(m.aoi.mean),
                &fmt_f64(m.aos.std_err),
                &lb,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-user summaries: `(value, policy, user, lambda, p, aos, aos_std_err, aoi)`.
pub fn write_user_summary<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "policy", "user", "lambda", "p", "aos", "aos_std_err", "aoi"])?;
    for pt in points {
        for m in &pt.results {
            for (n, u) in pt.network.users().iter().enumerate() {
                w.write_record([
                    fmt_opt(pt.value),
                    m.policy.clone(),
                    n.to_string(),
                    fmt_f64(u.lambda()),
                    fmt_f64(u.p()),
                    fmt_f64(m.user_aos[n].mean),
                    fmt_f64(m.user_aos[n].std_err),
                    fmt_f64(m.user_aoi[n].mean),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Histogram rows `(value, policy, user, age, fraction)` with nonzero mass.
pub fn write_histogram<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "policy", "user", "age", "fraction"])?;
    for pt in points {
        for m in &pt.results {
            for (n, hist) in m.occupancy_histogram()?.iter().enumerate() {
                for (s, &f) in hist.iter().enumerate() {
                    if f > 0.0 {
                        w.write_record([
                            fmt_opt(pt.value),
                            m.policy.clone(),
                            n.to_string(),
                            s.to_string(),
                            fmt_f64(f),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bound<W: Write>(out: W, rows: &[(Option<f64>, f64, BoundSolution)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "value",
        "lambda_total",
        "aos_lb",
        "mu",
        "gamma",
        "nu",
        "binding",
        "gamma_max_variant",
    ])?;
    for (value, lt, b) in rows {
        w.write_record([
            fmt_opt(*value),
            fmt_f64(*lt),
            fmt_f64(b.aos_lb),
            fmt_f64(b.mu),
            join(&b.gamma),
            join(&b.nu),
            b.binding.to_string(),
            b.max_variant.as_deref().map(join).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn action_label(a: Action) -> String {
    match a {
        Action::Idle => "idle".into(),
        Action::User(n) => n.to_string(),
    }
}

/// Policy as CSV rows `(x0, .., x{N-1}, action)`.
pub fn write_policy_csv<W: Write>(out: W, policy: &StationaryPolicy) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let space = policy.space();
    let mut header: Vec<String> = (0..space.num_users()).map(|n| format!("x{n}")).collect();
    header.push("action".into());
    w.write_record(&header)?;
    for (idx, &a) in policy.actions().iter().enumerate() {
        let mut row: Vec<String> = space.state(idx).iter().map(u64::to_string).collect();
        row.push(action_label(a));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const POLICY_MAGIC: &[u8; 8] = b"AOSPOL1\0";

/// Dense dump: magic, `N` and `m` as little-endian `u32`, then one byte per
/// state in lexicographic order (0 for idle, `n + 1` for user `n`).
pub fn write_policy_dense<W: Write>(mut out: W, policy: &StationaryPolicy) -> Result<()> {
    let space = policy.space();
    out.write_all(POLICY_MAGIC)?;
    out.write_all(&(space.num_users() as u32).to_le_bytes())?;
    out.write_all(&(space.cap() as u32).to_le_bytes())?;
    let bytes: Vec<u8> = policy
        .actions()
        .iter()
        .map(|a| match a {
            Action::Idle => 0,
            Action::User(n) => *n as u8 + 1,
        })
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}
