use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aos_sched::config::{ConfigError, ExperimentConfig, PolicyKind};
use aos_sched::experiment::{run_config, SweepPoint};
use aos_sched::output::{self, fmt_f64};
use aos_sched::verify::{run_suite, write_checks, VerifyOptions};
use aos_sched::{Error, Result};
use aos_sched_core::bandit::{tau_opt, whittle_index, BanditParams};
use aos_sched_core::bound::solve_bound;
use aos_sched_core::mdp::{
    discounted_value_iteration, plain_policy_iteration, structural_policy_iteration, verify_structure, MdpModel,
    SolverOptions, StructureProperty,
};
use aos_sched_core::sim::Recording;
use aos_sched_core::UserParams;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aos-sched", version, about = "Age-of-synchronization scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rescales arrival rates to this total.
    #[arg(long)]
    lambda_total: Option<f64>,
    /// Overrides the number of slots per replication.
    #[arg(long = "horizon", short = 'T')]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.lambda_total {
            cfg.lambda_total = Some(l);
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one network under one or more policies.
    Simulate {
        #[command(flatten)]
        base: Overrides,
        /// Policies to run (greedy, whittle, aoi, mdp); defaults to the config.
        #[arg(long = "policy")]
        policies: Vec<String>,
        /// Result CSV; defaults to the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Scheduling histogram CSV.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Per-user summary CSV.
        #[arg(long)]
        per_user: Option<PathBuf>,
    },
    /// Run the configured sweep.
    Sweep {
        #[command(flatten)]
        base: Overrides,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        per_user: Option<PathBuf>,
    },
    /// Print the relaxed lower bound as CSV.
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda_total: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print Whittle indices `(s, I(s))`, then optimal thresholds `(W, tau)`.
    IndexTable {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 20)]
        s_max: u64,
        #[arg(long, default_value_t = 50.0)]
        w_max: f64,
        #[arg(long, default_value_t = 1.0)]
        w_step: f64,
    },
    /// Solve the truncated MDP, export the policy and report its structure.
    Mdp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda_total: Option<f64>,
        /// Truncation level; defaults to the config's `m`.
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = Method::Structural)]
        method: Method,
        /// Policy file: CSV for up to three users, dense binary otherwise.
        #[arg(long)]
        policy_output: Option<PathBuf>,
    },
    /// Run the invariant suite and write its report as CSV.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        #[arg(long, short = 'T', default_value_t = VerifyOptions::default().horizon)]
        horizon: u64,
        #[arg(long, default_value_t = VerifyOptions::default().replications)]
        replications: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Structural,
    Plain,
    ValueIteration,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("AOS_SCHED_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| ConfigError(format!("AOS_SCHED_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(e.to_string()))?;
    }
    Ok(())
}

fn print_summary(points: &[SweepPoint]) {
    let mut err = io::stderr().lock();
    for pt in points {
        let label = pt.value.map(|v| format!("value {v}: ")).unwrap_or_default();
        let _ = writeln!(
            err,
            "{label}lambda_total {:.4}, AoS lower bound {:.6}",
            pt.network.lambda_total(),
            pt.bound.aos_lb
        );
        for m in &pt.results {
            let _ = writeln!(
                err,
                "  {:<8} AoS {:.6} ± {:.6}  AoI {:.6}",
                m.policy, m.aos.mean, m.aos.std_err, m.aoi.mean
            );
            for w in &m.warnings {
                let _ = writeln!(err, "  warning: {w}");
            }
        }
    }
}

fn write_outputs(
    cfg: &ExperimentConfig,
    points: &[SweepPoint],
    output: Option<PathBuf>,
    histogram: Option<PathBuf>,
    per_user: Option<PathBuf>,
) -> Result<()> {
    let param = cfg.sweep.as_ref().map(|s| s.param.to_string()).unwrap_or_default();
    output::write_results(
        open_out(output.or_else(|| cfg.output.clone()).as_deref())?,
        &param,
        points,
    )?;
    if let Some(h) = histogram {
        output::write_histogram(open_out(Some(&h))?, points)?;
    }
    if let Some(u) = per_user {
        output::write_user_summary(open_out(Some(&u))?, points)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate {
            base,
            policies,
            output,
            histogram,
            per_user,
        } => {
            let mut cfg = base.load()?;
            cfg.sweep = None;
            if !policies.is_empty() {
                cfg.policies = policies
                    .iter()
                    .map(|p| p.parse::<PolicyKind>())
                    .collect::<std::result::Result<_, _>>()?;
            }
            let rec = Recording {
                schedule_histogram: histogram.is_some(),
                state_occupancy: false,
            };
            let points = run_config(&cfg, rec)?;
            print_summary(&points);
            write_outputs(&cfg, &points, output, histogram, per_user)
        }
        Command::Sweep {
            base,
            output,
            histogram,
            per_user,
        } => {
            let cfg = base.load()?;
            if cfg.sweep.is_none() {
                return Err(ConfigError("`sweep` needs a `sweep` section in the config".into()).into());
            }
            let rec = Recording {
                schedule_histogram: histogram.is_some(),
                state_occupancy: false,
            };
            let points = run_config(&cfg, rec)?;
            print_summary(&points);
            write_outputs(&cfg, &points, output, histogram, per_user)
        }
        Command::Bound {
            config,
            lambda_total,
            output,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if lambda_total.is_some() {
                cfg.lambda_total = lambda_total;
                cfg.sweep = None;
            }
            cfg.validate()?;
            let rows = cfg
                .points()
                .into_iter()
                .map(|v| {
                    let net = cfg.point(v)?;
                    Ok((v, net.lambda_total(), solve_bound(net.users())?))
                })
                .collect::<Result<Vec<_>>>()?;
            output::write_bound(open_out(output.as_deref())?, &rows)
        }
        Command::IndexTable {
            lambda,
            p,
            s_max,
            w_max,
            w_step,
        } => {
            let arm = UserParams::new(lambda, p).map_err(|e| ConfigError(e.to_string()))?;
            if !(w_step > 0.0) || !(w_max >= 0.0) {
                return Err(ConfigError("--w-step must be positive and --w-max nonnegative".into()).into());
            }
            let mut out = open_out(None)?;
            writeln!(out, "s,index")?;
            for s in 1..=s_max {
                writeln!(out, "{s},{}", fmt_f64(whittle_index(s, arm)?))?;
            }
            writeln!(out)?;
            writeln!(out, "w,tau_opt")?;
            let steps = (w_max / w_step + 1e-9).floor() as u64;
            for k in 0..=steps {
                let w = k as f64 * w_step;
                writeln!(out, "{},{}", fmt_f64(w), tau_opt(&BanditParams::from_arm(arm, w)?))?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Mdp {
            config,
            lambda_total,
            m,
            alpha,
            method,
            policy_output,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if lambda_total.is_some() {
                cfg.lambda_total = lambda_total;
            }
            cfg.sweep = None;
            cfg.truncation = m.unwrap_or(cfg.truncation);
            cfg.alpha = alpha.unwrap_or(cfg.alpha);
            cfg.validate()?;
            let net = cfg.point(None)?;
            let model = MdpModel::new(net.users(), cfg.truncation)?;
            let opts = SolverOptions::new(cfg.alpha);
            let sol = match method {
                Method::Structural => structural_policy_iteration(&model, opts)?,
                Method::Plain => plain_policy_iteration(&model, opts)?,
                Method::ValueIteration => discounted_value_iteration(&model, opts)?,
            };
            let report = verify_structure(&model, &sol.values)?;
            let mut out = io::stdout().lock();
            writeln!(out, "states,{}", model.num_states())?;
            writeln!(out, "iterations,{}", sol.iterations)?;
            writeln!(out, "residual,{}", fmt_f64(sol.residual))?;
            writeln!(out, "minimized_states_last_round,{}", sol.evaluated_states)?;
            for (label, prop, checks) in [
                (
                    "monotonicity",
                    StructureProperty::Monotonicity,
                    report.monotonicity_checks,
                ),
                (
                    "submodularity",
                    StructureProperty::Submodularity,
                    report.submodularity_checks,
                ),
                (
                    "switching_persistence",
                    StructureProperty::SwitchingPersistence,
                    report.persistence_checks,
                ),
            ] {
                writeln!(out, "{label}_violations,{},{checks}", report.count(prop))?;
            }
            writeln!(
                out,
                "increasing_difference_violations,{},{}",
                report.increasing_difference_violations, report.submodularity_checks
            )?;
            if let Some(path) = policy_output {
                let file = BufWriter::new(File::create(&path)?);
                if model.users().len() <= 3 {
                    output::write_policy_csv(file, &sol.policy)?;
                } else {
                    output::write_policy_dense(file, &sol.policy)?;
                }
            }
            Ok(())
        }
        Command::Verify {
            seed,
            horizon,
            replications,
            output,
        } => {
            if horizon == 0 || replications == 0 {
                return Err(ConfigError("--horizon and --replications must be positive".into()).into());
            }
            let checks = run_suite(&VerifyOptions {
                seed,
                horizon,
                replications,
            })?;
            write_checks(open_out(output.as_deref())?, &checks)?;
            let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
            eprintln!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
            for f in failed {
                eprintln!("  failed: {f}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
