//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aos_sched_core::{NetworkConfig, UserParams};
use serde::Deserialize;

pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_REPLICATIONS: u64 = 20;
pub const DEFAULT_TRUNCATION: u64 = 20;
pub const DEFAULT_ALPHA: f64 = 0.99;
pub const DEFAULT_SEED: u64 = 1;

/// Invalid or unreadable configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<aos_sched_core::Error> for ConfigError {
    fn from(e: aos_sched_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Greedy,
    Whittle,
    Aoi,
    Mdp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Greedy,
        PolicyKind::Whittle,
        PolicyKind::Aoi,
        PolicyKind::Mdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Whittle => "whittle",
            PolicyKind::Aoi => "aoi",
            PolicyKind::Mdp => "mdp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            bad(format!(
                "unknown policy `{s}` (expected one of greedy, whittle, aoi, mdp)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub lambda: f64,
    pub p: f64,
}

/// Parameterizations of the evaluation section.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    /// Three users, `λ = [0.3, 0.4, 0.3] λ_total`, `p = [0.2, 0.55, 0.9]`.
    Fig2 { lambda_total: f64 },
    /// `λ_n = 2n/(N(N+1)) λ_total`, `p_n = n/N`.
    Fig3 { n: usize, lambda_total: f64 },
    /// `λ_n = 0.5 n/N`, common `p`.
    Fig4 { n: usize, p: f64 },
    /// `p_n = n/N`, common `λ`.
    Fig5 { n: usize, lambda: f64 },
}

impl Generator {
    pub fn users(&self) -> Result<Vec<UserParams>, ConfigError> {
        let pairs: Vec<(f64, f64)> = match *self {
            Generator::Fig2 { lambda_total } => [0.3, 0.4, 0.3]
                .iter()
                .zip([0.2, 0.55, 0.9])
                .map(|(w, p)| (w * lambda_total, p))
                .collect(),
            Generator::Fig3 { n, lambda_total } => {
                let nf = n as f64;
                (1..=n)
                    .map(|k| (2.0 * k as f64 / (nf * (nf + 1.0)) * lambda_total, k as f64 / nf))
                    .collect()
            }
            Generator::Fig4 { n, p } => (1..=n).map(|k| (0.5 * k as f64 / n as f64, p)).collect(),
            Generator::Fig5 { n, lambda } => (1..=n).map(|k| (lambda, k as f64 / n as f64)).collect(),
        };
        if pairs.is_empty() {
            return Err(bad("generator produced no users"));
        }
        pairs
            .into_iter()
            .enumerate()
            .map(|(i, (l, p))| UserParams::new(l, p).map_err(|e| bad(format!("user {i}: {e}"))))
            .collect()
    }

    fn with_param(self, param: SweepParam, value: f64) -> Result<Self, ConfigError> {
        let count = || -> Result<usize, ConfigError> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(bad(format!("user count must be a positive integer, got {value}")))
            }
        };
        Ok(match (self, param) {
            (Generator::Fig2 { .. }, SweepParam::LambdaTotal) => Generator::Fig2 { lambda_total: value },
            (Generator::Fig3 { n, .. }, SweepParam::LambdaTotal) => Generator::Fig3 { n, lambda_total: value },
            (Generator::Fig3 { lambda_total, .. }, SweepParam::Users) => Generator::Fig3 {
                n: count()?,
                lambda_total,
            },
            (Generator::Fig4 { p, .. }, SweepParam::Users) => Generator::Fig4 { n: count()?, p },
            (Generator::Fig5 { lambda, .. }, SweepParam::Users) => Generator::Fig5 { n: count()?, lambda },
            (g, p) => return Err(bad(format!("cannot sweep {p} with generator {g:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "lambda_total")]
    LambdaTotal,
    #[serde(rename = "N")]
    Users,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::LambdaTotal => "lambda_total",
            SweepParam::Users => "N",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// The file format, before validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub users: Option<Vec<UserSpec>>,
    pub generator: Option<Generator>,
    /// Rescales the arrival rates so they sum to this value.
    pub lambda_total: Option<f64>,
    /// Channels per slot.
    #[serde(rename = "M")]
    pub bandwidth: Option<usize>,
    pub m: Option<u64>,
    pub alpha: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<u64>,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub policies: Option<Vec<String>>,
    pub sweep: Option<SweepSpec>,
    pub output: Option<PathBuf>,
}

/// How the users of a run are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum UserSource {
    Explicit(Vec<UserParams>),
    Generated(Generator),
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: UserSource,
    pub lambda_total: Option<f64>,
    pub bandwidth: usize,
    pub truncation: u64,
    pub alpha: f64,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
    pub sweep: Option<SweepSpec>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_file(f: ConfigFile) -> Result<Self, ConfigError> {
        let source = match (f.users, f.generator) {
            (Some(_), Some(_)) => return Err(bad("give either `users` or `generator`, not both")),
            (None, None) => return Err(bad("missing `users` or `generator`")),
            (Some(us), None) => UserSource::Explicit(
                us.iter()
                    .enumerate()
                    .map(|(i, u)| UserParams::new(u.lambda, u.p).map_err(|e| bad(format!("user {i}: {e}"))))
                    .collect::<Result<_, _>>()?,
            ),
            (None, Some(g)) => UserSource::Generated(g),
        };
        let policies = match f.policies {
            None => vec![PolicyKind::Greedy, PolicyKind::Whittle, PolicyKind::Aoi],
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<_>, _>>()?,
        };
        if policies.is_empty() {
            return Err(bad("`policies` must not be empty"));
        }
        if let Some(s) = &f.sweep {
            if s.values.is_empty() {
                return Err(bad("sweep grid must not be empty"));
            }
        }
        let cfg = Self {
            source,
            lambda_total: f.lambda_total,
            bandwidth: f.bandwidth.unwrap_or(1),
            truncation: f.m.unwrap_or(DEFAULT_TRUNCATION),
            alpha: f.alpha.unwrap_or(DEFAULT_ALPHA),
            horizon: f.horizon.unwrap_or(DEFAULT_HORIZON),
            replications: f.replications.unwrap_or(DEFAULT_REPLICATIONS),
            seed: f.seed.unwrap_or(DEFAULT_SEED),
            policies,
            sweep: f.sweep,
            output: f.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(bad("`replications` must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(bad("`T` must be at least 1"));
        }
        if self.truncation < 2 {
            return Err(bad("`m` must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("`alpha` must lie in (0, 1)"));
        }
        match &self.sweep {
            Some(s) => {
                for &v in &s.values {
                    self.point(Some(v))?;
                }
            }
            None => {
                self.point(None)?;
            }
        }
        Ok(())
    }

    /// Network at one sweep value, or the base network for `None`.
    pub fn point(&self, value: Option<f64>) -> Result<NetworkConfig, ConfigError> {
        let param = self.sweep.as_ref().map(|s| s.param);
        let mut lambda_total = self.lambda_total;
        let users = match (&self.source, param, value) {
            (UserSource::Explicit(us), Some(SweepParam::LambdaTotal), Some(v)) => {
                lambda_total = Some(v);
                us.clone()
            }
            (UserSource::Explicit(_), Some(SweepParam::Users), Some(_)) => {
                return Err(bad("sweeping N needs a generator"));
            }
            (UserSource::Generated(g), Some(p), Some(v)) => {
                if p == SweepParam::LambdaTotal {
                    lambda_total = None;
                }
                g.with_param(p, v)?.users()?
            }
            (UserSource::Explicit(us), _, _) => us.clone(),
            (UserSource::Generated(g), _, _) => g.users()?,
        };
        let users = match lambda_total {
            Some(total) => rescale(&users, total)?,
            None => users,
        };
        if self.bandwidth == 0 || self.bandwidth > users.len() {
            return Err(bad(format!("`M` must lie in 1..={}", users.len())));
        }
        Ok(NetworkConfig::new(users, self.bandwidth, self.horizon, self.seed)?)
    }

    /// Sweep values, or a single `None` when there is no sweep.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }
}

/// Scales arrival rates proportionally so that they sum to `total`.
pub fn rescale(users: &[UserParams], total: f64) -> Result<Vec<UserParams>, ConfigError> {
    if !(total > 0.0) {
        return Err(bad("`lambda_total` must be positive"));
    }
    let sum: f64 = users.iter().map(UserParams::lambda).sum();
    users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let l = u.lambda() / sum * total;
            UserParams::new(l, u.p()).map_err(|_| {
                bad(format!(
                    "lambda_total {total} drives user {i} to arrival rate {l} outside (0, 1]"
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_generator() {
        let cfg = ExperimentConfig::from_json(r#"{"generator": {"kind": "fig2", "lambda_total": 2.4}}"#).unwrap();
        let net = cfg.point(None).unwrap();
        let l: Vec<f64> = net.users().iter().map(|u| u.lambda()).collect();
        assert!((l[0] - 0.72).abs() < 1e-12 && (l[1] - 0.96).abs() < 1e-12);
        assert_eq!(cfg.replications, DEFAULT_REPLICATIONS);
    }

    #[test]
    fn fig3_sweep_over_users() {
        let cfg = ExperimentConfig::from_json(
            r#"{"generator": {"kind": "fig3", "n": 5, "lambda_total": 2},
                "sweep": {"param": "N", "values": [3, 6]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.point(Some(6.0)).unwrap().num_users(), 6);
        assert!(ExperimentConfig::from_json(
            r#"{"generator": {"kind": "fig3", "n": 5, "lambda_total": 2},
                "sweep": {"param": "N", "values": [1]}}"#,
        )
        .is_err());
    }

    #[test]
    fn lambda_total_rescales_explicit_users() {
        let cfg = ExperimentConfig::from_json(
            r#"{"users": [{"lambda": 0.1, "p": 0.5}, {"lambda": 0.3, "p": 0.5}], "lambda_total": 0.8}"#,
        )
        .unwrap();
        let net = cfg.point(None).unwrap();
        assert!((net.users()[1].lambda() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_fields() {
        for text in [
            r#"{"users": []}"#,
            r#"{"users": [{"lambda": 1.5, "p": 0.5}]}"#,
            r#"{"users": [{"lambda": 0.5, "p": 0.5}], "policies": ["fifo"]}"#,
            r#"{"users": [{"lambda": 0.5, "p": 0.5}], "replications": 0}"#,
            r#"{"users": [{"lambda": 0.5, "p": 0.5}], "sweep": {"param": "lambda_total", "values": []}}"#,
            r#"{"users": [{"lambda": 0.5, "p": 0.5}], "colour": 3}"#,
            r#"{"generator": {"kind": "fig2", "lambda_total": 4}}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }
}
