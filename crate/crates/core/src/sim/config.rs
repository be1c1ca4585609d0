//! Experiment configuration, read from JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::availability::Scenario;
use crate::data::synth::SynthKind;
use crate::error::{Error, Result};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "FEDSIM_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        kind: SynthKind,
        /// Defaults to enough vehicles for the partition.
        #[serde(default)]
        n_vehicles: Option<usize>,
        points_each: usize,
    },
    Csv {
        path: PathBuf,
    },
    Tdrive {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Equal { points_per_client: usize },
    ByVehicle { vehicles_per_client: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    FedAvg,
    FedProx {
        mu: f64,
    },
    #[serde(rename = "FedCAB")]
    FedCab,
    #[serde(rename = "FedDeCAB")]
    FedDeCab,
    FedProxPlus {
        mu: f64,
    },
    LocalOnly,
}

impl Variant {
    /// Server ranks participants instead of sampling them uniformly.
    pub fn ranked(&self) -> bool {
        matches!(self, Variant::FedCab | Variant::FedDeCab | Variant::FedProxPlus { .. })
    }

    /// Recovered clients continue from their own model instead of the pushed global one.
    pub fn resumes_recovered_locally(&self) -> bool {
        matches!(self, Variant::FedCab | Variant::FedDeCab)
    }

    pub fn decentralized(&self) -> bool {
        matches!(self, Variant::FedDeCab)
    }

    pub fn proximal_mu(&self) -> Option<f64> {
        match *self {
            Variant::FedProx { mu } | Variant::FedProxPlus { mu } => Some(mu),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::FedAvg => f.write_str("FedAvg"),
            Variant::FedProx { mu } => write!(f, "FedProx(mu={mu})"),
            Variant::FedCab => f.write_str("FedCAB"),
            Variant::FedDeCab => f.write_str("FedDeCAB"),
            Variant::FedProxPlus { mu } => write!(f, "FedProx+(mu={mu})"),
            Variant::LocalOnly => f.write_str("LocalOnly"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `fedavg`, `fedprox[:mu]`, `fedcab`, `feddecab`, `fedprox+[:mu]`, `local-only`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n.to_string(), Some(a.to_string())),
            None => (lower.clone(), None),
        };
        let mu = || -> Result<f64> {
            arg.as_deref()
                .map(|a| a.parse::<f64>().map_err(|_| Error::config(format!("bad mu in {s:?}"))))
                .unwrap_or(Ok(0.01))
        };
        match name.as_str() {
            "fedavg" => Ok(Variant::FedAvg),
            "fedprox" => Ok(Variant::FedProx { mu: mu()? }),
            "fedcab" => Ok(Variant::FedCab),
            "feddecab" => Ok(Variant::FedDeCab),
            "fedprox+" | "fedproxplus" => Ok(Variant::FedProxPlus { mu: mu()? }),
            "local-only" | "localonly" | "local" => Ok(Variant::LocalOnly),
            _ => Err(Error::config(format!("unknown variant {s:?}"))),
        }
    }
}

/// How ranked variants turn weights into a selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    TopK,
    /// Sampling without replacement proportional to weight.
    Weighted,
    /// Ignore weights; uniform sampling as in the baselines.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseUnits {
    #[default]
    Normalized,
    Degrees,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub partition: PartitionMode,
    pub scenario: Scenario,
    /// `N`.
    pub clients: usize,
    /// `T`.
    pub rounds: usize,
    /// `K`; derived from `sample_ratio` when absent.
    pub clients_per_round: Option<usize>,
    pub sample_ratio: f64,
    /// `E`.
    pub local_epochs: usize,
    pub learning_rate: f64,
    /// Per-round multiplicative decay of the learning rate.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub hidden: usize,
    pub init_scale: f64,
    /// Upload budget per client; `null` for unlimited.
    pub budget: Option<u32>,
    pub p_offline: f64,
    pub p_recover: f64,
    /// Fraction of rounds that also run a decentralized round; 0 disables them.
    pub decentralized_frequency: f64,
    /// `chi`.
    pub neighbors: usize,
    pub alpha0: f64,
    /// Defaults to `2 / rounds`.
    pub delta_alpha: Option<f64>,
    pub beta0: f64,
    pub delta_beta: f64,
    pub gamma: f64,
    pub selection: Selection,
    pub variant: Variant,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub offline_train_every_round: bool,
    pub aggregate_by_datasize: bool,
    pub rmse_units: RmseUnits,
    /// Rounds between per-client test evaluations (the last round is always
    /// evaluated); 0 evaluates only the last round.
    pub client_eval_interval: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DataSource::Synthetic { kind: SynthKind::Sinusoid, n_vehicles: None, points_each: 400 },
            partition: PartitionMode::ByVehicle { vehicles_per_client: 1 },
            scenario: Scenario::Random { alpha_dir: 1.0 },
            clients: 40,
            rounds: 240,
            clients_per_round: None,
            sample_ratio: 0.1,
            local_epochs: 1,
            learning_rate: 0.001,
            lr_decay: 1.0,
            batch_size: 16,
            seq_len: 6,
            hidden: 32,
            init_scale: 0.08,
            budget: Some(20),
            p_offline: 0.2,
            p_recover: 0.1,
            decentralized_frequency: 0.5,
            neighbors: 3,
            alpha0: 2.0,
            delta_alpha: None,
            beta0: 1.5,
            delta_beta: 0.05,
            gamma: 1.2,
            selection: Selection::TopK,
            variant: Variant::FedDeCab,
            seed: 42,
            holdout_fraction: 0.2,
            offline_train_every_round: false,
            aggregate_by_datasize: false,
            rmse_units: RmseUnits::Normalized,
            client_eval_interval: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Applies `FEDSIM_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// `K`.
    pub fn k(&self) -> usize {
        self.clients_per_round.unwrap_or_else(|| ((self.sample_ratio * self.clients as f64).round() as usize).max(1))
    }

    pub fn delta_alpha(&self) -> f64 {
        self.delta_alpha.unwrap_or(2.0 / self.rounds.max(1) as f64)
    }

    /// Rounds between decentralized rounds, or `None` when disabled.
    pub fn decentralized_period(&self) -> Option<usize> {
        (self.decentralized_frequency > 0.0).then(|| (1.0 / self.decentralized_frequency).ceil() as usize)
    }

    pub fn is_decentralized_round(&self, round: usize) -> bool {
        self.variant.decentralized() && self.decentralized_period().is_some_and(|p| round.is_multiple_of(p))
    }

    pub fn learning_rate_at(&self, round: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(round.saturating_sub(1) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.clients < 2 {
            return fail(format!("need at least 2 clients, got {}", self.clients));
        }
        if self.rounds < 1 {
            return fail("need at least 1 round".into());
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return fail(format!("sample_ratio must be in (0, 1], got {}", self.sample_ratio));
        }
        if self.clients_per_round == Some(0) {
            return fail("clients_per_round must be positive".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return fail(format!("holdout_fraction must be in (0, 1), got {}", self.holdout_fraction));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return fail("learning rate and its decay must be positive".into());
        }
        if self.batch_size == 0 || self.seq_len == 0 || self.hidden == 0 {
            return fail("batch_size, seq_len and hidden must be positive".into());
        }
        for (name, p) in [("p_offline", self.p_offline), ("p_recover", self.p_recover)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.decentralized_frequency) {
            return fail("decentralized_frequency must be in [0, 1]".into());
        }
        if self.neighbors == 0 {
            return fail("neighbors must be at least 1".into());
        }
        if !(self.gamma > 0.0) || !(self.beta0 > 0.0) || self.delta_beta < 0.0 {
            return fail("gamma and beta0 must be positive, delta_beta non-negative".into());
        }
        if let Some(mu) = self.variant.proximal_mu() {
            if !(mu >= 0.0) {
                return fail(format!("proximal mu must be non-negative, got {mu}"));
            }
        }
        if !(self.init_scale > 0.0) {
            return fail("init_scale must be positive".into());
        }
        match &self.partition {
            PartitionMode::Equal { points_per_client: 0 } | PartitionMode::ByVehicle { vehicles_per_client: 0 } => {
                return fail("partition sizes must be positive".into())
            }
            _ => {}
        }
        if let DataSource::Synthetic { points_each, .. } = self.dataset {
            if points_each == 0 {
                return fail("synthetic points_each must be positive".into());
            }
        }
        self.scenario.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!((c.clients, c.rounds, c.budget), (40, 240, Some(20)));
        assert_eq!((c.p_offline, c.p_recover, c.decentralized_frequency), (0.2, 0.1, 0.5));
        assert_eq!((c.local_epochs, c.learning_rate, c.batch_size, c.seq_len), (1, 0.001, 16, 6));
        assert_eq!(c.k(), 4);
        assert!((c.delta_alpha() - 2.0 / 240.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = ExperimentConfig::from_json(r#"{"clients": 10, "variant": {"FedProx": {"mu": 0.1}}}"#).unwrap();
        assert_eq!(partial.clients, 10);
        assert_eq!(partial.variant, Variant::FedProx { mu: 0.1 });
        assert!(ExperimentConfig::from_json(r#"{"clinets": 10}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"clients": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"holdout_fraction": 1.0}"#).is_err());
    }

    #[test]
    fn decentralized_schedule_is_even_rounds() {
        let c = ExperimentConfig::default();
        let scheduled: Vec<usize> = (1..=8).filter(|t| c.is_decentralized_round(*t)).collect();
        assert_eq!(scheduled, [2, 4, 6, 8]);
        let off = ExperimentConfig { decentralized_frequency: 0.0, ..c.clone() };
        assert!((1..=8).all(|t| !off.is_decentralized_round(t)));
        let cab = ExperimentConfig { variant: Variant::FedCab, ..c };
        assert!((1..=8).all(|t| !cab.is_decentralized_round(t)));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("FedDeCAB".parse::<Variant>().unwrap(), Variant::FedDeCab);
        assert_eq!("fedprox:0.5".parse::<Variant>().unwrap(), Variant::FedProx { mu: 0.5 });
        assert_eq!("fedprox+".parse::<Variant>().unwrap(), Variant::FedProxPlus { mu: 0.01 });
        assert!("moon".parse::<Variant>().is_err());
    }
}
