//! Run configuration: `key = value` files, command-line overrides and the
//! resolved echo written next to every run's outputs.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::augment::{AugMode, AugmentConfig};
use crate::error::{GradeError, Result};
use crate::eval::{ProbeConfig, SplitConfig, SplitScheme};
use crate::objective::ContrastiveConfig;
use crate::sbm::SbmConfig;
use crate::theory::TheoryConfig;
use crate::trainer::TrainConfig;

/// Every recognised key, in sorted order.
pub const KEYS: &[&str] = &[
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "aug_mode",
    "communities",
    "early_stop_patience",
    "embed_dim",
    "epochs",
    "epsilon",
    "epsilon_grid",
    "feature_dim",
    "feature_noise",
    "gamma_grid",
    "hidden_dim",
    "layers",
    "lr",
    "m",
    "max_test_degree",
    "min_phi",
    "nodes",
    "p_edr",
    "p_fdr",
    "p_in",
    "p_out",
    "pairs_per_node",
    "per_class",
    "probe_iters",
    "probe_lambda",
    "probe_lr",
    "proj_dim",
    "sbm_seed",
    "seed",
    "sim_refresh_interval",
    "split",
    "tau",
    "test_size",
    "warmup_epochs",
    "zeta",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub augment: AugmentConfig,
    pub contrastive: ContrastiveConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub probe: ProbeConfig,
    pub theory: TheoryConfig,
    pub sbm: SbmConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| GradeError::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "adam_beta1" => self.train.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.train.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.train.adam_eps = parse(key, value)?,
            "aug_mode" => self.augment.mode = value.parse::<AugMode>()?,
            "communities" => self.sbm.communities = parse(key, value)?,
            "early_stop_patience" => self.train.early_stop_patience = parse(key, value)?,
            "embed_dim" => self.train.embed_dim = parse(key, value)?,
            "epochs" => self.train.total_epochs = parse(key, value)?,
            "epsilon" => self.theory.epsilon = parse(key, value)?,
            "epsilon_grid" => self.theory.epsilon_grid = parse_list(key, value)?,
            "feature_dim" => self.sbm.feature_dim = parse(key, value)?,
            "feature_noise" => self.sbm.feature_noise = parse(key, value)?,
            "gamma_grid" => self.theory.gamma_grid = parse_list(key, value)?,
            "hidden_dim" => self.train.hidden_dim = parse(key, value)?,
            "layers" => self.train.layers = parse(key, value)?,
            "lr" => self.train.learning_rate = parse(key, value)?,
            "m" => self.theory.m = parse(key, value)?,
            "max_test_degree" => self.split.max_test_degree = parse(key, value)?,
            "min_phi" => self.augment.min_phi = parse(key, value)?,
            "nodes" => self.sbm.nodes = parse(key, value)?,
            "p_edr" => self.augment.p_edr = parse(key, value)?,
            "p_fdr" => self.augment.p_fdr = parse(key, value)?,
            "p_in" => self.sbm.p_in = parse(key, value)?,
            "p_out" => self.sbm.p_out = parse(key, value)?,
            "pairs_per_node" => self.theory.pairs_per_node = parse(key, value)?,
            "per_class" => self.split.per_class = parse(key, value)?,
            "probe_iters" => self.probe.iterations = parse(key, value)?,
            "probe_lambda" => self.probe.lambda = parse(key, value)?,
            "probe_lr" => self.probe.learning_rate = parse(key, value)?,
            "proj_dim" => self.train.proj_dim = parse(key, value)?,
            "sbm_seed" => self.sbm.seed = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "sim_refresh_interval" => self.train.sim_refresh_interval = parse(key, value)?,
            "split" => self.split.scheme = value.parse::<SplitScheme>()?,
            "tau" => self.contrastive.tau = parse(key, value)?,
            "test_size" => self.split.test_size = parse(key, value)?,
            "warmup_epochs" => self.train.warmup_epochs = parse(key, value)?,
            "zeta" => self.augment.zeta = parse(key, value)?,
            other => {
                return Err(GradeError::Config(format!("unknown configuration key {other:?}")))
            }
        }
        Ok(())
    }

    /// Current textual value of a key.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "adam_beta1" => self.train.adam_beta1.to_string(),
            "adam_beta2" => self.train.adam_beta2.to_string(),
            "adam_eps" => self.train.adam_eps.to_string(),
            "aug_mode" => self.augment.mode.to_string(),
            "communities" => self.sbm.communities.to_string(),
            "early_stop_patience" => self.train.early_stop_patience.to_string(),
            "embed_dim" => self.train.embed_dim.to_string(),
            "epochs" => self.train.total_epochs.to_string(),
            "epsilon" => self.theory.epsilon.to_string(),
            "epsilon_grid" => join(&self.theory.epsilon_grid),
            "feature_dim" => self.sbm.feature_dim.to_string(),
            "feature_noise" => self.sbm.feature_noise.to_string(),
            "gamma_grid" => join(&self.theory.gamma_grid),
            "hidden_dim" => self.train.hidden_dim.to_string(),
            "layers" => self.train.layers.to_string(),
            "lr" => self.train.learning_rate.to_string(),
            "m" => self.theory.m.to_string(),
            "max_test_degree" => self.split.max_test_degree.to_string(),
            "min_phi" => self.augment.min_phi.to_string(),
            "nodes" => self.sbm.nodes.to_string(),
            "p_edr" => self.augment.p_edr.to_string(),
            "p_fdr" => self.augment.p_fdr.to_string(),
            "p_in" => self.sbm.p_in.to_string(),
            "p_out" => self.sbm.p_out.to_string(),
            "pairs_per_node" => self.theory.pairs_per_node.to_string(),
            "per_class" => self.split.per_class.to_string(),
            "probe_iters" => self.probe.iterations.to_string(),
            "probe_lambda" => self.probe.lambda.to_string(),
            "probe_lr" => self.probe.learning_rate.to_string(),
            "proj_dim" => self.train.proj_dim.to_string(),
            "sbm_seed" => self.sbm.seed.to_string(),
            "seed" => self.train.seed.to_string(),
            "sim_refresh_interval" => self.train.sim_refresh_interval.to_string(),
            "split" => self.split.scheme.to_string(),
            "tau" => self.contrastive.tau.to_string(),
            "test_size" => self.split.test_size.to_string(),
            "warmup_epochs" => self.train.warmup_epochs.to_string(),
            "zeta" => self.augment.zeta.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| GradeError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
            self.set(key.trim(), value).map_err(|e| match e {
                GradeError::Config(m) => parse_err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?, path)?;
        Ok(cfg)
    }

    /// Every key with its value, sorted by key, one `key = value` per line.
    pub fn to_resolved_string(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        self.contrastive.validate()?;
        self.train.validate()?;
        self.train.model_dims(1).validate()?;
        self.theory.validate()?;
        if self.probe.iterations == 0 || !(self.probe.learning_rate > 0.0) || self.probe.lambda < 0.0
        {
            return Err(GradeError::Config("invalid probe settings".into()));
        }
        Ok(())
    }
}
