//! Training loop: warmup with random edge dropping, then similarity-guided
//! augmentation, two views per epoch, one Adam step on −J.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::{build_similarity, next_view_seed, AugMode, AugmentConfig, Augmenter, SimilarityMatrix};
use crate::error::{GradeError, Result};
use crate::graph::Graph;
use crate::model::{backward, embed_graph, forward_view, ModelDims, ModelParams, ParamSet};
use crate::objective::{total_objective, ContrastiveConfig};
use crate::optim::Adam;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub sim_refresh_interval: usize,
    /// Epochs without improvement of the training loss before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub proj_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 200,
            total_epochs: 300,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            sim_refresh_interval: 1,
            early_stop_patience: 20,
            layers: 2,
            hidden_dim: 128,
            embed_dim: 128,
            proj_dim: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.total_epochs {
            return Err(GradeError::Config(format!(
                "warmup_epochs ({}) exceeds total epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(GradeError::Config("learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || self.adam_eps <= 0.0
        {
            return Err(GradeError::Config("invalid Adam hyperparameters".into()));
        }
        if self.sim_refresh_interval == 0 {
            return Err(GradeError::Config("sim_refresh_interval must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn model_dims(&self, input: usize) -> ModelDims {
        ModelDims {
            input,
            hidden: self.hidden_dim,
            embed: self.embed_dim,
            proj: self.proj_dim,
            layers: self.layers,
        }
    }

    /// First epoch whose loss counts for early stopping and best-model selection.
    fn selection_start(&self) -> usize {
        if self.warmup_epochs < self.total_epochs {
            self.warmup_epochs
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub mode: String,
    pub wall_time_ms: f64,
    pub grad_norm: f64,
    pub zero_norm_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainLog {
    /// Objective values only, for comparisons that must ignore timing.
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }
}

/// Trains encoder and projector; returns the parameters with the lowest
/// training loss seen from the end of warmup onwards.
pub fn train(
    graph: &Graph,
    aug_cfg: &AugmentConfig,
    con_cfg: &ContrastiveConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    train_observed(graph, aug_cfg, con_cfg, cfg, |_, _| {})
}

/// [`train`] with `observe(epoch, params)` called after every Adam step.
pub fn train_observed<F: FnMut(usize, &ModelParams)>(
    graph: &Graph,
    aug_cfg: &AugmentConfig,
    con_cfg: &ContrastiveConfig,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<(ModelParams, TrainLog)> {
    aug_cfg.validate()?;
    con_cfg.validate()?;
    cfg.validate()?;
    if graph.num_nodes() == 0 {
        return Err(GradeError::Validation("cannot train on an empty graph".into()));
    }

    let dims = cfg.model_dims(graph.num_features());
    let mut params = ModelParams::init(dims, &mut substream(cfg.seed, Stream::Init))?;
    let mut aug_rng = substream(cfg.seed, Stream::Augment);
    let mut adam = Adam::new(
        &dims,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );

    let mut log = TrainLog::default();
    let mut sim: Option<SimilarityMatrix> = None;
    let mut best: Option<(f64, ParamSet)> = None;
    let mut since_best = 0usize;
    let selection_start = cfg.selection_start();

    for epoch in 0..cfg.total_epochs {
        let started = Instant::now();
        let mode = if epoch < cfg.warmup_epochs {
            AugMode::RandomDrop
        } else {
            aug_cfg.mode
        };
        if mode == AugMode::Grade
            && (epoch - cfg.warmup_epochs).is_multiple_of(cfg.sim_refresh_interval)
        {
            sim = Some(build_similarity(embed_graph(graph, &params).view()));
        }
        let epoch_cfg = AugmentConfig { mode, ..*aug_cfg };
        let augmenter = Augmenter::new(graph, sim.as_ref(), epoch_cfg)?;
        let view_a = augmenter.make_view(next_view_seed(&mut aug_rng));
        let view_b = augmenter.make_view(next_view_seed(&mut aug_rng));

        let proj_a = forward_view(&view_a, &params);
        let proj_b = forward_view(&view_b, &params);
        let out = total_objective(proj_a.z.view(), proj_b.z.view(), con_cfg.tau);
        if !out.value.is_finite() {
            log::error!("epoch {epoch}: non-finite objective {}", out.value);
            return Err(GradeError::Divergence {
                epoch,
                value: out.value,
            });
        }
        let zero_norm_rows = proj_a.zero_rows + proj_b.zero_rows;

        // Descend on −J.
        params.zero_grad();
        backward(proj_a.tape, (-&out.grad_z).view(), &mut params);
        backward(proj_b.tape, (-&out.grad_z_other).view(), &mut params);
        let grad_norm = params.grads.norm();

        let loss = -out.value;
        if epoch >= selection_start {
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, params.values.clone()));
                log.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
            }
        }

        adam.step(&mut params.values, &params.grads);
        observe(epoch, &params);

        log.records.push(EpochRecord {
            epoch,
            objective: out.value,
            mode: mode.to_string(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            grad_norm,
            zero_norm_rows,
        });

        if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
            log.stopped_early = true;
            break;
        }
    }

    let values = best.map_or(params.values, |(_, v)| v);
    Ok((ModelParams::from_values(dims, values)?, log))
}

/// Encoder output on the un-augmented graph.
pub fn embed(graph: &Graph, params: &ModelParams) -> Array2<f64> {
    embed_graph(graph, params)
}
