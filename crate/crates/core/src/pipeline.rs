//! End-to-end runs: train, embed, split, probe and report, per seed and across seeds.

use ndarray::Array2;
use serde::Serialize;

use crate::augment::AugMode;
use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{fairness_report, make_split, train_probe, FairnessReport, ProbeParams, Split};
use crate::graph::Graph;
use crate::model::ModelParams;
use crate::trainer::{embed, train, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub aug_mode: String,
    pub fairness: FairnessReport,
    /// Accuracy over non-training nodes with degree ≤ ζ; `None` when there are none.
    pub tail_accuracy: Option<f64>,
    pub tail_count: usize,
    pub final_objective: f64,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub params: ModelParams,
    pub log: TrainLog,
    pub embeddings: Array2<f64>,
    pub split: Split,
    pub probe: ProbeParams,
    pub report: SeedReport,
}

/// Accuracy of `probe` over non-training nodes with degree ≤ `zeta`.
pub fn tail_accuracy(
    graph: &Graph,
    embeddings: &Array2<f64>,
    probe: &ProbeParams,
    split: &Split,
    zeta: usize,
) -> Result<(Option<f64>, usize)> {
    let labels = graph.require_labels("tail accuracy")?;
    let mut in_train = vec![false; graph.num_nodes()];
    for &i in &split.train_idx {
        in_train[i] = true;
    }
    let nodes: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| !in_train[i] && graph.degree(i) <= zeta)
        .collect();
    if nodes.is_empty() {
        return Ok((None, 0));
    }
    let x = embeddings.select(ndarray::Axis(0), &nodes);
    let predicted = probe.predict(x.view());
    let correct = nodes
        .iter()
        .zip(&predicted)
        .filter(|(&i, &p)| labels[i] == p)
        .count();
    Ok((Some(correct as f64 / nodes.len() as f64), nodes.len()))
}

/// Evaluates fixed embeddings: split, probe, fairness report and tail accuracy.
pub fn evaluate(
    graph: &Graph,
    embeddings: &Array2<f64>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(Split, ProbeParams, FairnessReport, Option<f64>, usize)> {
    let labels = graph.require_labels("evaluation")?;
    let num_classes = graph.num_classes().unwrap_or(0);
    let split = make_split(graph, &cfg.split, seed)?;
    let probe = train_probe(embeddings.view(), labels, &split, num_classes, &cfg.probe);
    let report = fairness_report(&probe, embeddings.view(), labels, &split, graph);
    let (tail, tail_count) = tail_accuracy(graph, embeddings, &probe, &split, cfg.augment.zeta)?;
    Ok((split, probe, report, tail, tail_count))
}

/// One seed of the full pipeline.
pub fn run_seed(graph: &Graph, cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    graph.require_labels("a seed run")?;
    let train_cfg = crate::trainer::TrainConfig {
        seed,
        ..cfg.train
    };
    let (params, log) = train(graph, &cfg.augment, &cfg.contrastive, &train_cfg)?;
    let embeddings = embed(graph, &params);
    let (split, probe, fairness, tail_accuracy, tail_count) =
        evaluate(graph, &embeddings, cfg, seed)?;
    let report = SeedReport {
        seed,
        aug_mode: cfg.augment.mode.to_string(),
        fairness,
        tail_accuracy,
        tail_count,
        final_objective: log.records.last().map_or(f64::NAN, |r| r.objective),
        best_epoch: log.best_epoch,
        epochs_run: log.records.len(),
    };
    Ok(SeedRun {
        params,
        log,
        embeddings,
        split,
        probe,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub g_mean: Option<MeanStd>,
    pub bias: Option<MeanStd>,
    pub slope: Option<MeanStd>,
    pub micro_f1: Option<MeanStd>,
    pub macro_f1: Option<MeanStd>,
    /// Over seeds that had at least one tail node.
    pub tail_accuracy: Option<MeanStd>,
    pub tail_seeds: usize,
}

impl Aggregate {
    pub fn from_reports(reports: &[SeedReport]) -> Self {
        let field = |f: fn(&FairnessReport) -> f64| -> Option<MeanStd> {
            MeanStd::of(&reports.iter().map(|r| f(&r.fairness)).collect::<Vec<_>>())
        };
        let tails: Vec<f64> = reports.iter().filter_map(|r| r.tail_accuracy).collect();
        Self {
            seeds: reports.len(),
            g_mean: field(|f| f.g_mean),
            bias: field(|f| f.bias),
            slope: field(|f| f.slope),
            micro_f1: field(|f| f.micro_f1),
            macro_f1: field(|f| f.macro_f1),
            tail_accuracy: MeanStd::of(&tails),
            tail_seeds: tails.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub aug_mode: String,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

/// Runs every seed and aggregates. Seeds run one after another.
pub fn audit(graph: &Graph, cfg: &RunConfig, seeds: &[u64]) -> Result<(AuditReport, Vec<SeedRun>)> {
    let runs = seeds
        .iter()
        .map(|&s| {
            log::info!("{} seed {s}", cfg.augment.mode);
            run_seed(graph, cfg, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_seed: Vec<SeedReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok((
        AuditReport {
            aug_mode: cfg.augment.mode.to_string(),
            aggregate: Aggregate::from_reports(&per_seed),
            per_seed,
        },
        runs,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub grade: AuditReport,
    pub random_drop: AuditReport,
    pub bias_not_worse: Option<bool>,
    pub tail_accuracy_not_worse: Option<bool>,
    pub g_mean_not_worse: Option<bool>,
}

/// The same seeds and hyperparameters under both augmentation modes.
pub fn compare(graph: &Graph, cfg: &RunConfig, seeds: &[u64]) -> Result<CompareReport> {
    let mut grade_cfg = cfg.clone();
    grade_cfg.augment.mode = AugMode::Grade;
    let mut base_cfg = cfg.clone();
    base_cfg.augment.mode = AugMode::RandomDrop;
    let (grade, _) = audit(graph, &grade_cfg, seeds)?;
    let (random_drop, _) = audit(graph, &base_cfg, seeds)?;
    let cmp = |a: Option<MeanStd>, b: Option<MeanStd>, lower_better: bool| {
        a.zip(b).map(|(a, b)| {
            if lower_better {
                a.mean <= b.mean
            } else {
                a.mean >= b.mean
            }
        })
    };
    Ok(CompareReport {
        bias_not_worse: cmp(grade.aggregate.bias, random_drop.aggregate.bias, true),
        tail_accuracy_not_worse: cmp(
            grade.aggregate.tail_accuracy,
            random_drop.aggregate.tail_accuracy,
            false,
        ),
        g_mean_not_worse: cmp(grade.aggregate.g_mean, random_drop.aggregate.g_mean, false),
        grade,
        random_drop,
    })
}
