//! Linear-probe evaluation and degree-fairness metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{GradeError, Result};
use crate::graph::Graph;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    SemiSupervised,
    Supervised,
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitScheme::SemiSupervised => "semi_supervised",
            SplitScheme::Supervised => "supervised",
        })
    }
}

impl FromStr for SplitScheme {
    type Err = GradeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi_supervised" => Ok(SplitScheme::SemiSupervised),
            "supervised" => Ok(SplitScheme::Supervised),
            other => Err(GradeError::Config(format!(
                "unknown split scheme {other:?} (expected semi_supervised or supervised)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub scheme: SplitScheme,
    pub test_size: usize,
    pub max_test_degree: usize,
    pub per_class: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            scheme: SplitScheme::SemiSupervised,
            test_size: 1000,
            max_test_degree: 50,
            per_class: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub scheme: SplitScheme,
    pub seed: u64,
    pub max_test_degree: usize,
}

/// Test-set size capped at ⌊N/3⌋ when N < 3000.
pub fn effective_test_size(num_nodes: usize, requested: usize) -> usize {
    if num_nodes < 3000 {
        requested.min(num_nodes / 3)
    } else {
        requested
    }
}

/// Draws a reproducible train/test split. Test nodes all have degree below
/// `max_test_degree`.
pub fn make_split(graph: &Graph, cfg: &SplitConfig, seed: u64) -> Result<Split> {
    let labels = graph.require_labels("splitting")?;
    let n = graph.num_nodes();
    let test_size = effective_test_size(n, cfg.test_size);
    let mut rng = substream(seed, Stream::Split);

    let mut in_train = vec![false; n];
    if cfg.scheme == SplitScheme::SemiSupervised {
        let k = graph.num_classes().unwrap_or(0);
        let mut by_class = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        for (class, mut members) in by_class.into_iter().enumerate() {
            if members.len() < cfg.per_class {
                return Err(GradeError::Validation(format!(
                    "class {class} has {} nodes, fewer than the {} needed for training",
                    members.len(),
                    cfg.per_class
                )));
            }
            members.shuffle(&mut rng);
            for &i in &members[..cfg.per_class] {
                in_train[i] = true;
            }
        }
    }

    let mut eligible: Vec<usize> = (0..n)
        .filter(|&i| !in_train[i] && graph.degree(i) < cfg.max_test_degree)
        .collect();
    if eligible.len() < test_size {
        return Err(GradeError::Validation(format!(
            "only {} nodes eligible for testing, {test_size} requested",
            eligible.len()
        )));
    }
    eligible.shuffle(&mut rng);
    let mut test_idx = eligible[..test_size].to_vec();
    test_idx.sort_unstable();

    let train_idx = match cfg.scheme {
        SplitScheme::SemiSupervised => (0..n).filter(|&i| in_train[i]).collect(),
        SplitScheme::Supervised => {
            let mut in_test = vec![false; n];
            for &i in &test_idx {
                in_test[i] = true;
            }
            (0..n).filter(|&i| !in_test[i]).collect()
        }
    };

    Ok(Split {
        train_idx,
        test_idx,
        scheme: cfg.scheme,
        seed,
        max_test_degree: cfg.max_test_degree,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            iterations: 500,
            learning_rate: 0.5,
        }
    }
}

/// Multinomial logistic regression weights (d × K) and biases (K).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProbeParams {
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (k, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    logits
}

/// Mean cross-entropy over the rows of `x` plus `(λ/2)·‖W‖²`, with its gradient.
fn loss_and_grad(
    params: &ProbeParams,
    x: ArrayView2<f64>,
    y: &[usize],
    lambda: f64,
) -> (f64, ProbeParams) {
    let n = x.nrows() as f64;
    let probs = softmax_rows(params.logits(x));
    let mut loss = 0.0;
    let mut delta = probs;
    for (i, &label) in y.iter().enumerate() {
        loss -= delta[[i, label]].max(f64::MIN_POSITIVE).ln();
        delta[[i, label]] -= 1.0;
    }
    loss /= n;
    loss += 0.5 * lambda * params.weights.iter().map(|w| w * w).sum::<f64>();
    delta /= n;
    let grad = ProbeParams {
        weights: x.t().dot(&delta) + lambda * &params.weights,
        bias: delta.sum_axis(Axis(0)),
    };
    (loss, grad)
}

/// Probe parameters and regularized training loss after one iteration.
#[derive(Debug, Clone)]
pub struct ProbeStep {
    pub params: ProbeParams,
    pub loss: f64,
    pub learning_rate: f64,
}

/// Full-batch gradient descent with step halving whenever a step would raise
/// the loss; the rejected step still counts as an iteration.
pub fn train_probe_traced(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    split: &Split,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> (ProbeParams, Vec<ProbeStep>) {
    let x = embeddings.select(Axis(0), &split.train_idx);
    let y: Vec<usize> = split.train_idx.iter().map(|&i| labels[i]).collect();
    let mut params = ProbeParams {
        weights: Array2::zeros((embeddings.ncols(), num_classes)),
        bias: Array1::zeros(num_classes),
    };
    let mut lr = cfg.learning_rate;
    let mut trace = Vec::with_capacity(cfg.iterations);
    if y.is_empty() {
        return (params, trace);
    }
    let (mut loss, mut grad) = loss_and_grad(&params, x.view(), &y, cfg.lambda);
    for _ in 0..cfg.iterations {
        let candidate = ProbeParams {
            weights: &params.weights - &(lr * &grad.weights),
            bias: &params.bias - &(lr * &grad.bias),
        };
        let (c_loss, c_grad) = loss_and_grad(&candidate, x.view(), &y, cfg.lambda);
        if c_loss > loss || !c_loss.is_finite() {
            lr *= 0.5;
        } else {
            params = candidate;
            loss = c_loss;
            grad = c_grad;
        }
        trace.push(ProbeStep {
            params: params.clone(),
            loss,
            learning_rate: lr,
        });
    }
    (params, trace)
}

pub fn train_probe(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    split: &Split,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> ProbeParams {
    let (params, _) = train_probe_traced(embeddings, labels, split, num_classes, cfg);
    params
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeGroup {
    pub degree: usize,
    pub accuracy: f64,
    pub count: usize,
}

/// Unweighted mean, population variance and OLS line over degree groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub g_mean: f64,
    pub bias: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl GroupStats {
    pub fn from_groups(groups: &[DegreeGroup]) -> Self {
        let n = groups.len() as f64;
        if groups.is_empty() {
            return Self {
                g_mean: 0.0,
                bias: 0.0,
                slope: 0.0,
                intercept: 0.0,
            };
        }
        let g_mean = groups.iter().map(|g| g.accuracy).sum::<f64>() / n;
        let bias = groups
            .iter()
            .map(|g| (g.accuracy - g_mean).powi(2))
            .sum::<f64>()
            / n;
        let k_mean = groups.iter().map(|g| g.degree as f64).sum::<f64>() / n;
        let sxx: f64 = groups
            .iter()
            .map(|g| (g.degree as f64 - k_mean).powi(2))
            .sum();
        let sxy: f64 = groups
            .iter()
            .map(|g| (g.degree as f64 - k_mean) * (g.accuracy - g_mean))
            .sum();
        // A single group (or a single distinct degree) has no slope.
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        Self {
            g_mean,
            bias,
            slope,
            intercept: g_mean - slope * k_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub per_degree: Vec<DegreeGroup>,
    pub g_mean: f64,
    pub bias: f64,
    /// `bias × 10⁴`, the magnitude used when accuracies are quoted in percent.
    pub bias_percent_scale: f64,
    pub slope: f64,
    pub intercept: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Classes with no test node; they contribute 0 to Macro-F1.
    pub absent_classes: Vec<usize>,
    pub test_count: usize,
}

impl FairnessReport {
    /// Builds the report from per-node test outcomes.
    pub fn from_predictions(
        degrees: &[usize],
        truth: &[usize],
        predicted: &[usize],
        num_classes: usize,
    ) -> Self {
        assert_eq!(degrees.len(), truth.len());
        assert_eq!(truth.len(), predicted.len());

        let mut by_degree: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for ((&d, &t), &p) in degrees.iter().zip(truth).zip(predicted) {
            let e = by_degree.entry(d).or_default();
            e.0 += usize::from(t == p);
            e.1 += 1;
        }
        let per_degree: Vec<DegreeGroup> = by_degree
            .into_iter()
            .map(|(degree, (correct, count))| DegreeGroup {
                degree,
                accuracy: correct as f64 / count as f64,
                count,
            })
            .collect();
        let stats = GroupStats::from_groups(&per_degree);

        let total = truth.len();
        let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
        let micro_f1 = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };

        let mut tp = vec![0usize; num_classes];
        let mut fp = vec![0usize; num_classes];
        let mut fneg = vec![0usize; num_classes];
        let mut support = vec![0usize; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            support[t] += 1;
            if t == p {
                tp[t] += 1;
            } else {
                fp[p] += 1;
                fneg[t] += 1;
            }
        }
        let absent_classes: Vec<usize> = (0..num_classes).filter(|&c| support[c] == 0).collect();
        let macro_f1 = if num_classes == 0 {
            0.0
        } else {
            (0..num_classes)
                .map(|c| {
                    let denom = 2 * tp[c] + fp[c] + fneg[c];
                    if support[c] == 0 || denom == 0 {
                        0.0
                    } else {
                        2.0 * tp[c] as f64 / denom as f64
                    }
                })
                .sum::<f64>()
                / num_classes as f64
        };

        Self {
            per_degree,
            g_mean: stats.g_mean,
            bias: stats.bias,
            bias_percent_scale: stats.bias * 1e4,
            slope: stats.slope,
            intercept: stats.intercept,
            micro_f1,
            macro_f1,
            absent_classes,
            test_count: total,
        }
    }

    /// Tab-separated `degree<TAB>avg_acc<TAB>count` lines for external plotting.
    pub fn plot_data(&self) -> String {
        self.per_degree
            .iter()
            .map(|g| format!("{}\t{}\t{}\n", g.degree, g.accuracy, g.count))
            .collect()
    }
}

/// Evaluates a trained probe on the split's test nodes.
pub fn fairness_report(
    probe: &ProbeParams,
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    split: &Split,
    graph: &Graph,
) -> FairnessReport {
    let x = embeddings.select(Axis(0), &split.test_idx);
    let predicted = probe.predict(x.view());
    let truth: Vec<usize> = split.test_idx.iter().map(|&i| labels[i]).collect();
    let degrees: Vec<usize> = split.test_idx.iter().map(|&i| graph.degree(i)).collect();
    FairnessReport::from_predictions(&degrees, &truth, &predicted, probe.bias.len())
}
