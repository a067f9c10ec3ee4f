//! Stochastic block model graphs with noisy one-hot community features.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{GradeError, Result};
use crate::graph::Graph;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 300,
            communities: 2,
            p_in: 0.1,
            p_out: 0.01,
            feature_noise: 0.3,
            feature_dim: 16,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.communities < 2 {
            return Err(GradeError::Config("communities must be at least 2".into()));
        }
        if self.communities > self.feature_dim {
            return Err(GradeError::Config(format!(
                "communities ({}) exceeds feature_dim ({})",
                self.communities, self.feature_dim
            )));
        }
        if self.nodes < self.communities {
            return Err(GradeError::Config("fewer nodes than communities".into()));
        }
        if !(0.0..=1.0).contains(&self.p_in)
            || !(0.0..=1.0).contains(&self.p_out)
            || self.p_out > self.p_in
        {
            return Err(GradeError::Config(
                "edge probabilities must satisfy 0 ≤ p_out ≤ p_in ≤ 1".into(),
            ));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(GradeError::Config("feature_noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Community of node `i`: contiguous, near-equal blocks.
    pub fn community_of(&self, i: usize) -> usize {
        i * self.communities / self.nodes
    }
}

/// Samples a graph; labels are the planted communities.
///
/// A node left isolated is joined to a random other member of its community,
/// so every node has degree at least one.
pub fn generate(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Stream::Sbm);
    let n = cfg.nodes;
    let labels: Vec<usize> = (0..n).map(|i| cfg.community_of(i)).collect();

    let mut edges = Vec::new();
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    for i in 0..n {
        if degree[i] > 0 {
            continue;
        }
        let peers: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let target = if peers.is_empty() {
            let j = rng.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        } else {
            peers[rng.random_range(0..peers.len())]
        };
        edges.push((i.min(target), i.max(target)));
        degree[i] += 1;
        degree[target] += 1;
    }

    let noise = Normal::new(0.0, cfg.feature_noise)
        .map_err(|e| GradeError::Config(format!("feature_noise: {e}")))?;
    let mut features = Array2::zeros((n, cfg.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = noise.sample(&mut rng);
        }
        row[labels[i]] += 1.0;
    }

    let (graph, _) = Graph::from_edges(&edges, features, Some(labels))?;
    Ok(graph)
}
