//! Empirical probe of community concentration and scatter for a single-layer encoder.
//!
//! Augmentations here are uniform: a node's neighbourhood is replaced by a
//! uniformly random m-subset of the other nodes, so there are C(N−1, m) of them.
//! Representations are L2-normalized (radius 1) before any distance is taken.
//! The quantities measured are
//!
//! * `R_ε`, the fraction of nodes with some pair of augmented representations
//!   further apart than ε, plus the alignment upper bound
//!   `C(N−1,m)² / ε · E‖f(Ĝ¹) − f(Ĝ²)‖`;
//! * the augmentation distance `d_T(i, j)`, the minimum over augmentation pairs
//!   of the distance between pre-transformation rows `L̂X`;
//! * per-community core subsets C⁰ₖ of bounded d_T diameter and their mass α;
//! * community centres μₖ, the nearest-centre indicator and its error, and the
//!   scatter condition `μₗ·μₖ < 1 − ρ_max − √(2ρ_max) − Δ_μ/2`.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use serde::{Serialize, Serializer};

use crate::error::{GradeError, Result};
use crate::graph::{Graph, NeighborList};
use crate::model::ModelParams;
use crate::rng::Rng;

/// Exhaustive enumeration is used whenever C(N−1, m) is at most this.
pub const ENUMERATION_LIMIT: u128 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub pairs_per_node: usize,
    pub m: usize,
    pub gamma_grid: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_grid: vec![0.01, 0.05, 0.1, 0.5, 1.0],
            pairs_per_node: 16,
            m: 1,
            gamma_grid: vec![0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(GradeError::Config("epsilon must be positive".into()));
        }
        if self.epsilon_grid.iter().any(|&e| !(e > 0.0)) {
            return Err(GradeError::Config("epsilon_grid values must be positive".into()));
        }
        if self.m == 0 {
            return Err(GradeError::Config("m must be at least 1".into()));
        }
        if self.pairs_per_node == 0 {
            return Err(GradeError::Config("pairs_per_node must be at least 1".into()));
        }
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|&g| !(g > 0.0)) {
            return Err(GradeError::Config(
                "gamma_grid must be a non-empty list of positive values".into(),
            ));
        }
        Ok(())
    }
}

/// C(n, k), or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc · (n − i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// ln C(n, k); exact integer arithmetic whenever the value fits in 128 bits.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if let Some(c) = binomial(n, k) {
        return (c as f64).ln();
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// The rank-th m-subset of {0..n} in lexicographic order.
fn unrank_combination(n: usize, m: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut x = 0;
    for slot in 0..m {
        loop {
            let c = binomial(n - x - 1, m - slot - 1).expect("enumerable sizes only");
            if rank < c {
                out.push(x);
                x += 1;
                break;
            }
            rank -= c;
            x += 1;
        }
    }
    out
}

/// Maps a position among the other nodes to a node index, skipping `node`.
fn other(node: usize, t: usize) -> usize {
    if t >= node {
        t + 1
    } else {
        t
    }
}

fn check_m(graph: &Graph, m: usize) -> Result<()> {
    let n = graph.num_nodes();
    if m == 0 || m + 1 > n {
        return Err(GradeError::Config(format!(
            "m = {m} must lie in [1, N−1] = [1, {}]",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Number of distinct uniform augmentations of one node, if small enough to enumerate.
fn enumerable_count(graph: &Graph, m: usize) -> Option<usize> {
    binomial(graph.num_nodes() - 1, m)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .map(|c| c as usize)
}

fn augmentation_by_rank(graph: &Graph, node: usize, m: usize, rank: usize) -> NeighborList {
    let picks = unrank_combination(graph.num_nodes() - 1, m, rank as u128);
    NeighborList::new(node, picks.into_iter().map(|t| other(node, t)).collect())
}

/// A uniformly random m-subset of the nodes other than `node`.
pub fn sample_uniform_augmentation(
    graph: &Graph,
    node: usize,
    m: usize,
    rng: &mut Rng,
) -> Result<NeighborList> {
    check_m(graph, m)?;
    let picks = index::sample(rng, graph.num_nodes() - 1, m);
    Ok(NeighborList::new(
        node,
        picks.into_iter().map(|t| other(node, t)).collect(),
    ))
}

/// Every uniform augmentation of `node` (enumerable sizes only), in rank order.
pub fn enumerate_augmentations(graph: &Graph, node: usize, m: usize) -> Result<Vec<NeighborList>> {
    check_m(graph, m)?;
    let count = enumerable_count(graph, m).ok_or_else(|| {
        GradeError::Config(format!(
            "C({}, {m}) exceeds the enumeration limit",
            graph.num_nodes() - 1
        ))
    })?;
    Ok((0..count)
        .map(|r| augmentation_by_rank(graph, node, m, r))
        .collect())
}

/// `count` augmentations of `node`: all of them when there are at most `count`,
/// otherwise independent uniform draws.
fn augmentations_for(
    graph: &Graph,
    node: usize,
    m: usize,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<NeighborList>> {
    match enumerable_count(graph, m) {
        Some(total) if total <= count => enumerate_augmentations(graph, node, m),
        _ => (0..count)
            .map(|_| sample_uniform_augmentation(graph, node, m, rng))
            .collect(),
    }
}

/// Pre-transformation row `L̂ᵢX` for node `node` with neighbourhood `nbrs`.
pub fn pre_representation(graph: &Graph, node: usize, nbrs: &[usize]) -> Array1<f64> {
    let x = graph.features();
    let mut row = x.row(node).to_owned();
    for &j in nbrs {
        row += &x.row(j);
    }
    row / (nbrs.len() + 1) as f64
}

fn normalize(mut v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n >= 1e-12 {
        v /= n;
    } else {
        v.fill(0.0);
    }
    v
}

fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n >= 1e-12 {
            row /= n;
        } else {
            row.fill(0.0);
        }
    }
    m
}

fn single_layer_weights(params: &ModelParams) -> Result<&Array2<f64>> {
    if params.dims().layers != 1 {
        return Err(GradeError::Usage(format!(
            "the theory probe needs a single-layer encoder, checkpoint has {} layers",
            params.dims().layers
        )));
    }
    Ok(&params.values.encoder[0])
}

/// Normalized single-layer representation `ReLU(pre · W) / ‖·‖`.
fn represent(pre: ArrayView1<f64>, weights: &Array2<f64>) -> Array1<f64> {
    normalize(pre.dot(weights).mapv(|v| v.max(0.0)))
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Normalized single-layer representations of the un-augmented graph.
pub fn normalized_embeddings(graph: &Graph, params: &ModelParams) -> Result<Array2<f64>> {
    let w = single_layer_weights(params)?;
    let pre = crate::graph::propagate(graph.adjacency(), graph.features().view());
    Ok(normalize_rows(pre.dot(w).mapv(|v| v.max(0.0))))
}

fn ser_extended_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct REpsEstimate {
    pub r_eps_hat: f64,
    pub epsilon: f64,
    /// Largest observed distance between two augmented representations, per node.
    pub max_pair_distance: Vec<f64>,
    pub mean_pair_distance: f64,
    /// `C(N−1,m)² / ε · mean pair distance`; infinite when it overflows.
    #[serde(serialize_with = "ser_extended_f64")]
    pub r_eps_upper_bound: f64,
    pub ln_augmentation_count: f64,
    /// True when every node's full pair set was enumerated.
    pub exhaustive: bool,
}

impl REpsEstimate {
    /// Fraction of nodes outside S_ε at another threshold, from the same pairs.
    pub fn r_eps_at(&self, epsilon: f64) -> f64 {
        let n = self.max_pair_distance.len();
        if n == 0 {
            return 0.0;
        }
        self.max_pair_distance.iter().filter(|&&d| d > epsilon).count() as f64 / n as f64
    }

    /// Nodes whose observed pairs all stay within ε.
    pub fn in_s_eps(&self, epsilon: f64) -> Vec<bool> {
        self.max_pair_distance.iter().map(|&d| d <= epsilon).collect()
    }

    fn bound(ln_count: f64, mean: f64, epsilon: f64) -> f64 {
        if mean == 0.0 {
            return 0.0;
        }
        let ln = 2.0 * ln_count + mean.ln() - epsilon.ln();
        if ln >= f64::MAX.ln() {
            f64::INFINITY
        } else {
            ln.exp()
        }
    }
}

/// Estimates R_ε by drawing `pairs_per_node` augmentation pairs per node.
///
/// Pairs are drawn without replacement from the C(N−1,m)² ordered pairs when
/// that set is enumerable, so a budget covering it enumerates every pair.
pub fn estimate_r_eps(
    graph: &Graph,
    params: &ModelParams,
    cfg: &TheoryConfig,
    rng: &mut Rng,
) -> Result<REpsEstimate> {
    cfg.validate()?;
    check_m(graph, cfg.m)?;
    let w = single_layer_weights(params)?;
    let n = graph.num_nodes();
    let enumerable = enumerable_count(graph, cfg.m);
    let mut exhaustive = true;

    let mut max_pair_distance = Vec::with_capacity(n);
    let mut sum = 0.0;
    let mut count = 0usize;
    for node in 0..n {
        let pairs: Vec<(NeighborList, NeighborList)> = match enumerable {
            Some(t) => {
                let total = t * t;
                let ranks: Vec<usize> = if cfg.pairs_per_node >= total {
                    (0..total).collect()
                } else {
                    exhaustive = false;
                    index::sample(rng, total, cfg.pairs_per_node).into_vec()
                };
                ranks
                    .into_iter()
                    .map(|r| {
                        (
                            augmentation_by_rank(graph, node, cfg.m, r / t),
                            augmentation_by_rank(graph, node, cfg.m, r % t),
                        )
                    })
                    .collect()
            }
            None => {
                exhaustive = false;
                (0..cfg.pairs_per_node)
                    .map(|_| {
                        Ok((
                            sample_uniform_augmentation(graph, node, cfg.m, rng)?,
                            sample_uniform_augmentation(graph, node, cfg.m, rng)?,
                        ))
                    })
                    .collect::<Result<_>>()?
            }
        };

        let mut cache: HashMap<Vec<usize>, Array1<f64>> = HashMap::new();
        let mut rep = |list: &NeighborList| {
            cache
                .entry(list.members().to_vec())
                .or_insert_with(|| {
                    represent(pre_representation(graph, node, list.members()).view(), w)
                })
                .clone()
        };
        let mut node_max: f64 = 0.0;
        for (a, b) in &pairs {
            let d = distance(rep(a).view(), rep(b).view());
            node_max = node_max.max(d);
            sum += d;
            count += 1;
        }
        max_pair_distance.push(node_max);
    }

    let mean_pair_distance = if count == 0 { 0.0 } else { sum / count as f64 };
    let ln_count = ln_binomial(n - 1, cfg.m);
    let r_eps_hat =
        max_pair_distance.iter().filter(|&&d| d > cfg.epsilon).count() as f64 / n as f64;
    Ok(REpsEstimate {
        r_eps_hat,
        epsilon: cfg.epsilon,
        max_pair_distance,
        mean_pair_distance,
        r_eps_upper_bound: REpsEstimate::bound(ln_count, mean_pair_distance, cfg.epsilon),
        ln_augmentation_count: ln_count,
        exhaustive,
    })
}

/// Sampled augmentations per node with their pre-transformation rows.
#[derive(Debug, Clone)]
pub struct AugmentationSample {
    pub lists: Vec<Vec<NeighborList>>,
    /// Per node, one pre-transformation row per sampled augmentation.
    pub pre: Vec<Array2<f64>>,
}

impl AugmentationSample {
    pub fn draw(graph: &Graph, m: usize, per_node: usize, rng: &mut Rng) -> Result<Self> {
        check_m(graph, m)?;
        let b = graph.num_features();
        let mut lists = Vec::with_capacity(graph.num_nodes());
        let mut pre = Vec::with_capacity(graph.num_nodes());
        for node in 0..graph.num_nodes() {
            let augs = augmentations_for(graph, node, m, per_node, rng)?;
            let mut rows = Array2::zeros((augs.len(), b));
            for (r, a) in augs.iter().enumerate() {
                rows.row_mut(r)
                    .assign(&pre_representation(graph, node, a.members()));
            }
            lists.push(augs);
            pre.push(rows);
        }
        Ok(Self { lists, pre })
    }

    /// Approximate augmentation distance: minimum over the sampled pairs.
    pub fn distance_matrix(&self) -> Array2<f64> {
        let n = self.pre.len();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let mut best = f64::INFINITY;
                for a in self.pre[i].rows() {
                    for b in self.pre[j].rows() {
                        best = best.min(distance(a, b));
                    }
                }
                d[[i, j]] = best;
                d[[j, i]] = best;
            }
        }
        d
    }

    /// Smallest augmented degree among `nodes`' sampled augmentations.
    pub fn min_degree(&self, nodes: &[usize]) -> usize {
        nodes
            .iter()
            .flat_map(|&i| self.lists[i].iter().map(NeighborList::len))
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaAlpha {
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AugmentationParams {
    /// α per community at `gamma_used`.
    pub alpha_hat: Vec<f64>,
    pub gamma_used: f64,
    pub alpha_by_gamma: Vec<GammaAlpha>,
    pub d_min_hat: Vec<usize>,
    /// C⁰ₖ at `gamma_used`.
    pub core_sets: Vec<Vec<usize>>,
    pub d_t: Array2<f64>,
    pub sample: AugmentationSample,
}

fn communities(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Greedy core around the medoid: candidates in order of distance to the medoid
/// are added while the pairwise diameter stays within `radius`.
fn greedy_core(members: &[usize], d_t: &Array2<f64>, radius: f64) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let medoid = *members
        .iter()
        .min_by(|&&a, &&b| {
            let sa: f64 = members.iter().map(|&j| d_t[[a, j]]).sum();
            let sb: f64 = members.iter().map(|&j| d_t[[b, j]]).sum();
            sa.total_cmp(&sb).then(a.cmp(&b))
        })
        .expect("non-empty");
    let mut candidates: Vec<usize> = members.iter().copied().filter(|&v| v != medoid).collect();
    candidates.sort_by(|&a, &b| d_t[[medoid, a]].total_cmp(&d_t[[medoid, b]]).then(a.cmp(&b)));
    let mut core = vec![medoid];
    for c in candidates {
        if core.iter().all(|&v| d_t[[v, c]] <= radius) {
            core.push(c);
        } else {
            break;
        }
    }
    core.sort_unstable();
    core
}

/// Measures (α, γ, d̂) on labelled data by growing greedy cores for every γ in the grid.
pub fn measure_augmentation_params(
    graph: &Graph,
    cfg: &TheoryConfig,
    rng: &mut Rng,
) -> Result<AugmentationParams> {
    cfg.validate()?;
    let labels = graph.require_labels("measuring augmentation parameters")?;
    let sample = AugmentationSample::draw(graph, cfg.m, cfg.pairs_per_node, rng)?;
    let d_t = sample.distance_matrix();
    let comms = communities(labels);
    let d_min_hat: Vec<usize> = comms.iter().map(|c| sample.min_degree(c)).collect();
    let b = graph.num_features() as f64;

    let cores_for = |gamma: f64| -> Vec<Vec<usize>> {
        comms
            .iter()
            .zip(&d_min_hat)
            .map(|(members, &dmin)| {
                let radius = gamma * (b / dmin.max(1) as f64).sqrt();
                greedy_core(members, &d_t, radius)
            })
            .collect()
    };
    let alpha_of = |cores: &[Vec<usize>]| -> Vec<f64> {
        cores
            .iter()
            .zip(&comms)
            .map(|(c, members)| {
                if members.is_empty() {
                    0.0
                } else {
                    c.len() as f64 / members.len() as f64
                }
            })
            .collect()
    };

    let mut alpha_by_gamma = Vec::with_capacity(cfg.gamma_grid.len());
    let mut best: Option<(f64, f64, Vec<Vec<usize>>)> = None;
    let mut grid = cfg.gamma_grid.clone();
    grid.sort_by(f64::total_cmp);
    for &gamma in &grid {
        let cores = cores_for(gamma);
        let alpha = alpha_of(&cores);
        let mean = alpha.iter().sum::<f64>() / alpha.len().max(1) as f64;
        if best.as_ref().is_none_or(|(m, _, _)| mean > *m) {
            best = Some((mean, gamma, cores));
        }
        alpha_by_gamma.push(GammaAlpha { gamma, alpha });
    }
    let (_, gamma_used, core_sets) = best.expect("gamma grid validated non-empty");
    Ok(AugmentationParams {
        alpha_hat: alpha_of(&core_sets),
        gamma_used,
        alpha_by_gamma,
        d_min_hat,
        core_sets,
        d_t,
        sample,
    })
}

/// Normalized representations of every sampled augmentation, per node.
pub fn augmented_representations(
    sample: &AugmentationSample,
    params: &ModelParams,
) -> Result<Vec<Array2<f64>>> {
    let w = single_layer_weights(params)?;
    Ok(sample
        .pre
        .iter()
        .map(|pre| normalize_rows(pre.dot(w).mapv(|v| v.max(0.0))))
        .collect())
}

/// Empirical stand-in for the Lipschitz constant of the normalized encoder:
/// the largest ratio ‖f(a) − f(b)‖ / ‖a − b‖ over augmentation pairs within each
/// node and against one random partner node.
pub fn lipschitz_proxy(
    sample: &AugmentationSample,
    reps: &[Array2<f64>],
    rng: &mut Rng,
) -> f64 {
    let n = sample.pre.len();
    let mut best: f64 = 0.0;
    let mut ratio = |pa: ArrayView1<f64>, pb: ArrayView1<f64>, fa: ArrayView1<f64>, fb: ArrayView1<f64>| {
        let den = distance(pa, pb);
        if den > 1e-12 {
            best = best.max(distance(fa, fb) / den);
        }
    };
    for i in 0..n {
        let s = sample.pre[i].nrows();
        for a in 0..s {
            for b in (a + 1)..s {
                ratio(
                    sample.pre[i].row(a),
                    sample.pre[i].row(b),
                    reps[i].row(a),
                    reps[i].row(b),
                );
            }
        }
        if n > 1 {
            let j = other(i, rng.random_range(0..n - 1));
            for a in 0..s.min(sample.pre[j].nrows()) {
                ratio(
                    sample.pre[i].row(a),
                    sample.pre[j].row(a),
                    reps[i].row(a),
                    reps[j].row(a),
                );
            }
        }
    }
    best
}

/// Measured quantities that enter ρ_max and the (1−α)+R_ε bound.
#[derive(Debug, Clone)]
pub struct BoundInputs<'a> {
    pub alpha: f64,
    pub gamma: f64,
    pub d_min: &'a [usize],
    pub r_eps: f64,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub feature_dim: usize,
    /// C⁰ₖ per community.
    pub core_sets: &'a [Vec<usize>],
    /// Membership in S_ε per node.
    pub in_s_eps: &'a [bool],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterCheck {
    pub l: usize,
    pub k: usize,
    pub mu_dot: f64,
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorResult {
    pub mu: Array2<f64>,
    pub mu_dots: Array2<f64>,
    pub assignments: Vec<usize>,
    pub err_ff: f64,
    pub rho_max: f64,
    pub delta_mu: f64,
    pub scatter: Vec<ScatterCheck>,
    pub err_bound: f64,
    pub err_bound_holds: bool,
    /// Whether every node in (∪ C⁰ₖ) ∩ S_ε is assigned to its own community.
    pub err_bound_premise_holds: bool,
}

/// Nearest-centre assignment; ties go to the smallest community index.
pub fn nearest_center(row: ArrayView1<f64>, mu: &Array2<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in mu.rows().into_iter().enumerate() {
        let d = distance(row, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Community centres from augmented representations, the nearest-centre
/// indicator's error, and the scatter condition for every ordered pair ℓ ≠ k.
pub fn community_indicator(
    embeddings_normalized: ArrayView2<f64>,
    labels: &[usize],
    augmented: &[Array2<f64>],
    bounds: &BoundInputs<'_>,
) -> Result<IndicatorResult> {
    let comms = communities(labels);
    let k = comms.len();
    if k < 2 {
        return Err(GradeError::Usage(
            "the community indicator needs at least two communities".into(),
        ));
    }
    let n = labels.len();
    let dim = embeddings_normalized.ncols();

    let mut mu = Array2::zeros((k, dim));
    for (c, members) in comms.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut acc = Array1::<f64>::zeros(dim);
        for &i in members {
            if augmented[i].nrows() > 0 {
                acc += &augmented[i].mean_axis(Axis(0)).expect("non-empty");
            }
        }
        mu.row_mut(c).assign(&(acc / members.len() as f64));
    }
    let mu_dots = mu.dot(&mu.t());

    let assignments: Vec<usize> = embeddings_normalized
        .rows()
        .into_iter()
        .map(|r| nearest_center(r, &mu))
        .collect();
    let wrong = assignments
        .iter()
        .zip(labels)
        .filter(|(a, l)| a != l)
        .count();
    let err_ff = wrong as f64 / n as f64;

    let min_sq_norm = (0..k)
        .map(|c| mu_dots[[c, c]])
        .fold(f64::INFINITY, f64::min);
    let delta_mu = (1.0 - min_sq_norm).clamp(0.0, 1.0);

    let alpha = bounds.alpha;
    let sqrt_b = (bounds.feature_dim as f64).sqrt();
    let worst = comms
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, members)| {
            let p = members.len() as f64 / n as f64;
            let dmin = bounds.d_min.get(c).copied().unwrap_or(0).max(1) as f64;
            2.0 * bounds.r_eps / p + bounds.lipschitz * alpha * bounds.gamma * sqrt_b / dmin.sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let rho_max = 2.0 * (1.0 - alpha) + worst + 2.0 * alpha * bounds.epsilon;
    let threshold = 1.0 - rho_max - (2.0 * rho_max).sqrt() - delta_mu / 2.0;

    let mut scatter = Vec::new();
    for l in 0..k {
        for c in 0..k {
            if l != c {
                scatter.push(ScatterCheck {
                    l,
                    k: c,
                    mu_dot: mu_dots[[l, c]],
                    threshold,
                    holds: mu_dots[[l, c]] < threshold,
                });
            }
        }
    }

    let err_bound = (1.0 - alpha) + bounds.r_eps;
    let err_bound_premise_holds = bounds.core_sets.iter().enumerate().all(|(c, core)| {
        core.iter()
            .filter(|&&i| bounds.in_s_eps.get(i).copied().unwrap_or(false))
            .all(|&i| assignments[i] == c)
    });

    Ok(IndicatorResult {
        mu,
        mu_dots,
        assignments,
        err_ff,
        rho_max,
        delta_mu,
        scatter,
        err_bound,
        err_bound_holds: err_ff <= err_bound,
        err_bound_premise_holds,
    })
}

/// Mean squared distance to the own-community centre, and the size-weighted
/// spread of community centres around the global mean.
pub fn representation_variances(reps: ArrayView2<f64>, labels: &[usize]) -> (f64, f64) {
    let comms = communities(labels);
    let n = reps.nrows() as f64;
    let global = reps.mean_axis(Axis(0)).expect("non-empty");
    let mut intra = 0.0;
    let mut inter = 0.0;
    for members in comms.iter().filter(|m| !m.is_empty()) {
        let rows = reps.select(Axis(0), members);
        let center = rows.mean_axis(Axis(0)).expect("non-empty");
        for r in rows.rows() {
            intra += distance(r, center.view()).powi(2);
        }
        inter += members.len() as f64 * distance(center.view(), global.view()).powi(2);
    }
    (intra / n, inter / n)
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonPoint {
    pub epsilon: f64,
    pub r_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub epsilon: f64,
    pub m: usize,
    #[serde(rename = "R_eps_hat")]
    pub r_eps_hat: f64,
    pub r_eps_curve: Vec<EpsilonPoint>,
    pub mean_pair_distance: f64,
    #[serde(serialize_with = "ser_extended_f64")]
    pub r_eps_upper_bound: f64,
    pub alpha_hat: Vec<f64>,
    pub alpha_min: f64,
    pub alpha_by_gamma: Vec<GammaAlpha>,
    pub gamma_used: f64,
    pub d_min_hat: Vec<usize>,
    pub core_sizes: Vec<usize>,
    pub mu: Vec<Vec<f64>>,
    pub mu_dots: Vec<Vec<f64>>,
    pub delta_mu: f64,
    pub lipschitz_proxy: f64,
    pub rho_max: f64,
    #[serde(rename = "err_Ff")]
    pub err_ff: f64,
    pub err_bound: f64,
    pub err_bound_holds: bool,
    pub err_bound_premise_holds: bool,
    #[serde(rename = "scatter_condition_holds")]
    pub scatter_condition: Vec<ScatterCheck>,
    pub intra_var: f64,
    pub inter_var: f64,
}

/// Runs every measurement for a single-layer checkpoint on a labelled graph.
pub fn run_theory(
    graph: &Graph,
    params: &ModelParams,
    cfg: &TheoryConfig,
    rng: &mut Rng,
) -> Result<TheoryReport> {
    cfg.validate()?;
    single_layer_weights(params)?;
    let labels = graph.require_labels("the theory probe")?.to_vec();
    if graph.num_classes().unwrap_or(0) < 2 {
        return Err(GradeError::Usage(
            "the theory probe needs at least two communities".into(),
        ));
    }

    let aug = measure_augmentation_params(graph, cfg, rng)?;
    let reps = augmented_representations(&aug.sample, params)?;
    let r_eps = estimate_r_eps(graph, params, cfg, rng)?;
    let lipschitz = lipschitz_proxy(&aug.sample, &reps, rng);
    let embeddings = normalized_embeddings(graph, params)?;

    let alpha_min = aug.alpha_hat.iter().copied().fold(1.0, f64::min);
    let in_s_eps = r_eps.in_s_eps(cfg.epsilon);
    let bounds = BoundInputs {
        alpha: alpha_min,
        gamma: aug.gamma_used,
        d_min: &aug.d_min_hat,
        r_eps: r_eps.r_eps_hat,
        epsilon: cfg.epsilon,
        lipschitz,
        feature_dim: graph.num_features(),
        core_sets: &aug.core_sets,
        in_s_eps: &in_s_eps,
    };
    let ind = community_indicator(embeddings.view(), &labels, &reps, &bounds)?;
    let (intra_var, inter_var) = representation_variances(embeddings.view(), &labels);

    Ok(TheoryReport {
        epsilon: cfg.epsilon,
        m: cfg.m,
        r_eps_hat: r_eps.r_eps_hat,
        r_eps_curve: cfg
            .epsilon_grid
            .iter()
            .map(|&e| EpsilonPoint {
                epsilon: e,
                r_eps: r_eps.r_eps_at(e),
            })
            .collect(),
        mean_pair_distance: r_eps.mean_pair_distance,
        r_eps_upper_bound: r_eps.r_eps_upper_bound,
        alpha_hat: aug.alpha_hat.clone(),
        alpha_min,
        alpha_by_gamma: aug.alpha_by_gamma.clone(),
        gamma_used: aug.gamma_used,
        d_min_hat: aug.d_min_hat.clone(),
        core_sizes: aug.core_sets.iter().map(Vec::len).collect(),
        mu: matrix_rows(&ind.mu),
        mu_dots: matrix_rows(&ind.mu_dots),
        delta_mu: ind.delta_mu,
        lipschitz_proxy: lipschitz,
        rho_max: ind.rho_max,
        err_ff: ind.err_ff,
        err_bound: ind.err_bound,
        err_bound_holds: ind.err_bound_holds,
        err_bound_premise_holds: ind.err_bound_premise_holds,
        scatter_condition: ind.scatter,
        intra_var,
        inter_var,
    })
}
