//! Degree-split topology augmentation and feature masking.
//!
//! Tail nodes (degree ≤ ζ) get their ego network interpolated with that of a
//! similar node; head nodes have their neighbourhood purified by
//! similarity-weighted subsampling. A random edge-drop mode serves as warmup and
//! as the baseline arm.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand::RngCore;

use crate::error::{GradeError, Result};
use crate::graph::{degree_distribution, Adjacency, DegreeDistribution, Graph, NeighborList};
use crate::rng::{self, Rng};

const ZERO_NORM: f64 = 1e-12;

/// Pairwise cosine similarities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    /// Wraps an explicit matrix; it must be square and symmetric with a zero
    /// diagonal and entries in [−1, 1].
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(GradeError::Validation("similarity matrix must be square".into()));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(GradeError::Validation(format!(
                    "similarity diagonal entry {i} is not zero"
                )));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !(-1.0..=1.0).contains(&v) || v != values[[j, i]] {
                    return Err(GradeError::Validation(format!(
                        "similarity entry ({i}, {j}) = {v} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Cosine similarity of every pair of rows. Rows with norm below 1e-12 have
/// similarity 0 to everything.
pub fn build_similarity(embeddings: ArrayView2<f64>) -> SimilarityMatrix {
    let n = embeddings.nrows();
    let norms: Vec<f64> = embeddings
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        if norms[i] < ZERO_NORM {
            continue;
        }
        for j in (i + 1)..n {
            if norms[j] < ZERO_NORM {
                continue;
            }
            let c = (embeddings.row(i).dot(&embeddings.row(j)) / (norms[i] * norms[j]))
                .clamp(-1.0, 1.0);
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    SimilarityMatrix { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugMode {
    Grade,
    RandomDrop,
}

impl fmt::Display for AugMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugMode::Grade => "grade",
            AugMode::RandomDrop => "random_drop",
        })
    }
}

impl FromStr for AugMode {
    type Err = GradeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grade" => Ok(AugMode::Grade),
            "random_drop" => Ok(AugMode::RandomDrop),
            other => Err(GradeError::Config(format!(
                "unknown aug_mode {other:?} (expected grade or random_drop)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Tail iff degree ≤ zeta.
    pub zeta: usize,
    pub p_edr: f64,
    pub p_fdr: f64,
    pub min_phi: f64,
    pub mode: AugMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            zeta: 5,
            p_edr: 0.2,
            p_fdr: 0.2,
            min_phi: 0.5,
            mode: AugMode::Grade,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_edr) {
            return Err(GradeError::Config(format!(
                "p_edr = {} outside [0, 1)",
                self.p_edr
            )));
        }
        if !(0.0..1.0).contains(&self.p_fdr) {
            return Err(GradeError::Config(format!(
                "p_fdr = {} outside [0, 1)",
                self.p_fdr
            )));
        }
        if !(0.0..=1.0).contains(&self.min_phi) {
            return Err(GradeError::Config(format!(
                "min_phi = {} outside [0, 1]",
                self.min_phi
            )));
        }
        Ok(())
    }
}

/// One stochastic view: per-node sampled neighbour lists plus masked features.
///
/// Neighbour lists are directed: row `i` only feeds node `i`'s aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    topology: Adjacency,
    masked_features: Array2<f64>,
    mask: Vec<bool>,
    seed: u64,
}

impl AugmentedView {
    /// The un-augmented graph as a view (full topology, all features kept).
    pub fn identity(graph: &Graph) -> Self {
        Self {
            topology: graph.adjacency().clone(),
            masked_features: graph.features().clone(),
            mask: vec![true; graph.num_features()],
            seed: 0,
        }
    }

    pub fn topology(&self) -> &Adjacency {
        &self.topology
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.topology.neighbors(node)
    }

    pub fn masked_features(&self) -> &Array2<f64> {
        &self.masked_features
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }
}

/// Finite distribution over node indices, support sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDistribution {
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
}

impl NeighborDistribution {
    pub fn prob(&self, node: usize) -> f64 {
        self.support
            .binary_search(&node)
            .map_or(0.0, |i| self.probs[i])
    }
}

/// Mixture `phi · U(tail) + (1 − phi) · U(sample)` of two uniform neighbour
/// distributions. Returns `None` for an empty tail list (augmentation skipped);
/// an empty sample list leaves only the tail component.
pub fn interpolate_neighbor_distribution(
    tail: &NeighborList,
    sample: &NeighborList,
    phi: f64,
) -> Option<NeighborDistribution> {
    if tail.is_empty() {
        return None;
    }
    let phi = if sample.is_empty() { 1.0 } else { phi };
    let wt = phi / tail.len() as f64;
    let ws = if sample.is_empty() {
        0.0
    } else {
        (1.0 - phi) / sample.len() as f64
    };

    // Merge the two sorted lists.
    let (a, b) = (tail.members(), sample.members());
    let (mut i, mut j) = (0, 0);
    let mut support = Vec::with_capacity(a.len() + b.len());
    let mut probs = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let (node, p) = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                (x, wt + ws)
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                (x, wt)
            }
            (Some(&x), None) => {
                i += 1;
                (x, wt)
            }
            (_, Some(&y)) => {
                j += 1;
                (y, ws)
            }
            (None, None) => unreachable!(),
        };
        if p > 0.0 {
            support.push(node);
            probs.push(p);
        }
    }
    Some(NeighborDistribution { support, probs })
}

/// Draws one index with probability proportional to `weights`; uniform if all
/// weights are zero.
fn weighted_draw(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Successive weighted draws with renormalization. Once the positive mass is
/// exhausted the remaining items are drawn uniformly.
pub fn sample_without_replacement(weights: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let count = count.min(weights.len());
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut w: Vec<f64> = weights.iter().map(|&x| x.max(0.0)).collect();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let k = weighted_draw(&w, rng);
        picked.push(remaining.swap_remove(k));
        w.swap_remove(k);
    }
    picked
}

/// Number of neighbours a head node keeps: `max(1, round(d · (1 − p_edr)))`.
pub fn head_keep_count(degree: usize, p_edr: f64) -> usize {
    ((degree as f64 * (1.0 - p_edr)).round() as usize).max(1)
}

/// Per-graph state shared by all node-level augmentations of one view.
pub struct Augmenter<'a> {
    graph: &'a Graph,
    sim: Option<&'a SimilarityMatrix>,
    config: AugmentConfig,
    degrees: Option<DegreeDistribution>,
}

impl<'a> Augmenter<'a> {
    pub fn new(
        graph: &'a Graph,
        sim: Option<&'a SimilarityMatrix>,
        config: AugmentConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut degrees = None;
        if config.mode == AugMode::Grade {
            let sim = sim.ok_or_else(|| {
                GradeError::Usage("grade augmentation requires a similarity matrix".into())
            })?;
            if sim.len() != graph.num_nodes() {
                return Err(GradeError::Usage(format!(
                    "similarity matrix has {} rows for a graph of {} nodes",
                    sim.len(),
                    graph.num_nodes()
                )));
            }
            if graph
                .degrees()
                .iter()
                .any(|&d| d >= 1 && d <= config.zeta)
            {
                degrees = Some(degree_distribution(graph, config.zeta)?);
            }
        }
        Ok(Self {
            graph,
            sim,
            config,
            degrees,
        })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    fn sim(&self) -> &SimilarityMatrix {
        self.sim.expect("grade mode checked in Augmenter::new")
    }

    /// Tail interpolation for a node with 1 ≤ degree ≤ ζ.
    pub fn augment_tail(&self, node: usize, rng: &mut Rng) -> NeighborList {
        let graph = self.graph;
        let sim = self.sim();
        let n = graph.num_nodes();
        debug_assert!(graph.degree(node) >= 1 && graph.degree(node) <= self.config.zeta);
        if n < 2 {
            return graph.ego(node);
        }

        let weights: Vec<f64> = (0..n)
            .map(|u| if u == node { 0.0 } else { sim.get(node, u).max(0.0) })
            .collect();
        let partner = if weights.iter().sum::<f64>() > 0.0 {
            weighted_draw(&weights, rng)
        } else {
            let k = rng.random_range(0..n - 1);
            if k >= node {
                k + 1
            } else {
                k
            }
        };
        let phi = self.config.min_phi.max(sim.get(node, partner));

        let target = self
            .degrees
            .as_ref()
            .expect("degree distribution built when tail nodes exist")
            .sample(rng);

        let tail = graph.ego(node);
        let sample = NeighborList::new(node, graph.neighbors(partner).to_vec());
        let dist = interpolate_neighbor_distribution(&tail, &sample, phi)
            .expect("tail node has at least one neighbour");
        let picked = sample_without_replacement(&dist.probs, target, rng);
        NeighborList::new(node, picked.into_iter().map(|k| dist.support[k]).collect())
    }

    /// Head purification for a node with degree > ζ.
    pub fn augment_head(&self, node: usize, rng: &mut Rng) -> NeighborList {
        let graph = self.graph;
        let sim = self.sim();
        let nbrs = graph.neighbors(node);
        let keep = head_keep_count(nbrs.len(), self.config.p_edr);
        let weights: Vec<f64> = nbrs.iter().map(|&u| sim.get(node, u).max(0.0)).collect();
        let picked = sample_without_replacement(&weights, keep, rng);
        NeighborList::new(node, picked.into_iter().map(|k| nbrs[k]).collect())
    }

    fn random_drop(&self, node: usize, rng: &mut Rng) -> Vec<usize> {
        let keep = 1.0 - self.config.p_edr;
        self.graph
            .neighbors(node)
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < keep)
            .collect()
    }

    /// Builds a full view from `seed`. The feature mask is drawn first, then
    /// node neighbourhoods in index order.
    pub fn make_view(&self, seed: u64) -> AugmentedView {
        let mut rng = rng::from_seed(seed);
        let (masked_features, mask) = mask_features(self.graph, self.config.p_fdr, &mut rng);
        let n = self.graph.num_nodes();
        let lists = (0..n)
            .map(|i| {
                let d = self.graph.degree(i);
                match self.config.mode {
                    AugMode::RandomDrop => self.random_drop(i, &mut rng),
                    AugMode::Grade if d == 0 => Vec::new(),
                    AugMode::Grade if d <= self.config.zeta => {
                        self.augment_tail(i, &mut rng).into_members()
                    }
                    AugMode::Grade => self.augment_head(i, &mut rng).into_members(),
                }
            })
            .collect();
        AugmentedView {
            topology: Adjacency::from_lists(lists),
            masked_features,
            mask,
            seed,
        }
    }
}

/// Builds one view; `sim` is required in grade mode.
pub fn make_view(
    graph: &Graph,
    sim: Option<&SimilarityMatrix>,
    config: AugmentConfig,
    seed: u64,
) -> Result<AugmentedView> {
    Ok(Augmenter::new(graph, sim, config)?.make_view(seed))
}

/// Draws a view seed from a running generator.
pub fn next_view_seed(rng: &mut Rng) -> u64 {
    rng.next_u64()
}

/// Zeroes feature columns with one Bernoulli(1 − p_fdr) keep-mask shared by all nodes.
pub fn mask_features(graph: &Graph, p_fdr: f64, rng: &mut Rng) -> (Array2<f64>, Vec<bool>) {
    let mask: Vec<bool> = (0..graph.num_features())
        .map(|_| rng.random::<f64>() >= p_fdr)
        .collect();
    let mut x = graph.features().clone();
    for (j, &keep) in mask.iter().enumerate() {
        if !keep {
            x.column_mut(j).fill(0.0);
        }
    }
    (x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(&edges, Array2::ones((n, 3)), None).unwrap().0
    }

    #[test]
    fn cosine_examples() {
        let s = build_similarity(array![[1.0, 0.0], [1.0, 0.0]].view());
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(0, 0), 0.0);
        let s = build_similarity(array![[1.0, 0.0], [0.0, 1.0]].view());
        assert_eq!(s.get(0, 1), 0.0);
        let s = build_similarity(array![[1.0, 0.0], [-1.0, 0.0]].view());
        assert_eq!(s.get(0, 1), -1.0);
        let s = build_similarity(array![[0.0, 0.0], [1.0, 2.0]].view());
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn tail_mixture_direct_evaluation() {
        let tail = NeighborList::new(0, vec![1, 2]);
        let sample = NeighborList::new(0, vec![2, 3]);
        let d = interpolate_neighbor_distribution(&tail, &sample, 0.6).unwrap();
        assert_eq!(d.support, vec![1, 2, 3]);
        assert!((d.prob(1) - 0.3).abs() < 1e-15);
        assert!((d.prob(2) - 0.5).abs() < 1e-15);
        assert!((d.prob(3) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn phi_one_is_uniform_over_tail() {
        let tail = NeighborList::new(0, vec![4, 7, 9]);
        let sample = NeighborList::new(0, vec![1, 2]);
        let d = interpolate_neighbor_distribution(&tail, &sample, 1.0).unwrap();
        assert_eq!(d.support, vec![4, 7, 9]);
        assert!(d.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn empty_tail_skips() {
        let tail = NeighborList::new(0, vec![]);
        let sample = NeighborList::new(0, vec![1]);
        assert!(interpolate_neighbor_distribution(&tail, &sample, 0.5).is_none());
    }

    #[test]
    fn head_keep_count_arithmetic() {
        assert_eq!(head_keep_count(10, 0.3), 7);
        assert_eq!(head_keep_count(10, 0.0), 10);
        assert_eq!(head_keep_count(3, 0.9), 1);
        // 5 * 0.5 = 2.5 rounds away from zero
        assert_eq!(head_keep_count(5, 0.5), 3);
    }

    #[test]
    fn head_without_dropping_keeps_everything() {
        let edges: Vec<_> = (1..8).map(|i| (0, i)).collect();
        let g = Graph::from_edges(&edges, Array2::ones((8, 2)), None).unwrap().0;
        let sim = build_similarity(g.features().view());
        let cfg = AugmentConfig {
            zeta: 5,
            p_edr: 0.0,
            ..Default::default()
        };
        let aug = Augmenter::new(&g, Some(&sim), cfg).unwrap();
        let mut rng = rng::from_seed(3);
        assert_eq!(aug.augment_head(0, &mut rng).members(), g.neighbors(0));
    }

    #[test]
    fn zero_similarity_row_falls_back_and_floors_phi() {
        // Star with centre 0 (head) plus a pendant path; similarity all zero.
        let mut edges: Vec<_> = (1..8).map(|i| (0, i)).collect();
        edges.push((8, 9));
        let g = Graph::from_edges(&edges, Array2::zeros((10, 2)), None).unwrap().0;
        let sim = build_similarity(g.features().view());
        let cfg = AugmentConfig {
            zeta: 2,
            ..Default::default()
        };
        let aug = Augmenter::new(&g, Some(&sim), cfg).unwrap();
        let mut rng = rng::from_seed(11);
        for _ in 0..50 {
            let out = aug.augment_tail(8, &mut rng);
            assert!(!out.contains(8));
            // target degree is always 7 (only head degree); support is capped
            assert!(!out.is_empty() && out.len() <= 8);
        }
    }

    #[test]
    fn identical_partner_keeps_original_support() {
        // 0 and 1 share neighbourhood {2, 3}; every other pair dissimilar.
        let edges = [(0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (2, 5), (2, 6), (3, 4), (3, 5), (3, 6)];
        let feats = array![
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0]
        ];
        let g = Graph::from_edges(&edges, feats, None).unwrap().0;
        let sim = build_similarity(g.features().view());
        let cfg = AugmentConfig {
            zeta: 3,
            ..Default::default()
        };
        let aug = Augmenter::new(&g, Some(&sim), cfg).unwrap();
        let mut rng = rng::from_seed(5);
        for _ in 0..200 {
            let out = aug.augment_tail(0, &mut rng);
            assert!(out.members().iter().all(|u| [2, 3].contains(u)));
        }
    }

    #[test]
    fn mask_identity_and_zero_columns() {
        let g = path_graph(4);
        let mut rng = rng::from_seed(1);
        let (x, m) = mask_features(&g, 0.0, &mut rng);
        assert!(m.iter().all(|&b| b));
        assert_eq!(&x, g.features());
        let (x, m) = mask_features(&g, 0.6, &mut rng);
        for (j, keep) in m.iter().enumerate() {
            if !keep {
                assert!(x.column(j).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn random_drop_identity() {
        let g = path_graph(6);
        let cfg = AugmentConfig {
            p_edr: 0.0,
            p_fdr: 0.0,
            mode: AugMode::RandomDrop,
            ..Default::default()
        };
        let v = make_view(&g, None, cfg, 9).unwrap();
        assert_eq!(v.topology(), g.adjacency());
        assert_eq!(v.masked_features(), g.features());
        assert_eq!(v.seed(), 9);
    }

    #[test]
    fn grade_without_similarity_is_usage_error() {
        let g = path_graph(3);
        let err = make_view(&g, None, AugmentConfig::default(), 0).unwrap_err();
        assert!(matches!(err, GradeError::Usage(_)));
    }

    #[test]
    fn grade_on_all_head_graph_only_purifies() {
        // complete graph K7: every degree 6 > zeta = 5
        let mut edges = Vec::new();
        for i in 0..7 {
            for j in (i + 1)..7 {
                edges.push((i, j));
            }
        }
        let g = Graph::from_edges(&edges, Array2::ones((7, 2)), None).unwrap().0;
        let sim = build_similarity(g.features().view());
        let v = make_view(&g, Some(&sim), AugmentConfig::default(), 4).unwrap();
        for i in 0..7 {
            assert_eq!(v.neighbors(i).len(), head_keep_count(6, 0.2));
            assert!(v.neighbors(i).iter().all(|&u| g.adjacency().contains(i, u)));
        }
    }

    #[test]
    fn same_seed_same_view() {
        let g = path_graph(12);
        let sim = build_similarity(
            Array2::from_shape_fn((12, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.5).view(),
        );
        let cfg = AugmentConfig {
            zeta: 1,
            ..Default::default()
        };
        let a = make_view(&g, Some(&sim), cfg, 42).unwrap();
        let b = make_view(&g, Some(&sim), cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_without_replacement_is_distinct() {
        let mut rng = rng::from_seed(0);
        let w = [0.5, 0.0, 0.2, 0.0, 0.3];
        for _ in 0..100 {
            let mut s = sample_without_replacement(&w, 4, &mut rng);
            assert_eq!(s.len(), 4);
            // positive-mass items are exhausted first
            let first3: Vec<_> = {
                let mut t = s[..3].to_vec();
                t.sort();
                t
            };
            assert_eq!(first3, vec![0, 2, 4]);
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
        }
    }
}
