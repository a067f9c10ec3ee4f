//! Sparse graph storage and self-looped mean propagation.
//!
//! Adjacency is kept in CSR form with sorted rows. Self-loops are never stored;
//! [`propagate`] adds them implicitly, so row `i` of the output is the mean of
//! node `i`'s own row and its neighbours' rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::augment::AugmentedView;
use crate::error::{GradeError, Result};
use crate::rng::Rng;

/// Row-compressed neighbour lists. Rows are sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    /// Builds CSR storage from per-node lists. Each list is sorted and deduplicated.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut row in lists {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(&row);
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.indices[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn num_entries(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, node: usize, other: usize) -> bool {
        self.neighbors(node).binary_search(&other).is_ok()
    }
}

/// A node's neighbourhood: sorted, duplicate-free, never containing the owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborList {
    owner: usize,
    members: Vec<usize>,
}

impl NeighborList {
    /// Sorts and deduplicates `members` and removes the owner if present.
    pub fn new(owner: usize, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        members.retain(|&m| m != owner);
        Self { owner, members }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    pub fn into_members(self) -> Vec<usize> {
        self.members
    }
}

/// Immutable undirected graph with dense node features and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Adjacency,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    degrees: Vec<usize>,
}

/// Input irregularities repaired while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeWarnings {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are symmetrized, duplicates merged
    /// and self-loops dropped; the number of nodes is the number of feature rows.
    pub fn from_edges(
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<(Self, EdgeWarnings)> {
        let n = features.nrows();
        if features.iter().any(|v| !v.is_finite()) {
            return Err(GradeError::Validation(
                "feature matrix contains non-finite values".into(),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(GradeError::Validation(format!(
                    "label count {} does not match node count {n}",
                    labels.len()
                )));
            }
        }

        let mut warnings = EdgeWarnings::default();
        let mut lists = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GradeError::Validation(format!(
                    "edge ({a}, {b}) references a node outside [0, {n})"
                )));
            }
            if a == b {
                warnings.self_loops_dropped += 1;
                continue;
            }
            if !seen.insert((a.min(b), a.max(b))) {
                warnings.duplicates_merged += 1;
                continue;
            }
            lists[a].push(b);
            lists[b].push(a);
        }
        let adjacency = Adjacency::from_lists(lists);
        let degrees = (0..n).map(|i| adjacency.degree(i)).collect();
        Ok((
            Self {
                adjacency,
                features,
                labels,
                degrees,
            },
            warnings,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.adjacency.neighbors(node)
    }

    pub fn ego(&self, node: usize) -> NeighborList {
        NeighborList {
            owner: node,
            members: self.neighbors(node).to_vec(),
        }
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a usage error naming `what` needed them.
    pub fn require_labels(&self, what: &str) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| GradeError::Usage(format!("{what} requires node labels")))
    }

    /// Number of classes, i.e. one more than the largest label.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_entries() / 2
    }

    /// Undirected edges as `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|i| {
                self.neighbors(i)
                    .iter()
                    .filter(move |&&j| j > i)
                    .map(move |&j| (i, j))
            })
            .collect()
    }
}

/// Result of reading a graph from disk.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub warnings: EdgeWarnings,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> GradeError {
    GradeError::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, lineno + 1, "expected `src<TAB>dst`"));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad node index {s:?}: {e}")))
        };
        edges.push((parse(a)?, parse(b)?));
    }
    Ok(edges)
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, lineno + 1, format!("bad real {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| GradeError::Validation(format!("feature matrix shape: {e}")))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad label {l:?}: {e}")))
        })
        .collect()
}

/// Reads the tab-separated edge file, comma-separated feature file and optional
/// label file into a validated [`Graph`].
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<LoadedGraph> {
    let edges = read_edges(edge_path)?;
    let features = read_features(feature_path)?;
    let labels = label_path.map(read_labels).transpose()?;
    let (graph, warnings) = Graph::from_edges(&edges, features, labels)?;
    if warnings.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            warnings.self_loops_dropped
        );
    }
    Ok(LoadedGraph { graph, warnings })
}

/// Writes the graph in the same formats [`load_graph`] reads, edges in canonical order.
pub fn save_graph(
    graph: &Graph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    let mut out = String::new();
    for (a, b) in graph.edges() {
        writeln!(out, "{a}\t{b}").unwrap();
    }
    fs::write(edge_path, out)?;

    let mut out = String::new();
    for row in graph.features().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(feature_path, out)?;

    if let (Some(path), Some(labels)) = (label_path, graph.labels()) {
        let mut out = String::new();
        for l in labels {
            writeln!(out, "{l}").unwrap();
        }
        fs::write(path, out)?;
    }
    Ok(())
}

/// One step of self-looped mean aggregation: `D̃⁻¹ (A + I) X` over the rows of `adj`.
pub fn propagate(adj: &Adjacency, features: ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(
        adj.num_nodes(),
        features.nrows(),
        "propagate: row count mismatch"
    );
    let mut out = features.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let nbrs = adj.neighbors(i);
        for &j in nbrs {
            row += &features.row(j);
        }
        row /= (nbrs.len() + 1) as f64;
    }
    out
}

/// Adjoint of [`propagate`]: maps a gradient on the output back to the input rows.
pub fn propagate_transpose(adj: &Adjacency, grad: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(grad.raw_dim());
    for i in 0..adj.num_nodes() {
        let nbrs = adj.neighbors(i);
        let scaled = &grad.row(i) / (nbrs.len() + 1) as f64;
        out.row_mut(i).scaled_add(1.0, &scaled);
        for &j in nbrs {
            out.row_mut(j).scaled_add(1.0, &scaled);
        }
    }
    out
}

/// [`propagate`] over an augmented view: sampled neighbour lists and masked features.
pub fn propagate_view(view: &AugmentedView, graph: &Graph) -> Array2<f64> {
    assert_eq!(view.num_nodes(), graph.num_nodes());
    propagate(view.topology(), view.masked_features().view())
}

/// Empirical distribution of node degrees strictly above a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    values: Vec<usize>,
    probs: Vec<f64>,
}

impl DegreeDistribution {
    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, degree: usize) -> f64 {
        self.values
            .binary_search(&degree)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (&v, &p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return v;
            }
        }
        *self.values.last().expect("non-empty support")
    }
}

pub fn degree_distribution(graph: &Graph, exclude_below: usize) -> Result<DegreeDistribution> {
    let mut counts = BTreeMap::new();
    for &d in graph.degrees().iter().filter(|&&d| d > exclude_below) {
        *counts.entry(d).or_insert(0usize) += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(GradeError::Config(format!(
            "no node has degree above the tail threshold {exclude_below}"
        )));
    }
    let (values, probs) = counts
        .into_iter()
        .map(|(d, c)| (d, c as f64 / total as f64))
        .unzip();
    Ok(DegreeDistribution { values, probs })
}
