//! Dense reference implementations coded independently of the library.

use grade::graph::Graph;
use grade::model::{ModelDims, ModelParams};
use grade::rng::from_seed;
use grade::theory::BoundInputs;
use ndarray::{Array1, Array2, ArrayView1};

/// Dense tail-node mixture over `n` nodes, coded independently of the library.
pub fn dense_mixture(tail: &[usize], sample: &[usize], phi: f64, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &u in tail {
        p[u] += phi / tail.len() as f64;
    }
    for &u in sample {
        p[u] += (1.0 - phi) / sample.len() as f64;
    }
    p
}

/// Exact inclusion probabilities of successive renormalized draws without replacement.
pub fn inclusion(weights: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    fn rec(w: &mut Vec<f64>, k: usize, mass: f64, out: &mut [f64]) {
        if k == 0 {
            return;
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return;
        }
        for i in 0..w.len() {
            if w[i] > 0.0 {
                let p = mass * w[i] / total;
                out[i] += p;
                let saved = w[i];
                w[i] = 0.0;
                rec(w, k - 1, p, out);
                w[i] = saved;
            }
        }
    }
    rec(&mut weights.to_vec(), k, 1.0, &mut out);
    out
}

/// Micro and Macro F1 from an explicit K×K confusion matrix.
pub fn confusion_f1(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64) {
    let mut c = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        c[t][p] += 1;
    }
    let total: usize = c.iter().flatten().sum();
    let diag: usize = (0..k).map(|i| c[i][i]).sum();
    let mut f1 = 0.0;
    for (cls, row) in c.iter().enumerate() {
        let tp = row[cls] as f64;
        let support: usize = row.iter().sum();
        let predicted: usize = (0..k).map(|r| c[r][cls]).sum();
        if support == 0 {
            continue;
        }
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = tp / support as f64;
        if precision + recall > 0.0 {
            f1 += 2.0 * precision * recall / (precision + recall);
        }
    }
    (diag as f64 / total as f64, f1 / k as f64)
}

pub fn single_layer(b: usize, d: usize, seed: u64) -> ModelParams {
    let dims = ModelDims {
        input: b,
        hidden: d,
        embed: d,
        proj: 3,
        layers: 1,
    };
    ModelParams::init(dims, &mut from_seed(seed)).unwrap()
}

/// (x_i + Σ_{a∈aug} x_a) / (|aug| + 1), coded directly.
pub fn pre_row(x: &Array2<f64>, node: usize, aug: &[usize]) -> Array1<f64> {
    let mut r = x.row(node).to_owned();
    for &a in aug {
        r += &x.row(a);
    }
    r / (aug.len() + 1) as f64
}

pub fn encode_row(pre: ArrayView1<f64>, w: &Array2<f64>) -> Array1<f64> {
    let h: Array1<f64> = (0..w.ncols())
        .map(|c| (0..w.nrows()).map(|j| pre[j] * w[[j, c]]).sum::<f64>().max(0.0))
        .collect();
    let n = h.dot(&h).sqrt();
    if n >= 1e-12 {
        h / n
    } else {
        Array1::zeros(w.ncols())
    }
}

pub fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn others(n: usize, node: usize) -> Vec<usize> {
    (0..n).filter(|&j| j != node).collect()
}

/// Per-node maximum distance over all C(N−1,1)² ordered augmentation pairs.
pub fn exhaustive_max_distances(g: &Graph, w: &Array2<f64>) -> Vec<f64> {
    let n = g.num_nodes();
    let x = g.features().to_owned();
    (0..n)
        .map(|i| {
            let reps: Vec<Array1<f64>> = others(n, i)
                .into_iter()
                .map(|a| encode_row(pre_row(&x, i, &[a]).view(), w))
                .collect();
            let mut best: f64 = 0.0;
            for a in &reps {
                for b in &reps {
                    best = best.max(dist(a.view(), b.view()));
                }
            }
            best
        })
        .collect()
}

pub fn exact_d_t(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    let x = g.features().to_owned();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut best = f64::INFINITY;
            for a in others(n, i) {
                for b in others(n, j) {
                    best = best.min(dist(pre_row(&x, i, &[a]).view(), pre_row(&x, j, &[b]).view()));
                }
            }
            d[[i, j]] = best;
        }
    }
    d
}

/// Nearest-centre recount with explicit loops and smallest-index ties.
pub fn brute_force_err(emb: &Array2<f64>, labels: &[usize], reps: &[Array2<f64>]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let d = emb.ncols();
    let mut mu = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        let s = reps[i].nrows() as f64;
        for r in reps[i].rows() {
            for c in 0..d {
                mu[l][c] += r[c] / s;
            }
        }
    }
    for (row, &size) in mu.iter_mut().zip(&sizes) {
        for v in row.iter_mut() {
            *v /= size as f64;
        }
    }
    let mut wrong = 0;
    for (i, &l) in labels.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in mu.iter().enumerate() {
            let dd: f64 = (0..d).map(|j| (emb[[i, j]] - center[j]).powi(2)).sum::<f64>().sqrt();
            if dd < best.0 {
                best = (dd, c);
            }
        }
        wrong += usize::from(best.1 != l);
    }
    wrong as f64 / labels.len() as f64
}

pub fn trivial_bounds<'a>(d_min: &'a [usize], cores: &'a [Vec<usize>], in_s: &'a [bool]) -> BoundInputs<'a> {
    BoundInputs {
        alpha: 1.0,
        gamma: 0.1,
        d_min,
        r_eps: 0.0,
        epsilon: 0.1,
        lipschitz: 1.0,
        feature_dim: 4,
        core_sets: cores,
        in_s_eps: in_s,
    }
}

/// First-draw distribution of head purification: clamped similarities to the
/// neighbours, normalized, or uniform when all are zero.
pub fn head_first_draw(sims: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = sims.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        vec![1.0 / sims.len() as f64; sims.len()]
    } else {
        w.iter().map(|v| v / total).collect()
    }
}
