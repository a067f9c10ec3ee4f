//! Fixtures and dense reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use grade::graph::Graph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with Gaussian-ish features in [−1, 1] and `k` random labels.
pub fn random_graph(n: usize, b: usize, p: f64, k: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let feats = Array2::from_shape_fn((n, b), |_| r.random_range(-1.0..1.0));
    let labels = (k > 0).then(|| (0..n).map(|i| i % k).collect());
    Graph::from_edges(&edges, feats, labels).unwrap().0
}

/// Dense row-stochastic D̂⁻¹(Â + I) for directed per-row neighbour lists.
pub fn dense_transition(lists: &[Vec<usize>]) -> Array2<f64> {
    let n = lists.len();
    let mut m = Array2::zeros((n, n));
    for (i, nbrs) in lists.iter().enumerate() {
        let w = 1.0 / (nbrs.len() + 1) as f64;
        m[[i, i]] += w;
        for &j in nbrs {
            m[[i, j]] += w;
        }
    }
    m
}

pub fn graph_lists(g: &Graph) -> Vec<Vec<usize>> {
    (0..g.num_nodes()).map(|i| g.neighbors(i).to_vec()).collect()
}

/// Relative error used by the finite-difference checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Observed frequency within `k` binomial standard errors of `p`.
pub fn within_se(count: usize, trials: usize, p: f64, k: f64) -> bool {
    let freq = count as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (freq - p).abs() <= k * se.max(1e-12)
}

use grade::augment::AugmentedView;
use grade::model::{backward, forward_view, ModelParams};
use grade::objective::total_objective;
use twofloat::TwoFloat;

/// −J for two fixed views.
pub fn neg_objective(views: &[AugmentedView; 2], params: &ModelParams, tau: f64) -> f64 {
    let a = forward_view(&views[0], params);
    let b = forward_view(&views[1], params);
    -total_objective(a.z.view(), b.z.view(), tau).value
}

/// Analytic gradient of −J, left in `params.grads`.
pub fn neg_objective_grad(views: &[AugmentedView; 2], params: &mut ModelParams, tau: f64) {
    params.zero_grad();
    let a = forward_view(&views[0], params);
    let b = forward_view(&views[1], params);
    let out = total_objective(a.z.view(), b.z.view(), tau);
    backward(a.tape, (-&out.grad_z).view(), params);
    backward(b.tape, (-&out.grad_z_other).view(), params);
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel: f64,
    /// (tensor, index, analytic, numeric) of entries over the tolerance.
    pub failures: Vec<(usize, usize, f64, f64)>,
}

type Dd = Vec<Vec<TwoFloat>>;

fn dd_matrix(a: &Array2<f64>) -> Dd {
    a.rows().into_iter().map(|r| r.iter().map(|&x| TwoFloat::from(x)).collect()).collect()
}

fn dd_matmul(a: &Dd, b: &Dd) -> Dd {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).fold(TwoFloat::from(0.0), |acc, k| acc + row[k] * b[k][c]))
                .collect()
        })
        .collect()
}

fn dd_relu(a: Dd) -> Dd {
    a.into_iter()
        .map(|r| r.into_iter().map(|x| if x > 0.0 { x } else { TwoFloat::from(0.0) }).collect())
        .collect()
}

fn dd_dot(a: &[TwoFloat], b: &[TwoFloat]) -> TwoFloat {
    a.iter().zip(b).fold(TwoFloat::from(0.0), |acc, (x, y)| acc + *x * *y)
}

/// Normalized projections of one view, evaluated densely in double-double arithmetic.
fn dd_projections(view: &AugmentedView, params: &ModelParams) -> Dd {
    let n = view.masked_features().nrows();
    let mut l: Dd = vec![vec![TwoFloat::from(0.0); n]; n];
    for (i, row) in l.iter_mut().enumerate() {
        let nbrs = view.neighbors(i);
        let w = TwoFloat::from(1.0) / TwoFloat::from((nbrs.len() + 1) as f64);
        row[i] += w;
        for &j in nbrs {
            row[j] += w;
        }
    }
    let v = &params.values;
    let mut h = dd_matrix(view.masked_features());
    for w in &v.encoder {
        h = dd_relu(dd_matmul(&dd_matmul(&l, &h), &dd_matrix(w)));
    }
    let add_bias = |m: Dd, b: &ndarray::Array1<f64>| -> Dd {
        m.into_iter()
            .map(|r| r.into_iter().zip(b.iter()).map(|(x, &c)| x + c).collect())
            .collect()
    };
    let u = dd_relu(add_bias(dd_matmul(&h, &dd_matrix(&v.proj_w1)), &v.proj_b1));
    let g = add_bias(dd_matmul(&u, &dd_matrix(&v.proj_w2)), &v.proj_b2);
    g.into_iter()
        .map(|r| {
            let norm = dd_dot(&r, &r).sqrt();
            if norm.hi() < 1e-12 {
                vec![TwoFloat::from(0.0); r.len()]
            } else {
                r.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect()
}

/// Concatenated cross-view and intra-view scores of anchor `i`; the positive pair is entry `i`.
fn dd_scores(z: &Dd, other: &Dd, i: usize, tau: f64) -> Vec<TwoFloat> {
    let n = z.len();
    (0..n)
        .map(|k| dd_dot(&z[i], &other[k]) / tau)
        .chain((0..n).filter(|&k| k != i).map(|k| dd_dot(&z[i], &z[k]) / tau))
        .collect()
}

/// ℓ(plus) − ℓ(minus) for one anchor, formed from score differences so that the
/// transcendental functions only see small, exactly known increments.
fn anchor_difference(plus: &[TwoFloat], minus: &[TwoFloat], i: usize) -> f64 {
    let shift = minus.iter().map(|s| s.hi()).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (p, m) in plus.iter().zip(minus) {
        let w = f64::from(*m - shift).exp();
        sum += w;
        weighted += w * f64::from(*p - *m).exp_m1();
    }
    f64::from(plus[i] - minus[i]) - (weighted / sum).ln_1p()
}

/// (−J(plus) − (−J(minus))) for two parameter settings, from a dense
/// double-double forward pass; free of f64 cancellation noise.
pub fn neg_objective_difference(
    views: &[AugmentedView; 2],
    plus: &ModelParams,
    minus: &ModelParams,
    tau: f64,
) -> f64 {
    let (ap, bp) = (dd_projections(&views[0], plus), dd_projections(&views[1], plus));
    let (am, bm) = (dd_projections(&views[0], minus), dd_projections(&views[1], minus));
    let n = ap.len();
    if n == 1 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            anchor_difference(&dd_scores(&ap, &bp, i, tau), &dd_scores(&am, &bm, i, tau), i)
                + anchor_difference(&dd_scores(&bp, &ap, i, tau), &dd_scores(&bm, &am, i, tau), i)
        })
        .sum();
    -total / (2 * n) as f64
}

/// Compares every analytic gradient entry of −J against central differences of
/// `neg_objective_difference`.
pub fn gradient_check(
    views: &[AugmentedView; 2],
    params: &mut ModelParams,
    tau: f64,
    step: f64,
    tol: f64,
) -> GradCheck {
    neg_objective_grad(views, params, tau);
    let grads: Vec<Vec<f64>> = params.grads.slices().iter().map(|s| s.to_vec()).collect();
    let mut report = GradCheck::default();
    for (t, g) in grads.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            if analytic.abs() <= 1e-8 {
                report.skipped += 1;
                continue;
            }
            let orig = params.values.slices()[t][i];
            let (up, down) = (orig + step, orig - step);
            let mut plus = params.clone();
            plus.values.slices_mut()[t][i] = up;
            let mut minus = params.clone();
            minus.values.slices_mut()[t][i] = down;
            let width = f64::from(TwoFloat::from(up) - TwoFloat::from(down));
            let numeric = neg_objective_difference(views, &plus, &minus, tau) / width;
            let e = rel_err(analytic, numeric);
            report.checked += 1;
            report.max_rel = report.max_rel.max(e);
            if e > tol {
                report.failures.push((t, i, analytic, numeric));
            }
        }
    }
    report
}

/// Replaces the zero-initialized projector biases with draws from U(−0.5, 0.5)
/// so no projection row sits at the non-differentiable zero-norm point.
pub fn randomize_biases(params: &mut ModelParams, seed: u64) {
    let mut r = rng(seed);
    for b in [&mut params.values.proj_b1, &mut params.values.proj_b2] {
        b.mapv_inplace(|_| r.random_range(-0.5..0.5));
    }
}

/// Two-community SBM with well-separated features (noise 0.05).
pub fn separated_sbm(nodes: usize, p_in: f64, p_out: f64) -> Graph {
    grade::sbm::generate(&grade::sbm::SbmConfig {
        nodes,
        p_in,
        p_out,
        feature_noise: 0.05,
        ..grade::sbm::SbmConfig::default()
    })
    .unwrap()
}
