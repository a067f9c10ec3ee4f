//! Symmetric two-view InfoNCE objective.
//!
//! For an anchor row `i` of view `P` and the other view `Q`:
//!
//! ```text
//! ℓ(P, Q, i) = s(Pᵢ, Qᵢ) − log( Σₖ e^{s(Pᵢ, Qₖ)} + Σ_{k≠i} e^{s(Pᵢ, Pₖ)} ),   s(a, b) = a·b / τ
//! J = (1 / 2N) Σᵢ [ ℓ(Z, Z′, i) + ℓ(Z′, Z, i) ]
//! ```
//!
//! Rows are expected to be unit-norm (or zero), so `a·b` is the cosine critic.
//! J is maximized; callers descend on −J.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{GradeError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub tau: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(GradeError::Config(format!(
                "temperature must be positive, got {}",
                self.tau
            )))
        }
    }
}

// Plain in-order dot product; keeps the score of (a, b) bit-identical to (b, a).
fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// ℓ for anchor row `i` of `z` against `z_other`. Always ≤ 0; exactly 0 for N = 1.
pub fn pairwise_loss(z: ArrayView2<f64>, z_other: ArrayView2<f64>, i: usize, tau: f64) -> f64 {
    assert_eq!(z.dim(), z_other.dim(), "views must have equal shape");
    let n = z.nrows();
    if n == 1 {
        return 0.0;
    }
    let anchor = z.row(i);
    let scores: Vec<f64> = (0..n)
        .map(|k| dot(anchor, z_other.row(k)) / tau)
        .chain((0..n).filter(|&k| k != i).map(|k| dot(anchor, z.row(k)) / tau))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    scores[i] - (max + sum.ln())
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub value: f64,
    pub grad_z: Array2<f64>,
    pub grad_z_other: Array2<f64>,
}

/// Per-anchor losses of ℓ(P, Q, ·) plus the softmax weights of the cross-view
/// (`cross`) and intra-view (`intra`, zero diagonal) scores.
struct Direction {
    losses: Vec<f64>,
    cross: Array2<f64>,
    intra: Array2<f64>,
}

fn direction(p: ArrayView2<f64>, q: ArrayView2<f64>, tau: f64) -> Direction {
    let n = p.nrows();
    // ℓ(P, Q, i) always reads P·Qᵀ and P·Pᵀ, whichever argument order the
    // caller used, so swapping the views reproduces every term bit for bit.
    let mut cross = p.dot(&q.t()) / tau;
    let mut intra = p.dot(&p.t()) / tau;
    let mut losses = Vec::with_capacity(n);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for k in 0..n {
            max = max.max(cross[[i, k]]);
            if k != i {
                max = max.max(intra[[i, k]]);
            }
        }
        let mut sum = 0.0;
        for k in 0..n {
            sum += (cross[[i, k]] - max).exp();
            if k != i {
                sum += (intra[[i, k]] - max).exp();
            }
        }
        let lse = max + sum.ln();
        losses.push(cross[[i, i]] - lse);
        for k in 0..n {
            cross[[i, k]] = (cross[[i, k]] - lse).exp();
            intra[[i, k]] = if k == i {
                0.0
            } else {
                (intra[[i, k]] - lse).exp()
            };
        }
    }
    Direction {
        losses,
        cross,
        intra,
    }
}

/// Adds `c · ∂Σᵢℓ(P, Q, i)` to (gp, gq):
/// ∂/∂P = Q − A·Q − B·P − Bᵀ·P and ∂/∂Q = P − Aᵀ·P for cross weights A and
/// intra weights B.
fn accumulate_direction(
    d: &Direction,
    p: ArrayView2<f64>,
    q: ArrayView2<f64>,
    c: f64,
    gp: &mut Array2<f64>,
    gq: &mut Array2<f64>,
) {
    let mut dp = q.to_owned();
    dp -= &d.cross.dot(&q);
    dp -= &d.intra.dot(&p);
    dp -= &d.intra.t().dot(&p);
    gp.scaled_add(c, &dp);
    let mut dq = p.to_owned();
    dq -= &d.cross.t().dot(&p);
    gq.scaled_add(c, &dq);
}

/// J and its exact gradients with respect to both projection matrices.
pub fn total_objective(z: ArrayView2<f64>, z_other: ArrayView2<f64>, tau: f64) -> ObjectiveOutput {
    assert_eq!(z.dim(), z_other.dim(), "views must have equal shape");
    let n = z.nrows();
    let mut grad_z = Array2::zeros(z.raw_dim());
    let mut grad_z_other = Array2::zeros(z.raw_dim());
    if n <= 1 {
        return ObjectiveOutput {
            value: 0.0,
            grad_z,
            grad_z_other,
        };
    }
    let scale = 1.0 / (2.0 * n as f64);
    let forward = direction(z, z_other, tau);
    let backward = direction(z_other, z, tau);
    let mut total = 0.0;
    for i in 0..n {
        total += forward.losses[i] + backward.losses[i];
    }
    let c = scale / tau;
    accumulate_direction(&forward, z, z_other, c, &mut grad_z, &mut grad_z_other);
    accumulate_direction(&backward, z_other, z, c, &mut grad_z_other, &mut grad_z);
    ObjectiveOutput {
        value: total * scale,
        grad_z,
        grad_z_other,
    }
}
