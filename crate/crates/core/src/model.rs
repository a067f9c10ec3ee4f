//! GCN encoder and MLP projector with hand-derived reverse-mode gradients.
//!
//! Encoder layer ℓ computes `ReLU(propagate(H) · Wℓ)`; the projector is
//! `P2 · ReLU(P1 · h + b1) + b2`, followed by row L2 normalization so that the
//! contrastive critic is a plain dot product.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::augment::AugmentedView;
use crate::error::{GradeError, Result};
use crate::graph::{propagate, propagate_transpose, Adjacency, Graph};
use crate::rng::Rng;

const ZERO_NORM: f64 = 1e-12;
const CHECKPOINT_MAGIC: &[u8; 8] = b"GRADECKP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub proj: usize,
    /// Number of encoder layers, 1 or 2.
    pub layers: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.layers) {
            return Err(GradeError::Config(format!(
                "layers must be 1 or 2, got {}",
                self.layers
            )));
        }
        if self.input == 0 || self.hidden == 0 || self.embed == 0 || self.proj == 0 {
            return Err(GradeError::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        match self.layers {
            1 => vec![(self.input, self.embed)],
            _ => vec![(self.input, self.hidden), (self.hidden, self.embed)],
        }
    }
}

/// Every trainable tensor, in checkpoint order. Used for values and gradients alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub encoder: Vec<Array2<f64>>,
    pub proj_w1: Array2<f64>,
    pub proj_b1: Array1<f64>,
    pub proj_w2: Array2<f64>,
    pub proj_b2: Array1<f64>,
}

impl ParamSet {
    pub fn zeros(dims: &ModelDims) -> Self {
        Self {
            encoder: dims
                .encoder_shapes()
                .into_iter()
                .map(Array2::zeros)
                .collect(),
            proj_w1: Array2::zeros((dims.embed, dims.proj)),
            proj_b1: Array1::zeros(dims.proj),
            proj_w2: Array2::zeros((dims.proj, dims.proj)),
            proj_b2: Array1::zeros(dims.proj),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self
            .encoder
            .iter()
            .map(|w| w.as_slice().expect("standard layout"))
            .collect();
        out.push(self.proj_w1.as_slice().expect("standard layout"));
        out.push(self.proj_b1.as_slice().expect("standard layout"));
        out.push(self.proj_w2.as_slice().expect("standard layout"));
        out.push(self.proj_b2.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .encoder
            .iter_mut()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .collect();
        out.push(self.proj_w1.as_slice_mut().expect("standard layout"));
        out.push(self.proj_b1.as_slice_mut().expect("standard layout"));
        out.push(self.proj_w2.as_slice_mut().expect("standard layout"));
        out.push(self.proj_b2.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Encoder and projector weights plus their gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    pub values: ParamSet,
    pub grads: ParamSet,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let encoder = dims
            .encoder_shapes()
            .into_iter()
            .map(|(r, c)| glorot(r, c, rng))
            .collect();
        let values = ParamSet {
            encoder,
            proj_w1: glorot(dims.embed, dims.proj, rng),
            proj_b1: Array1::zeros(dims.proj),
            proj_w2: glorot(dims.proj, dims.proj, rng),
            proj_b2: Array1::zeros(dims.proj),
        };
        Ok(Self {
            dims,
            grads: ParamSet::zeros(&dims),
            values,
        })
    }

    /// Wraps explicit values; shapes must agree with `dims`.
    pub fn from_values(dims: ModelDims, values: ParamSet) -> Result<Self> {
        dims.validate()?;
        let expected = ParamSet::zeros(&dims);
        let shapes_match = expected.encoder.len() == values.encoder.len()
            && expected
                .encoder
                .iter()
                .zip(&values.encoder)
                .all(|(a, b)| a.dim() == b.dim())
            && expected.proj_w1.dim() == values.proj_w1.dim()
            && expected.proj_b1.dim() == values.proj_b1.dim()
            && expected.proj_w2.dim() == values.proj_w2.dim()
            && expected.proj_b2.dim() == values.proj_b2.dim();
        if !shapes_match {
            return Err(GradeError::Validation(
                "parameter shapes do not match model dimensions".into(),
            ));
        }
        // Round-trip through a fresh standard layout.
        let mut fresh = expected.clone();
        for (dst, src) in fresh.slices_mut().into_iter().zip(values.slices()) {
            dst.copy_from_slice(src);
        }
        Ok(Self {
            dims,
            values: fresh,
            grads: expected,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dims.layers as u32).to_le_bytes())?;
        for d in [self.dims.input, self.dims.hidden, self.dims.embed, self.dims.proj] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for s in self.values.slices() {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(GradeError::Format("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(GradeError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        r.read_exact(&mut b4)?;
        let layers = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        let mut dim = || -> Result<usize> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8) as usize)
        };
        let dims = ModelDims {
            input: dim()?,
            hidden: dim()?,
            embed: dim()?,
            proj: dim()?,
            layers,
        };
        dims.validate()
            .map_err(|e| GradeError::Format(format!("bad checkpoint header: {e}")))?;
        let mut values = ParamSet::zeros(&dims);
        for s in values.slices_mut() {
            for v in s.iter_mut() {
                r.read_exact(&mut b8)?;
                *v = f64::from_le_bytes(b8);
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(GradeError::Format(format!(
                "{} trailing bytes after checkpoint payload",
                rest.len()
            )));
        }
        Self::from_values(dims, values)
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Multiplies by the ReLU derivative in place (0 at and below 0).
fn relu_backward(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Activations cached by [`encode`].
#[derive(Debug)]
pub struct EncoderTape<'a> {
    topology: &'a Adjacency,
    /// Propagated layer inputs, one per layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activations, one per layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl EncoderTape<'_> {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Activations of a full forward pass. Consumed by [`backward`].
#[derive(Debug)]
pub struct ForwardTape<'a> {
    encoder: EncoderTape<'a>,
    proj_pre: Array2<f64>,
    proj_hidden: Array2<f64>,
    norms: Vec<f64>,
    z: Array2<f64>,
}

/// Normalized projections plus the tape needed to backpropagate through them.
#[derive(Debug)]
pub struct Projection<'a> {
    pub z: Array2<f64>,
    /// Rows whose projector output had norm below 1e-12 and were left at zero.
    pub zero_rows: usize,
    pub tape: ForwardTape<'a>,
}

/// Runs the encoder over an explicit topology and feature matrix.
pub fn encode<'a>(
    topology: &'a Adjacency,
    features: ArrayView2<f64>,
    params: &ModelParams,
) -> (Array2<f64>, EncoderTape<'a>) {
    let mut h = features.to_owned();
    let mut propagated = Vec::with_capacity(params.values.encoder.len());
    let mut pre = Vec::with_capacity(params.values.encoder.len());
    for w in &params.values.encoder {
        let p = propagate(topology, h.view());
        let a = p.dot(w);
        h = relu(&a);
        propagated.push(p);
        pre.push(a);
    }
    let tape = EncoderTape {
        topology,
        propagated,
        pre,
        output: h.clone(),
    };
    (h, tape)
}

/// Encoder output on an augmented view.
pub fn encode_view<'a>(
    view: &'a AugmentedView,
    params: &ModelParams,
) -> (Array2<f64>, EncoderTape<'a>) {
    encode(view.topology(), view.masked_features().view(), params)
}

/// Encoder output on the un-augmented graph (original topology, no mask).
pub fn embed_graph(graph: &Graph, params: &ModelParams) -> Array2<f64> {
    encode(graph.adjacency(), graph.features().view(), params).0
}

/// Applies the projector to the encoder output and L2-normalizes each row.
pub fn project_normalize<'a>(params: &ModelParams, tape: EncoderTape<'a>) -> Projection<'a> {
    let v = &params.values;
    let proj_pre = tape.output.dot(&v.proj_w1) + &v.proj_b1;
    let proj_hidden = relu(&proj_pre);
    let g = proj_hidden.dot(&v.proj_w2) + &v.proj_b2;
    let mut z = g;
    let mut norms = Vec::with_capacity(z.nrows());
    let mut zero_rows = 0;
    for mut row in z.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n < ZERO_NORM {
            row.fill(0.0);
            zero_rows += 1;
        } else {
            row /= n;
        }
        norms.push(n);
    }
    Projection {
        z: z.clone(),
        zero_rows,
        tape: ForwardTape {
            encoder: tape,
            proj_pre,
            proj_hidden,
            norms,
            z,
        },
    }
}

/// Full forward pass on a view.
pub fn forward_view<'a>(view: &'a AugmentedView, params: &ModelParams) -> Projection<'a> {
    let (_, tape) = encode_view(view, params);
    project_normalize(params, tape)
}

/// Accumulates the gradients of a scalar with respect to every parameter, given
/// its gradient `upstream` with respect to the normalized projections.
pub fn backward(tape: ForwardTape<'_>, upstream: ArrayView2<f64>, params: &mut ModelParams) {
    let ForwardTape {
        encoder,
        proj_pre,
        proj_hidden,
        norms,
        z,
    } = tape;

    // Through the row normalization: (I − z zᵀ) / ‖g‖.
    let mut dg = upstream.to_owned();
    for (i, mut row) in dg.rows_mut().into_iter().enumerate() {
        if norms[i] < ZERO_NORM {
            row.fill(0.0);
            continue;
        }
        let zi = z.row(i);
        let radial = zi.dot(&row);
        row.scaled_add(-radial, &zi);
        row /= norms[i];
    }

    let (values, grads) = (&params.values, &mut params.grads);
    grads.proj_w2 += &proj_hidden.t().dot(&dg);
    grads.proj_b2 += &dg.sum_axis(Axis(0));
    let mut du = dg.dot(&values.proj_w2.t());
    relu_backward(&mut du, &proj_pre);
    grads.proj_w1 += &encoder.output.t().dot(&du);
    grads.proj_b1 += &du.sum_axis(Axis(0));
    let mut dh = du.dot(&values.proj_w1.t());

    for layer in (0..values.encoder.len()).rev() {
        relu_backward(&mut dh, &encoder.pre[layer]);
        grads.encoder[layer] += &encoder.propagated[layer].t().dot(&dh);
        if layer > 0 {
            let dp = dh.dot(&values.encoder[layer].t());
            dh = propagate_transpose(encoder.topology, dp.view());
        }
    }
}
