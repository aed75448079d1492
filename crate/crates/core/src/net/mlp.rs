//! Dense ReLU networks with batched forward and reverse passes.
//!
//! Weights of layer `l` are stored row-major with shape `(out, in)`. Hidden
//! layers use ReLU, the last layer is linear; heads apply their own output
//! transforms on top.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradient record with the same layout as the [`NetParams`] it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Flat-indexed access to a parameter vector, used by the optimizer and the
/// finite-difference checker.
pub trait FlatParams {
    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, value: f64);
}

impl NetParams {
    /// All-zero network with the given layer widths, input first.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {layer_dims:?}")));
        }
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
    pub fn init<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        for l in 0..p.num_layers() {
            let bound = 1.0 / (layer_dims[l] as f64).sqrt();
            for w in p.weights[l].iter_mut().chain(p.biases[l].iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = Self::zeros(&layer_dims)?;
        if weights.len() != p.weights.len() || biases.len() != p.biases.len() {
            return Err(Error::Shape("layer count does not match layer_dims".into()));
        }
        for l in 0..p.num_layers() {
            if weights[l].len() != p.weights[l].len() || biases[l].len() != p.biases[l].len() {
                return Err(Error::Shape(format!("layer {l} does not match layer_dims")));
            }
        }
        let p = Self {
            layer_dims,
            weights,
            biases,
        };
        if !p.is_finite() {
            return Err(Error::NonFinite {
                what: "network parameters".into(),
            });
        }
        Ok(p)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        self.layer_dims == other.layer_dims
    }

    /// Parameter slices in flat order: `w0, b0, w1, b1, ...`.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &NetParams) -> f64 {
        self.slices()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    fn locate(&self, mut i: usize) -> (&[f64], usize) {
        for s in self.slices() {
            if i < s.len() {
                return (s, i);
            }
            i -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn to_record(&self) -> NetRecord {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| w.chunks(self.layer_dims[l]).map(<[f64]>::to_vec).collect())
            .collect();
        NetRecord {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_dims: self.layer_dims.clone(),
            weights,
            biases: self.biases.clone(),
        }
    }

    pub fn from_record(rec: NetRecord) -> Result<Self> {
        if rec.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                rec.format_version
            )));
        }
        let dims = rec.layer_dims;
        if dims.len() < 2 || rec.weights.len() + 1 != dims.len() {
            return Err(Error::Shape("layer_dims do not match weights".into()));
        }
        let mut weights = Vec::with_capacity(rec.weights.len());
        for (l, rows) in rec.weights.into_iter().enumerate() {
            if rows.len() != dims[l + 1] || rows.iter().any(|r| r.len() != dims[l]) {
                return Err(Error::Shape(format!("weight matrix {l} has wrong shape")));
            }
            weights.push(rows.concat());
        }
        Self::from_parts(dims, weights, rec.biases)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("network record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(text)?)
    }
}

impl FlatParams for NetParams {
    fn num_params(&self) -> usize {
        self.slices().map(<[f64]>::len).sum()
    }

    fn param(&self, i: usize) -> f64 {
        let (s, j) = self.locate(i);
        s[j]
    }

    fn set_param(&mut self, mut i: usize, value: f64) {
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index out of range");
    }
}

/// Serialized checkpoint layout; weights are nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetRecord {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(p: &NetParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn shape_matches(&self, p: &NetParams) -> bool {
        self.slices().map(<[f64]>::len).eq(p.slices().map(<[f64]>::len))
    }
}

/// Activations retained from the last batched forward pass.
#[derive(Debug, Clone, Default)]
pub struct BatchCache {
    batch: usize,
    input: Vec<f64>,
    // outputs[l] is the post-activation output of layer l (linear for the last layer)
    outputs: Vec<Vec<f64>>,
    grad_buf: Vec<f64>,
    grad_next: Vec<f64>,
}

impl BatchCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

// C (m×n) = alpha · A (m×k) · B (k×n) + beta · C with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    rsc: isize,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every access stays inside the slices given the strides computed
    // by the callers, which mirror the (rows, cols) layouts asserted there.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            1,
        );
    }
}

/// Batched forward pass; `input` is row-major `(batch, input_dim)`.
pub fn forward_batch<'c>(
    params: &NetParams,
    input: &[f64],
    batch: usize,
    cache: &'c mut BatchCache,
) -> Result<&'c [f64]> {
    let in_dim = params.input_dim();
    if input.len() != batch * in_dim {
        return Err(Error::Shape(format!(
            "input has {} values, expected {batch}x{in_dim}",
            input.len()
        )));
    }
    let layers = params.num_layers();
    cache.batch = batch;
    cache.input.clear();
    cache.input.extend_from_slice(input);
    cache.outputs.resize_with(layers, Vec::new);
    for l in 0..layers {
        let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        let (prev, rest) = cache.outputs.split_at_mut(l);
        let x: &[f64] = if l == 0 { &cache.input } else { &prev[l - 1] };
        let z = &mut rest[0];
        z.clear();
        z.reserve(batch * fan_out);
        for _ in 0..batch {
            z.extend_from_slice(&params.biases[l]);
        }
        gemm(
            batch,
            fan_in,
            fan_out,
            x,
            (fan_in as isize, 1),
            &params.weights[l],
            (1, fan_in as isize),
            1.0,
            z,
            fan_out as isize,
        );
        if l + 1 < layers {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok(cache.output())
}

/// Reverse pass through the cached forward evaluation.
///
/// `d_output` is `(batch, output_dim)`. Parameter gradients are accumulated
/// into `grads`; the input gradient `(batch, input_dim)` is written to
/// `d_input` when requested.
pub fn backward_batch(
    params: &NetParams,
    cache: &mut BatchCache,
    d_output: &[f64],
    mut grads: Option<&mut Gradients>,
    d_input: Option<&mut Vec<f64>>,
) -> Result<()> {
    let batch = cache.batch;
    let layers = params.num_layers();
    if d_output.len() != batch * params.output_dim() || cache.outputs.len() != layers {
        return Err(Error::Shape("backward pass does not match cached forward pass".into()));
    }
    if let Some(g) = grads.as_deref() {
        if !g.shape_matches(params) {
            return Err(Error::Shape("gradient record does not match parameters".into()));
        }
    }
    let want_input = d_input.is_some();
    let mut dz = std::mem::take(&mut cache.grad_buf);
    let mut dx = std::mem::take(&mut cache.grad_next);
    dz.clear();
    dz.extend_from_slice(d_output);
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        if l + 1 < layers {
            // ReLU gate
            for (d, &a) in dz.iter_mut().zip(&cache.outputs[l]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let x: &[f64] = if l == 0 { &cache.input } else { &cache.outputs[l - 1] };
        if let Some(g) = grads.as_deref_mut() {
            gemm(
                fan_out,
                batch,
                fan_in,
                &dz,
                (1, fan_out as isize),
                x,
                (fan_in as isize, 1),
                1.0,
                &mut g.weights[l],
                fan_in as isize,
            );
            let gb = &mut g.biases[l];
            for row in dz.chunks_exact(fan_out) {
                gb.iter_mut().zip(row).for_each(|(b, d)| *b += d);
            }
        }
        if l > 0 || want_input {
            dx.clear();
            dx.resize(batch * fan_in, 0.0);
            gemm(
                batch,
                fan_out,
                fan_in,
                &dz,
                (fan_out as isize, 1),
                &params.weights[l],
                (fan_in as isize, 1),
                0.0,
                &mut dx,
                fan_in as isize,
            );
            std::mem::swap(&mut dz, &mut dx);
        }
    }
    if let Some(out) = d_input {
        out.clear();
        out.extend_from_slice(&dz);
    }
    cache.grad_buf = dz;
    cache.grad_next = dx;
    Ok(())
}
