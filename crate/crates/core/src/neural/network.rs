//! Dense feed-forward networks with exact input jets.
//!
//! A forward pass carries, for every tracked input coordinate `x_i`, the
//! first and pure second derivative of each activation alongside its value
//! (a truncated Taylor "jet"). Pre-activations are linear in the jet
//! components, so a batch of points is pushed through each layer as one
//! matrix product per jet channel. The pass keeps its intermediates so the
//! reverse sweep in [`JetPass::backward`] can pull adjoints of the outputs
//! (value, `d/dx_i`, `d²/dx_i²`) back onto the parameters.

use std::io::{Read, Write};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Linear network; used to check jet propagation against polynomials.
    Identity,
}

impl Activation {
    /// Returns `(h, h', h'')` at `a`.
    #[inline]
    fn eval(self, a: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let h = a.tanh();
                let s = 1.0 - h * h;
                (h, s, -2.0 * h * s)
            }
            Activation::Identity => (a, 1.0, 0.0),
        }
    }

    /// Third derivative at `a`, given `h = act(a)`.
    #[inline]
    fn third(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let s = 1.0 - h * h;
                -2.0 * s * s + 4.0 * h * h * s
            }
            Activation::Identity => 0.0,
        }
    }
}

/// Architecture of a fully connected network with scalar output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, width: usize) -> Result<Self> {
        if input_dim == 0 || hidden_layers == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive (input {input_dim}, layers {hidden_layers}, width {width})"
            )));
        }
        Ok(Self { input_dim, hidden_layers, width, activation: Activation::Tanh })
    }

    /// 5 hidden tanh layers of width 20.
    pub fn default_for(input_dim: usize) -> Self {
        Self { input_dim, hidden_layers: 5, width: 20, activation: Activation::Tanh }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// `(fan_in, fan_out)` of every affine map, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        dims.push((self.input_dim, self.width));
        for _ in 1..self.hidden_layers {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Offsets of `(weights, biases)` for each layer in the flat vector.
    fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = LayerLayout { fan_in, fan_out, weights: offset, biases: offset + fan_in * fan_out };
                offset += fan_in * fan_out + fan_out;
                l
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

/// Flat parameter vector: per layer, the `fan_out x fan_in` weight matrix
/// (row-major) followed by the `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: NetworkSpec,
    flat: Vec<f64>,
}

impl NetworkParams {
    pub fn from_flat(spec: NetworkSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                flat.len()
            )));
        }
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("parameter {i} is not finite")));
        }
        Ok(Self { spec, flat })
    }

    pub fn zeros(spec: NetworkSpec) -> Self {
        Self { spec, flat: vec![0.0; spec.param_count()] }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn with_flat(&self, flat: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.spec, flat)
    }

    fn weights(&self, l: &LayerLayout) -> ArrayView2<'_, f64> {
        let w = &self.flat[l.weights..l.weights + l.fan_in * l.fan_out];
        ArrayView2::from_shape((l.fan_out, l.fan_in), w).expect("layout")
    }

    fn biases(&self, l: &LayerLayout) -> &[f64] {
        &self.flat[l.biases..l.biases + l.fan_out]
    }

    /// Writes the binary snapshot: `"PMNN"`, then little-endian `u32` version,
    /// input dimension, hidden layers and width, then the flat parameters as
    /// little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        for v in [SNAPSHOT_VERSION, self.spec.input_dim as u32, self.spec.hidden_layers as u32, self.spec.width as u32]
        {
            w.write_all(&v.to_le_bytes())?;
        }
        for x in &self.flat {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, input_dim, hidden_layers, width] = header;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let spec = NetworkSpec::new(input_dim as usize, hidden_layers as usize, width as usize)?;
        let mut flat = Vec::with_capacity(spec.param_count());
        for _ in 0..spec.param_count() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            flat.push(f64::from_le_bytes(b));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Snapshot(format!("{} trailing bytes", rest.len())));
        }
        Self::from_flat(spec, flat)
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"PMNN";
const SNAPSHOT_VERSION: u32 = 1;

/// Glorot-uniform weights with limit `sqrt(6 / (fan_in + fan_out))`, zero
/// biases. The stream is ChaCha8 seeded from `seed`, so results are
/// reproducible across platforms.
pub fn init_params(spec: NetworkSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = vec![0.0; spec.param_count()];
    for l in spec.layout() {
        let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        for w in &mut flat[l.weights..l.weights + l.fan_in * l.fan_out] {
            *w = dist.sample(&mut rng);
        }
    }
    NetworkParams { spec, flat }
}

/// A scalar with first and pure second derivatives along tracked inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct JetValue {
    pub value: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

fn check_single(params: &NetworkParams, input: &[f64]) -> Result<()> {
    if input.len() != params.spec.input_dim {
        return Err(Error::InvalidArgument(format!("expected {} inputs, got {}", params.spec.input_dim, input.len())));
    }
    Ok(())
}

pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<f64> {
    check_single(params, input)?;
    Ok(forward_batch(params, input)?[0])
}

pub fn forward_jet(params: &NetworkParams, input: &[f64], tracked: &[usize]) -> Result<JetValue> {
    check_single(params, input)?;
    let pass = JetPass::run(params, input, tracked)?;
    Ok(JetValue {
        value: pass.output.value[[0, 0]],
        d1: pass.output.d1.iter().map(|a| a[[0, 0]]).collect(),
        d2: pass.output.d2.iter().map(|a| a[[0, 0]]).collect(),
    })
}

const BATCH_CHUNK: usize = 8192;

/// Network outputs at many points, `points` laid out row-major
/// (`input_dim` coordinates per point).
pub fn forward_batch(params: &NetworkParams, points: &[f64]) -> Result<Vec<f64>> {
    let dim = params.spec.input_dim;
    check_points(points, dim)?;
    let chunks = points
        .par_chunks(BATCH_CHUNK * dim)
        .map(|chunk| Ok(JetPass::run(params, chunk, &[])?.output.value.iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

fn check_points(points: &[f64], dim: usize) -> Result<()> {
    if points.is_empty() || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!(
            "expected a non-empty multiple of {dim} coordinates, got {}",
            points.len()
        )));
    }
    Ok(())
}

/// Jet components of one layer for a batch: each array is `points x units`.
#[derive(Debug, Clone)]
pub(crate) struct JetChannels {
    pub value: Array2<f64>,
    pub d1: Vec<Array2<f64>>,
    pub d2: Vec<Array2<f64>>,
}

impl JetChannels {
    fn channels(&self) -> impl Iterator<Item = &Array2<f64>> {
        std::iter::once(&self.value).chain(&self.d1).chain(&self.d2)
    }
}

/// Forward jet pass over a batch, retaining what the reverse sweep needs.
#[derive(Debug, Clone)]
pub(crate) struct JetPass {
    points: usize,
    tracked: usize,
    /// Input to each affine map (raw inputs, then activated hidden layers).
    inputs: Vec<JetChannels>,
    /// Pre-activations of the hidden layers.
    pre: Vec<JetChannels>,
    pub output: JetChannels,
}

/// Matrix products of single-row operands may come back with odd strides.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn affine(params: &NetworkParams, l: &LayerLayout, x: &JetChannels) -> JetChannels {
    let w = params.weights(l);
    let mut value = standard(x.value.dot(&w.t()));
    for mut row in value.rows_mut() {
        for (v, b) in row.iter_mut().zip(params.biases(l)) {
            *v += b;
        }
    }
    JetChannels {
        value,
        d1: x.d1.iter().map(|d| standard(d.dot(&w.t()))).collect(),
        d2: x.d2.iter().map(|d| standard(d.dot(&w.t()))).collect(),
    }
}

fn activate(act: Activation, pre: &JetChannels) -> JetChannels {
    let a = pre.value.as_slice().expect("standard layout");
    let mut value = Vec::with_capacity(a.len());
    let mut s = Vec::with_capacity(a.len());
    let mut t = Vec::with_capacity(a.len());
    for &x in a {
        let (h, si, ti) = act.eval(x);
        value.push(h);
        s.push(si);
        t.push(ti);
    }
    let shape = pre.value.raw_dim();
    let mut d1 = Vec::with_capacity(pre.d1.len());
    let mut d2 = Vec::with_capacity(pre.d2.len());
    for (da, d2a) in pre.d1.iter().zip(&pre.d2) {
        let da = da.as_slice().expect("standard layout");
        let d2a = d2a.as_slice().expect("standard layout");
        let o1: Vec<f64> = da.iter().zip(&s).map(|(d, si)| si * d).collect();
        let o2: Vec<f64> = (0..da.len()).map(|i| s[i] * d2a[i] + t[i] * da[i] * da[i]).collect();
        d1.push(Array2::from_shape_vec(shape, o1).expect("shape"));
        d2.push(Array2::from_shape_vec(shape, o2).expect("shape"));
    }
    JetChannels { value: Array2::from_shape_vec(shape, value).expect("shape"), d1, d2 }
}

impl JetPass {
    pub fn run(params: &NetworkParams, points: &[f64], tracked: &[usize]) -> Result<Self> {
        let spec = params.spec;
        let dim = spec.input_dim;
        check_points(points, dim)?;
        if let Some(bad) = tracked.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidArgument(format!("tracked input {bad} out of range for input dimension {dim}")));
        }
        let p = points.len() / dim;
        let value = Array2::from_shape_vec((p, dim), points.to_vec()).expect("shape checked");
        let d1 = tracked
            .iter()
            .map(|&i| {
                let mut e = Array2::zeros((p, dim));
                e.column_mut(i).fill(1.0);
                e
            })
            .collect();
        let d2 = tracked.iter().map(|_| Array2::zeros((p, dim))).collect();
        let mut x = JetChannels { value, d1, d2 };

        let layout = spec.layout();
        let mut inputs = Vec::with_capacity(layout.len());
        let mut pre = Vec::with_capacity(spec.hidden_layers);
        for l in &layout[..layout.len() - 1] {
            let z = affine(params, l, &x);
            let h = activate(spec.activation, &z);
            inputs.push(std::mem::replace(&mut x, h));
            pre.push(z);
        }
        let output = affine(params, layout.last().expect("output layer"), &x);
        inputs.push(x);
        Ok(Self { points: p, tracked: tracked.len(), inputs, pre, output })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn tracked(&self) -> usize {
        self.tracked
    }

    /// Accumulates `d(objective)/d(params)` into `grad`, given the adjoints of
    /// the output jet components (`adj_value[p]`, `adj_d1[i][p]`, `adj_d2[i][p]`).
    pub fn backward(
        &self,
        params: &NetworkParams,
        adj_value: &[f64],
        adj_d1: &[Vec<f64>],
        adj_d2: &[Vec<f64>],
        grad: &mut [f64],
    ) {
        let p = self.points;
        let col = |v: &[f64]| Array2::from_shape_vec((p, 1), v.to_vec()).expect("adjoint length");
        let mut g = JetChannels {
            value: col(adj_value),
            d1: adj_d1.iter().map(|v| col(v)).collect(),
            d2: adj_d2.iter().map(|v| col(v)).collect(),
        };
        let layout = params.spec.layout();
        let act = params.spec.activation;
        for (li, l) in layout.iter().enumerate().rev() {
            let x = &self.inputs[li];
            // weights: gW += Σ_c gZ_cᵀ X_c ; biases only see the value channel
            {
                let (wslice, rest) = grad[l.weights..].split_at_mut(l.fan_in * l.fan_out);
                let mut gw = ArrayViewMut2::from_shape((l.fan_out, l.fan_in), wslice).expect("layout");
                for (gz, xc) in g.channels().zip(x.channels()) {
                    general_mat_mul(1.0, &gz.t(), xc, 1.0, &mut gw);
                }
                let gb = &mut rest[..l.fan_out];
                for (b, s) in gb.iter_mut().zip(g.value.sum_axis(Axis(0))) {
                    *b += s;
                }
            }
            if li == 0 {
                break;
            }
            let w = params.weights(l);
            let gx = JetChannels {
                value: standard(g.value.dot(&w)),
                d1: g.d1.iter().map(|d| standard(d.dot(&w))).collect(),
                d2: g.d2.iter().map(|d| standard(d.dot(&w))).collect(),
            };
            g = activation_backward(act, &self.pre[li - 1], x, gx);
        }
    }
}

/// Pulls adjoints of `h = act(a)` jets back onto the pre-activation jets.
///
/// With `h' = s`, `h'' = t`: `dh_i = s da_i`, `d2h_i = s d2a_i + t da_i²`.
fn activation_backward(act: Activation, pre: &JetChannels, post: &JetChannels, gh: JetChannels) -> JetChannels {
    let hs = post.value.as_slice().expect("standard layout");
    let as_ = pre.value.as_slice().expect("standard layout");
    let mut ga = gh.clone();
    let mut g_a: Vec<f64> = Vec::with_capacity(hs.len());
    let mut s = Vec::with_capacity(hs.len());
    let mut t = Vec::with_capacity(hs.len());
    let mut t3 = Vec::with_capacity(hs.len());
    for ((&a, &h), &g) in as_.iter().zip(hs).zip(gh.value.as_slice().expect("standard layout")) {
        let (_, si, ti) = act.eval(a);
        g_a.push(g * si);
        s.push(si);
        t.push(ti);
        t3.push(act.third(h));
    }
    for i in 0..pre.d1.len() {
        let da = pre.d1[i].as_slice().expect("standard layout");
        let d2a = pre.d2[i].as_slice().expect("standard layout");
        let g_dh = gh.d1[i].as_slice().expect("standard layout");
        let g_d2h = gh.d2[i].as_slice().expect("standard layout");
        let o1 = ga.d1[i].as_slice_mut().expect("standard layout");
        for j in 0..da.len() {
            g_a[j] += g_dh[j] * t[j] * da[j] + g_d2h[j] * (t[j] * d2a[j] + t3[j] * da[j] * da[j]);
            o1[j] = g_dh[j] * s[j] + g_d2h[j] * 2.0 * t[j] * da[j];
        }
        let o2 = ga.d2[i].as_slice_mut().expect("standard layout");
        for j in 0..da.len() {
            o2[j] = g_d2h[j] * s[j];
        }
    }
    ga.value.as_slice_mut().expect("standard layout").copy_from_slice(&g_a);
    ga
}
