//! Multi-layer perceptron with optional layer normalization and hand-written
//! reverse-mode gradients.
//!
//! Each hidden layer computes `affine → [layer norm] → activation`; the last
//! layer is affine only. All parameters sit in one flat buffer (weights
//! stored `in × out`, so a batch row `x` maps to `x·W + b`), which lets the
//! optimizer, the finite-difference checker and the checkpoint writer treat a
//! network as a plain slice.
//!
//! The hidden activation defaults to SiLU (`x·σ(x)`): smooth, so finite
//! differences agree with the analytic gradient, and zero at zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{gemm_nn, gemm_tn, Matrix};
use crate::real::{sigmoid, Real};

/// Added to the variance before the square root in layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Silu,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Relu => x.max(T::zero()),
        }
    }

    #[inline]
    fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

impl core::fmt::Display for Activation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "silu" | "swish" => Ok(Activation::Silu),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Invalid(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub layer_norm: bool,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            layer_norm: false,
            activation: Activation::Silu,
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = on;
        self
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LayerSlots {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Offsets of the layer-norm gain and bias.
    norm: Option<(usize, usize)>,
}

/// Name, shape and location of one parameter tensor inside the flat buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters (or gradients, which share the layout) of one network.
#[derive(Clone, Debug)]
pub struct MlpParams<T> {
    config: MlpConfig,
    layers: Vec<LayerSlots>,
    values: Vec<T>,
    version: u64,
}

impl<T: Real> PartialEq for MlpParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl<T: Real> MlpParams<T> {
    /// All-zero parameters; layer-norm gains are zero too.
    pub fn zeros(config: &MlpConfig) -> Result<Self> {
        let widths = config.widths();
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Invalid(format!("layer widths must be positive: {widths:?}")));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weight = offset;
            offset += fan_in * fan_out;
            let bias = offset;
            offset += fan_out;
            let hidden = l + 2 < widths.len();
            let norm = if hidden && config.layer_norm {
                let g = offset;
                offset += fan_out;
                let b = offset;
                offset += fan_out;
                Some((g, b))
            } else {
                None
            };
            layers.push(LayerSlots {
                fan_in,
                fan_out,
                weight,
                bias,
                norm,
            });
        }
        Ok(Self {
            config: config.clone(),
            layers,
            values: vec![T::zero(); offset],
            version: 0,
        })
    }

    /// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)`, zero biases,
    /// unit layer-norm gains. The output layer is multiplied by `output_scale`.
    pub fn init<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R, output_scale: f64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let last = p.layers.len() - 1;
        for (l, slots) in p.layers.clone().iter().enumerate() {
            let bound = 1.0 / Float::sqrt(slots.fan_in as f64);
            let scale = if l == last { output_scale } else { 1.0 };
            for w in &mut p.values[slots.weight..slots.weight + slots.fan_in * slots.fan_out] {
                *w = T::lit(rng.random_range(-bound..bound) * scale);
            }
            if let Some((g, _)) = slots.norm {
                p.values[g..g + slots.fan_out].fill(T::one());
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layers: self.layers.clone(),
            values: vec![T::zero(); self.values.len()],
            version: 0,
        }
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.config.input
    }

    pub fn output_width(&self) -> usize {
        self.config.output
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable access invalidates forward caches taken earlier.
    pub fn values_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn weight(&self, layer: usize) -> &[T] {
        let s = &self.layers[layer];
        &self.values[s.weight..s.weight + s.fan_in * s.fan_out]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let s = &self.layers[layer];
        &self.values[s.bias..s.bias + s.fan_out]
    }

    pub fn norm_gain(&self, layer: usize) -> Option<&[T]> {
        let s = &self.layers[layer];
        s.norm.map(|(g, _)| &self.values[g..g + s.fan_out])
    }

    pub fn norm_bias(&self, layer: usize) -> Option<&[T]> {
        let s = &self.layers[layer];
        s.norm.map(|(_, b)| &self.values[b..b + s.fan_out])
    }

    /// Every parameter tensor in storage order.
    pub fn tensor_slots(&self) -> Vec<TensorSlot> {
        let mut out = Vec::new();
        for (l, s) in self.layers.iter().enumerate() {
            out.push(TensorSlot {
                name: format!("layer{l}.weight"),
                rows: s.fan_in,
                cols: s.fan_out,
                offset: s.weight,
            });
            out.push(TensorSlot {
                name: format!("layer{l}.bias"),
                rows: 1,
                cols: s.fan_out,
                offset: s.bias,
            });
            if let Some((g, b)) = s.norm {
                out.push(TensorSlot {
                    name: format!("layer{l}.norm_gain"),
                    rows: 1,
                    cols: s.fan_out,
                    offset: g,
                });
                out.push(TensorSlot {
                    name: format!("layer{l}.norm_bias"),
                    rows: 1,
                    cols: s.fan_out,
                    offset: b,
                });
            }
        }
        out
    }

    /// Sum of all entries; cheap fingerprint for "was this touched" checks.
    pub fn checksum(&self) -> f64 {
        self.values.iter().map(|v| v.to_f64_lossy()).sum()
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            config: self.config.clone(),
            layers: self.layers.clone(),
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            version: 0,
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.config.input {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: x.shape(),
                rhs: (self.config.input, self.layers[0].fan_out),
            });
        }
        Ok(())
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let batch = x.rows();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input = x.clone();
        let last = self.layers.len() - 1;
        for (l, s) in self.layers.iter().enumerate() {
            let mut z = self.affine(&input, s);
            if l == last {
                layers.push(LayerCache {
                    input,
                    pre: Matrix::zeros(0, 0),
                    norm: None,
                });
                return Ok((
                    z,
                    ForwardCache {
                        version: self.version,
                        batch,
                        widths: self.config.widths(),
                        layers,
                    },
                ));
            }
            let norm = match s.norm {
                Some((g, b)) => Some(self.layer_norm(&mut z, g, b, s.fan_out)),
                None => None,
            };
            let act = self.config.activation;
            let h = z.map(|v| act.apply(v));
            layers.push(LayerCache {
                input,
                pre: z,
                norm,
            });
            input = h;
        }
        unreachable!("network has at least one layer")
    }

    /// Forward pass without a cache.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut input = x.clone();
        let last = self.layers.len() - 1;
        for (l, s) in self.layers.iter().enumerate() {
            let mut z = self.affine(&input, s);
            if l == last {
                return Ok(z);
            }
            if let Some((g, b)) = s.norm {
                self.layer_norm(&mut z, g, b, s.fan_out);
            }
            let act = self.config.activation;
            for v in z.data_mut() {
                *v = act.apply(*v);
            }
            input = z;
        }
        unreachable!("network has at least one layer")
    }

    fn affine(&self, input: &Matrix<T>, s: &LayerSlots) -> Matrix<T> {
        let batch = input.rows();
        let mut z = Matrix::zeros(batch, s.fan_out);
        gemm_nn(
            input.data(),
            &self.values[s.weight..s.weight + s.fan_in * s.fan_out],
            z.data_mut(),
            batch,
            s.fan_in,
            s.fan_out,
        );
        let bias = &self.values[s.bias..s.bias + s.fan_out];
        for i in 0..batch {
            for (v, &b) in z.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        z
    }

    /// Normalizes `z` in place and applies gain/bias; returns the normalized
    /// values and per-row inverse standard deviations.
    fn layer_norm(&self, z: &mut Matrix<T>, g: usize, b: usize, width: usize) -> NormCache<T> {
        let n = T::lit(width as f64);
        let eps = T::lit(LAYER_NORM_EPS);
        let gain = &self.values[g..g + width];
        let shift = &self.values[b..b + width];
        let mut normalized = Matrix::zeros(z.rows(), width);
        let mut inv_std = Vec::with_capacity(z.rows());
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let nrow = normalized.row_mut(i);
            for j in 0..width {
                let h = (row[j] - mean) * inv;
                nrow[j] = h;
                row[j] = h * gain[j] + shift[j];
            }
        }
        NormCache {
            normalized,
            inv_std,
        }
    }

    /// Full backward pass: input gradient and parameter gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Matrix<T>) -> Result<(Matrix<T>, MlpParams<T>)> {
        let (dx, grads) = self.backward_with(cache, dy, true, true)?;
        // Both were requested.
        Ok((dx.unwrap(), grads.unwrap()))
    }

    /// Backward pass computing only what is asked for.
    pub fn backward_with(
        &self,
        cache: &ForwardCache<T>,
        dy: &Matrix<T>,
        want_input: bool,
        want_params: bool,
    ) -> Result<(Option<Matrix<T>>, Option<MlpParams<T>>)> {
        if cache.version != self.version
            || cache.widths != self.config.widths()
            || cache.layers.len() != self.layers.len()
        {
            return Err(Error::StaleCache("cache was produced by different parameters"));
        }
        if dy.shape() != (cache.batch, self.config.output) {
            return Err(Error::Shape {
                op: "mlp_backward",
                lhs: dy.shape(),
                rhs: (cache.batch, self.config.output),
            });
        }
        let mut grads = if want_params { Some(self.zeros_like()) } else { None };
        let last = self.layers.len() - 1;
        let mut delta = dy.clone();
        for l in (0..=last).rev() {
            let s = &self.layers[l];
            let lc = &cache.layers[l];
            if l != last {
                // `delta` holds the gradient w.r.t. this layer's activation output.
                let act = self.config.activation;
                for (d, &p) in delta.data_mut().iter_mut().zip(lc.pre.data()) {
                    *d *= act.derivative(p);
                }
                if let (Some((g, _)), Some(nc)) = (s.norm, lc.norm.as_ref()) {
                    delta = self.layer_norm_backward(&delta, nc, g, s, grads.as_mut())?;
                }
            }
            if let Some(gr) = grads.as_mut() {
                gemm_tn(
                    lc.input.data(),
                    delta.data(),
                    &mut gr.values[s.weight..s.weight + s.fan_in * s.fan_out],
                    cache.batch,
                    s.fan_in,
                    s.fan_out,
                );
                let db = delta.column_sums();
                gr.values[s.bias..s.bias + s.fan_out].copy_from_slice(&db);
            }
            if l == 0 && !want_input {
                break;
            }
            let w = Matrix::from_vec(
                s.fan_in,
                s.fan_out,
                self.values[s.weight..s.weight + s.fan_in * s.fan_out].to_vec(),
            )?;
            delta = delta.matmul_t(&w)?;
        }
        let dx = if want_input { Some(delta) } else { None };
        Ok((dx, grads))
    }

    fn layer_norm_backward(
        &self,
        dout: &Matrix<T>,
        nc: &NormCache<T>,
        g: usize,
        s: &LayerSlots,
        grads: Option<&mut MlpParams<T>>,
    ) -> Result<Matrix<T>> {
        let width = s.fan_out;
        let gain = &self.values[g..g + width];
        if let Some(gr) = grads {
            let (go, bo) = s.norm.expect("layer has norm slots");
            for i in 0..dout.rows() {
                let d = dout.row(i);
                let nrow = nc.normalized.row(i);
                for j in 0..width {
                    gr.values[go + j] += d[j] * nrow[j];
                    gr.values[bo + j] += d[j];
                }
            }
        }
        let n = T::lit(width as f64);
        let mut dz = Matrix::zeros(dout.rows(), width);
        let mut dn = vec![T::zero(); width];
        for i in 0..dout.rows() {
            let d = dout.row(i);
            let nrow = nc.normalized.row(i);
            for j in 0..width {
                dn[j] = d[j] * gain[j];
            }
            let mean_dn = dn.iter().copied().sum::<T>() / n;
            let mean_dn_n = dn.iter().zip(nrow).map(|(&a, &b)| a * b).sum::<T>() / n;
            let inv = nc.inv_std[i];
            let out = dz.row_mut(i);
            for j in 0..width {
                out[j] = inv * (dn[j] - mean_dn - nrow[j] * mean_dn_n);
            }
        }
        Ok(dz)
    }
}

#[derive(Clone, Debug)]
struct NormCache<T> {
    normalized: Matrix<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
struct LayerCache<T> {
    input: Matrix<T>,
    /// Activation input (after layer norm when enabled); empty for the output layer.
    pre: Matrix<T>,
    norm: Option<NormCache<T>>,
}

/// Intermediates of one forward call, tied to the parameter version used.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    version: u64,
    batch: usize,
    widths: Vec<usize>,
    layers: Vec<LayerCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}
