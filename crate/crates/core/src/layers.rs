//! Layer normalization (whole-vector and per-field), the normalized hidden
//! layer `ReLU(LN(W·x))`, and the instance-guided mask unit.

use crate::error::{Error, Result};
use crate::numeric::{
    fold_relu_pattern, normal_init, relu_backward_in_place, relu_matrix, Affine, Grads, Matrix,
    ParamId, ParamStore, Rng, Values,
};

/// Default LN epsilon. Small enough that normalized outputs have unit
/// variance to within 1e-6 for inputs whose variance exceeds ~1e-3.
pub const LN_EPS: f64 = 1e-9;

/// Normalizes one segment into `xhat`; returns `1/sqrt(var + eps)`.
/// Variance is the population variance.
fn normalize_segment(x: &[f64], eps: f64, xhat: &mut [f64]) -> f64 {
    let h = x.len() as f64;
    let mean = x.iter().sum::<f64>() / h;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h;
    let inv_std = 1.0 / (var + eps).sqrt();
    for (o, v) in xhat.iter_mut().zip(x) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}

/// Given `dy` for `y = g⊙xhat + b`, accumulates `dg`, `db` and writes `dx`.
fn backward_segment(
    dy: &[f64],
    xhat: &[f64],
    inv_std: f64,
    gain: &[f64],
    (dgain, dbias): (&mut [f64], &mut [f64]),
    dx: &mut [f64],
) {
    let h = dy.len() as f64;
    let mut mean_dxhat = 0.0;
    let mut mean_dxhat_xhat = 0.0;
    for i in 0..dy.len() {
        dgain[i] += dy[i] * xhat[i];
        dbias[i] += dy[i];
        let d = dy[i] * gain[i];
        mean_dxhat += d;
        mean_dxhat_xhat += d * xhat[i];
    }
    mean_dxhat /= h;
    mean_dxhat_xhat /= h;
    for i in 0..dy.len() {
        let d = dy[i] * gain[i];
        dx[i] = inv_std * (d - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

/// `g ⊙ (x − μ)/sqrt(σ² + eps) + b` for one vector.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::shape(
            "layer_norm",
            format!("x={}, gain={}, bias={}", x.len(), gain.len(), bias.len()),
        ));
    }
    let mut xhat = vec![0.0; x.len()];
    normalize_segment(x, eps, &mut xhat);
    Ok(xhat
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(n, (g, b))| g * n + b)
        .collect())
}

/// Pre-gain normalized vector `(x − μ)/sqrt(σ² + eps)`.
pub fn normalized(x: &[f64], eps: f64) -> Vec<f64> {
    let mut xhat = vec![0.0; x.len()];
    normalize_segment(x, eps, &mut xhat);
    xhat
}

/// Saved activations of a (possibly segmented) layer norm.
#[derive(Debug, Clone)]
pub struct LnCache {
    /// Pre-gain normalized input.
    pub xhat: Matrix,
    inv_std: Vec<f64>,
}

/// Layer normalization with learned gain and bias over the whole row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub eps: f64,
}

impl LayerNorm {
    /// Gain 1, bias 0.
    /// LN parameters are exempt from the L2 penalty.
    pub fn new(store: &mut ParamStore, name: &str, width: usize, eps: f64) -> Self {
        let gain = store.add(format!("{name}.gain"), (width, 1), vec![1.0; width]);
        let bias = store.add(format!("{name}.bias"), (width, 1), vec![0.0; width]);
        store.exempt_from_l2(gain);
        store.exempt_from_l2(bias);
        LayerNorm {
            gain,
            bias,
            width,
            eps,
        }
    }

    pub fn forward(&self, values: Values<'_>, x: &Matrix) -> (Matrix, LnCache) {
        segmented_forward(&[*self], values, x)
    }

    pub fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, cache: &LnCache, dy: &Matrix) -> Matrix {
        segmented_backward(&[*self], values, grads, cache, dy)
    }

    pub fn param_count(&self) -> usize {
        2 * self.width
    }
}

fn segmented_forward(norms: &[LayerNorm], values: Values<'_>, x: &Matrix) -> (Matrix, LnCache) {
    let rows = x.rows();
    let mut out = Matrix::zeros(rows, x.cols());
    let mut xhat = Matrix::zeros(rows, x.cols());
    let mut inv_std = Vec::with_capacity(rows * norms.len());
    for r in 0..rows {
        let mut off = 0;
        for ln in norms {
            let w = ln.width;
            let seg = &x.row(r)[off..off + w];
            let xh = &mut xhat.row_mut(r)[off..off + w];
            inv_std.push(normalize_segment(seg, ln.eps, xh));
            let g = values.get(ln.gain);
            let b = values.get(ln.bias);
            let o = &mut out.row_mut(r)[off..off + w];
            for i in 0..w {
                o[i] = g[i] * xh[i] + b[i];
            }
            off += w;
        }
    }
    (out, LnCache { xhat, inv_std })
}

fn segmented_backward(
    norms: &[LayerNorm],
    values: Values<'_>,
    grads: &mut Grads<'_>,
    cache: &LnCache,
    dy: &Matrix,
) -> Matrix {
    let rows = dy.rows();
    let mut dx = Matrix::zeros(rows, dy.cols());
    let mut dgains: Vec<Vec<f64>> = norms.iter().map(|n| vec![0.0; n.width]).collect();
    let mut dbiases: Vec<Vec<f64>> = norms.iter().map(|n| vec![0.0; n.width]).collect();
    for r in 0..rows {
        let mut off = 0;
        for (s, ln) in norms.iter().enumerate() {
            let w = ln.width;
            backward_segment(
                &dy.row(r)[off..off + w],
                &cache.xhat.row(r)[off..off + w],
                cache.inv_std[r * norms.len() + s],
                values.get(ln.gain),
                (&mut dgains[s], &mut dbiases[s]),
                &mut dx.row_mut(r)[off..off + w],
            );
            off += w;
        }
    }
    for (s, ln) in norms.iter().enumerate() {
        grads.accumulate(ln.gain, &dgains[s]);
        grads.accumulate(ln.bias, &dbiases[s]);
    }
    dx
}

/// Independent layer norm per field slice of width `k` (LN_EMB).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayerNorm {
    pub fields: Vec<LayerNorm>,
}

impl FieldLayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, field_count: usize, k: usize, eps: f64) -> Self {
        FieldLayerNorm {
            fields: (0..field_count)
                .map(|f| LayerNorm::new(store, &format!("{name}.f{f}"), k, eps))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.fields.iter().map(|l| l.width).sum()
    }

    pub fn forward(&self, values: Values<'_>, x: &Matrix) -> Result<(Matrix, LnCache)> {
        if x.cols() != self.width() {
            return Err(Error::Config(format!(
                "LN_EMB expects width {} (f·k), got {}",
                self.width(),
                x.cols()
            )));
        }
        Ok(segmented_forward(&self.fields, values, x))
    }

    pub fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, cache: &LnCache, dy: &Matrix) -> Matrix {
        segmented_backward(&self.fields, values, grads, cache, dy)
    }

    pub fn param_count(&self) -> usize {
        self.fields.iter().map(LayerNorm::param_count).sum()
    }
}

/// Per-field layer norm of a single embedding vector with plain gain/bias
/// arrays of shape `f×k` (row per field).
pub fn ln_emb(v_emb: &[f64], k: usize, gains: &[f64], biases: &[f64], eps: f64) -> Result<Vec<f64>> {
    if k == 0 || v_emb.len() % k != 0 {
        return Err(Error::Config(format!(
            "embedding width {} is not a multiple of k={k}",
            v_emb.len()
        )));
    }
    if gains.len() != v_emb.len() || biases.len() != v_emb.len() {
        return Err(Error::shape("ln_emb", "gain/bias arrays must be f·k long"));
    }
    let mut out = Vec::with_capacity(v_emb.len());
    for f in 0..v_emb.len() / k {
        let r = f * k..(f + 1) * k;
        out.extend(layer_norm(&v_emb[r.clone()], &gains[r.clone()], &biases[r], eps)?);
    }
    Ok(out)
}

/// What follows the weight multiply in a normalized hidden layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputNorm {
    LayerNorm(LayerNorm),
    /// Normalization removed; the LN bias is kept as a plain bias.
    Bias(ParamId),
}

/// `ReLU(LN(W·x))` (LN_HID). With [`OutputNorm::Bias`] this is the plain
/// `ReLU(W·x + b)` layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnHid {
    pub weight: Affine,
    pub norm: OutputNorm,
}

#[derive(Debug, Clone)]
pub struct LnHidCache {
    pub ln: Option<LnCache>,
    /// Input to the ReLU.
    pub pre: Matrix,
}

impl LnHid {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        normalize: bool,
        eps: f64,
    ) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        let w = store.add(format!("{name}.weight"), (out_dim, in_dim), normal_init(rng, out_dim * in_dim, std));
        let norm = if normalize {
            OutputNorm::LayerNorm(LayerNorm::new(store, &format!("{name}.ln"), out_dim, eps))
        } else {
            OutputNorm::Bias(store.add(format!("{name}.bias"), (out_dim, 1), vec![0.0; out_dim]))
        };
        LnHid {
            weight: Affine {
                weight: w,
                bias: None,
                in_dim,
                out_dim,
            },
            norm,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.out_dim
    }

    pub fn forward(&self, values: Values<'_>, x: &Matrix) -> (Matrix, LnHidCache) {
        let (pre, ln) = match self.norm {
            OutputNorm::LayerNorm(ln) => {
                let wx = self.weight.forward(values, x);
                let (y, c) = ln.forward(values, &wx);
                (y, Some(c))
            }
            OutputNorm::Bias(b) => {
                let layer = Affine {
                    bias: Some(b),
                    ..self.weight
                };
                (layer.forward(values, x), None)
            }
        };
        (relu_matrix(&pre), LnHidCache { ln, pre })
    }

    pub fn backward(
        &self,
        values: Values<'_>,
        grads: &mut Grads<'_>,
        x: &Matrix,
        cache: &LnHidCache,
        mut dy: Matrix,
        need_input_grad: bool,
    ) -> Option<Matrix> {
        relu_backward_in_place(&cache.pre, &mut dy);
        let (layer, d_wx) = match (self.norm, &cache.ln) {
            (OutputNorm::LayerNorm(ln), Some(c)) => (self.weight, ln.backward(values, grads, c, &dy)),
            (OutputNorm::Bias(b), _) => (
                Affine {
                    bias: Some(b),
                    ..self.weight
                },
                dy,
            ),
            _ => unreachable!("cache does not match layer"),
        };
        if need_input_grad {
            Some(layer.backward(values, grads, x, &d_wx))
        } else {
            layer.backward_params(grads, x, &d_wx);
            None
        }
    }

    pub fn fold_pattern(cache: &LnHidCache, state: &mut u64) {
        fold_relu_pattern(&cache.pre, state);
    }

    pub fn param_count(&self) -> usize {
        self.weight.param_count()
            + match self.norm {
                OutputNorm::LayerNorm(ln) => ln.param_count(),
                OutputNorm::Bias(_) => self.weight.out_dim,
            }
    }
}

/// Instance-guided mask: `W_d2 · ReLU(W_d1 · v_emb + β_d1) + β_d2`.
///
/// The aggregation layer width is `t = r·z`; the output is affine (no
/// output activation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskUnit {
    pub aggregation: Affine,
    pub projection: Affine,
}

#[derive(Debug, Clone)]
pub struct MaskCache {
    pub hidden_pre: Matrix,
    pub hidden: Matrix,
}

impl MaskUnit {
    /// Weights `N(0, 1/fan_in)`, `β_d1 = 0`, `β_d2 = projection_bias`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        reduction_ratio: usize,
        projection_bias: f64,
    ) -> Self {
        let t = reduction_ratio * output_dim;
        let w1 = store.add(
            format!("{name}.agg.weight"),
            (t, input_dim),
            normal_init(rng, t * input_dim, 1.0 / (input_dim as f64).sqrt()),
        );
        let b1 = store.add(format!("{name}.agg.bias"), (t, 1), vec![0.0; t]);
        let w2 = store.add(
            format!("{name}.proj.weight"),
            (output_dim, t),
            normal_init(rng, output_dim * t, 1.0 / (t as f64).sqrt()),
        );
        let b2 = store.add(format!("{name}.proj.bias"), (output_dim, 1), vec![projection_bias; output_dim]);
        MaskUnit {
            aggregation: Affine {
                weight: w1,
                bias: Some(b1),
                in_dim: input_dim,
                out_dim: t,
            },
            projection: Affine {
                weight: w2,
                bias: Some(b2),
                in_dim: t,
                out_dim: output_dim,
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.aggregation.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.projection.out_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.aggregation.out_dim
    }

    pub fn forward(&self, values: Values<'_>, v_emb: &Matrix) -> (Matrix, MaskCache) {
        let hidden_pre = self.aggregation.forward(values, v_emb);
        let hidden = relu_matrix(&hidden_pre);
        let mask = self.projection.forward(values, &hidden);
        (mask, MaskCache { hidden_pre, hidden })
    }

    /// Returns `∂L/∂v_emb` contributed through this mask.
    pub fn backward(
        &self,
        values: Values<'_>,
        grads: &mut Grads<'_>,
        v_emb: &Matrix,
        cache: &MaskCache,
        d_mask: &Matrix,
    ) -> Matrix {
        let mut d_hidden = self.projection.backward(values, grads, &cache.hidden, d_mask);
        relu_backward_in_place(&cache.hidden_pre, &mut d_hidden);
        self.aggregation.backward(values, grads, v_emb, &d_hidden)
    }

    pub fn fold_pattern(cache: &MaskCache, state: &mut u64) {
        fold_relu_pattern(&cache.hidden_pre, state);
    }

    pub fn param_count(&self) -> usize {
        self.aggregation.param_count() + self.projection.param_count()
    }
}

/// Closed-form parameter count of a mask unit with input width `m`, output
/// width `z` and reduction ratio `r`.
pub fn mask_unit_param_count(m: usize, z: usize, r: usize) -> usize {
    let t = r * z;
    t * m + t + z * t + z
}

/// Element-wise product.
pub fn apply_mask(mask: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if mask.len() != target.len() {
        return Err(Error::shape(
            "apply_mask",
            format!("mask has {} entries, target has {}", mask.len(), target.len()),
        ));
    }
    Ok(mask.iter().zip(target).map(|(a, b)| a * b).collect())
}

pub(crate) fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.as_slice().len(), b.as_slice().len());
    let mut out = a.clone();
    for (o, v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o *= v;
    }
    out
}
