use super::matrix::{accumulate_outer, matmul, matmul_transposed, Matrix};
use super::params::{Grads, ParamId, Values};
use crate::error::{Error, Result};

/// `y = W·x + b` for a single instance.
pub fn dense_affine(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_affine(w, Some(b), x.len())?;
    let y = matmul_transposed(&Matrix::row_vector(x), w.as_slice(), w.rows());
    Ok(y.into_vec().into_iter().zip(b).map(|(v, bi)| v + bi).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

/// Gradients of `y = W·x + b` given `∂L/∂y`.
pub fn dense_affine_backward(w: &Matrix, x: &[f64], dy: &[f64]) -> Result<AffineGrad> {
    check_affine(w, None, x.len())?;
    if dy.len() != w.rows() {
        return Err(Error::shape(
            "dense_affine",
            format!("upstream gradient has {} entries, W has {} rows", dy.len(), w.rows()),
        ));
    }
    let dy_m = Matrix::row_vector(dy);
    let mut weight = Matrix::zeros(w.rows(), w.cols());
    accumulate_outer(&dy_m, &Matrix::row_vector(x), weight.as_mut_slice());
    let input = matmul(&dy_m, w.as_slice(), w.cols()).into_vec();
    Ok(AffineGrad {
        weight,
        bias: dy.to_vec(),
        input,
    })
}

fn check_affine(w: &Matrix, b: Option<&[f64]>, x_len: usize) -> Result<()> {
    if w.cols() != x_len {
        return Err(Error::shape(
            "dense_affine",
            format!("W is {}x{} but x has length {x_len}", w.rows(), w.cols()),
        ));
    }
    if let Some(b) = b {
        if b.len() != w.rows() {
            return Err(Error::shape(
                "dense_affine",
                format!("W is {}x{} but b has length {}", w.rows(), w.cols(), b.len()),
            ));
        }
    }
    Ok(())
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub(crate) fn relu_matrix(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Masks `dy` in place by the positive part of the pre-activation `x`.
pub(crate) fn relu_backward_in_place(x: &Matrix, dy: &mut Matrix) {
    for (g, &v) in dy.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Folds the sign pattern of a ReLU pre-activation into `state`.
///
/// Finite-difference checks compare these fingerprints at perturbed points
/// to detect coordinates whose perturbation crosses a kink.
pub(crate) fn fold_relu_pattern(x: &Matrix, state: &mut u64) {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    for &v in x.as_slice() {
        *state ^= u64::from(v > 0.0);
        *state = state.wrapping_mul(PRIME);
    }
}

/// Logistic function evaluated on the branch that never overflows.
#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn sigmoid_derivative(s: f64) -> f64 {
    let p = sigmoid(s);
    p * (1.0 - p)
}

/// Fully connected layer bound to parameters in a store. The bias is optional
/// because the MaskBlock feed-forward layer has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn forward(&self, values: Values<'_>, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols(), self.in_dim);
        let mut y = matmul_transposed(x, values.get(self.weight), self.out_dim);
        if let Some(b) = self.bias {
            let b = values.get(b);
            for r in 0..y.rows() {
                for (v, bi) in y.row_mut(r).iter_mut().zip(b) {
                    *v += bi;
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, x: &Matrix, dy: &Matrix) -> Matrix {
        accumulate_outer(dy, x, grads.get_mut(self.weight));
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for row in dy.iter_rows() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        matmul(dy, values.get(self.weight), self.in_dim)
    }

    /// Like [`Affine::backward`] but skips the input gradient.
    pub fn backward_params(&self, grads: &mut Grads<'_>, x: &Matrix, dy: &Matrix) {
        accumulate_outer(dy, x, grads.get_mut(self.weight));
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for row in dy.iter_rows() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + if self.bias.is_some() { self.out_dim } else { 0 }
    }
}
