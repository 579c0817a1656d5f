//! Orthonormal DCT-II along the temporal (first matrix) axis.

use crate::error::{NumError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Precomputed `N × N` DCT-II matrix and its inverse (the transpose).
#[derive(Clone, Debug)]
pub struct DctBasis<S> {
    size: usize,
    forward: Tensor<S>,
    inverse: Tensor<S>,
}

impl<S: Scalar> DctBasis<S> {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(NumError::shape("DctBasis::new", "size must be positive"));
        }
        let n = size as f64;
        let forward = Tensor::from_fn([size, size], |i| {
            let (k, t) = ((i / size) as f64, (i % size) as f64);
            let c = if k == 0.0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            S::lit(c * (std::f64::consts::PI * (2.0 * t + 1.0) * k / (2.0 * n)).cos())
        });
        let inverse = forward.t();
        Ok(Self { size, forward, inverse })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn forward_matrix(&self) -> &Tensor<S> {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &Tensor<S> {
        &self.inverse
    }

    fn check(&self, shape: &[usize], op: &'static str) -> Result<()> {
        if shape.len() < 2 || shape[shape.len() - 2] != self.size {
            return Err(NumError::shape(
                op,
                format!("basis of size {} applied to {shape:?}", self.size),
            ));
        }
        Ok(())
    }

    /// Frequency coefficients of `x[.., N, d]` along its `N` axis.
    pub fn dct(&self, g: &mut Graph<S>, x: Var) -> Result<Var> {
        self.check(g.shape(x), "dct")?;
        let m = g.constant(self.forward.clone());
        g.matmul(m, x)
    }

    pub fn idct(&self, g: &mut Graph<S>, x: Var) -> Result<Var> {
        self.check(g.shape(x), "idct")?;
        let m = g.constant(self.inverse.clone());
        g.matmul(m, x)
    }

    /// Untracked forward transform of an `N × d` matrix.
    pub fn dct_tensor(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x.shape(), "dct")?;
        self.forward.matmul(x)
    }

    pub fn idct_tensor(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x.shape(), "idct")?;
        self.inverse.matmul(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_times_inverse_is_identity() {
        for n in [1, 2, 5, 16, 32] {
            let b = DctBasis::<f64>::new(n).unwrap();
            let p = b.forward_matrix().matmul(b.inverse_matrix()).unwrap();
            assert!(p.max_abs_diff(&Tensor::eye(n)) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn dc_row_is_constant() {
        let b = DctBasis::<f64>::new(8).unwrap();
        let row0 = &b.forward_matrix().data()[..8];
        assert!(row0.iter().all(|&v| (v - row0[0]).abs() < 1e-15));
    }

    #[test]
    fn size_mismatch_is_shape_error() {
        let b = DctBasis::<f64>::new(4).unwrap();
        let x = Tensor::zeros([5, 2]);
        assert!(matches!(b.dct_tensor(&x), Err(NumError::Shape { .. })));
    }

    #[test]
    fn f32_roundtrip() {
        let b = DctBasis::<f32>::new(16).unwrap();
        let x = Tensor::from_fn([16, 3], |i| (i as f32 * 0.37).sin());
        let back = b.idct_tensor(&b.dct_tensor(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-5);
    }
}
