//! Row-major dense tensor with the handful of matrix kernels the layers need.
//!
//! All arithmetic runs in f64. The matmul kernels parallelize over output
//! rows; every output element is produced by a fixed-order accumulation, so
//! results are bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Structure(format!(
                "tensor data length {} does not match shape {:?} (needs {})",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar_fill(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if self.data.len() != expected {
            return Err(Error::Structure(format!(
                "cannot reshape {:?} ({} values) into {:?}",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row view of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Rounds every value through f32. Parameters are kept on the f32 grid so
    /// the 32-bit checkpoint format is lossless and round-trips bitwise.
    pub fn snap_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

const PAR_ROW_THRESHOLD: usize = 1 << 16;

/// C = A (m x k) * B (k x n).
pub fn matmul_nn(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Tensor {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = Tensor::zeros(&[m, n]);
    let a_data = a.data();
    let b_data = b.data();
    let kernel = |(i, c_row): (usize, &mut [f64])| {
        let a_row = &a_data[i * k..(i + 1) * k];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == 0.0 {
                continue;
            }
            let b_row = &b_data[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ik * bv;
            }
        }
    };
    if m * k * n >= PAR_ROW_THRESHOLD {
        c.data_mut().par_chunks_mut(n).enumerate().for_each(kernel);
    } else {
        c.data_mut().chunks_mut(n).enumerate().for_each(kernel);
    }
    c
}

/// C = A^T (m x k) * B (k x n), where A is stored (k x m).
pub fn matmul_tn(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Tensor {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = Tensor::zeros(&[m, n]);
    let a_data = a.data();
    let b_data = b.data();
    let kernel = |(i, c_row): (usize, &mut [f64])| {
        for kk in 0..k {
            let a_ki = a_data[kk * m + i];
            if a_ki == 0.0 {
                continue;
            }
            let b_row = &b_data[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ki * bv;
            }
        }
    };
    if m * k * n >= PAR_ROW_THRESHOLD {
        c.data_mut().par_chunks_mut(n).enumerate().for_each(kernel);
    } else {
        c.data_mut().chunks_mut(n).enumerate().for_each(kernel);
    }
    c
}

/// C = A (m x k) * B^T (k x n), where B is stored (n x k).
pub fn matmul_nt(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Tensor {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = Tensor::zeros(&[m, n]);
    let a_data = a.data();
    let b_data = b.data();
    let kernel = |(i, c_row): (usize, &mut [f64])| {
        let a_row = &a_data[i * k..(i + 1) * k];
        for (j, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b_data[j * k..(j + 1) * k];
            *cv = dot(a_row, b_row);
        }
    };
    if m * k * n >= PAR_ROW_THRESHOLD {
        c.data_mut().par_chunks_mut(n).enumerate().for_each(kernel);
    } else {
        c.data_mut().chunks_mut(n).enumerate().for_each(kernel);
    }
    c
}

/// Fixed-order four-lane dot product; deterministic and vectorizable.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let ai = &a[i * 4..i * 4 + 4];
        let bi = &b[i * 4..i * 4 + 4];
        acc[0] += ai[0] * bi[0];
        acc[1] += ai[1] * bi[1];
        acc[2] += ai[2] * bi[2];
        acc[3] += ai[3] * bi[3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_nn_matches_hand_computation() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul_nn(&a, &b, 2, 2, 2);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 4], (0..12).map(|v| v as f64 * 0.5).collect()).unwrap();
        // A^T B with A stored (3 x 2): result (2 x 4)
        let c = matmul_tn(&a, &b, 2, 3, 4);
        let mut expect = [0.0; 8];
        for i in 0..2 {
            for j in 0..4 {
                for kk in 0..3 {
                    expect[i * 4 + j] += a.data()[kk * 2 + i] * b.data()[kk * 4 + j];
                }
            }
        }
        assert_eq!(c.data(), &expect[..]);

        // A B^T with B stored (4 x 3): result (2 x 4) from A (2 x 3)
        let a2 = Tensor::from_vec(&[2, 3], vec![1.0, -1.0, 2.0, 0.5, 3.0, -2.0]).unwrap();
        let b2 = Tensor::from_vec(&[4, 3], (0..12).map(|v| v as f64 - 5.0).collect()).unwrap();
        let c2 = matmul_nt(&a2, &b2, 2, 3, 4);
        let mut expect2 = vec![0.0; 8];
        for i in 0..2 {
            for j in 0..4 {
                for kk in 0..3 {
                    expect2[i * 4 + j] += a2.data()[i * 3 + kk] * b2.data()[j * 3 + kk];
                }
            }
        }
        for (got, want) in c2.data().iter().zip(&expect2) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn snap_f32_is_idempotent() {
        let mut t = Tensor::from_vec(&[3], vec![0.1, -2.7, 1.0 / 3.0]).unwrap();
        t.snap_f32();
        let once = t.clone();
        t.snap_f32();
        assert_eq!(t, once);
    }
}
