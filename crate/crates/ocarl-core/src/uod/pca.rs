//! Principal component analysis via a streamed covariance matrix and a
//! cyclic Jacobi eigendecomposition.
//!
//! The patch matrices here are at most a few hundred columns, where Jacobi
//! iteration is accurate, simple, and plenty fast; it also keeps the core
//! crate free of a linear-algebra dependency.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Streams x and xx^T sums; the covariance is assembled at `finish`.
pub struct CovarianceAccum {
    dim: usize,
    n: u64,
    sum: Vec<f64>,
    /// Upper triangle of the second-moment matrix, row-major packed.
    scatter: Vec<f64>,
}

impl CovarianceAccum {
    pub fn new(dim: usize) -> Self {
        CovarianceAccum {
            dim,
            n: 0,
            sum: alloc::vec![0.0; dim],
            scatter: alloc::vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.n += 1;
        let mut at = 0;
        for i in 0..self.dim {
            self.sum[i] += x[i];
            let xi = x[i];
            for &xj in &x[i..] {
                self.scatter[at] += xi * xj;
                at += 1;
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Mean vector and full covariance matrix (row-major, `dim x dim`).
    pub fn finish(self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.n == 0 {
            return Err(Error::argument("covariance needs at least one sample"));
        }
        let n = self.n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let mut cov = alloc::vec![0.0; self.dim * self.dim];
        let mut at = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.scatter[at] / n - mean[i] * mean[j];
                cov[i * self.dim + j] = v;
                cov[j * self.dim + i] = v;
                at += 1;
            }
        }
        Ok((mean, cov))
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (descending) and the matching eigenvectors as rows
/// of a `dim x dim` row-major matrix. Each eigenvector's largest-magnitude
/// coordinate is made positive so the decomposition has one canonical sign.
pub fn symmetric_eigen(mut a: Vec<f64>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), dim * dim, "matrix must be square");
    // Rows of w accumulate the transposed rotation product, i.e. the
    // eigenvectors themselves.
    let mut w = alloc::vec![0.0; dim * dim];
    for i in 0..dim {
        w[i * dim + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let tol = 1e-14 * frob;
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..dim {
            for j in i + 1..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if apq.abs() <= tol / dim as f64 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of the symmetric matrix.
                for i in 0..dim {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i * dim + p];
                    let aiq = a[i * dim + q];
                    a[i * dim + p] = c * aip - s * aiq;
                    a[p * dim + i] = a[i * dim + p];
                    a[i * dim + q] = s * aip + c * aiq;
                    a[q * dim + i] = a[i * dim + q];
                }
                a[p * dim + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q * dim + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p * dim + q] = 0.0;
                a[q * dim + p] = 0.0;
                // Apply the same rotation to the eigenvector rows.
                for i in 0..dim {
                    let wp = w[p * dim + i];
                    let wq = w[q * dim + i];
                    w[p * dim + i] = c * wp - s * wq;
                    w[q * dim + i] = s * wp + c * wq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        a[j * dim + j]
            .partial_cmp(&a[i * dim + i])
            .expect("eigenvalues are finite")
            .then(i.cmp(&j))
    });
    let mut values = Vec::with_capacity(dim);
    let mut vectors = alloc::vec![0.0; dim * dim];
    for (row, &src) in order.iter().enumerate() {
        values.push(a[src * dim + src]);
        let dst = &mut vectors[row * dim..(row + 1) * dim];
        dst.copy_from_slice(&w[src * dim..(src + 1) * dim]);
        let mut lead = 0;
        for (i, v) in dst.iter().enumerate() {
            if v.abs() > dst[lead].abs() {
                lead = i;
            }
        }
        if dst[lead] < 0.0 {
            for v in dst.iter_mut() {
                *v = -*v;
            }
        }
    }
    (values, vectors)
}

/// A fitted PCA projection onto the top `d` principal directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// `d x dim` row-major; rows are orthonormal principal directions in
    /// descending eigenvalue order.
    basis: Vec<f64>,
    dim: usize,
    d: usize,
}

impl Pca {
    /// Fits from a finished covariance accumulation.
    pub fn fit(accum: CovarianceAccum, d: usize) -> Result<Pca> {
        let dim = accum.dim;
        if d == 0 || d > dim {
            return Err(Error::argument(alloc::format!(
                "latent dimension {d} must be in 1..={dim}"
            )));
        }
        let (mean, cov) = accum.finish()?;
        let (_values, vectors) = symmetric_eigen(cov, dim);
        let basis = vectors[..d * dim].to_vec();
        Ok(Pca { mean, basis, dim, d })
    }

    pub fn from_parts(mean: Vec<f64>, basis: Vec<f64>, d: usize) -> Result<Pca> {
        let dim = mean.len();
        if basis.len() != d * dim {
            return Err(Error::dimension("projection basis has wrong size"));
        }
        Ok(Pca { mean, basis, dim, d })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn latent_dim(&self) -> usize {
        self.d
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Projects one centered sample onto the principal directions.
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.d);
        for (k, slot) in out.iter_mut().enumerate() {
            let row = &self.basis[k * self.dim..(k + 1) * self.dim];
            let mut acc = 0.0;
            for i in 0..self.dim {
                acc += row[i] * (x[i] - self.mean[i]);
            }
            *slot = acc;
        }
    }

    /// Largest deviation of basis rows from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.d {
            for j in i..self.d {
                let ri = &self.basis[i * self.dim..(i + 1) * self.dim];
                let rj = &self.basis[j * self.dim..(j + 1) * self.dim];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}
