//! Kernels, the Gram/coefficient/centering matrices, and MMD estimators.
//!
//! With the stacked sample matrix `K` (source block first), the squared
//! maximum mean discrepancy between the two samples is `tr(K L)`, where `L`
//! weights same-domain pairs by `1/n²` and cross-domain pairs by `-1/(n_s n_t)`.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{dot, squared_distance};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::config(format!(
                "rbf gamma must be positive, got {gamma}"
            )));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    /// RBF with `gamma = 1/d`.
    pub fn rbf_default(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / dim.max(1) as f64,
        }
    }

    /// RBF with `gamma = 1 / median(‖xᵢ - xⱼ‖²)` over the pooled rows.
    pub fn rbf_median(xs: &Matrix, xt: &Matrix) -> Result<Self> {
        let pooled = xs.vstack(xt)?;
        let mut d2 = Vec::new();
        for i in 0..pooled.rows() {
            for j in (i + 1)..pooled.rows() {
                d2.push(squared_distance(pooled.row(i), pooled.row(j)));
            }
        }
        d2.retain(|v| *v > 0.0);
        if d2.is_empty() {
            return Ok(Self::rbf_default(pooled.cols()));
        }
        d2.sort_by(f64::total_cmp);
        let mid = d2.len() / 2;
        let median = if d2.len() % 2 == 0 {
            0.5 * (d2[mid - 1] + d2[mid])
        } else {
            d2[mid]
        };
        Self::rbf(1.0 / median)
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Rbf { gamma } => libm::exp(-gamma * squared_distance(x, y)),
    })
}

/// Gram matrix over the stacked rows `[Xs; Xt]`.
pub fn gram_matrix(spec: &KernelSpec, xs: &Matrix, xt: &Matrix) -> Result<Matrix> {
    let x = xs.vstack(xt)?;
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(spec, x.row(i), x.row(j))?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

pub fn coefficient_matrix(n_s: usize, n_t: usize) -> Result<Matrix> {
    if n_s == 0 || n_t == 0 {
        return Err(Error::domain(
            "coefficient matrix needs n_s >= 1 and n_t >= 1",
        ));
    }
    let n = n_s + n_t;
    let ss = 1.0 / (n_s as f64 * n_s as f64);
    let tt = 1.0 / (n_t as f64 * n_t as f64);
    let st = -1.0 / (n_s as f64 * n_t as f64);
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] = match (i < n_s, j < n_s) {
                (true, true) => ss,
                (false, false) => tt,
                _ => st,
            };
        }
    }
    Ok(l)
}

/// `I_n − (1/n) 1 1ᵀ`.
pub fn centering_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::domain("centering matrix needs n >= 1"));
    }
    let mut h = Matrix::filled(n, n, -1.0 / n as f64);
    h.add_diagonal(1.0);
    Ok(h)
}

/// `tr(K L)`.
pub fn mmd_kernel_form(k: &Matrix, l: &Matrix) -> Result<f64> {
    if !k.is_square() || k.shape() != l.shape() {
        return Err(Error::shape(format!(
            "tr(KL) needs equal square matrices, got {}x{} and {}x{}",
            k.rows(),
            k.cols(),
            l.rows(),
            l.cols()
        )));
    }
    let n = k.rows();
    let mut tr = 0.0;
    for i in 0..n {
        // (K L)_ii = Σ_j K_ij L_ji
        for j in 0..n {
            tr += k[(i, j)] * l[(j, i)];
        }
    }
    Ok(tr)
}

/// Kernel MMD of two samples: builds `K` and `L` and returns `tr(KL)`.
pub fn mmd_kernel(spec: &KernelSpec, xs: &Matrix, xt: &Matrix) -> Result<f64> {
    let k = gram_matrix(spec, xs, xt)?;
    let l = coefficient_matrix(xs.rows(), xt.rows())?;
    mmd_kernel_form(&k, &l)
}

/// Squared distance between the mapped means `Wᵀ mean(Xs)` and `Wᵀ mean(Xt)`.
pub fn mmd_mapped_form(w: &Matrix, xs: &Matrix, xt: &Matrix) -> Result<f64> {
    if xs.cols() != xt.cols() || w.rows() != xs.cols() {
        return Err(Error::shape(format!(
            "mapping is {}x{} but samples have {} and {} columns",
            w.rows(),
            w.cols(),
            xs.cols(),
            xt.cols()
        )));
    }
    if xs.rows() == 0 || xt.rows() == 0 {
        return Err(Error::domain("mmd needs non-empty samples"));
    }
    let gap: Vec<f64> = xs
        .column_means()
        .iter()
        .zip(xt.column_means())
        .map(|(a, b)| a - b)
        .collect();
    let mapped = w.transpose().mat_vec(&gap)?;
    Ok(dot(&mapped, &mapped))
}

/// The three `(n_s+n_t)`-square matrices of the kernel MMD formulation.
#[derive(Debug, Clone)]
pub struct MmdMatrices {
    pub k: Matrix,
    pub l: Matrix,
    pub h: Matrix,
    pub n_s: usize,
    pub n_t: usize,
}

impl MmdMatrices {
    pub fn build(spec: &KernelSpec, xs: &Matrix, xt: &Matrix) -> Result<Self> {
        let k = gram_matrix(spec, xs, xt)?;
        let l = coefficient_matrix(xs.rows(), xt.rows())?;
        let h = centering_matrix(xs.rows() + xt.rows())?;
        Ok(MmdMatrices {
            k,
            l,
            h,
            n_s: xs.rows(),
            n_t: xt.rows(),
        })
    }

    pub fn mmd(&self) -> f64 {
        mmd_kernel_form(&self.k, &self.l).expect("shapes built together")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(
            kernel_eval(&KernelSpec::Linear, &[1., 2.], &[3., 4.]).unwrap(),
            11.0
        );
        for g in [0.1, 1.0, 7.0] {
            let k = KernelSpec::rbf(g).unwrap();
            assert_eq!(kernel_eval(&k, &[1.5, -2.], &[1.5, -2.]).unwrap(), 1.0);
        }
        let k = KernelSpec::rbf(0.5).unwrap();
        let v = kernel_eval(&k, &[0.], &[2.]).unwrap();
        assert!((v - 0.135_335_283_236_612_7).abs() < 1e-15);
        assert!(kernel_eval(&KernelSpec::Linear, &[1.], &[1., 2.]).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
    }

    #[test]
    fn gram_blocks() {
        let xs = Matrix::from_rows(&[[0.0]]).unwrap();
        let xt = Matrix::from_rows(&[[2.0]]).unwrap();
        let k = gram_matrix(&KernelSpec::Linear, &xs, &xt).unwrap();
        assert_eq!(k, Matrix::from_rows(&[[0., 0.], [0., 4.]]).unwrap());

        let same = Matrix::from_rows(&[[0.3, -1.0]]).unwrap();
        for spec in [KernelSpec::Linear, KernelSpec::rbf_default(2)] {
            let k = gram_matrix(&spec, &same, &same).unwrap();
            let v = k[(0, 0)];
            assert!(k.as_slice().iter().all(|x| *x == v));
        }
        let bad = Matrix::zeros(1, 3);
        assert!(gram_matrix(&KernelSpec::Linear, &same, &bad).is_err());
    }

    #[test]
    fn coefficient_blocks() {
        assert_eq!(
            coefficient_matrix(1, 1).unwrap(),
            Matrix::from_rows(&[[1., -1.], [-1., 1.]]).unwrap()
        );
        let l = coefficient_matrix(2, 1).unwrap();
        let expect =
            Matrix::from_rows(&[[0.25, 0.25, -0.5], [0.25, 0.25, -0.5], [-0.5, -0.5, 1.0]])
                .unwrap();
        assert_eq!(l, expect);
        assert!(coefficient_matrix(0, 3).is_err());
        assert!(coefficient_matrix(3, 0).is_err());
    }

    #[test]
    fn centering_small() {
        assert_eq!(
            centering_matrix(2).unwrap(),
            Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]).unwrap()
        );
        assert_eq!(
            centering_matrix(1).unwrap(),
            Matrix::from_rows(&[[0.0]]).unwrap()
        );
        assert!(centering_matrix(0).is_err());
    }

    #[test]
    fn mmd_forms() {
        let one = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(mmd_kernel(&KernelSpec::Linear, &one, &one).unwrap(), 0.0);
        let xs = Matrix::from_rows(&[[0.0]]).unwrap();
        let xt = Matrix::from_rows(&[[2.0]]).unwrap();
        assert!((mmd_kernel(&KernelSpec::Linear, &xs, &xt).unwrap() - 4.0).abs() < 1e-15);

        let xs = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        let xt = Matrix::from_rows(&[[1.0, 1.0], [5.0, -1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(
            mmd_mapped_form(&Matrix::zeros(2, 2), &xs, &xt).unwrap(),
            0.0
        );
        assert!(
            mmd_mapped_form(&Matrix::identity(2), &xs, &xs)
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!(mmd_mapped_form(&Matrix::identity(3), &xs, &xt).is_err());
        assert!(mmd_kernel_form(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn median_heuristic_is_positive() {
        let xs = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let xt = Matrix::from_rows(&[[3.0]]).unwrap();
        match KernelSpec::rbf_median(&xs, &xt).unwrap() {
            // squared distances {1, 4, 9} → median 4
            KernelSpec::Rbf { gamma } => assert!((gamma - 0.25).abs() < 1e-15),
            _ => unreachable!(),
        }
    }
}
