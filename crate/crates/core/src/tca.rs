//! Transfer component analysis on linear features.
//!
//! With the stacked samples `X` (rows are samples), the mapping `W` minimizes
//! `tr(Wᵀ Xᵀ L X W) + λ‖W‖²_F` subject to `Wᵀ Xᵀ H X W = I_m`. Its stationary
//! points satisfy `(XᵀLX + λI) W = XᵀHX W Φ`, i.e. the columns of `W` are
//! eigenvectors of `A = (XᵀLX + λI)⁻¹ XᵀHX` with eigenvalues `μ = 1/φ`. The
//! minimum keeps the `m` largest `μ`.
//!
//! Both `n`-sized products have closed forms: `XᵀLX = δδᵀ` with `δ` the gap
//! between the source and target column means, and `XᵀHX` is the pooled
//! centered scatter. Neither `L` nor `H` is materialized here.

use alloc::format;
use alloc::vec::Vec;

use crate::data::NormalizationStats;
use crate::linalg::{canonicalize_column_signs, generalized_sym_eig};
use crate::{Error, Matrix, Result};

/// Smallest admissible `wᵀ C w` before a direction is treated as lying in the
/// null space of the scatter matrix.
pub const NULL_DIRECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcaConfig {
    /// Weight of the `‖W‖²_F` regularizer; must be positive.
    pub lambda: f64,
    /// Number of transfer components; `None` keeps all `d`.
    pub components: Option<usize>,
    /// Relative diagonal ridge tried once if `XᵀLX + λI` fails to factor.
    pub ridge_eps: f64,
}

impl Default for TcaConfig {
    fn default() -> Self {
        TcaConfig {
            lambda: 1.0,
            components: None,
            ridge_eps: 1e-9,
        }
    }
}

impl TcaConfig {
    pub fn validate(&self, dim: usize) -> Result<usize> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.ridge_eps > 0.0) {
            return Err(Error::config("ridge_eps must be > 0"));
        }
        let m = self.components.unwrap_or(dim);
        if m == 0 || m > dim {
            return Err(Error::config(format!(
                "component count {m} must lie in 1..={dim}"
            )));
        }
        Ok(m)
    }
}

/// The `d x d` matrices of the trace problem.
#[derive(Debug, Clone)]
pub struct TcaProblem {
    /// `Xᵀ L X = δ δᵀ`.
    pub mmd: Matrix,
    /// `Xᵀ H X`.
    pub scatter: Matrix,
    pub n_s: usize,
    pub n_t: usize,
}

impl TcaProblem {
    pub fn new(xs: &Matrix, xt: &Matrix) -> Result<Self> {
        if xs.cols() != xt.cols() {
            return Err(Error::shape(format!(
                "source has {} features, target has {}",
                xs.cols(),
                xt.cols()
            )));
        }
        if xs.rows() == 0 || xt.rows() == 0 {
            return Err(Error::domain("both domains need at least one row"));
        }
        let d = xs.cols();
        let ms = xs.column_means();
        let mt = xt.column_means();
        let gap: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
        let mut mmd = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                mmd[(i, j)] = gap[i] * gap[j];
            }
        }

        let n = (xs.rows() + xt.rows()) as f64;
        let pooled: Vec<f64> = ms
            .iter()
            .zip(&mt)
            .map(|(a, b)| (a * xs.rows() as f64 + b * xt.rows() as f64) / n)
            .collect();
        let mut scatter = Matrix::zeros(d, d);
        let mut centered = alloc::vec![0.0; d];
        for row in xs.row_iter().chain(xt.row_iter()) {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&pooled)) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                for j in i..d {
                    scatter[(i, j)] += ci * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                scatter[(i, j)] = scatter[(j, i)];
            }
        }
        Ok(TcaProblem {
            mmd,
            scatter,
            n_s: xs.rows(),
            n_t: xt.rows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.scatter.rows()
    }

    /// `XᵀLX + λI`.
    pub fn regularized_mmd(&self, lambda: f64) -> Matrix {
        let mut b = self.mmd.clone();
        b.add_diagonal(lambda);
        b
    }

    /// `tr(Wᵀ XᵀLX W) + λ‖W‖²_F`.
    pub fn objective(&self, w: &Matrix, lambda: f64) -> Result<f64> {
        let bw = self.mmd.matmul(w)?;
        Ok(w.t_matmul(&bw)?.trace() + lambda * w.frobenius_sq())
    }

    /// `Wᵀ XᵀHX W`, the scatter of the mapped samples.
    pub fn mapped_scatter(&self, w: &Matrix) -> Result<Matrix> {
        let cw = self.scatter.matmul(w)?;
        w.t_matmul(&cw)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcaMapping {
    /// `d x m` adaptation matrix; columns ordered by descending eigenvalue.
    pub w: Matrix,
    /// Eigenvalues of `A` for the retained columns, descending.
    pub eigenvalues: Vec<f64>,
    pub n_s: usize,
    pub n_t: usize,
    /// Stats the inputs were normalized with, when known.
    pub norm_stats: Option<NormalizationStats>,
}

impl TcaMapping {
    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn components(&self) -> usize {
        self.w.cols()
    }

    /// Lagrange multipliers `φᵢ = 1/μᵢ`.
    pub fn multipliers(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|mu| 1.0 / mu).collect()
    }
}

/// Fits the adaptation matrix on normalized source and target features.
pub fn fit_tca(xs: &Matrix, xt: &Matrix, cfg: &TcaConfig) -> Result<TcaMapping> {
    let problem = TcaProblem::new(xs, xt)?;
    let m = cfg.validate(problem.dim())?;
    let b = problem.regularized_mmd(cfg.lambda);
    let eig = generalized_sym_eig(&b, &problem.scatter, cfg.ridge_eps)?;

    let d = problem.dim();
    let mut w = Matrix::zeros(d, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for k in 0..m {
        let mut col = eig.vectors.column(k);
        let cw = problem.scatter.mat_vec(&col)?;
        let q = crate::linalg::dot(&col, &cw);
        if !(q >= NULL_DIRECTION_TOL) {
            return Err(Error::NullDirection { value: q });
        }
        let s = 1.0 / libm::sqrt(q);
        col.iter_mut().for_each(|v| *v *= s);
        w.set_column(k, &col);
        eigenvalues.push(eig.values[k]);
    }
    canonicalize_column_signs(&mut w);
    Ok(TcaMapping {
        w,
        eigenvalues,
        n_s: problem.n_s,
        n_t: problem.n_t,
        norm_stats: None,
    })
}

/// `X · W`.
pub fn transform(map: &TcaMapping, x: &Matrix) -> Result<Matrix> {
    if x.cols() != map.input_dim() {
        return Err(Error::shape(format!(
            "mapping expects {} features, got {}",
            map.input_dim(),
            x.cols()
        )));
    }
    x.matmul(&map.w)
}

/// Largest entry of `|Wᵀ XᵀHX W − I_m|` on the given samples.
pub fn constraint_residual(map: &TcaMapping, xs: &Matrix, xt: &Matrix) -> Result<f64> {
    let problem = TcaProblem::new(xs, xt)?;
    if problem.dim() != map.input_dim() {
        return Err(Error::shape(format!(
            "mapping expects {} features, samples have {}",
            map.input_dim(),
            problem.dim()
        )));
    }
    let s = problem.mapped_scatter(&map.w)?;
    Ok(s.max_abs_diff(&Matrix::identity(map.components())))
}
