//! Single-output regression backends and the MAE/RMSE/R² metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, squared_distance};
use crate::mlp::{mlp_gradient, Activation, LossKind, MlpParams};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpRegressorConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpRegressorConfig {
    fn default() -> Self {
        MlpRegressorConfig {
            hidden: vec![32],
            activation: Activation::Tanh,
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Regression backend and its hyperparameters.
///
/// `standardize` z-scores every input column with training statistics before
/// fitting; predictions always take inputs in the original scale.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RegressorSpec {
    Poly {
        degree: usize,
        ridge_alpha: f64,
        standardize: bool,
    },
    Knn {
        k: usize,
        standardize: bool,
    },
    Mlp(MlpRegressorConfig),
}

impl RegressorSpec {
    pub fn poly(degree: usize, ridge_alpha: f64) -> Self {
        RegressorSpec::Poly {
            degree,
            ridge_alpha,
            standardize: true,
        }
    }

    pub fn knn(k: usize) -> Self {
        RegressorSpec::Knn {
            k,
            standardize: true,
        }
    }

    pub fn mlp() -> Self {
        RegressorSpec::Mlp(MlpRegressorConfig::default())
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            RegressorSpec::Poly { .. } => "poly",
            RegressorSpec::Knn { .. } => "knn",
            RegressorSpec::Mlp(_) => "mlp",
        }
    }

    /// Short name used in reports, e.g. `poly`.
    pub fn name(&self) -> String {
        String::from(self.kind_tag())
    }

    fn validate(&self, n: usize, dim: usize) -> Result<()> {
        match self {
            RegressorSpec::Poly {
                degree,
                ridge_alpha,
                ..
            } => {
                if *degree == 0 {
                    return Err(Error::config("polynomial degree must be >= 1"));
                }
                if !(*ridge_alpha >= 0.0) {
                    return Err(Error::config("ridge_alpha must be >= 0"));
                }
                let terms = monomials(dim, *degree).len() + 1;
                if *ridge_alpha == 0.0 && n < terms {
                    return Err(Error::domain(format!(
                        "{n} rows cannot determine {terms} unregularized polynomial terms"
                    )));
                }
            }
            RegressorSpec::Knn { k, .. } => {
                if *k == 0 || *k > n {
                    return Err(Error::config(format!("k = {k} must lie in 1..={n}")));
                }
            }
            RegressorSpec::Mlp(cfg) => {
                if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
                    return Err(Error::config(
                        "mlp epochs, batch size and learning rate must be positive",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-column affine standardization with population statistics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Scaler {
    /// Sums run over sorted values so the result does not depend on row order.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let mut means = Vec::with_capacity(x.cols());
        let mut scales = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let mut col = x.column(j);
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / n;
            let mut dev: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            dev.sort_by(f64::total_cmp);
            let std = libm::sqrt(dev.iter().sum::<f64>() / n);
            means.push(mean);
            scales.push(if std > 0.0 { std } else { 1.0 });
        }
        Scaler { means, scales }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.scales) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Every multiset of column indices with size `1..=degree`.
fn monomials(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn extend(
        start: usize,
        dim: usize,
        left: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for j in start..dim {
            cur.push(j);
            out.push(cur.clone());
            if left > 1 {
                extend(j, dim, left - 1, cur, out);
            }
            cur.pop();
        }
    }
    extend(0, dim, degree, &mut current, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn expand(x: &Matrix, terms: &[Vec<usize>]) -> Matrix {
    let mut p = Matrix::zeros(x.rows(), terms.len() + 1);
    for i in 0..x.rows() {
        let row = x.row(i);
        let out = p.row_mut(i);
        out[0] = 1.0;
        for (t, term) in terms.iter().enumerate() {
            out[t + 1] = term.iter().map(|&j| row[j]).product();
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
enum FittedModel {
    Poly {
        scaler: Option<Scaler>,
        terms: Vec<Vec<usize>>,
        coefficients: Vec<f64>,
    },
    Knn {
        scaler: Option<Scaler>,
        x: Matrix,
        y: Vec<f64>,
        k: usize,
    },
    Mlp {
        scaler: Scaler,
        y_mean: f64,
        y_scale: f64,
        net: MlpParams,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittedRegressor {
    spec: RegressorSpec,
    input_dim: usize,
    model: FittedModel,
}

impl FittedRegressor {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Intercept followed by one coefficient per monomial (poly only), in the
    /// space the model was fitted in.
    pub fn poly_coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            FittedModel::Poly { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }

    /// Stored training rows (knn only), in the space the model was fitted in.
    pub fn knn_training_set(&self) -> Option<(&Matrix, &[f64])> {
        match &self.model {
            FittedModel::Knn { x, y, .. } => Some((x, y)),
            _ => None,
        }
    }
}

pub fn fit(spec: &RegressorSpec, x: &Matrix, y: &[f64]) -> Result<FittedRegressor> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::domain("cannot fit on zero rows"));
    }
    spec.validate(x.rows(), x.cols())?;
    let model = match spec {
        RegressorSpec::Poly {
            degree,
            ridge_alpha,
            standardize,
        } => {
            let scaler = standardize.then(|| Scaler::fit(x));
            let xs = scaler.as_ref().map_or_else(|| x.clone(), |s| s.apply(x));
            let terms = monomials(x.cols(), *degree);
            let p = expand(&xs, &terms);
            let mut a = p.t_matmul(&p)?;
            for t in 1..a.rows() {
                a[(t, t)] += ridge_alpha;
            }
            let b = p.t_matmul(&Matrix::column_vector(y))?;
            let l = cholesky(&a)?;
            let largest = (0..a.rows()).fold(0.0f64, |m, i| m.max(a[(i, i)]));
            let smallest = (0..l.rows()).fold(f64::INFINITY, |m, i| m.min(l[(i, i)] * l[(i, i)]));
            if smallest <= 1e-12 * largest {
                return Err(Error::Conditioning { pivot: smallest });
            }
            let coef = solve_lower_transpose(&l, &solve_lower(&l, &b)?)?;
            FittedModel::Poly {
                scaler,
                terms,
                coefficients: coef.into_vec(),
            }
        }
        RegressorSpec::Knn { k, standardize } => {
            let scaler = standardize.then(|| Scaler::fit(x));
            let xs = scaler.as_ref().map_or_else(|| x.clone(), |s| s.apply(x));
            FittedModel::Knn {
                scaler,
                x: xs,
                y: y.to_vec(),
                k: *k,
            }
        }
        RegressorSpec::Mlp(cfg) => fit_mlp(cfg, x, y)?,
    };
    Ok(FittedRegressor {
        spec: spec.clone(),
        input_dim: x.cols(),
        model,
    })
}

fn fit_mlp(cfg: &MlpRegressorConfig, x: &Matrix, y: &[f64]) -> Result<FittedModel> {
    let scaler = Scaler::fit(x);
    let xs = scaler.apply(x);
    let y_scaler = Scaler::fit(&Matrix::column_vector(y));
    let (y_mean, y_scale) = (y_scaler.means[0], y_scaler.scales[0]);
    let ys = Matrix::column_vector(&y.iter().map(|v| (v - y_mean) / y_scale).collect::<Vec<_>>());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![x.cols()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(1);
    let mut net = MlpParams::random(&sizes, cfg.activation, Activation::Identity, &mut rng)?;
    if y_scaler.scales[0] == 1.0 && y.iter().all(|v| *v == y_mean) {
        // nothing to learn; a zero output layer predicts the constant exactly
        let mut flat = net.flatten();
        let tail = sizes[sizes.len() - 2] + 1;
        let len = flat.len();
        flat[len - tail..].iter_mut().for_each(|v| *v = 0.0);
        net.set_flat(&flat)?;
        return Ok(FittedModel::Mlp {
            scaler,
            y_mean,
            y_scale,
            net,
        });
    }
    let n = x.rows();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = xs.select_rows(chunk);
            let yb = ys.select_rows(chunk);
            let (loss, grads) = mlp_gradient(&net, &xb, LossKind::SquaredError, Some(&yb))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            net.sgd_step(&grads, cfg.learning_rate);
        }
    }
    Ok(FittedModel::Mlp {
        scaler,
        y_mean,
        y_scale,
        net,
    })
}

pub fn predict(f: &FittedRegressor, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != f.input_dim {
        return Err(Error::shape(format!(
            "regressor expects {} inputs, got {}",
            f.input_dim,
            x.cols()
        )));
    }
    match &f.model {
        FittedModel::Poly {
            scaler,
            terms,
            coefficients,
        } => {
            let xs = scaler.as_ref().map_or_else(|| x.clone(), |s| s.apply(x));
            expand(&xs, terms).mat_vec(coefficients)
        }
        FittedModel::Knn {
            scaler,
            x: train,
            y,
            k,
        } => {
            let xs = scaler.as_ref().map_or_else(|| x.clone(), |s| s.apply(x));
            let mut scored: Vec<(f64, f64)> = Vec::with_capacity(train.rows());
            let mut out = Vec::with_capacity(xs.rows());
            for q in xs.row_iter() {
                scored.clear();
                scored.extend(
                    train
                        .row_iter()
                        .zip(y)
                        .map(|(r, &v)| (squared_distance(q, r), v)),
                );
                // ties on distance resolve by label so row order never matters
                let cmp =
                    |a: &(f64, f64), b: &(f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
                if *k < scored.len() {
                    scored.select_nth_unstable_by(*k - 1, cmp);
                }
                let nearest = &mut scored[..*k];
                nearest.sort_by(cmp);
                out.push(nearest.iter().map(|p| p.1).sum::<f64>() / *k as f64);
            }
            Ok(out)
        }
        FittedModel::Mlp {
            scaler,
            y_mean,
            y_scale,
            net,
        } => {
            let out = net.forward(&scaler.apply(x))?;
            Ok(out
                .as_slice()
                .iter()
                .map(|v| v * y_scale + y_mean)
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsTriple {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsTriple> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "{} true values but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len();
    if n < 2 {
        return Err(Error::domain("metrics need at least two samples"));
    }
    let nf = n as f64;
    let mean = y_true.iter().sum::<f64>() / nf;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::R2Undefined);
    }
    let mut abs = 0.0;
    let mut ss_res = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        abs += e.abs();
        ss_res += e * e;
    }
    Ok(MetricsTriple {
        mae: abs / nf,
        rmse: libm::sqrt(ss_res / nf),
        r2: 1.0 - ss_res / ss_tot,
    })
}
