//! Tabular data synthesis at the source node.
//!
//! Two synthesizers share the [`GeneratorModel`] surface: a small fully
//! connected GAN trained on the adversarial value function, and a Gaussian
//! baseline that keeps per-column moments and a correlation factor. Either
//! way the model generates feature *and* label columns, and only generator
//! state is kept; the discriminator is dropped once training ends.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DomainDataset, FeatureSchema, NormMethod, NormalizationStats};
use crate::linalg::cholesky;
use crate::mlp::{generator_gradient, mlp_gradient, Activation, LossKind, MlpParams};
use crate::{Error, Matrix, Result};

/// Fraction of the identity mixed into the empirical correlation matrix
/// before it is factored.
pub const CORRELATION_SHRINKAGE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub learning_rate: f64,
    pub d_steps_per_g_step: usize,
    pub seed: u64,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            epochs: 300,
            batch_size: 64,
            noise_dim: 16,
            learning_rate: 5e-3,
            d_steps_per_g_step: 1,
            seed: 0,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
        }
    }
}

impl GanTrainConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0
            || self.batch_size == 0
            || self.noise_dim == 0
            || self.d_steps_per_g_step == 0
        {
            return Err(Error::config(
                "epochs, batch_size, noise_dim and d_steps_per_g_step must be positive",
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size > n {
            return Err(Error::config(format!(
                "batch size {} exceeds the {n} training rows",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GeneratorKind {
    Gan,
    Statistical,
}

impl GeneratorKind {
    pub fn tag(self) -> &'static str {
        match self {
            GeneratorKind::Gan => "gan",
            GeneratorKind::Statistical => "statistical",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "gan" => Some(GeneratorKind::Gan),
            "statistical" => Some(GeneratorKind::Statistical),
            _ => None,
        }
    }
}

/// Generator network plus the min-max stats its `[-1, 1]` outputs are decoded with.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GanGenerator {
    pub norm_stats: NormalizationStats,
    pub noise_dim: usize,
    pub mlp: MlpParams,
}

/// Gaussian synthesizer: `mean + std ∘ (L z)` with `L Lᵀ` the shrunk correlation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StatisticalGenerator {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Lower-triangular factor of the regularized correlation matrix.
    pub correlation_factor: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GeneratorBody {
    Gan(GanGenerator),
    Statistical(StatisticalGenerator),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorModel {
    pub schema: FeatureSchema,
    pub body: GeneratorBody,
}

impl GeneratorModel {
    pub fn kind(&self) -> GeneratorKind {
        match self.body {
            GeneratorBody::Gan(_) => GeneratorKind::Gan,
            GeneratorBody::Statistical(_) => GeneratorKind::Statistical,
        }
    }

    /// Feature plus label columns produced per sample.
    pub fn output_width(&self) -> usize {
        self.schema.feature_count() + self.schema.label_count()
    }

    /// Checks that the body is consistent with the schema width.
    pub fn validate(&self) -> Result<()> {
        let width = self.output_width();
        match &self.body {
            GeneratorBody::Gan(g) => {
                if g.mlp.output_dim() != width || g.norm_stats.columns.len() != width {
                    return Err(Error::Schema(format!(
                        "generator emits {} columns with {} normalized, schema has {width}",
                        g.mlp.output_dim(),
                        g.norm_stats.columns.len()
                    )));
                }
                if g.mlp.input_dim() != g.noise_dim {
                    return Err(Error::shape("generator input width differs from noise_dim"));
                }
            }
            GeneratorBody::Statistical(s) => {
                if s.means.len() != width
                    || s.stds.len() != width
                    || s.correlation_factor.shape() != (width, width)
                {
                    return Err(Error::Schema(format!(
                        "statistical parameters do not cover {width} columns"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn column_names(schema: &FeatureSchema) -> Vec<String> {
    schema.all_names()
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect::<Vec<f64>>();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Trains a GAN on every column of `data` (features and labels).
pub fn train_gan(data: &DomainDataset, cfg: &GanTrainConfig) -> Result<GeneratorModel> {
    let n = data.n_rows();
    cfg.validate(n)?;
    let schema = data.schema().clone();
    let combined = data.combined();
    let width = combined.cols();
    let names = column_names(&schema);
    let stats = NormalizationStats::fit_matrix(&names, &combined, NormMethod::MinMax)?;
    // [0, 1] → [-1, 1] to match the tanh output layer
    let real_all = stats.apply_matrix(&combined)?.map(|v| 2.0 * v - 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g_sizes = vec![cfg.noise_dim];
    g_sizes.extend_from_slice(&cfg.generator_hidden);
    g_sizes.push(width);
    let mut d_sizes = vec![width];
    d_sizes.extend_from_slice(&cfg.discriminator_hidden);
    d_sizes.push(1);
    let mut gen = MlpParams::random(&g_sizes, Activation::Relu, Activation::Tanh, &mut rng)?;
    let mut disc = MlpParams::random(&d_sizes, Activation::Relu, Activation::Sigmoid, &mut rng)?;

    let mut order: Vec<usize> = (0..n).collect();
    let batches_per_epoch = n / cfg.batch_size;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut d_steps = 0;
        for b in 0..batches_per_epoch {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let real = real_all.select_rows(idx);
            let z = standard_normal_matrix(&mut rng, cfg.batch_size, cfg.noise_dim);
            let fake = gen.forward(&z)?;
            let (loss_real, mut grads) = mlp_gradient(&disc, &real, LossKind::BceReal, None)?;
            let (loss_fake, grads_fake) = mlp_gradient(&disc, &fake, LossKind::BceFake, None)?;
            let d_loss = loss_real + loss_fake;
            if !d_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: d_loss,
                });
            }
            for (g, f) in grads.weights.iter_mut().zip(&grads_fake.weights) {
                *g = g.add(f)?;
            }
            for (g, f) in grads.biases.iter_mut().zip(&grads_fake.biases) {
                g.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
            disc.sgd_step(&grads, cfg.learning_rate);

            d_steps += 1;
            if d_steps % cfg.d_steps_per_g_step == 0 {
                let z = standard_normal_matrix(&mut rng, cfg.batch_size, cfg.noise_dim);
                let (g_loss, g_grads) = generator_gradient(&gen, &disc, &z)?;
                if !g_loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        loss: g_loss,
                    });
                }
                gen.sgd_step(&g_grads, cfg.learning_rate);
            }
        }
        if !gen.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
    }

    Ok(GeneratorModel {
        schema,
        body: GeneratorBody::Gan(GanGenerator {
            norm_stats: stats,
            noise_dim: cfg.noise_dim,
            mlp: gen,
        }),
    })
}

/// Fits the Gaussian baseline synthesizer on every column of `data`.
pub fn fit_statistical(data: &DomainDataset) -> Result<GeneratorModel> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::domain(
            "statistical synthesizer needs at least 2 rows",
        ));
    }
    let x = data.combined();
    let width = x.cols();
    let mut means = Vec::with_capacity(width);
    let mut stds = Vec::with_capacity(width);
    for j in 0..width {
        let col = x.column(j);
        if col.iter().all(|v| *v == col[0]) {
            means.push(col[0]);
            stds.push(0.0);
            continue;
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means.push(mean);
        stds.push(libm::sqrt(var));
    }

    let mut corr = Matrix::identity(width);
    for i in 0..width {
        for j in (i + 1)..width {
            if stds[i] == 0.0 || stds[j] == 0.0 {
                continue;
            }
            let mut cov = 0.0;
            for r in x.row_iter() {
                cov += (r[i] - means[i]) * (r[j] - means[j]);
            }
            let c = (cov / n as f64 / (stds[i] * stds[j])).clamp(-1.0, 1.0);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let shrunk = regularized_correlation(&corr);
    let factor = cholesky(&shrunk)?;
    Ok(GeneratorModel {
        schema: data.schema().clone(),
        body: GeneratorBody::Statistical(StatisticalGenerator {
            means,
            stds,
            correlation_factor: factor,
        }),
    })
}

/// `(1 − s)·R + s·I` with `s` = [`CORRELATION_SHRINKAGE`].
pub fn regularized_correlation(corr: &Matrix) -> Matrix {
    let mut r = corr.scale(1.0 - CORRELATION_SHRINKAGE);
    r.add_diagonal(CORRELATION_SHRINKAGE);
    r
}

/// Draws `n` rows in the original data scale; a pure function of `(model, n, seed)`.
pub fn sample(model: &GeneratorModel, n: usize, seed: u64) -> Result<DomainDataset> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combined = match &model.body {
        GeneratorBody::Gan(g) => {
            let z = standard_normal_matrix(&mut rng, n, g.noise_dim);
            let out = g.mlp.forward(&z)?.map(|v| 0.5 * (v + 1.0));
            g.norm_stats.invert_matrix(&out)?
        }
        GeneratorBody::Statistical(s) => {
            let width = s.means.len();
            let z = standard_normal_matrix(&mut rng, n, width);
            let mut out = Matrix::zeros(n, width);
            for i in 0..n {
                let zi = z.row(i);
                for j in 0..width {
                    let corr = zi[..=j]
                        .iter()
                        .enumerate()
                        .fold(0.0, |acc, (k, z)| acc + s.correlation_factor[(j, k)] * z);
                    out[(i, j)] = if s.stds[j] == 0.0 {
                        s.means[j]
                    } else {
                        s.means[j] + s.stds[j] * corr
                    };
                }
            }
            out
        }
    };
    DomainDataset::from_combined(model.schema.clone(), &combined)
}
