//! Synthetic VNF profiling data with a controllable source/target shift.
//!
//! Every row is driven by two latent load factors (traffic rate and packet
//! size). The six observed measurements are noisy linear views of them, and
//! each resource label is a fixed function of the observed measurements plus
//! Gaussian noise. Labels are computed from the *final* target features, so
//! `P(Y | X)` is the same in both domains and only the feature distribution
//! moves.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DomainDataset, FeatureSchema, DEFAULT_FEATURES, DEFAULT_LABELS};
use crate::{Error, Matrix, Result};

/// Loadings of the six named measurements on the two latent factors.
const LOADINGS: [[f64; 6]; 2] = [
    [0.8, 0.5, 0.4, 0.9, 0.6, 0.7],
    [0.3, 0.7, -0.3, 0.2, -0.5, 0.4],
];

const FEATURE_NOISE: f64 = 0.3;

const MIR: usize = 3;
const IN_RX: usize = 4;
const OUT_TX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LabelRule {
    Linear,
    /// Full slope below zero, a third of it above.
    Piecewise,
    /// `tanh` of the linear score.
    Saturating,
}

impl LabelRule {
    pub fn tag(self) -> &'static str {
        match self {
            LabelRule::Linear => "linear",
            LabelRule::Piecewise => "piecewise",
            LabelRule::Saturating => "saturating",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "linear" => Some(LabelRule::Linear),
            "piecewise" => Some(LabelRule::Piecewise),
            "saturating" => Some(LabelRule::Saturating),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            LabelRule::Linear => z,
            LabelRule::Piecewise => {
                if z <= 0.0 {
                    z
                } else {
                    z / 3.0
                }
            }
            LabelRule::Saturating => libm::tanh(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticVnfConfig {
    pub n_source: usize,
    pub n_target: usize,
    pub feature_dim: usize,
    /// Added to every target feature after scaling. Shorter vectors are
    /// padded with zeros.
    pub shift: Vec<f64>,
    /// Multiplies every target feature. Shorter vectors are padded with ones.
    pub scale: Vec<f64>,
    pub label_rule: LabelRule,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticVnfConfig {
    fn default() -> Self {
        SyntheticVnfConfig {
            n_source: 800,
            n_target: 300,
            feature_dim: 6,
            shift: Vec::new(),
            scale: Vec::new(),
            label_rule: LabelRule::Saturating,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticVnfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::config("n_source and n_target must be positive"));
        }
        if self.feature_dim < DEFAULT_FEATURES.len() {
            return Err(Error::config(format!(
                "feature_dim must be at least {}, got {}",
                DEFAULT_FEATURES.len(),
                self.feature_dim
            )));
        }
        if self.shift.len() > self.feature_dim || self.scale.len() > self.feature_dim {
            return Err(Error::config("shift/scale vectors longer than feature_dim"));
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("shift entries must be finite"));
        }
        if self.scale.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config("scale factors must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be >= 0"));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut names: Vec<String> = DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect();
        for j in DEFAULT_FEATURES.len()..self.feature_dim {
            names.push(format!("AUX{}", j + 1));
        }
        FeatureSchema::new(names, DEFAULT_LABELS).expect("fixed names are distinct")
    }

    fn shift_at(&self, j: usize) -> f64 {
        self.shift.get(j).copied().unwrap_or(0.0)
    }

    fn scale_at(&self, j: usize) -> f64 {
        self.scale.get(j).copied().unwrap_or(1.0)
    }
}

fn loading(j: usize) -> (f64, f64) {
    if j < LOADINGS[0].len() {
        (LOADINGS[0][j], LOADINGS[1][j])
    } else {
        // auxiliary counters load weakly on both factors
        let t = j as f64;
        (0.5 * libm::cos(t), 0.5 * libm::sin(t))
    }
}

/// Linear scores of CPU, memory and link demand.
fn label_scores(x: &[f64]) -> [f64; 3] {
    [
        0.7 * x[MIR] + 0.4 * x[IN_RX],
        0.5 * x[MIR] + 0.5 * x[OUT_TX],
        0.8 * x[MIR] + 0.3 * x[OUT_TX],
    ]
}

fn draw(
    cfg: &SyntheticVnfConfig,
    n: usize,
    target: bool,
    rng: &mut ChaCha8Rng,
) -> Result<DomainDataset> {
    let d = cfg.feature_dim;
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, DEFAULT_LABELS.len());
    for i in 0..n {
        let u1: f64 = StandardNormal.sample(rng);
        let u2: f64 = StandardNormal.sample(rng);
        let row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let (a, b) = loading(j);
            let e: f64 = StandardNormal.sample(rng);
            *v = a * u1 + b * u2 + FEATURE_NOISE * e;
            if target {
                *v = *v * cfg.scale_at(j) + cfg.shift_at(j);
            }
        }
        let scores = label_scores(x.row(i));
        for (k, z) in scores.iter().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            y[(i, k)] = cfg.label_rule.apply(*z) + cfg.noise_std * e;
        }
    }
    DomainDataset::new(cfg.schema(), x, Some(y))
}

/// Draws the source and target datasets; both carry every label column.
pub fn gen_synthetic_vnf(cfg: &SyntheticVnfConfig) -> Result<(DomainDataset, DomainDataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let source = draw(cfg, cfg.n_source, false, &mut rng)?;
    let target = draw(cfg, cfg.n_target, true, &mut rng)?;
    Ok((source, target))
}

/// Shift of Euclidean norm 2 along `(2, 1, 0, …)` on the utilization
/// proxies; 800 source and 300 target rows.
pub fn covariate_shift_preset(seed: u64) -> SyntheticVnfConfig {
    let s = 2.0 / libm::sqrt(5.0);
    SyntheticVnfConfig {
        shift: vec![2.0 * s, s],
        seed,
        ..SyntheticVnfConfig::default()
    }
}

/// Same distribution in both domains.
pub fn zero_shift_preset(seed: u64) -> SyntheticVnfConfig {
    SyntheticVnfConfig {
        seed,
        ..SyntheticVnfConfig::default()
    }
}

/// Mode sizes of the three profiled deployments.
pub const MODE_ROWS: [(&str, usize); 3] = [("I", 1112), ("P", 896), ("V", 775)];

/// Named mode-to-mode tasks (`I2P`, `I2V`, `P2V`). Each pair gets its own
/// shift direction and a mild rescaling of the round-trip time.
pub fn mode_task_preset(name: &str, seed: u64) -> Result<SyntheticVnfConfig> {
    let rows = |m: &str| MODE_ROWS.iter().find(|(k, _)| *k == m).map(|(_, n)| *n);
    let (from, to) = match name.split_once('2') {
        Some((a, b)) => (a, b),
        None => return Err(Error::config(format!("unknown task preset '{name}'"))),
    };
    let (n_source, n_target) = match (rows(from), rows(to)) {
        (Some(a), Some(b)) if a != b => (a, b),
        _ => return Err(Error::config(format!("unknown task preset '{name}'"))),
    };
    let (shift, scale) = match name {
        "I2P" => (vec![1.6, 1.2], vec![1.0, 1.0, 1.2]),
        "I2V" => (vec![1.2, 1.6, 0.5], vec![1.0, 1.0, 0.8]),
        "P2V" => (vec![-1.4, 0.8], vec![1.0, 1.0, 1.1]),
        _ => return Err(Error::config(format!("unknown task preset '{name}'"))),
    };
    Ok(SyntheticVnfConfig {
        n_source,
        n_target,
        shift,
        scale,
        seed,
        ..SyntheticVnfConfig::default()
    })
}
