//! Transfer task descriptions and their flat `key = value` file format.
//!
//! ```text
//! name = I2P
//! source_data = synthetic
//! target_data = synthetic
//! synthetic.preset = I2P
//! missing_labels = CPU, MEM_MB
//! generator_kind = statistical
//! generator_origin = train
//! n_generated = 2000
//! tca.lambda = 0.001
//! tca.components = 5
//! regressors = poly degree=2 alpha=1; knn k=10
//! seed = 7
//! ```
//!
//! `#` starts a comment. Data sources are `synthetic` or `csv:<path>`; the
//! generator origin is `train`, `file:<path>` or `server:<host:port>`.

use std::fmt::Write as _;
use std::path::PathBuf;

use ftca_core::data::{FeatureSchema, NormMethod};
use ftca_core::mlp::Activation;
use ftca_core::pipeline::{shift_tca_config, PipelineConfig};
use ftca_core::regress::{MlpRegressorConfig, RegressorSpec};
use ftca_core::synth::{
    covariate_shift_preset, mode_task_preset, zero_shift_preset, LabelRule, SyntheticVnfConfig,
};
use ftca_core::tabgen::{GanTrainConfig, GeneratorKind};
use ftca_core::tca::TcaConfig;

use crate::error::{FtcaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorOrigin {
    /// Train on the source data in-process.
    Train,
    File(PathBuf),
    Server(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferTaskSpec {
    pub name: String,
    pub source_data: DataSource,
    pub target_data: DataSource,
    /// Used by whichever side is `synthetic`.
    pub synthetic: SyntheticVnfConfig,
    pub schema: FeatureSchema,
    pub missing_labels: Vec<String>,
    pub generator_kind: GeneratorKind,
    pub generator_origin: GeneratorOrigin,
    pub gan: GanTrainConfig,
    pub n_generated: usize,
    pub tca: TcaConfig,
    pub normalization: NormMethod,
    pub regressors: Vec<RegressorSpec>,
    pub seed: u64,
}

impl Default for TransferTaskSpec {
    fn default() -> Self {
        TransferTaskSpec {
            name: "task".into(),
            source_data: DataSource::Synthetic,
            target_data: DataSource::Synthetic,
            synthetic: covariate_shift_preset(0),
            schema: FeatureSchema::vnf_default(),
            missing_labels: Vec::new(),
            generator_kind: GeneratorKind::Statistical,
            generator_origin: GeneratorOrigin::Train,
            gan: GanTrainConfig::default(),
            n_generated: 2000,
            tca: shift_tca_config(6),
            normalization: NormMethod::MinMax,
            regressors: vec![RegressorSpec::poly(2, 1.0), RegressorSpec::knn(10)],
            seed: 0,
        }
    }
}

impl TransferTaskSpec {
    /// Synthetic covariate-shift task over all three resource labels.
    pub fn covariate_shift(seed: u64) -> Self {
        TransferTaskSpec {
            name: "covariate-shift".into(),
            synthetic: covariate_shift_preset(seed),
            missing_labels: ftca_core::data::DEFAULT_LABELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            seed,
            ..TransferTaskSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.missing_labels.is_empty() {
            return Err(FtcaError::usage(
                "missing_labels must name at least one label",
            ));
        }
        if self.n_generated == 0 {
            return Err(FtcaError::usage("n_generated must be >= 1"));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            task_name: self.name.clone(),
            missing_labels: self.missing_labels.clone(),
            generator_kind: self.generator_kind,
            gan: self.gan.clone(),
            n_generated: self.n_generated,
            tca: self.tca,
            norm: self.normalization,
            regressors: self.regressors.clone(),
            seed: self.seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = TransferTaskSpec::default();
        let mut synthetic_seed_set = false;
        let mut features = None;
        let mut labels = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| FtcaError::Task {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let num = |what: &str| -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("{what} must be a number, got {value:?}")))
            };
            let count = |what: &str| -> Result<usize> {
                value
                    .parse::<usize>()
                    .map_err(|_| err(format!("{what} must be a count, got {value:?}")))
            };
            match key {
                "name" => spec.name = value.to_string(),
                "source_data" => spec.source_data = parse_source(value).map_err(err)?,
                "target_data" => spec.target_data = parse_source(value).map_err(err)?,
                "synthetic.preset" => {
                    let seed = spec.synthetic.seed;
                    spec.synthetic = match value {
                        "covariate-shift" => covariate_shift_preset(seed),
                        "zero-shift" => zero_shift_preset(seed),
                        other => mode_task_preset(other, seed).map_err(|e| err(e.to_string()))?,
                    };
                }
                "synthetic.n_source" => spec.synthetic.n_source = count(key)?,
                "synthetic.n_target" => spec.synthetic.n_target = count(key)?,
                "synthetic.feature_dim" => spec.synthetic.feature_dim = count(key)?,
                "synthetic.shift" => spec.synthetic.shift = parse_reals(value).map_err(err)?,
                "synthetic.scale" => spec.synthetic.scale = parse_reals(value).map_err(err)?,
                "synthetic.label_rule" => {
                    spec.synthetic.label_rule = LabelRule::from_tag(value)
                        .ok_or_else(|| err(format!("unknown label rule {value:?}")))?
                }
                "synthetic.noise_std" => spec.synthetic.noise_std = num(key)?,
                "synthetic.seed" => {
                    spec.synthetic.seed = count(key)? as u64;
                    synthetic_seed_set = true;
                }
                "schema.features" => features = Some(parse_names(value)),
                "schema.labels" => labels = Some(parse_names(value)),
                "missing_labels" => spec.missing_labels = parse_names(value),
                "generator_kind" => {
                    spec.generator_kind = GeneratorKind::from_tag(value)
                        .ok_or_else(|| err(format!("unknown generator kind {value:?}")))?
                }
                "generator_origin" => spec.generator_origin = parse_origin(value).map_err(err)?,
                "gan.epochs" => spec.gan.epochs = count(key)?,
                "gan.batch_size" => spec.gan.batch_size = count(key)?,
                "gan.noise_dim" => spec.gan.noise_dim = count(key)?,
                "gan.learning_rate" => spec.gan.learning_rate = num(key)?,
                "gan.d_steps_per_g_step" => spec.gan.d_steps_per_g_step = count(key)?,
                "n_generated" => spec.n_generated = count(key)?,
                "tca.lambda" => spec.tca.lambda = num(key)?,
                "tca.components" => {
                    spec.tca.components = if value == "all" {
                        None
                    } else {
                        Some(count(key)?)
                    }
                }
                "tca.ridge_eps" => spec.tca.ridge_eps = num(key)?,
                "normalization" => {
                    spec.normalization = NormMethod::from_tag(value)
                        .ok_or_else(|| err(format!("unknown normalization {value:?}")))?
                }
                "regressors" => spec.regressors = parse_regressors(value).map_err(err)?,
                "seed" => spec.seed = count(key)? as u64,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        if !synthetic_seed_set {
            spec.synthetic.seed = spec.seed;
        }
        if features.is_some() || labels.is_some() {
            let f = features.unwrap_or_else(|| spec.schema.feature_names().to_vec());
            let l = labels.unwrap_or_else(|| spec.schema.label_names().to_vec());
            spec.schema = FeatureSchema::new(f, l)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Writes every field; [`parse`](Self::parse) reads it back unchanged.
    pub fn to_task_file(&self) -> String {
        let mut s = String::new();
        let reals = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let src = |d: &DataSource| match d {
            DataSource::Synthetic => "synthetic".to_string(),
            DataSource::Csv(p) => format!("csv:{}", p.display()),
        };
        let syn = &self.synthetic;
        writeln!(s, "name = {}", self.name).unwrap();
        writeln!(s, "source_data = {}", src(&self.source_data)).unwrap();
        writeln!(s, "target_data = {}", src(&self.target_data)).unwrap();
        writeln!(s, "synthetic.n_source = {}", syn.n_source).unwrap();
        writeln!(s, "synthetic.n_target = {}", syn.n_target).unwrap();
        writeln!(s, "synthetic.feature_dim = {}", syn.feature_dim).unwrap();
        writeln!(s, "synthetic.shift = {}", reals(&syn.shift)).unwrap();
        writeln!(s, "synthetic.scale = {}", reals(&syn.scale)).unwrap();
        writeln!(s, "synthetic.label_rule = {}", syn.label_rule.tag()).unwrap();
        writeln!(s, "synthetic.noise_std = {}", syn.noise_std).unwrap();
        writeln!(s, "synthetic.seed = {}", syn.seed).unwrap();
        writeln!(
            s,
            "schema.features = {}",
            self.schema.feature_names().join(", ")
        )
        .unwrap();
        writeln!(
            s,
            "schema.labels = {}",
            self.schema.label_names().join(", ")
        )
        .unwrap();
        writeln!(s, "missing_labels = {}", self.missing_labels.join(", ")).unwrap();
        writeln!(s, "generator_kind = {}", self.generator_kind.tag()).unwrap();
        let origin = match &self.generator_origin {
            GeneratorOrigin::Train => "train".to_string(),
            GeneratorOrigin::File(p) => format!("file:{}", p.display()),
            GeneratorOrigin::Server(a) => format!("server:{a}"),
        };
        writeln!(s, "generator_origin = {origin}").unwrap();
        writeln!(s, "gan.epochs = {}", self.gan.epochs).unwrap();
        writeln!(s, "gan.batch_size = {}", self.gan.batch_size).unwrap();
        writeln!(s, "gan.noise_dim = {}", self.gan.noise_dim).unwrap();
        writeln!(s, "gan.learning_rate = {}", self.gan.learning_rate).unwrap();
        writeln!(
            s,
            "gan.d_steps_per_g_step = {}",
            self.gan.d_steps_per_g_step
        )
        .unwrap();
        writeln!(s, "n_generated = {}", self.n_generated).unwrap();
        writeln!(s, "tca.lambda = {}", self.tca.lambda).unwrap();
        match self.tca.components {
            Some(m) => writeln!(s, "tca.components = {m}").unwrap(),
            None => writeln!(s, "tca.components = all").unwrap(),
        }
        writeln!(s, "tca.ridge_eps = {}", self.tca.ridge_eps).unwrap();
        writeln!(s, "normalization = {}", self.normalization.tag()).unwrap();
        let regs: Vec<String> = self.regressors.iter().map(format_regressor).collect();
        writeln!(s, "regressors = {}", regs.join("; ")).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        s
    }
}

fn parse_source(v: &str) -> std::result::Result<DataSource, String> {
    if v == "synthetic" {
        Ok(DataSource::Synthetic)
    } else if let Some(p) = v.strip_prefix("csv:") {
        Ok(DataSource::Csv(PathBuf::from(p)))
    } else {
        Err(format!(
            "data source must be 'synthetic' or 'csv:<path>', got {v:?}"
        ))
    }
}

fn parse_origin(v: &str) -> std::result::Result<GeneratorOrigin, String> {
    if v == "train" {
        Ok(GeneratorOrigin::Train)
    } else if let Some(p) = v.strip_prefix("file:") {
        Ok(GeneratorOrigin::File(PathBuf::from(p)))
    } else if let Some(a) = v.strip_prefix("server:") {
        Ok(GeneratorOrigin::Server(a.to_string()))
    } else {
        Err(format!(
            "generator origin must be train, file:<path> or server:<addr>, got {v:?}"
        ))
    }
}

fn parse_names(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_reals(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("{s:?} is not a number"))
        })
        .collect()
}

/// `poly degree=2 alpha=1 standardize=true; knn k=10; mlp epochs=300 hidden=32,32`
pub fn parse_regressors(v: &str) -> std::result::Result<Vec<RegressorSpec>, String> {
    let mut out = Vec::new();
    for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let mut parts = item.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let mut spec = match kind {
            "poly" => RegressorSpec::poly(2, 1.0),
            "knn" => RegressorSpec::knn(10),
            "mlp" => RegressorSpec::mlp(),
            other => return Err(format!("unknown regressor {other:?}")),
        };
        for kv in parts {
            let (k, val) = kv
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {kv:?}"))?;
            let bad = || format!("bad value for {kind} {k}: {val:?}");
            let as_usize = || val.parse::<usize>().map_err(|_| bad());
            let as_f64 = || val.parse::<f64>().map_err(|_| bad());
            let as_bool = || val.parse::<bool>().map_err(|_| bad());
            match (&mut spec, k) {
                (RegressorSpec::Poly { degree, .. }, "degree") => *degree = as_usize()?,
                (RegressorSpec::Poly { ridge_alpha, .. }, "alpha") => *ridge_alpha = as_f64()?,
                (RegressorSpec::Poly { standardize, .. }, "standardize") => {
                    *standardize = as_bool()?
                }
                (RegressorSpec::Knn { k, .. }, "k") => *k = as_usize()?,
                (RegressorSpec::Knn { standardize, .. }, "standardize") => {
                    *standardize = as_bool()?
                }
                (RegressorSpec::Mlp(c), "epochs") => c.epochs = as_usize()?,
                (RegressorSpec::Mlp(c), "batch") => c.batch_size = as_usize()?,
                (RegressorSpec::Mlp(c), "lr") => c.learning_rate = as_f64()?,
                (RegressorSpec::Mlp(c), "seed") => {
                    c.seed = val.parse::<u64>().map_err(|_| bad())?
                }
                (RegressorSpec::Mlp(c), "activation") => {
                    c.activation = Activation::from_tag(val).ok_or_else(bad)?;
                }
                (RegressorSpec::Mlp(c), "hidden") => {
                    c.hidden = val
                        .split(',')
                        .map(|h| h.parse::<usize>().map_err(|_| bad()))
                        .collect::<std::result::Result<_, _>>()?;
                }
                _ => return Err(format!("{kind} has no parameter '{k}'")),
            }
        }
        out.push(spec);
    }
    if out.is_empty() {
        return Err("at least one regressor is required".into());
    }
    Ok(out)
}

pub fn format_regressor(r: &RegressorSpec) -> String {
    match r {
        RegressorSpec::Poly {
            degree,
            ridge_alpha,
            standardize,
        } => format!("poly degree={degree} alpha={ridge_alpha} standardize={standardize}"),
        RegressorSpec::Knn { k, standardize } => format!("knn k={k} standardize={standardize}"),
        RegressorSpec::Mlp(MlpRegressorConfig {
            hidden,
            activation,
            epochs,
            batch_size,
            learning_rate,
            seed,
        }) => {
            let h: Vec<String> = hidden.iter().map(|v| v.to_string()).collect();
            format!(
                "mlp hidden={} activation={} epochs={epochs} batch={batch_size} lr={learning_rate} seed={seed}",
                h.join(","),
                activation.tag()
            )
        }
    }
}
