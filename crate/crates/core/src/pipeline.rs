//! One transfer task end to end, on in-memory datasets.
//!
//! The FTCA arm trains (or receives) a generator on the source side, samples
//! it at the target, normalizes the generated and target features on pooled
//! statistics, fits the mapping, and trains every regressor on the mapped
//! generated rows. The Original arm trains on the raw source rows with the
//! same kind of pooled normalization. Both arms are scored on the held-out
//! target labels, which never enter a training path.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{DomainDataset, NormMethod, NormalizationStats};
use crate::diagnostics::{negative_transfer_score, NEGATIVE_TRANSFER_THRESHOLD};
use crate::kernel::mmd_mapped_form;
use crate::regress::{fit, metrics, predict, MetricsTriple, RegressorSpec};
use crate::tabgen::{
    fit_statistical, sample, train_gan, GanTrainConfig, GeneratorKind, GeneratorModel,
};
use crate::tca::{constraint_residual, fit_tca, transform, TcaConfig, TcaMapping};
use crate::{Error, Matrix, Result};

/// Largest tolerated `|Wᵀ XᵀHX W − I|` entry before the mapping is rejected.
pub const CONSTRAINT_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub task_name: String,
    pub missing_labels: Vec<String>,
    pub generator_kind: GeneratorKind,
    pub gan: GanTrainConfig,
    pub n_generated: usize,
    pub tca: TcaConfig,
    pub norm: NormMethod,
    pub regressors: Vec<RegressorSpec>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            task_name: String::from("task"),
            missing_labels: Vec::new(),
            generator_kind: GeneratorKind::Statistical,
            gan: GanTrainConfig::default(),
            n_generated: 2000,
            tca: TcaConfig::default(),
            norm: NormMethod::MinMax,
            regressors: alloc::vec![RegressorSpec::poly(2, 1.0), RegressorSpec::knn(10)],
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.missing_labels.is_empty() {
            return Err(Error::config("at least one missing label is required"));
        }
        if self.n_generated == 0 {
            return Err(Error::config("n_generated must be >= 1"));
        }
        if self.regressors.is_empty() {
            return Err(Error::config("at least one regressor is required"));
        }
        for (i, r) in self.regressors.iter().enumerate() {
            if self.regressors[..i].iter().any(|o| o.name() == r.name()) {
                return Err(Error::config(format!(
                    "regressor '{}' is listed twice; report rows would be ambiguous",
                    r.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReportRow {
    pub label: String,
    pub regressor: String,
    pub original: MetricsTriple,
    pub ftca: MetricsTriple,
}

impl ReportRow {
    /// `1 − ftca_rmse / orig_rmse`.
    pub fn rmse_reduction(&self) -> f64 {
        1.0 - self.ftca.rmse / self.original.rmse
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelDiagnostic {
    pub label: String,
    /// `None` when the generated label column is constant.
    pub score: Option<f64>,
    pub negative_transfer: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskReport {
    pub task: String,
    pub seed: u64,
    pub generator_kind: GeneratorKind,
    pub n_source: usize,
    pub n_target: usize,
    pub n_generated: usize,
    pub tca: TcaConfig,
    pub regressors: Vec<RegressorSpec>,
    /// Mean-gap MMD of the normalized features under the identity mapping.
    pub mmd_before: f64,
    /// The same quantity under the fitted mapping.
    pub mmd_after: f64,
    pub constraint_residual: f64,
    pub rows: Vec<ReportRow>,
    pub diagnostics: Vec<LabelDiagnostic>,
}

impl TaskReport {
    pub fn row(&self, label: &str, regressor: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.regressor == regressor)
    }

    pub fn flagged_labels(&self) -> Vec<&str> {
        self.diagnostics
            .iter()
            .filter(|d| d.negative_transfer)
            .map(|d| d.label.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    pub tasks: Vec<TaskReport>,
}

impl EvaluationReport {
    pub fn row_count(&self) -> usize {
        self.tasks.iter().map(|t| t.rows.len()).sum()
    }
}

/// Everything a run produced, for callers that need more than the metrics.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: TaskReport,
    pub generator: GeneratorModel,
    pub mapping: TcaMapping,
    /// Normalized generated-source and target features, before mapping.
    pub source_normalized: Matrix,
    pub target_normalized: Matrix,
    pub source_mapped: Matrix,
    pub target_mapped: Matrix,
}

fn pooled_normalize(
    names: &[String],
    a: &Matrix,
    b: &Matrix,
    method: NormMethod,
) -> Result<(NormalizationStats, Matrix, Matrix)> {
    let stats = NormalizationStats::fit_matrix(names, &a.vstack(b)?, method)?;
    let na = stats.apply_matrix(a)?;
    let nb = stats.apply_matrix(b)?;
    Ok((stats, na, nb))
}

fn score(
    spec: &RegressorSpec,
    x_train: &Matrix,
    y_train: &[f64],
    x_test: &Matrix,
    y_test: &[f64],
) -> Result<MetricsTriple> {
    let f = fit(spec, x_train, y_train)?;
    metrics(y_test, &predict(&f, x_test)?)
}

/// Runs both arms. `generator` skips source-side training when the model was
/// obtained elsewhere.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    generator: Option<GeneratorModel>,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if source.schema().feature_names() != target.schema().feature_names() {
        return Err(Error::Schema(String::from(
            "source and target feature columns differ",
        )));
    }
    let names = source.schema().feature_names().to_vec();
    let mut truth = Vec::with_capacity(cfg.missing_labels.len());
    for label in &cfg.missing_labels {
        truth.push(
            target
                .label_column(label)
                .map_err(|e| e.at("target-labels"))?,
        );
    }
    // the only target view used for fitting anything
    let target_x = target.without_labels().features().clone();

    let generator = match generator {
        Some(g) => g,
        None => match cfg.generator_kind {
            GeneratorKind::Gan => {
                let gan = GanTrainConfig {
                    seed: cfg.seed,
                    ..cfg.gan.clone()
                };
                train_gan(source, &gan)
            }
            GeneratorKind::Statistical => fit_statistical(source),
        }
        .map_err(|e| e.at("generator"))?,
    };
    let generated = sample(&generator, cfg.n_generated, cfg.seed.wrapping_add(1))
        .map_err(|e| e.at("sample"))?;
    if generated.schema().feature_names() != names.as_slice() {
        return Err(Error::Schema(String::from(
            "generator feature columns differ from the target's",
        ))
        .at("sample"));
    }

    let (stats, gen_n, tgt_n) = pooled_normalize(&names, generated.features(), &target_x, cfg.norm)
        .map_err(|e| e.at("normalize"))?;
    let mut mapping = fit_tca(&gen_n, &tgt_n, &cfg.tca).map_err(|e| e.at("tca"))?;
    mapping.norm_stats = Some(stats);
    let residual = constraint_residual(&mapping, &gen_n, &tgt_n).map_err(|e| e.at("tca"))?;
    if !(residual <= CONSTRAINT_LIMIT) {
        return Err(Error::ConstraintViolated {
            residual,
            limit: CONSTRAINT_LIMIT,
        }
        .at("tca"));
    }
    let gen_m = transform(&mapping, &gen_n).map_err(|e| e.at("transform"))?;
    let tgt_m = transform(&mapping, &tgt_n).map_err(|e| e.at("transform"))?;
    let identity = Matrix::identity(names.len());
    let mmd_before = mmd_mapped_form(&identity, &gen_n, &tgt_n).map_err(|e| e.at("mmd"))?;
    let mmd_after = mmd_mapped_form(&mapping.w, &gen_n, &tgt_n).map_err(|e| e.at("mmd"))?;

    let (_, src_o, tgt_o) = pooled_normalize(&names, source.features(), &target_x, cfg.norm)
        .map_err(|e| e.at("original-arm"))?;

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (label, y_true) in cfg.missing_labels.iter().zip(&truth) {
        let y_src = source
            .label_column(label)
            .map_err(|e| e.at("original-arm"))?;
        let y_gen = generated.label_column(label).map_err(|e| e.at("sample"))?;
        for spec in &cfg.regressors {
            let original =
                score(spec, &src_o, &y_src, &tgt_o, y_true).map_err(|e| e.at("original-arm"))?;
            let ftca = score(spec, &gen_m, &y_gen, &tgt_m, y_true).map_err(|e| e.at("ftca-arm"))?;
            rows.push(ReportRow {
                label: label.clone(),
                regressor: spec.name(),
                original,
                ftca,
            });
        }
        let s = match negative_transfer_score(&generated, label) {
            Ok(v) => Some(v),
            Err(Error::UndefinedScore(_)) => None,
            Err(e) => return Err(e.at("diagnose")),
        };
        diagnostics.push(LabelDiagnostic {
            label: label.clone(),
            score: s,
            negative_transfer: s.is_none_or(|v| v < NEGATIVE_TRANSFER_THRESHOLD),
        });
    }

    let report = TaskReport {
        task: cfg.task_name.clone(),
        seed: cfg.seed,
        generator_kind: generator.kind(),
        n_source: source.n_rows(),
        n_target: target.n_rows(),
        n_generated: cfg.n_generated,
        tca: cfg.tca,
        regressors: cfg.regressors.clone(),
        mmd_before,
        mmd_after,
        constraint_residual: residual,
        rows,
        diagnostics,
    };
    Ok(PipelineRun {
        report,
        generator,
        mapping,
        source_normalized: gen_n,
        target_normalized: tgt_n,
        source_mapped: gen_m,
        target_mapped: tgt_m,
    })
}

/// Preset used for covariate-shift tasks: drop the one direction along which
/// the domain means differ and keep the rest with a light regularizer.
pub fn shift_tca_config(dim: usize) -> TcaConfig {
    TcaConfig {
        lambda: 1e-3,
        components: Some(dim.saturating_sub(1).max(1)),
        ..TcaConfig::default()
    }
}

pub fn describe_error(e: &Error) -> String {
    match e {
        Error::Stage { stage, source } => format!("{stage}: {}", describe_error(source)),
        other => other.to_string(),
    }
}
