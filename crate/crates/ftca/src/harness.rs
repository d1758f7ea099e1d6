//! Runs transfer tasks from their specs and renders the results.

use std::fmt::Write as _;

use ftca_core::data::DomainDataset;
use ftca_core::pipeline::{run_pipeline, EvaluationReport, PipelineRun, TaskReport};
use ftca_core::synth::gen_synthetic_vnf;
use ftca_core::tabgen::GeneratorModel;
use ftca_core::Matrix;

use crate::csvio::load_csv;
use crate::envelope::read_model_file;
use crate::error::{FtcaError, Result};
use crate::fednet::fetch_model;
use crate::task::{DataSource, GeneratorOrigin, TransferTaskSpec};

pub const CSV_HEADER: &str =
    "task,label,regressor,orig_mae,orig_rmse,orig_r2,ftca_mae,ftca_rmse,ftca_r2";

/// Loads or simulates the source and target datasets of a task.
pub fn load_domains(task: &TransferTaskSpec) -> Result<(DomainDataset, DomainDataset)> {
    let simulated = if matches!(task.source_data, DataSource::Synthetic)
        || matches!(task.target_data, DataSource::Synthetic)
    {
        Some(gen_synthetic_vnf(&task.synthetic)?)
    } else {
        None
    };
    let pick = |src: &DataSource, target: bool| -> Result<DomainDataset> {
        match src {
            DataSource::Csv(p) => Ok(load_csv(p, &task.schema)?.dataset),
            DataSource::Synthetic => {
                let (s, t) = simulated.as_ref().expect("simulated above");
                Ok(if target { t.clone() } else { s.clone() })
            }
        }
    };
    Ok((
        pick(&task.source_data, false)?,
        pick(&task.target_data, true)?,
    ))
}

fn obtain_generator(task: &TransferTaskSpec) -> Result<Option<GeneratorModel>> {
    Ok(match &task.generator_origin {
        GeneratorOrigin::Train => None,
        GeneratorOrigin::File(p) => Some(read_model_file(p)?),
        GeneratorOrigin::Server(addr) => Some(fetch_model(addr)?),
    })
}

/// The full run, keeping the mapping and intermediate matrices.
pub fn run_ftca_task_detailed(task: &TransferTaskSpec) -> Result<PipelineRun> {
    task.validate()?;
    let (source, target) = load_domains(task)?;
    let generator = obtain_generator(task)?;
    Ok(run_pipeline(
        &task.pipeline_config(),
        &source,
        &target,
        generator,
    )?)
}

pub fn run_ftca_task(task: &TransferTaskSpec) -> Result<EvaluationReport> {
    let run = run_ftca_task_detailed(task)?;
    Ok(EvaluationReport {
        tasks: vec![run.report],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(FtcaError::usage(format!(
                "unknown report format '{other}' (expected csv, json or markdown)"
            ))),
        }
    }
}

pub fn render_report(r: &EvaluationReport, format: &str) -> Result<Vec<u8>> {
    render_report_as(r, ReportFormat::from_tag(format)?)
}

pub fn render_report_as(r: &EvaluationReport, format: ReportFormat) -> Result<Vec<u8>> {
    Ok(match format {
        ReportFormat::Csv => render_csv(r)?,
        ReportFormat::Json => serde_json::to_vec_pretty(r)?,
        ReportFormat::Markdown => render_markdown(r).into_bytes(),
    })
}

pub fn parse_report_json(bytes: &[u8]) -> Result<EvaluationReport> {
    Ok(serde_json::from_slice(bytes)?)
}

fn render_csv(r: &EvaluationReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for t in &r.tasks {
        for row in &t.rows {
            let m = [
                row.original.mae,
                row.original.rmse,
                row.original.r2,
                row.ftca.mae,
                row.ftca.rmse,
                row.ftca.r2,
            ];
            let mut rec = vec![t.task.clone(), row.label.clone(), row.regressor.clone()];
            rec.extend(m.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| FtcaError::Io(e.into_error()))
}

fn render_markdown(r: &EvaluationReport) -> String {
    let mut s = String::new();
    for t in &r.tasks {
        task_markdown(&mut s, t);
    }
    s
}

fn task_markdown(s: &mut String, t: &TaskReport) {
    writeln!(s, "## {}\n", t.task).unwrap();
    writeln!(
        s,
        "Source rows {}, target rows {}, generated rows {} ({} generator), seed {}.",
        t.n_source,
        t.n_target,
        t.n_generated,
        t.generator_kind.tag(),
        t.seed
    )
    .unwrap();
    writeln!(
        s,
        "Mean-gap MMD {:.6} before mapping, {:.6} after; constraint residual {:.2e}.\n",
        t.mmd_before, t.mmd_after, t.constraint_residual
    )
    .unwrap();
    writeln!(s, "| | | Original | | | FTCA | | |").unwrap();
    writeln!(s, "|---|---|---|---|---|---|---|---|").unwrap();
    writeln!(
        s,
        "| Label | Regressor | MAE | RMSE | R2 | MAE | RMSE | R2 |"
    )
    .unwrap();
    for row in &t.rows {
        writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            row.label,
            row.regressor,
            row.original.mae,
            row.original.rmse,
            row.original.r2,
            row.ftca.mae,
            row.ftca.rmse,
            row.ftca.r2
        )
        .unwrap();
    }
    let flagged = t.flagged_labels();
    if !flagged.is_empty() {
        writeln!(
            s,
            "\nPossible negative transfer (weak feature correlation): {}.",
            flagged.join(", ")
        )
        .unwrap();
    }
    writeln!(s).unwrap();
}

/// Feature columns before and after mapping, for both domains.
pub struct HistogramInput<'a> {
    /// Names of the pre-mapping columns.
    pub feature_names: &'a [String],
    pub before_source: &'a Matrix,
    pub before_target: &'a Matrix,
    pub after_source: &'a Matrix,
    pub after_target: &'a Matrix,
}

fn bin_counts(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = hi - lo;
    for v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) * bins as f64)
                .floor()
                .clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        counts[b] += 1;
    }
    counts
}

/// Plot-ready CSV: `stage,feature,bin,lower,upper,source_count,target_count`.
/// Both domains share one range per column (their pooled min and max); the
/// last bin is closed on the right.
pub fn export_histograms(input: &HistogramInput<'_>, bins: usize) -> Result<Vec<u8>> {
    if bins < 2 {
        return Err(FtcaError::usage("need at least 2 bins"));
    }
    let stages = [
        ("before", input.before_source, input.before_target),
        ("after", input.after_source, input.after_target),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "stage",
        "feature",
        "bin",
        "lower",
        "upper",
        "source_count",
        "target_count",
    ])?;
    for (stage, s, t) in stages {
        if s.rows() == 0 || t.rows() == 0 || s.cols() == 0 {
            return Err(ftca_core::Error::Domain(format!("empty {stage} inputs")).into());
        }
        if s.cols() != t.cols() {
            return Err(
                ftca_core::Error::Shape(format!("{stage}: domains have different widths")).into(),
            );
        }
        for j in 0..s.cols() {
            let name = if stage == "before" {
                input
                    .feature_names
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| format!("x{}", j + 1))
            } else {
                format!("TC{}", j + 1)
            };
            let (a, b) = (s.column(j), t.column(j));
            let (lo, hi) = a
                .iter()
                .chain(&b)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(*v), hi.max(*v))
                });
            let ca = bin_counts(&a, lo, hi, bins);
            let cb = bin_counts(&b, lo, hi, bins);
            let step = (hi - lo) / bins as f64;
            for k in 0..bins {
                let lower = lo + step * k as f64;
                let upper = if k + 1 == bins {
                    hi
                } else {
                    lo + step * (k + 1) as f64
                };
                w.write_record([
                    stage.to_string(),
                    name.clone(),
                    k.to_string(),
                    lower.to_string(),
                    upper.to_string(),
                    ca[k].to_string(),
                    cb[k].to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| FtcaError::Io(e.into_error()))
}

/// Histogram input straight from a pipeline run.
pub fn run_histograms(run: &PipelineRun, names: &[String], bins: usize) -> Result<Vec<u8>> {
    export_histograms(
        &HistogramInput {
            feature_names: names,
            before_source: &run.source_normalized,
            before_target: &run.target_normalized,
            after_source: &run.source_mapped,
            after_target: &run.target_mapped,
        },
        bins,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftca_core::pipeline::ReportRow;
    use ftca_core::regress::{MetricsTriple, RegressorSpec};
    use ftca_core::tabgen::GeneratorKind;
    use ftca_core::tca::TcaConfig;

    fn report() -> EvaluationReport {
        let m = |x: f64| MetricsTriple {
            mae: x,
            rmse: x * 1.25,
            r2: 1.0 - x,
        };
        let rows = ["poly", "knn"]
            .iter()
            .enumerate()
            .map(|(i, r)| ReportRow {
                label: "CPU".into(),
                regressor: r.to_string(),
                original: m(0.3 + i as f64 * 0.1),
                ftca: m(0.1 + 1.0 / 3.0 * i as f64),
            })
            .collect();
        EvaluationReport {
            tasks: vec![TaskReport {
                task: "I2P".into(),
                seed: 1,
                generator_kind: GeneratorKind::Statistical,
                n_source: 10,
                n_target: 5,
                n_generated: 20,
                tca: TcaConfig::default(),
                regressors: vec![RegressorSpec::poly(2, 1.0), RegressorSpec::knn(3)],
                mmd_before: 0.25,
                mmd_after: 1e-9,
                constraint_residual: 1e-13,
                rows,
                diagnostics: vec![ftca_core::pipeline::LabelDiagnostic {
                    label: "CPU".into(),
                    score: Some(0.1),
                    negative_transfer: true,
                }],
            }],
        }
    }

    #[test]
    fn csv_shape() {
        let text = String::from_utf8(render_report(&report(), "csv").unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("I2P,CPU,poly,"));
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let bytes = render_report(&r, "json").unwrap();
        assert_eq!(parse_report_json(&bytes).unwrap(), r);
    }

    #[test]
    fn markdown_groups() {
        let text = String::from_utf8(render_report(&report(), "markdown").unwrap()).unwrap();
        assert!(text.contains("Original") && text.contains("FTCA"));
        assert!(text.contains("negative transfer"));
        assert!(matches!(
            render_report(&report(), "xml"),
            Err(FtcaError::Usage(_))
        ));
    }

    #[test]
    fn histogram_counts() {
        let names = vec!["a".to_string()];
        let x = Matrix::column_vector(&[0.0, 1.0]);
        let input = HistogramInput {
            feature_names: &names,
            before_source: &x,
            before_target: &x,
            after_source: &x,
            after_target: &x,
        };
        let text = String::from_utf8(export_histograms(&input, 2).unwrap()).unwrap();
        let rows: Vec<Vec<&str>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!((r[5], r[6]), ("1", "1"));
        }
        assert!(export_histograms(&input, 1).is_err());
        let empty = Matrix::zeros(0, 1);
        let bad = HistogramInput {
            before_source: &empty,
            ..input
        };
        assert!(export_histograms(&bad, 2).is_err());
    }
}
