use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ftca::csvio::{load_csv_with, write_csv, write_matrix_csv, LabelPolicy};
use ftca::envelope::{serialize_mapping, write_model_file};
use ftca::fednet::{client_timeout, fetch_envelope, serve_source, TransferLog};
use ftca::harness::{parse_report_json, render_report, run_ftca_task_detailed, run_histograms};
use ftca::task::TransferTaskSpec;
use ftca::{FtcaError, Result};
use ftca_core::data::{FeatureSchema, NormMethod, NormalizationStats};
use ftca_core::diagnostics::{
    diagnostic_order, negative_transfer_score, pearson_matrix, NEGATIVE_TRANSFER_THRESHOLD,
};
use ftca_core::kernel::mmd_mapped_form;
use ftca_core::pipeline::{describe_error, EvaluationReport};
use ftca_core::synth::{
    covariate_shift_preset, gen_synthetic_vnf, mode_task_preset, zero_shift_preset, LabelRule,
};
use ftca_core::tabgen::{fit_statistical, sample, train_gan, GanTrainConfig, GeneratorKind};
use ftca_core::tca::{constraint_residual, fit_tca, transform, TcaConfig};
use ftca_core::Matrix;

#[derive(Parser)]
#[command(
    name = "ftca",
    version,
    about = "Federated transfer component analysis for VNF profiling"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SchemaArgs {
    /// Comma-separated feature columns (default: the VNF profiling features).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Comma-separated label columns (default: CPU, MEM_MB, LINK_Mbps).
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
}

impl SchemaArgs {
    fn schema(&self) -> Result<FeatureSchema> {
        let d = FeatureSchema::vnf_default();
        let f = self
            .features
            .clone()
            .unwrap_or_else(|| d.feature_names().to_vec());
        let l = self
            .labels
            .clone()
            .unwrap_or_else(|| d.label_names().to_vec());
        Ok(FeatureSchema::new(f, l)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate source and target profiling data and write them as CSV.
    GenData {
        /// covariate-shift, zero-shift, I2P, I2V or P2V.
        #[arg(long, default_value = "covariate-shift")]
        preset: String,
        #[arg(long)]
        n_source: Option<usize>,
        #[arg(long)]
        n_target: Option<usize>,
        /// Per-feature target mean shift, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        shift: Option<Vec<f64>>,
        /// Per-feature target scale, comma separated.
        #[arg(long, value_delimiter = ',')]
        scale: Option<Vec<f64>>,
        /// linear, piecewise or saturating.
        #[arg(long)]
        rule: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value = "source.csv")]
        source_out: PathBuf,
        #[arg(long, default_value = "target.csv")]
        target_out: PathBuf,
    },
    /// Train a generator on a source CSV and write a .ftcamodel file.
    TrainGen {
        #[arg(long)]
        input: PathBuf,
        /// gan or statistical.
        #[arg(long, default_value = "gan")]
        kind: String,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value = "source.ftcamodel")]
        out: PathBuf,
    },
    /// Serve a generator model to target nodes.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long)]
        model: PathBuf,
        /// Append one JSON line per session to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fetch a generator model from a source node.
    Fetch {
        #[arg(long)]
        server: String,
        #[arg(long, default_value = "fetched.ftcamodel")]
        out: PathBuf,
        /// Also draw this many rows from the fetched model.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "generated.csv")]
        samples_out: PathBuf,
    },
    /// Fit a mapping between two CSVs and write the mapped features.
    Adapt {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        /// Number of components (default: feature count minus one).
        #[arg(long)]
        components: Option<usize>,
        /// min-max or z-score.
        #[arg(long, default_value = "min-max")]
        norm: String,
        #[arg(long, default_value = "mapping.ftcamodel")]
        mapping_out: PathBuf,
        #[arg(long, default_value = "source_mapped.csv")]
        source_out: PathBuf,
        #[arg(long, default_value = "target_mapped.csv")]
        target_out: PathBuf,
    },
    /// Run a transfer task file end to end.
    RunTask {
        #[arg(long)]
        task: PathBuf,
        /// csv, json or markdown.
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as JSON (input for `report`).
        #[arg(long)]
        json_out: Option<PathBuf>,
        /// Write before/after feature histograms as CSV.
        #[arg(long)]
        histograms: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Re-render JSON reports, merging several into one.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Correlation diagnostics and negative-transfer scores for a CSV.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
    },
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| FtcaError::File {
            path: p.display().to_string(),
            source: e,
        }),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::GenData {
            preset,
            n_source,
            n_target,
            shift,
            scale,
            rule,
            noise,
            source_out,
            target_out,
        } => {
            let mut cfg = match preset.as_str() {
                "covariate-shift" => covariate_shift_preset(seed),
                "zero-shift" => zero_shift_preset(seed),
                other => mode_task_preset(other, seed)?,
            };
            cfg.n_source = n_source.unwrap_or(cfg.n_source);
            cfg.n_target = n_target.unwrap_or(cfg.n_target);
            cfg.shift = shift.unwrap_or(cfg.shift);
            cfg.scale = scale.unwrap_or(cfg.scale);
            if let Some(r) = rule {
                cfg.label_rule = LabelRule::from_tag(&r)
                    .ok_or_else(|| FtcaError::usage(format!("unknown label rule '{r}'")))?;
            }
            cfg.noise_std = noise.unwrap_or(cfg.noise_std);
            let (s, t) = gen_synthetic_vnf(&cfg)?;
            write_csv(&source_out, &s)?;
            write_csv(&target_out, &t)?;
            eprintln!(
                "wrote {} source rows to {} and {} target rows to {}",
                s.n_rows(),
                source_out.display(),
                t.n_rows(),
                target_out.display()
            );
        }
        Command::TrainGen {
            input,
            kind,
            schema,
            epochs,
            batch_size,
            out,
        } => {
            let loaded = load_csv_with(&input, &schema.schema()?, LabelPolicy::IfPresent)?;
            let kind = GeneratorKind::from_tag(&kind)
                .ok_or_else(|| FtcaError::usage(format!("unknown generator kind '{kind}'")))?;
            let model = match kind {
                GeneratorKind::Gan => {
                    let d = GanTrainConfig::default();
                    let cfg = GanTrainConfig {
                        epochs: epochs.unwrap_or(d.epochs),
                        batch_size: batch_size.unwrap_or(d.batch_size),
                        seed,
                        ..d
                    };
                    train_gan(&loaded.dataset, &cfg)?
                }
                GeneratorKind::Statistical => fit_statistical(&loaded.dataset)?,
            };
            write_model_file(&out, &model)?;
            eprintln!("wrote {} model to {}", kind.tag(), out.display());
        }
        Command::Serve { bind, model, log } => {
            let log = Arc::new(match log {
                Some(p) => TransferLog::with_file(&p)?,
                None => TransferLog::in_memory(),
            });
            let server = serve_source(&bind, &model, log)?;
            eprintln!("serving {} on {}", model.display(), server.local_addr());
            server.wait();
        }
        Command::Fetch {
            server,
            out,
            samples,
            samples_out,
        } => {
            let bytes = fetch_envelope(&server, client_timeout())?;
            let model = ftca::envelope::deserialize_model(&bytes)?;
            std::fs::write(&out, &bytes).map_err(|e| FtcaError::File {
                path: out.display().to_string(),
                source: e,
            })?;
            eprintln!(
                "fetched {} model ({} bytes) to {}",
                model.kind().tag(),
                bytes.len(),
                out.display()
            );
            if let Some(n) = samples {
                let ds = sample(&model, n, seed)?;
                write_csv(&samples_out, &ds)?;
                eprintln!("wrote {n} generated rows to {}", samples_out.display());
            }
        }
        Command::Adapt {
            source,
            target,
            schema,
            lambda,
            components,
            norm,
            mapping_out,
            source_out,
            target_out,
        } => {
            let schema = schema.schema()?;
            let s = load_csv_with(&source, &schema, LabelPolicy::IfPresent)?.dataset;
            let t = load_csv_with(&target, &schema, LabelPolicy::IfPresent)?.dataset;
            let method = NormMethod::from_tag(&norm)
                .ok_or_else(|| FtcaError::usage(format!("unknown normalization '{norm}'")))?;
            let names = schema.feature_names().to_vec();
            let stats = NormalizationStats::fit_matrix(
                &names,
                &s.features().vstack(t.features())?,
                method,
            )?;
            let xs = stats.apply_matrix(s.features())?;
            let xt = stats.apply_matrix(t.features())?;
            let cfg = TcaConfig {
                lambda,
                components: Some(components.unwrap_or(names.len().saturating_sub(1).max(1))),
                ..TcaConfig::default()
            };
            let mut map = fit_tca(&xs, &xt, &cfg)?;
            map.norm_stats = Some(stats);
            let residual = constraint_residual(&map, &xs, &xt)?;
            let before = mmd_mapped_form(&Matrix::identity(names.len()), &xs, &xt)?;
            let after = mmd_mapped_form(&map.w, &xs, &xt)?;
            std::fs::write(&mapping_out, serialize_mapping(&map, &names))?;
            let tc: Vec<String> = (1..=map.components()).map(|k| format!("TC{k}")).collect();
            write_matrix_csv(&source_out, &tc, &transform(&map, &xs)?)?;
            write_matrix_csv(&target_out, &tc, &transform(&map, &xt)?)?;
            eprintln!("mmd {before:.6} -> {after:.6}, constraint residual {residual:.2e}");
        }
        Command::RunTask {
            task,
            format,
            out,
            json_out,
            histograms,
            bins,
        } => {
            let text = std::fs::read_to_string(&task).map_err(|e| FtcaError::File {
                path: task.display().to_string(),
                source: e,
            })?;
            let mut spec = TransferTaskSpec::parse(&text)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
                spec.synthetic.seed = s;
            }
            let run = run_ftca_task_detailed(&spec)?;
            if let Some(p) = histograms {
                let bytes = run_histograms(&run, spec.schema.feature_names(), bins)?;
                write_out(Some(&p), &bytes)?;
            }
            let report = EvaluationReport {
                tasks: vec![run.report],
            };
            if let Some(p) = json_out {
                write_out(Some(&p), &render_report(&report, "json")?)?;
            }
            write_out(out.as_deref(), &render_report(&report, &format)?)?;
        }
        Command::Report { inputs, format } => {
            let mut merged = EvaluationReport::default();
            for p in inputs {
                let bytes = std::fs::read(&p).map_err(|e| FtcaError::File {
                    path: p.display().to_string(),
                    source: e,
                })?;
                merged.tasks.extend(parse_report_json(&bytes)?.tasks);
            }
            write_out(None, &render_report(&merged, &format)?)?;
        }
        Command::Diagnose { input, schema } => {
            let ds = load_csv_with(&input, &schema.schema()?, LabelPolicy::IfPresent)?.dataset;
            let pm = pearson_matrix(&ds)?;
            let ordered = pm.reordered(&diagnostic_order(&pm, ds.schema().feature_count()));
            let mut out = String::new();
            out.push_str(&format!(",{}\n", ordered.names.join(",")));
            for (i, name) in ordered.names.iter().enumerate() {
                let row: Vec<String> = (0..ordered.names.len())
                    .map(|j| format!("{:.4}", ordered.values[(i, j)]))
                    .collect();
                out.push_str(&format!("{name},{}\n", row.join(",")));
            }
            out.push('\n');
            for label in ds.schema().label_names() {
                match negative_transfer_score(&ds, label) {
                    Ok(s) if s < NEGATIVE_TRANSFER_THRESHOLD => out.push_str(&format!(
                        "{label}: score {s:.4} (possible negative transfer)\n"
                    )),
                    Ok(s) => out.push_str(&format!("{label}: score {s:.4}\n")),
                    Err(e) => out.push_str(&format!("{label}: {e}\n")),
                }
            }
            for (name, constant) in ordered.names.iter().zip(&ordered.constant) {
                if *constant {
                    out.push_str(&format!("{name}: constant column\n"));
                }
            }
            write_out(None, out.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                FtcaError::Core(c) => eprintln!("error: {}", describe_error(c)),
                other => eprintln!("error: {other}"),
            }
            ExitCode::FAILURE
        }
    }
}
