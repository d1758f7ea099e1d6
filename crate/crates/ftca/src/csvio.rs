//! CSV ingestion and export: comma separated, header row, `.` decimals.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ftca_core::data::{DomainDataset, FeatureSchema};
use ftca_core::Matrix;

use crate::error::{FtcaError, Result};

/// A loaded dataset plus anything skipped on the way in.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub dataset: DomainDataset,
    pub warnings: Vec<String>,
}

/// How strictly label columns of the schema are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    /// Every schema label must be a header column.
    Required,
    /// Labels missing from the header are dropped from the schema.
    IfPresent,
}

pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Loaded> {
    load_csv_with(path, schema, LabelPolicy::Required)
}

pub fn load_csv_with(path: &Path, schema: &FeatureSchema, labels: LabelPolicy) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| FtcaError::file(path, e))?;
    read_csv(file, schema, labels)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema, labels: LabelPolicy) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);

    let mut feature_idx = Vec::with_capacity(schema.feature_count());
    for name in schema.feature_names() {
        feature_idx.push(find(name).ok_or_else(|| ftca_core::Error::Schema(name.clone()))?);
    }
    let mut label_names = Vec::new();
    let mut label_idx = Vec::new();
    for name in schema.label_names() {
        match (find(name), labels) {
            (Some(j), _) => {
                label_names.push(name.clone());
                label_idx.push(j);
            }
            (None, LabelPolicy::Required) => {
                return Err(ftca_core::Error::Schema(name.clone()).into())
            }
            (None, LabelPolicy::IfPresent) => {}
        }
    }
    let mut warnings = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if !feature_idx.contains(&j) && !label_idx.contains(&j) {
            let w = format!("ignoring column '{h}'");
            log::warn!("{w}");
            warnings.push(w);
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| -> Result<f64> {
            let raw = rec.get(j).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| FtcaError::Parse {
                row: r + 1,
                column: header[j].clone(),
                value: raw.to_string(),
            })
        };
        for &j in &feature_idx {
            xs.push(cell(j)?);
        }
        for &j in &label_idx {
            ys.push(cell(j)?);
        }
        n += 1;
    }
    let schema = schema.with_labels(label_names.clone())?;
    let features = Matrix::from_vec(n, feature_idx.len(), xs)?;
    let labels = if label_idx.is_empty() {
        None
    } else {
        Some(Matrix::from_vec(n, label_idx.len(), ys)?)
    };
    Ok(Loaded {
        dataset: DomainDataset::new(schema, features, labels)?,
        warnings,
    })
}

/// Writes features then labels under the schema names. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv_to<W: Write>(writer: W, ds: &DomainDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.schema().all_names())?;
    let data = ds.combined();
    for row in data.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, ds: &DomainDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| FtcaError::file(path, e))?;
    write_csv_to(std::io::BufWriter::new(file), ds)
}

/// Writes a bare matrix under the given column names.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(|e| FtcaError::file(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(names)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
