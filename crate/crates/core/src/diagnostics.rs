//! Correlation diagnostics for spotting labels that are unlikely to transfer,
//! plus the two-sample Kolmogorov-Smirnov statistic.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::DomainDataset;
use crate::{Error, Matrix, Result};

/// Labels scoring below this are flagged as likely negative transfer.
pub const NEGATIVE_TRANSFER_THRESHOLD: f64 = 0.3;

/// Pearson correlations over every feature and label column.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PearsonMatrix {
    pub names: Vec<String>,
    pub values: Matrix,
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub constant: Vec<bool>,
}

impl PearsonMatrix {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Reorders rows and columns by the given name order.
    pub fn reordered(&self, order: &[usize]) -> PearsonMatrix {
        let mut values = Matrix::zeros(order.len(), order.len());
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                values[(a, b)] = self.values[(i, j)];
            }
        }
        PearsonMatrix {
            names: order.iter().map(|&i| self.names[i].clone()).collect(),
            values,
            constant: order.iter().map(|&i| self.constant[i]).collect(),
        }
    }
}

fn centered(col: &[f64]) -> (Vec<f64>, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let norm = libm::sqrt(c.iter().map(|v| v * v).sum::<f64>());
    (c, norm)
}

fn correlation(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> f64 {
    let r = crate::linalg::dot(&a.0, &b.0) / (a.1 * b.1);
    r.clamp(-1.0, 1.0)
}

pub fn pearson_matrix(ds: &DomainDataset) -> Result<PearsonMatrix> {
    if ds.n_rows() < 2 {
        return Err(Error::domain("correlations need at least two rows"));
    }
    let data = ds.combined();
    let cols: Vec<(Vec<f64>, f64)> = (0..data.cols())
        .map(|j| centered(&data.column(j)))
        .collect();
    let constant: Vec<bool> = cols.iter().map(|c| c.1 == 0.0).collect();
    let p = cols.len();
    let mut values = Matrix::identity(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let r = if constant[i] || constant[j] {
                0.0
            } else {
                correlation(&cols[i], &cols[j])
            };
            values[(i, j)] = r;
            values[(j, i)] = r;
        }
    }
    Ok(PearsonMatrix {
        names: ds.schema().all_names(),
        values,
        constant,
    })
}

/// Largest absolute correlation between a label and any feature.
pub fn negative_transfer_score(ds: &DomainDataset, label: &str) -> Result<f64> {
    let y = ds.label_column(label)?;
    if y.len() < 2 {
        return Err(Error::domain("correlations need at least two rows"));
    }
    let yc = centered(&y);
    if yc.1 == 0.0 {
        return Err(Error::UndefinedScore(format!(
            "label '{label}' is constant"
        )));
    }
    let x = ds.features();
    let mut best = 0.0f64;
    for j in 0..x.cols() {
        let xc = centered(&x.column(j));
        if xc.1 > 0.0 {
            best = best.max(correlation(&yc, &xc).abs());
        }
    }
    Ok(best)
}

/// Diagnostic ordering: features by descending strongest label correlation,
/// then labels by descending score. Indices refer to `pearson_matrix` order.
pub fn diagnostic_order(pm: &PearsonMatrix, n_features: usize) -> Vec<usize> {
    let p = pm.names.len();
    let strength = |i: usize, others: core::ops::Range<usize>| {
        others
            .map(|j| pm.values[(i, j)].abs())
            .fold(0.0f64, f64::max)
    };
    let mut features: Vec<(usize, f64)> = (0..n_features)
        .map(|i| (i, strength(i, n_features..p)))
        .collect();
    let mut labels: Vec<(usize, f64)> = (n_features..p)
        .map(|i| (i, strength(i, 0..n_features)))
        .collect();
    let by_score = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    features.sort_by(by_score);
    labels.sort_by(by_score);
    features.iter().chain(&labels).map(|(i, _)| *i).collect()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("ks statistic needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}
