//! Tabular datasets, their schema, and per-column normalization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Feature column names of the default VNF profiling schema.
pub const DEFAULT_FEATURES: [&str; 6] = ["CPUUTP", "MEMUTP", "RTT", "MIR", "In_RX", "Out_Tx"];
/// Resource label column names of the default VNF profiling schema.
pub const DEFAULT_LABELS: [&str; 3] = ["CPU", "MEM_MB", "LINK_Mbps"];

/// Ordered feature and label column names.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSchema {
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

impl FeatureSchema {
    pub fn new<F, L>(features: F, labels: L) -> Result<Self>
    where
        F: IntoIterator,
        F::Item: Into<String>,
        L: IntoIterator,
        L::Item: Into<String>,
    {
        let feature_names: Vec<String> = features.into_iter().map(Into::into).collect();
        let label_names: Vec<String> = labels.into_iter().map(Into::into).collect();
        if feature_names.is_empty() {
            return Err(Error::Schema("schema needs at least one feature".into()));
        }
        let mut seen: Vec<&str> = Vec::new();
        for name in feature_names.iter().chain(&label_names) {
            if seen.contains(&name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {name}")));
            }
            seen.push(name);
        }
        Ok(FeatureSchema {
            feature_names,
            label_names,
        })
    }

    /// CPUUTP, MEMUTP, RTT, MIR, In_RX, Out_Tx → CPU, MEM_MB, LINK_Mbps.
    pub fn vnf_default() -> Self {
        Self::new(DEFAULT_FEATURES, DEFAULT_LABELS).expect("default schema is valid")
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    /// Features followed by labels.
    pub fn all_names(&self) -> Vec<String> {
        self.feature_names
            .iter()
            .chain(&self.label_names)
            .cloned()
            .collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|n| n == name)
    }

    /// Same features, with only the given labels (in the given order).
    pub fn with_labels<L>(&self, labels: L) -> Result<Self>
    where
        L: IntoIterator,
        L::Item: Into<String>,
    {
        Self::new(self.feature_names.clone(), labels)
    }
}

/// A feature matrix with optional label columns.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainDataset {
    schema: FeatureSchema,
    features: Matrix,
    labels: Option<Matrix>,
}

impl DomainDataset {
    pub fn new(schema: FeatureSchema, features: Matrix, labels: Option<Matrix>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::domain("dataset needs at least one row"));
        }
        if features.cols() != schema.feature_count() {
            return Err(Error::Schema(format!(
                "{} feature columns but schema names {}",
                features.cols(),
                schema.feature_count()
            )));
        }
        if let Some(l) = &labels {
            if l.rows() != features.rows() {
                return Err(Error::shape(format!(
                    "{} label rows for {} feature rows",
                    l.rows(),
                    features.rows()
                )));
            }
            if l.cols() != schema.label_count() {
                return Err(Error::Schema(format!(
                    "{} label columns but schema names {}",
                    l.cols(),
                    schema.label_count()
                )));
            }
        }
        Ok(DomainDataset {
            schema,
            features,
            labels,
        })
    }

    /// Splits a combined `[features | labels]` matrix according to the schema.
    pub fn from_combined(schema: FeatureSchema, combined: &Matrix) -> Result<Self> {
        let d = schema.feature_count();
        let l = schema.label_count();
        if combined.cols() != d + l {
            return Err(Error::Schema(format!(
                "{} columns for a schema with {} features and {} labels",
                combined.cols(),
                d,
                l
            )));
        }
        let features = combined.select_columns(&(0..d).collect::<Vec<_>>());
        let labels = (l > 0).then(|| combined.select_columns(&(d..d + l).collect::<Vec<_>>()));
        Self::new(schema, features, labels)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&Matrix> {
        self.labels.as_ref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    /// `[features | labels]`; just the features when there are no labels.
    pub fn combined(&self) -> Matrix {
        match &self.labels {
            Some(l) => self.features.hstack(l).expect("row counts validated"),
            None => self.features.clone(),
        }
    }

    /// The same rows with every label column dropped.
    pub fn without_labels(&self) -> DomainDataset {
        DomainDataset {
            schema: self
                .schema
                .with_labels(Vec::<String>::new())
                .expect("features were already valid"),
            features: self.features.clone(),
            labels: None,
        }
    }

    pub fn with_features(&self, features: Matrix) -> Result<DomainDataset> {
        Self::new(self.schema.clone(), features, self.labels.clone())
    }

    /// Values of one named label column.
    pub fn label_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .schema
            .label_index(name)
            .ok_or_else(|| Error::MissingLabel(name.to_string()))?;
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabel(name.to_string()))?;
        Ok(labels.column(idx))
    }

    /// Values of a named column, feature or label.
    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(j) = self.schema.feature_index(name) {
            return Some(self.features.column(j));
        }
        self.label_column(name).ok()
    }
}

/// Selects the requested label columns alongside the feature matrix.
pub fn split_features_labels(ds: &DomainDataset, wanted: &[&str]) -> Result<(Matrix, Matrix)> {
    let mut idx = Vec::with_capacity(wanted.len());
    for name in wanted {
        let j = ds
            .schema()
            .label_index(name)
            .ok_or_else(|| Error::MissingLabel((*name).to_string()))?;
        idx.push(j);
    }
    let y = match ds.labels() {
        Some(l) => l.select_columns(&idx),
        None if idx.is_empty() => Matrix::zeros(ds.n_rows(), 0),
        None => return Err(Error::MissingLabel(wanted[0].to_string())),
    };
    Ok((ds.features().clone(), y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NormMethod {
    #[default]
    MinMax,
    ZScore,
}

impl NormMethod {
    pub fn tag(self) -> &'static str {
        match self {
            NormMethod::MinMax => "min-max",
            NormMethod::ZScore => "z-score",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "min-max" | "minmax" => Some(NormMethod::MinMax),
            "z-score" | "zscore" => Some(NormMethod::ZScore),
            _ => None,
        }
    }
}

/// Parameters of one normalized column.
///
/// For min-max `(a, b)` is `(min, max)`; for z-score it is `(mean, std)` with
/// the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColumnStats {
    pub a: f64,
    pub b: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationStats {
    pub method: NormMethod,
    pub names: Vec<String>,
    pub columns: Vec<ColumnStats>,
}

impl NormalizationStats {
    /// Fits stats for every column of `data`; `names` labels the columns.
    pub fn fit_matrix(names: &[String], data: &Matrix, method: NormMethod) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::domain("cannot fit a normalizer on zero rows"));
        }
        if names.len() != data.cols() {
            return Err(Error::Schema(format!(
                "{} names for {} columns",
                names.len(),
                data.cols()
            )));
        }
        let n = data.rows() as f64;
        let columns = (0..data.cols())
            .map(|j| {
                let col = data.column(j);
                match method {
                    NormMethod::MinMax => {
                        let (lo, hi) = col
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                                (lo.min(v), hi.max(v))
                            });
                        ColumnStats {
                            a: lo,
                            b: hi,
                            degenerate: hi <= lo,
                        }
                    }
                    NormMethod::ZScore => {
                        let mean = col.iter().sum::<f64>() / n;
                        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let std = libm::sqrt(var);
                        ColumnStats {
                            a: mean,
                            b: std,
                            degenerate: !(std > 0.0),
                        }
                    }
                }
            })
            .collect();
        Ok(NormalizationStats {
            method,
            names: names.to_vec(),
            columns,
        })
    }

    pub fn degenerate_columns(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.columns)
            .filter(|(_, c)| c.degenerate)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.columns.len() {
            return Err(Error::Schema(format!(
                "normalizer covers {} columns, data has {}",
                self.columns.len(),
                cols
            )));
        }
        Ok(())
    }

    /// Normalizes every column. Out-of-range values are not clipped and
    /// degenerate columns map to 0.
    pub fn apply_matrix(&self, data: &Matrix) -> Result<Matrix> {
        self.check_width(data.cols())?;
        let mut out = data.clone();
        for i in 0..out.rows() {
            for (v, c) in out.row_mut(i).iter_mut().zip(&self.columns) {
                *v = if c.degenerate {
                    0.0
                } else {
                    match self.method {
                        NormMethod::MinMax => (*v - c.a) / (c.b - c.a),
                        NormMethod::ZScore => (*v - c.a) / c.b,
                    }
                };
            }
        }
        Ok(out)
    }

    /// Inverse of [`apply_matrix`](Self::apply_matrix); degenerate columns
    /// come back as their constant value.
    pub fn invert_matrix(&self, data: &Matrix) -> Result<Matrix> {
        self.check_width(data.cols())?;
        let mut out = data.clone();
        for i in 0..out.rows() {
            for (v, c) in out.row_mut(i).iter_mut().zip(&self.columns) {
                *v = if c.degenerate {
                    c.a
                } else {
                    match self.method {
                        NormMethod::MinMax => *v * (c.b - c.a) + c.a,
                        NormMethod::ZScore => *v * c.b + c.a,
                    }
                };
            }
        }
        Ok(out)
    }
}

/// Fits normalization stats over the feature columns of `ds` (labels untouched).
pub fn fit_normalizer(ds: &DomainDataset, method: NormMethod) -> Result<NormalizationStats> {
    NormalizationStats::fit_matrix(ds.schema().feature_names(), ds.features(), method)
}

/// Normalizes the feature columns of `ds` with previously fitted stats.
pub fn apply_normalizer(ds: &DomainDataset, stats: &NormalizationStats) -> Result<DomainDataset> {
    if stats.names.as_slice() != ds.schema().feature_names() {
        return Err(Error::Schema(format!(
            "normalizer columns {:?} do not match dataset features {:?}",
            stats.names,
            ds.schema().feature_names()
        )));
    }
    ds.with_features(stats.apply_matrix(ds.features())?)
}

/// Maps normalized feature columns back to their original scale.
pub fn invert_normalizer(ds: &DomainDataset, stats: &NormalizationStats) -> Result<DomainDataset> {
    if stats.names.as_slice() != ds.schema().feature_names() {
        return Err(Error::Schema(
            "normalizer columns do not match dataset".into(),
        ));
    }
    ds.with_features(stats.invert_matrix(ds.features())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_col(values: &[f64]) -> DomainDataset {
        let schema = FeatureSchema::new(["x"], Vec::<String>::new()).unwrap();
        DomainDataset::new(schema, Matrix::column_vector(values), None).unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(FeatureSchema::new(["a", "b"], ["a"]).is_err());
        assert!(FeatureSchema::new(Vec::<String>::new(), ["y"]).is_err());
        let s = FeatureSchema::vnf_default();
        assert_eq!(s.feature_count(), 6);
        assert_eq!(s.label_names(), ["CPU", "MEM_MB", "LINK_Mbps"]);
    }

    #[test]
    fn dataset_invariants() {
        let schema = FeatureSchema::new(["a", "b"], ["y"]).unwrap();
        let f = Matrix::zeros(3, 2);
        assert!(DomainDataset::new(schema.clone(), Matrix::zeros(0, 2), None).is_err());
        assert!(DomainDataset::new(schema.clone(), Matrix::zeros(3, 1), None).is_err());
        assert!(DomainDataset::new(schema.clone(), f.clone(), Some(Matrix::zeros(2, 1))).is_err());
        assert!(DomainDataset::new(schema, f, Some(Matrix::zeros(3, 1))).is_ok());
    }

    #[test]
    fn minmax_fit_and_apply() {
        let ds = one_col(&[0.0, 5.0, 10.0]);
        let st = fit_normalizer(&ds, NormMethod::MinMax).unwrap();
        assert_eq!((st.columns[0].a, st.columns[0].b), (0.0, 10.0));
        assert!(!st.columns[0].degenerate);
        let out = apply_normalizer(&ds, &st).unwrap();
        assert_eq!(out.features().column(0), vec![0.0, 0.5, 1.0]);
        let beyond = apply_normalizer(&one_col(&[12.0]), &st).unwrap();
        assert!((beyond.features()[(0, 0)] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_flagged_and_maps_to_zero() {
        let ds = one_col(&[2.0, 2.0, 2.0]);
        for method in [NormMethod::MinMax, NormMethod::ZScore] {
            let st = fit_normalizer(&ds, method).unwrap();
            assert!(st.columns[0].degenerate);
            assert_eq!(st.degenerate_columns(), ["x"]);
            let out = apply_normalizer(&ds, &st).unwrap();
            assert!(out.features().as_slice().iter().all(|v| *v == 0.0));
            let back = invert_normalizer(&out, &st).unwrap();
            assert_eq!(back.features().column(0), vec![2.0; 3]);
        }
        let st = fit_normalizer(&ds, NormMethod::MinMax).unwrap();
        assert_eq!((st.columns[0].a, st.columns[0].b), (2.0, 2.0));
    }

    #[test]
    fn zscore_uses_population_std() {
        let st = fit_normalizer(&one_col(&[1.0, 3.0]), NormMethod::ZScore).unwrap();
        assert_eq!(st.columns[0].a, 2.0);
        assert_eq!(st.columns[0].b, 1.0);
    }

    #[test]
    fn apply_checks_columns() {
        let st = fit_normalizer(&one_col(&[0.0, 1.0]), NormMethod::MinMax).unwrap();
        let schema = FeatureSchema::new(["other"], Vec::<String>::new()).unwrap();
        let ds = DomainDataset::new(schema, Matrix::column_vector(&[1.0]), None).unwrap();
        assert!(matches!(apply_normalizer(&ds, &st), Err(Error::Schema(_))));
    }

    #[test]
    fn split_labels() {
        let schema = FeatureSchema::new(["a"], ["CPU", "MEM_MB"]).unwrap();
        let ds = DomainDataset::new(
            schema,
            Matrix::column_vector(&[1.0, 2.0]),
            Some(Matrix::from_rows(&[[10.0, 20.0], [11.0, 21.0]]).unwrap()),
        )
        .unwrap();
        let (x, y) = split_features_labels(&ds, &["CPU"]).unwrap();
        assert_eq!(y.shape(), (2, 1));
        assert_eq!(y.column(0), vec![10.0, 11.0]);
        assert_eq!(&x, ds.features());
        let (x, y) = split_features_labels(&ds, &[]).unwrap();
        assert_eq!(y.shape(), (2, 0));
        assert_eq!(&x, ds.features());

        let cpu_only = FeatureSchema::new(["a"], ["CPU"]).unwrap();
        let ds = DomainDataset::new(
            cpu_only,
            Matrix::column_vector(&[1.0]),
            Some(Matrix::column_vector(&[3.0])),
        )
        .unwrap();
        assert_eq!(
            split_features_labels(&ds, &["LINK_Mbps"]),
            Err(Error::MissingLabel("LINK_Mbps".into()))
        );
    }
}
