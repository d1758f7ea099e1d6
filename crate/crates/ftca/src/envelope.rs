//! The `.ftcamodel` document shared by generator models and TCA mappings.
//!
//! ```text
//! ftcamodel
//! format_version = 1
//! kind = statistical
//! features = CPUUTP,MEMUTP,...
//! ...
//! payload_bytes = 5120
//! payload_crc32 = 1c291ca3
//! payload
//! array means 1 9
//! 1.0000000000000000e0 ...
//! ```
//!
//! Header fields are `key = value` lines. Everything after the `payload` line
//! is the payload: named row-major arrays, one matrix row per line, each
//! value printed with 17 significant digits so it parses back to the same
//! `f64`. The CRC-32 covers the payload bytes only.

use std::fmt::Write as _;
use std::path::Path;

use ftca_core::data::{ColumnStats, FeatureSchema, NormMethod, NormalizationStats};
use ftca_core::mlp::{Activation, MlpParams};
use ftca_core::tabgen::{
    GanGenerator, GeneratorBody, GeneratorKind, GeneratorModel, StatisticalGenerator,
};
use ftca_core::tca::TcaMapping;
use ftca_core::Matrix;

use crate::error::{EnvelopeError, FtcaError, Result};

pub const MAGIC: &str = "ftcamodel";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "ftcamodel";
pub const MAPPING_KIND: &str = "tca-mapping";

type EnvResult<T> = std::result::Result<T, EnvelopeError>;

fn malformed(msg: impl Into<String>) -> EnvelopeError {
    EnvelopeError::Malformed(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub kind: String,
    /// Header fields after `kind`, in order.
    pub fields: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

fn escape(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        match c {
            '%' => out.push_str("%25"),
            ',' => out.push_str("%2C"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    s.replace("%2C", ",")
        .replace("%0A", "\n")
        .replace("%0D", "\r")
        .replace("%25", "%")
}

fn join_names(names: &[String]) -> String {
    names
        .iter()
        .map(|n| escape(n))
        .collect::<Vec<_>>()
        .join(",")
}

fn split_names(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(unescape).collect()
    }
}

impl Envelope {
    pub fn new(kind: &str) -> Self {
        Envelope {
            kind: kind.to_string(),
            ..Envelope::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn push_array(&mut self, name: &str, matrix: Matrix) {
        self.arrays.push(NamedArray {
            name: name.to_string(),
            matrix,
        });
    }

    pub fn field(&self, key: &str) -> EnvResult<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| malformed(format!("missing field '{key}'")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> EnvResult<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| malformed(format!("field '{key}' has bad value {v:?}")))
    }

    pub fn array(&self, name: &str) -> EnvResult<&Matrix> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.matrix)
            .ok_or_else(|| malformed(format!("missing array '{name}'")))
    }

    fn payload(&self) -> String {
        let mut p = String::new();
        for a in &self.arrays {
            let (r, c) = a.matrix.shape();
            writeln!(p, "array {} {r} {c}", a.name).unwrap();
            for row in a.matrix.row_iter() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(p, "{}", line.join(" ")).unwrap();
            }
        }
        p
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "format_version = {FORMAT_VERSION}").unwrap();
        writeln!(out, "kind = {}", self.kind).unwrap();
        for (k, v) in &self.fields {
            writeln!(out, "{k} = {v}").unwrap();
        }
        writeln!(out, "payload_bytes = {}", payload.len()).unwrap();
        writeln!(
            out,
            "payload_crc32 = {:08x}",
            crc32fast::hash(payload.as_bytes())
        )
        .unwrap();
        writeln!(out, "payload").unwrap();
        out.push_str(&payload);
        out.into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> EnvResult<Envelope> {
        let text = std::str::from_utf8(bytes).map_err(|_| malformed("not UTF-8 text"))?;
        let mut rest = text;
        let next_line = |rest: &mut &str| -> Option<String> {
            let (line, tail) = match rest.find('\n') {
                Some(i) => (&rest[..i], &rest[i + 1..]),
                None if rest.is_empty() => return None,
                None => (*rest, ""),
            };
            *rest = tail;
            Some(line.to_string())
        };
        if next_line(&mut rest).as_deref() != Some(MAGIC) {
            return Err(malformed("missing ftcamodel header line"));
        }
        let mut header: Vec<(String, String)> = Vec::new();
        loop {
            let line = next_line(&mut rest).ok_or_else(|| malformed("no payload section"))?;
            if line == "payload" {
                break;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| malformed(format!("bad header line {line:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| malformed(format!("missing field '{key}'")))
        };
        let version = get("format_version")?;
        if version.trim() != FORMAT_VERSION.to_string() {
            return Err(EnvelopeError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let expected: usize = get("payload_bytes")?
            .parse()
            .map_err(|_| malformed("payload_bytes is not a count"))?;
        let crc = u32::from_str_radix(&get("payload_crc32")?, 16)
            .map_err(|_| malformed("payload_crc32 is not hex"))?;
        let payload = rest.as_bytes();
        if payload.len() < expected {
            return Err(EnvelopeError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(malformed(format!(
                "{} bytes after the payload",
                payload.len() - expected
            )));
        }
        let actual = crc32fast::hash(payload);
        if actual != crc {
            return Err(EnvelopeError::Checksum {
                expected: crc,
                actual,
            });
        }

        let mut env = Envelope::new(&get("kind")?);
        env.fields = header
            .into_iter()
            .filter(|(k, _)| {
                !matches!(
                    k.as_str(),
                    "format_version" | "kind" | "payload_bytes" | "payload_crc32"
                )
            })
            .collect();
        let mut lines = rest.lines();
        while let Some(line) = lines.next() {
            let parts: Vec<&str> = line.split(' ').collect();
            let (name, r, c) = match parts.as_slice() {
                ["array", name, r, c] => (
                    *name,
                    r.parse::<usize>()
                        .map_err(|_| malformed("bad array row count"))?,
                    c.parse::<usize>()
                        .map_err(|_| malformed("bad array column count"))?,
                ),
                _ => return Err(malformed(format!("expected an array header, got {line:?}"))),
            };
            let mut data = Vec::with_capacity(r.saturating_mul(c).min(1 << 24));
            for _ in 0..r {
                let row = lines
                    .next()
                    .ok_or_else(|| malformed(format!("array '{name}' is short")))?;
                let before = data.len();
                for tok in row.split(' ') {
                    data.push(
                        tok.parse::<f64>()
                            .map_err(|_| malformed(format!("bad number {tok:?}")))?,
                    );
                }
                if data.len() - before != c {
                    return Err(malformed(format!("array '{name}' row has the wrong width")));
                }
            }
            let matrix = Matrix::from_vec(r, c, data).map_err(|e| malformed(e.to_string()))?;
            env.push_array(name, matrix);
        }
        Ok(env)
    }
}

fn row(values: &[f64]) -> Matrix {
    Matrix::from_vec(1, values.len(), values.to_vec()).expect("one row")
}

fn single_row(env: &Envelope, name: &str) -> EnvResult<Vec<f64>> {
    let m = env.array(name)?;
    if m.rows() != 1 {
        return Err(malformed(format!("array '{name}' must have one row")));
    }
    Ok(m.as_slice().to_vec())
}

fn put_schema(env: &mut Envelope, schema: &FeatureSchema) {
    env.set("features", join_names(schema.feature_names()));
    env.set("labels", join_names(schema.label_names()));
}

fn get_schema(env: &Envelope) -> EnvResult<FeatureSchema> {
    let features = split_names(env.field("features")?);
    let labels = split_names(env.field("labels")?);
    FeatureSchema::new(features, labels).map_err(|e| malformed(e.to_string()))
}

fn put_norm(env: &mut Envelope, stats: Option<&NormalizationStats>) {
    match stats {
        None => env.set("norm.method", "none"),
        Some(s) => {
            env.set("norm.method", s.method.tag());
            env.set("norm.columns", join_names(&s.names));
            let flags: Vec<&str> = s
                .columns
                .iter()
                .map(|c| if c.degenerate { "1" } else { "0" })
                .collect();
            env.set("norm.degenerate", flags.join(","));
            let a: Vec<f64> = s.columns.iter().map(|c| c.a).collect();
            let b: Vec<f64> = s.columns.iter().map(|c| c.b).collect();
            env.push_array("norm.a", row(&a));
            env.push_array("norm.b", row(&b));
        }
    }
}

fn get_norm(env: &Envelope) -> EnvResult<Option<NormalizationStats>> {
    let method = env.field("norm.method")?;
    if method == "none" {
        return Ok(None);
    }
    let method = NormMethod::from_tag(method)
        .ok_or_else(|| malformed(format!("unknown norm method {method:?}")))?;
    let names = split_names(env.field("norm.columns")?);
    let flags = split_names(env.field("norm.degenerate")?);
    let a = single_row(env, "norm.a")?;
    let b = single_row(env, "norm.b")?;
    if flags.len() != names.len() || a.len() != names.len() || b.len() != names.len() {
        return Err(malformed("normalization arrays disagree in length"));
    }
    let mut columns = Vec::with_capacity(names.len());
    for ((f, a), b) in flags.iter().zip(a).zip(b) {
        let degenerate = match f.as_str() {
            "0" => false,
            "1" => true,
            _ => return Err(malformed("norm.degenerate flags must be 0 or 1")),
        };
        columns.push(ColumnStats { a, b, degenerate });
    }
    Ok(Some(NormalizationStats {
        method,
        names,
        columns,
    }))
}

pub fn model_envelope(model: &GeneratorModel) -> Envelope {
    let mut env = Envelope::new(model.kind().tag());
    put_schema(&mut env, &model.schema);
    match &model.body {
        GeneratorBody::Gan(g) => {
            put_norm(&mut env, Some(&g.norm_stats));
            env.set("noise_dim", g.noise_dim);
            env.set("layers", g.mlp.weights().len());
            env.set("hidden_activation", g.mlp.hidden_activation().tag());
            env.set("output_activation", g.mlp.output_activation().tag());
            for (l, (w, b)) in g.mlp.weights().iter().zip(g.mlp.biases()).enumerate() {
                env.push_array(&format!("layer{l}.weights"), w.clone());
                env.push_array(&format!("layer{l}.bias"), row(b));
            }
        }
        GeneratorBody::Statistical(s) => {
            put_norm(&mut env, None);
            env.push_array("means", row(&s.means));
            env.push_array("stds", row(&s.stds));
            env.push_array("correlation_factor", s.correlation_factor.clone());
        }
    }
    env
}

pub fn serialize_model(model: &GeneratorModel) -> Vec<u8> {
    model_envelope(model).to_bytes()
}

pub fn deserialize_model(bytes: &[u8]) -> EnvResult<GeneratorModel> {
    let env = Envelope::parse(bytes)?;
    let kind = GeneratorKind::from_tag(&env.kind)
        .ok_or_else(|| malformed(format!("'{}' is not a generator kind", env.kind)))?;
    let schema = get_schema(&env)?;
    let body = match kind {
        GeneratorKind::Gan => {
            let norm_stats = get_norm(&env)?
                .ok_or_else(|| malformed("gan model without normalization stats"))?;
            let layers: usize = env.parsed("layers")?;
            let act = |key: &str| -> EnvResult<Activation> {
                let tag = env.field(key)?;
                Activation::from_tag(tag)
                    .ok_or_else(|| malformed(format!("unknown activation {tag:?}")))
            };
            let mut weights = Vec::with_capacity(layers);
            let mut biases = Vec::with_capacity(layers);
            for l in 0..layers {
                weights.push(env.array(&format!("layer{l}.weights"))?.clone());
                biases.push(single_row(&env, &format!("layer{l}.bias"))?);
            }
            let mlp = MlpParams::from_parts(
                weights,
                biases,
                act("hidden_activation")?,
                act("output_activation")?,
            )
            .map_err(|e| malformed(e.to_string()))?;
            GeneratorBody::Gan(GanGenerator {
                norm_stats,
                noise_dim: env.parsed("noise_dim")?,
                mlp,
            })
        }
        GeneratorKind::Statistical => GeneratorBody::Statistical(StatisticalGenerator {
            means: single_row(&env, "means")?,
            stds: single_row(&env, "stds")?,
            correlation_factor: env.array("correlation_factor")?.clone(),
        }),
    };
    let model = GeneratorModel { schema, body };
    model.validate().map_err(|e| malformed(e.to_string()))?;
    Ok(model)
}

pub fn serialize_mapping(map: &TcaMapping, feature_names: &[String]) -> Vec<u8> {
    let mut env = Envelope::new(MAPPING_KIND);
    env.set("features", join_names(feature_names));
    env.set("n_s", map.n_s);
    env.set("n_t", map.n_t);
    put_norm(&mut env, map.norm_stats.as_ref());
    env.push_array("w", map.w.clone());
    env.push_array("eigenvalues", row(&map.eigenvalues));
    env.to_bytes()
}

/// Returns the mapping and the feature names it expects.
pub fn deserialize_mapping(bytes: &[u8]) -> EnvResult<(TcaMapping, Vec<String>)> {
    let env = Envelope::parse(bytes)?;
    if env.kind != MAPPING_KIND {
        return Err(malformed(format!("'{}' is not a mapping", env.kind)));
    }
    let names = split_names(env.field("features")?);
    let w = env.array("w")?.clone();
    let eigenvalues = single_row(&env, "eigenvalues")?;
    if w.rows() != names.len() || w.cols() != eigenvalues.len() {
        return Err(malformed("mapping arrays disagree with the feature list"));
    }
    let map = TcaMapping {
        w,
        eigenvalues,
        n_s: env.parsed("n_s")?,
        n_t: env.parsed("n_t")?,
        norm_stats: get_norm(&env)?,
    };
    Ok((map, names))
}

pub fn write_model_file(path: &Path, model: &GeneratorModel) -> Result<()> {
    std::fs::write(path, serialize_model(model)).map_err(|e| FtcaError::file(path, e))
}

pub fn read_model_file(path: &Path) -> Result<GeneratorModel> {
    let bytes = std::fs::read(path).map_err(|e| FtcaError::file(path, e))?;
    Ok(deserialize_model(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftca_core::data::DomainDataset;
    use ftca_core::tabgen::{fit_statistical, sample, train_gan, GanTrainConfig};

    fn data() -> DomainDataset {
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                [t.sin(), t.cos() * 2.0 + 1.0, 0.5 * t]
            })
            .collect();
        let schema = FeatureSchema::new(["a", "b,c"], ["y"]).unwrap();
        DomainDataset::from_combined(schema, &Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    fn gan() -> GeneratorModel {
        let cfg = GanTrainConfig {
            epochs: 2,
            batch_size: 16,
            generator_hidden: vec![8],
            discriminator_hidden: vec![8],
            ..GanTrainConfig::default()
        };
        train_gan(&data(), &cfg).unwrap()
    }

    #[test]
    fn models_round_trip() {
        for model in [fit_statistical(&data()).unwrap(), gan()] {
            let bytes = serialize_model(&model);
            let back = deserialize_model(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(
                sample(&back, 10, 7).unwrap(),
                sample(&model, 10, 7).unwrap()
            );
            // same model, same bytes
            assert_eq!(serialize_model(&back), bytes);
        }
    }

    #[test]
    fn flipped_version() {
        let bytes = serialize_model(&fit_statistical(&data()).unwrap());
        let text = String::from_utf8(bytes)
            .unwrap()
            .replace("format_version = 1", "format_version = 2");
        assert!(matches!(
            deserialize_model(text.as_bytes()),
            Err(EnvelopeError::Version { .. })
        ));
    }

    #[test]
    fn truncated_and_corrupted() {
        let bytes = serialize_model(&gan());
        for cut in [bytes.len() - 1, bytes.len() - 200] {
            assert!(matches!(
                deserialize_model(&bytes[..cut]),
                Err(EnvelopeError::Truncated { .. })
            ));
        }
        let mut bad = bytes.clone();
        let last_digit = bad.iter().rposition(|b| b.is_ascii_digit()).unwrap();
        bad[last_digit] = if bad[last_digit] == b'1' { b'2' } else { b'1' };
        assert!(matches!(
            deserialize_model(&bad),
            Err(EnvelopeError::Checksum { .. })
        ));
        assert!(matches!(
            deserialize_model(&bytes[..5]),
            Err(EnvelopeError::Malformed(_))
        ));
        assert!(matches!(
            deserialize_model(b"\xff\xfe"),
            Err(EnvelopeError::Malformed(_))
        ));
    }

    #[test]
    fn mapping_round_trip() {
        let map = TcaMapping {
            w: Matrix::from_rows(&[[0.1, -2.5], [1.0 / 3.0, 4e-300]]).unwrap(),
            eigenvalues: vec![2.0, 0.5],
            n_s: 10,
            n_t: 4,
            norm_stats: None,
        };
        let names = vec!["x".to_string(), "y".to_string()];
        let (back, back_names) = deserialize_mapping(&serialize_mapping(&map, &names)).unwrap();
        assert_eq!(back, map);
        assert_eq!(back_names, names);
        let model_bytes = serialize_model(&fit_statistical(&data()).unwrap());
        assert!(deserialize_mapping(&model_bytes).is_err());
    }
}
