use ftca_core::data::{DomainDataset, FeatureSchema};
use ftca_core::diagnostics::{negative_transfer_score, pearson_matrix};
use ftca_core::pipeline::{run_pipeline, shift_tca_config, PipelineConfig};
use ftca_core::regress::RegressorSpec;
use ftca_core::synth::{
    covariate_shift_preset, gen_synthetic_vnf, mode_task_preset, zero_shift_preset,
};
use ftca_core::tabgen::{sample, train_gan, GanTrainConfig};
use ftca_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_columns(n: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cols)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn dataset(features: &[(&str, &[f64])], labels: &[(&str, &[f64])]) -> DomainDataset {
    let schema = FeatureSchema::new(
        features.iter().map(|(n, _)| *n),
        labels.iter().map(|(n, _)| *n),
    )
    .unwrap();
    let n = features[0].1.len();
    let cols: Vec<&[f64]> = features.iter().chain(labels).map(|(_, c)| *c).collect();
    let data = (0..n)
        .flat_map(|i| cols.iter().map(move |c| c[i]))
        .collect();
    DomainDataset::from_combined(schema, &Matrix::from_vec(n, cols.len(), data).unwrap()).unwrap()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt(),
    )
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 * sa * sb)
}

#[test]
fn gan_matches_a_standard_normal_column() {
    let cols = normal_columns(500, 1, 11);
    let ds = dataset(&[("x", &cols[0])], &[]);
    let model = train_gan(&ds, &GanTrainConfig::default()).unwrap();
    let out = sample(&model, 2000, 3).unwrap().features().column(0);
    let (m, s) = mean_std(&out);
    assert!(m.abs() <= 0.2, "mean {m}");
    assert!((0.7..=1.3).contains(&s), "std {s}");
}

#[test]
fn gan_keeps_strong_correlation() {
    let z = normal_columns(1000, 2, 12);
    let b: Vec<f64> = z[0]
        .iter()
        .zip(&z[1])
        .map(|(a, e)| 0.9 * a + (1.0 - 0.81f64).sqrt() * e)
        .collect();
    assert!(correlation(&z[0], &b) > 0.85);
    let ds = dataset(&[("a", &z[0]), ("b", &b)], &[]);
    let model = train_gan(&ds, &GanTrainConfig::default()).unwrap();
    let out = sample(&model, 2000, 5).unwrap();
    let r = correlation(&out.features().column(0), &out.features().column(1));
    assert!(r > 0.5, "generated correlation {r}");
}

#[test]
fn independent_columns_are_uncorrelated() {
    let z = normal_columns(2000, 3, 13);
    let ds = dataset(&[("a", &z[0]), ("b", &z[1])], &[("y", &z[2])]);
    let pm = pearson_matrix(&ds).unwrap();
    for i in 0..3 {
        assert_eq!(pm.values[(i, i)], 1.0);
        for j in 0..3 {
            if i != j {
                assert!(
                    pm.values[(i, j)].abs() < 0.1,
                    "({i},{j}) = {}",
                    pm.values[(i, j)]
                );
            }
        }
    }
}

#[test]
fn independent_label_scores_low() {
    let z = normal_columns(1000, 4, 14);
    let dependent: Vec<f64> = z[0].iter().zip(&z[1]).map(|(a, b)| a + 0.5 * b).collect();
    let ds = dataset(
        &[("a", &z[0]), ("b", &z[1]), ("c", &z[2])],
        &[("noise", &z[3]), ("signal", &dependent)],
    );
    let s = negative_transfer_score(&ds, "noise").unwrap();
    assert!(s < 0.15, "score {s}");
    assert!(negative_transfer_score(&ds, "signal").unwrap() > 0.8);
}

fn shift_config(labels: &[&str], regressors: Vec<RegressorSpec>, seed: u64) -> PipelineConfig {
    PipelineConfig {
        missing_labels: labels.iter().map(|s| s.to_string()).collect(),
        tca: shift_tca_config(6),
        regressors,
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn covariate_shift_improves_poly() {
    let (s, t) = gen_synthetic_vnf(&covariate_shift_preset(1)).unwrap();
    let cfg = shift_config(&["CPU"], vec![RegressorSpec::poly(2, 1.0)], 1);
    let report = run_pipeline(&cfg, &s, &t, None).unwrap().report;
    let row = &report.rows[0];
    assert!(row.ftca.rmse < row.original.rmse, "{row:?}");
}

#[test]
fn zero_shift_does_not_regress_much() {
    let (s, t) = gen_synthetic_vnf(&zero_shift_preset(0)).unwrap();
    let cfg = shift_config(&["CPU"], vec![RegressorSpec::poly(2, 1.0)], 0);
    let report = run_pipeline(&cfg, &s, &t, None).unwrap().report;
    let row = &report.rows[0];
    let rel = (row.ftca.rmse - row.original.rmse).abs() / row.original.rmse;
    assert!(rel < 0.25, "relative change {rel}");
}

#[test]
fn mapping_never_widens_the_mean_gap() {
    let mut configs: Vec<_> = (0..4).map(covariate_shift_preset).collect();
    for name in ["I2P", "I2V", "P2V"] {
        configs.push(mode_task_preset(name, 2).unwrap());
    }
    for syn in configs {
        let (s, t) = gen_synthetic_vnf(&syn).unwrap();
        let cfg = shift_config(&["MEM_MB"], vec![RegressorSpec::poly(1, 1.0)], syn.seed);
        let r = run_pipeline(&cfg, &s, &t, None).unwrap().report;
        assert!(
            r.mmd_after <= r.mmd_before,
            "{:?}: {} > {}",
            syn.shift,
            r.mmd_after,
            r.mmd_before
        );
        assert!(r.constraint_residual < 1e-6);
    }
}

#[test]
fn every_pair_appears_once() {
    let (s, t) = gen_synthetic_vnf(&covariate_shift_preset(3)).unwrap();
    let regs = vec![
        RegressorSpec::poly(2, 1.0),
        RegressorSpec::knn(10),
        RegressorSpec::mlp(),
    ];
    let cfg = shift_config(&["CPU", "MEM_MB", "LINK_Mbps"], regs, 3);
    let r = run_pipeline(&cfg, &s, &t, None).unwrap().report;
    assert_eq!(r.rows.len(), 9);
    for label in ["CPU", "MEM_MB", "LINK_Mbps"] {
        for reg in &cfg.regressors {
            let hits = r
                .rows
                .iter()
                .filter(|row| row.label == label && row.regressor == reg.name())
                .count();
            assert_eq!(hits, 1, "{label}/{}", reg.name());
        }
    }
    assert_eq!(r.diagnostics.len(), 3);
}

#[test]
fn duplicate_regressor_names_are_rejected() {
    let (s, t) = gen_synthetic_vnf(&covariate_shift_preset(3)).unwrap();
    let regs = vec![RegressorSpec::poly(2, 1.0), RegressorSpec::poly(1, 0.0)];
    let err = run_pipeline(&shift_config(&["CPU"], regs, 3), &s, &t, None).unwrap_err();
    assert!(matches!(err, ftca_core::Error::Config(_)), "{err:?}");
}
