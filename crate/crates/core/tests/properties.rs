use ftca_core::data::{
    apply_normalizer, fit_normalizer, invert_normalizer, DomainDataset, FeatureSchema, NormMethod,
};
use ftca_core::kernel::{
    centering_matrix, coefficient_matrix, mmd_kernel, mmd_mapped_form, KernelSpec,
};
use ftca_core::linalg::solve_spd;
use ftca_core::regress::{fit, metrics, predict, RegressorSpec};
use ftca_core::tabgen::{fit_statistical, sample};
use ftca_core::tca::{constraint_residual, fit_tca, transform, TcaConfig, TcaProblem};
use ftca_core::Matrix;
use proptest::collection::vec;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    vec(lo..hi, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// Source and target samples with at least `extra` more pooled rows than columns.
fn domains(max_n: usize, max_d: usize, extra: usize) -> impl Strategy<Value = (Matrix, Matrix)> {
    (1..=max_d)
        .prop_flat_map(move |d| {
            let min_total = d + extra;
            (Just(d), 1..=max_n).prop_flat_map(move |(d, ns)| {
                let lo = min_total.saturating_sub(ns).max(1);
                (Just(d), Just(ns), lo..=max_n.max(lo))
            })
        })
        .prop_flat_map(|(d, ns, nt)| (matrix(ns, d, 0.0, 1.0), matrix(nt, d, 0.0, 1.0)))
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

fn mean_gap(xs: &Matrix, xt: &Matrix) -> Vec<f64> {
    let col_mean =
        |m: &Matrix, j: usize| (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / m.rows() as f64;
    (0..xs.cols())
        .map(|j| col_mean(xs, j) - col_mean(xt, j))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_round_trip((n, d) in (1usize..12, 1usize..5), zscore in any::<bool>(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-50.0..50.0)).collect()).unwrap();
        let schema = FeatureSchema::new(names(d), Vec::<String>::new()).unwrap();
        let ds = DomainDataset::new(schema, x.clone(), None).unwrap();
        let method = if zscore { NormMethod::ZScore } else { NormMethod::MinMax };
        let stats = fit_normalizer(&ds, method).unwrap();
        let back = invert_normalizer(&apply_normalizer(&ds, &stats).unwrap(), &stats).unwrap();
        for j in 0..d {
            if stats.columns[j].degenerate {
                continue;
            }
            for i in 0..n {
                let (a, b) = (x[(i, j)], back.features()[(i, j)]);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn centering_is_idempotent(n in 1usize..16) {
        let h = centering_matrix(n).unwrap();
        prop_assert!(h.matmul(&h).unwrap().max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn linear_mmd_is_squared_mean_gap((xs, xt) in domains(20, 5, 0)) {
        let gap = mean_gap(&xs, &xt);
        let direct: f64 = gap.iter().map(|g| g * g).sum();
        let kernel = mmd_kernel(&KernelSpec::Linear, &xs, &xt).unwrap();
        let mapped = mmd_mapped_form(&Matrix::identity(xs.cols()), &xs, &xt).unwrap();
        prop_assert!((kernel - direct).abs() < 1e-10);
        prop_assert!((mapped - direct).abs() < 1e-10);
        prop_assert!(kernel >= -1e-8);
    }

    #[test]
    fn closed_forms_match_explicit_products((xs, xt) in domains(20, 5, 0)) {
        // X stacks samples as rows, so XᵀLX and XᵀHX are the d x d forms
        let x = xs.vstack(&xt).unwrap();
        let n = x.rows();
        let l = coefficient_matrix(xs.rows(), xt.rows()).unwrap();
        let h = centering_matrix(n).unwrap();
        let xlx = x.transpose().matmul(&l).unwrap().matmul(&x).unwrap();
        let xhx = x.transpose().matmul(&h).unwrap().matmul(&x).unwrap();
        let problem = TcaProblem::new(&xs, &xt).unwrap();
        prop_assert!(problem.mmd.max_abs_diff(&xlx) < 1e-10);
        prop_assert!(problem.scatter.max_abs_diff(&xhx) < 1e-10);

        let gap = mean_gap(&xs, &xt);
        let d = gap.len();
        let outer = Matrix::from_vec(d, d, (0..d * d).map(|k| gap[k / d] * gap[k % d]).collect()).unwrap();
        prop_assert!(xlx.max_abs_diff(&outer) < 1e-10);
    }

    #[test]
    fn tca_solution_properties((xs, xt) in domains(20, 4, 3), lambda in 0.05f64..2.0, keep in 0usize..4) {
        let d = xs.cols();
        let m = 1 + keep % d;
        let cfg = TcaConfig { lambda, components: Some(m), ..TcaConfig::default() };
        let map = fit_tca(&xs, &xt, &cfg).unwrap();
        prop_assert!(constraint_residual(&map, &xs, &xt).unwrap() < 1e-6);

        let problem = TcaProblem::new(&xs, &xt).unwrap();
        let a = solve_spd(&problem.regularized_mmd(lambda), &problem.scatter).unwrap();
        for (k, mu) in map.eigenvalues.iter().enumerate() {
            let w = map.w.column(k);
            let aw = a.mat_vec(&w).unwrap();
            let res: f64 = aw.iter().zip(&w).map(|(p, q)| (p - mu * q).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res < 1e-7, "pair {k}: residual {res}");
            prop_assert!((map.multipliers()[k] * mu - 1.0).abs() < 1e-8);
        }
        // a second fit is bit-identical
        prop_assert_eq!(fit_tca(&xs, &xt, &cfg).unwrap().w, map.w.clone());

        // transform acts row by row
        let whole = transform(&map, &xs.vstack(&xt).unwrap()).unwrap();
        let parts = transform(&map, &xs).unwrap().vstack(&transform(&map, &xt).unwrap()).unwrap();
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn metric_inequalities(pairs in vec((-10.0f64..10.0, -10.0f64..10.0), 2..40)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(t.iter().any(|v| *v != t[0]));
        let m = metrics(&t, &p).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-12);
        prop_assert!(m.r2 <= 1.0);
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let r2 = metrics(&t, &vec![mean; t.len()]).unwrap().r2;
        prop_assert!(r2.abs() < 1e-12);
    }

    #[test]
    fn ridge_shrinks_coefficients(x in matrix(15, 2, -2.0, 2.0), y in vec(-3.0f64..3.0, 15)) {
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let f = fit(&RegressorSpec::poly(2, alpha), &x, &y).unwrap();
            let c = f.poly_coefficients().unwrap();
            let norm: f64 = c[1..].iter().map(|v| v * v).sum();
            prop_assert!(norm <= last * (1.0 + 1e-9) + 1e-15, "alpha {alpha}: {norm} > {last}");
            last = norm;
        }
    }

    #[test]
    fn knn_ignores_training_row_order(x in matrix(12, 2, -1.0, 1.0), y in vec(-1.0f64..1.0, 12), shift in 1usize..11, k in 1usize..6) {
        let q = Matrix::from_rows(&[[0.0, 0.0], [0.5, -0.3], [-0.9, 0.8]]).unwrap();
        let order: Vec<usize> = (0..12).map(|i| (i + shift) % 12).rev().collect();
        let y2: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let spec = RegressorSpec::knn(k);
        let a = predict(&fit(&spec, &x, &y).unwrap(), &q).unwrap();
        let b = predict(&fit(&spec, &x.select_rows(&order), &y2).unwrap(), &q).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_a_function_of_its_inputs(seed in any::<u64>(), n in 1usize..30) {
        let x = Matrix::from_rows(&[[1.0, 4.0, 0.5], [2.0, 3.0, 0.1], [0.0, 5.5, 0.9], [1.5, 2.0, 0.3]]).unwrap();
        let schema = FeatureSchema::new(["a", "b"], ["y"]).unwrap();
        let ds = DomainDataset::from_combined(schema, &x).unwrap();
        let model = fit_statistical(&ds).unwrap();
        let one = sample(&model, n, seed).unwrap();
        let two = sample(&model, n, seed).unwrap();
        prop_assert_eq!(one.combined(), two.combined());
    }
}
