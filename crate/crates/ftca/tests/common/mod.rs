#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use ftca_core::data::{DomainDataset, FeatureSchema};
use ftca_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A fresh directory under the system temp dir, unique per call.
pub fn scratch_dir(tag: &str) -> PathBuf {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "ftca-{tag}-{}-{}",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::SeqCst)
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Three Gaussian columns: means (2, -1, 5), stds (1, 0.5, 2), the second
/// column mixed with the first.
pub fn gaussian_fixture(n: usize, seed: u64) -> DomainDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let z: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        data.push(2.0 + z[0]);
        data.push(-1.0 + 0.5 * (0.6 * z[0] + 0.8 * z[1]));
        data.push(5.0 + 2.0 * z[2]);
    }
    let schema = FeatureSchema::new(["a", "b", "c"], Vec::<String>::new()).unwrap();
    DomainDataset::new(schema, Matrix::from_vec(n, 3, data).unwrap(), None).unwrap()
}

/// Every row of `ds` (features then labels).
pub fn training_rows(ds: &DomainDataset) -> Vec<Vec<f64>> {
    let m = ds.combined();
    m.row_iter().map(|r| r.to_vec()).collect()
}

/// True if any two horizontally adjacent training values appear in `haystack`
/// as raw little- or big-endian doubles or as envelope text.
pub fn leaks_row_sequence(haystack: &[u8], rows: &[Vec<f64>]) -> bool {
    let contains = |needle: &[u8]| haystack.windows(needle.len()).any(|w| w == needle);
    for row in rows {
        for pair in row.windows(2) {
            let mut le = pair[0].to_le_bytes().to_vec();
            le.extend_from_slice(&pair[1].to_le_bytes());
            let mut be = pair[0].to_be_bytes().to_vec();
            be.extend_from_slice(&pair[1].to_be_bytes());
            let text = format!("{:.16e} {:.16e}", pair[0], pair[1]);
            if contains(&le) || contains(&be) || contains(text.as_bytes()) {
                return true;
            }
        }
    }
    false
}
