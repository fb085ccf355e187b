use dualqed::hilbert::{OperatorMatrix, C64};
use dualqed::spectrum::{lowest_eigenvalues, Method};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn iterative_matches_dense_oracle_at_dimension_5000() {
    let n = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut trip = Vec::new();
    for r in 0..n {
        trip.push((r, r, C64::new(rng.random_range(-3.0..3.0), 0.0)));
        for _ in 0..3 {
            let c = rng.random_range(0..n);
            if c != r {
                let v = rng.random_range(-1.0..1.0);
                trip.push((r, c, C64::new(v, 0.0)));
                trip.push((c, r, C64::new(v, 0.0)));
            }
        }
    }
    let h = OperatorMatrix::from_triplets(n, n, trip);
    let k = 5;
    let report = lowest_eigenvalues(&h, k, 11).unwrap();
    assert_eq!(report.method, Method::Iterative);
    assert!(report.residuals.iter().all(|r| *r <= 1e-8));

    let dense = h.to_dense().map(|v| v.re);
    let mut oracle: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    oracle.sort_by(f64::total_cmp);
    for (a, b) in report.eigenvalues.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
