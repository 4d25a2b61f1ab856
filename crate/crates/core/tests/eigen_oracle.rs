//! The tridiagonal QL eigensolver against nalgebra's symmetric solver.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nncert::eigen::{min_eig, sym_eigen};

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

#[test]
fn spectra_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200 {
        let n = 1 + k % 30;
        let m = random_symmetric(&mut rng, n);
        let ours = sym_eigen(&m).unwrap();
        let mut theirs: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
        let recon = &ours.vectors * DMatrix::from_diagonal(&ours.values) * ours.vectors.transpose();
        assert!((recon - &m).amax() < 1e-10);
        let (l, v) = min_eig(&m).unwrap();
        assert!((l - theirs[0]).abs() < 1e-10);
        assert!((&m * &v - &v * l).amax() < 1e-9);
    }
}

#[test]
fn repeated_eigenvalues() {
    let m = DMatrix::from_diagonal_element(6, 6, 2.5);
    let e = sym_eigen(&m).unwrap();
    assert!(e.values.iter().all(|&v| (v - 2.5).abs() < 1e-14));
    let orth = e.vectors.transpose() * &e.vectors;
    assert!((orth - DMatrix::identity(6, 6)).amax() < 1e-12);
}
