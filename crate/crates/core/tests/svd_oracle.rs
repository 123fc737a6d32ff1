use std::path::PathBuf;

use memsched::experiments::{fixture_image, presets, ChunkMap, SvdInstance};
use memsched::pgm;
use memsched::rng::SplitMix64;
use memsched::svd::{orthonormality_residual, reconstruct, svd, Matrix};

fn random_matrix(rng: &mut SplitMix64, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.uniform(-1.0, 1.0))
}

fn nalgebra_sigmas(a: &Matrix) -> Vec<f64> {
    let na = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let mut s: Vec<f64> = na.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

#[test]
fn singular_values_match_nalgebra() {
    let mut rng = SplitMix64::new(10);
    for (m, n) in [(8, 8), (12, 5), (5, 12), (1, 7), (30, 30)] {
        let a = random_matrix(&mut rng, m, n);
        let ours: Vec<f64> = svd(&a).unwrap().iter().map(|t| t.sigma).collect();
        let theirs = nalgebra_sigmas(&a);
        assert_eq!(ours.len(), theirs.len());
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() <= 1e-10 * theirs[0], "{m}x{n}: {x} vs {y}");
        }
    }
}

#[test]
fn factors_reconstruct_and_are_orthonormal() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 9, 6);
        let t = svd(&a).unwrap();
        assert!(t.windows(2).all(|w| w[0].sigma >= w[1].sigma));
        let mut r = reconstruct(9, 6, &t);
        for i in 0..9 {
            for j in 0..6 {
                r[(i, j)] -= a[(i, j)];
            }
        }
        assert!(r.frobenius_norm() / a.frobenius_norm() <= 1e-12);
        let us: Vec<&[f64]> = t.iter().map(|x| x.u.as_slice()).collect();
        let vs: Vec<&[f64]> = t.iter().map(|x| x.v.as_slice()).collect();
        assert!(orthonormality_residual(&us) <= 1e-12);
        assert!(orthonormality_residual(&vs) <= 1e-12);
    }
}

#[test]
fn rank_deficient_matrix() {
    // two identical columns and a zero column
    let mut rng = SplitMix64::new(12);
    let base = random_matrix(&mut rng, 6, 2);
    let a = Matrix::from_fn(6, 4, |i, j| match j {
        0 | 2 => base[(i, 0)],
        1 => base[(i, 1)],
        _ => 0.0,
    });
    let t = svd(&a).unwrap();
    assert_eq!(t[2].sigma, 0.0);
    assert_eq!(t[3].sigma, 0.0);
    let us: Vec<&[f64]> = t.iter().map(|x| x.u.as_slice()).collect();
    assert!(orthonormality_residual(&us) <= 1e-9);
    let theirs = nalgebra_sigmas(&a);
    assert!((t[0].sigma - theirs[0]).abs() <= 1e-10 * theirs[0]);
    assert!((t[1].sigma - theirs[1]).abs() <= 1e-10 * theirs[0]);
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/checker_gradient_64.pgm")
}

#[test]
fn shipped_fixture_matches_generator() {
    let shipped = pgm::read(&fixture_path()).unwrap();
    assert_eq!(shipped, fixture_image());
}

#[test]
fn fixture_spectrum_is_steep() {
    let inst = SvdInstance::from_matrix(fixture_image().to_matrix(), presets::svd_chunk_map()).unwrap();
    let s = inst.sigmas();
    assert_eq!(s.len(), 64);
    assert!(s[1] / s[0] > 0.2);
    assert!(s[4] / s[0] < 1e-3);
    let default = SvdInstance::from_matrix(fixture_image().to_matrix(), ChunkMap::default()).unwrap();
    assert_eq!(default.sigmas(), s);
}
