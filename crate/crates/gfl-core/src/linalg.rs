//! Dense symmetric eigensolver and orthogonalization, used as the exact
//! reference backend. Everything here is O(n^3) and deliberately simple;
//! the problem sizes stay small enough that robustness beats speed.

use ndarray::Array2;

use crate::error::{GflError, Result};
use crate::Mat;

/// Off-diagonal Frobenius mass, relative to the full Frobenius norm, at
/// which the Jacobi sweep stops.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Input asymmetry tolerated before refusing to decompose, relative to the
/// largest entry.
const SYMMETRY_TOL: f64 = 1e-10;
/// Columns whose remaining mass falls below this fraction of the largest
/// input column norm are treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// A = U diag(eigenvalues) U^T with eigenvalues ascending and eigenvectors
/// in the matching columns of `eigenvectors`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// U diag(f(lambda)) U^T, the spectral calculus every target uses.
    pub fn apply_spectral<F: Fn(f64) -> f64>(&self, f: F) -> Mat {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fl = f(lam);
            scaled.column_mut(j).mapv_inplace(|x| x * fl);
        }
        scaled.dot(&self.eigenvectors.t())
    }

    pub fn reconstruct(&self) -> Mat {
        self.apply_spectral(|x| x)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &Mat) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if n == 0 || n != a.ncols() {
        return Err(GflError::ShapeMismatch(format!(
            "sym_eig needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = max_abs(a);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(GflError::NotSymmetric { asym, tol: SYMMETRY_TOL * scale });
    }

    // symmetrize exactly so roundoff asymmetry cannot drift during sweeps
    let mut work = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            work[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut u: Mat = Array2::eye(n);
    let fro = frobenius(&work);

    let mut converged = false;
    let mut last_off = 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off = offdiag_frobenius(&work);
        last_off = off;
        if off <= JACOBI_TOL * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = work[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (work[[q, q]] - work[[p, p]]) / (2.0 * apq);
                // small-magnitude root of t^2 + 2 theta t - 1 = 0
                let t = if theta.abs() > 1e154 {
                    0.5 / theta
                } else if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    1.0 / (theta - (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = work[[i, p]];
                    let aiq = work[[i, q]];
                    work[[i, p]] = c * aip - s * aiq;
                    work[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = work[[p, i]];
                    let aqi = work[[q, i]];
                    work[[p, i]] = c * api - s * aqi;
                    work[[q, i]] = s * api + c * aqi;
                }
                work[[p, q]] = 0.0;
                work[[q, p]] = 0.0;
                for i in 0..n {
                    let uip = u[[i, p]];
                    let uiq = u[[i, q]];
                    u[[i, p]] = c * uip - s * uiq;
                    u[[i, q]] = s * uip + c * uiq;
                }
            }
        }
    }
    if !converged {
        let off = offdiag_frobenius(&work);
        return Err(GflError::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            offdiag: off.max(last_off),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work[[i, i]].partial_cmp(&work[[j, j]]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| work[[i, i]]).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&u.column(src));
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

fn offdiag_frobenius(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns a
/// matrix with orthonormal columns spanning the input columns, or the index
/// of the first dependent column.
pub fn qr_ortho(a: &Mat) -> Result<Mat> {
    let (n, k) = a.dim();
    if n == 0 || k == 0 || k > n {
        return Err(GflError::ShapeMismatch(format!(
            "qr_ortho needs an n x k matrix with 1 <= k <= n, got {n}x{k}"
        )));
    }
    let scale = (0..k)
        .map(|j| a.column(j).dot(&a.column(j)).sqrt())
        .fold(0.0f64, f64::max);
    let mut q = a.clone();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let dot = qi.dot(&q.column(j));
                q.column_mut(j).zip_mut_with(&qi, |x, &y| *x -= dot * y);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if !(norm > RANK_TOL * scale) {
            return Err(GflError::RankDeficient { col: j });
        }
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(q)
}

/// Reference block power iteration: orthonormalize, then repeat
/// V <- qr_ortho(M V). Converges to a dominant invariant subspace of M.
pub fn subspace_iteration_ref(m: &Mat, v0: &Mat, iters: usize) -> Result<Mat> {
    if m.nrows() != m.ncols() || m.nrows() != v0.nrows() {
        return Err(GflError::ShapeMismatch(format!(
            "subspace iteration needs square M matching V rows, got M {}x{}, V {}x{}",
            m.nrows(),
            m.ncols(),
            v0.nrows(),
            v0.ncols()
        )));
    }
    let mut v = qr_ortho(v0)?;
    for _ in 0..iters {
        v = qr_ortho(&m.dot(&v))?;
    }
    Ok(v)
}

/// Largest singular value, via the eigendecomposition of the smaller Gram
/// matrix.
pub fn spectral_norm(e: &Mat) -> Result<f64> {
    let (n, k) = e.dim();
    if n == 0 || k == 0 {
        return Ok(0.0);
    }
    let g = if k <= n { e.t().dot(e) } else { e.dot(&e.t()) };
    let dec = sym_eig(&g)?;
    Ok(dec.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Max over columns of the Euclidean distance between matching columns:
/// the per-demand error metric for vector targets.
pub fn max_column_norm_diff(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    (0..a.ncols())
        .map(|j| {
            a.column(j)
                .iter()
                .zip(b.column(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.gen_range(-5.0..5.0);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    #[test]
    fn eig_of_diagonal_sorts_ascending() {
        let a = array![[3.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 2.0]];
        let dec = sym_eig(&a).unwrap();
        assert!((dec.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((dec.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((dec.eigenvalues[2] - 3.0).abs() < 1e-12);
        // eigenvector for -1 is +-e1
        assert!(dec.eigenvectors[[1, 0]].abs() > 0.999);
    }

    #[test]
    fn eig_of_k3_laplacian() {
        let a = array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]];
        let dec = sym_eig(&a).unwrap();
        assert!(dec.eigenvalues[0].abs() < 1e-12);
        assert!((dec.eigenvalues[1] - 3.0).abs() < 1e-12);
        assert!((dec.eigenvalues[2] - 3.0).abs() < 1e-12);
        let inv = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            assert!((dec.eigenvectors[[i, 0]].abs() - inv).abs() < 1e-10);
        }
    }

    #[test]
    fn eig_orthogonality_and_reconstruction() {
        for (n, seed) in [(2, 1u64), (5, 2), (10, 3), (20, 4), (30, 5)] {
            let a = random_symmetric(n, seed);
            let dec = sym_eig(&a).unwrap();
            let gram = dec.eigenvectors.t().dot(&dec.eigenvectors);
            let eye = Array2::eye(n);
            assert!(max_abs_diff(&gram, &eye) <= 1e-9);
            let spec_scale = dec
                .eigenvalues
                .iter()
                .fold(0.0f64, |acc, x| acc.max(x.abs()));
            assert!(max_abs_diff(&dec.reconstruct(), &a) <= 1e-8 * spec_scale);
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(&a), Err(GflError::NotSymmetric { .. })));
    }

    #[test]
    fn eig_one_by_one_and_zero_matrix() {
        let dec = sym_eig(&array![[-4.5]]).unwrap();
        assert_eq!(dec.eigenvalues, vec![-4.5]);
        assert_eq!(dec.eigenvectors[[0, 0]], 1.0);
        let dec = sym_eig(&Array2::zeros((4, 4))).unwrap();
        assert!(dec.eigenvalues.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_spectral_computes_matrix_functions() {
        let a = array![[2.0, 0.0], [0.0, 8.0]];
        let dec = sym_eig(&a).unwrap();
        let sq = dec.apply_spectral(f64::sqrt);
        assert!(max_abs_diff(&sq.dot(&sq), &a) <= 1e-12);
    }

    #[test]
    fn qr_of_independent_columns_matches_hand_example() {
        let a = array![[1.0, 1.0], [0.0, 1.0]];
        let q = qr_ortho(&a).unwrap();
        let eye = Array2::eye(2);
        assert!(max_abs_diff(&q, &eye) <= 1e-12);
    }

    #[test]
    fn qr_detects_dependent_column() {
        let a = array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]];
        match qr_ortho(&a) {
            Err(GflError::RankDeficient { col }) => assert_eq!(col, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn qr_orthonormal_and_span_preserving_on_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut a = Array2::zeros((8, 3));
        for x in a.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let q = qr_ortho(&a).unwrap();
        let gram = q.t().dot(&q);
        assert!(max_abs_diff(&gram, &Array2::eye(3)) <= 1e-12);
        // Q Q^T acts as identity on the original columns
        let proj = q.dot(&q.t()).dot(&a);
        assert!(max_abs_diff(&proj, &a) <= 1e-10);
    }

    #[test]
    fn subspace_iteration_finds_dominant_eigenvector() {
        let m = array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 10.0]];
        let v0 = array![[1.0], [1.0], [0.5]];
        let v = subspace_iteration_ref(&m, &v0, 60).unwrap();
        assert!(v[[2, 0]].abs() > 1.0 - 1e-10);
    }

    #[test]
    fn spectral_norm_examples() {
        let a = array![[3.0, 0.0], [0.0, -1.0]];
        assert!((spectral_norm(&a).unwrap() - 3.0).abs() <= 1e-10);
        // rank-one outer product has norm |u||v|
        let u = array![[1.0], [2.0], [2.0]];
        let v = array![[3.0, 4.0]];
        let outer = u.dot(&v);
        assert!((spectral_norm(&outer).unwrap() - 15.0).abs() <= 1e-9);
        let z: Mat = Array2::zeros((3, 2));
        assert_eq!(spectral_norm(&z).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn eig_invariants_hold_on_random_symmetric(seed in 0u64..500, n in 2usize..8) {
            let a = random_symmetric(n, seed);
            let dec = sym_eig(&a).unwrap();
            let gram = dec.eigenvectors.t().dot(&dec.eigenvectors);
            prop_assert!(max_abs_diff(&gram, &Array2::eye(n)) <= 1e-9);
            let scale = dec.eigenvalues.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            prop_assert!(max_abs_diff(&dec.reconstruct(), &a) <= 1e-8 * scale + 1e-12);
            for w in dec.eigenvalues.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn qr_output_is_orthonormal_when_it_succeeds(seed in 0u64..200, n in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 1 + (n / 3);
            let mut a = Array2::zeros((n, k));
            for x in a.iter_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
            if let Ok(q) = qr_ortho(&a) {
                let gram = q.t().dot(&q);
                prop_assert!(max_abs_diff(&gram, &Array2::eye(k)) <= 1e-10);
            }
        }
    }
}
