//! Exact reference targets computed by spectral calculus on a dense
//! eigendecomposition: pseudoinverse, inverse square root, heat kernel,
//! effective resistances, and eigenvector slices.

use ndarray::Array2;

use crate::error::{GflError, Result};
use crate::linalg::{sym_eig, SpectralDecomposition};
use crate::Mat;

/// Eigenvalues at or below this fraction of the largest one count as zero
/// when inverting.
const PINV_TOL: f64 = 1e-10;

fn check_psd(dec: &SpectralDecomposition) -> Result<f64> {
    let lam_max = *dec.eigenvalues.last().unwrap();
    if !(lam_max > 0.0) {
        return Err(GflError::Constraint(
            "matrix function needs a nonzero positive semidefinite input".into(),
        ));
    }
    let tau = PINV_TOL * lam_max;
    if dec.eigenvalues[0] < -tau {
        return Err(GflError::Constraint(format!(
            "matrix is not positive semidefinite: smallest eigenvalue {}",
            dec.eigenvalues[0]
        )));
    }
    Ok(tau)
}

/// Moore-Penrose pseudoinverse of a PSD matrix.
pub fn pinv_psd_from(dec: &SpectralDecomposition) -> Result<Mat> {
    let tau = check_psd(dec)?;
    Ok(dec.apply_spectral(|lam| if lam > tau { 1.0 / lam } else { 0.0 }))
}

pub fn pinv_psd(a: &Mat) -> Result<Mat> {
    pinv_psd_from(&sym_eig(a)?)
}

/// Pseudoinverse square root: 1/sqrt(lambda) on the nonzero spectrum.
pub fn sqrt_pinv_from(dec: &SpectralDecomposition) -> Result<Mat> {
    let tau = check_psd(dec)?;
    Ok(dec.apply_spectral(|lam| if lam > tau { 1.0 / lam.sqrt() } else { 0.0 }))
}

pub fn sqrt_pinv(a: &Mat) -> Result<Mat> {
    sqrt_pinv_from(&sym_eig(a)?)
}

/// Heat kernel e^{-sL} for s >= 0.
pub fn heat_kernel_from(dec: &SpectralDecomposition, s: f64) -> Result<Mat> {
    if !s.is_finite() || s < 0.0 {
        return Err(GflError::Constraint(format!(
            "heat kernel time must be finite and nonnegative, got {s}"
        )));
    }
    Ok(dec.apply_spectral(|lam| (-s * lam).exp()))
}

pub fn heat_kernel(a: &Mat, s: f64) -> Result<Mat> {
    heat_kernel_from(&sym_eig(a)?, s)
}

/// Heat kernel with the all-ones mode removed: e^{-sL} - (1/n) 1 1^T. For a
/// connected-graph Laplacian this is the part that decays.
pub fn heat_kernel_deflated_from(dec: &SpectralDecomposition, s: f64) -> Result<Mat> {
    let mut h = heat_kernel_from(dec, s)?;
    let n = dec.n();
    h -= &Array2::from_elem((n, n), 1.0 / n as f64);
    Ok(h)
}

/// Pairwise effective resistances R_ij = (e_i - e_j)^T L^+ (e_i - e_j),
/// expanded as Lp_ii + Lp_jj - 2 Lp_ij.
pub fn effective_resistance_from(dec: &SpectralDecomposition) -> Result<Mat> {
    let lp = pinv_psd_from(dec)?;
    let n = lp.nrows();
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            r[[i, j]] = lp[[i, i]] + lp[[j, j]] - 2.0 * lp[[i, j]];
        }
    }
    Ok(r)
}

pub fn effective_resistance(a: &Mat) -> Result<Mat> {
    effective_resistance_from(&sym_eig(a)?)
}

/// Eigenvectors for the k largest eigenvalues, one per column, largest
/// first.
pub fn top_k_eigvecs(dec: &SpectralDecomposition, k: usize) -> Result<Mat> {
    let n = dec.n();
    if k == 0 || k > n {
        return Err(GflError::Constraint(format!(
            "need 1 <= k <= n for eigenvector slices, got k = {k}, n = {n}"
        )));
    }
    let mut v = Array2::zeros((n, k));
    for j in 0..k {
        v.column_mut(j).assign(&dec.eigenvectors.column(n - 1 - j));
    }
    Ok(v)
}

/// Eigenvectors for the k smallest eigenvalues above the null space,
/// smallest first. Null directions are those within PINV_TOL of zero
/// relative to the largest eigenvalue.
pub fn bottom_k_nonzero_eigvecs(dec: &SpectralDecomposition, k: usize) -> Result<Mat> {
    let tau = check_psd(dec)?;
    let n = dec.n();
    let first = dec.eigenvalues.iter().position(|&lam| lam > tau).unwrap();
    if k == 0 || first + k > n {
        return Err(GflError::Constraint(format!(
            "asked for {k} nonzero modes but only {} exist",
            n - first
        )));
    }
    let mut v = Array2::zeros((n, k));
    for j in 0..k {
        v.column_mut(j).assign(&dec.eigenvectors.column(first + j));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{centering, generate_csl, generate_fc, Graph};
    use crate::linalg::{max_abs, max_abs_diff};
    use ndarray::array;
    use proptest::prelude::*;

    fn path2_laplacian() -> Mat {
        array![[1.0, -1.0], [-1.0, 1.0]]
    }

    #[test]
    fn path2_pinv_frozen() {
        let lp = pinv_psd(&path2_laplacian()).unwrap();
        let expect = array![[0.25, -0.25], [-0.25, 0.25]];
        assert!(max_abs_diff(&lp, &expect) <= 1e-12);
    }

    #[test]
    fn path2_sqrt_pinv_frozen() {
        let sp = sqrt_pinv(&path2_laplacian()).unwrap();
        let v = 0.5 / 2f64.sqrt();
        assert!((v - 0.35355339059327373).abs() < 1e-16);
        let expect = array![[v, -v], [-v, v]];
        assert!(max_abs_diff(&sp, &expect) <= 1e-12);
        // squaring recovers the pseudoinverse
        let lp = pinv_psd(&path2_laplacian()).unwrap();
        assert!(max_abs_diff(&sp.dot(&sp), &lp) <= 1e-12);
    }

    #[test]
    fn path2_heat_frozen() {
        let h = heat_kernel(&path2_laplacian(), 0.5).unwrap();
        let a = 0.5 * (1.0 + (-1.0f64).exp());
        let b = 0.5 * (1.0 - (-1.0f64).exp());
        let expect = array![[a, b], [b, a]];
        assert!(max_abs_diff(&h, &expect) <= 1e-12);
        // four-digit reference values
        assert!((h[[0, 0]] - 0.6839).abs() < 5e-5);
        assert!((h[[0, 1]] - 0.3161).abs() < 5e-5);
    }

    #[test]
    fn heat_zero_time_is_identity() {
        let g = generate_fc(6, 1).unwrap();
        let h = heat_kernel(g.laplacian().as_mat(), 0.0).unwrap();
        assert!(max_abs_diff(&h, &Array2::eye(6)) <= 1e-10);
    }

    #[test]
    fn heat_rejects_negative_time() {
        assert!(heat_kernel(&path2_laplacian(), -0.1).is_err());
    }

    #[test]
    fn deflated_heat_annihilates_constants() {
        let g = generate_csl(10, 3, 4).unwrap();
        let hd = heat_kernel_deflated(&g).unwrap();
        let ones = Array2::from_elem((10, 1), 1.0);
        let out = hd.dot(&ones);
        assert!(max_abs(&out) <= 1e-10);
    }

    fn heat_kernel_deflated(g: &Graph) -> Result<Mat> {
        heat_kernel_deflated_from(&sym_eig(g.laplacian().as_mat()).unwrap(), 0.3)
    }

    #[test]
    fn k3_resistance_frozen() {
        let g = Graph::new(3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let r = effective_resistance(g.laplacian().as_mat()).unwrap();
        for i in 0..3 {
            assert!(r[[i, i]].abs() <= 1e-12);
            for j in 0..3 {
                if i != j {
                    assert!((r[[i, j]] - 2.0 / 3.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_edge_resistance_is_the_edge_value() {
        let g = Graph::new(2, vec![(0, 1, 4.0)]).unwrap();
        let r = effective_resistance(g.laplacian().as_mat()).unwrap();
        assert!((r[[0, 1]] - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn pseudoinverse_identities() {
        for g in [generate_fc(10, 2).unwrap(), generate_csl(10, 4, 3).unwrap()] {
            let l = g.laplacian().as_mat().clone();
            let lp = pinv_psd(&l).unwrap();
            let scale_l = max_abs(&l);
            let scale_lp = max_abs(&lp);
            assert!(max_abs_diff(&l.dot(&lp).dot(&l), &l) <= 1e-8 * scale_l);
            assert!(max_abs_diff(&lp.dot(&l).dot(&lp), &lp) <= 1e-8 * scale_lp);
            // L L^+ is the projector onto the complement of 1
            assert!(max_abs_diff(&l.dot(&lp), &centering(g.n)) <= 1e-8);
        }
    }

    #[test]
    fn pinv_rejects_zero_and_indefinite() {
        let z: Mat = Array2::zeros((3, 3));
        assert!(pinv_psd(&z).is_err());
        let ind = array![[1.0, 0.0], [0.0, -1.0]];
        assert!(pinv_psd(&ind).is_err());
    }

    #[test]
    fn eigvec_slices_on_diagonal_example() {
        let a = array![
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 3.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 7.0]
        ];
        let dec = sym_eig(&a).unwrap();
        let top = top_k_eigvecs(&dec, 2).unwrap();
        assert!(top[[3, 0]].abs() > 0.999); // eigenvalue 7
        assert!(top[[1, 1]].abs() > 0.999); // eigenvalue 3
        let bottom = bottom_k_nonzero_eigvecs(&dec, 2).unwrap();
        assert!(bottom[[2, 0]].abs() > 0.999); // eigenvalue 1, kernel skipped
        assert!(bottom[[1, 1]].abs() > 0.999); // eigenvalue 3
        assert!(bottom_k_nonzero_eigvecs(&dec, 4).is_err());
    }

    proptest! {
        #[test]
        fn resistance_matches_quadratic_form(seed in 0u64..40) {
            let g = generate_fc(7, seed).unwrap();
            let l = g.laplacian().as_mat().clone();
            let lp = pinv_psd(&l).unwrap();
            let r = effective_resistance(&l).unwrap();
            for i in 0..7 {
                for j in 0..7 {
                    let mut e = Array2::zeros((7, 1));
                    e[[i, 0]] = 1.0;
                    e[[j, 0]] -= 1.0;
                    let q = e.t().dot(&lp).dot(&e)[[0, 0]];
                    prop_assert!((r[[i, j]] - q).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn resistance_is_a_metric(seed in 0u64..40) {
            let g = generate_csl(8, 3, seed).unwrap();
            let r = effective_resistance(g.laplacian().as_mat()).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert!((r[[i, j]] - r[[j, i]]).abs() <= 1e-10);
                    for k in 0..8 {
                        prop_assert!(r[[i, j]] <= r[[i, k]] + r[[k, j]] + 1e-10);
                    }
                }
            }
        }

        #[test]
        fn heat_semigroup(seed in 0u64..20, s in 0.05f64..1.0, t in 0.05f64..1.0) {
            let g = generate_fc(12, seed).unwrap();
            let dec = sym_eig(g.laplacian().as_mat()).unwrap();
            let hs = heat_kernel_from(&dec, s).unwrap();
            let ht = heat_kernel_from(&dec, t).unwrap();
            let hst = heat_kernel_from(&dec, s + t).unwrap();
            prop_assert!(max_abs_diff(&hs.dot(&ht), &hst) <= 1e-7);
        }
    }
}
