//! Thin wrappers over BLAS/LAPACK used by the simulator and the oracles.

use cblas_sys::{cblas_dsyrk, CBLAS_LAYOUT, CBLAS_TRANSPOSE, CBLAS_UPLO};
use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Cholesky, InverseC, SolveC, UPLO};

use crate::error::{Error, Result};

/// `scale · AᵀA`, computed with a symmetric rank-k update.
pub fn gram_t(a: ArrayView2<'_, f64>, scale: f64) -> Array2<f64> {
    syrk(a, scale, true)
}

/// `scale · AAᵀ`, computed with a symmetric rank-k update.
pub fn gram(a: ArrayView2<'_, f64>, scale: f64) -> Array2<f64> {
    syrk(a, scale, false)
}

fn syrk(a: ArrayView2<'_, f64>, scale: f64, transpose: bool) -> Array2<f64> {
    let a = a.as_standard_layout();
    let (rows, cols) = a.dim();
    let (n, k) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut c = Array2::<f64>::zeros((n, n));
    if n == 0 || k == 0 {
        return c;
    }
    let trans = if transpose { CBLAS_TRANSPOSE::CblasTrans } else { CBLAS_TRANSPOSE::CblasNoTrans };
    // SAFETY: `a` is a contiguous row-major rows×cols buffer and `c` a
    // contiguous n×n buffer; the leading dimensions match those shapes.
    unsafe {
        cblas_dsyrk(
            CBLAS_LAYOUT::CblasRowMajor,
            CBLAS_UPLO::CblasLower,
            trans,
            n as i32,
            k as i32,
            scale,
            a.as_ptr(),
            cols as i32,
            0.0,
            c.as_mut_ptr(),
            n as i32,
        );
    }
    for i in 0..n {
        for j in (i + 1)..n {
            c[[i, j]] = c[[j, i]];
        }
    }
    c
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

/// Caps OpenBLAS's own thread pool. Callers that parallelize over seeds or
/// grid points set this to one to avoid oversubscription.
pub fn set_blas_threads(n: usize) {
    // SAFETY: plain setter exported by the linked OpenBLAS.
    unsafe { openblas_set_num_threads(n.max(1) as std::os::raw::c_int) }
}

/// Adds `shift` to the diagonal in place.
pub fn shift_diagonal(m: &mut Array2<f64>, shift: f64) {
    m.diag_mut().mapv_inplace(|d| d + shift);
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    a.solvec(b).map_err(|e| Error::Singular(format!("Cholesky solve failed: {e}")))
}

/// Trace of `A⁻¹` for symmetric positive-definite `A`.
pub fn spd_inverse_trace(a: &Array2<f64>) -> Result<f64> {
    let inv = a.invc().map_err(|e| Error::Singular(format!("Cholesky inverse failed: {e}")))?;
    Ok(inv.diag().sum())
}

/// Returns `true` when `A` admits a Cholesky factorization.
pub fn is_positive_definite(a: &Array2<f64>) -> bool {
    a.cholesky(UPLO::Lower).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gram_matches_naive_products() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let g = gram_t(a.view(), 0.5);
        let naive = a.t().dot(&a) * 0.5;
        assert!((&g - &naive).iter().all(|v| v.abs() < 1e-14));
        let g = gram(a.view(), 2.0);
        let naive = a.dot(&a.t()) * 2.0;
        assert!((&g - &naive).iter().all(|v| v.abs() < 1e-14));
        // non-standard layout input
        let at = a.t();
        let g = gram(at, 1.0);
        assert!((&g - &a.t().dot(&a)).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn inverse_trace_of_diagonal() {
        let a = Array2::from_diag(&array![1.0, 2.0, 4.0]);
        assert!((spd_inverse_trace(&a).unwrap() - 1.75).abs() < 1e-14);
        let x = spd_solve(&a, &array![1.0, 1.0, 1.0]).unwrap();
        assert!((&x - &array![1.0, 0.5, 0.25]).iter().all(|v| v.abs() < 1e-15));
        let mut b = Array2::from_diag(&array![1.0, -1.0]);
        assert!(!is_positive_definite(&b));
        shift_diagonal(&mut b, 2.0);
        assert!(is_positive_definite(&b));
    }
}
