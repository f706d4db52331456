//! Thin FFI shim over the system LAPACKE for the dense nonsymmetric complex
//! eigenproblem. Column-major only; num_complex::Complex64 matches the C99
//! double-complex ABI.

use crate::error::{Error, Result};
use num_complex::Complex64;

const LAPACK_COL_MAJOR: i32 = 102;

extern "C" {
    fn LAPACKE_zgeev(
        matrix_layout: i32,
        jobvl: u8,
        jobvr: u8,
        n: i32,
        a: *mut Complex64,
        lda: i32,
        w: *mut Complex64,
        vl: *mut Complex64,
        ldvl: i32,
        vr: *mut Complex64,
        ldvr: i32,
    ) -> i32;
}

/// Eigenvalues and right eigenvectors of a dense complex matrix.
///
/// `a` is column-major n x n and is destroyed. Returns (w, vr) with the
/// eigenvector for w[i] in vr[i*n..(i+1)*n].
pub fn zgeev_right(mut a: Vec<Complex64>, n: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    assert_eq!(a.len(), n * n, "matrix buffer must be n x n");
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vr = vec![Complex64::new(0.0, 0.0); n * n];
    let info = unsafe {
        LAPACKE_zgeev(
            LAPACK_COL_MAJOR,
            b'N',
            b'V',
            n as i32,
            a.as_mut_ptr(),
            n as i32,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            1,
            vr.as_mut_ptr(),
            n as i32,
        )
    };
    if info != 0 {
        return Err(Error::EigenFailure(format!(
            "LAPACKE_zgeev returned info = {info}"
        )));
    }
    Ok((w, vr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_eigenvalues() {
        let n = 3;
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        a[0] = Complex64::new(0.9, 0.0);
        a[4] = Complex64::new(0.5, 0.0);
        a[8] = Complex64::new(0.1, 0.0);
        let (w, vr) = zgeev_right(a, n).unwrap();
        let mut mods: Vec<f64> = w.iter().map(|z| z.norm()).collect();
        mods.sort_by(|x, y| y.partial_cmp(x).unwrap());
        assert!((mods[0] - 0.9).abs() < 1e-14);
        assert!((mods[1] - 0.5).abs() < 1e-14);
        assert!((mods[2] - 0.1).abs() < 1e-14);
        assert_eq!(vr.len(), 9);
    }

    #[test]
    fn rotation_block_has_complex_pair() {
        // [[0, -1], [1, 0]] has eigenvalues +-i
        let a = vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let (w, _) = zgeev_right(a, 2).unwrap();
        let mut ims: Vec<f64> = w.iter().map(|z| z.im).collect();
        ims.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
    }
}
