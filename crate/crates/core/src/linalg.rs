//! Small dense complex linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `I_{T,M}`: the first `m` columns of the `t × t` identity.
pub fn identity_columns(t: usize, m: usize) -> CMatrix {
    CMatrix::from_fn(t, m, |r, c| if r == c { ONE } else { ZERO })
}

pub fn max_abs(mat: &CMatrix) -> f64 {
    mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(mat: &CMatrix) -> bool {
    mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entry of `|XᴴX − I|`.
pub fn orthonormality_deviation(x: &CMatrix) -> f64 {
    let mut gram = x.adjoint() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] -= ONE;
    }
    max_abs(&gram)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(mat: &CMatrix) -> Vec<f64> {
    // symmetrize to absorb round-off in the lower triangle
    let sym = (mat + mat.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn det(mat: &CMatrix) -> C64 {
    mat.clone().lu().determinant()
}

/// Thin QR with the R diagonal made real positive, so the Q factor is unique.
pub fn qr_positive(mat: &CMatrix) -> CMatrix {
    let qr = mat.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..q.ncols() {
        let d = r[(k, k)];
        let n = d.norm();
        if n > 0.0 {
            let phase = d / n;
            for row in 0..q.nrows() {
                q[(row, k)] *= phase;
            }
        }
    }
    q
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return Err(Error::Overflow("binomial coefficient"));
        }
    }
    Ok(acc as u64)
}

/// Determinant of a small row-major `n × n` matrix by partial-pivot elimination.
/// Consumes the buffer as scratch space.
pub fn det_in_place(a: &mut [C64], n: usize) -> C64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = ONE;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm_sqr();
        for row in col + 1..n {
            let v = a[row * n + col].norm_sqr();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return ZERO;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f != ZERO {
                for k in col + 1..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= f * v;
                }
            }
        }
    }
    det
}
