//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Hermitian tolerance on `max |A - A^H|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as round-off and clipped.
pub const PSD_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the orthonormal eigenvectors matching `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(a: &CMatrix) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        let n = a.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V^H`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let d = DVector::from_iterator(n, self.values.iter().map(|&v| C64::new(f(v), 0.0)));
        let scaled = CMatrix::from_fn(n, n, |r, c| self.vectors[(r, c)] * d[c]);
        let out = &scaled * self.vectors.adjoint();
        hermitian_part(&out)
    }
}

pub fn max_hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^H) / 2`, which also forces an exactly real diagonal.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    CMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Checks squareness, Hermitian symmetry and numerical positive semidefiniteness.
pub fn validate_hermitian_psd(a: &CMatrix) -> Result<HermitianEigen> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
    }
    let deviation = max_hermitian_deviation(a);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = HermitianEigen::new(&hermitian_part(a));
    if eig.min() < -PSD_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
        });
    }
    Ok(eig)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn is_scaled_identity(a: &CMatrix) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let d = a[(0, 0)];
    (0..n).all(|i| (0..n).all(|j| if i == j { a[(i, j)] == d } else { a[(i, j)] == C64::new(0.0, 0.0) }))
}

pub fn real_trace(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Lower Cholesky factor of a Hermitian positive definite matrix, in place
/// (upper triangle left untouched). Returns `false` if a pivot is not positive.
pub(crate) fn cholesky_in_place(a: &mut [C64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let ljj = d.sqrt();
        a[j * n + j] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// Diagonal of `A^{-1}` and `log det A` from the lower Cholesky factor `L`
/// (row-major, `A = L L^H`). Uses `(A^{-1})_kk = || L^{-1} e_k ||^2`.
pub(crate) fn inverse_diagonal_and_logdet(l: &[C64], n: usize, diag: &mut [f64], col: &mut [C64]) -> f64 {
    let mut logdet = 0.0;
    for i in 0..n {
        logdet += 2.0 * l[i * n + i].re.ln();
    }
    for (k, d) in diag.iter_mut().enumerate().take(n) {
        // forward substitution for L y = e_k; y_i = 0 for i < k
        let mut acc = 0.0;
        for i in k..n {
            let mut s = if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for j in k..i {
                s -= l[i * n + j] * col[j];
            }
            let y = s / l[i * n + i].re;
            col[i] = y;
            acc += y.norm_sqr();
        }
        *d = acc;
    }
    logdet
}
