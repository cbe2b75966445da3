//! Dense complex linear algebra.
//!
//! Only the handful of operations the link model needs: products, conjugate
//! transposes, Kronecker products, Frobenius norms and the scalar inverse used
//! by the least-squares estimator and the zero-forcing projector. Storage is
//! row-major `Complex<f64>`; problem sizes stay well below 64×64 so there is no
//! blocking or sparse handling.

use num_complex::Complex;
use std::fmt;
use thiserror::Error;

/// Double-precision complex scalar.
pub type C64 = Complex<f64>;

/// Scalars with magnitude below this are treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("entry count {len} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("singular scalar (|x| = {0:e})")]
    SingularScalar(f64),
}

/// Row-major dense complex matrix. Vectors are `n×1` (column) or `1×n` (row).
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// `n×1` column vector.
    pub fn column(entries: Vec<C64>) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries,
        }
    }

    /// `1×n` row vector.
    pub fn row(entries: Vec<C64>) -> Self {
        Self {
            rows: 1,
            cols: entries.len(),
            data: entries,
        }
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![z],
        }
    }

    /// Square diagonal matrix with `diag` on the main diagonal.
    pub fn diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// Single entry of a `1×1` matrix.
    pub fn to_scalar(&self) -> Option<C64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Plain transpose (no conjugation).
    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Kronecker product: block `(i, j)` of the result is `a[i][j] * b`.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        ComplexMatrix::from_fn(rows, cols, |r, c| {
            self[(r / other.rows, c / other.cols)] * other[(r % other.rows, c % other.cols)]
        })
    }

    pub fn frob_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sqr().sqrt()
    }

    pub fn scale(&self, k: C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * k).collect(),
        }
    }

    pub fn scale_real(&self, k: f64) -> ComplexMatrix {
        self.scale(C64::new(k, 0.0))
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &ComplexMatrix,
        op: &'static str,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<ComplexMatrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Multiply every column `j` by `d[j]`, i.e. `self · diag(d)`.
    pub fn scale_columns(&self, d: &[C64]) -> Result<ComplexMatrix, LinalgError> {
        if d.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                op: "scale_columns",
                lhs: self.shape(),
                rhs: (d.len(), d.len()),
            });
        }
        Ok(ComplexMatrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)] * d[c]
        }))
    }

    /// Multiply every row `i` by `d[i]`, i.e. `diag(d) · self`.
    pub fn scale_rows(&self, d: &[C64]) -> Result<ComplexMatrix, LinalgError> {
        if d.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "scale_rows",
                lhs: (d.len(), d.len()),
                rhs: self.shape(),
            });
        }
        Ok(ComplexMatrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)] * d[r]
        }))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    a.matmul(b)
}

pub fn hermitian(a: &ComplexMatrix) -> ComplexMatrix {
    a.hermitian()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

pub fn frob_norm(a: &ComplexMatrix) -> f64 {
    a.frob_norm()
}

/// `1/x` for a complex scalar, refusing anything numerically zero.
pub fn solve_1x1_or_pinv_scalar(x: C64) -> Result<C64, LinalgError> {
    let mag = x.norm();
    if !(mag >= SINGULAR_THRESHOLD) {
        return Err(LinalgError::SingularScalar(mag));
    }
    Ok(x.inv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn triple_loop(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = c(0.0, 0.0);
                for k in 0..a.cols() {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Householder reflector `I - 2 u uᴴ / (uᴴ u)`.
    fn householder(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let u = random(n, 1, rng);
        let uu = u.frob_norm_sqr();
        let outer = u.matmul(&u.hermitian()).unwrap();
        ComplexMatrix::identity(n)
            .sub(&outer.scale_real(2.0 / uu))
            .unwrap()
    }

    #[test]
    fn identity_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(2, 5, &mut rng);
        assert_eq!(ComplexMatrix::identity(2).matmul(&x).unwrap(), x);
    }

    #[test]
    fn i_squared() {
        let i = ComplexMatrix::scalar(c(0.0, 1.0));
        assert_eq!(i.matmul(&i).unwrap().to_scalar().unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random(3, 3, &mut rng);
            let b = random(3, 3, &mut rng);
            assert!(max_abs_diff(&a.matmul(&b).unwrap(), &triple_loop(&a, &b)) < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hermitian_cases() {
        let a = ComplexMatrix::scalar(c(1.0, 2.0));
        assert_eq!(a.hermitian().to_scalar().unwrap(), c(1.0, -2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(2, 3, &mut rng);
        let h = x.hermitian();
        assert_eq!(h.shape(), (3, 2));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(h[(j, i)], x[(i, j)].conj());
            }
        }
        assert_eq!(h.hermitian(), x);
        assert!((h.frob_norm() - x.frob_norm()).abs() < 1e-14);
    }

    #[test]
    fn kron_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(2, 3, &mut rng);
        assert_eq!(ComplexMatrix::scalar(c(1.0, 0.0)).kron(&x), x);

        let a = ComplexMatrix::column(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let b = ComplexMatrix::column(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let k = a.kron(&b);
        let expect: Vec<C64> = [1.0, 0.0, 2.0, 0.0].iter().map(|&v| c(v, 0.0)).collect();
        assert_eq!(k.as_slice(), expect.as_slice());

        let a = random(2, 1, &mut rng);
        let b = random(3, 1, &mut rng);
        let k = a.kron(&b);
        assert_eq!(k.shape(), (6, 1));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(k[(i * 3 + j, 0)], a[(i, 0)] * b[(j, 0)]);
            }
        }
    }

    #[test]
    fn frob_norm_cases() {
        assert_eq!(ComplexMatrix::zeros(3, 4).frob_norm(), 0.0);
        let v = ComplexMatrix::row(vec![c(3.0, 0.0), c(0.0, 4.0)]);
        assert!((v.frob_norm() - 5.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(4, 3, &mut rng);
        let mut acc = 0.0;
        for z in x.as_slice() {
            acc += z.re * z.re + z.im * z.im;
        }
        assert!((x.frob_norm() - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn scalar_inverse() {
        assert_eq!(solve_1x1_or_pinv_scalar(c(2.0, 0.0)).unwrap(), c(0.5, 0.0));
        let inv_i = solve_1x1_or_pinv_scalar(c(0.0, 1.0)).unwrap();
        assert!((inv_i - c(0.0, -1.0)).norm() < 1e-15);
        assert!(matches!(
            solve_1x1_or_pinv_scalar(c(1e-40, 0.0)),
            Err(LinalgError::SingularScalar(_))
        ));
        assert!(solve_1x1_or_pinv_scalar(c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let a = random(3, 4, &mut rng);
            let b = random(4, 2, &mut rng);
            let cm = random(2, 5, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&cm).unwrap();
            let right = a.matmul(&b.matmul(&cm).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().frob_norm() / left.frob_norm();
            assert!(rel < 1e-10);
        }
    }

    #[test]
    fn unitary_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..8 {
            let u = householder(n, &mut rng);
            let x = random(n, 3, &mut rng);
            let ux = u.matmul(&x).unwrap();
            assert!((ux.frob_norm() - x.frob_norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn diag_scaling_matches_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(3, 4, &mut rng);
        let d: Vec<C64> = random(4, 1, &mut rng).into_vec();
        let via_diag = a.matmul(&ComplexMatrix::diag(&d)).unwrap();
        assert!(max_abs_diff(&a.scale_columns(&d).unwrap(), &via_diag) < 1e-15);
        let e: Vec<C64> = random(3, 1, &mut rng).into_vec();
        let via_diag = ComplexMatrix::diag(&e).matmul(&a).unwrap();
        assert!(max_abs_diff(&a.scale_rows(&e).unwrap(), &via_diag) < 1e-15);
    }
}
