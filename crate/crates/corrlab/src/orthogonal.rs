//! Orthogonal matrices with a certified orthonormality invariant.

use nalgebra::DMatrix;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum allowed per-entry deviation of `U^T U` from the identity.
pub const ORTHO_TOL: f64 = 1e-12;

/// An n-by-n real matrix with `U^T U = I` within [`ORTHO_TOL`] per entry.
///
/// Serialized as a row-major nested array; deserialization re-validates the
/// invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMatrix {
    m: DMatrix<f64>,
}

impl OrthogonalMatrix {
    pub fn identity(n: usize) -> Self {
        OrthogonalMatrix {
            m: DMatrix::identity(n, n),
        }
    }

    /// Validating constructor.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "orthogonal matrix must be square",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let u = OrthogonalMatrix { m };
        let defect = u.orthonormality_defect();
        if defect > ORTHO_TOL {
            return Err(Error::NotOrthogonal { defect });
        }
        Ok(u)
    }

    /// Constructor for matrices known to be orthogonal (e.g. fresh QR output).
    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        OrthogonalMatrix { m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "orthogonal matrix rows",
                    expected: n,
                    got: r.len(),
                });
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m)
    }

    /// Signed permutation: row `i` is `sign[i] * e_{perm[i]}`.
    pub fn signed_permutation(perm: &[usize], signs: &[f64]) -> Result<Self> {
        let n = perm.len();
        if signs.len() != n {
            return Err(Error::DimensionMismatch {
                context: "signed permutation",
                expected: n,
                got: signs.len(),
            });
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::contract("invalid permutation"));
            }
            seen[p] = true;
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, perm[i])] = signs[i].signum();
        }
        Ok(OrthogonalMatrix { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn det(&self) -> f64 {
        self.m.clone().lu().determinant()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.m.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.m.row(i).iter().copied().collect()
    }

    /// Row-major flat copy, for tight membership loops.
    pub fn to_flat_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> OrthogonalMatrix {
        OrthogonalMatrix {
            m: self.m.transpose(),
        }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &OrthogonalMatrix) -> OrthogonalMatrix {
        OrthogonalMatrix {
            m: &self.m * &other.m,
        }
    }

    /// `U x` into a fresh vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.m[(i, j)] * x[j];
            }
            out[i] = s;
        }
        out
    }

    /// `U^T x` into a fresh vector.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self.m[(i, j)] * x[i];
            }
            out[j] = s;
        }
        out
    }

    /// Right-multiply in place by the Givens rotation `V_{(i,j)}^{(alpha)}`.
    ///
    /// Touches only columns `i` and `j`.
    pub fn right_multiply_givens(&mut self, i: usize, j: usize, alpha: f64) {
        let (c, s) = (alpha.cos(), alpha.sin());
        let n = self.dim();
        for r in 0..n {
            let a = self.m[(r, i)];
            let b = self.m[(r, j)];
            // Column action of V: col_i' = c*col_i + s*col_j, col_j' = -s*col_i + c*col_j
            self.m[(r, i)] = c * a + s * b;
            self.m[(r, j)] = -s * a + c * b;
        }
    }

    /// Max per-entry deviation of `U^T U` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let g = self.m.transpose() * &self.m;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Re-orthonormalize via QR (sign-fixed to stay close to the input).
    /// Call after long Givens chains.
    pub fn reorthonormalize(&mut self) {
        let qr = self.m.clone().qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..self.dim() {
            if r[(j, j)] < 0.0 {
                for i in 0..self.dim() {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        self.m = q;
    }
}

impl Serialize for OrthogonalMatrix {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.dim()).map(|i| self.row(i)).collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for OrthogonalMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        OrthogonalMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::{haar_orthogonal, Stream};

    #[test]
    fn identity_roundtrip() {
        let u = OrthogonalMatrix::identity(3);
        let j = serde_json::to_string(&u).unwrap();
        let v: OrthogonalMatrix = serde_json::from_str(&j).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn rejects_non_orthogonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(OrthogonalMatrix::new(m).is_err());
    }

    #[test]
    fn givens_chain_and_reorthonormalize() {
        let mut s = Stream::root(9).derive("givens", 0);
        let mut u = haar_orthogonal(&mut s, 4);
        for k in 0..2000 {
            u.right_multiply_givens(k % 4, (k + 1) % 4, 0.3);
        }
        u.reorthonormalize();
        assert!(u.orthonormality_defect() <= ORTHO_TOL);
    }

    #[test]
    fn apply_transpose_consistent() {
        let mut s = Stream::root(10).derive("apply", 0);
        let u = haar_orthogonal(&mut s, 3);
        let x = vec![0.3, -1.2, 2.0];
        let y = u.apply(&x);
        let back = u.apply_transpose(&y);
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }
}
