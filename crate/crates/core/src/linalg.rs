//! Dense symmetric linear algebra: Cholesky log-determinants, inverses and
//! a cyclic Jacobi eigensolver.
//!
//! Matrices are small (a training batch, or an evaluation subset of at most a
//! few hundred designs) so everything is stored densely in row-major order.

use crate::error::{Error, Result};

/// Jitter values tried in order when a similarity matrix is numerically
/// singular. Duplicate designs make the matrix exactly rank deficient.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Default cap on Jacobi sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// A dense real symmetric matrix.
///
/// Construction symmetrizes the input as `(M + Mᵀ) / 2`, so `get(i, j)` and
/// `get(j, i)` are always bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch {
                context: "SymMatrix::new",
                expected: n * n,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SymMatrix entries"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Ok(Self { n, data })
    }

    /// Builds the matrix from the upper triangle of `f`; `f(i, j)` is only
    /// called with `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFinite("SymMatrix entries"));
                }
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { n, data }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Principal submatrix on the given (ordered) indices.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let k = idx.len();
        let mut data = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        SymMatrix { n: k, data }
    }

    /// Dense product `self · other` (other is row-major `n × n`).
    pub fn matmul_dense(&self, other: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other[k * n + j];
                }
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor, row-major `n × n` with zeros above the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `(L Lᵀ) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.get(i, k) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.get(k, i) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
    }

    /// `(L Lᵀ)⁻¹`, symmetrized.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        SymMatrix::new(n, inv).expect("inverse of a finite factor is finite")
    }
}

/// Factors `M + jitter·I = L Lᵀ`.
///
/// A pivot counts as non-positive when it falls below `n·ε·max|diag|`; pivots
/// at that level are rounding noise and would poison the log-determinant and
/// any gradient built on the inverse.
pub fn cholesky(m: &SymMatrix, jitter: f64) -> Result<CholeskyFactor> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {jitter}")));
    }
    let n = m.order();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max((m.get(i, i) + jitter).abs()));
    let tol = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.get(j, j) + jitter;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(CholeskyFactor { n, data: l, jitter })
}

/// Cholesky factor of `M + jitter·I` together with `log det(M + jitter·I)`.
pub fn cholesky_logdet(m: &SymMatrix, jitter: f64) -> Result<(CholeskyFactor, f64)> {
    let f = cholesky(m, jitter)?;
    let logdet = f.logdet();
    Ok((f, logdet))
}

/// Walks [`JITTER_LADDER`] until the factorization succeeds.
pub fn cholesky_with_ladder(m: &SymMatrix, ladder: &[f64]) -> Result<CholeskyFactor> {
    let mut last = Error::DegenerateBatch;
    for &j in ladder {
        match cholesky(m, j) {
            Ok(f) => return Ok(f),
            Err(e @ Error::NotPositiveDefinite { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    match last {
        Error::NotPositiveDefinite { .. } => Err(Error::DegenerateBatch),
        e => Err(e),
    }
}

/// `(M + jitter·I)⁻¹` via Cholesky.
pub fn sym_inverse(m: &SymMatrix, jitter: f64) -> Result<SymMatrix> {
    Ok(cholesky(m, jitter)?.inverse())
}

/// Eigenvalues in descending order, with orthonormal eigenvectors stored as
/// columns of a row-major `n × n` matrix when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
    pub vectors: Option<Vec<f64>>,
}

impl EigenSpectrum {
    /// Column `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> Option<Vec<f64>> {
        let v = self.vectors.as_ref()?;
        let n = self.values.len();
        Some((0..n).map(|i| v[i * n + k]).collect())
    }
}

pub fn sym_eigen(m: &SymMatrix) -> Result<EigenSpectrum> {
    jacobi(m, DEFAULT_MAX_SWEEPS, true)
}

pub fn sym_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(jacobi(m, DEFAULT_MAX_SWEEPS, false)?.values)
}

/// Cyclic Jacobi rotations.
///
/// Off-diagonal entries that are negligible relative to both diagonal
/// entries are flushed to zero after the first few sweeps; the iteration
/// stops once the off-diagonal part is exactly zero.
pub fn jacobi(m: &SymMatrix, max_sweeps: usize, want_vectors: bool) -> Result<EigenSpectrum> {
    let n = m.order();
    let mut a = m.as_slice().to_vec();
    let mut v = if want_vectors {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        Some(v)
    } else {
        None
    };

    let mut converged = n <= 1;
    for sweep in 0..max_sweeps {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].abs())
            .sum();
        if off == 0.0 {
            converged = true;
            break;
        }
        let threshold = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    if !converged {
        let off_zero = (0..n).all(|i| ((i + 1)..n).all(|j| a[i * n + j] == 0.0));
        if !off_zero {
            return Err(Error::NoConvergence { sweeps: max_sweeps });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = v.map(|v| {
        let mut sorted = vec![0.0; n * n];
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..n {
                sorted[r * n + new_col] = v[r * n + old_col];
            }
        }
        sorted
    });
    Ok(EigenSpectrum { values, vectors })
}

/// Determinant of a general square row-major matrix by LU with partial
/// pivoting. Exactly singular inputs return 0.
pub fn determinant(n: usize, data: &[f64]) -> f64 {
    assert_eq!(data.len(), n * n, "determinant: expected {n}x{n} data");
    let mut a = data.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        let pivot = a[pivot_row * n + col];
        if pivot == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            det = -det;
        }
        det *= pivot;
        for r in (col + 1)..n {
            let f = a[r * n + col] / pivot;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}
