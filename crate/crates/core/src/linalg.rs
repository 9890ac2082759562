//! Dense symmetric linear algebra and the isotropic squared-exponential kernel.
//!
//! Matrices are `nalgebra` dynamic matrices. Every determinant is carried in
//! log space; nothing here ever forms a raw determinant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default diagonal inflation added to kernel matrices.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Absolute asymmetry tolerated before factorization.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Multiplier applied to the jitter for the single retry after a failed factorization.
pub const JITTER_RETRY_FACTOR: f64 = 100.0;

/// Builds a matrix from row vectors, rejecting ragged or non-finite input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Shape("ragged rows".into()));
    }
    let m = Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    match m.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::Data(format!(
            "{what} has a non-finite entry at row {}, column {}",
            k % m.nrows(),
            k / m.nrows()
        ))),
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lengthscale must be positive, got {theta}")))
    }
}

/// `exp(-||u - v||^2 / theta)`.
pub fn sq_exp(u: &[f64], v: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "points of dimension {} and {}",
            u.len(),
            v.len()
        )));
    }
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / theta).exp())
}

#[inline]
fn row_sq_dist(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    let mut d2 = 0.0;
    for k in 0..a.ncols() {
        let diff = a[(i, k)] - b[(j, k)];
        d2 += diff * diff;
    }
    d2
}

/// Symmetric kernel matrix over the rows of `a`, with `jitter` on the diagonal.
pub fn kernel_matrix(a: &Matrix, theta: f64, jitter: f64) -> Result<Matrix> {
    check_theta(theta)?;
    if a.nrows() == 0 {
        return Err(Error::Shape("kernel matrix of an empty design".into()));
    }
    if jitter < 0.0 {
        return Err(Error::Domain(format!("negative jitter {jitter}")));
    }
    let n = a.nrows();
    let mut k = Matrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0 + jitter;
        for i in (j + 1)..n {
            let v = (-row_sq_dist(a, i, a, j) / theta).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross kernel between the rows of `a` (m rows) and `b` (n rows); no jitter.
pub fn cross_kernel(a: &Matrix, b: &Matrix, theta: f64) -> Result<Matrix> {
    check_theta(theta)?;
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "cross kernel between {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(Matrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (-row_sq_dist(a, i, b, j) / theta).exp()
    }))
}

/// Cholesky factorization of a symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    source: Matrix,
    lower: Matrix,
    log_det: f64,
}

/// Factorizes `m` after symmetrizing it; rejects asymmetry beyond [`SYMMETRY_TOL`].
pub fn spd_factorize(m: &Matrix) -> Result<SpdFactor> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape(format!(
            "cannot factorize a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("cannot factorize an empty matrix".into()));
    }
    let mut source = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > SYMMETRY_TOL || !a.is_finite() {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
            let avg = 0.5 * (a + b);
            source[(i, j)] = avg;
            source[(j, i)] = avg;
        }
    }

    let mut lower = Matrix::zeros(n, n);
    let mut log_det = 0.0;
    for j in 0..n {
        let mut pivot = source[(j, j)];
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = pivot.sqrt();
        lower[(j, j)] = ljj;
        log_det += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let mut s = source[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = s / ljj;
        }
    }
    Ok(SpdFactor {
        source,
        lower,
        log_det,
    })
}

/// Factorizes `base + jitter * I`, retrying once with `JITTER_RETRY_FACTOR * jitter`.
///
/// Returns the factor together with the jitter that succeeded.
pub fn spd_factorize_jittered(base: &Matrix, jitter: f64) -> Result<(SpdFactor, f64)> {
    let attempt = |eps: f64| {
        let mut m = base.clone();
        for i in 0..m.nrows().min(m.ncols()) {
            m[(i, i)] += eps;
        }
        spd_factorize(&m)
    };
    match attempt(jitter) {
        Ok(f) => Ok((f, jitter)),
        Err(Error::NotPositiveDefinite { .. }) => {
            let eps = if jitter > 0.0 {
                jitter * JITTER_RETRY_FACTOR
            } else {
                DEFAULT_JITTER
            };
            attempt(eps).map(|f| (f, eps))
        }
        Err(e) => Err(e),
    }
}

/// Factor of the kernel matrix over `a`, with the jitter retry policy.
pub fn kernel_factor(a: &Matrix, theta: f64, jitter: f64) -> Result<SpdFactor> {
    let base = kernel_matrix(a, theta, 0.0)?;
    spd_factorize_jittered(&base, jitter).map(|(f, _)| f)
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn source(&self) -> &Matrix {
        &self.source
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows == self.dim() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "right-hand side has {rows} rows, factor is {n}x{n}",
                n = self.dim()
            )))
        }
    }

    /// `L^{-1} B`.
    pub fn half_solve(&self, b: &Matrix) -> Result<Matrix> {
        self.check_rows(b.nrows())?;
        let mut x = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut x);
        Ok(x)
    }

    /// `M^{-1} B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let mut x = self.half_solve(b)?;
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut x);
        Ok(x)
    }

    pub fn solve_vector(&self, b: &Vector) -> Result<Vector> {
        self.check_rows(b.len())?;
        let mut x = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut x);
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut x);
        Ok(x)
    }

    /// `B^T M^{-1} B`, symmetrized.
    pub fn inv_quad_form(&self, b: &Matrix) -> Result<Matrix> {
        let half = self.half_solve(b)?;
        let mut q = half.transpose() * &half;
        symmetrize_in_place(&mut q);
        Ok(q)
    }

    /// `L L^T`, for checking a factorization against its source.
    pub fn reconstruct(&self) -> Matrix {
        &self.lower * self.lower.transpose()
    }
}

pub fn symmetrize_in_place(m: &mut Matrix) {
    let n = m.nrows().min(m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `log |B ⊗ K| = n log|B| + S log|K|` for `B` of size S and `K` of size n.
pub fn kron_logdet(b: &Matrix, k: &Matrix) -> Result<f64> {
    let fb = spd_factorize(b)?;
    let fk = spd_factorize(k)?;
    Ok(fk.dim() as f64 * fb.log_det() + fb.dim() as f64 * fk.log_det())
}
