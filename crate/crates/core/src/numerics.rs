//! Dense real-matrix kernels shared by the rest of the crate.
//!
//! Everything here works on small (≤ 64×64) `f64` matrices: the matrix
//! exponential, eigenvalue magnitudes, LU solves with a pivot-based
//! conditioning estimate, and the discrete algebraic Riccati equation.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Pivot ratio below which [`solve_linear`] declares a matrix singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

const EIGEN_MAX_SWEEPS: usize = 10_000;
const DARE_MAX_ITERATIONS: usize = 200_000;
const DARE_TOLERANCE: f64 = 1e-12;

/// Builds a matrix from row-major data, rejecting NaN/Inf entries.
pub fn matrix_from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "matrix_from_rows",
            expected: rows * cols,
            actual: data.len(),
        });
    }
    let m = Matrix::from_row_slice(rows, cols, data);
    ensure_finite(&m, "matrix_from_rows")?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

// Degree-13 Padé coefficients (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring around a degree-13 Padé core.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    let n = ensure_square(m)?;
    ensure_finite(m, "expm input")?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::ExpOverflow { norm });
    }
    let a = m * 2f64.powi(-squarings);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let mut r = solve_linear(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().all(|x| x.is_finite()) {
        Ok(r)
    } else {
        Err(Error::ExpOverflow { norm })
    }
}

/// Eigenvalue magnitudes, sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    pub magnitudes: Vec<f64>,
    pub spectral_radius: f64,
}

impl EigenSummary {
    pub fn min_magnitude(&self) -> f64 {
        self.magnitudes.last().copied().unwrap_or(0.0)
    }
}

/// All eigenvalues of a square real matrix, from a real Schur form
/// computed by shifted QR sweeps.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "eigenvalues input")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::EigenNoConvergence {
            iterations: EIGEN_MAX_SWEEPS,
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn eig_magnitudes(m: &Matrix) -> Result<EigenSummary> {
    let mut magnitudes: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.norm()).collect();
    magnitudes.sort_by(|a, b| b.total_cmp(a));
    let spectral_radius = magnitudes.first().copied().unwrap_or(0.0);
    Ok(EigenSummary {
        magnitudes,
        spectral_radius,
    })
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eig_magnitudes(m)?.spectral_radius)
}

/// Solves `m · x = rhs` by LU with partial pivoting and returns the solution
/// together with the pivot-magnitude conditioning estimate
/// `min |u_ii| / max |u_ii|`.
pub fn solve_linear_conditioned(m: &Matrix, rhs: &Matrix) -> Result<(Matrix, f64)> {
    let n = ensure_square(m)?;
    if rhs.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_linear rhs rows",
            expected: n,
            actual: rhs.nrows(),
        });
    }
    ensure_finite(m, "solve_linear matrix")?;
    ensure_finite(rhs, "solve_linear rhs")?;
    if n == 0 {
        return Ok((Matrix::zeros(0, rhs.ncols()), 1.0));
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let (lo, hi) = u.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    let condition = if hi > 0.0 { lo / hi } else { 0.0 };
    if condition < SINGULAR_PIVOT_RATIO {
        return Err(Error::Singular { condition });
    }
    let x = lu.solve(rhs).ok_or(Error::Singular { condition })?;
    Ok((x, condition))
}

pub fn solve_linear(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    solve_linear_conditioned(m, rhs).map(|(x, _)| x)
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let n = ensure_square(m)?;
    solve_linear(m, &Matrix::identity(n, n))
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    /// Riccati fixed point.
    pub p: Matrix,
    /// Optimal gain: `u = -k x`.
    pub k: Matrix,
    pub iterations: usize,
}

fn check_dare_dims(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, n: Option<&Matrix>) -> Result<()> {
    let ns = ensure_square(a)?;
    let mi = b.ncols();
    let dims = [
        ("dare B rows", ns, b.nrows()),
        ("dare Q rows", ns, q.nrows()),
        ("dare Q cols", ns, q.ncols()),
        ("dare R rows", mi, r.nrows()),
        ("dare R cols", mi, r.ncols()),
    ];
    for (context, expected, actual) in dims {
        if expected != actual {
            return Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            });
        }
    }
    if let Some(n) = n {
        if n.nrows() != ns || n.ncols() != mi {
            return Err(Error::DimensionMismatch {
                context: "dare N shape",
                expected: ns * mi,
                actual: n.nrows() * n.ncols(),
            });
        }
    }
    Ok(())
}

/// Fixed-point iteration of the Riccati recursion for the cost
/// `Σ xᵀQx + uᵀRu + 2xᵀNu`. Does not check closed-loop stability.
pub fn dare_iterate(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, n: Option<&Matrix>) -> Result<DareSolution> {
    check_dare_dims(a, b, q, r, n)?;
    // Completion of squares removes the cross term.
    let (a_eff, q_eff, r_inv_nt) = match n {
        Some(n) if max_abs(n) > 0.0 => {
            let r_inv_nt = solve_linear(r, &n.transpose())?;
            let a_eff = a - b * &r_inv_nt;
            let q_eff = q - n * &r_inv_nt;
            (a_eff, symmetrize(&q_eff), Some(r_inv_nt))
        }
        _ => (a.clone(), symmetrize(q), None),
    };
    let at = a_eff.transpose();
    let bt = b.transpose();
    let mut p = q_eff.clone();
    let mut last_step = f64::INFINITY;
    for it in 1..=DARE_MAX_ITERATIONS {
        let pb = &p * b;
        let s = r + &bt * &pb;
        let bpa = &bt * &p * &a_eff;
        let gain = solve_linear(&s, &bpa)?;
        let next = symmetrize(&(&q_eff + &at * &p * &a_eff - &at * &pb * &gain));
        let scale = max_abs(&next).max(1.0);
        last_step = max_abs(&(&next - &p)) / scale;
        if !last_step.is_finite() || scale > 1e15 {
            return Err(Error::RiccatiDiverged {
                iterations: it,
                step: last_step,
            });
        }
        p = next;
        if last_step <= DARE_TOLERANCE {
            let s = r + &bt * &p * b;
            let mut k = solve_linear(&s, &(&bt * &p * &a_eff))?;
            if let Some(extra) = r_inv_nt {
                k += extra;
            }
            return Ok(DareSolution { p, k, iterations: it });
        }
    }
    Err(Error::RiccatiDiverged {
        iterations: DARE_MAX_ITERATIONS,
        step: last_step,
    })
}

/// Like [`dare_iterate`] but rejects gains whose closed loop `a - b k` is
/// not strictly stable.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, n: Option<&Matrix>) -> Result<DareSolution> {
    let sol = dare_iterate(a, b, q, r, n)?;
    let radius = spectral_radius(&(a - b * &sol.k))?;
    if radius >= 1.0 {
        return Err(Error::UnstableClosedLoop { radius });
    }
    Ok(sol)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Copies the listed rows and columns of `m` into a new matrix.
pub fn select(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_cols(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}
