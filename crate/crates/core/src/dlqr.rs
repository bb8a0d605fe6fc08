//! Discrete LQR synthesis, plain and with a terminal equality constraint
//! `C · E[k+1] = 0` enforced at every step.

use crate::error::{Error, Result};
use crate::numerics::{
    dare_iterate, ensure_square, inverse, max_abs, select, select_cols, select_rows, solve_dare, solve_linear,
    spectral_radius, symmetrize, vstack, Matrix,
};

/// Normalization scales used to build the default cost matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    pub length: f64,
    pub velocity: f64,
    pub torque: f64,
}

/// Quadratic cost `Σ Eᵀ Q E + ΔUᵀ (10^μ R) ΔU`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDesign {
    pub q: Matrix,
    /// Input weight before the `10^μ` factor.
    pub r_base: Matrix,
    pub mu: f64,
    pub scales: Option<Scales>,
}

impl CostDesign {
    pub fn new(q: Matrix, r_base: Matrix, mu: f64) -> Result<Self> {
        ensure_square(&q)?;
        ensure_square(&r_base)?;
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("mu {mu} is not finite")));
        }
        let tol = 1e-12 * max_abs(&q).max(max_abs(&r_base)).max(1.0);
        if max_abs(&(&q - q.transpose())) > tol || max_abs(&(&r_base - r_base.transpose())) > tol {
            return Err(Error::InvalidArgument("cost matrices must be symmetric".into()));
        }
        if r_base.nrows() > 0 && r_base.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("input weight must be positive definite".into()));
        }
        Ok(Self {
            q,
            r_base,
            mu,
            scales: None,
        })
    }

    /// Diagonal weights: `positions` position states first, then `velocities`
    /// velocity states, each divided by the squared scale; `inputs` input
    /// parameters weighted by `1/torque²`.
    pub fn normalized(scales: Scales, positions: usize, velocities: usize, inputs: usize, mu: f64) -> Result<Self> {
        if !(scales.length > 0.0 && scales.velocity > 0.0 && scales.torque > 0.0) {
            return Err(Error::InvalidArgument(format!("scales must be positive: {scales:?}")));
        }
        let n = positions + velocities;
        let q = Matrix::from_fn(n, n, |i, j| match (i == j, i < positions) {
            (false, _) => 0.0,
            (true, true) => scales.length.powi(-2),
            (true, false) => scales.velocity.powi(-2),
        });
        let r = Matrix::identity(inputs, inputs) * scales.torque.powi(-2);
        let mut design = Self::new(q, r, mu)?;
        design.scales = Some(scales);
        Ok(design)
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn r(&self) -> Matrix {
        &self.r_base * 10f64.powf(self.mu)
    }
}

/// Gain of `ΔU[k] = −k · E[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlqrGain {
    pub k: Matrix,
    pub p: Matrix,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedDlqrGain {
    /// Orthonormal rows completing `C` to a basis.
    pub c_tilde: Matrix,
    /// `[C̃; C]`.
    pub basis: Matrix,
    /// Gain on the reduced coordinates `Y = C̃ E`.
    pub k_bar: Matrix,
    pub p_bar: Matrix,
    /// Reduced dynamics `Y[k+1] = Ā Y[k] + B̄ ΔV[k]`.
    pub a_bar: Matrix,
    pub b_bar: Matrix,
    /// Elimination `ΔW = G Z + H̃ ΔV` with `Z = [Y; C E]`; `g_full` spans all of `Z`.
    pub g_full: Matrix,
    pub h_tilde: Matrix,
    /// Free input indices, in order.
    pub v_inputs: Vec<usize>,
    /// Input indices solved from the constraint, in order.
    pub w_inputs: Vec<usize>,
    /// Assembled gain of `ΔU[k] = −k · E[k]`.
    pub k: Matrix,
    /// Spectral radius of the reduced closed loop `Ā − B̄ K̄`.
    pub spectral_radius: f64,
}

impl ConstrainedDlqrGain {
    /// Block `G̃` of the elimination acting on `Y`.
    pub fn g_tilde(&self) -> Matrix {
        let r = self.c_tilde.nrows();
        self.g_full.columns(0, r).into_owned()
    }
}

pub fn design_unconstrained(a: &Matrix, b: &Matrix, design: &CostDesign) -> Result<DlqrGain> {
    check_inputs(a, b, design)?;
    let sol = solve_dare(a, b, &design.q, &design.r(), None)?;
    let spectral_radius = spectral_radius(&(a - b * &sol.k))?;
    Ok(DlqrGain {
        k: sol.k,
        p: sol.p,
        spectral_radius,
    })
}

fn check_inputs(a: &Matrix, b: &Matrix, design: &CostDesign) -> Result<()> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "dlqr b rows",
            expected: n,
            actual: b.nrows(),
        });
    }
    if design.q.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "dlqr q",
            expected: n,
            actual: design.q.nrows(),
        });
    }
    if design.r_base.nrows() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context: "dlqr r",
            expected: b.ncols(),
            actual: design.r_base.nrows(),
        });
    }
    Ok(())
}

const RANK_TOL: f64 = 1e-10;

/// Orthonormal rows spanning the orthogonal complement of the row space of
/// `c`. Standard basis vectors are orthogonalized in index order and each row
/// is signed so its first significant entry is positive.
pub fn complete_basis(c: &Matrix) -> Result<Matrix> {
    let p = c.nrows();
    let n = c.ncols();
    let scale = max_abs(c).max(f64::MIN_POSITIVE);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    for i in 0..p {
        let mut row = c.row(i).transpose();
        for q in &basis {
            let d = q.dot(&row);
            row -= q * d;
        }
        let norm = row.norm();
        if norm <= RANK_TOL * scale {
            return Err(Error::RankDeficient {
                rank: basis.len(),
                rows: p,
            });
        }
        basis.push(row / norm);
    }
    let mut complement = Vec::with_capacity(n - p);
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = nalgebra::DVector::<f64>::zeros(n);
        v[i] = 1.0;
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            if let Some(lead) = v.iter().find(|x| x.abs() > 1e-12) {
                if *lead < 0.0 {
                    v = -v;
                }
            }
            basis.push(v.clone());
            complement.push(v);
        }
    }
    Ok(Matrix::from_fn(complement.len(), n, |i, j| complement[i][j]))
}

fn subsets(m: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, p, &mut Vec::new(), &mut out);
    out
}

/// Size-`p` column subset of the `p`-row block `bw` with the largest
/// `|det|`, returned with that determinant. Ties keep the first subset.
pub(crate) fn best_split(bw: &Matrix) -> (Vec<usize>, f64) {
    let p = bw.nrows();
    let mut best = (Vec::new(), -1.0);
    for set in subsets(bw.ncols(), p) {
        let det = select_cols(bw, &set).determinant().abs();
        if det > best.1 {
            best = (set, det);
        }
    }
    best
}

/// Rejects splits whose determinant is negligible against the block scale.
pub(crate) fn check_split(bw: &Matrix, split: &[usize], det: f64) -> Result<()> {
    let p = bw.nrows() as i32;
    let scale = max_abs(bw).powi(p);
    if !(det > 1e-12 * scale) || scale == 0.0 {
        return Err(Error::SingularInputSplit {
            split: split.to_vec(),
            best_det: det.max(0.0),
        });
    }
    Ok(())
}

pub fn design_constrained(a: &Matrix, b: &Matrix, c: &Matrix, design: &CostDesign) -> Result<ConstrainedDlqrGain> {
    check_inputs(a, b, design)?;
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "dlqr constraint columns",
            expected: n,
            actual: c.ncols(),
        });
    }
    if p >= n || p > m {
        return Err(Error::InvalidArgument(format!(
            "constraint with {p} rows needs fewer than {n} states and at most {m} inputs"
        )));
    }
    if p == 0 {
        let gain = design_unconstrained(a, b, design)?;
        return Ok(ConstrainedDlqrGain {
            c_tilde: Matrix::identity(n, n),
            basis: Matrix::identity(n, n),
            k_bar: gain.k.clone(),
            p_bar: gain.p,
            a_bar: a.clone(),
            b_bar: b.clone(),
            g_full: Matrix::zeros(0, n),
            h_tilde: Matrix::zeros(0, m),
            v_inputs: (0..m).collect(),
            w_inputs: Vec::new(),
            k: gain.k,
            spectral_radius: gain.spectral_radius,
        });
    }
    let c_tilde = complete_basis(c)?;
    let r_dim = n - p;
    let basis = vstack(&c_tilde, c);
    let basis_inv = inverse(&basis)?;
    let a_t = &basis * a * &basis_inv;
    let b_t = &basis * b;
    let q_t = symmetrize(&(basis_inv.transpose() * &design.q * &basis_inv));

    let y_rows: Vec<usize> = (0..r_dim).collect();
    let c_rows: Vec<usize> = (r_dim..n).collect();
    let b_c = select_rows(&b_t, &c_rows);
    let (w_inputs, det) = best_split(&b_c);
    check_split(&b_c, &w_inputs, det)?;
    let v_inputs: Vec<usize> = (0..m).filter(|i| !w_inputs.contains(i)).collect();

    let b_ww = select(&b_t, &c_rows, &w_inputs);
    let b_wv = select(&b_t, &c_rows, &v_inputs);
    let g_full = -solve_linear(&b_ww, &select_rows(&a_t, &c_rows))?;
    let h_tilde = -solve_linear(&b_ww, &b_wv)?;
    let g_tilde = g_full.columns(0, r_dim).into_owned();

    let a_yy = select(&a_t, &y_rows, &y_rows);
    let b_yv = select(&b_t, &y_rows, &v_inputs);
    let b_yw = select(&b_t, &y_rows, &w_inputs);
    let a_bar = &a_yy + &b_yw * &g_tilde;
    let b_bar = &b_yv + &b_yw * &h_tilde;

    let r = symmetrize(&design.r());
    let r_vv = select(&r, &v_inputs, &v_inputs);
    let r_vw = select(&r, &v_inputs, &w_inputs);
    let r_wv = r_vw.transpose();
    let r_ww = select(&r, &w_inputs, &w_inputs);
    let q_yy = select(&q_t, &y_rows, &y_rows);
    let q_bar = symmetrize(&(&q_yy + g_tilde.transpose() * &r_ww * &g_tilde));
    let r_bar =
        symmetrize(&(&r_vv + h_tilde.transpose() * &r_ww * &h_tilde + &r_vw * &h_tilde + h_tilde.transpose() * &r_wv));
    let n_bar = g_tilde.transpose() * (&r_ww * &h_tilde + &r_wv);

    let sol = dare_iterate(&a_bar, &b_bar, &q_bar, &r_bar, Some(&n_bar))?;
    let radius = spectral_radius(&(&a_bar - &b_bar * &sol.k))?;
    if radius >= 1.0 {
        return Err(Error::UnstableClosedLoop { radius });
    }

    // ΔV = −K̄ C̃ E, ΔW = G [C̃; C] E + H̃ ΔV.
    let dv = -(&sol.k * &c_tilde);
    let dw = &g_full * &basis + &h_tilde * &dv;
    let mut k = Matrix::zeros(m, n);
    for (row, &i) in v_inputs.iter().enumerate() {
        k.row_mut(i).copy_from(&(-dv.row(row)));
    }
    for (row, &i) in w_inputs.iter().enumerate() {
        k.row_mut(i).copy_from(&(-dw.row(row)));
    }
    Ok(ConstrainedDlqrGain {
        c_tilde,
        basis,
        k_bar: sol.k,
        p_bar: sol.p,
        a_bar,
        b_bar,
        g_full,
        h_tilde,
        v_inputs,
        w_inputs,
        k,
        spectral_radius: radius,
    })
}
