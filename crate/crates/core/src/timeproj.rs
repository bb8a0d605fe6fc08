//! Time-projection control: a measured mid-phase error is projected back to a
//! virtual phase-start error consistent with the discrete gain, and the
//! resulting input correction is applied immediately.

use crate::dlqr::{check_split, ConstrainedDlqrGain};
use crate::error::{Error, Result};
use crate::lti::{phase_maps, transition, LtiModel, ProfileKind};
use crate::numerics::{eig_magnitudes, select, select_rows, solve_linear, solve_linear_conditioned, Matrix, Vector};

/// Block systems with a pivot ratio below this are reported as singular.
pub const PROJECTION_CONDITIONING_MIN: f64 = 1e-10;

/// Fraction of the period below which the constrained projection refuses to
/// run; callers hold the last correction inside that window.
pub const MIN_REMAINING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSolution {
    /// Virtual phase-start error `Ê`.
    pub e_hat: Vector,
    /// Input-parameter correction `δÛ` for the whole phase.
    pub du: Vector,
    pub t: f64,
    /// Pivot-ratio estimate of the solved block system.
    pub conditioning: f64,
}

fn check_error_len(e: &Vector, n: usize) -> Result<()> {
    if e.len() != n {
        return Err(Error::DimensionMismatch {
            context: "projection error",
            expected: n,
            actual: e.len(),
        });
    }
    Ok(())
}

/// Solves `[[A(t), B(t)], [K, I]] [Ê; δÛ] = [e; 0]` with precomputed maps.
pub fn project_with_maps(a_t: &Matrix, b_t: &Matrix, k: &Matrix, t: f64, e: &Vector) -> Result<ProjectionSolution> {
    let n = a_t.nrows();
    let m = b_t.ncols();
    check_error_len(e, n)?;
    if k.nrows() != m || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "projection gain",
            expected: m * n,
            actual: k.len(),
        });
    }
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a_t);
    block.view_mut((0, n), (n, m)).copy_from(b_t);
    block.view_mut((n, 0), (m, n)).copy_from(k);
    block.view_mut((n, n), (m, m)).fill_with_identity();
    let mut rhs = Matrix::zeros(n + m, 1);
    rhs.view_mut((0, 0), (n, 1)).copy_from(e);
    let (sol, conditioning) = solve_checked(&block, &rhs, t)?;
    Ok(ProjectionSolution {
        e_hat: sol.rows(0, n).column(0).into_owned(),
        du: sol.rows(n, m).column(0).into_owned(),
        t,
        conditioning,
    })
}

/// Solves after scaling rows and then columns to unit max-abs, so the
/// pivot-ratio estimate does not depend on physical units.
fn solve_checked(block: &Matrix, rhs: &Matrix, t: f64) -> Result<(Matrix, f64)> {
    let n = block.nrows();
    let row_scale: Vec<f64> = (0..n)
        .map(|i| block.row(i).amax())
        .map(|m| if m > 0.0 { 1.0 / m } else { 1.0 })
        .collect();
    let mut scaled = Matrix::from_fn(n, n, |i, j| block[(i, j)] * row_scale[i]);
    let col_scale: Vec<f64> = (0..n)
        .map(|j| scaled.column(j).amax())
        .map(|m| if m > 0.0 { 1.0 / m } else { 1.0 })
        .collect();
    for j in 0..n {
        scaled.column_mut(j).scale_mut(col_scale[j]);
    }
    let scaled_rhs = Matrix::from_fn(n, rhs.ncols(), |i, j| rhs[(i, j)] * row_scale[i]);
    match solve_linear_conditioned(&scaled, &scaled_rhs) {
        Ok((sol, conditioning)) if conditioning >= PROJECTION_CONDITIONING_MIN => Ok((
            Matrix::from_fn(n, sol.ncols(), |i, j| sol[(i, j)] * col_scale[i]),
            conditioning,
        )),
        Ok((_, conditioning)) => Err(Error::NearSingularProjection { t, conditioning }),
        Err(Error::Singular { condition }) => Err(Error::NearSingularProjection {
            t,
            conditioning: condition,
        }),
        Err(other) => Err(other),
    }
}

/// Unconstrained projection of the error `e` measured at phase time `t`
/// under gain `k` (`ΔU = −k E`).
pub fn project(
    model: &LtiModel,
    kind: ProfileKind,
    period: f64,
    k: &Matrix,
    t: f64,
    e: &Vector,
) -> Result<ProjectionSolution> {
    check_phase_time(t, period)?;
    let (a_t, b_t) = phase_maps(model, t, kind, period)?;
    project_with_maps(&a_t, &b_t, k, t, e)
}

fn check_phase_time(t: f64, period: f64) -> Result<()> {
    if !(period > 0.0) || !(0.0..period).contains(&t) {
        return Err(Error::InvalidArgument(format!("phase time {t} outside [0, {period})")));
    }
    Ok(())
}

/// Constrained projection for a switched phase `E[k+1] = S (A E[k] + B ΔU[k])`
/// whose gain enforces `C · E[k+1] = 0`.
#[derive(Debug, Clone)]
pub struct ConstrainedProjector {
    pub model: LtiModel,
    pub kind: ProfileKind,
    pub period: f64,
    pub switch: Matrix,
    pub gain: ConstrainedDlqrGain,
    b_full: Matrix,
}

impl ConstrainedProjector {
    pub fn new(
        model: LtiModel,
        kind: ProfileKind,
        period: f64,
        switch: Matrix,
        gain: ConstrainedDlqrGain,
    ) -> Result<Self> {
        let (_, b_full) = phase_maps(&model, period, kind, period)?;
        let n = model.states();
        if switch.nrows() != n || switch.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "projector switch",
                expected: n,
                actual: switch.nrows(),
            });
        }
        if gain.k.ncols() != n || gain.k.nrows() != b_full.ncols() {
            return Err(Error::DimensionMismatch {
                context: "projector gain",
                expected: b_full.ncols(),
                actual: gain.k.nrows(),
            });
        }
        Ok(Self {
            model,
            kind,
            period,
            switch,
            gain,
            b_full,
        })
    }

    pub fn min_remaining(&self) -> f64 {
        MIN_REMAINING_FRACTION * self.period
    }

    /// Projection from the error measured at phase time `t`.
    pub fn project(&self, t: f64, e: &Vector) -> Result<ProjectionSolution> {
        check_phase_time(t, self.period)?;
        let tau = self.period - t;
        if tau < self.min_remaining() {
            return Err(Error::RemainingTimeTooShort {
                remaining: tau,
                min: self.min_remaining(),
            });
        }
        let (_, b_t) = phase_maps(&self.model, t, self.kind, self.period)?;
        let a_tau = transition(&self.model, tau)?.phi;
        self.project_with_maps(t, &a_tau, &b_t, e)
    }

    /// Same as [`Self::project`] with `A(T − t)` and `B(t)` supplied.
    pub fn project_with_maps(&self, t: f64, a_tau: &Matrix, b_t: &Matrix, e: &Vector) -> Result<ProjectionSolution> {
        let g = &self.gain;
        let n = self.model.states();
        check_error_len(e, n)?;
        let tau = self.period - t;
        if tau < self.min_remaining() {
            return Err(Error::RemainingTimeTooShort {
                remaining: tau,
                min: self.min_remaining(),
            });
        }
        let r = g.c_tilde.nrows();
        let p = n - r;
        let nv = g.v_inputs.len();
        let nw = g.w_inputs.len();
        let m = nv + nw;

        // Map from the current error and the correction to the next
        // transformed phase-start state.
        let b_rem = &self.b_full - a_tau * b_t;
        let to_z = &g.basis * &self.switch;
        let a_zt = &to_z * a_tau;
        let b_zt = &to_z * &b_rem;
        let y_rows: Vec<usize> = (0..r).collect();
        let c_rows: Vec<usize> = (r..n).collect();

        let (g_t, a_bar_t, b_bar_t, h_t) = if p > 0 {
            let b_ww = select(&b_zt, &c_rows, &g.w_inputs);
            check_split(&b_ww, &g.w_inputs, b_ww.determinant().abs())?;
            let b_wv = select(&b_zt, &c_rows, &g.v_inputs);
            let g_t = -solve_linear(&b_ww, &select_rows(&a_zt, &c_rows))?;
            let h_t = -solve_linear(&b_ww, &b_wv)?;
            let b_yw = select(&b_zt, &y_rows, &g.w_inputs);
            let a_bar_t = select_rows(&a_zt, &y_rows) + &b_yw * &g_t;
            let b_bar_t = select(&b_zt, &y_rows, &g.v_inputs) + &b_yw * &h_t;
            (g_t, a_bar_t, b_bar_t, h_t)
        } else {
            (Matrix::zeros(0, n), a_zt.clone(), b_zt.clone(), Matrix::zeros(0, nv))
        };

        // Unknowns [Ŷ; δV; δW].
        let size = r + nv + nw;
        let mut block = Matrix::zeros(size, size);
        block.view_mut((0, 0), (r, r)).copy_from(&g.a_bar);
        block.view_mut((0, r), (r, nv)).copy_from(&(&g.b_bar - &b_bar_t));
        block.view_mut((r, 0), (nv, r)).copy_from(&g.k_bar);
        block.view_mut((r, r), (nv, nv)).fill_with_identity();
        block.view_mut((r + nv, r), (nw, nv)).copy_from(&(-&h_t));
        block.view_mut((r + nv, r + nv), (nw, nw)).fill_with_identity();
        let mut rhs = Matrix::zeros(size, 1);
        rhs.view_mut((0, 0), (r, 1)).copy_from(&(&a_bar_t * e));
        rhs.view_mut((r + nv, 0), (nw, 1)).copy_from(&(&g_t * e));
        let (sol, conditioning) = solve_checked(&block, &rhs, t)?;

        let y_hat = sol.rows(0, r).column(0).into_owned();
        let mut du = Vector::zeros(m);
        for (row, &i) in g.v_inputs.iter().enumerate() {
            du[i] = sol[(r + row, 0)];
        }
        for (row, &i) in g.w_inputs.iter().enumerate() {
            du[i] = sol[(r + nv + row, 0)];
        }
        Ok(ProjectionSolution {
            e_hat: g.c_tilde.transpose() * y_hat,
            du,
            t,
            conditioning,
        })
    }
}

/// Smallest eigenvalue magnitude of `M(t) = I − K A(t)⁻¹ B(t)` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibilityScan {
    pub times: Vec<f64>,
    pub min_magnitudes: Vec<f64>,
    /// Grid times where the magnitude fell below the threshold or the
    /// determinant changed sign since the previous grid point.
    pub crossings: Vec<f64>,
}

pub const INVERTIBILITY_THRESHOLD: f64 = 1e-6;

impl InvertibilityScan {
    pub fn flagged(&self) -> bool {
        !self.crossings.is_empty()
    }

    pub fn minimum(&self) -> f64 {
        self.min_magnitudes.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn projection_matrix(model: &LtiModel, kind: ProfileKind, period: f64, k: &Matrix, t: f64) -> Result<Matrix> {
    let (a_t, b_t) = phase_maps(model, t, kind, period)?;
    let m = b_t.ncols();
    Ok(Matrix::identity(m, m) - k * solve_linear(&a_t, &b_t)?)
}

pub fn invertibility_scan(
    model: &LtiModel,
    kind: ProfileKind,
    period: f64,
    k: &Matrix,
    times: &[f64],
) -> Result<InvertibilityScan> {
    let mut mins = Vec::with_capacity(times.len());
    let mut crossings = Vec::new();
    let mut last_sign = 0.0;
    for &t in times {
        let mt = projection_matrix(model, kind, period, k, t)?;
        let min = eig_magnitudes(&mt)?.min_magnitude();
        let det = mt.determinant();
        if min < INVERTIBILITY_THRESHOLD || (last_sign != 0.0 && det.signum() != last_sign) {
            crossings.push(t);
        }
        last_sign = det.signum();
        mins.push(min);
    }
    Ok(InvertibilityScan {
        times: times.to_vec(),
        min_magnitudes: mins,
        crossings,
    })
}

/// Bounds `(1, e^T / (e^T − 1))` on the discrete gain of `ẋ = x + u` under
/// which the projected feedback stays finite over the whole phase.
pub fn scalar_bounds(period: f64) -> Result<(f64, f64)> {
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(format!("period {period} must be positive")));
    }
    let e = period.exp();
    Ok((1.0, e / (e - 1.0)))
}

/// Continuous gain with the same closed-loop eigenvalue as the discrete gain
/// `gamma_d` for `ẋ = x + u`.
pub fn to_continuous_gain(gamma_d: f64, period: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(format!("period {period} must be positive")));
    }
    let e = period.exp();
    let arg = e - (e - 1.0) * gamma_d;
    if !(arg > 0.0) {
        return Err(Error::LogDomain(arg));
    }
    Ok(-arg.ln() / period + 1.0)
}

/// Closed-loop analysis of `ẋ = x + u` under time-projection of gain `Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarAnalysis {
    pub period: f64,
    pub gamma_d: f64,
    pub bounds: (f64, f64),
    pub gamma_c: f64,
}

impl ScalarAnalysis {
    pub fn new(period: f64, gamma_d: f64) -> Result<Self> {
        let bounds = scalar_bounds(period)?;
        if !(gamma_d > bounds.0 && gamma_d < bounds.1) {
            return Err(Error::InvalidArgument(format!(
                "gain {gamma_d} outside ({}, {})",
                bounds.0, bounds.1
            )));
        }
        Ok(Self {
            period,
            gamma_d,
            bounds,
            gamma_c: to_continuous_gain(gamma_d, period)?,
        })
    }

    /// Closed-loop rate `ẋ / x` at phase time `t`.
    pub fn epsilon(&self, t: f64) -> f64 {
        let et = t.exp();
        1.0 + 1.0 / (-et / self.gamma_d + et - 1.0)
    }

    /// Root of the feedback denominator, outside `[0, T]` for gains within the bounds.
    pub fn denominator_root(&self) -> f64 {
        denominator_root(self.gamma_d)
    }
}

/// `t₀ = ln(1 / (1 − 1/Γ))`; infinite for `Γ ≤ 1`.
pub fn denominator_root(gamma_d: f64) -> f64 {
    if gamma_d <= 1.0 {
        return f64::INFINITY;
    }
    (1.0 / (1.0 - 1.0 / gamma_d)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlqr::{design_constrained, design_unconstrained, CostDesign};
    use crate::lti::{propagate, InputProfile, PiecewiseConstant};
    use crate::numerics::matrix_from_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_model() -> LtiModel {
        let one = Matrix::from_element(1, 1, 1.0);
        LtiModel::new(one.clone(), one).unwrap()
    }

    fn scalar_gain() -> f64 {
        let e = 1f64.exp();
        let one = Matrix::from_element(1, 1, 1.0);
        let design = CostDesign::new(one.clone(), one, 0.0).unwrap();
        design_unconstrained(
            &Matrix::from_element(1, 1, e),
            &Matrix::from_element(1, 1, e - 1.0),
            &design,
        )
        .unwrap()
        .k[(0, 0)]
    }

    #[test]
    fn zero_error_gives_zero_correction() {
        let k = Matrix::from_element(1, 1, 1.43);
        let s = project(&scalar_model(), ProfileKind::Constant, 1.0, &k, 0.4, &Vector::zeros(1)).unwrap();
        assert_eq!(s.du[0], 0.0);
        assert_eq!(s.e_hat[0], 0.0);
    }

    #[test]
    fn phase_start_matches_dlqr() {
        let k = Matrix::from_element(1, 1, 1.43);
        let e = Vector::from_element(1, 0.7);
        let s = project(&scalar_model(), ProfileKind::Constant, 1.0, &k, 0.0, &e).unwrap();
        assert!((s.du[0] + 1.43 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn scalar_closed_loop_rate_matches_analysis() {
        let gamma = scalar_gain();
        let k = Matrix::from_element(1, 1, gamma);
        let analysis = ScalarAnalysis::new(1.0, gamma).unwrap();
        for i in 0..20 {
            let t = i as f64 * 0.05;
            let x = 0.3;
            let s = project(
                &scalar_model(),
                ProfileKind::Constant,
                1.0,
                &k,
                t,
                &Vector::from_element(1, x),
            )
            .unwrap();
            let rate = (x + s.du[0]) / x;
            assert!((rate - analysis.epsilon(t)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn scalar_bounds_and_conversion() {
        let (lo, hi) = scalar_bounds(1.0).unwrap();
        assert_eq!(lo, 1.0);
        assert!((hi - 1.5820).abs() < 1e-4);
        let gamma = scalar_gain();
        assert!((to_continuous_gain(gamma, 1.0).unwrap() - 2.37).abs() < 0.01);
        assert!((to_continuous_gain(1.0 + 1e-9, 1.0).unwrap() - 1.0).abs() < 1e-8);
        assert!(matches!(to_continuous_gain(2.0, 1.0), Err(Error::LogDomain(_))));
        assert!(ScalarAnalysis::new(1.0, 0.0).is_err());
    }

    #[test]
    fn epsilon_decreasing_and_negative() {
        let a = ScalarAnalysis::new(1.0, 1.43).unwrap();
        assert!((a.epsilon(0.0) - (1.0 - 1.43)).abs() < 1e-14);
        let mut last = a.epsilon(0.0);
        for i in 1..1000 {
            let eps = a.epsilon(i as f64 * 1e-3);
            assert!(eps < last && eps < 0.0);
            last = eps;
        }
        assert!(a.denominator_root() > 1.0);
    }

    #[test]
    fn gain_above_bound_puts_root_inside_phase_and_flags_conditioning() {
        let (_, hi) = scalar_bounds(1.0).unwrap();
        let gamma = hi * 1.05;
        let t0 = denominator_root(gamma);
        assert!(t0 > 0.0 && t0 < 1.0);
        let k = Matrix::from_element(1, 1, gamma);
        let scan = invertibility_scan(
            &scalar_model(),
            ProfileKind::Constant,
            1.0,
            &k,
            &(0..200).map(|i| i as f64 / 200.0).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(scan.flagged());
        assert!(scan.crossings.iter().any(|t| (t - t0).abs() < 0.01));
        // Right at the root the block system is singular.
        let err = project(
            &scalar_model(),
            ProfileKind::Constant,
            1.0,
            &k,
            t0,
            &Vector::from_element(1, 1.0),
        );
        assert!(matches!(err, Err(Error::NearSingularProjection { .. })));
    }

    #[test]
    fn scan_starts_at_identity() {
        let k = Matrix::from_element(1, 1, 1.43);
        let scan = invertibility_scan(&scalar_model(), ProfileKind::Constant, 1.0, &k, &[0.0, 0.5]).unwrap();
        assert!((scan.min_magnitudes[0] - 1.0).abs() < 1e-12);
        assert!(!scan.flagged());
    }

    fn random_switched_system(seed: u64) -> (LtiModel, Matrix, Matrix, ConstrainedDlqrGain) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let model = LtiModel::new(a, b).unwrap();
        let switch = matrix_from_rows(
            4,
            4,
            &[
                -1.0, 0.0, 0.0, 0.0, //
                -1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 0.0, //
                0.0, 0.0, -1.0, 1.0,
            ],
        )
        .unwrap();
        let c = matrix_from_rows(1, 4, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        let d = crate::lti::discretize(&model, 0.5, ProfileKind::Linear).unwrap();
        let design = CostDesign::new(Matrix::identity(4, 4), Matrix::identity(4, 4), 0.0).unwrap();
        let gain = design_constrained(&(&switch * &d.a), &(&switch * &d.b), &c, &design).unwrap();
        (model, switch, c, gain)
    }

    #[test]
    fn constrained_projection_meets_terminal_constraint() {
        let (model, switch, c, gain) = random_switched_system(17);
        let proj = ConstrainedProjector::new(model.clone(), ProfileKind::Linear, 0.5, switch.clone(), gain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let t = rng.gen_range(0.0..0.49);
            let e = Vector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            let s = proj.project(t, &e).unwrap();
            // Propagate the corrected profile from t to the phase end.
            let (_, b_t) = phase_maps(&model, t, ProfileKind::Linear, 0.5).unwrap();
            let (_, b_full) = phase_maps(&model, 0.5, ProfileKind::Linear, 0.5).unwrap();
            let a_tau = transition(&model, 0.5 - t).unwrap().phi;
            let end = &a_tau * &e + (&b_full - &a_tau * &b_t) * &s.du;
            assert!((&c * (&switch * end)).norm() < 1e-8);
        }
    }

    #[test]
    fn constrained_projection_at_phase_start_matches_gain_on_surface() {
        let (model, switch, c, gain) = random_switched_system(23);
        let k = gain.k.clone();
        let proj = ConstrainedProjector::new(model, ProfileKind::Linear, 0.5, switch, gain.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let y = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let e = gain.c_tilde.transpose() * y;
            assert!((&c * &e).norm() < 1e-14);
            let s = proj.project(0.0, &e).unwrap();
            assert!((&s.du + &k * &e).norm() < 1e-9);
        }
    }

    #[test]
    fn constrained_projection_is_constant_without_disturbance() {
        let (model, switch, _, gain) = random_switched_system(31);
        let proj = ConstrainedProjector::new(model.clone(), ProfileKind::Linear, 0.5, switch, gain).unwrap();
        let e0 = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let first = proj.project(0.1, &e0).unwrap();
        // Roll the error forward under the corrected profile.
        let (a1, b1) = phase_maps(&model, 0.1, ProfileKind::Linear, 0.5).unwrap();
        let offset = &e0 - &b1 * &first.du;
        let start = crate::numerics::solve_linear(&a1, &Matrix::from_column_slice(4, 1, offset.as_slice())).unwrap();
        let start = start.column(0).into_owned();
        let profile = InputProfile::new(ProfileKind::Linear, first.du.clone(), 0.5).unwrap();
        for t in [0.15, 0.25, 0.4, 0.49] {
            let e = propagate(&model, &start, &profile, &PiecewiseConstant::zero(0), t).unwrap();
            let again = proj.project(t, &e).unwrap();
            assert!((&again.du - &first.du).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn clamp_window_is_reported() {
        let (model, switch, _, gain) = random_switched_system(17);
        let proj = ConstrainedProjector::new(model, ProfileKind::Linear, 0.5, switch, gain).unwrap();
        let err = proj.project(0.499, &Vector::from_element(4, 1.0));
        assert!(matches!(err, Err(Error::RemainingTimeTooShort { .. })));
    }

    #[test]
    fn unconstrained_projection_is_constant_without_disturbance() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(3, 1, |_, _| rng.gen_range(-1.0..1.0));
        let model = LtiModel::new(a, b).unwrap();
        let d = crate::lti::discretize(&model, 1.0, ProfileKind::Constant).unwrap();
        let design = CostDesign::new(Matrix::identity(3, 3), Matrix::identity(1, 1), 0.0).unwrap();
        let k = design_unconstrained(&d.a, &d.b, &design).unwrap().k;
        let e0 = Vector::from_vec(vec![0.2, 0.4, -0.1]);
        let u = -(&k * &e0);
        let profile = InputProfile::new(ProfileKind::Constant, u.clone(), 1.0).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let e = propagate(&model, &e0, &profile, &PiecewiseConstant::zero(0), t).unwrap();
            let s = project(&model, ProfileKind::Constant, 1.0, &k, t, &e).unwrap();
            assert!((&s.du - &u).norm() < 1e-9);
            assert!((&s.e_hat - &e0).norm() < 1e-9);
        }
    }
}
