//! Viable initial errors under torque and step-length limits: those the
//! time-projection controller recovers, and those any admissible input
//! sequence recovers.
//!
//! Inputs are the nominal profile plus a correction held constant over each
//! of a few equal sub-phases. The time-projection run picks its correction
//! at every sub-phase start and saturates it; the maximum set asks a linear
//! feasibility question over all corrections at once.
//!
//! Touchdowns use [`landing_reset`]: an input search free of the touchdown
//! constraint could otherwise land the foot moving and have the involution
//! switch turn that velocity into pelvis velocity.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::lti::{transition, InputProfile};
use crate::model::{
    landing_reset, NominalGait, PhaseModel, INPUTS, PELVIS_VX, PELVIS_VY, STATES, SWING_VX, SWING_VY, SWING_X,
};
use crate::numerics::{solve_linear, Matrix, Vector};
use crate::timeproj::ConstrainedProjector;

use super::simplex::{phase_one, Constraint, Feasibility, Relation};

/// Clamped landings aim this fraction of the bound so that the held
/// sub-phase inputs do not overshoot it.
const FOOT_CLAMP_MARGIN: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityConfig {
    pub steps: usize,
    pub sub_phases: usize,
    /// Hip torque limit in N·m.
    pub torque_limit: f64,
    /// Footstep bound per axis as a fraction of leg length.
    pub footstep_fraction: f64,
    /// Capture tolerance on the normalized error, infinity norm.
    pub epsilon: f64,
    /// Cells per axis.
    pub resolution: usize,
    /// Half-widths in m/s of the sagittal and lateral pelvis velocity error slice.
    pub range: [f64; 2],
    pub max_iterations: usize,
}

impl Default for ViabilityConfig {
    fn default() -> Self {
        Self {
            steps: 6,
            sub_phases: 5,
            torque_limit: 260.0,
            footstep_fraction: 0.8,
            epsilon: 1e-3,
            resolution: 40,
            range: [0.8, 0.8],
            max_iterations: 20_000,
        }
    }
}

impl ViabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.torque_limit,
            self.footstep_fraction,
            self.epsilon,
            self.range[0],
            self.range[1],
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.steps == 0 || self.sub_phases == 0 || self.resolution == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "viability limits, counts and ranges must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellLabel {
    Nonviable,
    MaxViableOnly,
    TpViable,
    /// The feasibility search hit its iteration cap.
    Undetermined,
}

impl CellLabel {
    /// Numeric code used in the CSV output.
    pub fn code(self) -> f64 {
        match self {
            CellLabel::Nonviable => 0.0,
            CellLabel::MaxViableOnly => 1.0,
            CellLabel::TpViable => 2.0,
            CellLabel::Undetermined => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityGrid {
    pub config: ViabilityConfig,
    /// Cell centres along the sagittal and lateral velocity axes.
    pub axis_x: Vec<f64>,
    pub axis_y: Vec<f64>,
    /// Row-major labels, `labels[iy * resolution + ix]`.
    pub labels: Vec<CellLabel>,
    /// Cells the controller recovered but the feasibility search rejected.
    pub nesting_violations: usize,
}

impl ViabilityGrid {
    pub fn label(&self, ix: usize, iy: usize) -> CellLabel {
        self.labels[iy * self.axis_x.len() + ix]
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Cells in the maximum set, including those the controller recovers.
    pub fn max_viable(&self) -> usize {
        self.count(CellLabel::TpViable) + self.count(CellLabel::MaxViableOnly)
    }

    /// Fraction of the maximum set the controller recovers.
    pub fn coverage(&self) -> f64 {
        let max = self.max_viable();
        if max == 0 {
            return 0.0;
        }
        self.count(CellLabel::TpViable) as f64 / max as f64
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["cell_x", "cell_y", "label"]);
        t.comment("cell_x: sagittal pelvis velocity error (m/s); cell_y: lateral pelvis velocity error (m/s)");
        t.comment("label: 0 nonviable, 1 max-viable only, 2 time-projection viable, -1 undetermined");
        for (iy, &y) in self.axis_y.iter().enumerate() {
            for (ix, &x) in self.axis_x.iter().enumerate() {
                t.push(vec![x, y, self.label(ix, iy).code()]);
            }
        }
        t
    }
}

/// Precomputed sub-phase maps and the affine dependence of every phase-end
/// state on the corrections.
#[derive(Debug, Clone)]
pub struct ViabilityProblem {
    pub model: PhaseModel,
    pub nominal: NominalGait,
    pub projector: ConstrainedProjector,
    pub config: ViabilityConfig,
    /// `A(h)` and `∫ e^{a(h−s)} b ds` over one sub-phase.
    sub_phi: Matrix,
    sub_g0: Matrix,
    /// `A(T − t_j)`, `B(t_j)` and `B(T) − A(T − t_j) B(t_j)` at sub-phase starts.
    phi_tau: Vec<Matrix>,
    b_t: Vec<Matrix>,
    b_rem: Vec<Matrix>,
    /// `A(T)`.
    phi_full: Matrix,
    /// Effect of the sub-phase `j` correction on the phase-end state.
    g_end: Vec<Matrix>,
    /// Correction bounds `[lo, hi]` per step parity, sub-phase and axis.
    bounds: [Vec<[[f64; 2]; INPUTS]>; 2],
    /// Nominal phase-end swing-foot position per step parity.
    foot_end: [[f64; INPUTS]; 2],
    foot_limit: f64,
    /// Leg switch with the touchdown velocity absorbed.
    reset: Matrix,
}

impl ViabilityProblem {
    pub fn new(
        model: PhaseModel,
        nominal: NominalGait,
        projector: ConstrainedProjector,
        config: ViabilityConfig,
    ) -> Result<Self> {
        config.validate()?;
        let period = model.period;
        let n_sub = config.sub_phases;
        let h = period / n_sub as f64;
        let sub = transition(&model.lti, h)?;
        let mut phi_tau = Vec::with_capacity(n_sub);
        let mut b_t = Vec::with_capacity(n_sub);
        let mut g_end = Vec::with_capacity(n_sub);
        for j in 0..n_sub {
            let t = j as f64 * h;
            phi_tau.push(transition(&model.lti, period - t)?.phi);
            b_t.push(transition(&model.lti, t)?.input_map(model.kind, period));
            g_end.push(transition(&model.lti, period - (j + 1) as f64 * h)?.phi * &sub.g0);
        }
        let full = transition(&model.lti, period)?;
        let b_full = full.input_map(model.kind, period);
        let phi_full = full.phi;
        let b_rem = (0..n_sub).map(|j| &b_full - &phi_tau[j] * &b_t[j]).collect();

        let limit = config.torque_limit;
        let mut bounds: [Vec<[[f64; 2]; INPUTS]>; 2] = [Vec::new(), Vec::new()];
        let mut foot_end = [[0.0; INPUTS]; 2];
        for parity in 0..2 {
            let (_, u) = nominal.phase(parity);
            let profile = InputProfile::new(model.kind, u, period)?;
            for j in 0..n_sub {
                let (a, b) = (profile.eval(j as f64 * h), profile.eval((j + 1) as f64 * h));
                let mut cell = [[0.0; 2]; INPUTS];
                for axis in 0..INPUTS {
                    let lo = -limit - a[axis].min(b[axis]);
                    let hi = limit - a[axis].max(b[axis]);
                    if lo > 0.0 || hi < 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "nominal hip torque exceeds the {limit} N·m limit"
                        )));
                    }
                    cell[axis] = [lo, hi];
                }
                bounds[parity].push(cell);
            }
            let end = nominal.state_at(&model, parity, period)?;
            foot_end[parity] = [end[SWING_X], end[SWING_X + 1]];
        }
        let foot_limit = config.footstep_fraction * model.params.leg_length_m;
        for f in foot_end.iter().flatten() {
            if f.abs() > foot_limit {
                return Err(Error::InvalidArgument(format!(
                    "nominal footstep {f:.3} m exceeds the {foot_limit:.3} m bound"
                )));
            }
        }
        Ok(Self {
            model,
            nominal,
            projector,
            config,
            sub_phi: sub.phi,
            sub_g0: sub.g0,
            phi_tau,
            b_t,
            b_rem,
            phi_full,
            g_end,
            bounds,
            foot_end,
            foot_limit,
            reset: landing_reset(),
        })
    }

    /// Initial error for the slice point `(v_sagittal, v_lateral)`.
    pub fn slice_error(&self, vx: f64, vy: f64) -> Vector {
        let mut e = Vector::zeros(STATES);
        e[PELVIS_VX] = vx;
        e[PELVIS_VY] = vy;
        e
    }

    fn normalized_inf(&self, e: &Vector) -> f64 {
        self.model.normalize(e).amax()
    }

    /// Saturated sub-phase time-projection run; returns the applied
    /// corrections when it ends within tolerance without breaking a bound.
    pub fn tp_run(&self, e0: &Vector) -> Result<Option<Vec<f64>>> {
        let n_sub = self.config.sub_phases;
        let period = self.model.period;
        let h = period / n_sub as f64;
        let mut e = e0.clone();
        let mut applied = Vec::with_capacity(self.config.steps * n_sub * INPUTS);
        for k in 0..self.config.steps {
            let mut x = e.clone();
            let mut du = Vector::zeros(self.model.input_params());
            for j in 0..n_sub {
                let t = j as f64 * h;
                match self.projector.project_with_maps(t, &self.phi_tau[j], &self.b_t[j], &x) {
                    Ok(sol) => du = sol.du,
                    Err(Error::NearSingularProjection { .. }) => {}
                    Err(err) => return Err(err),
                }
                du = self.clamp_footstep(k, j, &x, du);
                let mid = InputProfile::new(self.model.kind, du.clone(), period)?.eval(t + 0.5 * h);
                let mut delta = Vector::zeros(INPUTS);
                for axis in 0..INPUTS {
                    let [lo, hi] = self.bounds[k % 2][j][axis];
                    delta[axis] = mid[axis].clamp(lo, hi);
                    applied.push(delta[axis]);
                }
                x = &self.sub_phi * x + &self.sub_g0 * delta;
            }
            if (0..INPUTS).any(|a| (self.foot_end[k % 2][a] + x[SWING_X + a]).abs() > self.foot_limit) {
                return Ok(None);
            }
            e = &self.reset * &x;
            if self.normalized_inf(&e) > 1e6 {
                return Ok(None);
            }
        }
        Ok((self.normalized_inf(&e) <= self.config.epsilon).then_some(applied))
    }

    /// Smallest change to `du` that moves a predicted landing outside the
    /// footstep bound onto a slightly tightened bound, keeping the predicted
    /// end swing velocity.
    fn clamp_footstep(&self, k: usize, j: usize, x: &Vector, du: Vector) -> Vector {
        let pred = &self.phi_tau[j] * x + &self.b_rem[j] * &du;
        let target = FOOT_CLAMP_MARGIN * self.foot_limit;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for a in 0..INPUTS {
            let landing = self.foot_end[k % 2][a] + pred[SWING_X + a];
            if landing.abs() > target {
                rows.push(SWING_X + a);
                rhs.push(target.copysign(landing) - landing);
            }
        }
        if rows.is_empty() {
            return du;
        }
        for v in [SWING_VX, SWING_VY] {
            rows.push(v);
            rhs.push(0.0);
        }
        let m = Matrix::from_fn(rows.len(), du.len(), |r, c| self.b_rem[j][(rows[r], c)]);
        let gram = &m * m.transpose();
        match solve_linear(&gram, &Matrix::from_column_slice(rhs.len(), 1, &rhs)) {
            Ok(y) => du + m.transpose() * y.column(0),
            Err(_) => du,
        }
    }

    /// Constraint rows over the shifted corrections
    /// `x = (δ − lo) / torque_limit ≥ 0`.
    pub fn constraints(&self, e0: &Vector) -> (usize, Vec<Constraint>) {
        let n_sub = self.config.sub_phases;
        let steps = self.config.steps;
        let vars = steps * n_sub * INPUTS;
        let scale = self.config.torque_limit;
        let col = |k: usize, j: usize, a: usize| (k * n_sub + j) * INPUTS + a;
        let lo: Vec<f64> = (0..vars)
            .map(|c| {
                let (k, rest) = (c / (n_sub * INPUTS), c % (n_sub * INPUTS));
                self.bounds[k % 2][rest / INPUTS][rest % INPUTS][0]
            })
            .collect();

        let mut cons = Vec::new();
        for k in 0..steps {
            for j in 0..n_sub {
                for a in 0..INPUTS {
                    let [l, u] = self.bounds[k % 2][j][a];
                    let mut row = vec![0.0; vars];
                    row[col(k, j, a)] = 1.0;
                    cons.push(Constraint::new(row, Relation::Le, (u - l) / scale));
                }
            }
        }

        // Affine error e = c + L x, rolled forward step by step.
        let mut c = e0.clone();
        let mut l = Matrix::zeros(STATES, vars);
        let s = self.model.params.scales();
        for k in 0..steps {
            let mut c_pre = &self.phi_full * &c;
            let mut l_pre = &self.phi_full * &l;
            for j in 0..n_sub {
                for a in 0..INPUTS {
                    let g = self.g_end[j].column(a);
                    c_pre += g * lo[col(k, j, a)];
                    let mut column = l_pre.column_mut(col(k, j, a));
                    column += g * scale;
                }
            }
            for a in 0..INPUTS {
                let row: Vec<f64> = l_pre.row(SWING_X + a).iter().map(|v| v / s.length).collect();
                let offset = (self.foot_end[k % 2][a] + c_pre[SWING_X + a]) / s.length;
                let bound = self.foot_limit / s.length;
                cons.push(Constraint::new(row.clone(), Relation::Le, bound - offset));
                cons.push(Constraint::new(row, Relation::Ge, -bound - offset));
            }
            c = &self.reset * c_pre;
            l = &self.reset * l_pre;
        }
        for i in 0..STATES {
            let unit = if i < 4 { s.length } else { s.velocity };
            let row: Vec<f64> = l.row(i).iter().map(|v| v / unit).collect();
            let offset = c[i] / unit;
            cons.push(Constraint::new(row.clone(), Relation::Le, self.config.epsilon - offset));
            cons.push(Constraint::new(row, Relation::Ge, -self.config.epsilon - offset));
        }
        (vars, cons)
    }

    /// Feasibility of the full-horizon problem from `e0`.
    pub fn max_viable(&self, e0: &Vector) -> Result<Feasibility> {
        let (vars, cons) = self.constraints(e0);
        phase_one(vars, &cons, self.config.max_iterations, 1e-9)
    }

    /// Propagates explicit sub-phase corrections; returns the landing
    /// positions of every step and the final error.
    pub fn replay(&self, e0: &Vector, corrections: &[f64]) -> (Vec<[f64; 2]>, Vector) {
        let n_sub = self.config.sub_phases;
        let mut e = e0.clone();
        let mut landings = Vec::with_capacity(self.config.steps);
        for k in 0..self.config.steps {
            let mut x = e.clone();
            for j in 0..n_sub {
                let base = (k * n_sub + j) * INPUTS;
                let delta = Vector::from_row_slice(&corrections[base..base + INPUTS]);
                x = &self.sub_phi * x + &self.sub_g0 * delta;
            }
            landings.push([
                self.foot_end[k % 2][0] + x[SWING_X],
                self.foot_end[k % 2][1] + x[SWING_X + 1],
            ]);
            e = &self.reset * x;
        }
        (landings, e)
    }

    /// Maps shifted LP variables back to corrections in N·m.
    pub fn from_lp_point(&self, x: &[f64]) -> Vec<f64> {
        let n_sub = self.config.sub_phases;
        x.iter()
            .enumerate()
            .map(|(c, v)| {
                let (k, rest) = (c / (n_sub * INPUTS), c % (n_sub * INPUTS));
                self.bounds[k % 2][rest / INPUTS][rest % INPUTS][0] + v * self.config.torque_limit
            })
            .collect()
    }

    /// Maps applied corrections to the shifted LP variables.
    pub fn to_lp_point(&self, applied: &[f64]) -> Vec<f64> {
        let n_sub = self.config.sub_phases;
        applied
            .iter()
            .enumerate()
            .map(|(c, d)| {
                let (k, rest) = (c / (n_sub * INPUTS), c % (n_sub * INPUTS));
                (d - self.bounds[k % 2][rest / INPUTS][rest % INPUTS][0]) / self.config.torque_limit
            })
            .collect()
    }

    pub fn classify(&self, e0: &Vector) -> Result<(CellLabel, bool)> {
        let tp = self.tp_run(e0)?.is_some();
        let max = self.max_viable(e0)?;
        let violation = tp && matches!(max, Feasibility::Infeasible { .. });
        let label = match (max, tp) {
            (Feasibility::IterationLimit, _) => CellLabel::Undetermined,
            (_, true) => CellLabel::TpViable,
            (Feasibility::Feasible(_), false) => CellLabel::MaxViableOnly,
            (Feasibility::Infeasible { .. }, false) => CellLabel::Nonviable,
        };
        Ok((label, violation))
    }

    pub fn run(&self) -> Result<ViabilityGrid> {
        let n = self.config.resolution;
        let axis = |half: f64| -> Vec<f64> {
            (0..n)
                .map(|i| -half + 2.0 * half * (i as f64 + 0.5) / n as f64)
                .collect()
        };
        let axis_x = axis(self.config.range[0]);
        let axis_y = axis(self.config.range[1]);
        let cells: Vec<(CellLabel, bool)> = (0..n * n)
            .into_par_iter()
            .map(|idx| self.classify(&self.slice_error(axis_x[idx % n], axis_y[idx / n])))
            .collect::<Result<_>>()?;
        Ok(ViabilityGrid {
            config: self.config.clone(),
            axis_x,
            axis_y,
            labels: cells.iter().map(|c| c.0).collect(),
            nesting_violations: cells.iter().filter(|c| c.1).count(),
        })
    }
}

pub fn viability(
    model: PhaseModel,
    nominal: NominalGait,
    projector: ConstrainedProjector,
    config: ViabilityConfig,
) -> Result<ViabilityGrid> {
    ViabilityProblem::new(model, nominal, projector, config)?.run()
}
