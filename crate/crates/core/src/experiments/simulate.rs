//! Closed-loop walking simulation with exact per-tick propagation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::lti::{transition, InputProfile, Transition};
use crate::model::{
    capture_gains, switch, CaptureGains, GaitState, NominalGait, PhaseModel, Side, INPUTS, PELVIS_VX, PELVIS_X, STATES,
    SWING_VX, SWING_VY, SWING_X, SWING_Y,
};
use crate::numerics::{solve_linear, Matrix, Vector};
use crate::timeproj::ConstrainedProjector;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_FALL_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Controller {
    OpenLoop,
    Dlqr,
    TimeProjection,
    CapturePoint,
}

impl Controller {
    pub const ALL: [Controller; 4] = [
        Controller::OpenLoop,
        Controller::Dlqr,
        Controller::TimeProjection,
        Controller::CapturePoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Controller::OpenLoop => "open-loop",
            Controller::Dlqr => "dlqr",
            Controller::TimeProjection => "time-projection",
            Controller::CapturePoint => "capture-point",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Controller::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown controller {s:?}")))
    }
}

/// Constant horizontal force on the pelvis over `[start, end)` seconds of
/// absolute time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushEvent {
    pub force: [f64; 2],
    pub start: f64,
    pub end: f64,
}

impl PushEvent {
    /// Push between the given fractions of phase `phase`.
    pub fn in_phase(force: [f64; 2], phase: usize, start_fraction: f64, end_fraction: f64, period: f64) -> Self {
        let base = phase as f64 * period;
        Self {
            force,
            start: base + start_fraction * period,
            end: base + end_fraction * period,
        }
    }

    fn active(&self, t: f64) -> bool {
        self.start <= t + TIME_EPS && self.end > t + TIME_EPS
    }
}

const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub controller: Controller,
    pub events: Vec<PushEvent>,
    /// Deviation from the nominal phase-start state at `t = 0`.
    pub initial_error: Vector,
    pub steps: usize,
    pub dt: f64,
    /// Normalized error norm beyond which the run counts as a fall.
    pub fall_threshold: f64,
}

impl Scenario {
    pub fn new(controller: Controller, steps: usize) -> Self {
        Self {
            controller,
            events: Vec::new(),
            initial_error: Vector::zeros(STATES),
            steps,
            dt: DEFAULT_DT,
            fall_threshold: DEFAULT_FALL_THRESHOLD,
        }
    }

    pub fn with_event(mut self, event: PushEvent) -> Self {
        self.events.push(event);
        self
    }

    pub fn with_initial_error(mut self, e: Vector) -> Self {
        self.initial_error = e;
        self
    }

    pub fn horizon(&self, period: f64) -> f64 {
        self.steps as f64 * period
    }

    fn validate(&self, period: f64) -> Result<usize> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("scenario needs at least one step".into()));
        }
        if !(self.dt > 0.0) || !(self.fall_threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt {} and fall threshold {} must be positive",
                self.dt, self.fall_threshold
            )));
        }
        let ticks = (period / self.dt).round();
        if ticks < 1.0 || (ticks * self.dt - period).abs() > 1e-9 * period {
            return Err(Error::InvalidArgument(format!(
                "dt {} does not divide the period {period}",
                self.dt
            )));
        }
        if self.initial_error.len() != STATES {
            return Err(Error::DimensionMismatch {
                context: "scenario initial error",
                expected: STATES,
                actual: self.initial_error.len(),
            });
        }
        let horizon = self.horizon(period);
        for ev in &self.events {
            let finite = ev.force.iter().all(|f| f.is_finite());
            if !finite || !(ev.start >= 0.0) || !(ev.end >= ev.start) || ev.end > horizon + TIME_EPS {
                return Err(Error::InvalidArgument(format!(
                    "push [{}, {}) is not inside [0, {horizon}]",
                    ev.start, ev.end
                )));
            }
        }
        Ok(ticks as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub pelvis: [f64; 2],
    pub swing: [f64; 2],
    pub stance: [f64; 2],
    pub pelvis_velocity: [f64; 2],
    pub swing_velocity: [f64; 2],
    /// Hip torques `[sagittal, lateral]` at the start of the tick.
    pub u: [f64; 2],
    /// Applied push force at the start of the tick.
    pub force: [f64; 2],
    /// Correction to the nominal input parameters in force during the tick.
    pub correction: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Touchdown count, starting at 1.
    pub step: usize,
    pub time: f64,
    /// Normalized norm of the error arriving at touchdown, before the reset.
    pub err_norm: f64,
    /// Normalized norm of the error right after the reset.
    pub post_switch_norm: f64,
    /// World position of the new stance foot.
    pub foot: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub controller: Controller,
    pub ticks: Vec<TickRecord>,
    pub steps: Vec<StepRecord>,
    pub fallen: bool,
    pub fall_time: Option<f64>,
    /// Ticks where the projection was ill conditioned and the previous
    /// correction was held.
    pub held_ticks: usize,
}

impl Trajectory {
    /// Sum of the first `n` touchdown error norms; infinite after a fall.
    pub fn summed_error(&self, n: usize) -> f64 {
        if self.steps.len() < n {
            return f64::INFINITY;
        }
        self.steps[..n].iter().map(|s| s.err_norm).sum()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "t", "pelvis_x", "pelvis_y", "swing_x", "swing_y", "stance_x", "stance_y", "u_sag", "u_lat", "fx", "fy",
        ]);
        for r in &self.ticks {
            t.push(vec![
                r.t,
                r.pelvis[0],
                r.pelvis[1],
                r.swing[0],
                r.swing[1],
                r.stance[0],
                r.stance[1],
                r.u[0],
                r.u[1],
                r.force[0],
                r.force[1],
            ]);
        }
        t
    }

    pub fn touchdown_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["step", "err_norm", "foot_x", "foot_y"]);
        t.comment("err_norm: normalized error norm of the state arriving at touchdown, before the leg-switch reset");
        for s in &self.steps {
            t.push(vec![s.step as f64, s.err_norm, s.foot[0], s.foot[1]]);
        }
        t
    }
}

/// Precomputed per-tick maps for one gait and controller set.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: PhaseModel,
    pub nominal: NominalGait,
    pub projector: ConstrainedProjector,
    pub capture: CaptureGains,
    dt: f64,
    ticks: usize,
    step: Transition,
    /// `A(t_i)` and `B(t_i)` at tick starts, `i = 0..=ticks`.
    phi_t: Vec<Matrix>,
    b_t: Vec<Matrix>,
    /// `A(T − t_i)`.
    phi_tau: Vec<Matrix>,
    b_full: Matrix,
}

impl Simulator {
    pub fn new(model: PhaseModel, nominal: NominalGait, projector: ConstrainedProjector, dt: f64) -> Result<Self> {
        let period = model.period;
        let ticks = Scenario {
            dt,
            ..Scenario::new(Controller::OpenLoop, 1)
        }
        .validate(period)?;
        if (nominal.period - period).abs() > 1e-12 * period {
            return Err(Error::InvalidArgument(format!(
                "nominal gait period {} differs from model period {period}",
                nominal.period
            )));
        }
        let capture = capture_gains(&model.params)?;
        let h = period / ticks as f64;
        let mut phi_t = Vec::with_capacity(ticks + 1);
        let mut b_t = Vec::with_capacity(ticks + 1);
        let mut phi_tau = Vec::with_capacity(ticks + 1);
        for i in 0..=ticks {
            let t = i as f64 * h;
            let tr = transition(&model.lti, t)?;
            b_t.push(tr.input_map(model.kind, period));
            phi_t.push(tr.phi);
            phi_tau.push(transition(&model.lti, period - t)?.phi);
        }
        let b_full = b_t[ticks].clone();
        Ok(Self {
            step: transition(&model.lti, h)?,
            model,
            nominal,
            projector,
            capture,
            dt: h,
            ticks,
            phi_t,
            b_t,
            phi_tau,
            b_full,
        })
    }

    /// Builds the gait, gain and projector for `model` at `mu`.
    pub fn for_model(model: PhaseModel, speed: f64, step_width: f64, mu: f64, dt: f64) -> Result<Self> {
        let nominal = crate::model::nominal_gait(&model, speed, step_width)?;
        let projector = model.projector(model.design_gain(mu)?)?;
        Self::new(model, nominal, projector, dt)
    }

    pub fn period(&self) -> f64 {
        self.model.period
    }

    pub fn ticks_per_phase(&self) -> usize {
        self.ticks
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Tick index at which the projection clamp window begins.
    fn clamp_tick(&self) -> usize {
        let min = self.projector.min_remaining();
        (0..=self.ticks)
            .find(|&i| self.model.period - i as f64 * self.dt < min)
            .unwrap_or(self.ticks)
    }

    /// Nominal state at tick `i` of phase `k`.
    pub fn nominal_at(&self, k: usize, i: usize) -> Vector {
        let (x, u) = self.nominal.phase(k);
        &self.phi_t[i] * x + &self.b_t[i] * u
    }

    pub fn simulate(&self, scenario: &Scenario) -> Result<Trajectory> {
        if scenario.validate(self.model.period)? != self.ticks || (scenario.dt - self.dt).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "scenario dt {} differs from simulator dt {}",
                scenario.dt, self.dt
            )));
        }
        let period = self.model.period;
        let n_in = self.model.input_params();
        let gain = &self.projector.gain.k;
        let clamp = self.clamp_tick();
        let mut traj = Trajectory {
            controller: scenario.controller,
            ticks: Vec::with_capacity(scenario.steps * self.ticks),
            steps: Vec::with_capacity(scenario.steps),
            fallen: false,
            fall_time: None,
            held_ticks: 0,
        };
        let (x0, _) = self.nominal.phase(0);
        let mut state = GaitState {
            x: x0 + &scenario.initial_error,
            stance: Side::Left,
            anchor: [0.0, 0.0],
            clock: 0.0,
        };

        'phases: for k in 0..scenario.steps {
            let (_, u_nom) = self.nominal.phase(k);
            let mut du = Vector::zeros(n_in);
            let base = k as f64 * period;
            for i in 0..self.ticks {
                let t = i as f64 * self.dt;
                let now = base + t;
                let e = &state.x - self.nominal_at(k, i);
                if self.model.normalized_norm(&e) > scenario.fall_threshold {
                    traj.fallen = true;
                    traj.fall_time = Some(now);
                    break 'phases;
                }
                match scenario.controller {
                    Controller::OpenLoop => {}
                    Controller::Dlqr => {
                        if i == 0 {
                            du = -(gain * &e);
                        }
                    }
                    Controller::TimeProjection => {
                        if i < clamp {
                            match self.projector.project_with_maps(t, &self.phi_tau[i], &self.b_t[i], &e) {
                                Ok(sol) => du = sol.du,
                                Err(Error::NearSingularProjection { .. }) => traj.held_ticks += 1,
                                Err(err) => return Err(err),
                            }
                        }
                    }
                    Controller::CapturePoint => {
                        if i < clamp {
                            match self.capture_correction(i, &e) {
                                Some(d) => du = d,
                                None => traj.held_ticks += 1,
                            }
                        }
                    }
                }
                let profile = InputProfile::new(self.model.kind, &u_nom + &du, period)?;
                let force = active_force(&scenario.events, now);
                let pose = state.world();
                let u = profile.eval(t);
                traj.ticks.push(TickRecord {
                    t: now,
                    pelvis: pose.pelvis,
                    swing: pose.swing,
                    stance: pose.stance,
                    pelvis_velocity: pose.pelvis_velocity,
                    swing_velocity: pose.swing_velocity,
                    u: [u[0], u[1]],
                    force,
                    correction: std::array::from_fn(|j| du[j]),
                });
                state.x = self.advance(&state.x, &profile, t, now, &scenario.events)?;
            }
            let err = self.model.normalized_norm(&(&state.x - self.nominal_at(k, self.ticks)));
            state.clock = period;
            state = switch(&state, period)?;
            let (x_next, _) = self.nominal.phase(k + 1);
            let post = self.model.normalized_norm(&(&state.x - x_next));
            traj.steps.push(StepRecord {
                step: k + 1,
                time: base + period,
                err_norm: err,
                post_switch_norm: post,
                foot: state.anchor,
            });
            if err.max(post) > scenario.fall_threshold {
                traj.fallen = true;
                traj.fall_time = Some(base + period);
                break;
            }
        }
        Ok(traj)
    }

    /// One tick from phase time `t` (absolute time `now`), splitting at push
    /// boundaries inside the tick.
    fn advance(&self, x: &Vector, profile: &InputProfile, t: f64, now: f64, events: &[PushEvent]) -> Result<Vector> {
        let end = now + self.dt;
        let mut cuts: Vec<f64> = events
            .iter()
            .flat_map(|e| [e.start, e.end])
            .filter(|&c| c > now + TIME_EPS && c < end - TIME_EPS)
            .collect();
        if cuts.is_empty() {
            let w = Vector::from_row_slice(&active_force(events, now));
            return Ok(crate::lti::step_with(&self.step, x, profile, t, &w));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.push(end);
        let mut x = x.clone();
        let mut a = now;
        for b in cuts {
            let tr = transition(&self.model.lti, b - a)?;
            let w = Vector::from_row_slice(&active_force(events, a));
            x = crate::lti::step_with(&tr, &x, profile, t + (a - now), &w);
            a = b;
        }
        Ok(x)
    }

    /// Correction that lands the swing foot at the capture target with zero
    /// velocity; depends on the pelvis error only through the target.
    fn capture_correction(&self, i: usize, e: &Vector) -> Option<Vector> {
        let rows = [SWING_X, SWING_Y, SWING_VX, SWING_VY];
        let b_rem = &self.b_full - &self.phi_tau[i] * &self.b_t[i];
        let free = &self.phi_tau[i] * e;
        let mut lhs = Matrix::zeros(4, b_rem.ncols());
        let mut rhs = Vector::zeros(4);
        for (r, &row) in rows.iter().enumerate() {
            lhs.row_mut(r).copy_from(&b_rem.row(row));
            rhs[r] = -free[row];
        }
        for axis in 0..INPUTS {
            rhs[axis] += self.capture.world_target(e[PELVIS_X + axis], e[PELVIS_VX + axis]);
        }
        if lhs.nrows() != lhs.ncols() {
            return None;
        }
        let rhs = Matrix::from_column_slice(4, 1, rhs.as_slice());
        solve_linear(&lhs, &rhs)
            .ok()
            .map(|d| d.column(0).into_owned())
            .filter(|d| d.iter().all(|v| v.is_finite()))
    }
}

fn active_force(events: &[PushEvent], t: f64) -> [f64; 2] {
    let mut f = [0.0; 2];
    for e in events.iter().filter(|e| e.active(t)) {
        f[0] += e.force[0];
        f[1] += e.force[1];
    }
    f
}
