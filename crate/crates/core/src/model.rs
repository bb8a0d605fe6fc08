//! Three-mass linear walking model with point hips.
//!
//! Per horizontal axis the torso mass sits at pelvis height `h` above the
//! stance foot, and each leg carries a point mass at height `ρh` along the
//! leg. Heights stay constant, so moment balance about the stance foot and
//! about the hip gives linear dynamics. The hip torque acts between pelvis
//! and swing leg and never enters the whole-body balance directly.
//!
//! State layout, all relative to the stance foot:
//! `[f_x, f_y, p_x, p_y, ḟ_x, ḟ_y, ṗ_x, ṗ_y]` with `f` the swing foot and
//! `p` the pelvis. Inputs are the sagittal and lateral swing-hip torques and
//! the disturbance is a horizontal force on the pelvis.

use std::collections::BTreeMap;
use std::fmt;

use crate::dlqr::{design_constrained, ConstrainedDlqrGain, CostDesign, Scales};
use crate::error::{Error, Result};
use crate::io::{parse_f64, parse_kv};
use crate::lti::{discretize, phase_maps, DiscreteMap, LtiModel, ProfileKind};
use crate::numerics::{Matrix, Vector};
use crate::timeproj::ConstrainedProjector;

pub const STATES: usize = 8;
pub const INPUTS: usize = 2;

pub const SWING_X: usize = 0;
pub const SWING_Y: usize = 1;
pub const PELVIS_X: usize = 2;
pub const PELVIS_Y: usize = 3;
pub const SWING_VX: usize = 4;
pub const SWING_VY: usize = 5;
pub const PELVIS_VX: usize = 6;
pub const PELVIS_VY: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    pub total_mass_kg: f64,
    pub leg_length_m: f64,
    /// Height of the pelvis, which carries the torso mass.
    pub com_height_m: f64,
    /// Share of the total mass in each leg.
    pub leg_mass_fraction: f64,
    /// Height of each leg mass as a fraction of the pelvis height.
    pub leg_mass_height_fraction: f64,
    pub gravity: f64,
    pub step_frequency_hz: f64,
}

pub const PARAM_KEYS: [&str; 7] = [
    "total_mass_kg",
    "leg_length_m",
    "com_height_m",
    "leg_mass_fraction",
    "leg_mass_height_fraction",
    "gravity",
    "step_frequency_hz",
];

impl Default for RobotParams {
    fn default() -> Self {
        Self::atlas_like()
    }
}

impl RobotParams {
    pub fn atlas_like() -> Self {
        Self {
            total_mass_kg: 150.0,
            leg_length_m: 0.9,
            com_height_m: 0.9,
            leg_mass_fraction: 0.1,
            leg_mass_height_fraction: 0.5,
            gravity: 9.81,
            step_frequency_hz: 2.0,
        }
    }

    /// Lengths scaled by `c` with the period scaled by `√c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            leg_length_m: self.leg_length_m * c,
            com_height_m: self.com_height_m * c,
            step_frequency_hz: self.step_frequency_hz / c.sqrt(),
            ..*self
        }
    }

    pub fn half_scale() -> Self {
        Self::atlas_like().scaled(0.5)
    }

    pub fn with_frequency(&self, step_frequency_hz: f64) -> Self {
        Self {
            step_frequency_hz,
            ..*self
        }
    }

    pub fn with_leg_mass_fraction(&self, leg_mass_fraction: f64) -> Self {
        Self {
            leg_mass_fraction,
            ..*self
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.step_frequency_hz
    }

    pub fn leg_mass(&self) -> f64 {
        self.total_mass_kg * self.leg_mass_fraction
    }

    pub fn torso_mass(&self) -> f64 {
        self.total_mass_kg * (1.0 - 2.0 * self.leg_mass_fraction)
    }

    /// Position, velocity and torque scales used for normalization.
    pub fn scales(&self) -> Scales {
        Scales {
            length: self.leg_length_m,
            velocity: (self.gravity * self.leg_length_m).sqrt(),
            torque: self.total_mass_kg * self.gravity * self.leg_length_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_mass_kg", self.total_mass_kg),
            ("leg_length_m", self.leg_length_m),
            ("com_height_m", self.com_height_m),
            ("gravity", self.gravity),
            ("step_frequency_hz", self.step_frequency_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..0.5).contains(&self.leg_mass_fraction) {
            return Err(Error::InvalidParams(format!(
                "leg_mass_fraction = {} must lie in [0, 0.5)",
                self.leg_mass_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.leg_mass_height_fraction) {
            return Err(Error::InvalidParams(format!(
                "leg_mass_height_fraction = {} must lie in [0, 1)",
                self.leg_mass_height_fraction
            )));
        }
        if self.com_height_m > self.leg_length_m {
            return Err(Error::InvalidParams(format!(
                "com_height_m = {} exceeds leg_length_m = {}",
                self.com_height_m, self.leg_length_m
            )));
        }
        Ok(())
    }

    /// Sets one documented key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = parse_f64(key, value)?;
        match key {
            "total_mass_kg" => self.total_mass_kg = v,
            "leg_length_m" => self.leg_length_m = v,
            "com_height_m" => self.com_height_m = v,
            "leg_mass_fraction" => self.leg_mass_fraction = v,
            "leg_mass_height_fraction" => self.leg_mass_height_fraction = v,
            "gravity" => self.gravity = v,
            "step_frequency_hz" => self.step_frequency_hz = v,
            _ => return Err(Error::InvalidParams(format!("unknown parameter key {key}"))),
        }
        Ok(())
    }

    /// Atlas-like defaults overridden by the given keys, then validated.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut p = Self::atlas_like();
        for (k, v) in map {
            p.set(k, v)?;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_kv(text)?)
    }

    pub fn to_kv_string(&self) -> String {
        let values = [
            self.total_mass_kg,
            self.leg_length_m,
            self.com_height_m,
            self.leg_mass_fraction,
            self.leg_mass_height_fraction,
            self.gravity,
            self.step_frequency_hz,
        ];
        PARAM_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Acceleration coefficients over `[f, p, τ, F]` for one axis.
struct AxisCoefficients {
    foot: [f64; 4],
    pelvis: [f64; 4],
}

fn axis_coefficients(p: &RobotParams) -> AxisCoefficients {
    let g = p.gravity;
    let h = p.com_height_m;
    let rho = p.leg_mass_height_fraction;
    let m_l = p.leg_mass();
    let m_t = p.torso_mass();
    let d = (1.0 - rho) * h;
    // Swing-leg mass: m_l d s̈ = τ − m_l g (s − p), s = (1 − ρ) f + ρ p.
    let torque_gain = if m_l > 0.0 { 1.0 / (m_l * d) } else { 0.0 };
    let s_acc = [-g / h, g / h, torque_gain, 0.0];
    let s_pos = [1.0 - rho, rho, 0.0, 0.0];
    // Whole body about the stance foot:
    // (m_t + m_l ρ²) h p̈ + m_l ρ h s̈ = g (m_t p + m_l ρ p + m_l s) + h F.
    let inertia = (m_t + m_l * rho * rho) * h;
    let mut pelvis = [0.0; 4];
    for i in 0..4 {
        let gravity_term = g * m_l * s_pos[i] + if i == 1 { g * (m_t + m_l * rho) } else { 0.0 };
        let force_term = if i == 3 { h } else { 0.0 };
        pelvis[i] = (gravity_term + force_term - m_l * rho * h * s_acc[i]) / inertia;
    }
    let foot = std::array::from_fn(|i| (s_acc[i] - rho * pelvis[i]) / (1.0 - rho));
    AxisCoefficients { foot, pelvis }
}

fn assemble(coef: &AxisCoefficients, column: usize) -> (Matrix, Matrix) {
    let mut a = Matrix::zeros(STATES, STATES);
    let mut b = Matrix::zeros(STATES, INPUTS);
    for axis in 0..2 {
        a[(SWING_X + axis, SWING_VX + axis)] = 1.0;
        a[(PELVIS_X + axis, PELVIS_VX + axis)] = 1.0;
        a[(SWING_VX + axis, SWING_X + axis)] = coef.foot[0];
        a[(SWING_VX + axis, PELVIS_X + axis)] = coef.foot[1];
        a[(PELVIS_VX + axis, SWING_X + axis)] = coef.pelvis[0];
        a[(PELVIS_VX + axis, PELVIS_X + axis)] = coef.pelvis[1];
        b[(SWING_VX + axis, axis)] = coef.foot[column];
        b[(PELVIS_VX + axis, axis)] = coef.pelvis[column];
    }
    (a, b)
}

/// In-phase state matrix; defined also for massless legs, where the swing
/// leg becomes a passive pendulum hanging from the pelvis.
pub fn continuous_state_matrix(params: &RobotParams) -> Result<Matrix> {
    params.validate()?;
    Ok(assemble(&axis_coefficients(params), 2).0)
}

/// Leg switch on `[f; p]`: the swing foot becomes the stance foot.
pub fn switch_matrix() -> Matrix {
    let mut s = Matrix::zeros(STATES, STATES);
    for block in [0, 4] {
        for axis in 0..2 {
            s[(block + axis, block + axis)] = -1.0;
            s[(block + 2 + axis, block + axis)] = -1.0;
            s[(block + 2 + axis, block + 2 + axis)] = 1.0;
        }
    }
    s
}

/// Leg switch for a foot that may land moving: the ground absorbs the
/// swing-foot velocity before the switch. Equal to [`switch_matrix`] on
/// states with zero swing-foot velocity.
pub fn landing_reset() -> Matrix {
    let c = swing_velocity_constraint();
    let keep = Matrix::identity(STATES, STATES) - c.transpose() * c;
    switch_matrix() * keep
}

/// Rows picking the swing-foot velocity.
pub fn swing_velocity_constraint() -> Matrix {
    let mut c = Matrix::zeros(2, STATES);
    c[(0, SWING_VX)] = 1.0;
    c[(1, SWING_VY)] = 1.0;
    c
}

#[derive(Debug, Clone)]
pub struct PhaseModel {
    pub params: RobotParams,
    pub lti: LtiModel,
    pub period: f64,
    pub switch: Matrix,
    pub constraint: Matrix,
    pub kind: ProfileKind,
}

pub fn build_3lp(params: &RobotParams) -> Result<PhaseModel> {
    params.validate()?;
    if params.leg_mass_fraction <= 0.0 {
        return Err(Error::InvalidParams(
            "leg_mass_fraction must be positive to actuate the swing leg".into(),
        ));
    }
    let coef = axis_coefficients(params);
    let (a, b) = assemble(&coef, 2);
    let (_, bw) = assemble(&coef, 3);
    let labels = [
        "swing_x",
        "swing_y",
        "pelvis_x",
        "pelvis_y",
        "swing_vx",
        "swing_vy",
        "pelvis_vx",
        "pelvis_vy",
    ];
    let lti = LtiModel::with_disturbance(a, b, bw)?.with_labels(labels.iter().map(|s| s.to_string()).collect());
    Ok(PhaseModel {
        params: *params,
        lti,
        period: params.period(),
        switch: switch_matrix(),
        constraint: swing_velocity_constraint(),
        kind: ProfileKind::Linear,
    })
}

impl PhaseModel {
    /// Number of input parameters per phase.
    pub fn input_params(&self) -> usize {
        INPUTS * self.kind.params_per_input()
    }

    /// Phase-start to next phase-start map including the leg switch.
    pub fn discrete(&self) -> Result<DiscreteMap> {
        let d = discretize(&self.lti, self.period, self.kind)?;
        Ok(DiscreteMap {
            a: &self.switch * d.a,
            b: &self.switch * d.b,
            horizon: self.period,
        })
    }

    pub fn cost_design(&self, mu: f64) -> Result<CostDesign> {
        CostDesign::normalized(self.params.scales(), 4, 4, self.input_params(), mu)
    }

    pub fn design_gain(&self, mu: f64) -> Result<ConstrainedDlqrGain> {
        let d = self.discrete()?;
        design_constrained(&d.a, &d.b, &self.constraint, &self.cost_design(mu)?)
    }

    pub fn projector(&self, gain: ConstrainedDlqrGain) -> Result<ConstrainedProjector> {
        ConstrainedProjector::new(self.lti.clone(), self.kind, self.period, self.switch.clone(), gain)
    }

    /// Error with positions divided by the leg length and velocities by `√(g l)`.
    pub fn normalize(&self, e: &Vector) -> Vector {
        let s = self.params.scales();
        Vector::from_fn(e.len(), |i, _| if i < 4 { e[i] / s.length } else { e[i] / s.velocity })
    }

    pub fn normalized_norm(&self, e: &Vector) -> f64 {
        self.normalize(e).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitState {
    pub x: Vector,
    pub stance: Side,
    /// World position of the stance foot.
    pub anchor: [f64; 2],
    /// Seconds into the current phase.
    pub clock: f64,
}

/// World-frame positions and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPose {
    pub stance: [f64; 2],
    pub swing: [f64; 2],
    pub pelvis: [f64; 2],
    pub swing_velocity: [f64; 2],
    pub pelvis_velocity: [f64; 2],
}

impl GaitState {
    pub fn world(&self) -> WorldPose {
        let x = &self.x;
        let a = self.anchor;
        WorldPose {
            stance: a,
            swing: [a[0] + x[SWING_X], a[1] + x[SWING_Y]],
            pelvis: [a[0] + x[PELVIS_X], a[1] + x[PELVIS_Y]],
            swing_velocity: [x[SWING_VX], x[SWING_VY]],
            pelvis_velocity: [x[PELVIS_VX], x[PELVIS_VY]],
        }
    }
}

/// Swaps the legs at the end of a phase.
pub fn switch(state: &GaitState, period: f64) -> Result<GaitState> {
    if (state.clock - period).abs() > 1e-9 * period.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "switch at phase time {} instead of {period}",
            state.clock
        )));
    }
    Ok(GaitState {
        x: switch_matrix() * &state.x,
        stance: state.stance.flip(),
        anchor: [state.anchor[0] + state.x[SWING_X], state.anchor[1] + state.x[SWING_Y]],
        clock: 0.0,
    })
}

/// Negates lateral components of a state.
pub fn mirror_state(x: &Vector) -> Vector {
    Vector::from_fn(x.len(), |i, _| if i % 2 == 1 { -x[i] } else { x[i] })
}

/// Negates lateral components of a stacked input-parameter vector.
pub fn mirror_input(u: &Vector) -> Vector {
    mirror_state(u)
}

/// Periodic gait: phase `k` starts at `X̄` (lateral components mirrored on
/// odd phases) with input parameters `Ū` (mirrored likewise).
#[derive(Debug, Clone, PartialEq)]
pub struct NominalGait {
    pub x: Vector,
    pub u: Vector,
    pub period: f64,
    pub speed: f64,
    /// Lateral distance between consecutive footholds; zero without lateral motion.
    pub step_width: f64,
}

impl NominalGait {
    pub fn phase(&self, k: usize) -> (Vector, Vector) {
        if k % 2 == 1 {
            (mirror_state(&self.x), mirror_input(&self.u))
        } else {
            (self.x.clone(), self.u.clone())
        }
    }

    /// Nominal state at phase time `t` of phase `k`.
    pub fn state_at(&self, model: &PhaseModel, k: usize, t: f64) -> Result<Vector> {
        let (a, b) = phase_maps(&model.lti, t, model.kind, model.period)?;
        let (x, u) = self.phase(k);
        Ok(a * x + b * u)
    }
}

/// Minimum-norm periodic gait walking at `speed`; `step_width > 0` adds a
/// lateral rocking motion with alternating lateral footholds, the first
/// swing foot landing on the negative-y side.
pub fn nominal_gait(model: &PhaseModel, speed: f64, step_width: f64) -> Result<NominalGait> {
    if !speed.is_finite() || !step_width.is_finite() || step_width < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "speed {speed} / step width {step_width} invalid"
        )));
    }
    let n = STATES;
    let m = model.input_params();
    let (a, b) = phase_maps(&model.lti, model.period, model.kind, model.period)?;
    let mut end = Matrix::zeros(n, n + m);
    end.view_mut((0, 0), (n, n)).copy_from(&a);
    end.view_mut((0, n), (n, m)).copy_from(&b);
    let mirror = Matrix::from_fn(n, n, |i, j| {
        if i != j {
            0.0
        } else if i % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    });

    let rows = n + 2 + 2;
    let mut eq = Matrix::zeros(rows, n + m);
    let mut rhs = Vector::zeros(rows);
    let mut periodic = &mirror * &model.switch * &end;
    for i in 0..n {
        periodic[(i, i)] -= 1.0;
    }
    eq.view_mut((0, 0), (n, n + m)).copy_from(&periodic);
    eq.view_mut((n, 0), (2, n + m)).copy_from(&(&model.constraint * &end));
    eq.row_mut(n + 2).copy_from(&end.row(SWING_X));
    rhs[n + 2] = speed * model.period;
    eq.row_mut(n + 3).copy_from(&end.row(SWING_Y));
    rhs[n + 3] = -step_width;

    let svd = eq.clone().svd(true, true);
    let z = svd
        .solve(&rhs, 1e-12 * svd.singular_values.max())
        .map_err(|e| Error::InvalidArgument(format!("periodic gait solve failed: {e}")))?;
    let residual = (&eq * &z - &rhs).norm();
    if residual > 1e-9 * (1.0 + rhs.norm()) {
        return Err(Error::Singular { condition: residual });
    }
    Ok(NominalGait {
        x: z.rows(0, n).into_owned(),
        u: z.rows(n, m).into_owned(),
        period: model.period,
        speed,
        step_width,
    })
}

/// Capture-point foot placement from pelvis state only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureGains {
    /// Coefficient on the pelvis offset in world frame.
    pub position: f64,
    /// Coefficient on the pelvis velocity, `√(h/g)`.
    pub velocity: f64,
}

impl CaptureGains {
    /// Coefficients `[k_e1, k_ė1, k_e2, k_ė2]` in the pelvis-relative
    /// convention of the gain tables: the offset term cancels against the
    /// pelvis reference, leaving only the velocity gain.
    pub fn table_coefficients(&self) -> [f64; 4] {
        [0.0, 0.0, self.position - 1.0, self.velocity]
    }

    /// World-frame foot target relative to the nominal target.
    pub fn world_target(&self, offset: f64, velocity: f64) -> f64 {
        self.position * offset + self.velocity * velocity
    }
}

pub fn capture_gains(params: &RobotParams) -> Result<CaptureGains> {
    params.validate()?;
    Ok(CaptureGains {
        position: 1.0,
        velocity: (params.com_height_m / params.gravity).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{propagate, InputProfile, PiecewiseConstant};
    use crate::numerics::{eigenvalues, max_abs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn atlas() -> PhaseModel {
        build_3lp(&RobotParams::atlas_like()).unwrap()
    }

    #[test]
    fn landing_reset_matches_switch_for_a_resting_foot() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Vector::from_fn(STATES, |_, _| rng.gen_range(-1.0..1.0));
        let moving = x.clone();
        x[SWING_VX] = 0.0;
        x[SWING_VY] = 0.0;
        assert!((landing_reset() * &x - switch_matrix() * &x).amax() < 1e-15);
        assert!((landing_reset() * &moving - switch_matrix() * &x).amax() < 1e-15);
    }

    #[test]
    fn massless_legs_reduce_to_inverted_pendulum() {
        let p = RobotParams::atlas_like().with_leg_mass_fraction(0.0);
        let a = continuous_state_matrix(&p).unwrap();
        // Pelvis rows only see the pelvis.
        let block = Matrix::from_fn(2, 2, |i, j| a[([PELVIS_X, PELVIS_VX][i], [PELVIS_X, PELVIS_VX][j])]);
        assert_eq!(a[(PELVIS_VX, SWING_X)], 0.0);
        let expected = (p.gravity / p.com_height_m).sqrt();
        let mut re: Vec<f64> = eigenvalues(&block).unwrap().iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + expected).abs() < 1e-6 && (re[1] - expected).abs() < 1e-6);
        assert!(build_3lp(&p).is_err());
    }

    #[test]
    fn axes_are_identical_and_decoupled() {
        let m = atlas();
        let perm = [1, 0, 3, 2, 5, 4, 7, 6];
        let permute = |x: &Matrix| Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(perm[i], perm[j])]);
        assert_eq!(permute(&m.lti.a), m.lti.a);
        let b_perm = Matrix::from_fn(8, 2, |i, j| m.lti.b[(perm[i], 1 - j)]);
        assert_eq!(b_perm, m.lti.b);
        assert_eq!(m.lti.a[(PELVIS_VX, PELVIS_Y)], 0.0);
    }

    #[test]
    fn hip_torque_pushes_pelvis_and_swing_leg_apart() {
        let m = atlas();
        let p = m.params;
        let rho = p.leg_mass_height_fraction;
        // The torque's effect on the pelvis is the reaction to the swing-leg
        // mass acceleration: J p̈ = −m_l ρ s̈.
        let s_acc = (1.0 - rho) * m.lti.b[(SWING_VX, 0)] + rho * m.lti.b[(PELVIS_VX, 0)];
        let inertia = p.torso_mass() + p.leg_mass() * rho * rho;
        assert!(s_acc > 0.0 && m.lti.b[(PELVIS_VX, 0)] < 0.0);
        assert!((inertia * m.lti.b[(PELVIS_VX, 0)] + p.leg_mass() * rho * s_acc).abs() < 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = atlas();
        let x = propagate(
            &m.lti,
            &Vector::zeros(8),
            &InputProfile::zero(ProfileKind::Linear, 2, m.period),
            &PiecewiseConstant::zero(2),
            0.5,
        )
        .unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn switch_is_an_involution_but_not_orthogonal() {
        let s = switch_matrix();
        assert_eq!(&s * &s, Matrix::identity(8, 8));
        assert!(max_abs(&(s.transpose() * &s - Matrix::identity(8, 8))) > 0.5);
    }

    #[test]
    fn switch_preserves_world_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let state = GaitState {
                x: Vector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0)),
                stance: Side::Left,
                anchor: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                clock: 0.5,
            };
            let next = switch(&state, 0.5).unwrap();
            let (w0, w1) = (state.world(), next.world());
            for i in 0..2 {
                assert!((w0.pelvis[i] - w1.pelvis[i]).abs() < 1e-12);
                assert!((w0.swing[i] - w1.stance[i]).abs() < 1e-12);
                assert!((w0.stance[i] - w1.swing[i]).abs() < 1e-12);
                // Velocities are stance-relative, so the new stance foot's
                // motion shows up in the pelvis velocity.
                let v = w1.pelvis_velocity[i] + w0.swing_velocity[i];
                assert!((w0.pelvis_velocity[i] - v).abs() < 1e-12);
            }
            assert_eq!(next.stance, Side::Right);
            let back = switch(&GaitState { clock: 0.5, ..next }, 0.5).unwrap();
            assert!((back.x - &state.x).norm() < 1e-12);
        }
    }

    #[test]
    fn feet_together_switch_only_flips_foot_offset() {
        let mut x = Vector::zeros(8);
        x[PELVIS_X] = 0.2;
        x[PELVIS_Y] = -0.1;
        let y = switch_matrix() * &x;
        assert_eq!(y, x);
        x[SWING_X] = 0.3;
        let y = switch_matrix() * &x;
        assert_eq!(y[SWING_X], -0.3);
    }

    #[test]
    fn switch_requires_phase_end() {
        let state = GaitState {
            x: Vector::zeros(8),
            stance: Side::Left,
            anchor: [0.0; 2],
            clock: 0.2,
        };
        assert!(switch(&state, 0.5).is_err());
    }

    #[test]
    fn params_validate_and_parse() {
        assert!(RobotParams::parse("leg_mass_fraction = 0.6").is_err());
        assert!(RobotParams::parse("com_height_m = 2.0").is_err());
        assert!(RobotParams::parse("wheel_count = 4").is_err());
        let p = RobotParams::parse("total_mass_kg = 80\nstep_frequency_hz = 1.5").unwrap();
        assert_eq!(p.total_mass_kg, 80.0);
        assert_eq!(p.period(), 1.0 / 1.5);
        assert_eq!(RobotParams::parse(&p.to_kv_string()).unwrap(), p);
    }

    #[test]
    fn stationary_gait_is_zero() {
        let g = nominal_gait(&atlas(), 0.0, 0.0).unwrap();
        assert!(g.x.norm() < 1e-14 && g.u.norm() < 1e-14);
    }

    #[test]
    fn walking_gait_is_periodic_with_requested_step() {
        let m = atlas();
        for width in [0.0, 0.2] {
            let g = nominal_gait(&m, 1.0, width).unwrap();
            let mut state = GaitState {
                x: g.x.clone(),
                stance: Side::Left,
                anchor: [0.0; 2],
                clock: 0.0,
            };
            for k in 0..10 {
                let (xk, uk) = g.phase(k);
                assert!((&state.x - &xk).norm() < 1e-8, "phase {k}");
                let profile = InputProfile::new(m.kind, uk, m.period).unwrap();
                let end = propagate(&m.lti, &state.x, &profile, &PiecewiseConstant::zero(2), m.period).unwrap();
                assert!((end[SWING_X] - 0.5).abs() < 1e-9);
                assert!((end[SWING_Y].abs() - width).abs() < 1e-9);
                assert!(end[SWING_VX].abs() < 1e-9 && end[SWING_VY].abs() < 1e-9);
                state = switch(
                    &GaitState {
                        x: end,
                        clock: m.period,
                        ..state
                    },
                    m.period,
                )
                .unwrap();
            }
            assert!((state.anchor[0] - 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn capture_gain_values() {
        let g = capture_gains(&RobotParams::atlas_like()).unwrap();
        assert!((g.velocity - 0.3029).abs() < 1e-4);
        assert_eq!(g.world_target(0.0, 0.0), 0.0);
        let low = RobotParams {
            com_height_m: 0.7,
            ..RobotParams::atlas_like()
        };
        assert!(capture_gains(&low).unwrap().velocity < g.velocity);
        assert_eq!(g.table_coefficients()[0], 0.0);
        assert_eq!(g.table_coefficients()[1], 0.0);
    }

    #[test]
    fn scaled_robot_has_identical_normalized_maps() {
        let full = atlas();
        let half = build_3lp(&RobotParams::half_scale()).unwrap();
        let normalize = |m: &PhaseModel| {
            let d = m.discrete().unwrap();
            let s = m.params.scales();
            let sx = Matrix::from_fn(8, 8, |i, j| {
                if i != j {
                    0.0
                } else if i < 4 {
                    s.length
                } else {
                    s.velocity
                }
            });
            let sx_inv = sx.clone().try_inverse().unwrap();
            (&sx_inv * d.a * &sx, &sx_inv * d.b * s.torque)
        };
        let (a1, b1) = normalize(&full);
        let (a2, b2) = normalize(&half);
        assert!(max_abs(&(a1 - a2)) < 1e-9);
        assert!(max_abs(&(b1 - b2)) < 1e-9);
    }
}
