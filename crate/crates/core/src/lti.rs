//! Closed-form propagation and discretization of continuous LTI systems
//! `ẋ = a x + b u + bw w` under parametric input profiles.
//!
//! Transition and input maps come from a single exponential of an augmented
//! generator, so a singular `a` needs no special handling.

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, ensure_square, expm, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: Matrix,
    pub b: Matrix,
    /// Disturbance map; zero columns when the model has no disturbance channel.
    pub bw: Matrix,
    pub labels: Vec<String>,
}

impl LtiModel {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::with_disturbance(a, b, Matrix::zeros(n, 0))
    }

    pub fn with_disturbance(a: Matrix, b: Matrix, bw: Matrix) -> Result<Self> {
        let n = ensure_square(&a)?;
        for (context, rows) in [("lti b rows", b.nrows()), ("lti bw rows", bw.nrows())] {
            if rows != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: rows,
                });
            }
        }
        ensure_finite(&a, "lti a")?;
        ensure_finite(&b, "lti b")?;
        ensure_finite(&bw, "lti bw")?;
        Ok(Self {
            a,
            b,
            bw,
            labels: (0..n).map(|i| format!("x{i}")).collect(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbances(&self) -> usize {
        self.bw.ncols()
    }
}

/// Shape of the input held over one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    /// `u(t) = U`.
    Constant,
    /// `u(t) = U₀ (1 − t/T) + U₁ t/T`, parameters stacked `[U₀; U₁]`.
    Linear,
}

impl ProfileKind {
    pub fn params_per_input(self) -> usize {
        match self {
            ProfileKind::Constant => 1,
            ProfileKind::Linear => 2,
        }
    }
}

/// An input profile over a phase of length `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputProfile {
    pub kind: ProfileKind,
    pub params: Vector,
    pub period: f64,
}

impl InputProfile {
    pub fn new(kind: ProfileKind, params: Vector, period: f64) -> Result<Self> {
        if params.len() % kind.params_per_input() != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} parameters do not fit a {kind:?} profile",
                params.len()
            )));
        }
        if !(period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "profile period {period} must be positive"
            )));
        }
        Ok(Self { kind, params, period })
    }

    pub fn constant(u: Vector) -> Self {
        Self {
            kind: ProfileKind::Constant,
            params: u,
            period: 1.0,
        }
    }

    pub fn zero(kind: ProfileKind, inputs: usize, period: f64) -> Self {
        Self {
            kind,
            params: Vector::zeros(inputs * kind.params_per_input()),
            period,
        }
    }

    pub fn inputs(&self) -> usize {
        self.params.len() / self.kind.params_per_input()
    }

    /// Input value at phase time `t`.
    pub fn eval(&self, t: f64) -> Vector {
        match self.kind {
            ProfileKind::Constant => self.params.clone(),
            ProfileKind::Linear => {
                let m = self.inputs();
                let s = t / self.period;
                self.params.rows(0, m) * (1.0 - s) + self.params.rows(m, m) * s
            }
        }
    }

    /// Rate of change of the input (zero for constant profiles).
    pub fn slope(&self) -> Vector {
        match self.kind {
            ProfileKind::Constant => Vector::zeros(self.inputs()),
            ProfileKind::Linear => {
                let m = self.inputs();
                (self.params.rows(m, m) - self.params.rows(0, m)) / self.period
            }
        }
    }
}

/// One-step map `X[k+1] = A X[k] + B U[k]` over `horizon` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMap {
    pub a: Matrix,
    pub b: Matrix,
    pub horizon: f64,
}

/// Blocks of the exponential of the augmented generator over `h` seconds:
/// `phi = e^{ah}`, `g0 = ∫ e^{a(h−s)} b ds`, `g1 = ∫ e^{a(h−s)} b s ds`,
/// `gw = ∫ e^{a(h−s)} bw ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub phi: Matrix,
    pub g0: Matrix,
    pub g1: Matrix,
    pub gw: Matrix,
}

pub fn transition(model: &LtiModel, h: f64) -> Result<Transition> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "transition time {h} must be non-negative"
        )));
    }
    let n = model.states();
    let m = model.inputs();
    let d = model.disturbances();
    let size = n + 2 * m + d;
    let mut gen = Matrix::zeros(size, size);
    gen.view_mut((0, 0), (n, n)).copy_from(&model.a);
    gen.view_mut((0, n), (n, m)).copy_from(&model.b);
    gen.view_mut((0, n + 2 * m), (n, d)).copy_from(&model.bw);
    for i in 0..m {
        gen[(n + i, n + m + i)] = 1.0;
    }
    let e = expm(&(gen * h))?;
    Ok(Transition {
        phi: e.view((0, 0), (n, n)).into_owned(),
        g0: e.view((0, n), (n, m)).into_owned(),
        g1: e.view((0, n + m), (n, m)).into_owned(),
        gw: e.view((0, n + 2 * m), (n, d)).into_owned(),
    })
}

impl Transition {
    /// Input map over `[0, t]` for a profile whose ramp spans `period`.
    pub fn input_map(&self, kind: ProfileKind, period: f64) -> Matrix {
        match kind {
            ProfileKind::Constant => self.g0.clone(),
            ProfileKind::Linear => {
                let n = self.g0.nrows();
                let m = self.g0.ncols();
                let mut out = Matrix::zeros(n, 2 * m);
                out.columns_mut(0, m).copy_from(&(&self.g0 - &self.g1 / period));
                out.columns_mut(m, m).copy_from(&(&self.g1 / period));
                out
            }
        }
    }
}

/// Transition `A(t)` and input map `B(t)` from phase start to phase time `t`
/// for a profile spanning `period`.
pub fn phase_maps(model: &LtiModel, t: f64, kind: ProfileKind, period: f64) -> Result<(Matrix, Matrix)> {
    let tr = transition(model, t)?;
    let b = tr.input_map(kind, period);
    Ok((tr.phi, b))
}

pub fn discretize(model: &LtiModel, horizon: f64, kind: ProfileKind) -> Result<DiscreteMap> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let (a, b) = phase_maps(model, horizon, kind, horizon)?;
    Ok(DiscreteMap { a, b, horizon })
}

/// Piecewise-constant signal segment on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub value: Vector,
}

/// A piecewise-constant disturbance made of contiguous segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    segments: Vec<Segment>,
}

impl PiecewiseConstant {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if !(s.end > s.start) {
                return Err(Error::InvalidArgument(format!(
                    "segment [{}, {}) is empty",
                    s.start, s.end
                )));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].end != pair[1].start {
                return Err(Error::DisturbanceGap {
                    from: pair[0].end,
                    to: pair[1].start,
                });
            }
        }
        Ok(Self { segments })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            segments: vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                value: Vector::zeros(dim),
            }],
        }
    }

    /// Zero except `value` on `[start, end)`.
    pub fn pulse(value: Vector, start: f64, end: f64) -> Result<Self> {
        let zero = Vector::zeros(value.len());
        let mut segments = Vec::new();
        if start > 0.0 {
            segments.push(Segment {
                start: 0.0,
                end: start,
                value: zero.clone(),
            });
        }
        if end > start {
            segments.push(Segment { start, end, value });
        }
        segments.push(Segment {
            start: end.max(0.0),
            end: f64::INFINITY,
            value: zero,
        });
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Checks that the signal is defined on all of `[from, to]`.
    pub fn covers(&self, from: f64, to: f64) -> Result<()> {
        let first = self.segments.first().map(|s| s.start).unwrap_or(f64::INFINITY);
        let last = self.segments.last().map(|s| s.end).unwrap_or(f64::NEG_INFINITY);
        if first > from || last < to {
            return Err(Error::DisturbanceGap { from, to });
        }
        Ok(())
    }
}

/// Exact state at time `t` from `x0` under `profile` and a piecewise-constant
/// disturbance.
pub fn propagate(
    model: &LtiModel,
    x0: &Vector,
    profile: &InputProfile,
    disturbance: &PiecewiseConstant,
    t: f64,
) -> Result<Vector> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "propagation time {t} must be non-negative"
        )));
    }
    if x0.len() != model.states() {
        return Err(Error::DimensionMismatch {
            context: "propagate x0",
            expected: model.states(),
            actual: x0.len(),
        });
    }
    if profile.inputs() != model.inputs() {
        return Err(Error::DimensionMismatch {
            context: "propagate profile inputs",
            expected: model.inputs(),
            actual: profile.inputs(),
        });
    }
    disturbance.covers(0.0, t)?;
    let mut x = x0.clone();
    let mut now = 0.0;
    for seg in disturbance.segments() {
        if now >= t {
            break;
        }
        if seg.end <= now {
            continue;
        }
        if seg.value.len() != model.disturbances() {
            return Err(Error::DimensionMismatch {
                context: "propagate disturbance",
                expected: model.disturbances(),
                actual: seg.value.len(),
            });
        }
        let stop = seg.end.min(t);
        let tr = transition(model, stop - now)?;
        x = &tr.phi * &x + &tr.g0 * profile.eval(now) + &tr.g1 * profile.slope() + &tr.gw * &seg.value;
        now = stop;
    }
    Ok(x)
}

/// Propagates over `[t0, t0 + h]` with everything held in closed form; the
/// profile is evaluated in phase time.
pub fn step_with(tr: &Transition, x: &Vector, profile: &InputProfile, t0: f64, w: &Vector) -> Vector {
    &tr.phi * x + &tr.g0 * profile.eval(t0) + &tr.g1 * profile.slope() + &tr.gw * w
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::{inverse, matrix_from_rows};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Classic RK4 on `ẋ = a x + b u(t) + bw w(t)`.
    pub(crate) fn rk4(
        model: &LtiModel,
        x0: &Vector,
        u: impl Fn(f64) -> Vector,
        w: impl Fn(f64) -> Vector,
        t: f64,
        dt: f64,
    ) -> Vector {
        let f = |s: f64, x: &Vector| &model.a * x + &model.b * u(s) + &model.bw * w(s);
        let steps = (t / dt).round() as usize;
        let h = t / steps as f64;
        let mut x = x0.clone();
        for i in 0..steps {
            let s = i as f64 * h;
            let k1 = f(s, &x);
            let k2 = f(s + h / 2.0, &(&x + &k1 * (h / 2.0)));
            let k3 = f(s + h / 2.0, &(&x + &k2 * (h / 2.0)));
            let k4 = f(s + h, &(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LtiModel {
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) * (1.0 / n as f64).sqrt();
        let b = Matrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let bw = Matrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        LtiModel::with_disturbance(a, b, bw).unwrap()
    }

    #[test]
    fn pure_integrator() {
        let model = LtiModel::new(scalar(0.0), scalar(1.0)).unwrap();
        let d = discretize(&model, 0.7, ProfileKind::Constant).unwrap();
        assert_eq!(d.a[(0, 0)], 1.0);
        assert!((d.b[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn scalar_unstable_plant() {
        let model = LtiModel::new(scalar(1.0), scalar(1.0)).unwrap();
        let d = discretize(&model, 1.0, ProfileKind::Constant).unwrap();
        let e = 1f64.exp();
        assert!((d.a[(0, 0)] - e).abs() < 1e-14);
        assert!((d.b[(0, 0)] - (e - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn linear_profile_matches_rk4() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = random_model(&mut rng, 8, 2);
        let period = 0.8;
        let d = discretize(&model, period, ProfileKind::Linear).unwrap();
        let x0 = Vector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let params = Vector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let profile = InputProfile::new(ProfileKind::Linear, params.clone(), period).unwrap();
        let closed = &d.a * &x0 + &d.b * &params;
        let oracle = rk4(&model, &x0, |s| profile.eval(s), |_| Vector::zeros(1), period, 1e-5);
        assert!((&closed - &oracle).norm() <= 1e-8 * oracle.norm());
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 4, 1);
        let profile = InputProfile::zero(ProfileKind::Linear, 1, 1.0);
        for t in [0.0, 0.3, 2.0] {
            let x = propagate(&model, &Vector::zeros(4), &profile, &PiecewiseConstant::zero(1), t).unwrap();
            assert_eq!(x.norm(), 0.0);
        }
    }

    #[test]
    fn propagate_matches_discrete_map_at_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 5, 2);
        let d = discretize(&model, 0.5, ProfileKind::Constant).unwrap();
        let x0 = Vector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let u = Vector::from_vec(vec![0.3, -0.8]);
        let x = propagate(
            &model,
            &x0,
            &InputProfile::constant(u.clone()),
            &PiecewiseConstant::zero(1),
            0.5,
        )
        .unwrap();
        assert!((x - (&d.a * &x0 + &d.b * &u)).norm() < 1e-12);
    }

    #[test]
    fn scalar_pulse_matches_rk4() {
        let model = LtiModel::with_disturbance(scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let dist = PiecewiseConstant::pulse(Vector::from_element(1, 2.0), 0.3, 0.55).unwrap();
        let profile = InputProfile::new(ProfileKind::Linear, Vector::from_vec(vec![-0.5, 0.4]), 1.0).unwrap();
        let x0 = Vector::from_element(1, 0.1);
        let x = propagate(&model, &x0, &profile, &dist, 1.0).unwrap();
        // The oracle integrates each constant piece separately.
        let first = rk4(&model, &x0, |s| profile.eval(s), |_| Vector::zeros(1), 0.3, 1e-5);
        let mid_model = model.clone();
        let second = rk4(
            &mid_model,
            &first,
            |s| profile.eval(s + 0.3),
            |_| Vector::from_element(1, 2.0),
            0.25,
            1e-5,
        );
        let third = rk4(
            &mid_model,
            &second,
            |s| profile.eval(s + 0.55),
            |_| Vector::zeros(1),
            0.45,
            1e-5,
        );
        assert!(
            (x[0] - third[0]).abs() <= 1e-8 * third[0].abs(),
            "{} vs {}",
            x[0],
            third[0]
        );
    }

    #[test]
    fn gaps_in_disturbance_are_rejected() {
        let seg = |start: f64, end: f64| Segment {
            start,
            end,
            value: Vector::zeros(1),
        };
        assert!(matches!(
            PiecewiseConstant::new(vec![seg(0.0, 0.2), seg(0.3, 1.0)]),
            Err(Error::DisturbanceGap { .. })
        ));
        let short = PiecewiseConstant::new(vec![seg(0.0, 0.5)]).unwrap();
        let model = LtiModel::with_disturbance(scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let err = propagate(
            &model,
            &Vector::zeros(1),
            &InputProfile::constant(Vector::zeros(1)),
            &short,
            1.0,
        );
        assert!(matches!(err, Err(Error::DisturbanceGap { .. })));
    }

    #[test]
    fn augmented_map_equals_inverse_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let model = random_model(&mut rng, 6, 2);
            let d = discretize(&model, 0.9, ProfileKind::Constant).unwrap();
            let n = model.states();
            let closed = (&d.a - Matrix::identity(n, n)) * inverse(&model.a).unwrap() * &model.b;
            assert!((&d.b - &closed).norm() <= 1e-10 * closed.norm().max(1.0));
        }
    }

    #[test]
    fn discretize_is_linear_in_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 4, 2);
        let scaled = LtiModel::new(model.a.clone(), &model.b * 3.5).unwrap();
        for kind in [ProfileKind::Constant, ProfileKind::Linear] {
            let d1 = discretize(&model, 0.6, kind).unwrap();
            let d2 = discretize(&scaled, 0.6, kind).unwrap();
            assert!((&d1.b * 3.5 - &d2.b).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let a = matrix_from_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(LtiModel::new(a, Matrix::zeros(3, 1)).is_err());
        let model = LtiModel::new(scalar(1.0), scalar(1.0)).unwrap();
        assert!(discretize(&model, 0.0, ProfileKind::Constant).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn propagation_splits_at_any_time(seed in 0u64..1000, t1 in 0.0f64..0.7, t2 in 0.0f64..0.7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model = random_model(&mut rng, 4, 1);
                let x0 = Vector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                // A constant profile is time-shift invariant, so the split composes directly.
                let profile = InputProfile::constant(Vector::from_element(1, rng.gen_range(-1.0..1.0)));
                let w = PiecewiseConstant::zero(1);
                let whole = propagate(&model, &x0, &profile, &w, t1 + t2).unwrap();
                let half = propagate(&model, &x0, &profile, &w, t1).unwrap();
                let split = propagate(&model, &half, &profile, &w, t2).unwrap();
                prop_assert!((whole - split).norm() < 1e-9);
            }
        }
    }
}
