//! Foot-placement gain tables: the final footstep adjustment produced by
//! time-projection, as linear coefficients on the current swing-foot and
//! pelvis errors.
//!
//! The adjustment `ΔP(t)` is the end-of-phase swing-foot error minus the
//! current pelvis error, i.e. a foot target relative to the hip.

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::lti::{phase_maps, transition};
use crate::model::{PhaseModel, RobotParams, PELVIS_VX, PELVIS_X, SWING_VX, SWING_X};
use crate::numerics::{eigenvalues, Vector};
use crate::timeproj::ConstrainedProjector;

pub const DEFAULT_GRID: usize = 200;
/// Footstep adjustments are capped at this multiple of the leg length.
pub const TRUNCATION_FRACTION: f64 = 0.8;
/// Default minimum lateral foot separation as a multiple of the leg length.
pub const D_MIN_FRACTION: f64 = 0.2;
/// Band on `|k_e1 − 1|` defining the stabilized tail of the phase.
pub const SETTLE_BAND: f64 = 0.05;
/// Target share of the phase spent with the foot target settled.
pub const SETTLE_TARGET: f64 = 0.2;

/// Swing-foot and pelvis deviations from nominal, per axis `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorFrame {
    pub e1: [f64; 2],
    pub de1: [f64; 2],
    pub e2: [f64; 2],
    pub de2: [f64; 2],
}

impl ErrorFrame {
    pub fn from_state_error(e: &Vector) -> Self {
        let pair = |i: usize| [e[i], e[i + 1]];
        Self {
            e1: pair(SWING_X),
            de1: pair(SWING_VX),
            e2: pair(PELVIS_X),
            de2: pair(PELVIS_VX),
        }
    }

    pub fn to_state_error(&self) -> Vector {
        let mut e = Vector::zeros(8);
        for axis in 0..2 {
            e[SWING_X + axis] = self.e1[axis];
            e[SWING_VX + axis] = self.de1[axis];
            e[PELVIS_X + axis] = self.e2[axis];
            e[PELVIS_VX + axis] = self.de2[axis];
        }
        e
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: [f64; 2]| [v[0] * c, v[1] * c];
        Self {
            e1: s(self.e1),
            de1: s(self.de1),
            e2: s(self.e2),
            de2: s(self.de2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub times: Vec<f64>,
    pub k_e1: Vec<f64>,
    pub k_de1: Vec<f64>,
    pub k_e2: Vec<f64>,
    pub k_de2: Vec<f64>,
    /// Per-axis cap on `|ΔP|`.
    pub truncation: f64,
    /// Minimum lateral distance between the feet.
    pub d_min: f64,
    /// Largest difference between sagittal and lateral coefficients, and
    /// largest cross-axis coupling, seen while probing.
    pub axis_mismatch: f64,
    pub params: RobotParams,
    pub mu: f64,
}

impl GainTable {
    pub fn period(&self) -> f64 {
        self.params.period()
    }

    /// Coefficients `[k_e1, k_ė1, k_e2, k_ė2]` at phase time `t`, linearly
    /// interpolated and clamped to the grid.
    pub fn coefficients(&self, t: f64) -> [f64; 4] {
        let n = self.times.len();
        let at = |i: usize| [self.k_e1[i], self.k_de1[i], self.k_e2[i], self.k_de2[i]];
        if t <= self.times[0] {
            return at(0);
        }
        if t >= self.times[n - 1] {
            return at(n - 1);
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let (a, b) = (at(i), at(i + 1));
        std::array::from_fn(|j| a[j] * (1.0 - w) + b[j] * w)
    }

    /// Adjustment before truncation.
    pub fn raw_adjustment(&self, t: f64, err: &ErrorFrame) -> [f64; 2] {
        let k = self.coefficients(t);
        std::array::from_fn(|a| k[0] * err.e1[a] + k[1] * err.de1[a] + k[2] * err.e2[a] + k[3] * err.de2[a])
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut csv = CsvTable::new(&["t", "k_e1", "k_de1", "k_e2", "k_de2"]);
        for line in self.params.to_kv_string().lines() {
            csv.comment(line);
        }
        csv.comment(format!("mu = {}", self.mu));
        csv.comment(format!("frequency_hz = {}", self.params.step_frequency_hz));
        for i in 0..self.times.len() {
            csv.push(vec![
                self.times[i],
                self.k_e1[i],
                self.k_de1[i],
                self.k_e2[i],
                self.k_de2[i],
            ]);
        }
        csv
    }

    /// Smallest grid time after which `|k_e1 − 1|` stays within the band,
    /// as a fraction of the period.
    pub fn settle_fraction(&self) -> f64 {
        let mut first = self.times.len() - 1;
        for i in (0..self.times.len()).rev() {
            if (self.k_e1[i] - 1.0).abs() <= SETTLE_BAND {
                first = i;
            } else {
                break;
            }
        }
        self.times[first] / self.period()
    }
}

/// Applies the table with the per-axis `±truncation` cap.
pub fn apply_gains(table: &GainTable, t: f64, err: &ErrorFrame) -> [f64; 2] {
    let raw = table.raw_adjustment(t, err);
    raw.map(|v| v.clamp(-table.truncation, table.truncation))
}

/// Like [`apply_gains`], additionally keeping the landing foot at least
/// `d_min` laterally from the stance foot on the side of the nominal landing
/// position `nominal_landing_y` (relative to the stance foot).
pub fn apply_gains_with_separation(table: &GainTable, t: f64, err: &ErrorFrame, nominal_landing_y: f64) -> [f64; 2] {
    let mut dp = table.raw_adjustment(t, err);
    if nominal_landing_y != 0.0 {
        let side = nominal_landing_y.signum();
        let landing = nominal_landing_y + err.e2[1] + dp[1];
        if side * landing < table.d_min {
            dp[1] += side * table.d_min - landing;
        }
    }
    dp.map(|v| v.clamp(-table.truncation, table.truncation))
}

/// Final footstep adjustment for the error `e` at phase time `t`; inside
/// the projection clamp window the correction is held, so the error
/// propagates uncorrected.
fn probe(model: &PhaseModel, projector: &ConstrainedProjector, t: f64, e: &Vector) -> Result<[f64; 2]> {
    let period = model.period;
    let tau = period - t;
    let end = if tau <= 0.0 {
        e.clone()
    } else {
        let a_tau = transition(&model.lti, tau)?.phi;
        if tau < projector.min_remaining() {
            &a_tau * e
        } else {
            let (_, b_t) = phase_maps(&model.lti, t, model.kind, period)?;
            let (_, b_full) = phase_maps(&model.lti, period, model.kind, period)?;
            let sol = projector.project_with_maps(t, &a_tau, &b_t, e)?;
            &a_tau * e + (&b_full - &a_tau * &b_t) * &sol.du
        }
    };
    Ok([end[SWING_X] - e[PELVIS_X], end[SWING_X + 1] - e[PELVIS_X + 1]])
}

pub fn compute_gain_table(
    model: &PhaseModel,
    projector: &ConstrainedProjector,
    grid: usize,
    mu: f64,
) -> Result<GainTable> {
    if grid < 50 {
        return Err(Error::InvalidArgument(format!(
            "gain table grid {grid} below 50 points"
        )));
    }
    let period = model.period;
    let times: Vec<f64> = (0..grid).map(|i| period * i as f64 / (grid - 1) as f64).collect();
    let probes = [SWING_X, SWING_VX, PELVIS_X, PELVIS_VX];
    let rows: Vec<([f64; 4], f64)> = times
        .par_iter()
        .map(|&t| {
            let mut k = [0.0; 4];
            let mut mismatch: f64 = 0.0;
            for (j, &idx) in probes.iter().enumerate() {
                let mut e = Vector::zeros(8);
                e[idx] = 1.0;
                let sag = probe(model, projector, t, &e)?;
                let mut e = Vector::zeros(8);
                e[idx + 1] = 1.0;
                let lat = probe(model, projector, t, &e)?;
                k[j] = sag[0];
                mismatch = mismatch
                    .max((sag[0] - lat[1]).abs())
                    .max(sag[1].abs())
                    .max(lat[0].abs());
            }
            Ok((k, mismatch))
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| rows.iter().map(|r| r.0[j]).collect::<Vec<_>>();
    let l = model.params.leg_length_m;
    Ok(GainTable {
        k_e1: col(0),
        k_de1: col(1),
        k_e2: col(2),
        k_de2: col(3),
        times,
        truncation: TRUNCATION_FRACTION * l,
        d_min: D_MIN_FRACTION * l,
        axis_mismatch: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        params: model.params,
        mu,
    })
}

/// Synthesizes the gain at `mu` and tabulates it.
pub fn gain_table_for(model: &PhaseModel, mu: f64, grid: usize) -> Result<GainTable> {
    let gain = model.design_gain(mu)?;
    let projector = model.projector(gain)?;
    compute_gain_table(model, &projector, grid, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuCriterion {
    /// The last 20% of the phase is spent with the foot target settled.
    SettleFraction,
    /// The two largest closed-loop eigenvalue magnitudes coincide.
    EqualEigenvalues,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuTuning {
    pub mu: f64,
    /// Settled fraction of the phase or eigenvalue-magnitude gap at `mu`.
    pub achieved: f64,
}

pub const MU_RANGE: (f64, f64) = (-4.0, 4.0);

/// Settled tail of the phase (`1 − t*/T`) for the gain at `mu`.
pub fn settled_tail(model: &PhaseModel, mu: f64, grid: usize) -> Result<f64> {
    Ok(1.0 - gain_table_for(model, mu, grid)?.settle_fraction())
}

/// Gap between the two largest distinct closed-loop eigenvalue magnitudes
/// of the reduced system; conjugates and per-axis duplicates count once.
pub fn eigen_gap(model: &PhaseModel, mu: f64) -> Result<f64> {
    let gain = model.design_gain(mu)?;
    let closed = &gain.a_bar - &gain.b_bar * &gain.k_bar;
    let mut distinct: Vec<Complex<f64>> = Vec::new();
    for z in eigenvalues(&closed)? {
        let z = Complex::new(z.re, z.im.abs());
        if !distinct.iter().any(|w| (w - z).norm() <= 1e-7 * (1.0 + z.norm())) {
            distinct.push(z);
        }
    }
    let mut mags: Vec<f64> = distinct.iter().map(|z| z.norm()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(if mags.len() < 2 {
        f64::INFINITY
    } else {
        mags[0] - mags[1]
    })
}

pub fn tune_mu(params: &RobotParams, criterion: MuCriterion, grid: usize) -> Result<MuTuning> {
    let model = crate::model::build_3lp(params)?;
    let (lo, hi) = MU_RANGE;
    match criterion {
        MuCriterion::SettleFraction => {
            // The settled tail grows with the input penalty.
            let step = 1.0 / (grid - 1) as f64;
            let f = |mu: f64| settled_tail(&model, mu, grid).map(|s| s - SETTLE_TARGET);
            let (mut a, mut b) = (lo, hi);
            let (fa, fb) = (f(a)?, f(b)?);
            if fa > step || fb < -step {
                let (mu, closest) = if fa > step { (a, fa) } else { (b, fb) };
                return Err(Error::MuUnattainable {
                    criterion: "settle-fraction",
                    lo,
                    hi,
                    closest: closest + SETTLE_TARGET,
                    mu,
                });
            }
            let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
            for _ in 0..40 {
                let mid = 0.5 * (a + b);
                let fm = f(mid)?;
                if fm.abs() < best.1.abs() || (fm.abs() == best.1.abs() && mid.abs() < best.0.abs()) {
                    best = (mid, fm);
                }
                if fm.abs() <= step / 2.0 || b - a < 1e-4 {
                    break;
                }
                if fm < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            if best.1.abs() > step {
                return Err(Error::MuUnattainable {
                    criterion: "settle-fraction",
                    lo,
                    hi,
                    closest: best.1 + SETTLE_TARGET,
                    mu: best.0,
                });
            }
            Ok(MuTuning {
                mu: best.0,
                achieved: best.1 + SETTLE_TARGET,
            })
        }
        MuCriterion::EqualEigenvalues => {
            let samples = 81;
            let mus: Vec<f64> = (0..samples)
                .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
                .collect();
            let gaps: Vec<f64> = mus.iter().map(|&m| eigen_gap(&model, m)).collect::<Result<_>>()?;
            let i = (0..samples).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap_or(0);
            // Golden-section refinement around the best sample.
            let (mut a, mut b) = (mus[i.saturating_sub(1)], mus[(i + 1).min(samples - 1)]);
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let (mut fc, mut fd) = (eigen_gap(&model, c)?, eigen_gap(&model, d)?);
            for _ in 0..60 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = eigen_gap(&model, c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = eigen_gap(&model, d)?;
                }
            }
            let (mu, gap) = if fc < fd { (c, fc) } else { (d, fd) };
            let (mu, gap) = if gaps[i] < gap { (mus[i], gaps[i]) } else { (mu, gap) };
            if gap > 1e-3 {
                return Err(Error::MuUnattainable {
                    criterion: "equal-eigenvalues",
                    lo,
                    hi,
                    closest: gap,
                    mu,
                });
            }
            Ok(MuTuning { mu, achieved: gap })
        }
    }
}

/// Outcome of [`tune_mu_or_closest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuChoice {
    pub mu: f64,
    pub achieved: f64,
    /// False when the criterion could not be met and the closest μ was taken.
    pub attained: bool,
    pub criterion: MuCriterion,
}

/// Runs [`tune_mu`] and falls back to the closest μ when the criterion is
/// unattainable in range.
pub fn tune_mu_or_closest(params: &RobotParams, criterion: MuCriterion, grid: usize) -> Result<MuChoice> {
    match tune_mu(params, criterion, grid) {
        Ok(t) => Ok(MuChoice {
            mu: t.mu,
            achieved: t.achieved,
            attained: true,
            criterion,
        }),
        Err(Error::MuUnattainable { closest, mu, .. }) => Ok(MuChoice {
            mu,
            achieved: closest,
            attained: false,
            criterion,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_3lp;

    fn table(mu: f64) -> GainTable {
        gain_table_for(&build_3lp(&RobotParams::atlas_like()).unwrap(), mu, 60).unwrap()
    }

    #[test]
    fn error_frame_round_trip() {
        let e = Vector::from_fn(8, |i, _| i as f64 + 1.0);
        assert_eq!(ErrorFrame::from_state_error(&e).to_state_error(), e);
    }

    #[test]
    fn zero_error_gives_zero_adjustment() {
        let t = table(-0.4);
        assert_eq!(apply_gains(&t, 0.1, &ErrorFrame::default()), [0.0, 0.0]);
    }

    #[test]
    fn axes_share_coefficients() {
        assert!(table(0.0).axis_mismatch < 1e-10);
    }

    #[test]
    fn table_reproduces_probes_at_grid_times() {
        let t = table(-0.4);
        for i in [0, 17, 42] {
            let ti = t.times[i];
            let mut err = ErrorFrame::default();
            err.de2 = [1.0, 1.0];
            assert_eq!(t.raw_adjustment(ti, &err), [t.k_de2[i], t.k_de2[i]]);
        }
    }

    #[test]
    fn adjustment_is_linear_before_truncation() {
        let t = table(-0.4);
        let err = ErrorFrame {
            e1: [0.01, -0.02],
            de1: [0.05, 0.0],
            e2: [0.0, 0.01],
            de2: [0.03, 0.02],
        };
        let a = t.raw_adjustment(0.2, &err);
        let b = t.raw_adjustment(0.2, &err.scaled(3.0));
        assert!((b[0] - 3.0 * a[0]).abs() < 1e-12 && (b[1] - 3.0 * a[1]).abs() < 1e-12);
    }

    #[test]
    fn huge_velocity_is_capped() {
        let t = table(-0.4);
        let err = ErrorFrame {
            de2: [100.0, -100.0],
            ..Default::default()
        };
        let dp = apply_gains(&t, 0.1, &err);
        assert_eq!(dp[0].abs(), t.truncation);
        assert_eq!(dp[1].abs(), t.truncation);
        assert!((t.truncation - 0.72).abs() < 1e-12);
    }

    #[test]
    fn lateral_separation_is_kept() {
        let t = table(-0.4);
        // Pelvis pushed hard toward the swing side would cross the feet.
        let err = ErrorFrame {
            e2: [0.0, 0.25],
            de2: [0.0, 1.0],
            ..Default::default()
        };
        let dp = apply_gains_with_separation(&t, 0.1, &err, 0.2);
        assert!(0.2 + err.e2[1] + dp[1] >= t.d_min - 1e-12);
        let dp = apply_gains_with_separation(&t, 0.1, &err.scaled(-1.0), -0.2);
        assert!(-(-0.2 - err.e2[1] + dp[1]) >= t.d_min - 1e-12);
    }

    #[test]
    fn endpoint_gains_retract_the_swing_leg() {
        let t = table(-0.4);
        let last = t.times.len() - 1;
        assert!((t.k_e1[last] - 1.0).abs() < 1e-12);
        assert!((t.k_e2[last] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_metadata() {
        let text = table(-0.4).to_csv().to_csv_string();
        assert!(text.contains("\nt,k_e1,k_de1,k_e2,k_de2\n"));
        assert!(text.starts_with("# total_mass_kg"));
        assert!(text.contains("# mu = -0.4"));
    }

    #[test]
    fn small_grid_rejected() {
        let m = build_3lp(&RobotParams::atlas_like()).unwrap();
        assert!(gain_table_for(&m, 0.0, 10).is_err());
    }
}
