//! One-dimensional unstable plant `ẋ = x + u + w` under open-loop,
//! continuous, DLQR and time-projection control.

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::numerics::{dare_iterate, Matrix, Vector};
use crate::timeproj::{project_with_maps, ScalarAnalysis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarDemoConfig {
    pub period: f64,
    pub q: f64,
    pub r: f64,
    /// Disturbance `pulse_value` on `[pulse_start, pulse_end)`.
    pub pulse_start: f64,
    pub pulse_end: f64,
    pub pulse_value: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for ScalarDemoConfig {
    fn default() -> Self {
        Self {
            period: 1.0,
            q: 1.0,
            r: 1.0,
            pulse_start: 1.2,
            pulse_end: 1.5,
            pulse_value: 1.0,
            horizon: 6.0,
            dt: 1e-3,
        }
    }
}

impl ScalarDemoConfig {
    fn validate(&self) -> Result<usize> {
        let positive = [self.period, self.r, self.horizon, self.dt]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.q >= 0.0) || !self.pulse_value.is_finite() {
            return Err(Error::InvalidArgument(
                "period, r, horizon and dt must be positive and q non-negative".into(),
            ));
        }
        if !(0.0 <= self.pulse_start && self.pulse_start <= self.pulse_end && self.pulse_end <= self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "pulse [{}, {}) outside [0, {}]",
                self.pulse_start, self.pulse_end, self.horizon
            )));
        }
        let on_grid = |v: f64| ((v / self.dt).round() * self.dt - v).abs() <= 1e-9 * v.max(1.0);
        if !on_grid(self.period) || !on_grid(self.horizon) || !on_grid(self.pulse_start) || !on_grid(self.pulse_end) {
            return Err(Error::InvalidArgument(format!(
                "period, horizon and pulse edges must be multiples of dt = {}",
                self.dt
            )));
        }
        Ok((self.horizon / self.dt).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDemo {
    pub analysis: ScalarAnalysis,
    pub times: Vec<f64>,
    pub disturbance: Vec<f64>,
    pub open_loop: Vec<f64>,
    pub continuous: Vec<f64>,
    pub dlqr: Vec<f64>,
    pub time_projection: Vec<f64>,
    /// Time-projection input applied over each tick.
    pub projection_input: Vec<f64>,
}

/// Peak of `|x|` over a trajectory.
pub fn peak(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a − b‖₂ / ‖b‖₂` over samples.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    (diff / base).sqrt()
}

impl ScalarDemo {
    /// Open-loop state grew by at least `10×` from the end of the pulse to
    /// the end of the horizon and rose monotonically in between.
    pub fn open_loop_diverges(&self, pulse_end: f64) -> bool {
        let i0 = self.times.iter().position(|&t| t >= pulse_end - 1e-12).unwrap_or(0);
        let tail = &self.open_loop[i0..];
        let (first, last) = (tail[0].abs(), tail[tail.len() - 1].abs());
        first > 0.0 && last >= 10.0 * first && tail.windows(2).all(|w| w[1].abs() >= w[0].abs())
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "w", "open_loop", "continuous", "dlqr", "time_projection"]);
        for i in 0..self.times.len() {
            t.push(vec![
                self.times[i],
                self.disturbance[i],
                self.open_loop[i],
                self.continuous[i],
                self.dlqr[i],
                self.time_projection[i],
            ]);
        }
        t
    }
}

/// Discrete gain of the plant sampled every `period` with a held input.
pub fn scalar_gain(period: f64, q: f64, r: f64) -> Result<f64> {
    let e = period.exp();
    let a = Matrix::from_element(1, 1, e);
    let b = Matrix::from_element(1, 1, e - 1.0);
    let sol = dare_iterate(
        &a,
        &b,
        &Matrix::from_element(1, 1, q),
        &Matrix::from_element(1, 1, r),
        None,
    )?;
    Ok(sol.k[(0, 0)])
}

pub fn run_scalar_demo(cfg: &ScalarDemoConfig) -> Result<ScalarDemo> {
    let steps = cfg.validate()?;
    let analysis = ScalarAnalysis::new(cfg.period, scalar_gain(cfg.period, cfg.q, cfg.r)?)?;
    let gamma = analysis.gamma_d;
    let per_phase = (cfg.period / cfg.dt).round() as usize;
    // Exact one-tick update of `ẋ = a x + v` with `v` held.
    let tick = |a: f64, x: f64, v: f64| {
        let ea = (a * cfg.dt).exp();
        let gain = if a.abs() < 1e-12 { cfg.dt } else { (ea - 1.0) / a };
        ea * x + gain * v
    };
    let k = Matrix::from_element(1, 1, gamma);

    let mut out = ScalarDemo {
        analysis,
        times: Vec::with_capacity(steps + 1),
        disturbance: Vec::with_capacity(steps + 1),
        open_loop: Vec::with_capacity(steps + 1),
        continuous: Vec::with_capacity(steps + 1),
        dlqr: Vec::with_capacity(steps + 1),
        time_projection: Vec::with_capacity(steps + 1),
        projection_input: Vec::with_capacity(steps),
    };
    let (mut xo, mut xc, mut xd, mut xt) = (0.0, 0.0, 0.0, 0.0);
    let mut ud = 0.0;
    for i in 0..=steps {
        let now = i as f64 * cfg.dt;
        let w = if now >= cfg.pulse_start - 1e-12 && now < cfg.pulse_end - 1e-12 {
            cfg.pulse_value
        } else {
            0.0
        };
        out.times.push(now);
        out.disturbance.push(w);
        out.open_loop.push(xo);
        out.continuous.push(xc);
        out.dlqr.push(xd);
        out.time_projection.push(xt);
        if i == steps {
            break;
        }
        let j = i % per_phase;
        let t = j as f64 * cfg.dt;
        if j == 0 {
            ud = -gamma * xd;
        }
        let et = t.exp();
        let sol = project_with_maps(
            &Matrix::from_element(1, 1, et),
            &Matrix::from_element(1, 1, et - 1.0),
            &k,
            t,
            &Vector::from_element(1, xt),
        )?;
        let ut = sol.du[0];
        out.projection_input.push(ut);
        xo = tick(1.0, xo, w);
        xc = tick(1.0 - analysis.gamma_c, xc, w);
        xd = tick(1.0, xd, ud + w);
        xt = tick(1.0, xt, ut + w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_cost_is_rejected() {
        let cfg = ScalarDemoConfig {
            q: 0.0,
            ..Default::default()
        };
        assert!(matches!(run_scalar_demo(&cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn no_pulse_keeps_everything_at_rest() {
        let cfg = ScalarDemoConfig {
            pulse_end: 1.2,
            ..Default::default()
        };
        let d = run_scalar_demo(&cfg).unwrap();
        for xs in [&d.open_loop, &d.continuous, &d.dlqr, &d.time_projection] {
            assert_eq!(peak(xs), 0.0);
        }
    }

    #[test]
    fn projection_input_is_constant_without_disturbance() {
        let d = run_scalar_demo(&ScalarDemoConfig::default()).unwrap();
        for (from, to) in [(1500, 2000), (2000, 3000)] {
            let u0 = d.projection_input[from];
            assert!(u0 != 0.0);
            assert!(d.projection_input[from..to].iter().all(|u| (u - u0).abs() < 1e-9));
        }
    }

    #[test]
    fn dlqr_phase_map_matches_closed_form() {
        let d = run_scalar_demo(&ScalarDemoConfig::default()).unwrap();
        let e = 1f64.exp();
        let factor = e - (e - 1.0) * d.analysis.gamma_d;
        assert!((d.dlqr[3000] - factor * d.dlqr[2000]).abs() < 1e-9);
    }

    #[test]
    fn off_grid_pulse_rejected() {
        let cfg = ScalarDemoConfig {
            pulse_start: 1.2345,
            ..Default::default()
        };
        assert!(run_scalar_demo(&cfg).is_err());
    }
}
