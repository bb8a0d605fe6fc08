//! Touchdown errors as a function of push timing within the first phase.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::CsvTable;

use super::simulate::{Controller, PushEvent, Scenario, Simulator};

/// Controllers compared in the sweep.
pub const SWEEP_CONTROLLERS: [Controller; 3] = [Controller::OpenLoop, Controller::Dlqr, Controller::TimeProjection];

/// Touchdown errors after one push on `[start_pct, end_pct)` of phase one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCell {
    pub start_pct: f64,
    pub end_pct: f64,
    /// Normalized error norms at touchdowns 1 to 3; infinite after a fall.
    pub errors: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub controller: Controller,
    pub cells: Vec<SurfaceCell>,
}

impl Surface {
    pub fn cell(&self, start_pct: f64, end_pct: f64) -> Option<&SurfaceCell> {
        self.cells
            .iter()
            .find(|c| (c.start_pct - start_pct).abs() < 1e-9 && (c.end_pct - end_pct).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["start_pct", "end_pct", "err_step1", "err_step2", "err_step3"]);
        for c in &self.cells {
            t.push(vec![c.start_pct, c.end_pct, c.errors[0], c.errors[1], c.errors[2]]);
        }
        t
    }
}

/// Pairs `(start%, end%)` with `start = i·100/n`, `end = (j+1)·100/n` and
/// `start < end`.
pub fn timing_grid(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let start = 100.0 * i as f64 / n as f64;
            let end = 100.0 * (j + 1) as f64 / n as f64;
            if start < end {
                out.push((start, end));
            }
        }
    }
    out
}

/// Runs every cell for each controller in `controllers`.
pub fn timing_sensitivity(
    sim: &Simulator,
    force: [f64; 2],
    cells: &[(f64, f64)],
    controllers: &[Controller],
) -> Result<Vec<Surface>> {
    if force.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidArgument(format!("push force {force:?} is not finite")));
    }
    for &(s, e) in cells {
        if !(0.0..=100.0).contains(&s) || !(0.0..=100.0).contains(&e) || s > e {
            return Err(Error::InvalidArgument(format!(
                "timing cell ({s}, {e}) is not 0 <= start <= end <= 100"
            )));
        }
    }
    let period = sim.period();
    controllers
        .iter()
        .map(|&controller| {
            let cells = cells
                .par_iter()
                .map(|&(s, e)| {
                    let push = PushEvent::in_phase(force, 0, s / 100.0, e / 100.0, period);
                    let tr = sim.simulate(&Scenario::new(controller, 3).with_event(push))?;
                    let mut errors = [f64::INFINITY; 3];
                    for st in &tr.steps {
                        errors[st.step - 1] = st.err_norm;
                    }
                    Ok(SurfaceCell {
                        start_pct: s,
                        end_pct: e,
                        errors,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Surface { controller, cells })
        })
        .collect()
}
