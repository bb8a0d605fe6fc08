//! Subcommand implementations. Each one resolves and validates its whole
//! configuration before computing anything.

use std::fs;
use std::path::{Path, PathBuf};

use walkproj::experiments::scalar::{peak, run_scalar_demo, ScalarDemoConfig};
use walkproj::experiments::sensitivity::{timing_grid, timing_sensitivity, SWEEP_CONTROLLERS};
use walkproj::experiments::simulate::{Controller, PushEvent, Scenario, Simulator, DEFAULT_FALL_THRESHOLD};
use walkproj::experiments::viability::{viability, CellLabel, ViabilityConfig};
use walkproj::footplace::{gain_table_for, tune_mu_or_closest, MuCriterion, DEFAULT_GRID};
use walkproj::io::CsvTable;
use walkproj::lti::InputProfile;
use walkproj::model::{build_3lp, nominal_gait, RobotParams, INPUTS, STATES};
use walkproj::Error;

use crate::config::{robot_defaults, ConfigError, RunConfig};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Synthesis(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::InvalidParams(_) | Error::Parse { .. } => Failure::Config(e.to_string()),
            _ => Failure::Synthesis(e.to_string()),
        }
    }
}

/// Whether a simulated run fell; all other outcomes are plain success.
pub struct Outcome {
    pub fell: bool,
}

impl Outcome {
    fn ok() -> Self {
        Self { fell: false }
    }
}

/// Where a command reads its configuration and writes its files.
pub struct Context {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
}

impl Context {
    fn resolve(&self, defaults: &[(&str, String)]) -> Result<RunConfig, Failure> {
        if let Some(path) = &self.config {
            if !path.is_file() {
                return Err(Failure::Config(format!(
                    "config file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(RunConfig::resolve(defaults, self.config.as_deref(), &self.overrides)?)
    }

    fn prepare_out_dir(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out_dir).map_err(|e| {
            Failure::Config(format!(
                "cannot create output directory {}: {e}",
                self.out_dir.display()
            ))
        })
    }

    /// Writes `table` under the output directory with provenance comments.
    fn write(
        &self,
        name: &str,
        command: &str,
        cfg: &RunConfig,
        notes: &[String],
        table: &CsvTable,
    ) -> Result<PathBuf, Failure> {
        let mut out = CsvTable::new(&[]);
        out.comment(format!("walkproj {}", env!("CARGO_PKG_VERSION")));
        out.comment(format!("command = {command}"));
        for line in cfg.echo() {
            out.comment(line);
        }
        for n in notes {
            out.comment(n.clone());
        }
        out.comments.extend(table.comments.iter().cloned());
        out.header = table.header.clone();
        out.rows = table.rows.clone();
        let path = self.out_dir.join(name);
        fs::write(&path, out.to_csv_string())
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn with_robot(extra: &[(&'static str, &str)]) -> Vec<(&'static str, String)> {
    let mut d = robot_defaults();
    d.extend(extra.iter().map(|(k, v)| (*k, v.to_string())));
    d
}

/// A μ setting: a number, or `auto` to run the tuning rule.
#[derive(Debug, Clone, Copy)]
enum MuSetting {
    Fixed(f64),
    Auto(MuCriterion),
}

fn mu_setting(cfg: &RunConfig) -> Result<MuSetting, Failure> {
    let rule = match cfg.str("mu_rule") {
        "settle-fraction" => MuCriterion::SettleFraction,
        "equal-eigenvalues" => MuCriterion::EqualEigenvalues,
        other => {
            return Err(Failure::Config(format!(
                "mu_rule {other:?} is not settle-fraction or equal-eigenvalues"
            )))
        }
    };
    match cfg.str("mu") {
        "auto" => Ok(MuSetting::Auto(rule)),
        _ => Ok(MuSetting::Fixed(cfg.f64("mu")?)),
    }
}

/// Resolves μ and describes the choice for the output header.
fn resolve_mu(setting: MuSetting, params: &RobotParams) -> Result<(f64, String), Failure> {
    match setting {
        MuSetting::Fixed(mu) => Ok((mu, format!("mu used = {mu}"))),
        MuSetting::Auto(rule) => {
            // An unattainable rule falls back to the closest μ in range and
            // says so rather than failing the run.
            let c = tune_mu_or_closest(params, rule, DEFAULT_GRID)?;
            let name = match rule {
                MuCriterion::SettleFraction => "settle-fraction",
                MuCriterion::EqualEigenvalues => "equal-eigenvalues",
            };
            let status = if c.attained {
                "attained"
            } else {
                "not attained, closest mu in range"
            };
            Ok((
                c.mu,
                format!(
                    "mu used = {} (auto, {name} rule {status}, achieved {:.4})",
                    c.mu, c.achieved
                ),
            ))
        }
    }
}

const MU_KEYS: [(&str, &str); 2] = [("mu", "0"), ("mu_rule", "settle-fraction")];

pub fn scalar_demo(ctx: &Context) -> Result<Outcome, Failure> {
    let d = ScalarDemoConfig::default();
    let defaults: Vec<(&str, String)> = [
        ("period", d.period),
        ("q", d.q),
        ("r", d.r),
        ("pulse_start", d.pulse_start),
        ("pulse_end", d.pulse_end),
        ("pulse_value", d.pulse_value),
        ("horizon", d.horizon),
        ("dt", d.dt),
    ]
    .iter()
    .map(|(k, v)| (*k, v.to_string()))
    .collect();
    let cfg = ctx.resolve(&defaults)?;
    let sc = ScalarDemoConfig {
        period: cfg.f64("period")?,
        q: cfg.f64("q")?,
        r: cfg.f64("r")?,
        pulse_start: cfg.f64("pulse_start")?,
        pulse_end: cfg.f64("pulse_end")?,
        pulse_value: cfg.f64("pulse_value")?,
        horizon: cfg.f64("horizon")?,
        dt: cfg.f64("dt")?,
    };
    if !(sc.period > 0.0) {
        return Err(Failure::Config(format!("period {} must be positive", sc.period)));
    }
    ctx.prepare_out_dir()?;
    let demo = run_scalar_demo(&sc)?;
    let a = demo.analysis;
    let report = [
        format!("Gamma = {:.6}", a.gamma_d),
        format!("upper bound = {:.6}", a.bounds.1),
        format!("gamma = {:.6}", a.gamma_c),
        format!("peak dlqr = {:.6}", peak(&demo.dlqr)),
        format!("peak time-projection = {:.6}", peak(&demo.time_projection)),
        format!("peak continuous = {:.6}", peak(&demo.continuous)),
    ];
    let path = ctx.write("scalar_demo.csv", "scalar-demo", &cfg, &report, &demo.to_csv())?;
    for line in report {
        println!("{line}");
    }
    println!("wrote {}", path.display());
    Ok(Outcome::ok())
}

pub fn gains(ctx: &Context) -> Result<Outcome, Failure> {
    let grid = DEFAULT_GRID.to_string();
    let cfg = ctx.resolve(&with_robot(&[MU_KEYS[0], MU_KEYS[1], ("grid", &grid)]))?;
    let params = cfg.robot()?;
    let mu = mu_setting(&cfg)?;
    let grid = cfg.usize("grid")?;
    if grid < 50 {
        return Err(Failure::Config(format!("grid {grid} below 50 points")));
    }
    ctx.prepare_out_dir()?;
    let (mu, note) = resolve_mu(mu, &params)?;
    let table = gain_table_for(&build_3lp(&params)?, mu, grid)?;
    let last = table.times.len() - 1;
    let path = ctx.write("gains.csv", "gains", &cfg, std::slice::from_ref(&note), &table.to_csv())?;
    println!("{note}");
    println!(
        "k at T: k_e1 = {:.6}, k_de1 = {:.6}, k_e2 = {:.6}, k_de2 = {:.6}",
        table.k_e1[last], table.k_de1[last], table.k_e2[last], table.k_de2[last]
    );
    println!("settled from {:.3} T", table.settle_fraction());
    println!("wrote {}", path.display());
    Ok(Outcome::ok())
}

fn controllers(name: &str) -> Result<Vec<Controller>, Failure> {
    if name == "all" {
        return Ok(Controller::ALL.to_vec());
    }
    name.split(',')
        .map(|s| s.trim().parse::<Controller>().map_err(Failure::from))
        .collect()
}

pub fn simulate(ctx: &Context) -> Result<Outcome, Failure> {
    let fall = DEFAULT_FALL_THRESHOLD.to_string();
    let cfg = ctx.resolve(&with_robot(&[
        MU_KEYS[0],
        MU_KEYS[1],
        ("speed", "1"),
        ("step_width", "0"),
        ("controller", "all"),
        ("steps", "6"),
        ("dt", "0.001"),
        ("fall_threshold", &fall),
        ("push_force_x", "150"),
        ("push_force_y", "0"),
        ("push_phase", "0"),
        ("push_start", "0.3"),
        ("push_end", "0.7"),
    ]))?;
    let params = cfg.robot()?;
    let mu = mu_setting(&cfg)?;
    let (speed, width) = (cfg.f64("speed")?, cfg.f64("step_width")?);
    let list = controllers(cfg.str("controller"))?;
    let steps = cfg.usize("steps")?;
    let dt = cfg.f64("dt")?;
    let force = [cfg.f64("push_force_x")?, cfg.f64("push_force_y")?];
    let (phase, start, end) = (cfg.usize("push_phase")?, cfg.f64("push_start")?, cfg.f64("push_end")?);
    if !(0.0..=1.0).contains(&start) || !(start..=1.0).contains(&end) {
        return Err(Failure::Config(format!(
            "push fractions [{start}, {end}] must satisfy 0 <= start <= end <= 1"
        )));
    }
    if phase >= steps {
        return Err(Failure::Config(format!(
            "push phase {phase} is beyond the {steps} simulated steps"
        )));
    }
    let mut scenario = Scenario::new(Controller::OpenLoop, steps);
    scenario.dt = dt;
    scenario.fall_threshold = cfg.f64("fall_threshold")?;
    if force != [0.0, 0.0] && end > start {
        scenario = scenario.with_event(PushEvent::in_phase(force, phase, start, end, params.period()));
    }
    ctx.prepare_out_dir()?;
    let (mu, note) = resolve_mu(mu, &params)?;
    let sim = Simulator::for_model(build_3lp(&params)?, speed, width, mu, dt)?;
    let mut fell = false;
    println!("{note}");
    for c in list {
        let tr = sim.simulate(&Scenario {
            controller: c,
            ..scenario.clone()
        })?;
        let status = if tr.fallen {
            format!("fell at t = {:.3} s", tr.fall_time.unwrap_or(f64::NAN))
        } else {
            "stable".to_string()
        };
        let notes = [note.clone(), format!("controller = {c}"), format!("outcome = {status}")];
        ctx.write(&format!("trajectory_{c}.csv"), "simulate", &cfg, &notes, &tr.to_csv())?;
        ctx.write(
            &format!("touchdown_{c}.csv"),
            "simulate",
            &cfg,
            &notes,
            &tr.touchdown_csv(),
        )?;
        let summed: f64 = tr.steps.iter().map(|s| s.err_norm).sum();
        println!("{c}: {} touchdowns, summed error {summed:.6}, {status}", tr.steps.len());
        fell |= tr.fallen;
    }
    println!("wrote trajectories to {}", ctx.out_dir.display());
    Ok(Outcome { fell })
}

pub fn sweep_timing(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.resolve(&with_robot(&[
        MU_KEYS[0],
        MU_KEYS[1],
        ("speed", "0"),
        ("step_width", "0"),
        ("force_x", "150"),
        ("force_y", "0"),
        ("grid", "10"),
        ("dt", "0.001"),
    ]))?;
    let params = cfg.robot()?;
    let mu = mu_setting(&cfg)?;
    let (speed, width) = (cfg.f64("speed")?, cfg.f64("step_width")?);
    let force = [cfg.f64("force_x")?, cfg.f64("force_y")?];
    let grid = cfg.usize("grid")?;
    let dt = cfg.f64("dt")?;
    if grid == 0 {
        return Err(Failure::Config("grid must be positive".into()));
    }
    ctx.prepare_out_dir()?;
    let (mu, note) = resolve_mu(mu, &params)?;
    let sim = Simulator::for_model(build_3lp(&params)?, speed, width, mu, dt)?;
    let surfaces = timing_sensitivity(&sim, force, &timing_grid(grid), &SWEEP_CONTROLLERS)?;
    println!("{note}");
    for s in &surfaces {
        let mut table = s.to_csv();
        table.comment("errors: normalized error norm arriving at touchdowns 1 to 3; inf after a fall");
        let notes = [note.clone(), format!("controller = {}", s.controller)];
        let path = ctx.write(
            &format!("surface_{}.csv", s.controller),
            "sweep-timing",
            &cfg,
            &notes,
            &table,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::ok())
}

pub fn viability_cmd(ctx: &Context) -> Result<Outcome, Failure> {
    let d = ViabilityConfig::default();
    let owned: Vec<(&'static str, String)> = vec![
        ("speed", "0".into()),
        ("steps", d.steps.to_string()),
        ("sub_phases", d.sub_phases.to_string()),
        ("torque_limit", d.torque_limit.to_string()),
        ("footstep_fraction", d.footstep_fraction.to_string()),
        ("epsilon", d.epsilon.to_string()),
        ("resolution", d.resolution.to_string()),
        ("range_x", d.range[0].to_string()),
        ("range_y", d.range[1].to_string()),
        ("max_iterations", d.max_iterations.to_string()),
    ];
    let mut defaults = with_robot(&[MU_KEYS[0], MU_KEYS[1]]);
    defaults.extend(owned);
    let cfg = ctx.resolve(&defaults)?;
    let params = cfg.robot()?;
    let mu = mu_setting(&cfg)?;
    let speed = cfg.f64("speed")?;
    let vc = ViabilityConfig {
        steps: cfg.usize("steps")?,
        sub_phases: cfg.usize("sub_phases")?,
        torque_limit: cfg.f64("torque_limit")?,
        footstep_fraction: cfg.f64("footstep_fraction")?,
        epsilon: cfg.f64("epsilon")?,
        resolution: cfg.usize("resolution")?,
        range: [cfg.f64("range_x")?, cfg.f64("range_y")?],
        max_iterations: cfg.usize("max_iterations")?,
    };
    vc.validate()?;
    ctx.prepare_out_dir()?;
    let (mu, note) = resolve_mu(mu, &params)?;
    let model = build_3lp(&params)?;
    let nominal = nominal_gait(&model, speed, 0.0)?;
    let projector = model.projector(model.design_gain(mu)?)?;
    let grid = viability(model, nominal, projector, vc)?;
    let summary = format!(
        "tp-viable {}, max-viable {}, nonviable {}, undetermined {}, coverage {:.4}, nesting violations {}",
        grid.count(CellLabel::TpViable),
        grid.max_viable(),
        grid.count(CellLabel::Nonviable),
        grid.count(CellLabel::Undetermined),
        grid.coverage(),
        grid.nesting_violations
    );
    let path = ctx.write(
        "viability.csv",
        "viability",
        &cfg,
        &[note.clone(), summary.clone()],
        &grid.to_csv(),
    )?;
    println!("{note}");
    println!("{summary}");
    println!("wrote {}", path.display());
    Ok(Outcome::ok())
}

pub fn nominal(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.resolve(&with_robot(&[
        ("speed", "1"),
        ("step_width", "0"),
        ("samples", "101"),
        ("phases", "2"),
    ]))?;
    let params = cfg.robot()?;
    let (speed, width) = (cfg.f64("speed")?, cfg.f64("step_width")?);
    let (samples, phases) = (cfg.usize("samples")?, cfg.usize("phases")?);
    if samples < 2 || phases == 0 {
        return Err(Failure::Config("samples must be at least 2 and phases positive".into()));
    }
    ctx.prepare_out_dir()?;
    let model = build_3lp(&params)?;
    let gait = nominal_gait(&model, speed, width)?;
    let mut table = CsvTable::new(&[
        "t",
        "phase",
        "swing_x",
        "swing_y",
        "pelvis_x",
        "pelvis_y",
        "swing_vx",
        "swing_vy",
        "pelvis_vx",
        "pelvis_vy",
        "u_sag",
        "u_lat",
    ]);
    table.comment("positions relative to the stance foot of each phase");
    for k in 0..phases {
        let (_, u) = gait.phase(k);
        let profile = InputProfile::new(model.kind, u, model.period)?;
        for i in 0..samples {
            let t = model.period * i as f64 / (samples - 1) as f64;
            let x = gait.state_at(&model, k, t)?;
            let u = profile.eval(t);
            let mut row = vec![k as f64 * model.period + t, k as f64];
            row.extend((0..STATES).map(|j| x[j]));
            row.extend((0..INPUTS).map(|j| u[j]));
            table.push(row);
        }
    }
    let path = ctx.write("nominal.csv", "nominal", &cfg, &[], &table)?;
    println!("period {:.6} s, stride {:.6} m", model.period, speed * model.period);
    println!("wrote {}", path.display());
    Ok(Outcome::ok())
}

/// Output directory: explicit flag, then the environment, then the cwd.
pub fn out_dir(flag: Option<&Path>, env: Option<String>) -> PathBuf {
    match (flag, env) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
        _ => PathBuf::from("."),
    }
}
