//! Time loop coupling fluid, signal and density, plus `(α, ε)` sweeps.
//!
//! Each step runs `step_u` with the current density, then `step_c` with the
//! new velocity, then `step_n` with the new velocity and signal.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{InitialData, ManufacturedTest, RunConfig, SweepConfig};
use crate::diagnostics::{blowup_indicator, compute_record, csv_header, csv_row, named_values, BlowupFit, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fluid::{self, project};
use crate::grid::{ScalarField, VectorField};
use crate::par;
use crate::snapshot;
use crate::state::SimState;
use crate::transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    /// `sup n` exceeded the configured ceiling.
    BlowupCeiling,
    /// The configured step limit was reached before `t_end`.
    MaxSteps,
    /// Repeated rejections pushed `dt` below `dt_min`.
    DtUnderflow,
    /// A solver or state error aborted the run.
    Failed,
}

impl HaltReason {
    /// CLI exit code: 0 completed (or stopped at the step limit), 2 blow-up halt, 1 error.
    pub fn exit_code(self) -> i32 {
        match self {
            HaltReason::Completed | HaltReason::MaxSteps => 0,
            HaltReason::BlowupCeiling => 2,
            HaltReason::DtUnderflow | HaltReason::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub halt_reason: HaltReason,
    pub message: Option<String>,
    pub steps: u64,
    pub rejected_steps: u64,
    pub t_final: f64,
    pub wall_time_s: f64,
    pub sup_n0: f64,
    pub max_sup_n: f64,
    /// Completed with `max sup n ≤ bounded_factor · sup n₀`.
    pub bounded: bool,
    pub blowup: BlowupFit,
    /// Minimum and maximum of every diagnostics column over the run.
    pub functionals: BTreeMap<String, Range>,
    pub max_pressure_iterations: usize,
    pub max_div_residual: f64,
    #[serde(skip)]
    pub history: Vec<DiagnosticsRecord>,
    #[serde(skip)]
    pub final_state: SimState,
}

/// Initial state of a run; `u₀` is projected to be divergence-free.
pub fn initial_state(cfg: &RunConfig) -> Result<SimState> {
    let g = cfg.grid;
    let dims = g.dims();
    let l = g.lengths();
    let mut state = match &cfg.initial_data {
        InitialData::Uniform { n, c } => SimState::new(ScalarField::constant(&g, *n), ScalarField::constant(&g, *c))?,
        InitialData::Gaussian {
            center,
            width,
            amplitude,
            background,
            c,
        } => {
            let n = ScalarField::from_fn(&g, |x| {
                let r2: f64 = (0..dims).map(|d| (x[d] - center[d]).powi(2)).sum();
                background + amplitude * (-r2 / (width * width)).exp()
            });
            SimState::new(n, ScalarField::constant(&g, *c))?
        }
        InitialData::Snapshot { path } => {
            let s = snapshot::read(path)?;
            if *s.grid() != g {
                return Err(Error::Config(vec![format!(
                    "snapshot {} was written on a different grid than the configured one",
                    path.display()
                )]));
            }
            s
        }
        InitialData::Manufactured {
            test,
            amplitude,
            background,
            c,
        } => match test {
            ManufacturedTest::Cosine => {
                let n = ScalarField::from_fn(&g, |x| {
                    background
                        + amplitude
                            * (0..dims)
                                .map(|d| (std::f64::consts::PI * x[d] / l[d]).cos())
                                .product::<f64>()
                });
                SimState::new(n, ScalarField::constant(&g, *c))?
            }
            ManufacturedTest::TaylorGreen => {
                let mut s = SimState::new(ScalarField::zeros(&g), ScalarField::zeros(&g))?;
                let tau = 2.0 * std::f64::consts::PI;
                s.u = VectorField::from_fn(&g, |d, x| {
                    let (a, b) = (tau * x[0] / l[0], tau * x[1] / l[1]);
                    match d {
                        0 => amplitude * a.sin() * b.cos(),
                        1 => -amplitude * a.cos() * b.sin(),
                        _ => 0.0,
                    }
                });
                s
            }
        },
    };
    if cfg.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in state.n.values_mut() {
            *v *= 1.0 + cfg.noise * rng.gen_range(-1.0..1.0);
        }
    }
    if state.t == 0.0 && state.step == 0 && state.u.max_abs() > 0.0 {
        let (w, _, _) = project(&state.u, cfg.fluid.pressure_tol, None)?;
        state.u = w;
    }
    state.check()?;
    Ok(state)
}

/// Largest admissible step for `state` before the safety factor.
pub fn stable_dt(cfg: &RunConfig, state: &SimState) -> Result<f64> {
    let mut dt = transport::stable_dt(state, &cfg.params, &cfg.transport)?;
    if cfg.fluid_enabled {
        dt = dt.min(fluid::stable_dt(&state.u, &cfg.params, cfg.fluid.viscous_mode));
    }
    Ok(dt)
}

/// One coupled step of size `dt`; returns the new state and the projection stats.
pub fn advance(cfg: &RunConfig, state: &SimState, dt: f64) -> Result<(SimState, Option<fluid::PressureSolveStats>)> {
    let mut next = state.clone();
    let mut stats = None;
    if cfg.fluid_enabled {
        let fc = fluid::FluidConfig { dt, ..cfg.fluid };
        let (u, p, st) = fluid::step_u(state, &cfg.params, &fc)?;
        next.u = u;
        next.p = p;
        stats = Some(st);
    }
    let tc = transport::TransportConfig { dt, ..cfg.transport };
    next.c = transport::step_c(&next, &cfg.params, &tc)?;
    next.n = transport::step_n(&next, &cfg.params, &tc)?;
    next.t = state.t + dt;
    next.step = state.step + 1;
    next.check()?;
    Ok((next, stats))
}

struct Outputs {
    dir: PathBuf,
    csv: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("snapshots"))?;
        let mut csv = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
        writeln!(csv, "{}", csv_header())?;
        Ok(Self { dir: dir.to_path_buf(), csv })
    }

    fn record(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.csv, "{}", csv_row(r))?;
        Ok(())
    }

    fn snapshot(&self, s: &SimState) -> Result<()> {
        snapshot::write(&self.dir.join("snapshots").join(format!("step_{}.bin", s.step)), s)
    }
}

/// Run to `t_end`, the step limit or a halt, writing `diagnostics.csv`,
/// `snapshots/step_<k>.bin` and `report.json` under `out` when given.
///
/// Configuration and initial-data problems are returned as errors; failures
/// inside the loop end the run early with a report saying why.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunReport> {
    run_observed(cfg, out, |_| {})
}

/// [`run`], calling `observe` on the initial state and after every accepted step.
pub fn run_observed<F>(cfg: &RunConfig, out: Option<&Path>, mut observe: F) -> Result<RunReport>
where
    F: FnMut(&SimState),
{
    cfg.validate()?;
    let started = Instant::now();
    let mut state = initial_state(cfg)?;
    let mut outputs = out.map(Outputs::create).transpose()?;

    observe(&state);
    let first = compute_record(&state, &cfg.params, 0.0);
    let sup_n0 = first.sup_n;
    if let Some(o) = outputs.as_mut() {
        o.record(&first)?;
        if cfg.output_every > 0 {
            o.snapshot(&state)?;
        }
    }
    let mut history = vec![first];
    let dt_min = 1e-10 * cfg.t_end;
    let mut rejected = 0u64;
    let mut max_iters = 0usize;
    let mut halt = HaltReason::Completed;
    let mut message = None;

    'time: while state.t < cfg.t_end {
        if cfg.max_steps.is_some_and(|m| state.step >= m) {
            halt = HaltReason::MaxSteps;
            break;
        }
        let remaining = cfg.t_end - state.t;
        let bound = match stable_dt(cfg, &state) {
            Ok(b) => b,
            Err(e) => {
                halt = HaltReason::Failed;
                message = Some(e.to_string());
                break;
            }
        };
        let mut dt = (cfg.safety * bound).min(cfg.dt_max);
        // absorb a rounding-sized remainder into this step
        let last = remaining - dt <= dt_min;
        if last {
            dt = remaining;
        }
        let (next, stats) = loop {
            if dt < dt_min {
                halt = HaltReason::DtUnderflow;
                message = Some(format!("step size {dt:e} fell below dt_min = {dt_min:e} at t = {}", state.t));
                break 'time;
            }
            match advance(cfg, &state, dt) {
                Ok(r) => break r,
                Err(Error::Cfl { .. }) => {
                    rejected += 1;
                    dt *= 0.5;
                }
                Err(e) => {
                    halt = HaltReason::Failed;
                    message = Some(e.to_string());
                    break 'time;
                }
            }
        };
        state = next;
        if last && dt == remaining {
            state.t = cfg.t_end;
        }
        observe(&state);
        if let Some(st) = stats {
            max_iters = max_iters.max(st.iterations);
        }
        let rec = compute_record(&state, &cfg.params, dt);
        let sup = rec.sup_n;
        if let Some(o) = outputs.as_mut() {
            o.record(&rec)?;
            if cfg.output_every > 0 && state.step % cfg.output_every == 0 {
                o.snapshot(&state)?;
            }
        }
        history.push(rec);
        if !(sup <= cfg.sup_ceiling) {
            halt = HaltReason::BlowupCeiling;
            message = Some(format!("sup n = {sup:e} exceeded the ceiling {:e} at t = {}", cfg.sup_ceiling, state.t));
            break;
        }
    }

    let mut functionals: BTreeMap<String, Range> = BTreeMap::new();
    for r in &history {
        for (k, v) in named_values(r) {
            functionals
                .entry(k)
                .and_modify(|e| {
                    e.min = e.min.min(v);
                    e.max = e.max.max(v);
                })
                .or_insert(Range { min: v, max: v });
        }
    }
    let max_sup_n = functionals["sup_n"].max;
    let max_div_residual = history.iter().skip(1).map(|r| r.div_residual).fold(0.0, f64::max);
    let blowup = blowup_indicator(&history, cfg.indicator_window)?;
    let report = RunReport {
        halt_reason: halt,
        message,
        steps: state.step,
        rejected_steps: rejected,
        t_final: state.t,
        wall_time_s: started.elapsed().as_secs_f64(),
        sup_n0,
        max_sup_n,
        bounded: halt == HaltReason::Completed && max_sup_n <= cfg.bounded_factor * sup_n0,
        blowup,
        functionals,
        max_pressure_iterations: max_iters,
        max_div_residual,
        history,
        final_state: state,
    };
    if let Some(mut o) = outputs {
        o.csv.flush()?;
        o.snapshot(&report.final_state)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(o.dir.join("report.json"), json + "\n")?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub eps: f64,
    pub halt_reason: Option<HaltReason>,
    /// Set when the run could not start or its outputs could not be written.
    pub error: Option<String>,
    pub blowup_rate: f64,
    pub max_sup_n: f64,
    pub bounded: bool,
    #[serde(skip)]
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// α-major, in the listed order.
    pub entries: Vec<SweepEntry>,
}

/// Output directory of one sweep cell.
pub fn sweep_dir_name(alpha: f64, eps: f64) -> String {
    format!("alpha_{alpha}_eps_{eps}")
}

/// One run per `(α, ε)` pair, run concurrently; a failed run is recorded and the sweep continues.
pub fn sweep(cfg: &SweepConfig, out: Option<&Path>) -> Result<SweepReport> {
    cfg.validate()?;
    let pairs: Vec<(f64, f64)> = cfg
        .alpha_values
        .iter()
        .flat_map(|&a| cfg.eps_values.iter().map(move |&e| (a, e)))
        .collect();
    let entries = par::map_collect(&pairs, |&(alpha, eps)| {
        let mut run_cfg = cfg.base.clone();
        run_cfg.params.alpha = alpha;
        run_cfg.params.eps = eps;
        let dir = out.map(|o| o.join(sweep_dir_name(alpha, eps)));
        match run(&run_cfg, dir.as_deref()) {
            Ok(r) => SweepEntry {
                alpha,
                eps,
                halt_reason: Some(r.halt_reason),
                error: r.message.clone(),
                blowup_rate: r.blowup.rate,
                max_sup_n: r.max_sup_n,
                bounded: r.bounded,
                report: Some(r),
            },
            Err(e) => SweepEntry {
                alpha,
                eps,
                halt_reason: None,
                error: Some(e.to_string()),
                blowup_rate: f64::NAN,
                max_sup_n: f64::NAN,
                bounded: false,
                report: None,
            },
        }
    });
    let report = SweepReport { entries };
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(o.join("sweep.json"), json + "\n")?;
    }
    Ok(report)
}
