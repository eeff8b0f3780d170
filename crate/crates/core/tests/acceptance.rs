//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs everything; trailing
//! arguments select criteria by number (`-- 5 11`). The exit status is 0
//! unless `ACCEPTANCE_STRICT` is set and some criterion failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ksns::config::{InitialData, RunConfig, SweepConfig};
use ksns::exponents::{self, critical_alpha, lemma_l0_feasibility, q, ExponentQuery, Q};
use ksns::fluid::{energy_balance, ViscousMode};
use ksns::grid::{GridSpec, ScalarField, VectorField};
use ksns::regularization::{cutoff_rho, f_eps, f_eps_prime, yosida, CutoffSpec, SensitivityKind};
use ksns::runner::{self, run, run_observed, sweep, HaltReason};
use ksns::transport::{self, TransportConfig};
use ksns::SimState;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Gaussian blob with its peak on a cell centre, so `sup n₀` equals the amplitude.
fn blob(grid: GridSpec, amplitude: f64, background: f64, c0: f64) -> InitialData {
    let dims = grid.dims();
    let center = (0..dims)
        .map(|d| {
            let h = grid.h(d);
            (grid.cells()[d] / 2) as f64 * h + 0.5 * h
        })
        .collect();
    InitialData::Gaussian {
        center,
        width: 0.1,
        amplitude,
        background,
        c: c0,
    }
}

fn l2_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    let vol = a.grid().cell_volume();
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
    (s * vol).sqrt()
}

// ---------------------------------------------------------------------------
// Criteria 1-4: one coupled 64² run per α, shared.

fn coupled_run_config(alpha: f64) -> RunConfig {
    let g = GridSpec::uniform(2, 64, 1.0, false).unwrap();
    let mut cfg = RunConfig::new(g, 100.0);
    cfg.params.alpha = alpha;
    cfg.params.kappa = 1.0;
    cfg.params.eps = 0.05;
    cfg.params.sensitivity_kind = SensitivityKind::TensorRotational { angle: 0.3 };
    cfg.initial_data = blob(g, 4.0, 0.5, 0.5);
    cfg.max_steps = Some(1000);
    cfg
}

struct CoupledRun {
    alpha: f64,
    elapsed: Duration,
    halt: HaltReason,
    steps: u64,
    mass_drift: f64,
    combined_excess: f64,
    min_n: f64,
    min_c: f64,
    max_div: f64,
}

fn coupled_runs() -> &'static [CoupledRun] {
    static RUNS: std::sync::OnceLock<Vec<CoupledRun>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        [0.34, 0.5, 1.0]
            .into_iter()
            .map(|alpha| {
                let cfg = coupled_run_config(alpha);
                let (mut min_n, mut min_c) = (f64::INFINITY, f64::INFINITY);
                let start = Instant::now();
                let r = run_observed(&cfg, None, |s: &SimState| {
                    min_n = min_n.min(s.n.min());
                    min_c = min_c.min(s.c.min());
                })
                .expect("coupled run failed to start");
                let elapsed = start.elapsed();
                let h = &r.history;
                let (m0, c0) = (h[0].mass_n, h[0].mass_c);
                let bound = m0 + c0.max(m0) + 1e-6;
                CoupledRun {
                    alpha,
                    elapsed,
                    halt: r.halt_reason,
                    steps: r.steps,
                    mass_drift: h.iter().map(|x| (x.mass_n - m0).abs() / m0).fold(0.0, f64::max),
                    combined_excess: h.iter().map(|x| x.mass_n + x.mass_c - bound).fold(f64::NEG_INFINITY, f64::max),
                    min_n,
                    min_c,
                    max_div: h[1..].iter().map(|x| x.div_residual).fold(0.0, f64::max),
                }
            })
            .collect()
    })
}

fn completed(r: &CoupledRun) -> bool {
    matches!(r.halt, HaltReason::MaxSteps) && r.steps == 1000
}

fn criterion_1() -> Verdict {
    let runs = coupled_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        pass &= completed(r) && r.mass_drift <= 1e-10 && r.elapsed <= Duration::from_secs(60);
        parts.push(format!(
            "α={} drift {:.2e} in {} ({} steps)",
            r.alpha,
            r.mass_drift,
            secs(r.elapsed),
            r.steps
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_2() -> Verdict {
    let runs = coupled_runs();
    let worst = runs.iter().map(|r| r.combined_excess).fold(f64::NEG_INFINITY, f64::max);
    let pass = runs.iter().all(completed) && worst <= 0.0;
    verdict(pass, format!("max of ∫n+∫c minus bound over all steps: {worst:.3e}"))
}

fn criterion_3() -> Verdict {
    let runs = coupled_runs();
    let min_n = runs.iter().map(|r| r.min_n).fold(f64::INFINITY, f64::min);
    let min_c = runs.iter().map(|r| r.min_c).fold(f64::INFINITY, f64::min);
    let pass = runs.iter().all(completed) && min_n >= 0.0 && min_c >= 0.0;
    verdict(pass, format!("min n = {min_n:.3e}, min c = {min_c:.3e} over all accepted steps"))
}

fn criterion_4() -> Verdict {
    let runs = coupled_runs();
    let worst = runs.iter().map(|r| r.max_div).fold(0.0, f64::max);
    let pass = runs.iter().all(completed) && worst <= 1e-8;
    verdict(pass, format!("max ‖∇·u‖₂ after projection {worst:.3e} (tol 1e-8)"))
}

// ---------------------------------------------------------------------------
// Criterion 5 and its determinism repeat.

fn boundedness_config(dims: usize, cells: usize) -> RunConfig {
    let g = GridSpec::uniform(dims, cells, 1.0, false).unwrap();
    let mut cfg = RunConfig::new(g, 10.0);
    cfg.params.alpha = 0.5;
    cfg.params.c_s = 1.0;
    cfg.params.kappa = 0.0;
    cfg.params.eps = 0.0;
    cfg.initial_data = blob(g, 4.0, 0.0, 0.0);
    cfg
}

fn boundedness_check(cfg: &RunConfig, limit: Duration, out: Option<&Path>) -> (bool, String) {
    let start = Instant::now();
    let r = match run(cfg, out) {
        Ok(r) => r,
        Err(e) => return (false, format!("run failed: {e}")),
    };
    let elapsed = start.elapsed();
    let h = &r.history;
    let sup0 = h[0].sup_n;
    let max_sup = h.iter().map(|x| x.sup_n).fold(0.0, f64::max);
    let early: Vec<_> = h.iter().filter(|x| x.t <= 0.1 * cfg.t_end).collect();
    let mut ok = r.halt_reason == HaltReason::Completed && max_sup <= 10.0 * sup0 && elapsed <= limit;
    let mut ratios = Vec::new();
    for (name, get) in [
        ("∫n^2α", (|x: &ksns::diagnostics::DiagnosticsRecord| x.lp_n[0]) as fn(&_) -> f64),
        ("∫c²", |x| x.l2_c),
        ("∫|u|²", |x| x.l2_u),
    ] {
        let early_max = early.iter().map(|x| get(x)).fold(0.0, f64::max);
        let late_max = h.iter().map(get).fold(0.0, f64::max);
        ok &= late_max <= 5.0 * early_max;
        ratios.push(format!("{name} {:.2}", late_max / early_max));
    }
    (
        ok,
        format!(
            "{:?} at t={} after {} steps in {}; sup n/sup n₀ = {:.2}; max/early max: {}",
            r.halt_reason,
            r.t_final,
            r.steps,
            secs(elapsed),
            max_sup / sup0,
            ratios.join(", ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let (ok2, d2) = boundedness_check(&boundedness_config(2, 64), Duration::from_secs(300), None);
    let (ok3, d3) = boundedness_check(&boundedness_config(3, 32), Duration::from_secs(900), None);
    verdict(ok2 && ok3, format!("2D 64²: {d2} | 3D 32³: {d3}"))
}

fn criterion_11() -> Verdict {
    let cfg = boundedness_config(2, 64);
    let mut csvs = Vec::new();
    for workers in [1, 2, 8] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let res = pool.install(|| run(&cfg, Some(dir.path())));
        if let Err(e) = res {
            return verdict(false, format!("run with {workers} workers failed: {e}"));
        }
        csvs.push(std::fs::read(dir.path().join("diagnostics.csv")).unwrap());
    }
    let same = csvs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        same,
        format!("diagnostics.csv with 1/2/8 workers: {} bytes each, identical = {same}", csvs[0].len()),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: fluid energy identity on a forced 32² run.

fn criterion_6() -> Verdict {
    let g = GridSpec::uniform(2, 32, 1.0, false).unwrap();
    let mut cfg = RunConfig::new(g, 1.0);
    cfg.fluid.viscous_mode = ViscousMode::Explicit;
    cfg.initial_data = blob(g, 4.0, 0.2, 0.0);
    let mut state = runner::initial_state(&cfg).unwrap();
    let mut worst = 0.0f64;
    let steps = 300;
    for _ in 0..steps {
        let dt = cfg.safety * runner::stable_dt(&cfg, &state).unwrap();
        let (next, _) = runner::advance(&cfg, &state, dt).unwrap();
        let b = energy_balance(&state.u, &next.u, &state.n, &cfg.params.phi, dt).unwrap();
        worst = worst.max(b.residual.abs() / (dt * b.scale));
        state = next;
    }
    verdict(
        worst <= 5.0,
        format!("max |residual| / (dt · scale) over {steps} steps = {worst:.3e} (bound 5), t = {:.3e}", state.t),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: manufactured solutions.

/// `c = a + e^{-t} cos πx cos πy` on the unit square (Neumann) with the
/// density `n = a + 2π² e^{-t} cos πx cos πy` as source.
fn mms_signal_error(cells: usize) -> f64 {
    const A: f64 = 25.0;
    let pi = std::f64::consts::PI;
    let g = GridSpec::uniform(2, cells, 1.0, false).unwrap();
    let shape = |x: [f64; 3]| (pi * x[0]).cos() * (pi * x[1]).cos();
    let t_end = 0.1;
    let h = g.h(0);
    let steps = (t_end / (0.5 * h * h)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut state = SimState::new(ScalarField::zeros(&g), ScalarField::from_fn(&g, |x| A + shape(x))).unwrap();
    let params = ksns::ModelParams {
        eps: 0.0,
        ..Default::default()
    };
    let cfg = TransportConfig {
        dt,
        ..Default::default()
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        state.n = ScalarField::from_fn(&g, |x| A + 2.0 * pi * pi * (-t).exp() * shape(x));
        state.c = transport::step_c(&state, &params, &cfg).unwrap();
    }
    let exact = ScalarField::from_fn(&g, |x| A + (-t_end as f64).exp() * shape(x));
    l2_diff(&state.c, &exact)
}

/// `n_t + u·∇n = Δn` with constant `u = (1, 1/2)` on the periodic box `[0,2]²`.
fn mms_advection_error(cells: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let g = GridSpec::uniform(2, cells, 2.0, true).unwrap();
    let vel = [1.0, 0.5];
    let exact = |x: [f64; 3], t: f64| {
        2.0 + (-2.0 * pi * pi * t).exp() * (pi * (x[0] - vel[0] * t)).sin() * (pi * (x[1] - vel[1] * t)).sin()
    };
    let mut state = SimState::new(ScalarField::from_fn(&g, |x| exact(x, 0.0)), ScalarField::zeros(&g)).unwrap();
    state.u = VectorField::uniform(&g, &vel);
    let params = ksns::ModelParams::default();
    let t_end = 0.1;
    let probe = TransportConfig::default();
    let bound = transport::stable_dt(&state, &params, &probe).unwrap();
    let steps = (t_end / (0.4 * bound)).ceil() as usize;
    let cfg = TransportConfig {
        dt: t_end / steps as f64,
        ..probe
    };
    for _ in 0..steps {
        state.n = transport::step_n(&state, &params, &cfg).unwrap();
    }
    l2_diff(&state.n, &ScalarField::from_fn(&g, |x| exact(x, t_end)))
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn criterion_7() -> Verdict {
    let grids = [32, 64, 128];
    let ec: Vec<f64> = grids.iter().map(|&n| mms_signal_error(n)).collect();
    let ea: Vec<f64> = grids.iter().map(|&n| mms_advection_error(n)).collect();
    let oc = orders(&ec);
    let oa = orders(&ea);
    let pass = oc.iter().all(|&o| o >= 1.8) && oa.iter().all(|&o| o >= 0.8);
    verdict(
        pass,
        format!(
            "signal L² errors {:.3e}/{:.3e}/{:.3e}, orders {:.3}/{:.3} (need 1.8); \
             upwind transport errors {:.3e}/{:.3e}/{:.3e}, orders {:.3}/{:.3} (need 0.8)",
            ec[0], ec[1], ec[2], oc[0], oc[1], ea[0], ea[1], ea[2], oa[0], oa[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: ε self-convergence.

fn criterion_8() -> Verdict {
    let g = GridSpec::uniform(2, 32, 1.0, false).unwrap();
    let mut base = RunConfig::new(g, 1.0);
    base.params.alpha = 0.5;
    base.params.kappa = 1.0;
    base.initial_data = blob(g, 4.0, 0.5, 0.5);
    let cfg = SweepConfig {
        alpha_values: vec![0.5],
        eps_values: vec![0.2, 0.1, 0.05],
        base,
    };
    let rep = match sweep(&cfg, None) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    let mut finals = Vec::new();
    for e in &rep.entries {
        match &e.report {
            Some(r) if r.halt_reason == HaltReason::Completed => finals.push(r.final_state.n.clone()),
            _ => return verdict(false, format!("run at ε={} did not complete: {:?}", e.eps, e.error)),
        }
    }
    let d1 = l2_diff(&finals[0], &finals[1]);
    let d2 = l2_diff(&finals[1], &finals[2]);
    verdict(
        d2 < d1,
        format!("‖n_0.1 − n_0.2‖₂ = {d1:.4e}, ‖n_0.05 − n_0.1‖₂ = {d2:.4e}, ratio {:.3}", d2 / d1),
    )
}

// ---------------------------------------------------------------------------
// Criterion 9: randomized regularization checks.

fn criterion_9() -> Verdict {
    const N: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = [0usize; 4];
    let mut worst_contraction = f64::NEG_INFINITY;
    for _ in 0..N {
        let eps = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..2.0) };
        let s = 10f64.powf(rng.gen_range(-6.0..6.0)) * if rng.gen_bool(0.05) { 0.0 } else { 1.0 };
        let f = f_eps(eps, s).unwrap();
        let fp = f_eps_prime(eps, s).unwrap();
        if !(0.0 <= f && f <= s) {
            bad[0] += 1;
        }
        if !(0.0..=1.0).contains(&fp) {
            bad[1] += 1;
        }
    }
    for k in 0..N {
        let periodic = k % 4 == 0;
        let dims = if k % 10 == 0 { 3 } else { 2 };
        let cells: Vec<usize> = (0..dims).map(|_| rng.gen_range(2..=if dims == 3 { 5 } else { 8 })).collect();
        let lengths: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.5..2.0)).collect();
        let (bs, bv) = if periodic {
            (ksns::ScalarBc::Periodic, ksns::VelocityBc::Periodic)
        } else {
            (ksns::ScalarBc::Neumann, ksns::VelocityBc::NoSlip)
        };
        let g = GridSpec::new(dims, &cells, &lengths, bs, bv).unwrap();
        let eps = rng.gen_range(0.0..0.5);
        let mut w = VectorField::zeros(&g);
        for d in 0..dims {
            for x in w.comp_mut(d) {
                *x = rng.gen_range(-10.0..10.0);
            }
        }
        w.zero_wall_faces();
        let y = yosida(&g, eps, &w, 1e-10).unwrap();
        // against both ‖w‖ and the sharper ‖P w‖
        let pw = yosida(&g, 0.0, &w, 1e-10).unwrap();
        let excess = (y.norm_l2() - w.norm_l2()).max(y.norm_l2() - pw.norm_l2());
        worst_contraction = worst_contraction.max(excess);
        if excess > 1e-8 {
            bad[2] += 1;
        }
        let half = 0.5 * lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        let rho = cutoff_rho(&g, CutoffSpec { width: half * rng.gen_range(1e-3..0.999) }).unwrap();
        if rho.values().iter().any(|r| !(0.0..=1.0).contains(r)) {
            bad[3] += 1;
        }
    }
    verdict(
        bad.iter().all(|&b| b == 0),
        format!(
            "{N} samples each: F_ε range {} bad, F'_ε range {} bad, Yosida contraction {} bad \
             (max ‖Yw‖ − min(‖w‖, ‖Pw‖) = {worst_contraction:.2e}), ρ_ε range {} bad",
            bad[0], bad[1], bad[2], bad[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 10: exact exponent certificates.

fn criterion_10() -> Verdict {
    let start = Instant::now();
    let crit = critical_alpha(3).unwrap() == q(1, 3);
    let samples = exponents::alpha_samples(200);
    let (lo, hi) = (q(1, 3), q(3, 4));
    let span = samples.len() == 200 && samples.iter().all(|a| a > &lo && a <= &hi) && samples.last() == Some(&hi);
    let (w_lo, w_hi) = (q(59, 20), Q::from_integer(3.into()));
    let (b_lo, b_hi) = (q(24, 55), q(8, 15));
    let in_unit = |x: &Q| x > &Q::zero() && x < &Q::one();
    let (mut feasible, mut bracket, mut a_ok, mut at_ok, mut identity) = (0, 0, 0, 0, 0);
    let mut first_infeasible = None;
    let mut witnesses = std::collections::BTreeSet::new();
    for alpha in &samples {
        let query = ExponentQuery::standard(alpha.clone());
        let r = lemma_l0_feasibility(&query).unwrap();
        let inv_q = Q::one() / query.q_exp();
        match &r.witness {
            Some(w) if r.feasible && w > &w_lo && w < &w_hi => {
                feasible += 1;
                witnesses.insert(exponents::to_string(w));
            }
            _ => {
                first_infeasible.get_or_insert_with(|| (exponents::to_string(alpha), r.lhs_value.clone()));
            }
        }
        bracket += (inv_q > b_lo && inv_q <= b_hi && r.bracket_holds) as usize;
        a_ok += in_unit(&r.a) as usize;
        at_ok += in_unit(&r.a_tilde) as usize;
        identity += r.identity_holds as usize;
    }
    let elapsed = start.elapsed();
    let pass = crit
        && span
        && feasible == 200
        && bracket == 200
        && a_ok == 200
        && at_ok == 200
        && identity == 200
        && elapsed <= Duration::from_secs(10);
    let mut detail = format!(
        "critical α(3) = 1/3: {crit}; feasible {feasible}/200, bracket {bracket}/200, \
         a ∈ (0,1) {a_ok}/200, ã ∈ (0,1) {at_ok}/200, identity {identity}/200; {}",
        secs(elapsed)
    );
    if let Some((alpha, lhs)) = first_infeasible {
        detail += &format!(
            "; first infeasible α = {alpha}, best left side {} ≈ {:.6}",
            exponents::to_string(&lhs),
            lhs.to_f64().unwrap_or(f64::NAN)
        );
    }
    if !witnesses.is_empty() {
        detail += &format!("; witnesses {{{}}}", witnesses.into_iter().collect::<Vec<_>>().join(", "));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Verdict); 11] = [
        (1, "mass conservation", criterion_1),
        (2, "combined mass bound", criterion_2),
        (3, "nonnegativity", criterion_3),
        (4, "divergence-free velocity", criterion_4),
        (5, "energy-estimate boundedness", criterion_5),
        (6, "discrete fluid energy identity", criterion_6),
        (7, "manufactured-solution convergence", criterion_7),
        (8, "ε-convergence", criterion_8),
        (9, "regularization operator properties", criterion_9),
        (10, "exponent certificates", criterion_10),
        (11, "determinism across worker counts", criterion_11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let (mut failed, mut ran) = (0, 0);
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{}]",
            if v.pass { "PASS" } else { "FAIL" },
            id,
            v.detail,
            secs(start.elapsed())
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
