//! Functionals tracked along a run: masses, `L^p` probes, dissipation
//! integrals, the combined energy and the blow-up indicator.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::kinetic_energy;
use crate::grid::{
    cell_gradient_magnitude, divergence, face_coords_of, integrate, scalar_dirichlet_form,
    shifted, vector_dirichlet_form, velocity_gradient_sup, GridSpec, ScalarField,
};
use crate::par;
use crate::regularization::ModelParams;
use crate::state::SimState;

/// Column names of the `∫n^p` probes, in record order.
pub const LP_PROBE_LABELS: [&str; 4] = ["lp_n_2a", "lp_n_2a_plus_2", "lp_n_13_8", "lp_n_21_8_minus_a"];

/// Exponents of the `∫n^p` probes: `2α`, `2α+2`, `13/8` and `13/8 + 1 − α`.
pub fn lp_probe_exponents(alpha: f64) -> [f64; 4] {
    [2.0 * alpha, 2.0 * alpha + 2.0, 13.0 / 8.0, 21.0 / 8.0 - alpha]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_n: f64,
    pub mass_c: f64,
    /// `∫n^p` for the exponents of [`lp_probe_exponents`].
    pub lp_n: [f64; 4],
    /// `∫c²`
    pub l2_c: f64,
    /// `∫|u|²`
    pub l2_u: f64,
    /// `∫n^{2α−2}|∇n|²`
    pub dissipation_n: f64,
    pub dissipation_c: f64,
    pub dissipation_u: f64,
    /// `∫n ln n`
    pub entropy_n: f64,
    pub sup_n: f64,
    pub grad_c_sup: f64,
    /// `‖∇·u‖₂`
    pub div_residual: f64,
    pub energy_e: f64,
    /// `max |∇u|`, proxy for the fractional Stokes norm in the blow-up test.
    pub grad_u_sup: f64,
    pub step: u64,
    /// Step size that produced this record (0 for the initial record).
    pub dt: f64,
}

/// `(∫|f|^p)^{1/p}`; `p = ∞` gives `max |f|`.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("lp_norm needs p > 0, got {p}")));
    }
    let v = f.values();
    if p.is_infinite() {
        return Ok(par::max(v.len(), |i| v[i].abs()).max(0.0));
    }
    if p.fract() != 0.0 && f.min() < 0.0 {
        return Err(Error::Domain(format!(
            "lp_norm with fractional p = {p} needs a nonnegative field"
        )));
    }
    let s = par::sum(v.len(), |i| v[i].abs().powf(p)) * f.grid().cell_volume();
    Ok(s.powf(1.0 / p))
}

/// `∫ f^p` for `f ≥ 0` (with `0⁰ = 1`).
pub fn integral_power(f: &ScalarField, p: f64) -> f64 {
    let v = f.values();
    par::sum(v.len(), |i| v[i].powf(p)) * f.grid().cell_volume()
}

/// `∫ n ln n` with `0 ln 0 = 0`; values below `1e-300` count as zero.
pub fn entropy(n: &ScalarField) -> f64 {
    let v = n.values();
    par::sum(v.len(), |i| {
        let x = v[i];
        if x < 1e-300 {
            0.0
        } else {
            x * x.ln()
        }
    }) * n.grid().cell_volume()
}

/// `∫ n^{2α−2}|∇n|² = α^{-2} ∫|∇n^α|²`, from face differences of `n^α`.
/// For `α = 0` this is `∫|∇ ln n|²`, skipping faces touching `n = 0`.
pub fn density_dissipation(n: &ScalarField, alpha: f64) -> f64 {
    let g = *n.grid();
    let v = n.values();
    let mut total = 0.0;
    for d in 0..g.dims() {
        let inv_h = 1.0 / g.h(d);
        let len = g.num_faces(d);
        total += par::sum(len, |idx| {
            let fc = face_coords_of(&g, d, idx);
            if g.is_wall_face(d, fc) {
                return 0.0;
            }
            let lo_c = shifted(fc, d, -1, g.cells(), true).unwrap();
            let a = v[g.index(lo_c[0], lo_c[1], lo_c[2])];
            let b = v[g.index(fc[0], fc[1], fc[2])];
            let diff = if alpha == 0.0 {
                if a <= 0.0 || b <= 0.0 {
                    return 0.0;
                }
                b.ln() - a.ln()
            } else {
                (b.powf(alpha) - a.powf(alpha)) / alpha
            };
            let q = diff * inv_h;
            q * q
        });
    }
    total * g.cell_volume()
}

fn is_entropy_branch(alpha: f64) -> bool {
    (2.0 * alpha - 1.0).abs() < 1e-12
}

/// Combined functional
/// `sign(2α−1)/(2α) ∫n^{2α} + |2α−1| C_S² ∫c²`, or `∫n ln n + ½C_S² ∫c²` when
/// `2α = 1`. For `α = 0` only the `c` part is kept.
pub fn energy_functional(state: &SimState, params: &ModelParams) -> f64 {
    let l2c = {
        let v = state.c.values();
        par::dot(v, v) * state.grid().cell_volume()
    };
    energy_from_parts(params, |p| integral_power(&state.n, p), || entropy(&state.n), l2c)
}

fn energy_from_parts(
    params: &ModelParams,
    int_pow: impl Fn(f64) -> f64,
    ent: impl Fn() -> f64,
    l2c: f64,
) -> f64 {
    let a = params.alpha;
    let cs2 = params.c_s * params.c_s;
    if is_entropy_branch(a) {
        return ent() + 0.5 * cs2 * l2c;
    }
    let k = 2.0 * a - 1.0;
    let c_part = k.abs() * cs2 * l2c;
    if a == 0.0 {
        return c_part;
    }
    k.signum() / (2.0 * a) * int_pow(2.0 * a) + c_part
}

/// Weights of `(D_n, D_c)` on the dissipative side of the energy inequality.
pub fn dissipation_weights(params: &ModelParams) -> (f64, f64) {
    let cs2 = params.c_s * params.c_s;
    if is_entropy_branch(params.alpha) {
        (0.5, 0.25 * cs2)
    } else {
        let k = (2.0 * params.alpha - 1.0).abs();
        (0.25 * k, 0.5 * k * cs2)
    }
}

/// `(E_next − E_prev)/dt + min(weights)·(D_n + D_c)` evaluated at `next`.
pub fn energy_inequality_residual(
    prev: &DiagnosticsRecord,
    next: &DiagnosticsRecord,
    params: &ModelParams,
    dt: f64,
) -> f64 {
    let (wn, wc) = dissipation_weights(params);
    (next.energy_e - prev.energy_e) / dt + wn.min(wc) * (next.dissipation_n + next.dissipation_c)
}

/// Evaluate every tracked functional on `state`.
pub fn compute_record(state: &SimState, params: &ModelParams, dt: f64) -> DiagnosticsRecord {
    let g: GridSpec = *state.grid();
    let vol = g.cell_volume();
    let n = &state.n;
    let c = &state.c;
    let exps = lp_probe_exponents(params.alpha);
    let lp_n = exps.map(|p| integral_power(n, p));
    let l2_c = par::dot(c.values(), c.values()) * vol;
    let entropy_n = entropy(n);
    let energy_e = energy_from_parts(
        params,
        |p| if p == exps[0] { lp_n[0] } else { integral_power(n, p) },
        || entropy_n,
        l2_c,
    );
    let div = divergence(&state.u);
    DiagnosticsRecord {
        t: state.t,
        mass_n: integrate(n),
        mass_c: integrate(c),
        lp_n,
        l2_c,
        l2_u: 2.0 * kinetic_energy(&state.u),
        dissipation_n: density_dissipation(n, params.alpha),
        dissipation_c: scalar_dirichlet_form(c),
        dissipation_u: vector_dirichlet_form(&state.u),
        entropy_n,
        sup_n: n.max(),
        grad_c_sup: cell_gradient_magnitude(c).max(),
        div_residual: (par::dot(div.values(), div.values()) * vol).sqrt(),
        energy_e,
        grad_u_sup: velocity_gradient_sup(&state.u),
        step: state.step,
        dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupFit {
    /// Least-squares slope of `ln(sup n + sup|∇c| + sup|∇u|)` against `t`.
    pub rate: f64,
    /// The fit was impossible (nonpositive or non-finite values); `rate` is 0.
    pub degenerate: bool,
}

/// Exponential growth rate fitted over the last `window` records.
pub fn blowup_indicator(history: &[DiagnosticsRecord], window: usize) -> Result<BlowupFit> {
    if window < 2 {
        return Err(Error::Domain(format!("blow-up window must be at least 2, got {window}")));
    }
    let tail = &history[history.len().saturating_sub(window)..];
    let degenerate = BlowupFit {
        rate: 0.0,
        degenerate: true,
    };
    if tail.len() < 2 {
        return Ok(degenerate);
    }
    let mut ts = Vec::with_capacity(tail.len());
    let mut ys = Vec::with_capacity(tail.len());
    for r in tail {
        let s = r.sup_n + r.grad_c_sup + r.grad_u_sup;
        if !(s > 0.0 && s.is_finite()) {
            return Ok(degenerate);
        }
        ts.push(r.t);
        ys.push(s.ln());
    }
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Ok(degenerate);
    }
    Ok(BlowupFit {
        rate: sxy / sxx,
        degenerate: false,
    })
}

/// CSV column names in record order.
pub fn csv_header() -> String {
    let mut cols = vec!["t", "mass_n", "mass_c"];
    cols.extend(LP_PROBE_LABELS);
    cols.extend([
        "l2_c",
        "l2_u",
        "dissipation_n",
        "dissipation_c",
        "dissipation_u",
        "entropy_n",
        "sup_n",
        "grad_c_sup",
        "div_residual",
        "energy_E",
        "grad_u_sup",
        "step",
        "dt",
    ]);
    cols.join(",")
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV row; floats carry 17 significant digits.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut cells = vec![fmt(r.t), fmt(r.mass_n), fmt(r.mass_c)];
    cells.extend(r.lp_n.iter().map(|&v| fmt(v)));
    cells.extend(
        [
            r.l2_c,
            r.l2_u,
            r.dissipation_n,
            r.dissipation_c,
            r.dissipation_u,
            r.entropy_n,
            r.sup_n,
            r.grad_c_sup,
            r.div_residual,
            r.energy_e,
            r.grad_u_sup,
        ]
        .iter()
        .map(|&v| fmt(v)),
    );
    cells.push(r.step.to_string());
    cells.push(fmt(r.dt));
    cells.join(",")
}

/// `(column, value)` pairs in CSV order, with `step` widened to `f64`.
pub fn named_values(r: &DiagnosticsRecord) -> Vec<(String, f64)> {
    let names = csv_header();
    let mut vals = vec![r.t, r.mass_n, r.mass_c];
    vals.extend(r.lp_n);
    vals.extend([
        r.l2_c,
        r.l2_u,
        r.dissipation_n,
        r.dissipation_c,
        r.dissipation_u,
        r.entropy_n,
        r.sup_n,
        r.grad_c_sup,
        r.div_residual,
        r.energy_e,
        r.grad_u_sup,
        r.step as f64,
        r.dt,
    ]);
    names.split(',').map(String::from).zip(vals).collect()
}

pub fn write_csv<W: Write>(mut w: W, records: &[DiagnosticsRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header())?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}
