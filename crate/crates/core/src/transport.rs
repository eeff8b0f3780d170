//! One step of the cell density `n` and the signal `c`:
//!
//! ```text
//! n_t + u·∇n = Δn − ∇·(n F'_ε(n) S_ε ∇c)
//! c_t + u·∇c = Δc − c + F_ε(n)
//! ```
//!
//! Fluxes live on faces and are upwinded, so the explicit part of every
//! update is a nonnegative combination of old values under the `dt` bound
//! returned by [`stable_dt`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cross_average, divergence, face_coords_of, gradient, laplacian_into, shifted,
    GridSpec, ScalarField, VectorField,
};
use crate::linalg::{preconditioned_cg, CgSettings};
use crate::separable::Separable;
use crate::par;
use crate::regularization::{f_eps_prime_unchecked, f_eps_unchecked, ModelParams, SensitivityKind, Tensor};
use crate::state::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionMode {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionScheme {
    Upwind1,
    /// Minmod-limited linear reconstruction.
    Muscl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub dt: f64,
    pub diffusion: DiffusionMode,
    pub advection: AdvectionScheme,
    /// Upwind the density carried by the chemotactic flux (central average when off).
    pub limiter: bool,
    /// Relative residual of the implicit diffusion solve.
    pub diffusion_tol: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            diffusion: DiffusionMode::Implicit,
            advection: AdvectionScheme::Upwind1,
            limiter: true,
            diffusion_tol: 1e-10,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("transport dt = {} must be positive", self.dt));
        }
        if !(self.diffusion_tol > 0.0 && self.diffusion_tol < 1.0) {
            v.push(format!("transport.diffusion_tol = {} must lie in (0, 1)", self.diffusion_tol));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Cells on the low and high side of face `f` of component `d`.
#[inline]
fn face_cells(g: &GridSpec, d: usize, f: [usize; 3]) -> (usize, usize) {
    let hi = g.index(f[0], f[1], f[2]);
    let lo_c = shifted(f, d, -1, g.cells(), true).unwrap();
    (g.index(lo_c[0], lo_c[1], lo_c[2]), hi)
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Value of cell `c` shifted by `delta` along `d`; mirror ghost at walls.
#[inline]
fn neighbour(g: &GridSpec, x: &[f64], c: [usize; 3], d: usize, delta: isize) -> f64 {
    let q = shifted(c, d, delta, g.cells(), g.is_periodic()).unwrap_or(c);
    x[g.index(q[0], q[1], q[2])]
}

/// Advective flux `u_f · f_face` with upwind or MUSCL face values.
pub fn advective_flux(f: &ScalarField, u: &VectorField, scheme: AdvectionScheme) -> VectorField {
    let g = *f.grid();
    let x = f.values();
    let mut out = VectorField::zeros(&g);
    for d in 0..g.dims() {
        let ud = u.comp(d);
        par::fill(out.comp_mut(d), |idx| {
            let fc = face_coords_of(&g, d, idx);
            let v = ud[idx];
            if g.is_wall_face(d, fc) || v == 0.0 {
                return 0.0;
            }
            let (lo, hi) = face_cells(&g, d, fc);
            let val = match scheme {
                AdvectionScheme::Upwind1 => {
                    if v > 0.0 {
                        x[lo]
                    } else {
                        x[hi]
                    }
                }
                AdvectionScheme::Muscl => {
                    let lo_c = g.coords(lo);
                    let hi_c = g.coords(hi);
                    if v > 0.0 {
                        let s = minmod(x[lo] - neighbour(&g, x, lo_c, d, -1), x[hi] - x[lo]);
                        x[lo] + 0.5 * s
                    } else {
                        let s = minmod(x[hi] - x[lo], neighbour(&g, x, hi_c, d, 1) - x[hi]);
                        x[hi] - 0.5 * s
                    }
                }
            };
            v * val
        });
    }
    out
}

/// `(R ∇c)_d` on the faces, `R` the unit-magnitude part of the sensitivity.
fn directed_gradient(c: &ScalarField, kind: SensitivityKind) -> VectorField {
    let grad = gradient(c);
    let SensitivityKind::TensorRotational { angle } = kind else {
        return grad;
    };
    let g = *c.grid();
    let r = Tensor::rotation(g.dims(), angle);
    let mut out = VectorField::zeros(&g);
    for d in 0..g.dims() {
        let gd = grad.comp(d);
        par::fill(out.comp_mut(d), |idx| {
            let fc = face_coords_of(&g, d, idx);
            if g.is_wall_face(d, fc) {
                return 0.0;
            }
            let mut s = 0.0;
            for e in 0..g.dims() {
                let ge = if e == d { gd[idx] } else { cross_average(&grad, d, e, fc) };
                s += r.m[d][e] * ge;
            }
            s
        });
    }
    out
}

/// Chemotactic flux `n F'_ε(n) ρ_ε S ∇c` on faces.
///
/// With the limiter on, `n` is taken from the upwind cell with respect to
/// the direction of `ρ_ε S ∇c`; otherwise it is the two-cell average. Wall
/// faces carry no flux.
pub fn chemotactic_flux(
    n: &ScalarField,
    c: &ScalarField,
    params: &ModelParams,
    rho: &ScalarField,
) -> Result<VectorField> {
    chemotactic_flux_with(n, c, params, rho, true)
}

fn chemotactic_flux_with(
    n: &ScalarField,
    c: &ScalarField,
    params: &ModelParams,
    rho: &ScalarField,
    limiter: bool,
) -> Result<VectorField> {
    if n.grid() != c.grid() || n.grid() != rho.grid() {
        return Err(Error::Domain("n, c and rho must share a grid".into()));
    }
    if n.min() < 0.0 {
        return Err(Error::State(format!("chemotactic flux needs n >= 0, min n = {:e}", n.min())));
    }
    let g = *n.grid();
    let mut flux = directed_gradient(c, params.sensitivity_kind);
    let nv = n.values();
    let rv = rho.values();
    let eps = params.eps;
    for d in 0..g.dims() {
        par::update(flux.comp_mut(d), |idx, gd| {
            let fc = face_coords_of(&g, d, idx);
            if g.is_wall_face(d, fc) {
                return 0.0;
            }
            let (lo, hi) = face_cells(&g, d, fc);
            let v = 0.5 * (rv[lo] + rv[hi]) * gd;
            if v == 0.0 {
                return 0.0;
            }
            let nf = if !limiter {
                0.5 * (nv[lo] + nv[hi])
            } else if v > 0.0 {
                nv[lo]
            } else {
                nv[hi]
            };
            nf * f_eps_prime_unchecked(eps, nf) * params.saturation(nf) * v
        });
    }
    Ok(flux)
}

/// Per-cell outflow rate `Σ_faces max(±v, 0)/h` of a face velocity field.
fn outflow_rate(v: &VectorField, c: usize) -> f64 {
    let g = v.grid();
    let cc = g.coords(c);
    let mut r = 0.0;
    for d in 0..g.dims() {
        let shape = g.face_shape(d);
        let comp = v.comp(d);
        let lo = comp[crate::grid::face_idx(g, d, cc)];
        let up = shifted(cc, d, 1, shape, g.is_periodic()).unwrap();
        let hi = comp[crate::grid::face_idx(g, d, up)];
        r += ((-lo).max(0.0) + hi.max(0.0)) / g.h(d);
    }
    r
}

fn diffusion_rate(g: &GridSpec) -> f64 {
    (0..g.dims()).map(|d| 2.0 / (g.h(d) * g.h(d))).sum()
}

/// Largest `dt` keeping the explicit part of `step_n` positivity preserving.
fn n_rate(state: &SimState, params: &ModelParams, cfg: &TransportConfig, rho: &ScalarField) -> f64 {
    let g = *state.grid();
    let mut chi = directed_gradient(&state.c, params.sensitivity_kind);
    let rv = rho.values();
    for d in 0..g.dims() {
        par::update(chi.comp_mut(d), |idx, gd| {
            let fc = face_coords_of(&g, d, idx);
            if g.is_wall_face(d, fc) {
                return 0.0;
            }
            let (lo, hi) = face_cells(&g, d, fc);
            params.c_s * 0.5 * (rv[lo] + rv[hi]) * gd
        });
    }
    let adv = if cfg.advection == AdvectionScheme::Muscl { 2.0 } else { 1.0 };
    let diff = if cfg.diffusion == DiffusionMode::Explicit { diffusion_rate(&g) } else { 0.0 };
    let u = &state.u;
    par::max(g.num_cells(), |c| adv * outflow_rate(u, c) + outflow_rate(&chi, c)) + diff
}

fn c_rate(state: &SimState, cfg: &TransportConfig) -> f64 {
    let g = *state.grid();
    let adv = if cfg.advection == AdvectionScheme::Muscl { 2.0 } else { 1.0 };
    let diff = if cfg.diffusion == DiffusionMode::Explicit { diffusion_rate(&g) } else { 0.0 };
    let u = &state.u;
    par::max(g.num_cells(), |c| adv * outflow_rate(u, c)) + diff
}

fn bound(rate: f64) -> f64 {
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Positivity/CFL bound for both transport steps; `+∞` when nothing constrains `dt`.
pub fn stable_dt(state: &SimState, params: &ModelParams, cfg: &TransportConfig) -> Result<f64> {
    let rho = params.cutoff_field(state.grid())?;
    Ok(bound(n_rate(state, params, cfg, &rho).max(c_rate(state, cfg))))
}

fn check_dt(dt: f64, rate: f64) -> Result<()> {
    if dt * rate > 1.0 + 1e-12 {
        Err(Error::Cfl {
            dt,
            suggested: 1.0 / rate,
        })
    } else {
        Ok(())
    }
}

fn check_nonnegative(name: &str, f: &ScalarField) -> Result<()> {
    if !f.all_finite() {
        return Err(Error::State(format!("{name} is not finite")));
    }
    let m = f.min();
    if m < 0.0 {
        return Err(Error::State(format!("{name} became negative (min {m:e})")));
    }
    Ok(())
}

/// `f − dt ∇·J`.
fn conservative_update(f: &ScalarField, flux: &VectorField, dt: f64) -> ScalarField {
    let div = divergence(flux);
    let dv = div.values();
    let mut out = f.clone();
    par::update(out.values_mut(), |i, v| v - dt * dv[i]);
    out
}

fn cell_norm(g: &GridSpec, x: &[f64]) -> f64 {
    (par::dot(x, x) * g.cell_volume()).sqrt()
}

/// Solve `(I − dt Δ_h) x = b` for `b ≥ 0` with a nonnegative, mass-exact result.
///
/// CG starts at `x = b`, which keeps `Σx = Σb` in exact arithmetic. Should
/// the iterate still dip below zero where the solution is vanishingly
/// small, one Jacobi sweep from its positive part (nonnegative because the
/// matrix is an M-matrix) followed by a mass rescale restores both
/// properties; the residual is then re-checked.
pub(crate) fn diffuse_implicit(b: &ScalarField, dt: f64, rel_tol: f64) -> Result<ScalarField> {
    let g = *b.grid();
    let bv = b.values();
    let norm_b = cell_norm(&g, bv);
    if norm_b == 0.0 {
        return Ok(b.clone());
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        laplacian_into(&g, v, out);
        par::update(out, |i, y| v[i] - dt * y);
    };
    let tol = rel_tol * norm_b;
    let mut x = bv.to_vec();
    let mut cg_tol = 0.1 * tol;
    let mass_b = par::sum(bv.len(), |i| bv[i]);
    let mut scratch = vec![0.0; x.len()];
    let fd = Separable::cells(&g);
    for _ in 0..4 {
        preconditioned_cg(
            apply,
            |_| {},
            |r: &[f64], z: &mut [f64]| fd.solve(1.0, dt, r, z),
            bv,
            &mut x,
            CgSettings {
                name: "implicit diffusion",
                tol: cg_tol,
                weight: g.cell_volume(),
                max_iter: 4 * bv.len() + 100,
            },
        )?;
        if par::max(x.len(), |i| -x[i]) <= 0.0 {
            return ScalarField::from_values(&g, x);
        }
        jacobi_positive(&g, dt, bv, &mut x);
        let mass_x = par::sum(x.len(), |i| x[i]);
        if mass_x > 0.0 {
            let s = mass_b / mass_x;
            par::update(&mut x, |_, v| v * s);
        }
        apply(&x, &mut scratch);
        par::update(&mut scratch, |i, y| bv[i] - y);
        if cell_norm(&g, &scratch) <= tol {
            return ScalarField::from_values(&g, x);
        }
        cg_tol *= 0.01;
    }
    Err(Error::NoConvergence {
        solver: "implicit diffusion (positivity)",
        iterations: 0,
        residual: cell_norm(&g, &scratch),
        tol,
    })
}

/// One Jacobi sweep for `(I − dtΔ_h)x = b` started from `max(x, 0)`.
fn jacobi_positive(g: &GridSpec, dt: f64, b: &[f64], x: &mut [f64]) {
    let xp: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let periodic = g.is_periodic();
    let cells = g.cells();
    let dims = g.dims();
    par::fill(x, |c| {
        let cc = g.coords(c);
        let mut diag = 1.0;
        let mut off = 0.0;
        for d in 0..dims {
            let w = dt / (g.h(d) * g.h(d));
            for delta in [-1isize, 1] {
                if let Some(q) = shifted(cc, d, delta, cells, periodic) {
                    diag += w;
                    off += w * xp[g.index(q[0], q[1], q[2])];
                }
            }
        }
        (b[c] + off) / diag
    });
}

/// One step of the `n`-equation with the velocity and signal in `state`.
pub fn step_n(state: &SimState, params: &ModelParams, cfg: &TransportConfig) -> Result<ScalarField> {
    cfg.validate()?;
    check_nonnegative("n", &state.n)?;
    let g = *state.grid();
    let rho = params.cutoff_field(&g)?;
    check_dt(cfg.dt, n_rate(state, params, cfg, &rho))?;

    let mut flux = advective_flux(&state.n, &state.u, cfg.advection);
    flux.add_scaled(1.0, &chemotactic_flux_with(&state.n, &state.c, params, &rho, cfg.limiter)?);
    if cfg.diffusion == DiffusionMode::Explicit {
        flux.add_scaled(-1.0, &gradient(&state.n));
    }
    let mut n1 = conservative_update(&state.n, &flux, cfg.dt);
    if cfg.limiter {
        check_nonnegative("n", &n1)?;
    }
    if cfg.diffusion == DiffusionMode::Implicit {
        n1 = diffuse_implicit(&n1, cfg.dt, cfg.diffusion_tol)?;
    }
    if cfg.limiter {
        check_nonnegative("n", &n1)?;
    }
    Ok(n1)
}

/// One step of the `c`-equation: explicit advection (and diffusion), exact
/// integrating factor for `−c + F_ε(n)`, then implicit diffusion if selected.
pub fn step_c(state: &SimState, params: &ModelParams, cfg: &TransportConfig) -> Result<ScalarField> {
    cfg.validate()?;
    check_nonnegative("n", &state.n)?;
    check_nonnegative("c", &state.c)?;
    check_dt(cfg.dt, c_rate(state, cfg))?;

    let mut flux = advective_flux(&state.c, &state.u, cfg.advection);
    if cfg.diffusion == DiffusionMode::Explicit {
        flux.add_scaled(-1.0, &gradient(&state.c));
    }
    let mut c1 = conservative_update(&state.c, &flux, cfg.dt);
    check_nonnegative("c", &c1)?;

    let decay = (-cfg.dt).exp();
    let gain = -(-cfg.dt).exp_m1();
    let nv = state.n.values();
    let eps = params.eps;
    par::update(c1.values_mut(), |i, v| v * decay + f_eps_unchecked(eps, nv[i]) * gain);

    if cfg.diffusion == DiffusionMode::Implicit {
        c1 = diffuse_implicit(&c1, cfg.dt, cfg.diffusion_tol)?;
    }
    check_nonnegative("c", &c1)?;
    Ok(c1)
}
