//! Regularization operators of the approximate system: the logarithmic
//! source `F_ε`, the saturated sensitivity `S` and its cut-off version
//! `S_ε = ρ_ε S`, and the Yosida smoothing `Y_ε = (I + εA)^{-1}` of the
//! advecting velocity.
//!
//! `eps = 0` is always admitted and switches every regularization off:
//! `F_0 = id`, `ρ ≡ 1`, `Y_0 = P` (Helmholtz projection).

use crate::error::{Error, Result};
use crate::fluid::project;
use crate::grid::{vector_laplacian, GridSpec, ScalarField, VectorField};
use crate::par;
use crate::separable::Separable;

/// Chemotactic sensitivity shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityKind {
    /// `S = C_S (1+n)^{-α} I`.
    ScalarSaturated,
    /// `S = C_S (1+n)^{-α} R(angle)`, a rotation in the x-y plane.
    TensorRotational { angle: f64 },
}

/// External potential `φ` driving the fluid through `n ∇φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `φ(x) = g · x`, so `∇φ = g`.
    Gravity(Vec<f64>),
    /// Cell-centred samples of `φ`; the gradient is taken on faces.
    Tabulated(ScalarField),
}

impl Potential {
    /// `∇φ` on the velocity faces (zero on walls).
    pub fn face_gradient(&self, grid: &GridSpec) -> Result<VectorField> {
        match self {
            Potential::Gravity(g) => {
                if g.len() != grid.dims() {
                    return Err(Error::Domain(format!(
                        "gravity vector has {} components for a {}-d grid",
                        g.len(),
                        grid.dims()
                    )));
                }
                Ok(VectorField::uniform(grid, g))
            }
            Potential::Tabulated(phi) => {
                if phi.grid() != grid {
                    return Err(Error::Domain("tabulated potential lives on a different grid".into()));
                }
                Ok(crate::grid::gradient(phi))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Saturation exponent `α ≥ 0`.
    pub alpha: f64,
    /// Sensitivity scale `C_S > 0`.
    pub c_s: f64,
    /// Convection strength; 0 selects the Stokes system.
    pub kappa: f64,
    /// Regularization level `ε ≥ 0`.
    pub eps: f64,
    pub phi: Potential,
    pub sensitivity_kind: SensitivityKind,
    /// Cut-off ramp width; `None` means `eps · min(box length)`.
    pub cutoff_width: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            c_s: 1.0,
            kappa: 0.0,
            eps: 0.0,
            phi: Potential::Gravity(vec![0.0, -1.0]),
            sensitivity_kind: SensitivityKind::ScalarSaturated,
            cutoff_width: None,
        }
    }
}

impl ModelParams {
    /// Every violated hypothesis, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            v.push(format!("params.alpha = {} violates the hypothesis α ≥ 0", self.alpha));
        }
        if !(self.c_s > 0.0 && self.c_s.is_finite()) {
            v.push(format!("params.c_s = {} must be positive (C_S > 0)", self.c_s));
        }
        if !self.kappa.is_finite() {
            v.push("params.kappa must be finite".into());
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            v.push(format!("params.eps = {} must be ≥ 0", self.eps));
        }
        match &self.phi {
            Potential::Gravity(g) if g.iter().any(|x| !x.is_finite()) => {
                v.push("params.phi gradient must be bounded (φ ∈ W^{1,∞})".into())
            }
            Potential::Tabulated(f) if !f.all_finite() => {
                v.push("params.phi samples must be finite (φ ∈ W^{1,∞})".into())
            }
            _ => {}
        }
        if let SensitivityKind::TensorRotational { angle } = self.sensitivity_kind {
            if !angle.is_finite() {
                v.push("rotation angle must be finite".into());
            }
        }
        if let Some(w) = self.cutoff_width {
            if !(w > 0.0) {
                v.push(format!("params.cutoff_width = {w} must be positive"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// The cut-off field used by the chemotactic flux (ones when `eps = 0`).
    pub fn cutoff_field(&self, grid: &GridSpec) -> Result<ScalarField> {
        if self.eps == 0.0 || grid.is_periodic() {
            return Ok(ScalarField::constant(grid, 1.0));
        }
        let min_len = grid.lengths()[..grid.dims()]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let width = self.cutoff_width.unwrap_or(self.eps * min_len);
        cutoff_rho(grid, CutoffSpec { width })
    }

    /// `C_S (1+n)^{-α}`.
    #[inline]
    pub fn saturation(&self, n: f64) -> f64 {
        self.c_s * (1.0 + n).powf(-self.alpha)
    }
}

/// `F_ε(s) = ln(1 + εs)/ε`, with `F_0(s) = s`.
pub fn f_eps(eps: f64, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("F_eps needs s >= 0, got {s}")));
    }
    if eps < 0.0 {
        return Err(Error::Domain(format!("F_eps needs eps >= 0, got {eps}")));
    }
    Ok(f_eps_unchecked(eps, s))
}

#[inline]
pub(crate) fn f_eps_unchecked(eps: f64, s: f64) -> f64 {
    if eps == 0.0 {
        s
    } else {
        (eps * s).ln_1p() / eps
    }
}

/// `F'_ε(s) = 1/(1 + εs)`.
pub fn f_eps_prime(eps: f64, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("F'_eps needs s >= 0, got {s}")));
    }
    if eps < 0.0 {
        return Err(Error::Domain(format!("F'_eps needs eps >= 0, got {eps}")));
    }
    Ok(f_eps_prime_unchecked(eps, s))
}

#[inline]
pub(crate) fn f_eps_prime_unchecked(eps: f64, s: f64) -> f64 {
    1.0 / (1.0 + eps * s)
}

/// A `dims × dims` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor {
    pub dims: usize,
    pub m: [[f64; 3]; 3],
}

impl Tensor {
    pub fn identity(dims: usize) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(dims) {
            row[i] = 1.0;
        }
        Self { dims, m }
    }

    /// Rotation by `angle` in the x-y plane (about the z axis in 3-d).
    pub fn rotation(dims: usize, angle: f64) -> Self {
        let mut t = Self::identity(dims);
        let (s, c) = angle.sin_cos();
        t.m[0][0] = c;
        t.m[0][1] = -s;
        t.m[1][0] = s;
        t.m[1][1] = c;
        t
    }

    pub fn scaled(mut self, a: f64) -> Self {
        for row in self.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= a;
            }
        }
        self
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.dims) {
            *o = (0..self.dims).map(|j| self.m[i][j] * v[j]).sum();
        }
        out
    }

    /// Spectral norm (largest singular value), via power iteration on `MᵀM`.
    pub fn operator_norm(&self) -> f64 {
        let d = self.dims;
        let mut mtm = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                mtm[i][j] = (0..d).map(|k| self.m[k][i] * self.m[k][j]).sum();
            }
        }
        let mut v = [1.0, 0.7, 0.3];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mut w = [0.0; 3];
            for i in 0..d {
                w[i] = (0..d).map(|j| mtm[i][j] * v[j]).sum();
            }
            let nrm = (0..d).map(|i| w[i] * w[i]).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            lambda = nrm;
            for i in 0..d {
                v[i] = w[i] / nrm;
            }
        }
        lambda.sqrt()
    }
}

/// Sensitivity tensor `S(x, n, c)`; bounded by `C_S (1+n)^{-α}` in operator norm.
pub fn sensitivity(params: &ModelParams, dims: usize, _x: [f64; 3], n: f64, _c: f64) -> Result<Tensor> {
    if !(n >= 0.0) {
        return Err(Error::Domain(format!("sensitivity needs n >= 0, got {n}")));
    }
    let mag = params.saturation(n);
    Ok(match params.sensitivity_kind {
        SensitivityKind::ScalarSaturated => Tensor::identity(dims).scaled(mag),
        SensitivityKind::TensorRotational { angle } => Tensor::rotation(dims, angle).scaled(mag),
    })
}

/// Boundary layer over which `ρ_ε` ramps from 0 to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub width: f64,
}

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` on `[0, 1]`, clamped outside.
pub fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (s * 6.0 - 15.0) + 10.0)
}

/// Cut-off `ρ_ε` on cell centres.
///
/// The ramp argument is `(d − h/2)/width` with `d` the wall distance of the
/// cell centre, so wall-adjacent cells are exactly 0 and cells deeper than
/// `width + h/2` are exactly 1.
pub fn cutoff_rho(grid: &GridSpec, spec: CutoffSpec) -> Result<ScalarField> {
    let min_len = grid.lengths()[..grid.dims()]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(spec.width > 0.0) || spec.width >= 0.5 * min_len {
        return Err(Error::Config(vec![format!(
            "cut-off width {} must lie in (0, {}) (half the smallest box length)",
            spec.width,
            0.5 * min_len
        )]));
    }
    if grid.is_periodic() {
        return Ok(ScalarField::constant(grid, 1.0));
    }
    let g = *grid;
    Ok(ScalarField::from_fn(grid, move |x| {
        let mut s = f64::INFINITY;
        for d in 0..g.dims() {
            let dist = x[d].min(g.lengths()[d] - x[d]);
            s = s.min((dist - 0.5 * g.h(d)).max(0.0) / spec.width);
        }
        smoothstep5(s)
    }))
}

/// Yosida smoothing `v = (I + εA_h)^{-1} P w` with `A_h = −P Δ_h`.
///
/// Projected conjugate gradient on the divergence-free subspace, preconditioned
/// by `P (I − εΔ_h)^{-1}` (fast diagonalization per component): every
/// residual update is projected, and the iterate is projected once more at
/// the end. The solve stops once the projected residual is below
/// `solver_tol · ‖P w‖`; the inner projections are held to `‖∇·v‖₂ ≤
/// max(10⁻³ solver_tol, 10³ ε_mach) · ‖v‖ / h_min`, which stays above the
/// rounding floor of the divergence.
pub fn yosida(grid: &GridSpec, eps: f64, w: &VectorField, solver_tol: f64) -> Result<VectorField> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("yosida needs eps >= 0, got {eps}")));
    }
    if !(solver_tol > 0.0) {
        return Err(Error::Domain(format!("yosida needs a positive tolerance, got {solver_tol}")));
    }
    if w.grid() != grid {
        return Err(Error::Domain("yosida input lives on a different grid".into()));
    }
    let rel = (1e-3 * solver_tol).max(1e3 * f64::EPSILON);
    let h_min = grid.min_h();
    let proj = |v: &VectorField| {
        let tol = (rel * v.norm_l2() / h_min).max(f64::MIN_POSITIVE);
        project(v, tol, None).map(|(p, _, _)| p)
    };
    let b = proj(w)?;
    let target = solver_tol * b.norm_l2();
    if eps == 0.0 || target == 0.0 {
        return Ok(b);
    }
    let apply = |v: &VectorField| {
        let mut out = vector_laplacian(v);
        out.scale(-eps);
        out.add_scaled(1.0, v);
        out
    };
    let true_residual = |x: &VectorField| {
        let mut t = b.clone();
        t.add_scaled(-1.0, &apply(x));
        proj(&t)
    };
    let fd: Vec<Separable> = (0..grid.dims()).map(|d| Separable::faces(grid, d)).collect();
    let precond = |r: &VectorField| -> Result<VectorField> {
        let comps = fd
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let mut z = vec![0.0; r.comp(d).len()];
                s.solve(1.0, eps, r.comp(d), &mut z);
                z
            })
            .collect();
        proj(&VectorField::from_components(grid, comps)?)
    };
    let mut x = precond(&b)?;
    let mut r = true_residual(&x)?;
    let mut rr = r.dot(&r);
    let mut z = precond(&r)?;
    let mut rz = r.dot(&z);
    let max_iter = 10 * grid.num_cells().max(50);
    let mut p = z.clone();
    let mut restart_res = f64::INFINITY;
    let mut iters = 0;
    loop {
        if rr.sqrt() <= target {
            // confirm against the true residual; the recursive one carries
            // the error of every inner projection
            r = true_residual(&x)?;
            rr = r.dot(&r);
            let res = rr.sqrt();
            if res <= target {
                break;
            }
            if res >= 0.5 * restart_res {
                return Err(Error::NoConvergence {
                    solver: "yosida",
                    iterations: iters,
                    residual: res,
                    tol: target,
                });
            }
            restart_res = res;
            z = precond(&r)?;
            rz = r.dot(&z);
            p = z.clone();
        }
        iters += 1;
        if iters > max_iter {
            return Err(Error::NoConvergence {
                solver: "yosida",
                iterations: max_iter,
                residual: rr.sqrt(),
                tol: target,
            });
        }
        let q = apply(&p);
        let pq = p.dot(&q);
        if !(pq > 0.0) || !(rz > 0.0) {
            break;
        }
        let step = rz / pq;
        x.add_scaled(step, &p);
        r.add_scaled(-step, &proj(&q)?);
        rr = r.dot(&r);
        z = precond(&r)?;
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        let mut p_new = z.clone();
        p_new.add_scaled(beta, &p);
        p = p_new;
        rz = rz_new;
    }
    proj(&x)
}

/// Fraction of cells with `ρ` outside `[0,1]` (diagnostic helper for tests).
pub fn cutoff_violations(rho: &ScalarField) -> usize {
    let v = rho.values();
    par::sum(v.len(), |i| if (0.0..=1.0).contains(&v[i]) { 0.0 } else { 1.0 }) as usize
}
