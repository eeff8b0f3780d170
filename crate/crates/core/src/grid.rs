//! Staggered (MAC) box grid, field storage and the discrete calculus.
//!
//! Scalars live at cell centres, velocity components on the cell faces
//! normal to their axis. Cells are stored row-major with x fastest:
//! `index(i, j, k) = i + nx * (j + ny * k)`. Face arrays of component `d`
//! use the same layout with `nx`, `ny` or `nz` replaced by the face count
//! along axis `d` (`n_d + 1` with walls, `n_d` when periodic).
//!
//! Walls use mirror ghosts for scalars (homogeneous Neumann) and odd ghosts
//! for tangential velocity (no-slip); normal velocity on wall faces is
//! identically zero and never treated as an unknown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarBc {
    Neumann,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityBc {
    NoSlip,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dims: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
    bc_scalar: ScalarBc,
    bc_velocity: VelocityBc,
}

impl GridSpec {
    /// Build and validate a grid. `cells` and `lengths` must have `dims`
    /// entries; unused axes get one cell of unit length.
    pub fn new(
        dims: usize,
        cells: &[usize],
        lengths: &[f64],
        bc_scalar: ScalarBc,
        bc_velocity: VelocityBc,
    ) -> Result<Self> {
        let mut errs = Vec::new();
        if dims != 2 && dims != 3 {
            errs.push(format!("grid dims must be 2 or 3, got {dims}"));
        }
        if cells.len() != dims || lengths.len() != dims {
            errs.push(format!(
                "grid needs {dims} cell counts and box lengths, got {} and {}",
                cells.len(),
                lengths.len()
            ));
        }
        if cells.iter().any(|&c| c == 0) {
            errs.push("cells per axis must be positive".into());
        }
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            errs.push("box lengths must be positive and finite".into());
        }
        let periodic_s = bc_scalar == ScalarBc::Periodic;
        let periodic_v = bc_velocity == VelocityBc::Periodic;
        if periodic_s != periodic_v {
            errs.push("periodic and wall boundary conditions cannot be mixed".into());
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        c[..dims].copy_from_slice(cells);
        l[..dims].copy_from_slice(lengths);
        Ok(Self {
            dims,
            cells: c,
            lengths: l,
            bc_scalar,
            bc_velocity,
        })
    }

    /// `n^dims` cells on the box `[0, length]^dims`.
    pub fn uniform(dims: usize, n: usize, length: f64, periodic: bool) -> Result<Self> {
        let (s, v) = if periodic {
            (ScalarBc::Periodic, VelocityBc::Periodic)
        } else {
            (ScalarBc::Neumann, VelocityBc::NoSlip)
        };
        Self::new(dims, &vec![n; dims], &vec![length; dims], s, v)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }
    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }
    pub fn bc_scalar(&self) -> ScalarBc {
        self.bc_scalar
    }
    pub fn bc_velocity(&self) -> VelocityBc {
        self.bc_velocity
    }
    pub fn is_periodic(&self) -> bool {
        self.bc_scalar == ScalarBc::Periodic
    }

    pub fn h(&self, d: usize) -> f64 {
        self.lengths[d] / self.cells[d] as f64
    }

    pub fn min_h(&self) -> f64 {
        (0..self.dims).map(|d| self.h(d)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims).map(|d| self.h(d)).product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths[..self.dims].iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Shape of the face array of velocity component `d`.
    pub fn face_shape(&self, d: usize) -> [usize; 3] {
        let mut s = self.cells;
        if !self.is_periodic() {
            s[d] += 1;
        }
        s
    }

    pub fn num_faces(&self, d: usize) -> usize {
        self.face_shape(d).iter().product()
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for d in 0..3 {
            x[d] = (c[d] as f64 + 0.5) * self.h(d);
        }
        x
    }

    /// Position of face `f` (in face-array coordinates) of component `d`.
    pub fn face_center(&self, d: usize, f: [usize; 3]) -> [f64; 3] {
        let mut x = self.cell_center(f);
        x[d] = f[d] as f64 * self.h(d);
        x
    }

    /// True if face `f` of component `d` lies on a wall.
    #[inline]
    pub fn is_wall_face(&self, d: usize, f: [usize; 3]) -> bool {
        !self.is_periodic() && (f[d] == 0 || f[d] == self.cells[d])
    }

    fn strides(&self) -> [usize; 3] {
        [1, self.cells[0], self.cells[0] * self.cells[1]]
    }
}

fn face_index(shape: [usize; 3], f: [usize; 3]) -> usize {
    f[0] + shape[0] * (f[1] + shape[1] * f[2])
}

fn face_coords(shape: [usize; 3], idx: usize) -> [usize; 3] {
    [
        idx % shape[0],
        (idx / shape[0]) % shape[1],
        idx / (shape[0] * shape[1]),
    ]
}

/// Cell-centred scalar field (n, c, P, potentials).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, v: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![v; grid.num_cells()],
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Domain(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    /// Sample `f` at cell centres.
    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; grid.num_cells()];
        par::fill(&mut values, |i| f(grid.cell_center(grid.coords(i))));
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        -par::max(self.values.len(), |i| -self.values[i])
    }
    pub fn max(&self) -> f64 {
        par::max(self.values.len(), |i| self.values[i])
    }
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
    /// Discrete `L²` inner product `Σ a b · vol`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        par::dot(&self.values, &other.values) * self.grid.cell_volume()
    }
}

/// Face-centred vector field (velocity, gradients, fluxes).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        let comps = (0..grid.dims())
            .map(|d| vec![0.0; grid.num_faces(d)])
            .collect();
        Self {
            grid: *grid,
            comps,
        }
    }

    pub fn from_components(grid: &GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dims()
            || comps
                .iter()
                .enumerate()
                .any(|(d, c)| c.len() != grid.num_faces(d))
        {
            return Err(Error::Domain("vector field component sizes do not match the grid".into()));
        }
        Ok(Self {
            grid: *grid,
            comps,
        })
    }

    /// Sample component `d` of `f` at face centres; wall faces are set to 0.
    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Self
    where
        F: Fn(usize, [f64; 3]) -> f64 + Sync + Send,
    {
        let mut v = Self::zeros(grid);
        for d in 0..grid.dims() {
            let shape = grid.face_shape(d);
            par::fill(&mut v.comps[d], |idx| {
                let fc = face_coords(shape, idx);
                if grid.is_wall_face(d, fc) {
                    0.0
                } else {
                    f(d, grid.face_center(d, fc))
                }
            });
        }
        v
    }

    /// Constant vector on every non-wall face.
    pub fn uniform(grid: &GridSpec, value: &[f64]) -> Self {
        Self::from_fn(grid, |d, _| value[d])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn comp(&self, d: usize) -> &[f64] {
        &self.comps[d]
    }
    pub fn comp_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.comps[d]
    }
    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }
    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// Discrete `L²` inner product over all faces.
    pub fn dot(&self, other: &VectorField) -> f64 {
        let mut s = 0.0;
        for d in 0..self.comps.len() {
            s += par::dot(&self.comps[d], &other.comps[d]);
        }
        s * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &VectorField) {
        for d in 0..self.comps.len() {
            let o = &other.comps[d];
            par::update(&mut self.comps[d], |i, v| v + a * o[i]);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.comps {
            par::update(c, |_, v| a * v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| par::max(c.len(), |i| c[i].abs()))
            .fold(0.0, f64::max)
    }

    /// Reset wall faces to zero (no penetration).
    pub fn zero_wall_faces(&mut self) {
        if self.grid.is_periodic() {
            return;
        }
        let g = self.grid;
        for d in 0..g.dims() {
            let shape = g.face_shape(d);
            par::update(&mut self.comps[d], |idx, v| {
                if g.is_wall_face(d, face_coords(shape, idx)) {
                    0.0
                } else {
                    v
                }
            });
        }
    }
}

pub(crate) fn face_idx(grid: &GridSpec, d: usize, f: [usize; 3]) -> usize {
    face_index(grid.face_shape(d), f)
}

pub(crate) fn face_coords_of(grid: &GridSpec, d: usize, idx: usize) -> [usize; 3] {
    face_coords(grid.face_shape(d), idx)
}

/// Step `f` by `delta` along axis `e` with periodic wrap; `None` off-grid.
#[inline]
pub(crate) fn shifted(f: [usize; 3], e: usize, delta: isize, shape: [usize; 3], periodic: bool) -> Option<[usize; 3]> {
    let mut q = f;
    let m = shape[e] as isize;
    let v = f[e] as isize + delta;
    if periodic {
        q[e] = v.rem_euclid(m) as usize;
        Some(q)
    } else if v < 0 || v >= m {
        None
    } else {
        q[e] = v as usize;
        Some(q)
    }
}

/// Component `e` of `w` averaged to face `f` of component `d` (four-point
/// average over the adjacent `e`-faces; `e == d` is the face value itself).
#[inline]
pub(crate) fn cross_average(w: &VectorField, d: usize, e: usize, f: [usize; 3]) -> f64 {
    let g = w.grid();
    if e == d {
        return w.comp(d)[face_idx(g, d, f)];
    }
    let periodic = g.is_periodic();
    let shape_e = g.face_shape(e);
    let we = w.comp(e);
    let mut s = 0.0;
    for dd in [-1isize, 0] {
        let Some(a) = shifted(f, d, dd, g.cells(), periodic) else { continue };
        for de in [0isize, 1] {
            if let Some(b) = shifted(a, e, de, shape_e, periodic) {
                s += we[face_idx(g, e, b)];
            }
        }
    }
    0.25 * s
}

/// `∫_Ω f ≈ Σ f_i · vol` (midpoint rule).
pub fn integrate(f: &ScalarField) -> f64 {
    let v = f.values();
    par::sum(v.len(), |i| v[i]) * f.grid().cell_volume()
}

/// Face differences `(f_{i} − f_{i−1}) / h`; zero on wall faces.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let x = f.values();
    let st = g.strides();
    let mut out = VectorField::zeros(&g);
    for d in 0..g.dims() {
        let shape = g.face_shape(d);
        let n = g.cells()[d];
        let inv_h = 1.0 / g.h(d);
        let periodic = g.is_periodic();
        par::fill(&mut out.comps[d], |idx| {
            let fc = face_coords(shape, idx);
            if periodic {
                let c = g.index(fc[0], fc[1], fc[2]);
                let m = if fc[d] == 0 { c + (n - 1) * st[d] } else { c - st[d] };
                (x[c] - x[m]) * inv_h
            } else if fc[d] == 0 || fc[d] == n {
                0.0
            } else {
                let c = g.index(fc[0], fc[1], fc[2]);
                (x[c] - x[c - st[d]]) * inv_h
            }
        });
    }
    out
}

/// Per-cell flux balance `Σ_d (v_{d,+} − v_{d,−}) / h_d`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let mut out = ScalarField::zeros(&g);
    let periodic = g.is_periodic();
    let inv_h: Vec<f64> = (0..g.dims()).map(|d| 1.0 / g.h(d)).collect();
    par::fill(&mut out.values, |c| {
        let cc = g.coords(c);
        let mut acc = 0.0;
        for d in 0..g.dims() {
            let shape = g.face_shape(d);
            let lo = face_index(shape, cc);
            let mut up = cc;
            up[d] += 1;
            if periodic && up[d] == g.cells()[d] {
                up[d] = 0;
            }
            let hi = face_index(shape, up);
            acc += (v.comps[d][hi] - v.comps[d][lo]) * inv_h[d];
        }
        acc
    });
    out
}

/// Cell-centred Laplacian with mirror (Neumann) or periodic ghosts.
///
/// Evaluated with the same operation order as `divergence(gradient(f))`,
/// so the two agree bit for bit.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid());
    laplacian_into(f.grid(), f.values(), &mut out.values);
    out
}

pub(crate) fn laplacian_into(g: &GridSpec, x: &[f64], out: &mut [f64]) {
    let n = g.cells();
    let st = g.strides();
    let dims = g.dims();
    let periodic = g.is_periodic();
    let inv_h: [f64; 3] = [1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)];
    par::for_rows(out, n[0], |r, row| {
        let j = r % n[1];
        let k = r / n[1];
        let base = r * n[0];
        let pos = [0usize, j, k];
        for (i, o) in row.iter_mut().enumerate() {
            let c = base + i;
            let xc = x[c];
            let mut p = pos;
            p[0] = i;
            let mut acc = 0.0;
            for d in 0..dims {
                let (gp, gm) = if periodic {
                    let up = if p[d] + 1 == n[d] { c - (n[d] - 1) * st[d] } else { c + st[d] };
                    let dn = if p[d] == 0 { c + (n[d] - 1) * st[d] } else { c - st[d] };
                    ((x[up] - xc) * inv_h[d], (xc - x[dn]) * inv_h[d])
                } else {
                    let gp = if p[d] + 1 == n[d] { 0.0 } else { (x[c + st[d]] - xc) * inv_h[d] };
                    let gm = if p[d] == 0 { 0.0 } else { (xc - x[c - st[d]]) * inv_h[d] };
                    (gp, gm)
                };
                acc += (gp - gm) * inv_h[d];
            }
            *o = acc;
        }
    });
}

/// Component-wise Laplacian of a face-centred velocity with no-slip or
/// periodic ghosts. Wall faces map to zero.
pub fn vector_laplacian(u: &VectorField) -> VectorField {
    let g = *u.grid();
    let mut out = VectorField::zeros(&g);
    for d in 0..g.dims() {
        vector_laplacian_comp_into(&g, d, &u.comps[d], &mut out.comps[d]);
    }
    out
}

pub(crate) fn vector_laplacian_comp_into(g: &GridSpec, d: usize, x: &[f64], out: &mut [f64]) {
    let shape = g.face_shape(d);
    let st = [1, shape[0], shape[0] * shape[1]];
    let dims = g.dims();
    let periodic = g.is_periodic();
    let inv_h: [f64; 3] = [1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)];
    par::for_rows(out, shape[0], |r, row| {
        let j = r % shape[1];
        let k = r / shape[1];
        let base = r * shape[0];
        for (i, o) in row.iter_mut().enumerate() {
            let p = [i, j, k];
            if !periodic && (p[d] == 0 || p[d] + 1 == shape[d]) {
                *o = 0.0;
                continue;
            }
            let c = base + i;
            let xc = x[c];
            let mut acc = 0.0;
            for e in 0..dims {
                let m = shape[e];
                let (gp, gm) = if periodic {
                    let up = if p[e] + 1 == m { c - (m - 1) * st[e] } else { c + st[e] };
                    let dn = if p[e] == 0 { c + (m - 1) * st[e] } else { c - st[e] };
                    ((x[up] - xc) * inv_h[e], (xc - x[dn]) * inv_h[e])
                } else if e == d {
                    // neighbours exist; wall faces hold zero
                    ((x[c + st[e]] - xc) * inv_h[e], (xc - x[c - st[e]]) * inv_h[e])
                } else {
                    // odd ghost across the wall: u_ghost = -u
                    let gp = if p[e] + 1 == m { -2.0 * xc * inv_h[e] } else { (x[c + st[e]] - xc) * inv_h[e] };
                    let gm = if p[e] == 0 { 2.0 * xc * inv_h[e] } else { (xc - x[c - st[e]]) * inv_h[e] };
                    (gp, gm)
                };
                acc += (gp - gm) * inv_h[e];
            }
            *o = acc;
        }
    });
}

/// Discrete `∫|∇f|²` from face differences.
pub fn scalar_dirichlet_form(f: &ScalarField) -> f64 {
    let g = gradient(f);
    g.dot(&g)
}

/// Discrete `∫|∇u|² = −⟨u, Δ_h u⟩`.
pub fn vector_dirichlet_form(u: &VectorField) -> f64 {
    -u.dot(&vector_laplacian(u))
}

/// Bilinear form `B(a, b) = −⟨a, Δ_h b⟩` (symmetric).
pub fn vector_dirichlet_bilinear(a: &VectorField, b: &VectorField) -> f64 {
    -a.dot(&vector_laplacian(b))
}

/// `max |∂_e u_d|` over all difference quotients, wall ghosts included.
pub fn velocity_gradient_sup(u: &VectorField) -> f64 {
    let g = *u.grid();
    let periodic = g.is_periodic();
    let mut best = 0.0f64;
    for d in 0..g.dims() {
        let shape = g.face_shape(d);
        let x = u.comp(d);
        for e in 0..g.dims() {
            let inv_h = 1.0 / g.h(e);
            let m = shape[e];
            let s = par::max(x.len(), |idx| {
                let p = face_coords(shape, idx);
                if periodic {
                    let mut q = p;
                    q[e] = (p[e] + 1) % m;
                    (x[face_index(shape, q)] - x[idx]).abs() * inv_h
                } else if e == d {
                    if p[e] + 1 == m {
                        0.0
                    } else {
                        let mut q = p;
                        q[e] += 1;
                        (x[face_index(shape, q)] - x[idx]).abs() * inv_h
                    }
                } else {
                    let mut v = 0.0f64;
                    if p[e] == 0 || p[e] + 1 == m {
                        v = 2.0 * x[idx].abs() * inv_h;
                    }
                    if p[e] + 1 < m {
                        let mut q = p;
                        q[e] += 1;
                        v = v.max((x[face_index(shape, q)] - x[idx]).abs() * inv_h);
                    }
                    v
                }
            });
            best = best.max(s);
        }
    }
    best
}

/// Cell-centred gradient magnitude from averaged face differences.
pub fn cell_gradient_magnitude(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let grad = gradient(f);
    let periodic = g.is_periodic();
    let mut out = ScalarField::zeros(&g);
    par::fill(&mut out.values, |c| {
        let cc = g.coords(c);
        let mut s = 0.0;
        for d in 0..g.dims() {
            let shape = g.face_shape(d);
            let lo = grad.comps[d][face_index(shape, cc)];
            let mut up = cc;
            up[d] += 1;
            if periodic && up[d] == g.cells()[d] {
                up[d] = 0;
            }
            let hi = grad.comps[d][face_index(shape, up)];
            let a = 0.5 * (lo + hi);
            s += a * a;
        }
        s.sqrt()
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(g: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
        let v = (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_values(g, v).unwrap()
    }

    fn random_vector(g: &GridSpec, rng: &mut ChaCha8Rng) -> VectorField {
        let mut v = VectorField::zeros(g);
        for d in 0..g.dims() {
            for x in v.comp_mut(d) {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        v.zero_wall_faces();
        v
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(1, &[4], &[1.0], ScalarBc::Neumann, VelocityBc::NoSlip).is_err());
        assert!(GridSpec::new(2, &[4, 0], &[1.0, 1.0], ScalarBc::Neumann, VelocityBc::NoSlip).is_err());
        assert!(GridSpec::new(2, &[4, 4], &[1.0, -1.0], ScalarBc::Neumann, VelocityBc::NoSlip).is_err());
        let mixed = GridSpec::new(2, &[4, 4], &[1.0, 1.0], ScalarBc::Periodic, VelocityBc::NoSlip);
        match mixed {
            Err(Error::Config(v)) => assert!(v[0].contains("mixed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn face_counts() {
        let g = GridSpec::uniform(2, 5, 1.0, false).unwrap();
        assert_eq!(g.face_shape(0), [6, 5, 1]);
        assert_eq!(g.face_shape(1), [5, 6, 1]);
        let p = GridSpec::uniform(3, 5, 1.0, true).unwrap();
        assert_eq!(p.face_shape(2), [5, 5, 5]);
    }

    #[test]
    fn integrate_constant_and_zero() {
        for n in [1, 3, 16] {
            let g = GridSpec::uniform(2, n, 1.0, false).unwrap();
            assert!((integrate(&ScalarField::constant(&g, 1.0)) - 1.0).abs() < 1e-14);
            assert_eq!(integrate(&ScalarField::zeros(&g)), 0.0);
        }
    }

    #[test]
    fn integrate_linear_is_exact() {
        let g = GridSpec::uniform(2, 64, 1.0, false).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        assert!((integrate(&f) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = GridSpec::uniform(2, 8, 1.0, false).unwrap();
        let gr = gradient(&ScalarField::constant(&g, 3.0));
        assert_eq!(gr.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_linear_on_neumann_grid() {
        let g = GridSpec::uniform(2, 8, 1.0, false).unwrap();
        let gr = gradient(&ScalarField::from_fn(&g, |x| x[0]));
        let shape = g.face_shape(0);
        for (idx, &v) in gr.comp(0).iter().enumerate() {
            let f = face_coords(shape, idx);
            if f[0] == 0 || f[0] == 8 {
                assert_eq!(v, 0.0);
            } else {
                assert!((v - 1.0).abs() < 1e-12, "{v}");
            }
        }
        assert!(gr.comp(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_of_spike_is_antisymmetric() {
        // 5 x 1 strip, unit spacing, spike in the middle cell
        let g = GridSpec::new(2, &[5, 1], &[5.0, 1.0], ScalarBc::Neumann, VelocityBc::NoSlip).unwrap();
        let f = ScalarField::from_values(&g, vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let gr = gradient(&f);
        assert_eq!(gr.comp(0), &[0.0, 0.0, 1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn div_grad_equals_laplacian_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for periodic in [false, true] {
            for dims in [2, 3] {
                let g = GridSpec::new(
                    dims,
                    &[7, 5, 4][..dims],
                    &[1.0, 0.7, 1.3][..dims],
                    if periodic { ScalarBc::Periodic } else { ScalarBc::Neumann },
                    if periodic { VelocityBc::Periodic } else { VelocityBc::NoSlip },
                )
                .unwrap();
                let f = random_scalar(&g, &mut rng);
                let a = divergence(&gradient(&f));
                let b = laplacian(&f);
                assert_eq!(a.values(), b.values());
            }
        }
    }

    #[test]
    fn divergence_of_uniform_translation_is_zero_inside() {
        let g = GridSpec::uniform(2, 6, 1.0, false).unwrap();
        let v = VectorField::uniform(&g, &[1.0, 0.5]);
        let div = divergence(&v);
        for c in 0..g.num_cells() {
            let p = g.coords(c);
            if (1..5).contains(&p[0]) && (1..5).contains(&p[1]) {
                assert!(div.values()[c].abs() < 1e-12);
            }
        }
        assert_eq!(divergence(&VectorField::zeros(&g)).max(), 0.0);
    }

    #[test]
    fn laplacian_of_sine_periodic() {
        let n = 128;
        let g = GridSpec::new(2, &[n, 1], &[1.0, 1.0], ScalarBc::Periodic, VelocityBc::Periodic).unwrap();
        let k = 2.0 * std::f64::consts::PI;
        let f = ScalarField::from_fn(&g, |x| (k * x[0]).sin());
        let lap = laplacian(&f);
        let h = 1.0 / n as f64;
        // second difference of sin(kx) is -(4/h²) sin²(kh/2) sin(kx); the
        // relative truncation error against -k² sin(kx) is ≈ (kh)²/12
        let bound = (k * h).powi(2) / 12.0 * 1.01;
        for c in 0..n {
            let x = (c as f64 + 0.5) * h;
            let exact = -k * k * (k * x).sin();
            assert!((lap.values()[c] - exact).abs() <= bound * k * k + 1e-9);
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_two_inside() {
        let g = GridSpec::new(2, &[16, 1], &[1.0, 1.0], ScalarBc::Neumann, VelocityBc::NoSlip).unwrap();
        let lap = laplacian(&ScalarField::from_fn(&g, |x| x[0] * x[0]));
        for c in 1..15 {
            assert!((lap.values()[c] - 2.0).abs() < 1e-9);
        }
        assert!(laplacian(&ScalarField::constant(&g, 2.0)).max_abs_is_zero());
    }

    trait MaxAbs {
        fn max_abs_is_zero(&self) -> bool;
    }
    impl MaxAbs for ScalarField {
        fn max_abs_is_zero(&self) -> bool {
            self.values().iter().all(|v| *v == 0.0)
        }
    }

    #[test]
    fn periodic_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dims in [2, 3] {
            let g = GridSpec::uniform(dims, 6, 1.0, true).unwrap();
            let f = random_scalar(&g, &mut rng);
            let v = random_vector(&g, &mut rng);
            let lhs = f.dot(&divergence(&v));
            let rhs = -gradient(&f).dot(&v);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn wall_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = GridSpec::uniform(2, 9, 1.0, false).unwrap();
        let f = random_scalar(&g, &mut rng);
        let v = random_vector(&g, &mut rng);
        let lhs = f.dot(&divergence(&v));
        let rhs = -gradient(&f).dot(&v);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn neumann_laplacian_conserves_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dims in [2, 3] {
            let g = GridSpec::uniform(dims, 10, 1.0, false).unwrap();
            let f = random_scalar(&g, &mut rng);
            let lap = laplacian(&f);
            let scale = lap.values().iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume();
            assert!(integrate(&lap).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn vector_laplacian_is_symmetric_and_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for periodic in [false, true] {
            let g = GridSpec::uniform(2, 7, 1.0, periodic).unwrap();
            let a = random_vector(&g, &mut rng);
            let b = random_vector(&g, &mut rng);
            let ab = a.dot(&vector_laplacian(&b));
            let ba = b.dot(&vector_laplacian(&a));
            assert!((ab - ba).abs() < 1e-10 * ab.abs().max(1.0));
            assert!(vector_dirichlet_form(&a) > 0.0);
        }
    }

    #[test]
    fn scalar_dirichlet_form_matches_minus_f_lap_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GridSpec::uniform(2, 8, 1.0, false).unwrap();
        let f = random_scalar(&g, &mut rng);
        let a = scalar_dirichlet_form(&f);
        let b = -f.dot(&laplacian(&f));
        assert!((a - b).abs() < 1e-10 * a);
    }
}
