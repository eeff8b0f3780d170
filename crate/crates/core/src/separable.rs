//! Fast diagonalization of `a·I − b·Δ_h` on uniform grids.
//!
//! The discrete Laplacian is a sum of 1-d second differences, one per axis,
//! each with a known orthonormal eigenbasis (cosines for mirror ghosts,
//! Fourier modes for periodic axes, sines for zero or odd ghosts). Solving
//! amounts to a change of basis along every axis, a diagonal scaling and the
//! change back. Cost is `O(N · Σ m_d)` for `N` unknowns.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::grid::GridSpec;
use crate::par;

/// Boundary treatment of one axis of a staggered array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum AxisKind {
    /// Cell centres, mirror ghost (homogeneous Neumann).
    Mirror,
    /// Cell centres or faces on a periodic axis.
    Periodic,
    /// Faces normal to the axis with zero wall entries at both ends.
    WallFaces,
    /// Cell centres, odd ghost `x_ghost = −x` (no-slip tangential).
    Odd,
}

/// Orthonormal eigenbasis of one axis: `q[k·m + i] = φ_k(i)` and `lam[k]`
/// the eigenvalue of `−D²`. Entries that must stay zero get `lam = ∞`.
struct Basis {
    m: usize,
    q: Vec<f64>,
    /// Transpose of `q`.
    qt: Vec<f64>,
    lam: Vec<f64>,
}

impl Basis {
    fn new(kind: AxisKind, n: usize, h: f64) -> Self {
        let (m, q, lam) = Self::modes(kind, n, h);
        let mut qt = vec![0.0; m * m];
        for k in 0..m {
            for i in 0..m {
                qt[i * m + k] = q[k * m + i];
            }
        }
        Self { m, q, qt, lam }
    }

    fn modes(kind: AxisKind, n: usize, h: f64) -> (usize, Vec<f64>, Vec<f64>) {
        let ev = |theta: f64| (2.0 - 2.0 * theta.cos()) / (h * h);
        let nf = n as f64;
        match kind {
            AxisKind::Mirror => {
                let mut q = vec![0.0; n * n];
                for k in 0..n {
                    let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    for i in 0..n {
                        q[k * n + i] = s * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
                    }
                }
                let lam = (0..n).map(|k| ev(PI * k as f64 / nf)).collect();
                (n, q, lam)
            }
            AxisKind::Periodic => {
                let mut q = vec![0.0; n * n];
                let mut lam = vec![0.0; n];
                let mut row = 0;
                let mut push = |q: &mut Vec<f64>, lam: &mut Vec<f64>, f: &dyn Fn(usize) -> f64, l: f64| {
                    let norm = (0..n).map(|i| f(i) * f(i)).sum::<f64>().sqrt();
                    for i in 0..n {
                        q[row * n + i] = f(i) / norm;
                    }
                    lam[row] = l;
                    row += 1;
                };
                push(&mut q, &mut lam, &|_| 1.0, 0.0);
                for k in 1..=(n - 1) / 2 {
                    let w = 2.0 * PI * k as f64 / nf;
                    push(&mut q, &mut lam, &|i| (w * i as f64).cos(), ev(w));
                    push(&mut q, &mut lam, &|i| (w * i as f64).sin(), ev(w));
                }
                if n % 2 == 0 && n > 1 {
                    push(&mut q, &mut lam, &|i| if i % 2 == 0 { 1.0 } else { -1.0 }, ev(PI));
                }
                (n, q, lam)
            }
            AxisKind::WallFaces => {
                // n cells, n + 1 faces; faces 0 and n are walls
                let m = n + 1;
                let mut q = vec![0.0; m * m];
                let mut lam = vec![f64::INFINITY; m];
                q[0] = 1.0;
                q[m * m - 1] = 1.0;
                let s = (2.0 / nf).sqrt();
                for k in 1..n {
                    for i in 1..n {
                        q[k * m + i] = s * (PI * k as f64 * i as f64 / nf).sin();
                    }
                    lam[k] = ev(PI * k as f64 / nf);
                }
                (m, q, lam)
            }
            AxisKind::Odd => {
                let mut q = vec![0.0; n * n];
                for k in 1..=n {
                    let s = if k == n { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    for i in 0..n {
                        q[(k - 1) * n + i] = s * (PI * k as f64 * (i as f64 + 0.5) / nf).sin();
                    }
                }
                let lam = (1..=n).map(|k| ev(PI * k as f64 / nf)).collect();
                (n, q, lam)
            }
        }
    }
}

type Key = (AxisKind, usize, u64);

fn basis(kind: AxisKind, n: usize, h: f64) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Basis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (kind, n, h.to_bits());
    if let Some(b) = cache.lock().unwrap().get(&key) {
        return b.clone();
    }
    let b = Arc::new(Basis::new(kind, n, h));
    cache.lock().unwrap().insert(key, b.clone());
    b
}

/// Separable solver for one staggered array layout.
pub(crate) struct Separable {
    shape: [usize; 3],
    dims: usize,
    bases: Vec<Arc<Basis>>,
}

impl Separable {
    /// Cell-centred scalars.
    pub(crate) fn cells(g: &GridSpec) -> Self {
        let kind = if g.is_periodic() { AxisKind::Periodic } else { AxisKind::Mirror };
        let bases = (0..g.dims()).map(|d| basis(kind, g.cells()[d], g.h(d))).collect();
        Self::from_bases(g.dims(), bases)
    }

    /// Velocity component `d` on its faces.
    pub(crate) fn faces(g: &GridSpec, d: usize) -> Self {
        let bases = (0..g.dims())
            .map(|e| {
                let kind = match (g.is_periodic(), e == d) {
                    (true, _) => AxisKind::Periodic,
                    (false, true) => AxisKind::WallFaces,
                    (false, false) => AxisKind::Odd,
                };
                basis(kind, g.cells()[e], g.h(e))
            })
            .collect();
        Self::from_bases(g.dims(), bases)
    }

    fn from_bases(dims: usize, bases: Vec<Arc<Basis>>) -> Self {
        let mut shape = [1; 3];
        for (d, b) in bases.iter().enumerate() {
            shape[d] = b.m;
        }
        Self { shape, dims, bases }
    }

    /// Change of basis along `axis`, to mode space when `forward`.
    fn transform(&self, axis: usize, forward: bool, x: &[f64], out: &mut [f64]) {
        let b = &self.bases[axis];
        let m = b.m;
        // forward: x̂_k = Σ_i φ_k(i) x_i; backward: x_i = Σ_k φ_k(i) x̂_k
        let mat = if forward { &b.q } else { &b.qt };
        let stride: usize = self.shape[..axis].iter().product();
        if axis == 0 {
            // axpy form over the transpose, which vectorizes
            let tr = if forward { &b.qt } else { &b.q };
            par::for_rows(out, m, |r, row| {
                let src = &x[r * m..(r + 1) * m];
                row.fill(0.0);
                for (i, v) in src.iter().enumerate() {
                    for (o, c) in row.iter_mut().zip(&tr[i * m..(i + 1) * m]) {
                        *o += c * v;
                    }
                }
            });
        } else {
            par::for_rows(out, stride, |r, row| {
                let k = r % m;
                let outer = r / m;
                row.fill(0.0);
                for i in 0..m {
                    let c = mat[k * m + i];
                    if c != 0.0 {
                        let off = (i + m * outer) * stride;
                        for (o, v) in row.iter_mut().zip(&x[off..off + stride]) {
                            *o += c * v;
                        }
                    }
                }
            });
        }
    }

    /// Solve `(a − bΔ_h) y = rhs` (`b > 0`, `a ≥ 0`). Modes with a zero
    /// denominator (the constant for `a = 0` without walls) are set to zero.
    pub(crate) fn solve(&self, a: f64, b: f64, rhs: &[f64], out: &mut [f64]) {
        let len: usize = self.shape.iter().product();
        debug_assert_eq!(rhs.len(), len);
        debug_assert_eq!(out.len(), len);
        let mut cur = rhs.to_vec();
        let mut tmp = vec![0.0; len];
        for axis in 0..self.dims {
            self.transform(axis, true, &cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        let shape = self.shape;
        let lam: Vec<&[f64]> = self.bases.iter().map(|b| b.lam.as_slice()).collect();
        par::update(&mut cur, |idx, v| {
            let i = idx % shape[0];
            let j = (idx / shape[0]) % shape[1];
            let k = idx / (shape[0] * shape[1]);
            let mut l = lam[0][i];
            if lam.len() > 1 {
                l += lam[1][j];
            }
            if lam.len() > 2 {
                l += lam[2][k];
            }
            let den = a + b * l;
            if den == 0.0 || den.is_infinite() {
                0.0
            } else {
                v / den
            }
        });
        for axis in 0..self.dims {
            self.transform(axis, false, &cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        out.copy_from_slice(&cur);
    }
}
