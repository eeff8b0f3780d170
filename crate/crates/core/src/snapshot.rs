//! Binary checkpoints.
//!
//! Layout (little-endian): a 64-byte header
//!
//! | offset | field                 |
//! |--------|-----------------------|
//! | 0      | magic `"KSNS"`        |
//! | 4      | version `u32`         |
//! | 8      | dims `u32`            |
//! | 12     | cells per axis `u32×3`|
//! | 24     | box lengths `f64×3`   |
//! | 48     | time `f64`            |
//! | 56     | step `u64`            |
//!
//! followed by `f64` payloads for `n`, `c`, each velocity component and `P`.
//! Wall and periodic grids have different face counts, so the boundary
//! flavour is recovered from the payload length.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarBc, ScalarField, VectorField, VelocityBc};
use crate::state::SimState;

pub const MAGIC: &[u8; 4] = b"KSNS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

pub fn encode(state: &SimState) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (3 * g.num_cells() + g.dims() * g.num_cells()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dims() as u32).to_le_bytes());
    for c in g.cells() {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    for l in g.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);
    let mut push = |xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    push(state.n.values());
    push(state.c.values());
    for comp in state.u.components() {
        push(comp);
    }
    push(state.p.values());
    out
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<SimState> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Snapshot("bad magic (expected \"KSNS\")".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let dims = u32_at(bytes, 8) as usize;
    if dims != 2 && dims != 3 {
        return Err(Error::Snapshot(format!("dims = {dims}")));
    }
    let cells: Vec<usize> = (0..dims).map(|d| u32_at(bytes, 12 + 4 * d) as usize).collect();
    let lengths: Vec<f64> = (0..dims).map(|d| f64_at(bytes, 24 + 8 * d)).collect();
    let t = f64_at(bytes, 48);
    let step = u64::from_le_bytes(bytes[56..64].try_into().unwrap());

    let payload = (bytes.len() - HEADER_LEN) / 8;
    if (bytes.len() - HEADER_LEN) % 8 != 0 {
        return Err(Error::Snapshot("payload is not a whole number of f64 values".into()));
    }
    let mut grid = None;
    for (s, v) in [
        (ScalarBc::Periodic, VelocityBc::Periodic),
        (ScalarBc::Neumann, VelocityBc::NoSlip),
    ] {
        let g = GridSpec::new(dims, &cells, &lengths, s, v).map_err(|e| Error::Snapshot(e.to_string()))?;
        let want = 3 * g.num_cells() + (0..dims).map(|d| g.num_faces(d)).sum::<usize>();
        if want == payload {
            grid = Some(g);
        }
    }
    let g = grid.ok_or_else(|| {
        Error::Snapshot(format!("payload of {payload} values matches neither wall nor periodic layout"))
    })?;
    let mut off = HEADER_LEN;
    let mut take = |len: usize| {
        let v: Vec<f64> = (0..len).map(|i| f64_at(bytes, off + 8 * i)).collect();
        off += 8 * len;
        v
    };
    let n = ScalarField::from_values(&g, take(g.num_cells()))?;
    let c = ScalarField::from_values(&g, take(g.num_cells()))?;
    let comps = (0..dims).map(|d| take(g.num_faces(d))).collect();
    let u = VectorField::from_components(&g, comps)?;
    let p = ScalarField::from_values(&g, take(g.num_cells()))?;
    Ok(SimState { n, c, u, p, t, step })
}

pub fn write(path: &Path, state: &SimState) -> Result<()> {
    fs::write(path, encode(state))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<SimState> {
    decode(&fs::read(path)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotSummary {
    pub dims: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub periodic: bool,
    pub t: f64,
    pub step: u64,
    pub mass_n: f64,
    pub mass_c: f64,
    pub min_n: f64,
    pub min_c: f64,
    pub div_residual: f64,
}

/// Decode, check finiteness and nonnegativity, and summarize.
pub fn verify(path: &Path) -> Result<SnapshotSummary> {
    let s = read(path)?;
    s.check()?;
    let g = *s.grid();
    let div = crate::grid::divergence(&s.u);
    Ok(SnapshotSummary {
        dims: g.dims(),
        cells: g.cells()[..g.dims()].to_vec(),
        lengths: g.lengths()[..g.dims()].to_vec(),
        periodic: g.is_periodic(),
        t: s.t,
        step: s.step,
        mass_n: crate::grid::integrate(&s.n),
        mass_c: crate::grid::integrate(&s.c),
        min_n: s.n.min(),
        min_c: s.c.min(),
        div_residual: div.dot(&div).sqrt(),
    })
}
