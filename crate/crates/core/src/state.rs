use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};

/// Full evolving state `(n, c, u, P, t, step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
    pub t: f64,
    pub step: u64,
}

impl SimState {
    /// Fluid at rest, zero pressure, `t = 0`.
    pub fn new(n: ScalarField, c: ScalarField) -> Result<Self> {
        if n.grid() != c.grid() {
            return Err(Error::State("n and c live on different grids".into()));
        }
        let g = *n.grid();
        Ok(Self {
            n,
            c,
            u: VectorField::zeros(&g),
            p: ScalarField::zeros(&g),
            t: 0.0,
            step: 0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.n.grid()
    }

    /// Checks finiteness and nonnegativity of the densities.
    pub fn check(&self) -> Result<()> {
        if !self.n.all_finite() || !self.c.all_finite() || !self.u.all_finite() || !self.p.all_finite() {
            return Err(Error::State(format!("non-finite values at step {}", self.step)));
        }
        let (mn, mc) = (self.n.min(), self.c.min());
        if mn < 0.0 || mc < 0.0 {
            return Err(Error::State(format!(
                "negative density at step {}: min n = {mn:e}, min c = {mc:e}",
                self.step
            )));
        }
        Ok(())
    }
}
