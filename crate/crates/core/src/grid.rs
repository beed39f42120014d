//! Uniform cell-centred grids in membrane potential and in age.

use crate::error::{Error, Result};

/// Cells covering `[v_min, v_th]`; the threshold is the upper face of the last cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialGrid {
    v_min: f64,
    v_th: f64,
    v_r: f64,
    n_v: usize,
    dv: f64,
}

impl PotentialGrid {
    /// Grid with the firing threshold at 1.
    pub fn new(v_min: f64, v_r: f64, n_v: usize) -> Result<Self> {
        Self::with_threshold(v_min, 1.0, v_r, n_v)
    }

    pub fn with_threshold(v_min: f64, v_th: f64, v_r: f64, n_v: usize) -> Result<Self> {
        if n_v < 2 {
            return Err(Error::Config(format!("need at least 2 potential cells, got {n_v}")));
        }
        if !(v_min < v_r && v_r < v_th) {
            return Err(Error::Config(format!(
                "need v_min < v_r < v_th, got {v_min}, {v_r}, {v_th}"
            )));
        }
        Ok(Self {
            v_min,
            v_th,
            v_r,
            n_v,
            dv: (v_th - v_min) / n_v as f64,
        })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }
    pub fn v_th(&self) -> f64 {
        self.v_th
    }
    pub fn v_r(&self) -> f64 {
        self.v_r
    }
    pub fn len(&self) -> usize {
        self.n_v
    }
    pub fn is_empty(&self) -> bool {
        self.n_v == 0
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn center(&self, i: usize) -> f64 {
        self.v_min + (i as f64 + 0.5) * self.dv
    }

    /// Lower face of cell `i`; `face(n_v)` is the threshold.
    pub fn face(&self, i: usize) -> f64 {
        if i == self.n_v {
            self.v_th
        } else {
            self.v_min + i as f64 * self.dv
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_v).map(|i| self.center(i))
    }

    /// Same bounds with twice as many cells.
    pub fn refined(&self) -> Self {
        Self {
            n_v: 2 * self.n_v,
            dv: self.dv / 2.0,
            ..*self
        }
    }
}

/// Age cells `[kΔa, (k+1)Δa)`; the solvers require `Δa` equal to the time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    n_a: usize,
    da: f64,
}

impl AgeGrid {
    pub fn new(a_max: f64, n_a: usize) -> Result<Self> {
        if n_a < 2 || !(a_max > 0.0) {
            return Err(Error::Config(format!(
                "age grid needs a_max > 0 and n_a >= 2, got {a_max}, {n_a}"
            )));
        }
        Ok(Self {
            n_a,
            da: a_max / n_a as f64,
        })
    }

    /// `n_a` cells of width `dt`.
    pub fn with_step(dt: f64, n_a: usize) -> Result<Self> {
        Self::new(dt * n_a as f64, n_a).map(|g| Self { da: dt, ..g })
    }

    /// Smallest grid of width `dt` cells reaching at least `a_max`.
    pub fn covering(dt: f64, a_max: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config("age step must be positive".into()));
        }
        let n = (a_max / dt - 1e-9).ceil().max(2.0) as usize;
        Self::with_step(dt, n)
    }

    pub fn len(&self) -> usize {
        self.n_a
    }
    pub fn is_empty(&self) -> bool {
        self.n_a == 0
    }
    pub fn da(&self) -> f64 {
        self.da
    }
    pub fn a_max(&self) -> f64 {
        self.da * self.n_a as f64
    }
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.da
    }
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.da
    }

    pub fn check_step(&self, dt: f64) -> Result<()> {
        if ((self.da - dt) / dt).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "age cell width {} must equal the time step {dt}",
                self.da
            )));
        }
        Ok(())
    }
}
