//! Hazard functions S(t, a): tabulated, constant, and the exponential escape
//! form `S(t, a) = exp(h(t) − V(a))`, `V(a) = −ln(1 − e^{−a/τ})`.

use crate::error::{Error, Result};
use crate::stimulus::Drive;

pub trait HazardRate: Sync {
    /// Instantaneous firing intensity at time `t` and age `a`.
    fn rate(&self, t: f64, a: f64) -> Result<f64>;

    /// Largest admissible age; queries beyond it fail.
    fn max_age(&self) -> f64 {
        f64::INFINITY
    }

    fn is_autonomous(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantHazard(pub f64);

impl HazardRate for ConstantHazard {
    fn rate(&self, _t: f64, _a: f64) -> Result<f64> {
        Ok(self.0)
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `exp(h(t)) · (1 − e^{−a/τ})`, which equals `exp(h − V(a))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeHazard {
    pub h: Drive,
    pub tau: f64,
}

impl EscapeHazard {
    pub fn new(h: Drive, tau: f64) -> Result<Self> {
        h.validate()?;
        if !(tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self { h, tau })
    }
}

impl HazardRate for EscapeHazard {
    fn rate(&self, t: f64, a: f64) -> Result<f64> {
        Ok(self.h.evaluate(t).exp() * -(-a.max(0.0) / self.tau).exp_m1())
    }
    fn is_autonomous(&self) -> bool {
        matches!(self.h, Drive::Constant(_))
    }
}

/// S sampled at age nodes `a_j = j·Δa` (j = 0..n_ages) and time nodes
/// `t_i = t0 + i·Δt` (i = 0..n_times). Linear in age, linear in time with the
/// time axis clamped at both ends; ages past the last node are an error.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardTable {
    t0: f64,
    dt: f64,
    n_times: usize,
    da: f64,
    n_ages: usize,
    values: Vec<f64>,
}

impl HazardTable {
    pub fn autonomous(da: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(0.0, 1.0, 1, da, n, values)
    }

    pub fn new(
        t0: f64,
        dt: f64,
        n_times: usize,
        da: f64,
        n_ages: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_times == 0 || n_ages < 2 {
            return Err(Error::Empty("hazard table"));
        }
        if values.len() != n_times * n_ages {
            return Err(Error::Dimension {
                expected: n_times * n_ages,
                got: values.len(),
            });
        }
        if !(da > 0.0 && dt > 0.0) {
            return Err(Error::Config("hazard table spacings must be positive".into()));
        }
        if let Some(bad) = values.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("hazard values must be finite and >= 0, found {bad}")));
        }
        Ok(Self {
            t0,
            dt,
            n_times,
            da,
            n_ages,
            values,
        })
    }

    /// Tabulate `f(t, a)` on the given nodes.
    pub fn from_fn(
        t0: f64,
        dt: f64,
        n_times: usize,
        da: f64,
        n_ages: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_times * n_ages);
        for i in 0..n_times {
            let t = t0 + i as f64 * dt;
            values.extend((0..n_ages).map(|j| f(t, j as f64 * da)));
        }
        Self::new(t0, dt, n_times, da, n_ages, values)
    }

    /// Clamp every value to at most `s_max`.
    pub fn capped(mut self, s_max: f64) -> Self {
        self.values.iter_mut().for_each(|s| *s = s.min(s_max));
        self
    }

    pub fn s_max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }
    pub fn n_ages(&self) -> usize {
        self.n_ages
    }
    pub fn da(&self) -> f64 {
        self.da
    }
    pub fn time_node(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
    pub fn age_node(&self, j: usize) -> f64 {
        j as f64 * self.da
    }

    /// Values at time node `i`, one per age node.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_ages..(i + 1) * self.n_ages]
    }

    fn age_interp(&self, row: usize, a: f64) -> Result<f64> {
        let s = a / self.da;
        let last = (self.n_ages - 1) as f64;
        if !(s >= -1e-9 && s <= last + 1e-9) {
            return Err(Error::HazardRange {
                age: a,
                max: self.max_age(),
            });
        }
        let s = s.clamp(0.0, last);
        let j = (s.floor() as usize).min(self.n_ages - 2);
        let f = s - j as f64;
        let r = self.row(row);
        Ok(r[j] + f * (r[j + 1] - r[j]))
    }
}

impl HazardRate for HazardTable {
    fn rate(&self, t: f64, a: f64) -> Result<f64> {
        if self.n_times == 1 {
            return self.age_interp(0, a);
        }
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.n_times - 1) as f64);
        let i = (s.floor() as usize).min(self.n_times - 2);
        let f = s - i as f64;
        let lo = self.age_interp(i, a)?;
        if f == 0.0 {
            return Ok(lo);
        }
        let hi = self.age_interp(i + 1, a)?;
        Ok(lo + f * (hi - lo))
    }

    fn max_age(&self) -> f64 {
        (self.n_ages - 1) as f64 * self.da
    }

    fn is_autonomous(&self) -> bool {
        self.n_times == 1
    }
}

/// `P(a) = exp(−∫₀^a S)` at the nodes `j·da`, j = 0..n, by the cumulative
/// trapezoid rule.
pub fn survivor_from_hazard(hazard: &dyn HazardRate, da: f64, n: usize) -> Result<Vec<f64>> {
    if !hazard.is_autonomous() {
        return Err(Error::Config("survivor function needs an autonomous hazard".into()));
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    let mut integral = 0.0;
    let mut prev = hazard.rate(0.0, 0.0)?;
    for j in 1..=n {
        let s = hazard.rate(0.0, j as f64 * da)?;
        integral += 0.5 * (prev + s) * da;
        prev = s;
        out.push((-integral).exp());
    }
    Ok(out)
}
