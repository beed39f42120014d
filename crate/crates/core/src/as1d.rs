//! Age-structured transport `∂_t n + ∂_a n + S(t,a) n = 0` with the nonlocal
//! reset boundary `n(t, 0) = r(t) = ∫ S n da`.
//!
//! With `Δa = dt` transport is an exact shift by one cell per step. Along each
//! characteristic the loss term is integrated exactly, `n ← n·exp(−S·dt)`,
//! with `S` taken at the midpoint of the characteristic: time `t + dt/2`, age
//! node `(k+1)·Δa` for mass leaving cell `k`. Fired mass re-enters cell 0.
//! The last cell keeps its survivors so the step conserves mass exactly.

use crate::density::DensityAge;
use crate::error::{Error, Result};
use crate::fp1d::check_step;
use crate::hazard::HazardRate;
use crate::series::FiringRateSeries;
use crate::{AGE_TRUNCATION_TOLERANCE, MASS_TOLERANCE};

/// Per-cell survival factors `exp(−S dt)` for the step starting at `t`.
pub fn survival_factors(
    hazard: &dyn HazardRate,
    t: f64,
    dt: f64,
    n_a: usize,
    da: f64,
) -> Result<Vec<f64>> {
    let tm = t + 0.5 * dt;
    (0..n_a)
        .map(|k| Ok((-hazard.rate(tm, (k + 1) as f64 * da)? * dt).exp()))
        .collect()
}

/// Shift-and-decay with precomputed survival factors; returns the rate.
pub fn as_step_with(n: &mut DensityAge, keep: &[f64], dt: f64) -> Result<f64> {
    let n_a = n.values.len();
    let da = n.grid.da();
    let v = &mut n.values;
    let mut fired = 0.0;
    for (x, k) in v.iter().zip(keep) {
        fired += x * (1.0 - k);
    }
    fired *= da;
    let last = n_a - 1;
    v[last] = v[last - 1] * keep[last - 1] + v[last] * keep[last];
    for k in (1..last).rev() {
        v[k] = v[k - 1] * keep[k - 1];
    }
    v[0] = fired / da;
    n.t += dt;
    let tail = v[last] * da;
    if tail > AGE_TRUNCATION_TOLERANCE {
        return Err(Error::AgeTruncation { mass: tail, t: n.t });
    }
    Ok(fired / dt)
}

/// One step from `t` to `t + dt`; returns the firing rate over the step.
pub fn as_step(n: &mut DensityAge, hazard: &dyn HazardRate, t: f64, dt: f64) -> Result<f64> {
    n.grid.check_step(dt)?;
    let keep = survival_factors(hazard, t, dt, n.values.len(), n.grid.da())?;
    n.t = t;
    as_step_with(n, &keep, dt)
}

#[derive(Debug, Clone)]
pub struct AsSolution {
    pub snapshots: Vec<DensityAge>,
    pub rates: FiringRateSeries,
    pub last: DensityAge,
}

pub fn solve_as(
    n0: &DensityAge,
    hazard: &dyn HazardRate,
    horizon: f64,
    dt: f64,
    snapshot_every: Option<usize>,
) -> Result<AsSolution> {
    if !((n0.mass() - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::Config(format!(
            "initial age density must have unit mass, got {}",
            n0.mass()
        )));
    }
    check_step(dt, horizon)?;
    n0.grid.check_step(dt)?;
    let n_steps = (horizon / dt).round() as usize;
    let n_a = n0.grid.len();
    let da = n0.grid.da();
    let t_start = n0.t;
    let fixed = if hazard.is_autonomous() {
        Some(survival_factors(hazard, t_start, dt, n_a, da)?)
    } else {
        None
    };
    let mut n = n0.clone();
    let mut rates = FiringRateSeries::default();
    let mut snapshots = Vec::new();
    if snapshot_every.is_some() {
        snapshots.push(n.clone());
    }
    for step in 0..n_steps {
        let t = t_start + step as f64 * dt;
        let r = match &fixed {
            Some(keep) => as_step_with(&mut n, keep, dt)?,
            None => as_step_with(&mut n, &survival_factors(hazard, t, dt, n_a, da)?, dt)?,
        };
        let t_new = t_start + (step + 1) as f64 * dt;
        n.t = t_new;
        rates.push(t_new, r);
        if let Some(k) = snapshot_every {
            if (step + 1) % k.max(1) == 0 {
                snapshots.push(n.clone());
            }
        }
    }
    Ok(AsSolution {
        snapshots,
        rates,
        last: n,
    })
}
