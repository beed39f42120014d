//! Fokker-Planck equation for the potential density with absorbing threshold,
//! reflecting lower edge and reinjection of the absorbed flux at `v_r`.
//!
//! Each step solves the implicit Chang–Cooper system for the drift-diffusion
//! operator, reads the firing rate `r` off the threshold flux, and deposits
//! the absorbed mass `r·dt` back at `v_r` within the same step.

use crate::density::{deposit_delta, l1_distance, DeltaDeposit, DensityField1D};
use crate::error::{Error, Result};
use crate::grid::PotentialGrid;
use crate::operator::ImplicitStep;
use crate::series::FiringRateSeries;
use crate::stimulus::Stimulus;
use crate::MASS_TOLERANCE;

#[derive(Debug, Clone)]
pub struct Fp1dState {
    pub p: DensityField1D,
    pub t: f64,
    pub r_history: FiringRateSeries,
}

impl Fp1dState {
    pub fn new(p: DensityField1D) -> Self {
        let t = p.t;
        Self {
            p,
            t,
            r_history: FiringRateSeries::default(),
        }
    }
}

/// Caches the factorized step for repeated (μ, dt) pairs.
#[derive(Debug, Clone)]
pub struct FpStepper {
    grid: PotentialGrid,
    diffusion: f64,
    reinject: DeltaDeposit,
    cached: Option<(f64, f64, ImplicitStep)>,
}

impl FpStepper {
    pub fn new(grid: PotentialGrid, sigma: f64) -> Result<Self> {
        Ok(Self {
            grid,
            diffusion: 0.5 * sigma * sigma,
            reinject: deposit_delta(&grid, grid.v_r(), 1.0)?,
            cached: None,
        })
    }

    pub fn operator(&mut self, mu: f64, dt: f64) -> &ImplicitStep {
        let stale = !matches!(&self.cached, Some((m, d, _)) if *m == mu && *d == dt);
        if stale {
            let op = ImplicitStep::new(&self.grid, self.diffusion, mu, dt);
            self.cached = Some((mu, dt, op));
        }
        &self.cached.as_ref().expect("operator cached above").2
    }

    /// Advance to `t_new`; returns the firing rate over the step.
    pub fn advance(&mut self, state: &mut Fp1dState, s: &Stimulus, t_new: f64) -> Result<f64> {
        let dt = t_new - state.t;
        let mu = s.evaluate(0.5 * (state.t + t_new));
        let reinject = self.reinject;
        let op = self.operator(mu, dt);
        let p = &mut state.p.values;
        op.solve_in_place(p);
        let r = op.threshold_flux(p);
        reinject.apply_scaled(p, r * dt);
        if let Some((cell, &value)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Negativity { cell, value, t: t_new });
        }
        state.t = t_new;
        state.p.t = t_new;
        state.r_history.push(t_new, r);
        Ok(r)
    }
}

/// One step of length `dt`.
pub fn fp_step(state: &mut Fp1dState, s: &Stimulus, dt: f64) -> Result<f64> {
    let mut stepper = FpStepper::new(state.p.grid, s.sigma())?;
    let t_new = state.t + dt;
    stepper.advance(state, s, t_new)
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    pub snapshots: Vec<DensityField1D>,
    pub rates: FiringRateSeries,
    pub last: DensityField1D,
}

/// Integrate from `p0` over `[p0.t, p0.t + horizon]`. A snapshot is kept every
/// `snapshot_every` steps (and of the initial state) when requested.
pub fn solve_fp(
    p0: &DensityField1D,
    s: &Stimulus,
    horizon: f64,
    dt: f64,
    snapshot_every: Option<usize>,
) -> Result<FpSolution> {
    if !((p0.mass() - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::Config(format!(
            "initial density must have unit mass, got {}",
            p0.mass()
        )));
    }
    check_step(dt, horizon)?;
    let n_steps = (horizon / dt).round() as usize;
    let t_start = p0.t;
    let mut stepper = FpStepper::new(p0.grid, s.sigma())?;
    let mut state = Fp1dState::new(p0.clone());
    let mut snapshots = Vec::new();
    if snapshot_every.is_some() {
        snapshots.push(state.p.clone());
    }
    for n in 0..n_steps {
        stepper.advance(&mut state, s, t_start + (n + 1) as f64 * dt)?;
        if let Some(k) = snapshot_every {
            if (n + 1) % k.max(1) == 0 {
                snapshots.push(state.p.clone());
            }
        }
    }
    Ok(FpSolution {
        snapshots,
        rates: state.r_history,
        last: state.p,
    })
}

pub(crate) fn check_step(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(Error::Config(format!(
            "need dt > 0 and horizon >= dt, got dt = {dt}, horizon = {horizon}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions {
    /// L1 change allowed between states one `check_interval` apart.
    pub tol: f64,
    pub check_interval: f64,
    pub max_time: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            check_interval: 1.0,
            max_time: 500.0,
        }
    }
}

/// Long-time integration under a constant stimulus until the density stops
/// changing. Returns the stationary density and firing rate.
pub fn stationary_fp(
    grid: PotentialGrid,
    s: &Stimulus,
    dt: f64,
    opts: StationaryOptions,
) -> Result<(DensityField1D, f64)> {
    if !s.is_constant() {
        return Err(Error::Config("stationary state needs a constant stimulus".into()));
    }
    let p0 = DensityField1D::point(grid, grid.v_r())?;
    let mut stepper = FpStepper::new(grid, s.sigma())?;
    let mut state = Fp1dState::new(p0);
    let per_check = ((opts.check_interval / dt).round() as usize).max(1);
    let max_checks = ((opts.max_time / opts.check_interval).ceil() as usize).max(1);
    let mut step = 0usize;
    let mut change = f64::INFINITY;
    for _ in 0..max_checks {
        let before = state.p.values.clone();
        let mut r = 0.0;
        for _ in 0..per_check {
            step += 1;
            r = stepper.advance(&mut state, s, step as f64 * dt)?;
        }
        change = l1_distance(&before, &state.p.values, grid.dv());
        if change < opts.tol {
            return Ok((state.p, r));
        }
    }
    Err(Error::NoConvergence { steps: step, change })
}
