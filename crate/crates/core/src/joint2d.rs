//! Joint density over (age, potential) with absorbing threshold and
//! reinjection at `(0, v_r)`.
//!
//! A step shifts every age slice up by one cell, applies the implicit
//! potential step of [`crate::fp1d`] (without reinjection) to each slice,
//! records the threshold flux `ρ` of each slice, and deposits the total
//! `r = Σ ρ·Δa` at `v_r` in the age-0 slice.

use crate::density::{deposit_delta, l1_distance, mass, DeltaDeposit, DensityAge, DensityField1D, DensityJoint};
use crate::error::{Error, Result};
use crate::fp1d::check_step;
use crate::grid::{AgeGrid, PotentialGrid};
use crate::hazard::HazardTable;
use crate::operator::ImplicitStep;
use crate::series::FiringRateSeries;
use crate::slices::{hazard_nodes, shift_ages, slice_masses, step_slices};
use crate::stimulus::Stimulus;
use crate::{AGE_TRUNCATION_TOLERANCE, MASS_TOLERANCE, SURVIVOR_FLOOR};

#[derive(Debug, Clone)]
pub struct JointState {
    pub pi: DensityJoint,
    pub t: f64,
    /// Threshold flux per age slice during the last step, before reinjection.
    pub rho: Vec<f64>,
    /// Slice masses after the age shift of the last step, before the potential step.
    pub pre_mass: Vec<f64>,
    pub r_history: FiringRateSeries,
}

impl JointState {
    pub fn new(pi: DensityJoint) -> Self {
        let n_a = pi.ages.len();
        let t = pi.t;
        Self {
            pi,
            t,
            rho: vec![0.0; n_a],
            pre_mass: vec![0.0; n_a],
            r_history: FiringRateSeries::default(),
        }
    }
}

/// Caches the factorized potential step for repeated (μ, dt) pairs.
#[derive(Debug, Clone)]
pub struct JointStepper {
    grid: PotentialGrid,
    diffusion: f64,
    reinject: DeltaDeposit,
    cached: Option<(f64, f64, ImplicitStep)>,
}

impl JointStepper {
    pub fn new(grid: PotentialGrid, sigma: f64) -> Result<Self> {
        Ok(Self {
            grid,
            diffusion: 0.5 * sigma * sigma,
            reinject: deposit_delta(&grid, grid.v_r(), 1.0)?,
            cached: None,
        })
    }

    fn operator(&mut self, mu: f64, dt: f64) -> &ImplicitStep {
        let stale = !matches!(&self.cached, Some((m, d, _)) if *m == mu && *d == dt);
        if stale {
            self.cached = Some((mu, dt, ImplicitStep::new(&self.grid, self.diffusion, mu, dt)));
        }
        &self.cached.as_ref().expect("operator cached above").2
    }

    /// Advance by one age cell; returns the firing rate over the step.
    pub fn advance(&mut self, state: &mut JointState, s: &Stimulus) -> Result<f64> {
        let ages = state.pi.ages;
        let dt = ages.da();
        let dv = self.grid.dv();
        let n_v = self.grid.len();
        let t_new = state.t + dt;
        let mu = s.evaluate(state.t + 0.5 * dt);
        let reinject = self.reinject;
        let op = self.operator(mu, dt);

        let values = &mut state.pi.values;
        shift_ages(values, n_v);
        state.pre_mass = slice_masses(values, n_v, dv);
        let (rho, _) = step_slices(values, n_v, op, dv);
        let r = rho.iter().sum::<f64>() * dt;
        reinject.apply_scaled(&mut values[..n_v], r);
        state.rho = rho;

        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Negativity { cell, value, t: t_new });
        }
        let tail = mass(&values[(ages.len() - 1) * n_v..], dv * dt);
        state.t = t_new;
        state.pi.t = t_new;
        state.r_history.push(t_new, r);
        if tail > AGE_TRUNCATION_TOLERANCE {
            return Err(Error::AgeTruncation { mass: tail, t: t_new });
        }
        Ok(r)
    }
}

/// One step of length `dt` (must equal the age cell).
pub fn joint_step(state: &mut JointState, s: &Stimulus, dt: f64) -> Result<f64> {
    state.pi.ages.check_step(dt)?;
    JointStepper::new(state.pi.potentials, s.sigma())?.advance(state, s)
}

/// `p(v) = Σ_k π(a_k, v)·Δa`.
pub fn marginal_potential(pi: &DensityJoint) -> DensityField1D {
    let n_v = pi.potentials.len();
    let da = pi.ages.da();
    let mut p = vec![0.0; n_v];
    for slice in pi.values.chunks(n_v) {
        p.iter_mut().zip(slice).for_each(|(x, y)| *x += y);
    }
    p.iter_mut().for_each(|x| *x *= da);
    DensityField1D {
        grid: pi.potentials,
        values: p,
        t: pi.t,
    }
}

/// `n(a) = Σ_i π(a, v_i)·Δv`.
pub fn marginal_age(pi: &DensityJoint) -> DensityAge {
    DensityAge {
        grid: pi.ages,
        values: slice_masses(&pi.values, pi.potentials.len(), pi.potentials.dv()),
        t: pi.t,
    }
}

/// Hazard of the last step at age nodes `0..=n_a`, as the fraction of each
/// slice's mass lost through the threshold. Slices below the survivor floor
/// inherit the nearest reliable younger value.
pub fn empirical_hazard(state: &JointState) -> Vec<f64> {
    hazard_nodes(&state.rho, &state.pre_mass, state.pi.ages.da(), SURVIVOR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub snapshots: Vec<DensityJoint>,
    pub rates: FiringRateSeries,
    /// Time-dependent empirical hazard (time nodes `t_n + dt/2`), when recorded.
    pub hazard: Option<HazardTable>,
    pub last: JointState,
}

#[derive(Debug, Clone, Default)]
pub struct JointOptions {
    /// Keep a snapshot at these step indices (0 is the initial state).
    pub snapshot_steps: Vec<usize>,
    pub record_hazard: bool,
}

/// Integrate from `pi0` over `horizon`, stepping by the age cell.
pub fn solve_joint(
    pi0: &DensityJoint,
    s: &Stimulus,
    horizon: f64,
    opts: &JointOptions,
) -> Result<JointSolution> {
    if !((pi0.mass() - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::Config(format!(
            "initial joint density must have unit mass, got {}",
            pi0.mass()
        )));
    }
    let dt = pi0.ages.da();
    check_step(dt, horizon)?;
    let n_steps = (horizon / dt).round() as usize;
    let n_a = pi0.ages.len();
    let mut stepper = JointStepper::new(pi0.potentials, s.sigma())?;
    let mut state = JointState::new(pi0.clone());
    let mut snapshots = Vec::new();
    if opts.snapshot_steps.contains(&0) {
        snapshots.push(state.pi.clone());
    }
    let mut hazard = Vec::new();
    for n in 0..n_steps {
        stepper.advance(&mut state, s)?;
        if opts.record_hazard {
            hazard.extend(empirical_hazard(&state));
        }
        if opts.snapshot_steps.contains(&(n + 1)) {
            snapshots.push(state.pi.clone());
        }
    }
    let hazard = if opts.record_hazard && n_steps > 0 {
        Some(HazardTable::new(
            pi0.t + 0.5 * dt,
            dt,
            n_steps,
            dt,
            n_a + 1,
            hazard,
        )?)
    } else {
        None
    };
    Ok(JointSolution {
        snapshots,
        rates: state.r_history.clone(),
        hazard,
        last: state,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct JointStationaryOptions {
    /// L1 change allowed between states one `check_interval` apart.
    pub tol: f64,
    pub check_interval: f64,
    pub max_time: f64,
}

impl Default for JointStationaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            check_interval: 1.0,
            max_time: 200.0,
        }
    }
}

/// Long-time joint integration under a constant stimulus, started from all
/// mass at `(0, v_r)`. Returns the stationary density and firing rate.
pub fn stationary_joint(
    ages: AgeGrid,
    potentials: PotentialGrid,
    s: &Stimulus,
    opts: JointStationaryOptions,
) -> Result<(DensityJoint, f64)> {
    if !s.is_constant() {
        return Err(Error::Config("stationary state needs a constant stimulus".into()));
    }
    let dt = ages.da();
    let mut pi = DensityJoint::zeros(ages, potentials);
    deposit_delta(&potentials, potentials.v_r(), 1.0 / dt)?.apply(&mut pi.values[..potentials.len()]);
    let mut stepper = JointStepper::new(potentials, s.sigma())?;
    let mut state = JointState::new(pi);
    let per_check = ((opts.check_interval / dt).round() as usize).max(1);
    let max_checks = ((opts.max_time / opts.check_interval).ceil() as usize).max(1);
    let cell = ages.da() * potentials.dv();
    let mut change = f64::INFINITY;
    for _ in 0..max_checks {
        let before = state.pi.values.clone();
        let mut r = 0.0;
        for _ in 0..per_check {
            r = stepper.advance(&mut state, s)?;
        }
        change = l1_distance(&before, &state.pi.values, cell);
        if change < opts.tol {
            return Ok((state.pi, r));
        }
    }
    Err(Error::NoConvergence {
        steps: max_checks * per_check,
        change,
    })
}

/// Cells whose survivor is below the floor must carry no more than this mass.
pub const FLOOR_MASS_TOLERANCE: f64 = 1e-8;

/// `π(a_k, v) = φ(a_k, v)·n(a_k)/P(a_k)` from slice-major `φ` (n_a slices),
/// survivor `P` (at least n_a values) and age density `n`. Slices whose
/// survivor is below the floor are set to zero; they must not carry mass.
pub fn product_form(
    potentials: PotentialGrid,
    phi: &[f64],
    survivor: &[f64],
    n: &DensityAge,
) -> Result<DensityJoint> {
    let n_v = potentials.len();
    let n_a = n.grid.len();
    if phi.len() != n_a * n_v {
        return Err(Error::Dimension {
            expected: n_a * n_v,
            got: phi.len(),
        });
    }
    if survivor.len() < n_a {
        return Err(Error::Dimension {
            expected: n_a,
            got: survivor.len(),
        });
    }
    let mut values = vec![0.0; n_a * n_v];
    for k in 0..n_a {
        let p = survivor[k];
        if p < SURVIVOR_FLOOR {
            let m = n.values[k] * n.grid.da();
            if m > FLOOR_MASS_TOLERANCE {
                return Err(Error::FloorViolation { age_index: k, mass: m });
            }
            continue;
        }
        let c = n.values[k] / p;
        for (out, &f) in values[k * n_v..(k + 1) * n_v].iter_mut().zip(&phi[k * n_v..]) {
            *out = c * f;
        }
    }
    let mut pi = DensityJoint::from_values(n.grid, potentials, values)?;
    pi.t = n.t;
    Ok(pi)
}

/// Separable construction from the autonomous first-passage density and survivor.
pub fn separable_solution(
    potentials: PotentialGrid,
    phi_auto: &[f64],
    survivor: &[f64],
    n: &DensityAge,
) -> Result<DensityJoint> {
    product_form(potentials, phi_auto, survivor, n)
}

/// Construction from the non-autonomous first-passage family at one time.
pub fn transform_solution(
    potentials: PotentialGrid,
    phi_t: &[f64],
    survivor_t: &[f64],
    n: &DensityAge,
) -> Result<DensityJoint> {
    product_form(potentials, phi_t, survivor_t, n)
}

/// `p(v) = Σ_k φ(a_k, v)·n(a_k)/P(a_k)·Δa`, the potential density obtained
/// from an age density through the first-passage family.
pub fn integral_transform(
    potentials: PotentialGrid,
    phi_t: &[f64],
    survivor_t: &[f64],
    n: &DensityAge,
) -> Result<DensityField1D> {
    Ok(marginal_potential(&product_form(potentials, phi_t, survivor_t, n)?))
}
