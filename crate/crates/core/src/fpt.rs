//! First-passage problem: the potential density of a neuron released at `v_r`
//! at age 0, evolved with the absorbing threshold and no reinjection.
//!
//! The threshold flux is the inter-spike interval density, the surviving mass
//! is the survivor function, and their ratio is the hazard. Hazards are stored
//! in the exact discrete form `exp(−S·dt) = P(a + dt)/P(a)` so that the
//! age-structured solver driven by them reproduces the survivor decay step for
//! step.
//!
//! Ages are indexed by steps: `φ_k` is the density `k` steps after release,
//! `ISI_k` the flux absorbed during step `k`, and the hazard governing the
//! transition `k − 1 → k` sits at age node `k·Δa`.

use rayon::prelude::*;

use crate::density::{deposit_delta, mass};
use crate::error::{Error, Result};
use crate::grid::{AgeGrid, PotentialGrid};
use crate::hazard::HazardTable;
use crate::operator::ImplicitStep;
use crate::series::bin_index;
use crate::slices::{hazard_nodes, shift_ages, slice_masses, step_hazard, step_slices};
use crate::stimulus::Stimulus;
use crate::{MASS_TOLERANCE, SURVIVOR_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptOptions {
    /// Number of leading age cells whose reported ISI is replaced by a linear
    /// ramp from zero (their raw values are polluted by the point release).
    pub warmup_cells: usize,
    /// Keep `φ_k` for every age cell.
    pub keep_density: bool,
}

impl Default for FptOptions {
    fn default() -> Self {
        Self {
            warmup_cells: 2,
            keep_density: false,
        }
    }
}

/// Autonomous first-passage solution on `n_a` age cells.
#[derive(Debug, Clone)]
pub struct FptSolution {
    pub ages: AgeGrid,
    pub potentials: PotentialGrid,
    /// `P_k`, k = 0..=n_a.
    pub survivor: Vec<f64>,
    /// Raw threshold flux `ISI_k`, k = 0..=n_a (`ISI_0 = 0`).
    pub isi_raw: Vec<f64>,
    /// `isi_raw` with the warm-up ramp applied.
    pub isi: Vec<f64>,
    /// Hazard at age nodes 0..=n_a.
    pub hazard: HazardTable,
    /// `φ_k` for k = 0..n_a, slice-major, when requested.
    pub density: Option<Vec<f64>>,
}

impl FptSolution {
    pub fn dt(&self) -> f64 {
        self.ages.da()
    }

    /// Mean of the discrete ISI distribution (interval `k·dt` with mass
    /// `ISI_k·dt`), normalized by the absorbed mass.
    pub fn mean_isi(&self) -> f64 {
        let dt = self.dt();
        let (num, den) = self
            .isi_raw
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(n, d), (k, &f)| (n + k as f64 * dt * f, d + f));
        num / den
    }

    /// ISI density averaged over bins `[j·bin, (j+1)·bin)`, using the same
    /// assignment of the interval `k·dt` to bins as the Monte Carlo histogram.
    pub fn binned_isi(&self, bin: f64, n_bins: usize) -> Vec<f64> {
        let dt = self.dt();
        let mut out = vec![0.0; n_bins];
        for (k, &f) in self.isi_raw.iter().enumerate() {
            let j = bin_index(k as f64 * dt, bin);
            if j < n_bins {
                out[j] += f * dt / bin;
            }
        }
        out
    }

    pub fn slice(&self, k: usize) -> Option<&[f64]> {
        let n_v = self.potentials.len();
        self.density.as_ref().map(|d| &d[k * n_v..(k + 1) * n_v])
    }
}

fn apply_warmup(raw: &[f64], cells: usize) -> Vec<f64> {
    let mut out = raw.to_vec();
    if cells > 0 && cells + 1 < raw.len() {
        let anchor = raw[cells + 1];
        for (k, x) in out.iter_mut().enumerate().take(cells + 1).skip(1) {
            *x = anchor * k as f64 / (cells + 1) as f64;
        }
    }
    out
}

/// Solve the first-passage problem under the constant drive `μ`.
pub fn solve_fpt_autonomous(
    mu: f64,
    sigma: f64,
    potentials: PotentialGrid,
    ages: AgeGrid,
    opts: FptOptions,
) -> Result<FptSolution> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
    }
    let dt = ages.da();
    let n_a = ages.len();
    let n_v = potentials.len();
    let dv = potentials.dv();
    let op = ImplicitStep::new(&potentials, 0.5 * sigma * sigma, mu, dt);

    let mut phi = vec![0.0; n_v];
    deposit_delta(&potentials, potentials.v_r(), 1.0)?.apply(&mut phi);
    let mut density = opts.keep_density.then(|| {
        let mut d = Vec::with_capacity(n_a * n_v);
        d.extend_from_slice(&phi);
        d
    });

    let mut survivor = vec![1.0; n_a + 1];
    let mut isi = vec![0.0; n_a + 1];
    let mut hazard = vec![0.0; n_a + 1];
    let mut absorbed = 0.0;
    let mut last_good = 0.0;
    for k in 1..=n_a {
        op.solve_in_place(&mut phi);
        isi[k] = op.threshold_flux(&phi);
        survivor[k] = mass(&phi, dv);
        absorbed += isi[k] * dt;
        let defect = survivor[k] + absorbed - 1.0;
        if defect.abs() > MASS_TOLERANCE {
            return Err(Error::MassAccounting {
                age: ages.node(k),
                defect,
            });
        }
        hazard[k] = step_hazard(isi[k], survivor[k - 1], dt, SURVIVOR_FLOOR).unwrap_or(last_good);
        last_good = hazard[k];
        if let Some(d) = density.as_mut() {
            if k < n_a {
                d.extend_from_slice(&phi);
            }
        }
    }
    hazard[0] = hazard[1];
    Ok(FptSolution {
        ages,
        potentials,
        isi: apply_warmup(&isi, opts.warmup_cells),
        isi_raw: isi,
        survivor,
        hazard: HazardTable::autonomous(dt, hazard)?,
        density,
    })
}

/// Non-autonomous first-passage family `φ(t, a, v)`: the density at time `t`
/// of neurons released at `v_r` at time `t − a`.
#[derive(Debug, Clone)]
pub struct FptNonAutonomous {
    pub ages: AgeGrid,
    pub potentials: PotentialGrid,
    pub dt: f64,
    pub n_steps: usize,
    /// `P(t_n, a_k)`, row-major `(n_steps + 1) × n_a`.
    pub survivor: Vec<f64>,
    /// Threshold flux of each slice at `t_n`, row-major like `survivor`.
    pub isi: Vec<f64>,
    /// Hazard for each step: time nodes `t_n + dt/2`, age nodes `0..=n_a`.
    pub hazard: HazardTable,
    /// `(step index, φ)` pairs for the requested snapshot steps.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    /// `φ` at the final time.
    pub current: Vec<f64>,
}

impl FptNonAutonomous {
    pub fn survivor_at(&self, n: usize, k: usize) -> f64 {
        self.survivor[n * self.ages.len() + k]
    }

    pub fn isi_at(&self, n: usize, k: usize) -> f64 {
        self.isi[n * self.ages.len() + k]
    }

    pub fn survivor_row(&self, n: usize) -> &[f64] {
        let n_a = self.ages.len();
        &self.survivor[n * n_a..(n + 1) * n_a]
    }

    pub fn snapshot(&self, n: usize) -> Option<&[f64]> {
        self.snapshots
            .iter()
            .find(|(m, _)| *m == n)
            .map(|(_, s)| s.as_slice())
    }
}

/// Evolve `φ(t, a, v)` from the autonomous solution at `μ(0)`: each step
/// shifts ages by one cell, applies the potential step to every slice, and
/// refills age 0 with a fresh unit release at `v_r`.
pub fn solve_fpt_nonautonomous(
    s: &Stimulus,
    potentials: PotentialGrid,
    ages: AgeGrid,
    horizon: f64,
    snapshot_steps: &[usize],
) -> Result<FptNonAutonomous> {
    let dt = ages.da();
    crate::fp1d::check_step(dt, horizon)?;
    let n_steps = (horizon / dt).round() as usize;
    let n_a = ages.len();
    let n_v = potentials.len();
    let dv = potentials.dv();
    let diffusion = s.diffusion();

    let auto = solve_fpt_autonomous(
        s.evaluate(0.0),
        s.sigma(),
        potentials,
        ages,
        FptOptions {
            keep_density: true,
            ..FptOptions::default()
        },
    )?;
    let mut phi = auto.density.expect("density requested");
    let release = deposit_delta(&potentials, potentials.v_r(), 1.0)?;

    let mut survivor = Vec::with_capacity((n_steps + 1) * n_a);
    let mut isi = Vec::with_capacity((n_steps + 1) * n_a);
    survivor.extend_from_slice(&auto.survivor[..n_a]);
    let op0 = ImplicitStep::new(&potentials, diffusion, s.evaluate(0.0), dt);
    isi.extend(phi.par_chunks(n_v).map(|sl| op0.threshold_flux(sl)).collect::<Vec<_>>());

    let mut hazard = Vec::with_capacity(n_steps * (n_a + 1));
    let mut snapshots = Vec::new();
    if snapshot_steps.contains(&0) {
        snapshots.push((0, phi.clone()));
    }
    let mut pre = vec![0.0; n_a];
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let prev = &survivor[n * n_a..(n + 1) * n_a];
        pre[1..n_a].copy_from_slice(&prev[..n_a - 1]);
        pre[n_a - 1] += prev[n_a - 1];

        shift_ages(&mut phi, n_v);
        let op = ImplicitStep::new(&potentials, diffusion, s.evaluate(t + 0.5 * dt), dt);
        let (flux, _) = step_slices(&mut phi, n_v, &op, dv);
        release.apply(&mut phi[..n_v]);

        let mut p = slice_masses(&phi, n_v, dv);
        p[0] = 1.0;
        let mut f = flux;
        f[0] = op.threshold_flux(&phi[..n_v]);
        hazard.extend(hazard_nodes(&f, &pre, dt, SURVIVOR_FLOOR));
        survivor.extend_from_slice(&p);
        isi.extend_from_slice(&f);
        if snapshot_steps.contains(&(n + 1)) {
            snapshots.push((n + 1, phi.clone()));
        }
    }
    let hazard = if n_steps == 0 {
        HazardTable::from_fn(0.5 * dt, dt, 1, dt, n_a + 1, |_, a| {
            auto.hazard.row(0)[(a / dt).round() as usize]
        })?
    } else {
        HazardTable::new(0.5 * dt, dt, n_steps, dt, n_a + 1, hazard)?
    };
    Ok(FptNonAutonomous {
        ages,
        potentials,
        dt,
        n_steps,
        survivor,
        isi,
        hazard,
        snapshots,
        current: phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> (PotentialGrid, AgeGrid) {
        (
            PotentialGrid::new(-4.0, 0.5, 400).unwrap(),
            AgeGrid::with_step(1e-3, 1000).unwrap(),
        )
    }

    #[test]
    fn survived_plus_fired_is_one() {
        let (pg, ag) = grids();
        let sol = solve_fpt_autonomous(3.0, 0.3, pg, ag, FptOptions::default()).unwrap();
        let mut fired = 0.0;
        for k in 0..=ag.len() {
            fired += sol.isi_raw[k] * ag.da();
            assert!((sol.survivor[k] + fired - 1.0).abs() < 1e-6);
        }
        assert_eq!(sol.survivor[0], 1.0);
        assert!(sol.survivor.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(sol.isi.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn hazard_is_nonnegative_and_zero_without_flux() {
        let (pg, ag) = grids();
        let sol = solve_fpt_autonomous(3.0, 0.3, pg, ag, FptOptions::default()).unwrap();
        let row = sol.hazard.row(0);
        assert!(row.iter().all(|&s| s >= 0.0));
        for (&s, &f) in row.iter().zip(&sol.isi_raw).take(ag.len()).skip(1) {
            if f == 0.0 {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn warmup_ramp_replaces_first_cells() {
        let raw = vec![0.0, 5.0, 7.0, 3.0, 2.0];
        assert_eq!(apply_warmup(&raw, 2), vec![0.0, 1.0, 2.0, 3.0, 2.0]);
        assert_eq!(apply_warmup(&raw, 0), raw);
    }

    #[test]
    fn constant_stimulus_slices_match_autonomous() {
        let pg = PotentialGrid::new(-4.0, 0.5, 200).unwrap();
        let ag = AgeGrid::with_step(2e-3, 500).unwrap();
        let s = Stimulus::constant(3.0, 0.3).unwrap();
        let na = solve_fpt_nonautonomous(&s, pg, ag, 0.2, &[50, 100]).unwrap();
        let auto = solve_fpt_autonomous(
            3.0,
            0.3,
            pg,
            ag,
            FptOptions { keep_density: true, ..FptOptions::default() },
        )
        .unwrap();
        for n in [50usize, 100] {
            let snap = na.snapshot(n).unwrap();
            for k in 0..ag.len() {
                let a = &snap[k * 200..(k + 1) * 200];
                let b = auto.slice(k).unwrap();
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * pg.dv();
                assert!(d < 1e-6, "step {n} slice {k}: {d}");
            }
        }
        for n in 0..=na.n_steps {
            assert_eq!(na.survivor_at(n, 0), 1.0);
        }
    }
}
