//! Scenario execution: runs every requested model, evaluates the declared
//! checks and collects the artifacts to be written.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use agepot::as1d::{as_step_with, survival_factors};
use agepot::fp1d::{Fp1dState, FpStepper};
use agepot::fpt::{solve_fpt_autonomous, solve_fpt_nonautonomous, FptOptions, FptSolution};
use agepot::joint2d::{empirical_hazard, marginal_age, marginal_potential, JointState, JointStepper};
use agepot::mc::{isi_histogram, isi_mean, psth, simulate_escape, simulate_joint, simulate_nlif, McOutput};
use agepot::{
    compare_series, AgeGrid, DensityJoint, Discrepancy, EscapeHazard, FiringRateSeries,
    HazardRate, HazardTable, PotentialGrid, Stimulus,
};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{hazard_table_csv, read_hazard_file, write_file, Table};
use crate::scenario::{CheckSpec, HazardSpec, Model, Scenario};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub kind: String,
    pub reference: String,
    pub candidate: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub reference: String,
    pub candidate: String,
    pub l1_rel: f64,
    pub linf_rel: f64,
}

/// Histogram over the scenario's ISI bins; Monte Carlo means only count intervals
/// starting early enough that the horizon cannot cut them off.
#[derive(Debug, Clone)]
pub struct IsiSummary {
    pub density: Vec<f64>,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    /// Firing rates averaged over the PSTH bins.
    pub rates: BTreeMap<Model, FiringRateSeries>,
    pub isi: BTreeMap<Model, IsiSummary>,
    pub comparisons: Vec<Comparison>,
    pub checks: Vec<CheckOutcome>,
    /// Relative path and content of every output file except the manifest.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn manifest(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            scenario: &'a Scenario,
            steps: usize,
            files: Vec<&'a str>,
            comparisons: &'a [Comparison],
            isi: Vec<IsiStats<'a>>,
            checks: &'a [CheckOutcome],
            passed: bool,
        }
        #[derive(Serialize)]
        struct IsiStats<'a> {
            model: &'a str,
            mean: f64,
            standard_error: f64,
        }
        let m = Manifest {
            scenario: &self.scenario,
            steps: self.scenario.n_steps(),
            files: self.artifacts.iter().map(|(p, _)| p.as_str()).collect(),
            comparisons: &self.comparisons,
            isi: self
                .isi
                .iter()
                .map(|(m, s)| IsiStats {
                    model: m.name(),
                    mean: s.mean,
                    standard_error: s.standard_error,
                })
                .collect(),
            checks: &self.checks,
            passed: self.passed(),
        };
        let mut bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Write every artifact and the manifest under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.artifacts.len() + 1);
        for (rel, bytes) in &self.artifacts {
            let p = dir.join(rel);
            write_file(&p, bytes)?;
            written.push(p);
        }
        let p = dir.join("manifest.json");
        write_file(&p, &self.manifest())?;
        written.push(p);
        Ok(written)
    }
}

/// First-passage hazard for a constant drive.
#[derive(Debug, Clone, PartialEq)]
pub struct FptParams {
    pub mu: f64,
    pub sigma: f64,
    pub v_r: f64,
    pub v_min: f64,
    pub n_v: usize,
    pub dt: f64,
    pub a_max: f64,
    pub warmup_cells: usize,
}

/// Solve the first-passage problem and return the hazard table together with
/// the `a,isi,survivor,hazard` table.
pub fn hazard_from_fpt(p: &FptParams) -> Result<(HazardTable, Table)> {
    let pg = PotentialGrid::new(p.v_min, p.v_r, p.n_v)?;
    let ag = AgeGrid::covering(p.dt, p.a_max)?;
    let sol = solve_fpt_autonomous(
        p.mu,
        p.sigma,
        pg,
        ag,
        FptOptions {
            warmup_cells: p.warmup_cells,
            keep_density: false,
        },
    )?;
    let table = fpt_table(&sol);
    Ok((sol.hazard, table))
}

fn fpt_table(sol: &FptSolution) -> Table {
    let mut t = Table::new(["a", "isi", "survivor", "hazard"]);
    let rows = sol.isi.iter().zip(&sol.survivor).zip(sol.hazard.row(0));
    for (k, ((&isi, &p), &s)) in rows.enumerate() {
        t.push(vec![sol.ages.node(k), isi, p, s]);
    }
    t
}

fn rate_table(models: &[Model], rates: &BTreeMap<Model, FiringRateSeries>) -> Option<Table> {
    let cols: Vec<Model> = models.iter().copied().filter(|m| rates.contains_key(m)).collect();
    let first = rates.get(cols.first()?)?;
    let mut t = Table::new(std::iter::once("t".to_string()).chain(cols.iter().map(|m| m.to_string())));
    for (i, &time) in first.times.iter().enumerate() {
        let mut row = vec![time];
        row.extend(cols.iter().map(|m| rates[m].rates[i]));
        t.push(row);
    }
    Some(t)
}

fn isi_table(models: &[Model], isi: &BTreeMap<Model, IsiSummary>, bin: f64) -> Option<Table> {
    let cols: Vec<Model> = models.iter().copied().filter(|m| isi.contains_key(m)).collect();
    let n = isi.get(cols.first()?)?.density.len();
    let mut t = Table::new(std::iter::once("a".to_string()).chain(cols.iter().map(|m| m.to_string())));
    for i in 0..n {
        let mut row = vec![(i as f64 + 0.5) * bin];
        row.extend(cols.iter().map(|m| isi[m].density[i]));
        t.push(row);
    }
    Some(t)
}

fn potential_snapshot(grid: &PotentialGrid, values: &[f64]) -> Vec<u8> {
    let mut t = Table::new(["v", "density"]);
    for (i, &x) in values.iter().enumerate() {
        t.push(vec![grid.center(i), x]);
    }
    t.to_csv()
}

fn age_snapshot(grid: &AgeGrid, values: &[f64]) -> Vec<u8> {
    let mut t = Table::new(["a", "density"]);
    for (k, &x) in values.iter().enumerate() {
        t.push(vec![grid.center(k), x]);
    }
    t.to_csv()
}

fn joint_snapshot(pi: &DensityJoint) -> Vec<u8> {
    let mut t = Table::new(["a", "v", "density"]);
    for k in 0..pi.ages.len() {
        let a = pi.ages.center(k);
        for (i, &x) in pi.slice(k).iter().enumerate() {
            t.push(vec![a, pi.potentials.center(i), x]);
        }
    }
    t.to_csv()
}

fn snapshot_name(model: Model, step: usize) -> String {
    format!("snapshots/{model}_step{step:07}.csv")
}

fn rel_l1(x: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = reference.iter().map(|b| b.abs()).sum();
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn isi_summary(out: &McOutput, sc: &Scenario) -> Result<IsiSummary> {
    let h = isi_histogram(&out.records, sc.isi.bin, sc.isi.bins, sc.isi.include_first)?;
    let latest_start = sc.horizon - sc.isi.bin * sc.isi.bins as f64;
    let (mean, standard_error) = match isi_mean(&out.records, latest_start) {
        Ok(m) if latest_start > 0.0 => (m.mean, m.standard_error()),
        _ => (h.mean, h.standard_error()),
    };
    Ok(IsiSummary {
        density: h.density,
        mean,
        standard_error,
    })
}

struct Run<'a> {
    sc: &'a Scenario,
    stim: Stimulus,
    snapshots: BTreeSet<usize>,
    rates: BTreeMap<Model, FiringRateSeries>,
    step_rates: BTreeMap<Model, FiringRateSeries>,
    isi: BTreeMap<Model, IsiSummary>,
    artifacts: Vec<(String, Vec<u8>)>,
    fpt_hazard: Option<HazardTable>,
    joint_hazard: Option<HazardTable>,
    joint_potential: BTreeMap<usize, Vec<f64>>,
    joint_age: BTreeMap<usize, Vec<f64>>,
    fp_marginals: BTreeMap<usize, Vec<f64>>,
    as_marginals: BTreeMap<usize, Vec<f64>>,
}

impl<'a> Run<'a> {
    fn bin_rates(&self, r: &FiringRateSeries) -> FiringRateSeries {
        r.bin_average(self.sc.dt, self.sc.mc.psth_bin, self.sc.horizon)
    }

    fn check_steps(&self, stride: impl Fn(&CheckSpec) -> Option<usize>) -> BTreeSet<usize> {
        let n = self.sc.n_steps();
        let mut set = BTreeSet::new();
        for c in &self.sc.checks {
            if let Some(k) = stride(c) {
                set.extend((0..=n).step_by(k));
                set.insert(n);
            }
        }
        set
    }

    fn run_fpt(&mut self) -> Result<()> {
        let uses = self.sc.has(Model::Fpt) || matches!(self.sc.hazard, Some(HazardSpec::FirstPassage));
        if !uses {
            return Ok(());
        }
        let pg = self.sc.potential_grid()?;
        let ag = self.sc.age_grid()?;
        if self.stim.is_constant() {
            let sol = solve_fpt_autonomous(
                self.stim.evaluate(0.0),
                self.stim.sigma(),
                pg,
                ag,
                FptOptions::default(),
            )?;
            if self.sc.has(Model::Fpt) {
                self.artifacts.push(("fpt.csv".into(), fpt_table(&sol).to_csv()));
                self.isi.insert(
                    Model::Fpt,
                    IsiSummary {
                        density: sol.binned_isi(self.sc.isi.bin, self.sc.isi.bins),
                        mean: sol.mean_isi(),
                        standard_error: 0.0,
                    },
                );
            }
            self.fpt_hazard = Some(sol.hazard);
        } else {
            let fam = solve_fpt_nonautonomous(&self.stim, pg, ag, self.sc.horizon, &[])?;
            if self.sc.has(Model::Fpt) {
                let t = hazard_table_csv(&fam.hazard, self.sc.output.hazard_time_stride);
                self.artifacts.push(("fpt_hazard.csv".into(), t.to_csv()));
            }
            self.fpt_hazard = Some(fam.hazard);
        }
        Ok(())
    }

    fn run_joint(&mut self) -> Result<()> {
        if !self.sc.has(Model::Joint) {
            return Ok(());
        }
        let pi0 = DensityJoint::product(&self.sc.initial_age()?, &self.sc.initial_potential()?);
        let record_hazard = matches!(self.sc.hazard, Some(HazardSpec::Joint));
        let checks = self.check_steps(|c| match c {
            CheckSpec::MarginalPotential { stride, .. } | CheckSpec::MarginalAge { stride, .. } => {
                Some(*stride)
            }
            _ => None,
        });
        let n_a = pi0.ages.len();
        let mut stepper = JointStepper::new(pi0.potentials, self.stim.sigma())?;
        let mut state = JointState::new(pi0);
        let mut hazard = Vec::new();
        for n in 0..=self.sc.n_steps() {
            if n > 0 {
                stepper.advance(&mut state, &self.stim)?;
                if record_hazard {
                    hazard.extend(empirical_hazard(&state));
                }
            }
            if self.snapshots.contains(&n) {
                self.artifacts.push((snapshot_name(Model::Joint, n), joint_snapshot(&state.pi)));
            }
            if checks.contains(&n) {
                self.joint_potential.insert(n, marginal_potential(&state.pi).values);
                self.joint_age.insert(n, marginal_age(&state.pi).values);
            }
        }
        if record_hazard {
            let dt = self.sc.dt;
            let table = HazardTable::new(0.5 * dt, dt, self.sc.n_steps(), dt, n_a + 1, hazard)?;
            self.joint_hazard = Some(table);
        }
        let r = state.r_history;
        self.rates.insert(Model::Joint, self.bin_rates(&r));
        self.step_rates.insert(Model::Joint, r);
        Ok(())
    }

    fn run_fp(&mut self) -> Result<()> {
        if !self.sc.has(Model::Fp) {
            return Ok(());
        }
        let p0 = self.sc.initial_potential()?;
        let grid = p0.grid;
        let checks = self.check_steps(|c| match c {
            CheckSpec::MarginalPotential { stride, .. } => Some(*stride),
            _ => None,
        });
        let mut stepper = FpStepper::new(grid, self.stim.sigma())?;
        let mut state = Fp1dState::new(p0);
        for n in 0..=self.sc.n_steps() {
            if n > 0 {
                stepper.advance(&mut state, &self.stim, n as f64 * self.sc.dt)?;
            }
            if self.snapshots.contains(&n) {
                self.artifacts
                    .push((snapshot_name(Model::Fp, n), potential_snapshot(&grid, &state.p.values)));
            }
            if checks.contains(&n) {
                self.fp_marginals.insert(n, state.p.values.clone());
            }
        }
        let r = state.r_history;
        self.rates.insert(Model::Fp, self.bin_rates(&r));
        self.step_rates.insert(Model::Fp, r);
        Ok(())
    }

    fn hazard(&self) -> Result<Box<dyn HazardRate>> {
        let sc = self.sc;
        Ok(match sc.hazard.as_ref().ok_or_else(|| CliError::Config("no hazard".into()))? {
            HazardSpec::Escape { tau, h } => {
                Box::new(EscapeHazard::new(h.build(sc.horizon, sc.dt)?, *tau)?)
            }
            HazardSpec::FirstPassage => Box::new(self.fpt_hazard.clone().expect("fpt ran first")),
            HazardSpec::Joint => Box::new(self.joint_hazard.clone().expect("joint ran first")),
            HazardSpec::File { .. } => {
                Box::new(read_hazard_file(&sc.hazard_path().expect("file hazard"))?)
            }
        })
    }

    fn hazard_artifact(&mut self) -> Result<()> {
        if !(self.sc.has(Model::As) || self.sc.has(Model::McEscape)) {
            return Ok(());
        }
        let table = match self.sc.hazard {
            Some(HazardSpec::FirstPassage) => self.fpt_hazard.clone(),
            Some(HazardSpec::Joint) => self.joint_hazard.clone(),
            _ => None,
        };
        if let Some(t) = table {
            let csv = hazard_table_csv(&t, self.sc.output.hazard_time_stride).to_csv();
            self.artifacts.push(("hazard.csv".into(), csv));
        }
        Ok(())
    }

    fn run_as(&mut self) -> Result<()> {
        if !self.sc.has(Model::As) {
            return Ok(());
        }
        let hazard = self.hazard()?;
        let mut n = self.sc.initial_age()?;
        let grid = n.grid;
        let dt = self.sc.dt;
        let checks = self.check_steps(|c| match c {
            CheckSpec::MarginalAge { stride, .. } => Some(*stride),
            _ => None,
        });
        let fixed = if hazard.is_autonomous() {
            Some(survival_factors(hazard.as_ref(), 0.0, dt, grid.len(), grid.da())?)
        } else {
            None
        };
        let mut rates = FiringRateSeries::default();
        for step in 0..=self.sc.n_steps() {
            if step > 0 {
                let t = (step - 1) as f64 * dt;
                let r = match &fixed {
                    Some(keep) => as_step_with(&mut n, keep, dt)?,
                    None => {
                        let keep = survival_factors(hazard.as_ref(), t, dt, grid.len(), grid.da())?;
                        as_step_with(&mut n, &keep, dt)?
                    }
                };
                n.t = step as f64 * dt;
                rates.push(n.t, r);
            }
            if self.snapshots.contains(&step) {
                self.artifacts
                    .push((snapshot_name(Model::As, step), age_snapshot(&grid, &n.values)));
            }
            if checks.contains(&step) {
                self.as_marginals.insert(step, n.values.clone());
            }
        }
        self.rates.insert(Model::As, self.bin_rates(&rates));
        self.step_rates.insert(Model::As, rates);
        Ok(())
    }

    fn run_mc(&mut self) -> Result<()> {
        let sc = self.sc;
        let models: Vec<Model> = sc.models.iter().copied().filter(|m| m.is_monte_carlo()).collect();
        if models.is_empty() {
            return Ok(());
        }
        let mc = sc.mc_config()?;
        for m in models {
            let out = match m {
                Model::McNlif => {
                    simulate_nlif(&self.stim, sc.potential.v_r, &sc.mc_initial_potential()?, &mc)?
                }
                Model::McJoint => {
                    simulate_joint(&self.stim, sc.potential.v_r, &sc.mc_initial_potential()?, &mc)?
                }
                Model::McEscape => {
                    let hazard = self.hazard()?;
                    simulate_escape(hazard.as_ref(), &sc.mc_initial_age()?, &mc)?
                }
                _ => unreachable!("filtered to Monte Carlo models"),
            };
            self.rates.insert(m, psth(&out.records, sc.mc.psth_bin, sc.horizon)?);
            if out.records.iter().any(|r| r.spike_times.len() > 1 || sc.isi.include_first) {
                if let Ok(summary) = isi_summary(&out, sc) {
                    self.isi.insert(m, summary);
                }
            }
            if m == Model::McJoint {
                let mut t = Table::new(["a", "v"]);
                for &(a, v) in &out.finals {
                    t.push(vec![a, v]);
                }
                self.artifacts.push(("mc-joint_final.csv".into(), t.to_csv()));
            }
        }
        Ok(())
    }

    fn missing(&self, what: &str, m: Model) -> CliError {
        CliError::Numerical(agepot::Error::Config(format!("model {m} produced no {what}")))
    }

    fn evaluate(&self, c: &CheckSpec) -> Result<Vec<CheckOutcome>> {
        let outcome = |kind: &str, reference: &str, candidate: &str, value: f64, tolerance: f64| {
            CheckOutcome {
                kind: kind.into(),
                reference: reference.into(),
                candidate: candidate.into(),
                value,
                tolerance,
                passed: value <= tolerance,
            }
        };
        Ok(match *c {
            CheckSpec::Rate {
                reference,
                candidate,
                tolerance,
                skip_bins,
            } => {
                let x = self.rates.get(&reference).ok_or_else(|| self.missing("rate", reference))?;
                let y = self.rates.get(&candidate).ok_or_else(|| self.missing("rate", candidate))?;
                let d = compare_series(&x.skip(skip_bins), &y.skip(skip_bins))?;
                vec![outcome("rate", reference.name(), candidate.name(), d.l1_rel, tolerance)]
            }
            CheckSpec::Isi {
                reference,
                candidate,
                tolerance,
            } => {
                let x = self.isi.get(&reference).ok_or_else(|| self.missing("ISI", reference))?;
                let y = self.isi.get(&candidate).ok_or_else(|| self.missing("ISI", candidate))?;
                let v = rel_l1(&y.density, &x.density);
                vec![outcome("isi", reference.name(), candidate.name(), v, tolerance)]
            }
            CheckSpec::MeanIsi {
                reference,
                candidate,
                standard_errors,
            } => {
                let x = self.isi.get(&reference).ok_or_else(|| self.missing("ISI", reference))?;
                let y = self.isi.get(&candidate).ok_or_else(|| self.missing("ISI", candidate))?;
                let v = (x.mean - y.mean).abs() / y.standard_error;
                vec![outcome("mean-isi", reference.name(), candidate.name(), v, standard_errors)]
            }
            CheckSpec::MarginalPotential { tolerance, .. } => {
                let worst = self
                    .fp_marginals
                    .iter()
                    .map(|(n, p)| rel_l1(&self.joint_potential[n], p))
                    .fold(0.0, f64::max);
                let rates = compare_series(&self.step_rates[&Model::Fp], &self.step_rates[&Model::Joint])?;
                vec![
                    outcome("marginal-potential", "fp", "joint", worst, tolerance),
                    outcome("rate-identity", "fp", "joint", rates.linf_rel, tolerance),
                ]
            }
            CheckSpec::MarginalAge { tolerance, .. } => {
                let worst = self
                    .as_marginals
                    .iter()
                    .map(|(n, a)| rel_l1(&self.joint_age[n], a))
                    .fold(0.0, f64::max);
                vec![outcome("marginal-age", "as", "joint", worst, tolerance)]
            }
        })
    }
}

/// Execute every model of `scenario` and evaluate its checks.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let mut sc = scenario.clone();
    if let Some(seed) = opts.seed {
        sc.mc.seed = seed;
    }
    if let Some(stride) = opts.snapshot_stride {
        sc.output.snapshot_stride = stride;
    }
    sc.validate()?;
    let n_steps = sc.n_steps();
    let mut snapshots: BTreeSet<usize> = sc
        .output
        .snapshot_times
        .iter()
        .map(|t| ((t / sc.dt).round() as usize).min(n_steps))
        .collect();
    if sc.output.snapshot_stride > 0 {
        snapshots.extend((0..=n_steps).step_by(sc.output.snapshot_stride));
    }

    let mut run = Run {
        sc: &sc,
        stim: sc.stimulus()?,
        snapshots,
        rates: BTreeMap::new(),
        step_rates: BTreeMap::new(),
        isi: BTreeMap::new(),
        artifacts: Vec::new(),
        fpt_hazard: None,
        joint_hazard: None,
        joint_potential: BTreeMap::new(),
        joint_age: BTreeMap::new(),
        fp_marginals: BTreeMap::new(),
        as_marginals: BTreeMap::new(),
    };
    run.run_fpt()?;
    run.run_joint()?;
    run.run_fp()?;
    run.hazard_artifact()?;
    run.run_as()?;
    run.run_mc()?;

    let rate_models: Vec<Model> = sc.models.iter().copied().filter(|m| run.rates.contains_key(m)).collect();
    let mut comparisons = Vec::new();
    for (i, &x) in rate_models.iter().enumerate() {
        for &y in &rate_models[i + 1..] {
            let Discrepancy { l1_rel, linf_rel } = compare_series(&run.rates[&x], &run.rates[&y])?;
            comparisons.push(Comparison {
                reference: x.to_string(),
                candidate: y.to_string(),
                l1_rel,
                linf_rel,
            });
        }
    }
    let mut checks = Vec::new();
    for c in &sc.checks {
        checks.extend(run.evaluate(c)?);
    }

    let mut artifacts = std::mem::take(&mut run.artifacts);
    if let Some(t) = rate_table(&sc.models, &run.rates) {
        artifacts.push(("rates.csv".into(), t.to_csv()));
    }
    if let Some(t) = isi_table(&sc.models, &run.isi, sc.isi.bin) {
        artifacts.push(("isi.csv".into(), t.to_csv()));
    }
    if !comparisons.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["reference", "candidate", "l1_rel", "linf_rel"])
            .expect("in-memory write");
        for c in &comparisons {
            w.write_record([
                c.reference.clone(),
                c.candidate.clone(),
                format!("{:e}", c.l1_rel),
                format!("{:e}", c.linf_rel),
            ])
            .expect("in-memory write");
        }
        artifacts.push(("comparisons.csv".into(), w.into_inner().expect("in-memory flush")));
    }
    artifacts.sort_by(|a, b| a.0.cmp(&b.0));

    let rates = std::mem::take(&mut run.rates);
    let isi = std::mem::take(&mut run.isi);
    drop(run);
    Ok(RunReport {
        scenario: sc,
        rates,
        isi,
        comparisons,
        checks,
        artifacts,
    })
}
