//! Scenario files: TOML documents naming the models to run, the stimulus,
//! grids, Monte Carlo settings, initial conditions, hazard source, outputs
//! and tolerance checks.

use std::fmt;
use std::path::{Path, PathBuf};

use agepot::mc::{Initial, McConfig};
use agepot::{AgeGrid, DensityAge, DensityField1D, Drive, PotentialGrid, Stimulus};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    McNlif,
    McEscape,
    McJoint,
    Fp,
    As,
    Fpt,
    Joint,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::McNlif => "mc-nlif",
            Model::McEscape => "mc-escape",
            Model::McJoint => "mc-joint",
            Model::Fp => "fp",
            Model::As => "as",
            Model::Fpt => "fpt",
            Model::Joint => "joint",
        }
    }

    pub fn has_rate(self) -> bool {
        !matches!(self, Model::Fpt)
    }

    pub fn has_isi(self) -> bool {
        matches!(self, Model::Fpt | Model::McNlif | Model::McEscape | Model::McJoint)
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Model::McNlif | Model::McEscape | Model::McJoint)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean drive over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriveSpec {
    Constant { value: f64 },
    /// `mean + amplitude·sin(2πt/period)`, tabulated every `step` (default dt/4).
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
        step: Option<f64>,
    },
    /// `(t, value)` pairs, linearly interpolated and clamped.
    Samples { points: Vec<[f64; 2]> },
}

impl DriveSpec {
    pub fn build(&self, horizon: f64, dt: f64) -> Result<Drive> {
        Ok(match self {
            DriveSpec::Constant { value } => Drive::Constant(*value),
            DriveSpec::Sinusoid {
                mean,
                amplitude,
                period,
                step,
            } => Drive::sinusoid(*mean, *amplitude, *period, horizon + dt, step.unwrap_or(dt / 4.0))?,
            DriveSpec::Samples { points } => {
                Drive::Sampled(points.iter().map(|p| (p[0], p[1])).collect())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusSpec {
    pub sigma: f64,
    pub mu: DriveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub v_min: f64,
    pub v_r: f64,
    pub n_v: usize,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            v_min: -4.0,
            v_r: 0.5,
            n_v: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeSpec {
    pub a_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSpec {
    pub trials: usize,
    pub seed: u64,
    /// Step of the Monte Carlo engines; defaults to the solver step.
    pub dt: Option<f64>,
    pub psth_bin: f64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            dt: None,
            psth_bin: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsiSpec {
    pub bin: f64,
    pub bins: usize,
    /// Count the interval from `t = 0` to the first spike.
    pub include_first: bool,
}

impl Default for IsiSpec {
    fn default() -> Self {
        Self {
            bin: 0.01,
            bins: 100,
            include_first: false,
        }
    }
}

/// Initial distribution of one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    Point { value: f64 },
    Gaussian { mean: f64, std: f64 },
    /// CSV with header `x,density` giving cell averages on the solver grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub potential: Distribution,
    pub age: Distribution,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            potential: Distribution::Point { value: 0.5 },
            age: Distribution::Point { value: 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HazardSpec {
    /// `exp(h(t)) · (1 − e^{−a/τ})`.
    Escape { tau: f64, h: DriveSpec },
    /// Hazard of the first-passage problem for this scenario's stimulus.
    FirstPassage,
    /// Empirical hazard recorded by the joint solver.
    Joint,
    /// CSV with header `a,hazard` or `t,a,hazard`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub snapshot_times: Vec<f64>,
    /// Also snapshot every this many solver steps (0 disables).
    pub snapshot_stride: usize,
    /// Keep every this many time rows of time-dependent hazard tables.
    pub hazard_time_stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            snapshot_stride: 0,
            hazard_time_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Relative L1 discrepancy of binned firing rates.
    Rate {
        reference: Model,
        candidate: Model,
        tolerance: f64,
        #[serde(default)]
        skip_bins: usize,
    },
    /// Relative L1 discrepancy of ISI histograms.
    Isi {
        reference: Model,
        candidate: Model,
        tolerance: f64,
    },
    /// Mean ISI difference in units of the candidate's standard error.
    MeanIsi {
        reference: Model,
        candidate: Model,
        standard_errors: f64,
    },
    /// Joint potential marginal against the fp solver at every check step,
    /// and the per-step firing rates.
    MarginalPotential {
        tolerance: f64,
        #[serde(default = "default_check_stride")]
        stride: usize,
    },
    /// Joint age marginal against the as solver at every check step.
    MarginalAge {
        tolerance: f64,
        #[serde(default = "default_check_stride")]
        stride: usize,
    },
}

fn default_check_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub models: Vec<Model>,
    pub horizon: f64,
    /// Solver step; also the age cell width.
    pub dt: f64,
    pub stimulus: StimulusSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub age: Option<AgeSpec>,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub isi: IsiSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub hazard: Option<HazardSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, rename = "check")]
    pub checks: Vec<CheckSpec>,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        s.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn has(&self, m: Model) -> bool {
        self.models.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(bad("name must not be empty"));
        }
        if self.models.is_empty() {
            return Err(bad("at least one model is required"));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(bad("models are listed more than once"));
        }
        if !(self.dt > 0.0 && self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(bad(format!(
                "need dt > 0 and horizon >= dt, got dt = {}, horizon = {}",
                self.dt, self.horizon
            )));
        }
        self.stimulus()?;
        self.potential_grid()?;
        let needs_age = self.has(Model::As) || self.has(Model::Joint) || self.has(Model::Fpt);
        if needs_age {
            self.age_grid()?;
        }
        if self.has(Model::McNlif) || self.has(Model::McEscape) || self.has(Model::McJoint) {
            self.mc_config()?;
        }
        if !(self.mc.psth_bin > 0.0) {
            return Err(bad("mc.psth_bin must be > 0"));
        }
        if !(self.isi.bin > 0.0) || self.isi.bins == 0 {
            return Err(bad("isi needs bin > 0 and bins >= 1"));
        }
        let needs_hazard = self.has(Model::As) || self.has(Model::McEscape);
        match (&self.hazard, needs_hazard) {
            (None, true) => return Err(bad("models as/mc-escape need a [hazard] section")),
            (Some(HazardSpec::Joint), _) if !self.has(Model::Joint) => {
                return Err(bad("hazard kind 'joint' needs the joint model"))
            }
            (Some(HazardSpec::FirstPassage), _) => {
                self.age_grid()?;
            }
            (Some(HazardSpec::Joint), _) if self.has(Model::McEscape) => {
                return Err(bad("hazard kind 'joint' is only available to the as model"))
            }
            (Some(HazardSpec::Escape { tau, h }), _) => {
                if !(*tau > 0.0) {
                    return Err(bad("hazard tau must be > 0"));
                }
                h.build(self.horizon, self.dt)?.validate()?;
            }
            _ => {}
        }
        if self.output.hazard_time_stride == 0 {
            return Err(bad("output.hazard_time_stride must be >= 1"));
        }
        if let Some(t) = self.output.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.horizon)) {
            return Err(bad(format!("snapshot time {t} outside [0, horizon]")));
        }
        for c in &self.checks {
            self.validate_check(c)?;
        }
        Ok(())
    }

    fn validate_check(&self, c: &CheckSpec) -> Result<()> {
        let need = |m: Model| -> Result<()> {
            if self.has(m) {
                Ok(())
            } else {
                Err(bad(format!("check refers to model {m}, which is not run")))
            }
        };
        let positive = |x: f64| -> Result<()> {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("check tolerance must be finite and >= 0, got {x}")))
            }
        };
        match *c {
            CheckSpec::Rate {
                reference,
                candidate,
                tolerance,
                ..
            } => {
                need(reference)?;
                need(candidate)?;
                positive(tolerance)?;
                if !reference.has_rate() || !candidate.has_rate() {
                    return Err(bad("rate checks need rate-producing models"));
                }
            }
            CheckSpec::Isi {
                reference,
                candidate,
                tolerance,
            } => {
                need(reference)?;
                need(candidate)?;
                positive(tolerance)?;
                if !reference.has_isi() || !candidate.has_isi() {
                    return Err(bad("isi checks need fpt or Monte Carlo models"));
                }
            }
            CheckSpec::MeanIsi {
                reference,
                candidate,
                standard_errors,
            } => {
                need(reference)?;
                need(candidate)?;
                positive(standard_errors)?;
                if !reference.has_isi() || !candidate.is_monte_carlo() {
                    return Err(bad("mean-isi checks compare an ISI model against a Monte Carlo model"));
                }
            }
            CheckSpec::MarginalPotential { tolerance, stride } => {
                need(Model::Joint)?;
                need(Model::Fp)?;
                positive(tolerance)?;
                if stride == 0 {
                    return Err(bad("check stride must be >= 1"));
                }
            }
            CheckSpec::MarginalAge { tolerance, stride } => {
                need(Model::Joint)?;
                need(Model::As)?;
                positive(tolerance)?;
                if stride == 0 {
                    return Err(bad("check stride must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn stimulus(&self) -> Result<Stimulus> {
        let drive = self.stimulus.mu.build(self.horizon, self.dt)?;
        Ok(Stimulus::new(drive, self.stimulus.sigma)?)
    }

    pub fn potential_grid(&self) -> Result<PotentialGrid> {
        let p = &self.potential;
        Ok(PotentialGrid::new(p.v_min, p.v_r, p.n_v)?)
    }

    pub fn age_grid(&self) -> Result<AgeGrid> {
        let a = self
            .age
            .as_ref()
            .ok_or_else(|| bad("models as/joint/fpt need an [age] section"))?;
        Ok(AgeGrid::covering(self.dt, a.a_max)?)
    }

    pub fn mc_dt(&self) -> f64 {
        self.mc.dt.unwrap_or(self.dt)
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        Ok(McConfig::new(self.mc_dt(), self.horizon, self.mc.trials, self.mc.seed)?)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn hazard_path(&self) -> Option<PathBuf> {
        match &self.hazard {
            Some(HazardSpec::File { path }) => Some(self.resolve(path)),
            _ => None,
        }
    }

    /// Cell averages of the initial potential density on the solver grid.
    pub fn initial_potential(&self) -> Result<DensityField1D> {
        let g = self.potential_grid()?;
        Ok(match &self.initial.potential {
            Distribution::Point { value } => DensityField1D::point(g, *value)?,
            Distribution::Gaussian { mean, std } => DensityField1D::gaussian(g, *mean, *std)?,
            Distribution::File { path } => {
                let values = read_cell_file(&self.resolve(path), g.len())?;
                DensityField1D::from_values(g, normalized(values, g.dv())?)?
            }
        })
    }

    /// Cell averages of the initial age density on the age grid.
    pub fn initial_age(&self) -> Result<DensityAge> {
        let g = self.age_grid()?;
        Ok(match &self.initial.age {
            Distribution::Point { value } => {
                let k = (value / g.da()).floor();
                if !(k >= 0.0 && (k as usize) < g.len()) {
                    return Err(bad(format!("initial age {value} outside the age grid")));
                }
                let mut n = DensityAge::zeros(g);
                n.values[k as usize] = 1.0 / g.da();
                n
            }
            Distribution::Gaussian { mean, std } => DensityAge::gaussian(g, *mean, *std)?,
            Distribution::File { path } => {
                let values = read_cell_file(&self.resolve(path), g.len())?;
                DensityAge::from_values(g, normalized(values, g.da())?)?
            }
        })
    }

    /// Per-trial initial potential for the Monte Carlo engines.
    pub fn mc_initial_potential(&self) -> Result<Initial> {
        Ok(match &self.initial.potential {
            Distribution::Point { value } => Initial::Point(*value),
            Distribution::Gaussian { mean, std } => Initial::Gaussian {
                mean: *mean,
                std: *std,
            },
            Distribution::File { .. } => {
                let p = self.initial_potential()?;
                Initial::cells(p.grid.v_min(), p.grid.dv(), &p.values)?
            }
        })
    }

    /// Per-trial initial age for the escape engine.
    pub fn mc_initial_age(&self) -> Result<Initial> {
        Ok(match &self.initial.age {
            Distribution::Point { value } => Initial::Point(*value),
            Distribution::Gaussian { mean, std } => Initial::Gaussian {
                mean: *mean,
                std: *std,
            },
            Distribution::File { .. } => {
                let n = self.initial_age()?;
                Initial::cells(0.0, n.grid.da(), &n.values)?
            }
        })
    }
}

fn normalized(mut values: Vec<f64>, width: f64) -> Result<Vec<f64>> {
    let m = agepot::mass(&values, width);
    if !(m > 0.0) || values.iter().any(|x| !(*x >= 0.0)) {
        return Err(bad("initial density file must be nonnegative with positive mass"));
    }
    values.iter_mut().for_each(|x| *x /= m);
    Ok(values)
}

fn read_cell_file(path: &Path, n: usize) -> Result<Vec<f64>> {
    let rows = crate::output::read_numeric_csv(path)?;
    if rows.columns.len() != 2 {
        return Err(bad(format!(
            "{}: expected columns x,density, got {:?}",
            path.display(),
            rows.columns
        )));
    }
    if rows.rows.len() != n {
        return Err(bad(format!(
            "{}: expected {n} cells, got {}",
            path.display(),
            rows.rows.len()
        )));
    }
    Ok(rows.rows.iter().map(|r| r[1]).collect())
}
