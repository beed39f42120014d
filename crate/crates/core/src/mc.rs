//! Monte Carlo engines for the integrate-and-fire process with reset, the
//! escape-rate renewal process, and the joint (age, potential) process.
//!
//! Every trial draws from its own ChaCha stream selected by `(seed, trial_id)`,
//! so results do not depend on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hazard::HazardRate;
use crate::series::{bin_index, FiringRateSeries};
use crate::stimulus::Stimulus;

/// Firing threshold of the potential process.
pub const THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub record_trajectories: bool,
}

impl McConfig {
    pub fn new(dt: f64, horizon: f64, n_trials: usize, seed: u64) -> Result<Self> {
        let c = Self {
            dt,
            horizon,
            n_trials,
            seed,
            record_trajectories: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_trajectories(mut self) -> Self {
        self.record_trajectories = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon >= self.dt && self.n_trials >= 1) {
            return Err(Error::Config(format!(
                "need dt > 0, horizon >= dt, n_trials >= 1; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Independent stream for one trial.
pub fn trial_rng(seed: u64, trial_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id as u64);
    rng
}

/// Initial state of a trial; Gaussians are truncated by rejection to the
/// admissible range (below threshold for potentials, nonnegative for ages).
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Point(f64),
    Gaussian { mean: f64, std: f64 },
    /// Piecewise-constant density on cells `[lo + k·width, lo + (k+1)·width)`,
    /// stored as normalized cumulative mass.
    Cells { lo: f64, width: f64, cumulative: Vec<f64> },
}

impl Initial {
    /// Sample from cell averages `densities` (need not be normalized).
    pub fn cells(lo: f64, width: f64, densities: &[f64]) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config(format!("cell width must be > 0, got {width}")));
        }
        if densities.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("initial densities must be nonnegative".into()));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = densities
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Config("initial density has no mass".into()));
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Ok(Initial::Cells { lo, width, cumulative })
    }

    fn sample<R: Rng>(&self, rng: &mut R, lo: f64, hi: f64) -> Result<f64> {
        match *self {
            Initial::Point(x) if x >= lo && x < hi => Ok(x),
            Initial::Point(x) => Err(Error::OutsideDomain { location: x, lo, hi }),
            Initial::Gaussian { mean, std } => {
                if !(std > 0.0) {
                    return Err(Error::Config("initial std must be > 0".into()));
                }
                for _ in 0..10_000 {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = mean + std * z;
                    if x >= lo && x < hi {
                        return Ok(x);
                    }
                }
                Err(Error::Config(format!(
                    "initial gaussian N({mean}, {std}²) has no mass in [{lo}, {hi})"
                )))
            }
            Initial::Cells { lo: c0, width, ref cumulative } => {
                let u: f64 = rng.gen();
                let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                let w: f64 = rng.gen();
                let x = c0 + (k as f64 + w) * width;
                if x >= lo && x < hi {
                    Ok(x)
                } else {
                    Err(Error::OutsideDomain { location: x, lo, hi })
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    pub trial_id: usize,
    pub spike_times: Vec<f64>,
}

/// Per-step samples of one trial, starting with the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trial_id: usize,
    pub times: Vec<f64>,
    pub potentials: Vec<f64>,
    pub ages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutput {
    pub records: Vec<SpikeRecord>,
    pub trajectories: Vec<Trajectory>,
    /// `(age, potential)` of every trial at the horizon; the potential is NaN
    /// for the escape process.
    pub finals: Vec<(f64, f64)>,
}

struct TrialResult {
    record: SpikeRecord,
    trajectory: Option<Trajectory>,
    last: (f64, f64),
}

fn collect(results: Vec<TrialResult>) -> McOutput {
    let mut out = McOutput {
        records: Vec::with_capacity(results.len()),
        trajectories: Vec::new(),
        finals: Vec::with_capacity(results.len()),
    };
    for r in results {
        out.records.push(r.record);
        out.finals.push(r.last);
        if let Some(tr) = r.trajectory {
            out.trajectories.push(tr);
        }
    }
    out
}

fn lif_trial(
    trial_id: usize,
    s: &Stimulus,
    v_r: f64,
    init: &Initial,
    mc: &McConfig,
) -> Result<TrialResult> {
    let mut rng = trial_rng(mc.seed, trial_id);
    let mut v = init.sample(&mut rng, f64::NEG_INFINITY, THRESHOLD)?;
    let mut a = 0.0;
    let dt = mc.dt;
    let noise = s.sigma() * dt.sqrt();
    let mut spikes = Vec::new();
    let mut traj = mc.record_trajectories.then(|| Trajectory {
        trial_id,
        times: vec![0.0],
        potentials: vec![v],
        ages: vec![a],
    });
    for step in 0..mc.n_steps() {
        let t = step as f64 * dt;
        let t_new = (step + 1) as f64 * dt;
        let mu = s.evaluate(t + 0.5 * dt);
        let z: f64 = rng.sample(StandardNormal);
        v += (mu - v) * dt + noise * z;
        a += dt;
        if v >= THRESHOLD {
            spikes.push(t_new);
            v = v_r;
            a = 0.0;
        }
        if let Some(tr) = traj.as_mut() {
            tr.times.push(t_new);
            tr.potentials.push(v);
            tr.ages.push(a);
        }
    }
    Ok(TrialResult {
        record: SpikeRecord {
            trial_id,
            spike_times: spikes,
        },
        trajectory: traj,
        last: (a, v),
    })
}

fn check_reset(v_r: f64) -> Result<()> {
    if !(v_r < THRESHOLD) {
        return Err(Error::Config(format!("reset {v_r} must lie below the threshold")));
    }
    Ok(())
}

/// Euler–Maruyama integration of `dv = (μ(t) − v)dt + σ dW` with reset to
/// `v_r` whenever `v ≥ 1`; the spike is stamped at the end of the step.
pub fn simulate_nlif(s: &Stimulus, v_r: f64, init: &Initial, mc: &McConfig) -> Result<McOutput> {
    mc.validate()?;
    check_reset(v_r)?;
    let results = (0..mc.n_trials)
        .into_par_iter()
        .map(|i| lif_trial(i, s, v_r, init, mc))
        .collect::<Result<Vec<_>>>()?;
    let mut out = collect(results);
    for tr in &mut out.trajectories {
        tr.ages.clear();
    }
    Ok(out)
}

/// The integrate-and-fire process decorated with the age since the last
/// spike (or since `t = 0`). Uses the same streams as [`simulate_nlif`], so
/// the spike times coincide exactly.
pub fn simulate_joint(s: &Stimulus, v_r: f64, init: &Initial, mc: &McConfig) -> Result<McOutput> {
    mc.validate()?;
    check_reset(v_r)?;
    let results = (0..mc.n_trials)
        .into_par_iter()
        .map(|i| lif_trial(i, s, v_r, init, mc))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(results))
}

fn escape_trial(
    trial_id: usize,
    hazard: &dyn HazardRate,
    init: &Initial,
    mc: &McConfig,
) -> Result<TrialResult> {
    let mut rng = trial_rng(mc.seed, trial_id);
    let mut a = init.sample(&mut rng, 0.0, f64::INFINITY)?;
    let dt = mc.dt;
    let mut spikes = Vec::new();
    let mut traj = mc.record_trajectories.then(|| Trajectory {
        trial_id,
        times: vec![0.0],
        potentials: Vec::new(),
        ages: vec![a],
    });
    for step in 0..mc.n_steps() {
        let t = step as f64 * dt;
        let t_new = (step + 1) as f64 * dt;
        let rate = hazard.rate(t + 0.5 * dt, a + 0.5 * dt)?;
        let fire_prob = -(-rate * dt).exp_m1();
        let u: f64 = rng.gen();
        if u < fire_prob {
            spikes.push(t_new);
            a = 0.0;
        } else {
            a += dt;
        }
        if let Some(tr) = traj.as_mut() {
            tr.times.push(t_new);
            tr.ages.push(a);
        }
    }
    Ok(TrialResult {
        record: SpikeRecord {
            trial_id,
            spike_times: spikes,
        },
        trajectory: traj,
        last: (a, f64::NAN),
    })
}

/// Escape-rate renewal process: each step fires with probability
/// `1 − exp(−S(t, a)·dt)`, with `S` read at the midpoint of the step.
pub fn simulate_escape(hazard: &dyn HazardRate, init: &Initial, mc: &McConfig) -> Result<McOutput> {
    mc.validate()?;
    let results = (0..mc.n_trials)
        .into_par_iter()
        .map(|i| escape_trial(i, hazard, init, mc))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(results))
}

/// Peri-stimulus time histogram: spikes per trial per unit time in bins
/// `[k·bin, (k+1)·bin)` over `[0, horizon)`, labelled by bin centres.
pub fn psth(records: &[SpikeRecord], bin: f64, horizon: f64) -> Result<FiringRateSeries> {
    if records.is_empty() {
        return Err(Error::Empty("spike records"));
    }
    if !(bin > 0.0) {
        return Err(Error::Config(format!("bin must be > 0, got {bin}")));
    }
    let n_bins = bin_index(horizon, bin).max(1);
    let mut counts = vec![0u64; n_bins];
    for rec in records {
        for &t in &rec.spike_times {
            let k = bin_index(t, bin);
            if k < n_bins {
                counts[k] += 1;
            }
        }
    }
    let norm = records.len() as f64 * bin;
    Ok(FiringRateSeries {
        times: (0..n_bins).map(|k| (k as f64 + 0.5) * bin).collect(),
        rates: counts.into_iter().map(|c| c as f64 / norm).collect(),
    })
}

/// Normalized histogram over age bins `[k·bin, (k+1)·bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsiHistogram {
    pub bin: f64,
    pub density: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation of the intervals.
    pub std: f64,
}

impl IsiHistogram {
    pub fn centers(&self) -> Vec<f64> {
        (0..self.density.len()).map(|k| (k as f64 + 0.5) * self.bin).collect()
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Pools consecutive-spike intervals of every trial. The interval from `t = 0`
/// to the first spike is included only when `include_first` is set. Intervals
/// beyond the last bin still count towards the normalization.
pub fn isi_histogram(
    records: &[SpikeRecord],
    bin: f64,
    n_bins: usize,
    include_first: bool,
) -> Result<IsiHistogram> {
    if !(bin > 0.0) || n_bins == 0 {
        return Err(Error::Config("histogram needs bin > 0 and at least one bin".into()));
    }
    let mut counts = vec![0u64; n_bins];
    let (mut n, mut sum, mut sumsq) = (0usize, 0.0, 0.0);
    let mut add = |isi: f64| {
        let k = bin_index(isi, bin);
        if k < n_bins {
            counts[k] += 1;
        }
        n += 1;
        sum += isi;
        sumsq += isi * isi;
    };
    for rec in records {
        if include_first {
            if let Some(&t0) = rec.spike_times.first() {
                add(t0);
            }
        }
        for w in rec.spike_times.windows(2) {
            add(w[1] - w[0]);
        }
    }
    if n == 0 {
        return Err(Error::Empty("inter-spike intervals"));
    }
    let mean = sum / n as f64;
    let var = if n > 1 {
        (sumsq - n as f64 * mean * mean).max(0.0) / (n - 1) as f64
    } else {
        0.0
    };
    let norm = n as f64 * bin;
    Ok(IsiHistogram {
        bin,
        density: counts.into_iter().map(|c| c as f64 / norm).collect(),
        count: n,
        mean,
        std: var.sqrt(),
    })
}

/// Sample mean of consecutive-spike intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalMean {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl IntervalMean {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Mean of the intervals that start at a spike no later than `latest_start`.
///
/// Pooling every interval inside a finite window under-represents long
/// intervals, since the one straddling the horizon is dropped. When every
/// interval is shorter than `horizon − latest_start`, no interval counted
/// here can be cut off and the mean is unbiased.
pub fn isi_mean(records: &[SpikeRecord], latest_start: f64) -> Result<IntervalMean> {
    let (mut n, mut sum, mut sumsq) = (0usize, 0.0, 0.0);
    for rec in records {
        for w in rec.spike_times.windows(2).filter(|w| w[0] <= latest_start) {
            let isi = w[1] - w[0];
            n += 1;
            sum += isi;
            sumsq += isi * isi;
        }
    }
    if n == 0 {
        return Err(Error::Empty("inter-spike intervals"));
    }
    let mean = sum / n as f64;
    let var = if n > 1 {
        (sumsq - n as f64 * mean * mean).max(0.0) / (n - 1) as f64
    } else {
        0.0
    };
    Ok(IntervalMean {
        count: n,
        mean,
        std: var.sqrt(),
    })
}
