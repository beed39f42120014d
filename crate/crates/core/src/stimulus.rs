//! Mean input drive μ(t) together with the noise intensity σ.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    Constant(f64),
    /// `(t, μ)` pairs, strictly increasing in `t`, linearly interpolated and
    /// clamped to the end values outside the sampled range.
    Sampled(Vec<(f64, f64)>),
}

impl Drive {
    pub fn sinusoid(mu0: f64, amplitude: f64, period: f64, horizon: f64, step: f64) -> Result<Self> {
        if !(period > 0.0 && step > 0.0 && horizon > 0.0) {
            return Err(Error::Config(
                "sinusoid needs positive period, step and horizon".into(),
            ));
        }
        let n = (horizon / step).ceil() as usize;
        let samples = (0..=n)
            .map(|i| {
                let t = i as f64 * step;
                (t, mu0 + amplitude * (2.0 * std::f64::consts::PI * t / period).sin())
            })
            .collect();
        let d = Drive::Sampled(samples);
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Drive::Constant(mu) if !mu.is_finite() => {
                Err(Error::Config("constant drive must be finite".into()))
            }
            Drive::Sampled(s) => {
                if s.is_empty() {
                    return Err(Error::Empty("stimulus samples"));
                }
                if s.iter().any(|(t, m)| !t.is_finite() || !m.is_finite()) {
                    return Err(Error::Config("stimulus samples must be finite".into()));
                }
                if s.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Config(
                        "stimulus sample times must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            Drive::Constant(mu) => *mu,
            Drive::Sampled(s) => interpolate_clamped(s, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    drive: Drive,
    sigma: f64,
}

impl Stimulus {
    pub fn constant(mu0: f64, sigma: f64) -> Result<Self> {
        Self::new(Drive::Constant(mu0), sigma)
    }

    pub fn sampled(samples: Vec<(f64, f64)>, sigma: f64) -> Result<Self> {
        Self::new(Drive::Sampled(samples), sigma)
    }

    /// `μ(t) = μ₀ + A·sin(2πt/T)` tabulated every `step` on `[0, horizon]`.
    pub fn sinusoid(
        mu0: f64,
        amplitude: f64,
        period: f64,
        horizon: f64,
        step: f64,
        sigma: f64,
    ) -> Result<Self> {
        Self::new(Drive::sinusoid(mu0, amplitude, period, horizon, step)?, sigma)
    }

    pub fn new(drive: Drive, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
        }
        drive.validate()?;
        Ok(Self { drive, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn drive(&self) -> &Drive {
        &self.drive
    }

    /// Diffusion coefficient σ²/2.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.sigma * self.sigma
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.drive, Drive::Constant(_))
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.drive.evaluate(t)
    }

    /// The same noise with the drive frozen at `μ(t)`.
    pub fn frozen_at(&self, t: f64) -> Self {
        Self {
            drive: Drive::Constant(self.evaluate(t)),
            sigma: self.sigma,
        }
    }
}

pub(crate) fn interpolate_clamped(s: &[(f64, f64)], t: f64) -> f64 {
    let first = s[0];
    let last = s[s.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    // first index with time > t; guaranteed in 1..len
    let hi = s.partition_point(|(ts, _)| *ts <= t);
    let (t0, y0) = s[hi - 1];
    let (t1, y1) = s[hi];
    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
}
