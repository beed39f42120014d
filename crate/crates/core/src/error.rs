use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("location {location} outside the admissible range ({lo}, {hi})")]
    OutsideDomain { location: f64, lo: f64, hi: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("negative density {value:e} in cell {cell} at t = {t}")]
    Negativity { cell: usize, value: f64, t: f64 },
    #[error("age domain truncated: mass {mass:e} in the last age cell at t = {t}")]
    AgeTruncation { mass: f64, t: f64 },
    #[error("hazard queried at age {age} beyond table range {max}")]
    HazardRange { age: f64, max: f64 },
    #[error("no convergence after {steps} steps (last change {change:e})")]
    NoConvergence { steps: usize, change: f64 },
    #[error("first-passage mass accounting broken at age {age}: defect {defect:e}")]
    MassAccounting { age: f64, defect: f64 },
    #[error("survivor floor reached on a cell carrying mass {mass:e} (age index {age_index})")]
    FloorViolation { age_index: usize, mass: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
