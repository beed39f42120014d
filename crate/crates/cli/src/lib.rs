//! Command-line harness for the agepot solvers: scenario files, execution of
//! the requested models, tolerance checks and CSV/JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod output;
pub mod runner;
pub mod scenario;

pub use error::{CliError, Result};
pub use runner::{run_scenario, RunOptions, RunReport};
pub use scenario::Scenario;

use std::path::Path;

const BUNDLED: &[(&str, &str)] = &[
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("fig6", include_str!("../scenarios/fig6.toml")),
    ("fig7", include_str!("../scenarios/fig7.toml")),
    ("theorem-suite", include_str!("../scenarios/theorem-suite.toml")),
];

/// Names of the scenarios compiled into the binary.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// A bundled scenario by name.
pub fn bundled(name: &str) -> Option<Result<Scenario>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| Scenario::from_toml(text, Path::new(&format!("{n}.toml"))))
}

/// Resolve a scenario argument: a bundled name, or a path to a TOML file.
pub fn load_scenario(arg: &str) -> Result<Scenario> {
    let p = Path::new(arg);
    if p.exists() {
        return Scenario::from_path(p);
    }
    match bundled(arg) {
        Some(s) => s,
        None => Err(CliError::Config(format!(
            "'{arg}' is neither a file nor a bundled scenario (try list-scenarios)"
        ))),
    }
}
