//! CSV tables and hazard files.

use std::path::Path;

use agepot::HazardTable;

use crate::error::{CliError, Result};

/// A CSV table with a header row and numeric columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        let mut buf = Vec::with_capacity(self.columns.len());
        for row in &self.rows {
            buf.clear();
            buf.extend(row.iter().map(|x| format!("{x:e}")));
            w.write_record(&buf).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_numeric_csv(path: &Path) -> Result<Table> {
    let parse_err = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(format!("{other:?}")),
    })?;
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("row {}: '{f}' is not a number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(parse_err(format!("row {} has {} fields", i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// `a,hazard` for autonomous tables, `t,a,hazard` otherwise, keeping every
/// `time_stride`-th time node.
pub fn hazard_table_csv(h: &HazardTable, time_stride: usize) -> Table {
    use agepot::HazardRate;
    if h.is_autonomous() {
        let mut t = Table::new(["a", "hazard"]);
        for (j, &s) in h.row(0).iter().enumerate() {
            t.push(vec![h.age_node(j), s]);
        }
        t
    } else {
        let mut t = Table::new(["t", "a", "hazard"]);
        for i in (0..h.n_times()).step_by(time_stride.max(1)) {
            let time = h.time_node(i);
            for (j, &s) in h.row(i).iter().enumerate() {
                t.push(vec![time, h.age_node(j), s]);
            }
        }
        t
    }
}

fn uniform_step(xs: &[f64], what: &str) -> std::result::Result<f64, String> {
    if xs.len() < 2 {
        return Err(format!("need at least two {what} nodes"));
    }
    let step = xs[1] - xs[0];
    if !(step > 0.0) {
        return Err(format!("{what} nodes must increase"));
    }
    for (j, x) in xs.iter().enumerate() {
        if (x - (xs[0] + j as f64 * step)).abs() > 1e-6 * step.max(x.abs()) {
            return Err(format!("{what} nodes must be uniformly spaced"));
        }
    }
    Ok(step)
}

/// Parse a hazard file written by [`hazard_table_csv`].
pub fn read_hazard_file(path: &Path) -> Result<HazardTable> {
    let table = read_numeric_csv(path)?;
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let cols: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    match cols.as_slice() {
        ["a", "hazard"] => {
            let ages: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
            if ages.first().is_none_or(|a| a.abs() > 1e-12) {
                return Err(bad("ages must start at 0".into()));
            }
            let da = uniform_step(&ages, "age").map_err(bad)?;
            Ok(HazardTable::autonomous(da, table.rows.iter().map(|r| r[1]).collect())?)
        }
        ["t", "a", "hazard"] => {
            let t0 = table.rows.first().ok_or_else(|| bad("empty table".into()))?[0];
            let n_ages = table.rows.iter().take_while(|r| r[0] == t0).count();
            if n_ages == 0 || table.rows.len() % n_ages != 0 {
                return Err(bad("every time node needs the same age nodes".into()));
            }
            let n_times = table.rows.len() / n_ages;
            let ages: Vec<f64> = table.rows[..n_ages].iter().map(|r| r[1]).collect();
            if ages[0].abs() > 1e-12 {
                return Err(bad("ages must start at 0".into()));
            }
            let da = uniform_step(&ages, "age").map_err(bad)?;
            let times: Vec<f64> = (0..n_times).map(|i| table.rows[i * n_ages][0]).collect();
            for (i, chunk) in table.rows.chunks(n_ages).enumerate() {
                if chunk.iter().any(|r| r[0] != times[i])
                    || chunk.iter().zip(&ages).any(|(r, a)| r[1] != *a)
                {
                    return Err(bad("rows must be grouped by time with identical age nodes".into()));
                }
            }
            let dt = if n_times > 1 {
                uniform_step(&times, "time").map_err(bad)?
            } else {
                1.0
            };
            let values = table.rows.iter().map(|r| r[2]).collect();
            Ok(HazardTable::new(t0, dt, n_times, da, n_ages, values)?)
        }
        _ => Err(bad(format!(
            "expected columns a,hazard or t,a,hazard, got {}",
            table.columns.join(",")
        ))),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}
