//! End-to-end acceptance checks. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use agepot::as1d::{as_step, solve_as};
use agepot::fp1d::{stationary_fp, Fp1dState, FpStepper, StationaryOptions};
use agepot::fpt::{solve_fpt_autonomous, solve_fpt_nonautonomous, FptOptions};
use agepot::joint2d::{
    marginal_age, stationary_joint, transform_solution, JointStationaryOptions, JointState, JointStepper,
};
use agepot::mc::{isi_histogram, simulate_escape, simulate_nlif, Initial, McConfig};
use agepot::*;
use agepot_cli::runner::{run_scenario, CheckOutcome, RunOptions};
use statrs::function::erf::erf;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn rel_l1(x: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    num / reference.iter().map(|b| b.abs()).sum::<f64>()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Tracks per-step and accumulated mass drift.
struct Drift {
    initial: f64,
    last: f64,
    worst_step: f64,
}

impl Drift {
    fn new(m: f64) -> Self {
        Self {
            initial: m,
            last: m,
            worst_step: 0.0,
        }
    }

    fn record(&mut self, m: f64) {
        self.worst_step = self.worst_step.max((m - self.last).abs());
        self.last = m;
    }

    fn total(&self) -> f64 {
        (self.last - self.initial).abs()
    }

    fn ok(&self) -> bool {
        self.worst_step < 1e-12 && self.total() < 1e-6
    }
}

fn conservation() -> Verdict {
    const STEPS: usize = 10_000;
    let dt = 1e-3;

    let g = PotentialGrid::new(-4.0, 0.5, 400).unwrap();
    let s = Stimulus::constant(3.0, 0.15).unwrap();
    let mut fp = Fp1dState::new(DensityField1D::gaussian(g, 0.0, 0.1).unwrap());
    let mut stepper = FpStepper::new(g, s.sigma()).unwrap();
    let mut d_fp = Drift::new(fp.p.mass());
    for n in 1..=STEPS {
        stepper.advance(&mut fp, &s, n as f64 * dt).unwrap();
        d_fp.record(fp.p.mass());
    }

    let ag = AgeGrid::covering(dt, 12.0).unwrap();
    let hazard = EscapeHazard::new(Drive::Constant(3.0), 30.0).unwrap();
    let mut n = DensityAge::gaussian(ag, 1.0, 0.2).unwrap();
    let mut d_as = Drift::new(n.mass());
    for step in 0..STEPS {
        as_step(&mut n, &hazard, step as f64 * dt, dt).unwrap();
        d_as.record(n.mass());
    }

    let ag = AgeGrid::covering(dt, 0.3).unwrap();
    let pg = PotentialGrid::new(-4.0, 0.5, 100).unwrap();
    let s = Stimulus::constant(20.0, 0.4).unwrap();
    let mut joint = JointState::new(DensityJoint::gaussian(ag, pg, (0.1, 0.02), (0.0, 0.1)).unwrap());
    let mut stepper = JointStepper::new(pg, s.sigma()).unwrap();
    let mut d_joint = Drift::new(joint.pi.mass());
    for _ in 0..STEPS {
        stepper.advance(&mut joint, &s).unwrap();
        d_joint.record(joint.pi.mass());
    }

    let detail = [("fp1d", &d_fp), ("as1d", &d_as), ("joint2d", &d_joint)]
        .iter()
        .map(|(name, d)| format!("{name} step {:.1e} total {:.1e}", d.worst_step, d.total()))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(d_fp.ok() && d_as.ok() && d_joint.ok(), format!("{STEPS} steps: {detail}"))
}

fn ou_stationary() -> Verdict {
    let (mu, sigma) = (0.0, 0.4);
    let sd = sigma / 2f64.sqrt();
    let g = PotentialGrid::with_threshold(mu - 8.0 * sd, mu + 8.0 * sd, mu, 400).unwrap();
    let s = Stimulus::constant(mu, sigma).unwrap();
    let (p, _) = stationary_fp(g, &s, 1e-2, StationaryOptions::default()).unwrap();
    let cdf = |x: f64| 0.5 * (1.0 + erf((x - mu) / (sd * std::f64::consts::SQRT_2)));
    let exact: Vec<f64> = (0..g.len())
        .map(|i| (cdf(g.face(i + 1)) - cdf(g.face(i))) / g.dv())
        .collect();
    let err = rel_l1(&p.values, &exact);
    verdict(err <= 1e-3, format!("rel-L1 {err:.2e} <= 1e-3 on 400 cells"))
}

fn bundled_check(name: &str, kind: &str, budget: Duration) -> Verdict {
    let sc = agepot_cli::bundled(name).unwrap().unwrap();
    let start = Instant::now();
    let report = run_scenario(&sc, &RunOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let checks: Vec<&CheckOutcome> = report.checks.iter().filter(|c| c.kind == kind).collect();
    assert!(!checks.is_empty(), "scenario {name} has no {kind} check");
    let ok = checks.iter().all(|c| c.passed) && elapsed <= budget;
    let detail = checks
        .iter()
        .map(|c| format!("{} vs {} rel-L1 {:.4} <= {}", c.reference, c.candidate, c.value, c.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        ok,
        format!("{name}: {detail}, {:.1} s (budget {} s)", secs(elapsed), budget.as_secs()),
    )
}

/// Joint solver against fp1d and as1d at n_a = 2000, n_v = 400.
fn marginals() -> (Verdict, Verdict) {
    let sc = agepot_cli::bundled("theorem-suite").unwrap().unwrap();
    let n_a = sc.age_grid().unwrap().len();
    let n_v = sc.potential_grid().unwrap().len();
    let start = Instant::now();
    let report = run_scenario(&sc, &RunOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let find = |kind: &str| report.checks.iter().find(|c| c.kind == kind).unwrap().clone();
    let (pot, rate, age) = (find("marginal-potential"), find("rate-identity"), find("marginal-age"));
    let grid_ok = n_a == 2000 && n_v == 400;
    let potential = verdict(
        grid_ok && pot.passed && rate.passed && elapsed <= Duration::from_secs(300),
        format!(
            "n_a {n_a}, n_v {n_v}: potential marginal rel-L1 {:.1e}, rate rel {:.1e} (<= 1e-3), {:.1} s",
            pot.value,
            rate.value,
            secs(elapsed)
        ),
    );
    let age_marginal = verdict(
        grid_ok && age.passed,
        format!("age marginal vs as1d under the joint hazard rel-L1 {:.1e} <= 1e-3", age.value),
    );
    (potential, age_marginal)
}

fn stationary() -> Verdict {
    let dt = 1e-3;
    let ag = AgeGrid::covering(dt, 1.5).unwrap();
    let pg = PotentialGrid::new(-4.0, 0.5, 200).unwrap();
    let s = Stimulus::constant(3.0, 0.3).unwrap();
    let (pi, r) = stationary_joint(ag, pg, &s, JointStationaryOptions::default()).unwrap();
    let opts = FptOptions {
        keep_density: true,
        ..FptOptions::default()
    };
    let fpt = solve_fpt_autonomous(3.0, 0.3, pg, ag, opts).unwrap();
    let phi = fpt.density.as_ref().unwrap();
    let cell = pi.cell_area();
    let joint_err: f64 = pi.values.iter().zip(phi).map(|(p, f)| (p - r * f).abs()).sum::<f64>() * cell;
    let n = marginal_age(&pi);
    let expected: Vec<f64> = (0..ag.len()).map(|k| r * fpt.survivor[k]).collect();
    let age_err = rel_l1(&n.values, &expected);

    let hazard_fpt = {
        let pg = PotentialGrid::new(-4.0, 0.5, 5000).unwrap();
        let ag = AgeGrid::covering(1e-4, 1.0).unwrap();
        solve_fpt_autonomous(3.0, 0.15, pg, ag, FptOptions::default()).unwrap()
    };
    let mc = McConfig::new(1e-4, 2.0, 40_000, 17).unwrap();
    let nlif_stim = Stimulus::constant(3.0, 0.15).unwrap();
    let nlif = simulate_nlif(&nlif_stim, 0.5, &Initial::Point(0.5), &mc).unwrap();
    let escape = simulate_escape(&hazard_fpt.hazard, &Initial::Point(0.0), &mc).unwrap();
    let h_nlif = isi_histogram(&nlif.records, 0.005, 200, true).unwrap();
    let h_escape = isi_histogram(&escape.records, 0.005, 200, true).unwrap();
    let isi_err = rel_l1(&h_escape.density, &h_nlif.density);

    verdict(
        joint_err <= 1e-3 && age_err <= 1e-3 && isi_err <= 0.05,
        format!(
            "|pi - r phi|_1 {joint_err:.1e}, n vs rP rel-L1 {age_err:.1e} (<= 1e-3); \
             escape vs NLIF ISI rel-L1 {isi_err:.4} <= 0.05"
        ),
    )
}

/// Residual of `(π^{n+1}_{k+1} − π^n_k)/dt − ½(Aπ^{n+1}_{k+1} + Aπ^n_k)` with
/// `A` the centred drift-diffusion operator, over ages `a ≥ a_lo` and
/// potentials `v ≤ v_hi`, relative to the mass there.
#[allow(clippy::too_many_arguments)]
fn residual(pg: &PotentialGrid, dt: f64, mu: f64, d: f64, a: &[f64], b: &[f64], a_lo: f64, v_hi: f64) -> f64 {
    let nv = pg.len();
    let na = a.len() / nv;
    let dv = pg.dv();
    let apply = |x: &[f64], i: usize| -> f64 {
        let v = pg.center(i);
        let get = |j: isize| -> f64 {
            if j < 0 {
                x[0]
            } else if j as usize >= nv {
                -x[nv - 1]
            } else {
                x[j as usize]
            }
        };
        let (xm, x0, xp) = (get(i as isize - 1), get(i as isize), get(i as isize + 1));
        let diffusion = d * (xp - 2.0 * x0 + xm) / (dv * dv);
        let up = (mu - (v + 0.5 * dv)) * 0.5 * (x0 + xp);
        let down = if i == 0 { 0.0 } else { (mu - (v - 0.5 * dv)) * 0.5 * (xm + x0) };
        diffusion - (up - down) / dv
    };
    let (mut sum, mut norm) = (0.0, 0.0);
    for k in (a_lo / dt).round() as usize..na - 2 {
        let pa = &a[k * nv..(k + 1) * nv];
        let pb = &b[(k + 1) * nv..(k + 2) * nv];
        for i in (0..nv).filter(|&i| pg.center(i) <= v_hi) {
            let r = (pb[i] - pa[i]) / dt - 0.5 * (apply(pb, i) + apply(pa, i));
            sum += r.abs();
            norm += pb[i].abs();
        }
    }
    sum / norm
}

const MODULATED: (f64, f64, f64, f64) = (3.0, 1.0, 0.5, 0.3);
const HORIZON: f64 = 0.6;

fn modulated(dt: f64) -> Stimulus {
    let (mean, amplitude, period, sigma) = MODULATED;
    Stimulus::sinusoid(mean, amplitude, period, HORIZON + dt, dt / 4.0, sigma).unwrap()
}

/// Transform solution `φ(t)·n(t)/P(t)` at the requested steps.
fn transform_family(n_v: usize, dt: f64, steps: &[usize]) -> (Stimulus, PotentialGrid, Vec<DensityJoint>) {
    let s = modulated(dt);
    let pg = PotentialGrid::new(-4.0, 0.5, n_v).unwrap();
    let ag = AgeGrid::covering(dt, 1.0).unwrap();
    let fam = solve_fpt_nonautonomous(&s, pg, ag, HORIZON, steps).unwrap();
    let n0 = DensityAge::gaussian(ag, 0.3, 0.05).unwrap();
    let sol = solve_as(&n0, &fam.hazard, HORIZON, dt, Some(1)).unwrap();
    let states = steps
        .iter()
        .map(|&n| transform_solution(pg, fam.snapshot(n).unwrap(), fam.survivor_row(n), &sol.snapshots[n]).unwrap())
        .collect();
    (s, pg, states)
}

fn transform() -> Verdict {
    let residual_at = |n_v: usize, dt: f64| {
        let n = (HORIZON / dt).round() as usize;
        let (s, pg, states) = transform_family(n_v, dt, &[n - 1, n]);
        let mu = s.evaluate((n as f64 - 0.5) * dt);
        residual(&pg, dt, mu, s.diffusion(), &states[0].values, &states[1].values, 0.1, 0.95)
    };
    let coarse = residual_at(200, 2e-3);
    let fine = residual_at(400, 1e-3);
    let ratio = coarse / fine;

    let dt = 1e-3;
    let checkpoints = [300, 400, 500, 600];
    let (s, pg, states) = transform_family(400, dt, &checkpoints);
    let mut joint = JointState::new(states[0].clone());
    joint.t = checkpoints[0] as f64 * dt;
    let mut stepper = JointStepper::new(pg, s.sigma()).unwrap();
    let mut worst: f64 = 0.0;
    let mut step = checkpoints[0];
    for (target, reference) in checkpoints.iter().zip(&states).skip(1) {
        while step < *target {
            stepper.advance(&mut joint, &s).unwrap();
            step += 1;
        }
        worst = worst.max(rel_l1(&joint.pi.values, &reference.values));
    }
    verdict(
        ratio >= 1.8 && worst <= 1e-3,
        format!(
            "residual {coarse:.3} -> {fine:.3} under halving, ratio {ratio:.2} >= 1.8; \
             joint evolution from t = 0.3 within rel-L1 {worst:.1e} <= 1e-3"
        ),
    )
}

fn nonautonomous_identities() -> Verdict {
    let dt = 1e-3;
    let s = modulated(dt);
    let pg = PotentialGrid::new(-4.0, 0.5, 400).unwrap();
    let ag = AgeGrid::covering(dt, 1.0).unwrap();
    let fam = solve_fpt_nonautonomous(&s, pg, ag, HORIZON, &[]).unwrap();
    let n_a = ag.len();
    let unit = (0..=fam.n_steps).all(|n| fam.survivor_at(n, 0) == 1.0);
    let mut worst: f64 = 0.0;
    for n in 0..fam.n_steps {
        for k in 0..n_a - 2 {
            let transport = (fam.survivor_at(n + 1, k + 1) - fam.survivor_at(n, k)) / dt;
            worst = worst.max((fam.isi_at(n + 1, k + 1) + transport).abs());
        }
    }
    verdict(
        unit && worst <= 5.0 * dt,
        format!("P(t,0) = 1 at every step: {unit}; max |ISI + (d_t + d_a)P| {worst:.1e} <= {:.0e}", 5.0 * dt),
    )
}

const DETERMINISM: &str = r#"
name = "determinism"
models = ["mc-nlif", "mc-escape", "mc-joint", "fp", "as", "fpt", "joint"]
horizon = 0.3
dt = 1e-3

[stimulus]
sigma = 0.2
mu = { kind = "sinusoid", mean = 3.0, amplitude = 1.0, period = 0.2 }

[potential]
n_v = 150

[age]
a_max = 0.4

[mc]
trials = 3000
seed = 5
psth_bin = 0.02

[initial]
potential = { kind = "gaussian", mean = 0.0, std = 0.1 }

[hazard]
kind = "first-passage"

[output]
snapshot_times = [0.1, 0.3]
"#;

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("determinism.toml");
    fs::write(&sc, DETERMINISM).unwrap();
    let threads = ["1", "2", "4", "1"];
    let runs: Vec<_> = threads
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let out = dir.path().join(format!("run{i}"));
            let status = Command::new(env!("CARGO_BIN_EXE_agepot"))
                .args(["run", sc.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--threads", t])
                .env_remove("AGEPOT_SEED")
                .env_remove("AGEPOT_SNAPSHOT_STRIDE")
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "run with {t} threads failed");
            tree(&out)
        })
        .collect();
    let files = runs[0].len();
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        identical && files > 0,
        format!("{files} files, {bytes} bytes, identical across threads {threads:?}: {identical}"),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut run = |ids: &[u32], f: &dyn Fn() -> Vec<Verdict>| {
        let t = Instant::now();
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(vs) => {
                for (&id, v) in ids.iter().zip(vs) {
                    let line = format!(
                        "criterion {id}: {} {} [{:.1} s]",
                        if v.passed { "PASS" } else { "FAIL" },
                        v.detail,
                        secs(t.elapsed())
                    );
                    println!("{line}");
                    results.push((id, v));
                }
            }
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                for &id in ids {
                    println!("criterion {id}: FAIL panicked: {msg}");
                    results.push((id, verdict(false, msg.clone())));
                }
            }
        }
    };
    run(&[1], &|| vec![conservation()]);
    run(&[2], &|| vec![ou_stationary()]);
    run(&[3], &|| vec![bundled_check("fig2", "rate", Duration::from_secs(120))]);
    run(&[4], &|| vec![bundled_check("fig5", "rate", Duration::from_secs(60))]);
    run(&[5, 6], &|| {
        let (a, b) = marginals();
        vec![a, b]
    });
    run(&[7], &|| vec![stationary()]);
    run(&[8], &|| vec![transform()]);
    run(&[9], &|| vec![nonautonomous_identities()]);
    run(&[10], &|| vec![determinism()]);

    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.passed).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        secs(started.elapsed())
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
