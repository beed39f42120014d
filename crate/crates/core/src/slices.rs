//! Kernels shared by the solvers that carry a potential density per age cell.

use rayon::prelude::*;

use crate::operator::ImplicitStep;

/// Move every age slice up by one cell. The last slice keeps its content and
/// absorbs the one below it; slice 0 is left empty.
pub(crate) fn shift_ages(values: &mut [f64], n_v: usize) {
    let n_a = values.len() / n_v;
    let last = n_a - 1;
    let (head, tail) = values.split_at_mut(last * n_v);
    for (t, h) in tail.iter_mut().zip(&head[(last - 1) * n_v..]) {
        *t += h;
    }
    values.copy_within(0..(last - 1) * n_v, n_v);
    values[..n_v].iter_mut().for_each(|x| *x = 0.0);
}

/// Slice masses `Σ_i values[k, i]·Δv`.
pub(crate) fn slice_masses(values: &[f64], n_v: usize, dv: f64) -> Vec<f64> {
    values
        .chunks(n_v)
        .map(|s| s.iter().sum::<f64>() * dv)
        .collect()
}

/// Apply the implicit potential step to every nonzero slice. Returns the
/// threshold flux and the mass of each slice after the step.
pub(crate) fn step_slices(
    values: &mut [f64],
    n_v: usize,
    op: &ImplicitStep,
    dv: f64,
) -> (Vec<f64>, Vec<f64>) {
    values
        .par_chunks_mut(n_v)
        .map(|slice| {
            if slice.iter().all(|&x| x == 0.0) {
                return (0.0, 0.0);
            }
            op.solve_in_place(slice);
            (op.threshold_flux(slice), slice.iter().sum::<f64>() * dv)
        })
        .unzip()
}

/// Discrete hazard over one step for a slice that held `pre` before the step
/// and lost `flux·dt` through the threshold: `exp(−S·dt)` equals the surviving
/// fraction exactly. Returns `None` when `pre` is below the floor.
pub(crate) fn step_hazard(flux: f64, pre: f64, dt: f64, floor: f64) -> Option<f64> {
    if pre < floor {
        return None;
    }
    let lost = (flux * dt / pre).min(1.0 - f64::EPSILON);
    Some(-(-lost).ln_1p() / dt)
}

/// Hazards at age nodes `0..=n_a` from per-slice flux and pre-step mass
/// (slices `1..n_a`). Unreliable entries take the value of the nearest
/// reliable younger node; node 0 copies node 1 and node `n_a` copies `n_a − 1`.
pub(crate) fn hazard_nodes(flux: &[f64], pre: &[f64], dt: f64, floor: f64) -> Vec<f64> {
    let n_a = flux.len();
    let mut out = vec![0.0; n_a + 1];
    let mut last_good = 0.0;
    for k in 1..n_a {
        let s = step_hazard(flux[k], pre[k], dt, floor).unwrap_or(last_good);
        last_good = s;
        out[k] = s;
    }
    out[0] = out[1];
    out[n_a] = out[n_a - 1];
    out
}
