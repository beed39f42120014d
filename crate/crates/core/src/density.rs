//! Cell-averaged probability densities over potential, age, and (age, potential).

use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::{AgeGrid, PotentialGrid};

/// Density over potential, `p(t, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField1D {
    pub grid: PotentialGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

/// Density over age, `n(t, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityAge {
    pub grid: AgeGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

/// Joint density `π(t, a, v)` stored age-slice major: `values[k * n_v + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityJoint {
    pub ages: AgeGrid,
    pub potentials: PotentialGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

/// Midpoint-rule integral of cell averages.
pub fn mass(values: &[f64], width: f64) -> f64 {
    values.iter().sum::<f64>() * width
}

pub fn l1_distance(x: &[f64], y: &[f64], width: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() * width
}

/// Cell averages of N(mean, std²) restricted to `[lo, lo + n·width]`.
fn gaussian_cell_averages(lo: f64, width: f64, n: usize, mean: f64, std: f64) -> Vec<f64> {
    let cdf = |x: f64| 0.5 * (1.0 + erf((x - mean) / (std * std::f64::consts::SQRT_2)));
    (0..n)
        .map(|i| {
            let a = lo + i as f64 * width;
            (cdf(a + width) - cdf(a)) / width
        })
        .collect()
}

fn normalize(values: &mut [f64], width: f64) -> Result<()> {
    let m = mass(values, width);
    if !(m > 0.0) {
        return Err(Error::Config("initial density has no mass on the grid".into()));
    }
    values.iter_mut().for_each(|x| *x /= m);
    Ok(())
}

fn check_std(std: f64) -> Result<()> {
    if !(std > 0.0) {
        return Err(Error::Config(format!("gaussian std must be > 0, got {std}")));
    }
    Ok(())
}

impl DensityField1D {
    pub fn zeros(grid: PotentialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            t: 0.0,
        }
    }

    pub fn from_values(grid: PotentialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, t: 0.0 })
    }

    /// Truncated, renormalized Gaussian.
    pub fn gaussian(grid: PotentialGrid, mean: f64, std: f64) -> Result<Self> {
        check_std(std)?;
        let mut values = gaussian_cell_averages(grid.v_min(), grid.dv(), grid.len(), mean, std);
        normalize(&mut values, grid.dv())?;
        Ok(Self { grid, values, t: 0.0 })
    }

    /// Unit mass concentrated at `v` through [`deposit_delta`].
    pub fn point(grid: PotentialGrid, v: f64) -> Result<Self> {
        let mut d = Self::zeros(grid);
        deposit_delta(&grid, v, 1.0)?.apply(&mut d.values);
        Ok(d)
    }

    pub fn mass(&self) -> f64 {
        mass(&self.values, self.grid.dv())
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .centers()
            .zip(&self.values)
            .map(|(v, p)| v * p)
            .sum::<f64>()
            * self.grid.dv()
    }
}

impl DensityAge {
    pub fn zeros(grid: AgeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            t: 0.0,
        }
    }

    pub fn from_values(grid: AgeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, t: 0.0 })
    }

    pub fn gaussian(grid: AgeGrid, mean: f64, std: f64) -> Result<Self> {
        check_std(std)?;
        let mut values = gaussian_cell_averages(0.0, grid.da(), grid.len(), mean, std);
        normalize(&mut values, grid.da())?;
        Ok(Self { grid, values, t: 0.0 })
    }

    pub fn mass(&self) -> f64 {
        mass(&self.values, self.grid.da())
    }
}

impl DensityJoint {
    pub fn zeros(ages: AgeGrid, potentials: PotentialGrid) -> Self {
        Self {
            ages,
            potentials,
            values: vec![0.0; ages.len() * potentials.len()],
            t: 0.0,
        }
    }

    pub fn from_values(ages: AgeGrid, potentials: PotentialGrid, values: Vec<f64>) -> Result<Self> {
        let expected = ages.len() * potentials.len();
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            ages,
            potentials,
            values,
            t: 0.0,
        })
    }

    /// Product of independent truncated Gaussians in age and potential.
    pub fn gaussian(
        ages: AgeGrid,
        potentials: PotentialGrid,
        age: (f64, f64),
        potential: (f64, f64),
    ) -> Result<Self> {
        let n = DensityAge::gaussian(ages, age.0, age.1)?;
        let p = DensityField1D::gaussian(potentials, potential.0, potential.1)?;
        Ok(Self::product(&n, &p))
    }

    /// Independent product `n(a)·p(v)`.
    pub fn product(n: &DensityAge, p: &DensityField1D) -> Self {
        let mut values = Vec::with_capacity(n.values.len() * p.values.len());
        for &nk in &n.values {
            values.extend(p.values.iter().map(|&pi| nk * pi));
        }
        Self {
            ages: n.grid,
            potentials: p.grid,
            values,
            t: n.t,
        }
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n_v = self.potentials.len();
        &self.values[k * n_v..(k + 1) * n_v]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n_v = self.potentials.len();
        &mut self.values[k * n_v..(k + 1) * n_v]
    }

    pub fn cell_area(&self) -> f64 {
        self.ages.da() * self.potentials.dv()
    }

    pub fn mass(&self) -> f64 {
        mass(&self.values, self.cell_area())
    }
}

/// Two-cell split of a point mass: `values[lower]` and `values[lower + 1]`
/// receive the densities in `densities`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaDeposit {
    pub lower: usize,
    pub densities: [f64; 2],
}

impl DeltaDeposit {
    pub fn apply(&self, values: &mut [f64]) {
        self.apply_scaled(values, 1.0);
    }

    pub fn apply_scaled(&self, values: &mut [f64], scale: f64) {
        values[self.lower] += scale * self.densities[0];
        values[self.lower + 1] += scale * self.densities[1];
    }
}

/// Split `weight` between the two cells whose centres bracket `location`,
/// preserving the deposited mass and its first moment.
///
/// Locations in the outer half of the first or last cell cannot be matched
/// with nonnegative weights and are rejected.
pub fn deposit_delta(grid: &PotentialGrid, location: f64, weight: f64) -> Result<DeltaDeposit> {
    let n = grid.len();
    let lo = grid.center(0);
    let hi = grid.center(n - 1);
    if !(location >= lo && location <= hi) {
        return Err(Error::OutsideDomain { location, lo, hi });
    }
    let s = (location - lo) / grid.dv();
    let mut j = s.floor() as usize;
    let mut frac = s - j as f64;
    if frac < 1e-12 {
        frac = 0.0;
    }
    if j >= n - 1 {
        j = n - 2;
        frac = 1.0;
    }
    let dv = grid.dv();
    Ok(DeltaDeposit {
        lower: j,
        densities: [weight * (1.0 - frac) / dv, weight * frac / dv],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> PotentialGrid {
        PotentialGrid::new(-4.0, 0.5, 400).unwrap()
    }

    #[test]
    fn uniform_has_unit_mass() {
        let g = grid();
        let d = DensityField1D::from_values(g, vec![1.0 / 5.0; 400]).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert_eq!(DensityField1D::zeros(g).mass(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            DensityField1D::from_values(grid(), vec![0.0; 3]),
            Err(Error::Dimension { expected: 400, got: 3 })
        ));
    }

    #[test]
    fn gaussian_point_samples_converge_quadratically() {
        // midpoint rule on point samples of m·N(−1.5, 0.3²), far from the edges
        let m = 0.7;
        let err = |n: usize| {
            let g = PotentialGrid::new(-4.0, 0.5, n).unwrap();
            let vals: Vec<f64> = g
                .centers()
                .map(|v| {
                    let z = (v + 1.5) / 0.3;
                    m * (-0.5 * z * z).exp() / (0.3 * (2.0 * std::f64::consts::PI).sqrt())
                })
                .collect();
            (mass(&vals, g.dv()) - m).abs()
        };
        // the midpoint rule on a smooth, rapidly decaying integrand is spectrally accurate,
        // so just require the O(Δv²) bound
        for n in [20usize, 40, 80] {
            let dv = 5.0 / n as f64;
            assert!(err(n) < dv * dv, "n={n} err={}", err(n));
        }
    }

    #[test]
    fn deposit_at_center_and_midway() {
        let g = grid();
        let c = g.center(200);
        let d = deposit_delta(&g, c, 1.0).unwrap();
        assert_eq!(d.lower, 200);
        assert!((d.densities[0] - 1.0 / g.dv()).abs() < 1e-9);
        assert_eq!(d.densities[1], 0.0);

        let mid = 0.5 * (g.center(10) + g.center(11));
        let d = deposit_delta(&g, mid, 1.0).unwrap();
        assert_eq!(d.lower, 10);
        assert!((d.densities[0] - 0.5 / g.dv()).abs() < 1e-9);
        assert!((d.densities[1] - 0.5 / g.dv()).abs() < 1e-9);
    }

    #[test]
    fn deposit_rejects_outer_half_cells() {
        let g = grid();
        assert!(deposit_delta(&g, 1.0, 1.0).is_err());
        assert!(deposit_delta(&g, g.v_min() + 0.1 * g.dv(), 1.0).is_err());
        assert!(deposit_delta(&g, g.center(399), 1.0).is_ok());
    }

    #[test]
    fn joint_gaussian_is_normalized() {
        let a = AgeGrid::with_step(1e-2, 100).unwrap();
        let d = DensityJoint::gaussian(a, grid(), (0.3, 0.1), (0.0, 0.2)).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn deposit_preserves_mass_and_mean(x in -3.99f64..0.99, w in 0.001f64..10.0) {
            let g = grid();
            prop_assume!(x >= g.center(0) && x <= g.center(399));
            let d = deposit_delta(&g, x, w).unwrap();
            let mut v = vec![0.0; 400];
            d.apply(&mut v);
            let m = mass(&v, g.dv());
            let moment: f64 = g.centers().zip(&v).map(|(c, p)| c * p).sum::<f64>() * g.dv();
            prop_assert!((m - w).abs() <= 1e-12 * w.max(1.0));
            prop_assert!((moment - w * x).abs() <= 1e-11 * w.max(1.0));
            prop_assert!(v.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn mass_is_linear(a in 0.0f64..5.0, b in 0.0f64..5.0, seed in 0u64..1000) {
            let g = grid();
            let x: Vec<f64> = (0..400).map(|i| ((i as u64 * 31 + seed) % 17) as f64).collect();
            let y: Vec<f64> = (0..400).map(|i| ((i as u64 * 7 + seed) % 13) as f64).collect();
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = mass(&z, g.dv());
            let rhs = a * mass(&x, g.dv()) + b * mass(&y, g.dv());
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
    }
}
