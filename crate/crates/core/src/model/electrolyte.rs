//! Electrolyte diffusion across negative electrode, separator and positive
//! electrode on a 1-D grid of pore-volume-weighted control volumes.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{AffineSystem, DiscretizationConfig};
use crate::error::{ModelError, Result};
use crate::params::{CellParameters, FARADAY};

/// Geometry of the electrolyte grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrolyteGrid {
    pub split: [usize; 3],
    /// Widths [m] of each volume.
    pub widths: Vec<f64>,
    /// Pore volume per unit plate area [m], `eps_e * width`.
    pub pore_volumes: Vec<f64>,
    /// Effective diffusivity `D_e eps_e^brugg` of each volume.
    pub diffusivities: Vec<f64>,
}

impl ElectrolyteGrid {
    pub fn new(params: &CellParameters, disc: &DiscretizationConfig) -> Result<Self> {
        let split = disc.split()?;
        let regions = [
            (params.l_n, params.eps_e_n),
            (params.l_s, params.eps_e_s),
            (params.l_p, params.eps_e_p),
        ];
        let mut widths = Vec::with_capacity(disc.n_e);
        let mut pore_volumes = Vec::with_capacity(disc.n_e);
        let mut diffusivities = Vec::with_capacity(disc.n_e);
        for (&n, &(len, eps)) in split.iter().zip(&regions) {
            let w = len / n as f64;
            for _ in 0..n {
                widths.push(w);
                pore_volumes.push(eps * w);
                diffusivities.push(params.d_e * eps.powf(params.brugg));
            }
        }
        Ok(ElectrolyteGrid { split, widths, pore_volumes, diffusivities })
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn negative(&self) -> Range<usize> {
        0..self.split[0]
    }

    pub fn separator(&self) -> Range<usize> {
        self.split[0]..self.split[0] + self.split[1]
    }

    pub fn positive(&self) -> Range<usize> {
        self.split[0] + self.split[1]..self.len()
    }

    /// Total dissolved lithium [mol].
    pub fn total_lithium(&self, c_e: &[f64], a_cell: f64) -> f64 {
        a_cell * c_e.iter().zip(&self.pore_volumes).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Arithmetic mean of a region's volumes.
    pub fn region_mean(c_e: &[f64], range: Range<usize>) -> f64 {
        let n = range.len() as f64;
        c_e[range].iter().sum::<f64>() / n
    }
}

/// `dc_e/dt = A_e c_e + B_e I`.
pub fn build_electrolyte_system(params: &CellParameters, disc: &DiscretizationConfig) -> Result<AffineSystem> {
    params.validate()?;
    let grid = ElectrolyteGrid::new(params, disc)?;
    let n = grid.len();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        // harmonic mean over the two half-widths
        let conductance = 1.0
            / (0.5 * grid.widths[k] / grid.diffusivities[k]
                + 0.5 * grid.widths[k + 1] / grid.diffusivities[k + 1]);
        for (i, j) in [(k, k + 1), (k + 1, k)] {
            let rate = conductance / grid.pore_volumes[i];
            a[(i, j)] += rate;
            a[(i, i)] -= rate;
        }
    }
    let mut b = DVector::zeros(n);
    let src = |len: f64, eps: f64| (1.0 - params.t_plus) / (FARADAY * params.a_cell * len * eps);
    for i in grid.negative() {
        b[i] = src(params.l_n, params.eps_e_n);
    }
    for i in grid.positive() {
        b[i] = -src(params.l_p, params.eps_e_p);
    }
    if !(b.iter().all(|v| v.is_finite())) {
        return Err(ModelError::Config("non-finite electrolyte source".into()));
    }
    AffineSystem::new(a, b, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(split: Option<[usize; 3]>, n_e: usize) -> (CellParameters, DiscretizationConfig) {
        let disc = DiscretizationConfig { n_e, electrolyte_split: split, ..Default::default() };
        (CellParameters::lfp_reference(), disc)
    }

    #[test]
    fn uniform_rest_is_stationary_and_rows_sum_to_zero() {
        let (p, d) = setup(Some([3, 2, 4]), 9);
        let sys = build_electrolyte_system(&p, &d).unwrap();
        let dx = sys.apply(&vec![p.c_e0; 9], &0.0);
        assert!(dx.iter().all(|v| v.abs() < 1e-9));
        for i in 0..9 {
            let s: f64 = (0..9).map(|j| sys.a[(i, j)]).sum();
            assert!(s.abs() <= 1e-12 * sys.a[(i, i)].abs());
        }
    }

    #[test]
    fn sources_cancel() {
        let (p, d) = setup(None, 12);
        let sys = build_electrolyte_system(&p, &d).unwrap();
        let grid = ElectrolyteGrid::new(&p, &d).unwrap();
        let net: f64 = sys.b.iter().zip(&grid.pore_volumes).map(|(b, v)| b * v).sum();
        let scale: f64 = sys.b.iter().zip(&grid.pore_volumes).map(|(b, v)| (b * v).abs()).sum();
        assert!(net.abs() < 1e-14 * scale);
        assert!(grid.separator().all(|i| sys.b[i] == 0.0));
    }

    #[test]
    fn bad_split_is_config_error() {
        let (p, d) = setup(Some([3, 3, 4]), 9);
        assert!(matches!(build_electrolyte_system(&p, &d), Err(ModelError::Config(_))));
    }

    /// Pulse then relaxation with a fine implicit integrator: the field goes
    /// back to uniform at the initial concentration.
    #[test]
    fn relaxes_to_initial_mean_after_pulse() {
        let (p, d) = setup(None, 9);
        let sys = build_electrolyte_system(&p, &d).unwrap();
        let grid = ElectrolyteGrid::new(&p, &d).unwrap();
        let mut c = DVector::from_element(9, p.c_e0);
        let h = 1.0;
        let lhs = DMatrix::identity(9, 9) - &sys.a * h;
        let lu = lhs.lu();
        for step in 0..20_000 {
            let current = if step < 600 { 30.0 } else { 0.0 };
            c = lu.solve(&(&c + &sys.b * (current * h))).unwrap();
        }
        let total0 = grid.total_lithium(&vec![p.c_e0; 9], p.a_cell);
        assert_relative_eq!(grid.total_lithium(c.as_slice(), p.a_cell), total0, max_relative = 1e-12);
        for v in c.iter() {
            assert_relative_eq!(*v, p.c_e0, max_relative = 1e-8);
        }
    }
}
