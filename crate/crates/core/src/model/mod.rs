//! Discretized state-space systems of the solid and electrolyte phases.
//!
//! Finite-volume (FVM) builders are the production path; the finite-difference
//! (FDM) builders exist as a reference scheme for comparison.

pub mod electrolyte;
pub mod fdm;
pub mod reconstruct;
pub mod solid;
pub mod two_phase;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Fvm,
    Fdm,
}

impl std::str::FromStr for Scheme {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvm" => Ok(Scheme::Fvm),
            "fdm" => Ok(Scheme::Fdm),
            other => Err(ModelError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscretizationConfig {
    /// Control volumes (FVM) or nodes (FDM) per solid particle.
    pub n_r: usize,
    /// Total electrolyte control volumes.
    pub n_e: usize,
    pub scheme: Scheme,
    /// Electrolyte volumes per region (negative, separator, positive); an even
    /// split of `n_e` when absent.
    pub electrolyte_split: Option<[usize; 3]>,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig { n_r: 4, n_e: 9, scheme: Scheme::Fvm, electrolyte_split: None }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_r < 2 {
            return Err(ModelError::Parameter(format!("n_r must be >= 2, got {}", self.n_r)));
        }
        self.split().map(|_| ())
    }

    pub fn split(&self) -> Result<[usize; 3]> {
        if self.n_e < 3 {
            return Err(ModelError::Config(format!("n_e must be >= 3, got {}", self.n_e)));
        }
        match self.electrolyte_split {
            Some(s) => {
                if s.iter().any(|&k| k == 0) || s.iter().sum::<usize>() != self.n_e {
                    return Err(ModelError::Config(format!(
                        "electrolyte split {s:?} must have nonzero entries summing to n_e = {}",
                        self.n_e
                    )));
                }
                Ok(s)
            }
            None if self.n_e % 3 == 0 => Ok([self.n_e / 3; 3]),
            None => Err(ModelError::Config(format!(
                "n_e = {} is not divisible into three equal regions; give electrolyte_split",
                self.n_e
            ))),
        }
    }
}

/// `dx/dt = A x + B u + G`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: Option<DVector<f64>>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AffineSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, g: Option<DVector<f64>>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || g.as_ref().is_some_and(|g| g.len() != n) {
            return Err(ModelError::Numerical("affine system shape mismatch".into()));
        }
        let finite = a.iter().chain(b.iter()).chain(g.iter().flat_map(|g| g.iter())).all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::Numerical("non-finite entry in affine system".into()));
        }
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| a[(i, j)] != 0.0).map(|j| (j, a[(i, j)])).collect())
            .collect();
        Ok(AffineSystem { a, b, g, rows })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `A x + B u + G`, skipping structural zeros of `A`.
    pub fn apply<T: Scalar>(&self, x: &[T], u: &T) -> Vec<T> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut acc = u.clone() * self.b[i];
                for &(j, a) in row {
                    acc = acc + x[j].clone() * a;
                }
                match &self.g {
                    Some(g) => acc + g[i],
                    None => acc,
                }
            })
            .collect()
    }

    pub fn apply_f64(&self, x: &[f64], u: f64, out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = self.b[i] * u;
            for &(j, a) in row {
                acc += a * x[j];
            }
            if let Some(g) = &self.g {
                acc += g[i];
            }
            out[i] = acc;
        }
    }

    /// Largest absolute row sum of `A` (a bound on its spectral radius).
    pub fn gershgorin_bound(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, a)| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Volume of a spherical shell between radii `a < b`, without the 4 pi factor.
pub(crate) fn shell_volume<T: Scalar>(a: &T, b: &T) -> T {
    (b.cube() - a.cube()) / 3.0
}

/// Volume weights [m^3 / (4 pi)] of the equal-width fixed grid on `[0, radius]`.
pub fn fixed_grid_volumes(radius: f64, n: usize) -> Vec<f64> {
    let dr = radius / n as f64;
    (0..n)
        .map(|i| shell_volume(&(i as f64 * dr), &((i + 1) as f64 * dr)))
        .collect()
}
