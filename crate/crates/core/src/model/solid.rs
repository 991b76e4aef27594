//! One-phase spherical diffusion on a fixed grid of equal-width control volumes.

use nalgebra::{DMatrix, DVector};

use super::{fixed_grid_volumes, AffineSystem};
use crate::error::{ModelError, Result};
use crate::params::{CellParameters, Electrode};

/// `dc/dt = A c + B I` for the control-volume averages of one electrode's particle.
///
/// Zero flux at the centre; the applied current enters through `B` on the
/// outermost volume only.
pub fn build_one_phase_solid_system(
    params: &CellParameters,
    electrode: Electrode,
    n_r: usize,
) -> Result<AffineSystem> {
    if n_r < 2 {
        return Err(ModelError::Parameter(format!("n_r must be >= 2, got {n_r}")));
    }
    params.validate()?;
    let radius = params.radius(electrode);
    let d = params.diffusivity(electrode);
    let dr = radius / n_r as f64;
    let vols = fixed_grid_volumes(radius, n_r);
    let face_area = |k: usize| (k as f64 * dr).powi(2);

    let mut a = DMatrix::zeros(n_r, n_r);
    for i in 0..n_r {
        let inner = face_area(i) * d / dr / vols[i];
        let outer = if i + 1 < n_r { face_area(i + 1) * d / dr / vols[i] } else { 0.0 };
        if i > 0 {
            a[(i, i - 1)] = inner;
        }
        if i + 1 < n_r {
            a[(i, i + 1)] = outer;
        }
        a[(i, i)] = -(inner + outer);
    }
    let mut b = DVector::zeros(n_r);
    b[n_r - 1] = radius * radius * params.surface_flux_per_amp(electrode) / vols[n_r - 1];
    AffineSystem::new(a, b, None)
}
