//! Surface, bulk and interface concentrations from control-volume averages.

use log::warn;

use super::{fixed_grid_volumes, two_phase::shell_volumes};
use crate::params::{CellParameters, Direction, Electrode};
use crate::scalar::Scalar;

/// `g(I)`: `c^beta` of `dir` while discharging, `c^alpha` while charging, 0 at rest.
pub fn interface_concentration(params: &CellParameters, current: f64, dir: Direction) -> f64 {
    let w = params.windows.get(dir);
    if current > 0.0 {
        w.theta_p_beta * params.c_s_max_p
    } else if current < 0.0 {
        w.theta_p_alpha * params.c_s_max_p
    } else {
        0.0
    }
}

/// Half-cell linear extrapolation from the outermost average using the flux
/// boundary condition. `width` is the width of the outermost volume.
pub fn surface_concentration_raw<T: Scalar>(
    c_last: &T,
    width: &T,
    current: &T,
    params: &CellParameters,
    electrode: Electrode,
) -> T {
    let grad_per_amp = params.surface_flux_per_amp(electrode) / params.diffusivity(electrode);
    c_last.clone() + width.clone() * current.clone() * (0.5 * grad_per_amp)
}

/// [`surface_concentration_raw`] clamped to `[0, c_max]` with a warning.
pub fn surface_concentration(
    c_last: f64,
    width: f64,
    current: f64,
    params: &CellParameters,
    electrode: Electrode,
) -> f64 {
    let raw = surface_concentration_raw(&c_last, &width, &current, params, electrode);
    let cmax = params.c_max(electrode);
    if raw < 0.0 || raw > cmax {
        warn!("{} surface concentration {raw:.3} clamped to [0, {cmax}]", electrode.name());
        raw.clamp(0.0, cmax)
    } else {
        raw
    }
}

/// Volume-weighted mean of a one-phase particle.
pub fn bulk_one_phase<T: Scalar>(c: &[T], radius: f64) -> T {
    let vols = fixed_grid_volumes(radius, c.len());
    let total: f64 = vols.iter().sum();
    let mut acc = c[0].lift(0.0);
    for (ci, v) in c.iter().zip(&vols) {
        acc = acc + ci.clone() * *v;
    }
    acc / total
}

/// Core plus shell average of a two-phase particle.
pub fn bulk_two_phase<T: Scalar>(c_shell: &[T], r_p: &T, c_core: f64, radius: f64) -> T {
    let vols = shell_volumes(radius, r_p, c_shell.len());
    let mut acc = r_p.cube() * (c_core / 3.0);
    for (ci, v) in c_shell.iter().zip(vols) {
        acc = acc + ci.clone() * v;
    }
    acc / (radius.powi(3) / 3.0)
}
