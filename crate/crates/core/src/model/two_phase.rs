//! Core-shell positive particle: diffusion on a shell of equal-width control
//! volumes between the moving phase boundary `r_p` and the particle surface,
//! coupled to the boundary's Stefan condition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{shell_volume, AffineSystem};
use crate::error::{ModelError, Result};
use crate::params::{CellParameters, Direction, Electrode};
use crate::scalar::Scalar;

/// Condition at the core-shell interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interface {
    /// Dirichlet value `g` on the shell side; the core holds `c_core`.
    /// The boundary moves with `dr_p/dt = q / (c_core - g)` where `q` is the
    /// inward diffusive flux density at `r_p`.
    Active { g: f64, c_core: f64 },
    /// Zero flux, boundary at rest (no applied current).
    Frozen,
}

/// Constants of the shell dynamics that do not depend on the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellContext {
    pub n: usize,
    pub radius: f64,
    pub diffusivity: f64,
    /// Surface molar flux density per ampere [mol/(m^2 s A)].
    pub flux_per_amp: f64,
    pub interface: Interface,
    /// Include the face-motion terms of the stretching shell grid.
    pub moving_mesh: bool,
}

impl ShellContext {
    pub fn new(params: &CellParameters, n: usize, interface: Interface, moving_mesh: bool) -> Self {
        ShellContext {
            n,
            radius: params.r_s_p,
            diffusivity: params.d_s_p,
            flux_per_amp: params.surface_flux_per_amp(Electrode::Positive),
            interface,
            moving_mesh,
        }
    }
}

/// Width of each shell volume, `(R - r_p) / N`.
pub fn shell_width(radius: f64, r_p: f64, n: usize) -> f64 {
    (radius - r_p) / n as f64
}

/// Shell volume weights [m^3 / (4 pi)] for a boundary at `r_p`.
pub fn shell_volumes<T: Scalar>(radius: f64, r_p: &T, n: usize) -> Vec<T> {
    let dr = (r_p.lift(radius) - r_p.clone()) / n as f64;
    (0..n)
        .map(|i| {
            let a = r_p.clone() + dr.clone() * i as f64;
            let b = r_p.clone() + dr.clone() * (i + 1) as f64;
            shell_volume(&a, &b)
        })
        .collect()
}

/// Flux-form right-hand side: returns `(dc/dt, dr_p/dt)`.
pub fn shell_rhs<T: Scalar>(c: &[T], r_p: &T, current: &T, ctx: &ShellContext) -> (Vec<T>, T) {
    let n = ctx.n;
    let d = ctx.diffusivity;
    let dr = (r_p.lift(ctx.radius) - r_p.clone()) / n as f64;
    let face = |k: usize| r_p.clone() + dr.clone() * k as f64;
    let area = |k: usize| face(k).square();

    // Radial flux (outward positive) times r^2 at every face.
    let mut flux: Vec<T> = Vec::with_capacity(n + 1);
    let r_dot = match ctx.interface {
        Interface::Active { g, c_core } => {
            let q = (c[0].clone() - g) * (2.0 * d) / dr.clone();
            flux.push(-(area(0) * q.clone()));
            q / (c_core - g)
        }
        Interface::Frozen => {
            flux.push(r_p.lift(0.0));
            r_p.lift(0.0)
        }
    };
    for k in 1..n {
        flux.push(-(area(k) * (c[k].clone() - c[k - 1].clone()) * d / dr.clone()));
    }
    flux.push(-(current.clone() * (ctx.radius * ctx.radius * ctx.flux_per_amp)));

    let vols = shell_volumes(ctx.radius, r_p, n);
    let mut dc: Vec<T> = (0..n).map(|i| flux[i].clone() - flux[i + 1].clone()).collect();

    if ctx.moving_mesh {
        if let Interface::Active { g, .. } = ctx.interface {
            // Face k moves with r_dot (1 - k/N); the swept material carries the face value.
            let face_value = |k: usize| -> T {
                if k == 0 {
                    r_p.lift(g)
                } else {
                    (c[k - 1].clone() + c[k].clone()) * 0.5
                }
            };
            for (i, dci) in dc.iter_mut().enumerate() {
                let w_in = r_dot.clone() * (1.0 - i as f64 / n as f64);
                let w_out = r_dot.clone() * (1.0 - (i + 1) as f64 / n as f64);
                let inflow = area(i) * w_in * (face_value(i) - c[i].clone());
                let outflow = if i + 1 < n {
                    area(i + 1) * w_out * (face_value(i + 1) - c[i].clone())
                } else {
                    r_p.lift(0.0)
                };
                *dci = dci.clone() + outflow - inflow;
            }
        }
    }
    let dc = dc.into_iter().zip(vols).map(|(v, vol)| v / vol).collect();
    (dc, r_dot)
}

/// Phase of a one-phase particle or of the core of a two-phase particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Lithium-poor.
    Alpha,
    /// Lithium-rich.
    Beta,
}

impl Phase {
    pub fn other(self) -> Phase {
        match self {
            Phase::Alpha => Phase::Beta,
            Phase::Beta => Phase::Alpha,
        }
    }

    /// Plateau edge concentration of this phase in a direction's window.
    pub fn edge(self, params: &CellParameters, dir: Direction) -> f64 {
        let w = params.windows.get(dir);
        match self {
            Phase::Alpha => w.theta_p_alpha * params.c_s_max_p,
            Phase::Beta => w.theta_p_beta * params.c_s_max_p,
        }
    }
}

/// Interface condition of a particle whose core is `core`: the shell side sits
/// at the shell phase's plateau edge of the current direction. On monotone
/// paths (alpha core while discharging, beta core while charging) this is
/// exactly `g(I)`; after a reversal inside the plateau it keeps the interface
/// consistent with the retained core.
pub fn interface_for_core(params: &CellParameters, current: f64, core: Phase, c_core: f64) -> Interface {
    match Direction::from_current(current) {
        None => Interface::Frozen,
        Some(dir) => Interface::Active { g: core.other().edge(params, dir), c_core },
    }
}

/// Interface condition implied by the current alone: `g(I)` selects the
/// shell-side plateau edge of the current's direction and the core holds the
/// opposite edge.
pub fn interface_from_current(params: &CellParameters, current: f64) -> Interface {
    match Direction::from_current(current) {
        None => Interface::Frozen,
        Some(dir) => {
            let w = params.windows.get(dir);
            let (c_alpha, c_beta) = (w.theta_p_alpha * params.c_s_max_p, w.theta_p_beta * params.c_s_max_p);
            match dir {
                Direction::Discharge => Interface::Active { g: c_beta, c_core: c_alpha },
                Direction::Charge => Interface::Active { g: c_alpha, c_core: c_beta },
            }
        }
    }
}

/// Matrix form `x' = A_s x + B_s I + G_s` with `x = [c_1 .. c_N, r_p]`, frozen at
/// the given boundary position. The shell rows carry the fixed-grid diffusion;
/// the last row is the Stefan condition. Moving-mesh terms are not part of this
/// linearization.
pub fn build_two_phase_system_with(
    params: &CellParameters,
    r_p: f64,
    n_r: usize,
    interface: Interface,
) -> Result<AffineSystem> {
    if n_r < 2 {
        return Err(ModelError::Parameter(format!("n_r must be >= 2, got {n_r}")));
    }
    let radius = params.r_s_p;
    if !(r_p > 0.0 && r_p < radius) {
        return Err(ModelError::PhaseDomain(format!(
            "r_p = {r_p:e} outside (0, R_s_p = {radius:e})"
        )));
    }
    let d = params.d_s_p;
    let dr = shell_width(radius, r_p, n_r);
    let face = |k: usize| r_p + dr * k as f64;
    let dim = n_r + 1;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut g = DVector::zeros(dim);
    for i in 0..n_r {
        // 3 D / dr / (r_out^3 - r_in^3)
        let pre = 3.0 * d / dr / (face(i + 1).powi(3) - face(i).powi(3));
        let outer = if i + 1 < n_r { face(i + 1).powi(2) } else { 0.0 };
        let inner = if i > 0 { face(i).powi(2) } else { 0.0 };
        if i > 0 {
            a[(i, i - 1)] = pre * inner;
        }
        if i + 1 < n_r {
            a[(i, i + 1)] = pre * outer;
        }
        a[(i, i)] = -pre * (inner + outer);
    }
    if let Interface::Active { g: gv, c_core } = interface {
        // half-width Dirichlet coupling at r_p
        let pre = 6.0 * d * r_p * r_p / (dr * (face(1).powi(3) - r_p.powi(3)));
        a[(0, 0)] -= pre;
        g[0] = pre * gv;
        a[(n_r, 0)] = 2.0 * d / (dr * (c_core - gv));
        g[n_r] = -2.0 * d * gv / (dr * (c_core - gv));
    }
    b[n_r - 1] = 3.0 * radius * radius * params.surface_flux_per_amp(Electrode::Positive)
        / (radius.powi(3) - face(n_r - 1).powi(3));
    AffineSystem::new(a, b, Some(g))
}

/// Variant with the current column on the second-outermost shell row, the
/// placement of the commonly printed form of `B_s`. Kept for cross-checking;
/// it does not conserve lithium (see tests).
pub fn build_two_phase_system_printed_b(
    params: &CellParameters,
    r_p: f64,
    current: f64,
    n_r: usize,
) -> Result<AffineSystem> {
    let sys = build_two_phase_system(params, r_p, current, n_r)?;
    let mut b = DVector::zeros(n_r + 1);
    b[n_r - 2] = sys.b[n_r - 1];
    AffineSystem::new(sys.a, b, sys.g)
}

/// Two-phase system with the interface implied by `g(I)`.
pub fn build_two_phase_system(
    params: &CellParameters,
    r_p: f64,
    current: f64,
    n_r: usize,
) -> Result<AffineSystem> {
    build_two_phase_system_with(params, r_p, n_r, interface_from_current(params, current))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> CellParameters {
        CellParameters::lfp_reference()
    }

    #[test]
    fn shell_width_at_half_radius() {
        let dr = shell_width(1.67e-8, 1.67e-8 / 2.0, 4);
        assert_relative_eq!(dr, 2.0875e-9, max_relative = 1e-12);
        assert_eq!(dr * 4.0 + 1.67e-8 / 2.0, 1.67e-8);
    }

    #[test]
    fn rejects_boundary_outside_particle() {
        let p = params();
        for r in [0.0, -1e-9, p.r_s_p, 2.0 * p.r_s_p] {
            assert!(matches!(build_two_phase_system(&p, r, 1.0, 4), Err(ModelError::PhaseDomain(_))));
        }
    }

    #[test]
    fn zero_current_freezes_boundary() {
        let p = params();
        let sys = build_two_phase_system(&p, 0.4 * p.r_s_p, 0.0, 4).unwrap();
        let g = sys.g.as_ref().unwrap();
        assert_eq!(g[4], 0.0);
        let x = [9000.0, 9000.0, 9000.0, 9000.0, 0.4 * p.r_s_p];
        let dx = sys.apply(&x, &0.0);
        assert_eq!(dx[4], 0.0);
        for v in &dx[..4] {
            assert!(v.abs() < 1e-9);
        }
    }

    /// The paper-form matrices and the flux form agree on the fixed grid.
    #[test]
    fn matrix_form_equals_flux_form_without_mesh_motion() {
        let p = params();
        let r_p = 0.37 * p.r_s_p;
        for current in [12.0, -7.0, 0.0] {
            let interface = interface_from_current(&p, current);
            let sys = build_two_phase_system_with(&p, r_p, 5, interface).unwrap();
            let c: Vec<f64> = (0..5).map(|i| 15000.0 + 300.0 * i as f64).collect();
            let mut x = c.clone();
            x.push(r_p);
            let dx = sys.apply(&x, &current);
            let ctx = ShellContext::new(&p, 5, interface, false);
            let (dc, drp) = shell_rhs(&c, &r_p, &current, &ctx);
            for i in 0..5 {
                assert_relative_eq!(dx[i], dc[i], max_relative = 1e-10, epsilon = 1e-12);
            }
            assert_relative_eq!(dx[5], drp, max_relative = 1e-10, epsilon = 1e-30);
        }
    }

    /// A shell linear in r between the interface value at r_p and c_beta at the
    /// surface: the Stefan row reproduces D / (c_core - g) times the analytic
    /// gradient up to the half-cell truncation error.
    #[test]
    fn stefan_row_tracks_linear_profile_gradient() {
        let p = params();
        let r_p = 0.5 * p.r_s_p;
        let current = 10.0;
        let Interface::Active { g, c_core } = interface_from_current(&p, current) else { panic!() };
        let top = g + 400.0;
        let n = 8;
        let dr = shell_width(p.r_s_p, r_p, n);
        let slope = (top - g) / (p.r_s_p - r_p);
        let mut x: Vec<f64> = (0..n).map(|i| g + slope * (i as f64 + 0.5) * dr).collect();
        x.push(r_p);
        let sys = build_two_phase_system(&p, r_p, current, n).unwrap();
        let dx = sys.apply(&x, &current);
        let analytic = p.d_s_p / (c_core - g) * slope;
        assert_relative_eq!(dx[n], analytic, max_relative = 1e-9);
        // sign convention: discharge shrinks the core when the shell is richer than g
        assert!(dx[n] < 0.0);
    }

    /// With the printed current placement the shell's lithium rate no longer
    /// matches the surface influx; the outermost placement does.
    #[test]
    fn printed_current_row_breaks_shell_balance() {
        let p = params();
        let r_p = 0.6 * p.r_s_p;
        let n = 4;
        let current = 5.0;
        let c = vec![18000.0; n];
        let mut x = c.clone();
        x.push(r_p);
        let vols = shell_volumes(p.r_s_p, &r_p, n);
        let surface_part = |sys: &AffineSystem| -> f64 {
            let with = sys.apply(&x, &current);
            let without = sys.apply(&x, &0.0);
            (0..n).map(|i| (with[i] - without[i]) * vols[i]).sum()
        };
        let influx = p.r_s_p.powi(2) * p.surface_flux_per_amp(Electrode::Positive) * current;
        let good = build_two_phase_system(&p, r_p, current, n).unwrap();
        let printed = build_two_phase_system_printed_b(&p, r_p, current, n).unwrap();
        assert_relative_eq!(surface_part(&good), influx, max_relative = 1e-12);
        assert!((surface_part(&printed) - influx).abs() > 0.1 * influx);
    }

    proptest! {
        /// Core plus shell lithium changes exactly by the surface influx when the
        /// face motion of the stretching grid is included.
        #[test]
        fn moving_mesh_rhs_conserves_particle_lithium(
            frac in 0.05f64..0.95,
            profile in prop::collection::vec(-1.0f64..1.0, 6),
            current in prop_oneof![-30.0f64..-0.1, 0.1f64..30.0],
            n in 2usize..7,
        ) {
            let p = params();
            let r_p = frac * p.r_s_p;
            let interface = interface_from_current(&p, current);
            let Interface::Active { g, c_core } = interface else { unreachable!() };
            let c: Vec<f64> = profile[..n].iter().map(|u| g + 200.0 * u).collect();
            let ctx = ShellContext::new(&p, n, interface, true);
            let (dc, dr) = shell_rhs(&c, &r_p, &current, &ctx);
            // d/dt [core + shell] by chain rule through the volumes
            let h = 1e-6 * r_p;
            let vol_p = shell_volumes(p.r_s_p, &(r_p + h), n);
            let vol_m = shell_volumes(p.r_s_p, &(r_p - h), n);
            let vols = shell_volumes(p.r_s_p, &r_p, n);
            let mut rate = r_p * r_p * dr * c_core;
            for i in 0..n {
                rate += vols[i] * dc[i] + (vol_p[i] - vol_m[i]) / (2.0 * h) * dr * c[i];
            }
            let influx = p.r_s_p.powi(2) * ctx.flux_per_amp * current;
            let scale = influx.abs() + (r_p * r_p * dr * c_core).abs();
            prop_assert!((rate - influx).abs() < 1e-6 * scale, "rate {rate} influx {influx}");
        }
    }
}
