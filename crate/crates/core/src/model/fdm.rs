//! Central-difference reference scheme on nodes, with ghost nodes at the
//! boundaries. Same state shapes as the finite-volume builders, but node
//! values instead of volume averages, so lithium is only conserved up to the
//! quadrature error of the node weights.

use nalgebra::{DMatrix, DVector};

use super::two_phase::{Interface, ShellContext};
use super::AffineSystem;
use crate::error::{ModelError, Result};
use crate::params::{CellParameters, Electrode};
use crate::scalar::Scalar;

/// One-phase nodes at `r_i = i R / (N - 1)`, `i = 0..N`: centre to surface.
pub fn one_phase_nodes(radius: f64, n: usize) -> Vec<f64> {
    let dr = radius / (n - 1) as f64;
    (0..n).map(|i| i as f64 * dr).collect()
}

/// Trapezoidal weights of `int c r^2 dr` on arbitrary nodes (no 4 pi).
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; nodes.len()];
    for k in 0..nodes.len() - 1 {
        let h = nodes[k + 1] - nodes[k];
        w[k] += 0.5 * h * nodes[k] * nodes[k];
        w[k + 1] += 0.5 * h * nodes[k + 1] * nodes[k + 1];
    }
    w
}

pub fn build_one_phase_fdm_system(params: &CellParameters, electrode: Electrode, n_r: usize) -> Result<AffineSystem> {
    if n_r < 2 {
        return Err(ModelError::Parameter(format!("n_r must be >= 2, got {n_r}")));
    }
    params.validate()?;
    let radius = params.radius(electrode);
    let d = params.diffusivity(electrode);
    let dr = radius / (n_r - 1) as f64;
    let k = d / (dr * dr);
    let mut a = DMatrix::zeros(n_r, n_r);
    let mut b = DVector::zeros(n_r);
    // centre: symmetric ghost, 3 D c''(0)
    a[(0, 0)] = -6.0 * k;
    a[(0, 1)] = 6.0 * k;
    for i in 1..n_r {
        let r = i as f64 * dr;
        let (lo, hi) = (1.0 - dr / r, 1.0 + dr / r);
        a[(i, i)] -= 2.0 * k;
        a[(i, i - 1)] += k * lo;
        if i + 1 < n_r {
            a[(i, i + 1)] += k * hi;
        } else {
            // ghost c_N = c_{N-2} + 2 dr J / D
            a[(i, i - 1)] += k * hi;
            b[i] = k * hi * 2.0 * dr * params.surface_flux_per_amp(electrode) / d;
        }
    }
    AffineSystem::new(a, b, None)
}

/// Shell nodes `r_p + k dr`, `k = 1..=N`; the interface node carries `g`.
pub fn fdm_shell_rhs<T: Scalar>(c: &[T], r_p: &T, current: &T, ctx: &ShellContext) -> (Vec<T>, T) {
    let n = ctx.n;
    let d = ctx.diffusivity;
    let dr = (r_p.lift(ctx.radius) - r_p.clone()) / n as f64;
    let inner = match ctx.interface {
        Interface::Active { g, .. } => r_p.lift(g),
        // zero-flux mirror across the interface
        Interface::Frozen => c[0].clone(),
    };
    let node = |k: usize| -> T {
        if k == 0 {
            inner.clone()
        } else {
            c[k - 1].clone()
        }
    };
    let grad_surface = current.clone() * (ctx.flux_per_amp / d);
    let ghost = node(n - 1) + dr.clone() * grad_surface * 2.0;
    let node_ext = |k: usize| -> T {
        if k == n + 1 {
            ghost.clone()
        } else {
            node(k)
        }
    };

    let r_dot = match ctx.interface {
        Interface::Active { g, c_core } => {
            let grad = if n >= 2 {
                (node(1) * 4.0 - node(2) - r_p.lift(3.0 * g)) / (dr.clone() * 2.0)
            } else {
                (node(1) - g) / dr.clone()
            };
            grad * d / (c_core - g)
        }
        Interface::Frozen => r_p.lift(0.0),
    };

    let mut dc = Vec::with_capacity(n);
    for k in 1..=n {
        let r = r_p.clone() + dr.clone() * k as f64;
        let (cm, c0, cp) = (node_ext(k - 1), node_ext(k), node_ext(k + 1));
        let lap = (cp.clone() - c0.clone() * 2.0 + cm.clone()) / dr.square()
            + (cp.clone() - cm.clone()) / (r * dr.clone());
        let mut v = lap * d;
        if ctx.moving_mesh {
            if let Interface::Active { .. } = ctx.interface {
                let w = r_dot.clone() * (1.0 - k as f64 / n as f64);
                v = v + w * (cp - cm) / (dr.clone() * 2.0);
            }
        }
        dc.push(v);
    }
    (dc, r_dot)
}

/// Shell node weights for `int c r^2 dr` over `[r_p, R]`, excluding the
/// interface node (returned separately as the second element).
pub fn fdm_shell_weights(radius: f64, r_p: f64, n: usize) -> (Vec<f64>, f64) {
    let dr = (radius - r_p) / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|k| r_p + k as f64 * dr).collect();
    let w = trapezoid_weights(&nodes);
    (w[1..].to_vec(), w[0])
}

/// Affine form of a two-phase right-hand side at a fixed boundary position
/// (no grid motion), assembled by probing. The state is `[c_1..c_N, r_p]`.
pub fn linearize_shell_rhs(
    rhs: impl Fn(&[f64], f64) -> (Vec<f64>, f64),
    n: usize,
) -> Result<AffineSystem> {
    let eval = |c: &[f64], i: f64| {
        let (mut dc, dr) = rhs(c, i);
        dc.push(dr);
        DVector::from_vec(dc)
    };
    let zero = vec![0.0; n];
    let base = eval(&zero, 0.0);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        let mut e = zero.clone();
        e[j] = 1.0;
        a.set_column(j, &(eval(&e, 0.0) - &base));
    }
    let b = eval(&zero, 1.0) - &base;
    AffineSystem::new(a, b, Some(base))
}

pub fn build_two_phase_fdm_system(
    params: &CellParameters,
    r_p: f64,
    current: f64,
    n_r: usize,
) -> Result<AffineSystem> {
    if n_r < 2 {
        return Err(ModelError::Parameter(format!("n_r must be >= 2, got {n_r}")));
    }
    if !(r_p > 0.0 && r_p < params.r_s_p) {
        return Err(ModelError::PhaseDomain(format!("r_p = {r_p:e} outside (0, R_s_p)")));
    }
    let interface = super::two_phase::interface_from_current(params, current);
    let ctx = ShellContext::new(params, n_r, interface, false);
    linearize_shell_rhs(|c, i| fdm_shell_rhs(c, &r_p, &i, &ctx), n_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::two_phase::{interface_from_current, shell_rhs};
    use approx::assert_relative_eq;

    fn params() -> CellParameters {
        CellParameters::lfp_reference()
    }

    #[test]
    fn uniform_rest_is_stationary() {
        let p = params();
        for e in [Electrode::Negative, Electrode::Positive] {
            let sys = build_one_phase_fdm_system(&p, e, 5).unwrap();
            let dx = sys.apply(&[3000.0; 5], &0.0);
            assert!(dx.iter().all(|v| v.abs() < 1e-9 * sys.gershgorin_bound()));
        }
        let ctx = ShellContext::new(&p, 3, Interface::Frozen, true);
        let (dc, dr) = fdm_shell_rhs(&[9000.0; 3], &(0.5 * p.r_s_p), &0.0, &ctx);
        assert_eq!(dr, 0.0);
        assert!(dc.iter().all(|v| v.abs() < 1e-12));
    }

    /// Quadratic profiles are exact steady-growth solutions: c = a + b r^2 with
    /// D * 6 b uniform rate, which the centred stencil reproduces exactly.
    #[test]
    fn one_phase_stencil_exact_on_quadratics() {
        let p = params();
        let n = 6;
        let sys = build_one_phase_fdm_system(&p, Electrode::Positive, n).unwrap();
        let nodes = one_phase_nodes(p.r_s_p, n);
        let bq = 1e18;
        let c: Vec<f64> = nodes.iter().map(|r| 1000.0 + bq * r * r).collect();
        // current matching the surface gradient 2 b R
        let current = 2.0 * bq * p.r_s_p * p.d_s_p / p.surface_flux_per_amp(Electrode::Positive);
        let dx = sys.apply(&c, &current);
        for v in dx {
            assert_relative_eq!(v, 6.0 * bq * p.d_s_p, max_relative = 1e-8);
        }
    }

    #[test]
    fn trapezoid_weights_integrate_r2() {
        let nodes = one_phase_nodes(2.0, 401);
        let s: f64 = trapezoid_weights(&nodes).iter().sum();
        assert_relative_eq!(s, 8.0 / 3.0, max_relative = 1e-4);
    }

    #[test]
    fn linearized_fvm_shell_matches_direct_builder() {
        let p = params();
        let r_p = 0.4 * p.r_s_p;
        let i = -3.0;
        let ctx = ShellContext::new(&p, 4, interface_from_current(&p, i), false);
        let probed = linearize_shell_rhs(|c, u| shell_rhs(c, &r_p, &u, &ctx), 4).unwrap();
        let direct = crate::model::two_phase::build_two_phase_system(&p, r_p, i, 4).unwrap();
        let x = [6000.0, 6100.0, 6300.0, 6200.0, r_p];
        let (a, b) = (probed.apply(&x, &i), direct.apply(&x, &i));
        for k in 0..5 {
            assert_relative_eq!(a[k], b[k], max_relative = 1e-8, epsilon = 1e-25);
        }
    }

    #[test]
    fn two_phase_fdm_errors_outside_domain() {
        let p = params();
        assert!(matches!(build_two_phase_fdm_system(&p, 0.0, 1.0, 3), Err(ModelError::PhaseDomain(_))));
        assert_eq!(build_two_phase_fdm_system(&p, 0.5 * p.r_s_p, 1.0, 3).unwrap().dim(), 4);
    }
}
