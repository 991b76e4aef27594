//! The assembled cell: parameters, discretization, OCP tables and the
//! per-subsystem right-hand sides and reconstructions the simulator and the
//! observability analysis share.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::electrolyte::{build_electrolyte_system, ElectrolyteGrid};
use crate::model::fdm::{
    build_one_phase_fdm_system, fdm_shell_rhs, fdm_shell_weights, one_phase_nodes, trapezoid_weights,
};
use crate::model::reconstruct::{bulk_one_phase, bulk_two_phase, surface_concentration, surface_concentration_raw};
use crate::model::solid::build_one_phase_solid_system;
use crate::model::two_phase::{interface_for_core, shell_rhs, shell_volumes, Phase, ShellContext};
use crate::model::{AffineSystem, DiscretizationConfig, Scheme};
use crate::ocp::OcpSet;
use crate::output::{compose, electrolyte_potential_drop, exchange_current_density, overpotential, OutputInputs, OutputSnapshot};
use crate::params::{CellParameters, Direction, Electrode};
use crate::scalar::Scalar;
use crate::state::{FullState, PositiveState};

/// Stoichiometry used for the positive OCP while two phases coexist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlateauLookup {
    /// Particle-average stoichiometry. The output then depends on the
    /// particle only through its bulk, which makes the two-phase state
    /// unobservable beyond one direction.
    Bulk,
    /// Surface stoichiometry of the outer shell volume.
    #[default]
    Surface,
}

/// Moles of cyclable lithium per subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lithium {
    pub negative: f64,
    pub positive: f64,
    pub electrolyte: f64,
}

#[derive(Debug, Clone)]
pub struct CellModel {
    pub params: CellParameters,
    pub disc: DiscretizationConfig,
    pub ocp: OcpSet,
    pub plateau_lookup: PlateauLookup,
    /// Relative shell thickness seeded at two-phase entry.
    pub delta_init: f64,
    /// Core radius (relative) below which the core is considered consumed.
    pub r_eps: f64,
    neg_sys: AffineSystem,
    pos_sys: AffineSystem,
    elec_sys: AffineSystem,
    grid: ElectrolyteGrid,
}

impl CellModel {
    pub fn new(params: CellParameters, disc: DiscretizationConfig, ocp: OcpSet) -> Result<Self> {
        params.validate()?;
        disc.validate()?;
        let (neg_sys, pos_sys) = match disc.scheme {
            Scheme::Fvm => (
                build_one_phase_solid_system(&params, Electrode::Negative, disc.n_r)?,
                build_one_phase_solid_system(&params, Electrode::Positive, disc.n_r)?,
            ),
            Scheme::Fdm => (
                build_one_phase_fdm_system(&params, Electrode::Negative, disc.n_r)?,
                build_one_phase_fdm_system(&params, Electrode::Positive, disc.n_r)?,
            ),
        };
        let elec_sys = build_electrolyte_system(&params, &disc)?;
        let grid = ElectrolyteGrid::new(&params, &disc)?;
        Ok(CellModel {
            params,
            disc,
            ocp,
            plateau_lookup: PlateauLookup::default(),
            delta_init: 1e-3,
            r_eps: 1e-3,
            neg_sys,
            pos_sys,
            elec_sys,
            grid,
        })
    }

    /// Reference setup: reference parameters and synthetic OCP tables.
    pub fn reference(disc: DiscretizationConfig) -> Result<Self> {
        let params = CellParameters::lfp_reference();
        let ocp = OcpSet::synthetic(&params)?;
        CellModel::new(params, disc, ocp)
    }

    pub fn n_r(&self) -> usize {
        self.disc.n_r
    }

    pub fn scheme(&self) -> Scheme {
        self.disc.scheme
    }

    pub fn negative_system(&self) -> &AffineSystem {
        &self.neg_sys
    }

    pub fn positive_one_phase_system(&self) -> &AffineSystem {
        &self.pos_sys
    }

    pub fn electrolyte_system(&self) -> &AffineSystem {
        &self.elec_sys
    }

    pub fn electrolyte_grid(&self) -> &ElectrolyteGrid {
        &self.grid
    }

    pub fn shell_context(&self, current: f64, core: Phase, c_core: f64) -> ShellContext {
        let interface = interface_for_core(&self.params, current, core, c_core);
        ShellContext::new(&self.params, self.disc.n_r, interface, true)
    }

    /// Positive-particle right-hand side for the continuous part `x` of a
    /// state in the regime of `pos`.
    pub fn positive_rhs<T: Scalar>(&self, pos: &PositiveState, x: &[T], current: &T) -> Vec<T> {
        match pos {
            PositiveState::OnePhase { .. } => self.pos_sys.apply(x, current),
            PositiveState::TwoPhase { core, c_core, .. } => {
                let n = self.disc.n_r;
                let ctx = self.shell_context(current.value(), *core, *c_core);
                let (mut dc, dr) = match self.disc.scheme {
                    Scheme::Fvm => shell_rhs(&x[..n], &x[n], current, &ctx),
                    Scheme::Fdm => fdm_shell_rhs(&x[..n], &x[n], current, &ctx),
                };
                dc.push(dr);
                dc
            }
        }
    }

    /// Unclamped positive surface concentration.
    pub fn positive_surface<T: Scalar>(&self, pos: &PositiveState, x: &[T], current: &T) -> T {
        let n = self.disc.n_r;
        let last = x[n - 1].clone();
        if self.disc.scheme == Scheme::Fdm {
            return last;
        }
        let width = match pos {
            PositiveState::OnePhase { .. } => last.lift(self.params.r_s_p / n as f64),
            PositiveState::TwoPhase { .. } => (last.lift(self.params.r_s_p) - x[n].clone()) / n as f64,
        };
        surface_concentration_raw(&last, &width, current, &self.params, Electrode::Positive)
    }

    pub fn positive_bulk<T: Scalar>(&self, pos: &PositiveState, x: &[T], dir: Direction) -> T {
        let n = self.disc.n_r;
        let radius = self.params.r_s_p;
        match (pos, self.disc.scheme) {
            (PositiveState::OnePhase { .. }, Scheme::Fvm) => bulk_one_phase(x, radius),
            (PositiveState::TwoPhase { c_core, .. }, Scheme::Fvm) => bulk_two_phase(&x[..n], &x[n], *c_core, radius),
            (PositiveState::OnePhase { .. }, Scheme::Fdm) => weighted_mean_fixed(x, &fdm_fixed_weights(radius, n)),
            (PositiveState::TwoPhase { core, c_core, .. }, Scheme::Fdm) => {
                // node weights depend on r_p only through the grid; evaluated on values
                let r_p = x[n].value();
                let (w, w0) = fdm_shell_weights(radius, r_p, n);
                let edge = core.other().edge(&self.params, dir);
                let mut acc = x[0].lift(r_p.powi(3) / 3.0 * c_core + w0 * edge);
                for (xi, wi) in x[..n].iter().zip(&w) {
                    acc = acc + xi.clone() * *wi;
                }
                acc / (radius.powi(3) / 3.0)
            }
        }
    }

    pub fn negative_surface(&self, c: &[f64], current: f64) -> f64 {
        let n = self.disc.n_r;
        match self.disc.scheme {
            Scheme::Fvm => {
                surface_concentration(c[n - 1], self.params.r_s_n / n as f64, current, &self.params, Electrode::Negative)
            }
            Scheme::Fdm => c[n - 1],
        }
    }

    pub fn negative_bulk(&self, c: &[f64]) -> f64 {
        match self.disc.scheme {
            Scheme::Fvm => bulk_one_phase(c, self.params.r_s_n),
            Scheme::Fdm => weighted_mean_fixed(c, &fdm_fixed_weights(self.params.r_s_n, c.len())),
        }
    }

    /// Positive half-cell potential `U_p + eta_p`.
    pub fn positive_half_cell<T: Scalar>(
        &self,
        pos: &PositiveState,
        x: &[T],
        current: &T,
        c_e_pos: f64,
        dir: Direction,
    ) -> Result<T> {
        let cmax = self.params.c_s_max_p;
        let table = self.ocp.table(Electrode::Positive, dir);
        let surface = self.positive_surface(pos, x, current);
        let (theta, c_eff) = match pos {
            PositiveState::OnePhase { .. } => (surface.clone() / cmax, surface),
            PositiveState::TwoPhase { .. } => {
                let bulk = self.positive_bulk(pos, x, dir);
                match self.plateau_lookup {
                    PlateauLookup::Bulk => (bulk.clone() / cmax, bulk),
                    PlateauLookup::Surface => (surface / cmax, bulk),
                }
            }
        };
        let theta = clamp_generic(theta, 0.0, 1.0);
        let u = table.eval_generic(&theta)?;
        let i0 = exchange_current_density(&self.params, Electrode::Positive, &c_eff, c_e_pos)?;
        Ok(u + overpotential(&self.params, Electrode::Positive, current, &i0)?)
    }

    pub fn output(&self, state: &FullState, current: f64) -> Result<OutputSnapshot> {
        let p = &self.params;
        let dir = Direction::from_current(current).unwrap_or(state.direction);
        let x = state.positive.vector();
        let c_p_surf = clamp_to(self.positive_surface(&state.positive, &x, &current), p.c_s_max_p);
        let p_bulk = self.positive_bulk(&state.positive, &x, dir);
        let (theta_p, c_p_eff) = match (&state.positive, self.plateau_lookup) {
            (PositiveState::OnePhase { .. }, _) => (c_p_surf / p.c_s_max_p, c_p_surf),
            (PositiveState::TwoPhase { .. }, PlateauLookup::Bulk) => (p_bulk / p.c_s_max_p, p_bulk),
            (PositiveState::TwoPhase { .. }, PlateauLookup::Surface) => (c_p_surf / p.c_s_max_p, p_bulk),
        };
        let c_n_surf = self.negative_surface(&state.negative, current);
        let theta_n = c_n_surf / p.c_s_max_n;
        let u_p = self.ocp.table(Electrode::Positive, dir).eval(theta_p.clamp(0.0, 1.0))?;
        let u_n = self.ocp.table(Electrode::Negative, dir).eval(theta_n.clamp(0.0, 1.0))?;
        let c_e = &state.electrolyte;
        let inputs = OutputInputs {
            current,
            u_p,
            u_n,
            c_p_eff,
            c_n_eff: c_n_surf,
            c_e_neg: ElectrolyteGrid::region_mean(c_e, self.grid.negative()),
            c_e_pos: ElectrolyteGrid::region_mean(c_e, self.grid.positive()),
            dphi_e: electrolyte_potential_drop(c_e, p)?,
            theta_p_bulk: p_bulk / p.c_s_max_p,
            theta_n_bulk: self.negative_bulk(&state.negative) / p.c_s_max_n,
            direction: dir,
        };
        compose(p, &inputs)
    }

    pub fn lithium(&self, state: &FullState) -> Lithium {
        let p = &self.params;
        let x = state.positive.vector();
        let pos_bulk = self.positive_bulk(&state.positive, &x, state.direction);
        Lithium {
            negative: p.eps_n * p.a_cell * p.l_n * self.negative_bulk(&state.negative),
            positive: p.eps_p * p.a_cell * p.l_p * pos_bulk,
            electrolyte: self.grid.total_lithium(&state.electrolyte, p.a_cell),
        }
    }

    /// Uniform state at a state of charge in the window of `dir`. Inside the
    /// plateau the positive particle starts two-phase with the core of the
    /// phase that `dir` consumes.
    pub fn initial_state(&self, soc: f64, dir: Direction) -> Result<FullState> {
        let p = &self.params;
        let w = p.windows.get(dir);
        let theta_p = w.theta_p_0 - soc * (w.theta_p_0 - w.theta_p_100);
        let theta_n = w.theta_n_0 + soc * (w.theta_n_100 - w.theta_n_0);
        if !(0.0 < theta_p && theta_p < 1.0 && 0.0 < theta_n && theta_n < 1.0) {
            return Err(ModelError::Config(format!("initial SOC {soc} maps outside the stoichiometric range")));
        }
        let n = self.disc.n_r;
        let c_p = theta_p * p.c_s_max_p;
        let positive = if theta_p <= w.theta_p_alpha {
            PositiveState::OnePhase { phase: Phase::Alpha, c: vec![c_p; n] }
        } else if theta_p >= w.theta_p_beta {
            PositiveState::OnePhase { phase: Phase::Beta, c: vec![c_p; n] }
        } else {
            let core = match dir {
                Direction::Discharge => Phase::Alpha,
                Direction::Charge => Phase::Beta,
            };
            let (c_core, c_shell) = (core.edge(p, dir), core.other().edge(p, dir));
            let frac = (c_shell - c_p) / (c_shell - c_core);
            let r_p = p.r_s_p * frac.cbrt();
            let thin = p.r_s_p * (1.0 - self.delta_init);
            if r_p >= thin {
                PositiveState::OnePhase { phase: core, c: vec![c_p; n] }
            } else if r_p <= self.r_eps * p.r_s_p {
                PositiveState::OnePhase { phase: core.other(), c: vec![c_p; n] }
            } else {
                let mut pos = PositiveState::TwoPhase { core, c_core, shell: vec![c_shell; n], r_p };
                // make the discrete bulk hit the target exactly
                let x = pos.vector();
                let bulk = self.positive_bulk(&pos, &x, dir);
                let vshell = (p.r_s_p.powi(3) - r_p.powi(3)) / 3.0;
                let fix = (c_p - bulk) * p.r_s_p.powi(3) / 3.0 / vshell;
                if let PositiveState::TwoPhase { shell, .. } = &mut pos {
                    shell.iter_mut().for_each(|v| *v += fix);
                }
                pos
            }
        };
        Ok(FullState {
            negative: vec![theta_n * p.c_s_max_n; n],
            positive,
            electrolyte: vec![p.c_e0; self.disc.n_e],
            direction: dir,
        })
    }

    /// Volumes [m^3/(4 pi)] of the shell of a two-phase state (FVM grid).
    pub fn shell_volumes(&self, r_p: f64) -> Vec<f64> {
        shell_volumes(self.params.r_s_p, &r_p, self.disc.n_r)
    }
}

fn fdm_fixed_weights(radius: f64, n: usize) -> Vec<f64> {
    trapezoid_weights(&one_phase_nodes(radius, n))
}

fn weighted_mean_fixed<T: Scalar>(x: &[T], w: &[f64]) -> T {
    let total: f64 = w.iter().sum();
    let mut acc = x[0].lift(0.0);
    for (xi, wi) in x.iter().zip(w) {
        acc = acc + xi.clone() * *wi;
    }
    acc / total
}

fn clamp_to(v: f64, max: f64) -> f64 {
    v.clamp(0.0, max)
}

/// Clamp on the value, keeping derivatives only inside the interval.
fn clamp_generic<T: Scalar>(v: T, lo: f64, hi: f64) -> T {
    let x = v.value();
    if x < lo {
        v.lift(lo)
    } else if x > hi {
        v.lift(hi)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_state_voltage_is_ocv_difference() {
        let m = CellModel::reference(DiscretizationConfig::default()).unwrap();
        for (soc, dir) in [(1.0, Direction::Discharge), (0.0, Direction::Charge), (0.5, Direction::Discharge)] {
            let s = m.initial_state(soc, dir).unwrap();
            let out = m.output(&s, 0.0).unwrap();
            assert_eq!(out.eta_p, 0.0);
            assert_eq!(out.eta_n, 0.0);
            assert_eq!(out.dphi_e, 0.0);
            assert_relative_eq!(out.v_cell, out.u_p - out.u_n, max_relative = 1e-15);
            assert_relative_eq!(out.soc_p, soc, epsilon = 1e-12);
            assert_relative_eq!(out.soc_n, soc, epsilon = 1e-12);
        }
    }

    #[test]
    fn mid_plateau_start_is_two_phase_with_exact_bulk() {
        let m = CellModel::reference(DiscretizationConfig::default()).unwrap();
        let s = m.initial_state(0.5, Direction::Discharge).unwrap();
        assert!(s.regime().is_two_phase());
        let w = m.params.windows.discharge;
        let target = (w.theta_p_0 - 0.5 * (w.theta_p_0 - w.theta_p_100)) * m.params.c_s_max_p;
        let x = s.positive.vector();
        assert_relative_eq!(m.positive_bulk(&s.positive, &x, s.direction), target, max_relative = 1e-13);
    }

    #[test]
    fn discharge_lowers_voltage() {
        let m = CellModel::reference(DiscretizationConfig::default()).unwrap();
        let s = m.initial_state(0.8, Direction::Discharge).unwrap();
        let rest = m.output(&s, 0.0).unwrap().v_cell;
        let i = m.params.c_rate_current(1.0);
        let out = m.output(&s, i).unwrap();
        assert!(out.v_cell < rest);
        assert_relative_eq!(out.v_cell, out.recompose(), max_relative = 1e-15);
    }
}
