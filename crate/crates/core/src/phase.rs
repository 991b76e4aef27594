//! Transitions between one-phase and two-phase positive particles.

use serde::{Deserialize, Serialize};

use crate::cell::CellModel;
use crate::error::{ModelError, Result};
use crate::model::fdm::{fdm_shell_weights, one_phase_nodes, trapezoid_weights};
use crate::model::fixed_grid_volumes;
use crate::model::two_phase::Phase;
use crate::model::Scheme;
use crate::params::Direction;
use crate::state::{FullState, PositiveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EnterTwoPhase,
    ExitTwoPhase,
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Positive-electrode lithium [mol] before and after.
    pub pre_mass: f64,
    pub post_mass: f64,
    pub r_p_before: f64,
    pub r_p_after: f64,
}

/// Signed distance to the next transition of the positive particle under
/// `current`: non-negative once the transition is due.
pub fn event_indicator(model: &CellModel, pos: &PositiveState, current: f64) -> Option<(EventKind, f64)> {
    let p = &model.params;
    let x = pos.vector();
    match pos {
        PositiveState::OnePhase { phase, .. } => {
            let surf = model.positive_surface(pos, &x, &current);
            match (phase, Direction::from_current(current)) {
                (Phase::Alpha, Some(Direction::Discharge)) => {
                    let edge = Phase::Alpha.edge(p, Direction::Discharge);
                    Some((EventKind::EnterTwoPhase, (surf - edge) / p.c_s_max_p))
                }
                (Phase::Beta, Some(Direction::Charge)) => {
                    let edge = Phase::Beta.edge(p, Direction::Charge);
                    Some((EventKind::EnterTwoPhase, (edge - surf) / p.c_s_max_p))
                }
                _ => None,
            }
        }
        PositiveState::TwoPhase { r_p, .. } => {
            let core_gone = model.r_eps - r_p / p.r_s_p;
            let shell_gone = 0.5 * model.delta_init - (1.0 - r_p / p.r_s_p);
            Some((EventKind::ExitTwoPhase, core_gone.max(shell_gone)))
        }
    }
}

/// Transition due now, if any.
pub fn detect_transition(model: &CellModel, state: &FullState, current: f64) -> Option<EventKind> {
    if state.regime().is_two_phase() {
        if let Some(d) = Direction::from_current(current) {
            if d != state.direction {
                return Some(EventKind::SignFlip);
            }
        }
    }
    match event_indicator(model, &state.positive, current) {
        Some((kind, v)) if v >= 0.0 => Some(kind),
        _ => None,
    }
}

fn positive_moles(model: &CellModel, pos: &PositiveState, dir: Direction) -> f64 {
    let x = pos.vector();
    model.positive_bulk(pos, &x, dir)
}

fn check_mass(before: f64, after: f64, tol: f64) -> Result<()> {
    let rel = (after - before).abs() / before.abs().max(f64::MIN_POSITIVE);
    if rel > tol {
        return Err(ModelError::Transition { rel, tol });
    }
    Ok(())
}

/// Seed a thin shell at the interface value the current imposes (the edge of
/// the phase being formed) and give the core whatever keeps the particle's
/// lithium unchanged.
pub fn enter_two_phase(
    model: &CellModel,
    pos: &PositiveState,
    dir: Direction,
    mass_tol: f64,
) -> Result<PositiveState> {
    let PositiveState::OnePhase { phase, .. } = pos else {
        return Err(ModelError::PhaseDomain("enter_two_phase needs a one-phase particle".into()));
    };
    let p = &model.params;
    let n = model.n_r();
    let radius = p.r_s_p;
    let before = positive_moles(model, pos, dir);
    let core = *phase;
    let shell_value = core.other().edge(p, dir);
    let r_p = radius * (1.0 - model.delta_init);
    let total = before * radius.powi(3) / 3.0;
    let core_volume = r_p.powi(3) / 3.0;
    let shell_content = match model.scheme() {
        Scheme::Fvm => shell_value * (radius.powi(3) - r_p.powi(3)) / 3.0,
        Scheme::Fdm => {
            let (w, w0) = fdm_shell_weights(radius, r_p, n);
            shell_value * (w.iter().sum::<f64>() + w0)
        }
    };
    let c_core = (total - shell_content) / core_volume;
    if !(c_core > 0.0 && c_core < p.c_s_max_p) {
        return Err(ModelError::PhaseDomain(format!("core concentration {c_core} out of range at entry")));
    }
    let next = PositiveState::TwoPhase { core, c_core, shell: vec![shell_value; n], r_p };
    check_mass(before, positive_moles(model, &next, dir), mass_tol)?;
    Ok(next)
}

/// Length of the overlap of `[a0, a1]` and `[b0, b1]` in `r^3 / 3` measure.
fn overlap_volume(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if hi > lo {
        (hi.powi(3) - lo.powi(3)) / 3.0
    } else {
        0.0
    }
}

/// Collapse a two-phase particle onto the fixed one-phase grid. FVM:
/// conservative overlap-volume remap of core and shell volumes. FDM: linear
/// interpolation of the nodal profile followed by a uniform correction that
/// restores the lithium content.
pub fn exit_two_phase(model: &CellModel, pos: &PositiveState, dir: Direction, mass_tol: f64) -> Result<PositiveState> {
    let PositiveState::TwoPhase { core, c_core, shell, r_p } = pos else {
        return Err(ModelError::PhaseDomain("exit_two_phase needs a two-phase particle".into()));
    };
    let p = &model.params;
    let n = model.n_r();
    let radius = p.r_s_p;
    let r_p = r_p.clamp(0.0, radius);
    let before = positive_moles(model, pos, dir);
    // remaining phase: the shell's when the core is consumed, else the core's
    let phase = if r_p / radius < 0.5 { core.other() } else { *core };
    let mut c = match model.scheme() {
        Scheme::Fvm => {
            let dr_shell = (radius - r_p) / n as f64;
            let dr = radius / n as f64;
            let vols = fixed_grid_volumes(radius, n);
            (0..n)
                .map(|i| {
                    let (t0, t1) = (i as f64 * dr, (i + 1) as f64 * dr);
                    let mut acc = overlap_volume(0.0, r_p, t0, t1) * c_core;
                    for (k, ck) in shell.iter().enumerate() {
                        let (s0, s1) = (r_p + k as f64 * dr_shell, r_p + (k + 1) as f64 * dr_shell);
                        acc += overlap_volume(s0, s1, t0, t1) * ck;
                    }
                    acc / vols[i]
                })
                .collect::<Vec<f64>>()
        }
        Scheme::Fdm => {
            let dr_shell = (radius - r_p) / n as f64;
            let edge = core.other().edge(p, dir);
            let mut xs = vec![r_p];
            let mut ys = vec![edge];
            for (k, ck) in shell.iter().enumerate() {
                xs.push(r_p + (k + 1) as f64 * dr_shell);
                ys.push(*ck);
            }
            let nodes = one_phase_nodes(radius, n);
            let mut c: Vec<f64> = nodes
                .iter()
                .map(|&r| {
                    if r <= r_p {
                        *c_core
                    } else {
                        let k = xs.partition_point(|&x| x < r).clamp(1, xs.len() - 1);
                        let t = (r - xs[k - 1]) / (xs[k] - xs[k - 1]);
                        ys[k - 1] + t * (ys[k] - ys[k - 1])
                    }
                })
                .collect();
            let w = trapezoid_weights(&nodes);
            let mean = c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
            let fix = before - mean;
            c.iter_mut().for_each(|v| *v += fix);
            c
        }
    };
    if model.scheme() == Scheme::Fvm && pos.r_p() < 0.0 {
        // the front overshot the centre within the event tolerance: the
        // virtual part below r = 0 goes back into the profile
        let vols = fixed_grid_volumes(radius, n);
        let mean = c.iter().zip(&vols).map(|(a, b)| a * b).sum::<f64>() / (radius.powi(3) / 3.0);
        let fix = before - mean;
        c.iter_mut().for_each(|v| *v += fix);
    }
    let next = PositiveState::OnePhase { phase, c };
    check_mass(before, positive_moles(model, &next, dir), mass_tol)?;
    Ok(next)
}

/// Reversal of the current inside the plateau: the state is kept, only the
/// direction (window, interface value and OCP branch) changes.
pub fn apply_sign_flip(state: &FullState, new_current: f64) -> FullState {
    let mut next = state.clone();
    if let Some(d) = Direction::from_current(new_current) {
        next.direction = d;
    }
    next
}
