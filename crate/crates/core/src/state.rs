//! Composite cell state.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::two_phase::Phase;
use crate::params::Direction;

/// Regime of the positive particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    OnePhaseAlpha,
    OnePhaseBeta,
    TwoPhase { core: Phase },
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::OnePhaseAlpha => "one_phase_alpha",
            Regime::OnePhaseBeta => "one_phase_beta",
            Regime::TwoPhase { core: Phase::Alpha } => "two_phase_alpha_core",
            Regime::TwoPhase { core: Phase::Beta } => "two_phase_beta_core",
        }
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, Regime::TwoPhase { .. })
    }

    /// State dimension of the positive particle in this regime.
    pub fn dim(self, n_r: usize) -> usize {
        if self.is_two_phase() {
            n_r + 1
        } else {
            n_r
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "one_phase_alpha" => Regime::OnePhaseAlpha,
            "one_phase_beta" => Regime::OnePhaseBeta,
            "two_phase_alpha_core" => Regime::TwoPhase { core: Phase::Alpha },
            "two_phase_beta_core" => Regime::TwoPhase { core: Phase::Beta },
            other => return Err(ModelError::Config(format!("unknown regime '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositiveState {
    OnePhase {
        phase: Phase,
        c: Vec<f64>,
    },
    TwoPhase {
        core: Phase,
        /// Concentration of the (uniform) core.
        c_core: f64,
        shell: Vec<f64>,
        r_p: f64,
    },
}

impl PositiveState {
    pub fn regime(&self) -> Regime {
        match self {
            PositiveState::OnePhase { phase: Phase::Alpha, .. } => Regime::OnePhaseAlpha,
            PositiveState::OnePhase { phase: Phase::Beta, .. } => Regime::OnePhaseBeta,
            PositiveState::TwoPhase { core, .. } => Regime::TwoPhase { core: *core },
        }
    }

    /// Continuous state vector: averages, followed by `r_p` in two-phase.
    pub fn vector(&self) -> Vec<f64> {
        match self {
            PositiveState::OnePhase { c, .. } => c.clone(),
            PositiveState::TwoPhase { shell, r_p, .. } => {
                let mut v = shell.clone();
                v.push(*r_p);
                v
            }
        }
    }

    /// Same regime, new continuous part.
    pub fn with_vector(&self, x: &[f64]) -> PositiveState {
        match self {
            PositiveState::OnePhase { phase, .. } => PositiveState::OnePhase { phase: *phase, c: x.to_vec() },
            PositiveState::TwoPhase { core, c_core, shell, .. } => PositiveState::TwoPhase {
                core: *core,
                c_core: *c_core,
                shell: x[..shell.len()].to_vec(),
                r_p: x[shell.len()],
            },
        }
    }

    pub fn r_p(&self) -> f64 {
        match self {
            PositiveState::OnePhase { .. } => 0.0,
            PositiveState::TwoPhase { r_p, .. } => *r_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub negative: Vec<f64>,
    pub positive: PositiveState,
    pub electrolyte: Vec<f64>,
    /// Direction of the most recent nonzero current. Selects the stoichiometric
    /// window and the positive OCP branch while at rest.
    pub direction: Direction,
}

impl FullState {
    pub fn regime(&self) -> Regime {
        self.positive.regime()
    }

    pub fn is_finite(&self) -> bool {
        self.negative.iter().chain(&self.electrolyte).chain(&self.positive.vector()).all(|v| v.is_finite())
            && match &self.positive {
                PositiveState::TwoPhase { c_core, .. } => c_core.is_finite(),
                _ => true,
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_labels_round_trip() {
        for r in [
            Regime::OnePhaseAlpha,
            Regime::OnePhaseBeta,
            Regime::TwoPhase { core: Phase::Alpha },
            Regime::TwoPhase { core: Phase::Beta },
        ] {
            assert_eq!(r.label().parse::<Regime>().unwrap(), r);
        }
        assert!("x".parse::<Regime>().is_err());
        assert_eq!(Regime::TwoPhase { core: Phase::Beta }.dim(3), 4);
    }

    #[test]
    fn vector_round_trip() {
        let s = PositiveState::TwoPhase { core: Phase::Alpha, c_core: 1.0, shell: vec![2.0, 3.0], r_p: 4e-9 };
        let v = s.vector();
        assert_eq!(v, vec![2.0, 3.0, 4e-9]);
        assert_eq!(s.with_vector(&v), s);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PositiveState>(&json).unwrap(), s);
    }
}
