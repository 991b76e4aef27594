//! Cell parameters, stoichiometric windows and the per-C-rate parameter sets.
//!
//! Sign convention used everywhere in this crate: a positive current is a
//! discharge, a negative current is a charge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Faraday constant [C/mol].
pub const FARADAY: f64 = 96_485.332_12;
/// Universal gas constant [J/(mol K)].
pub const GAS_CONSTANT: f64 = 8.314_462_618;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Negative,
    Positive,
}

impl Electrode {
    pub fn name(self) -> &'static str {
        match self {
            Electrode::Negative => "negative",
            Electrode::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    /// Direction implied by a current, `None` at rest.
    pub fn from_current(current: f64) -> Option<Direction> {
        if current > 0.0 {
            Some(Direction::Discharge)
        } else if current < 0.0 {
            Some(Direction::Charge)
        } else {
            None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Charge => "ch",
            Direction::Discharge => "dis",
        }
    }
}

/// Stoichiometric window of one current direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoichWindow {
    pub theta_p_100: f64,
    pub theta_p_0: f64,
    pub theta_n_100: f64,
    pub theta_n_0: f64,
    pub theta_p_alpha: f64,
    pub theta_p_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub charge: StoichWindow,
    pub discharge: StoichWindow,
}

impl Windows {
    pub fn get(&self, dir: Direction) -> &StoichWindow {
        match dir {
            Direction::Charge => &self.charge,
            Direction::Discharge => &self.discharge,
        }
    }

    pub fn get_mut(&mut self, dir: Direction) -> &mut StoichWindow {
        match dir {
            Direction::Charge => &mut self.charge,
            Direction::Discharge => &mut self.discharge,
        }
    }
}

/// All physical, geometric and transport constants of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParameters {
    /// Particle radii [m].
    pub r_s_n: f64,
    pub r_s_p: f64,
    /// Solid diffusivities [m^2/s].
    pub d_s_n: f64,
    pub d_s_p: f64,
    /// Active material volume fractions [-].
    pub eps_n: f64,
    pub eps_p: f64,
    /// Reaction rate constants [m^2.5/(mol^0.5 s)].
    pub k_n: f64,
    pub k_p: f64,
    /// Electrode plate area [m^2].
    pub a_cell: f64,
    /// Lumped ohmic resistance [Ohm].
    pub r_l: f64,
    /// Layer thicknesses [m].
    pub l_n: f64,
    pub l_s: f64,
    pub l_p: f64,
    /// Maximum solid concentrations [mol/m^3].
    pub c_s_max_n: f64,
    pub c_s_max_p: f64,
    /// Initial electrolyte concentration [mol/m^3].
    pub c_e0: f64,
    /// Electrolyte diffusivity [m^2/s].
    pub d_e: f64,
    /// Electrolyte porosities [-].
    pub eps_e_n: f64,
    pub eps_e_s: f64,
    pub eps_e_p: f64,
    pub t_plus: f64,
    pub brugg: f64,
    /// Lumped coefficient of the electrolyte potential drop [-].
    pub nu: f64,
    /// Temperature [K].
    pub temperature: f64,
    pub windows: Windows,
}

/// The rate-dependent subset (diffusivities and rate constants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParameters {
    pub d_s_p: f64,
    pub d_s_n: f64,
    pub k_p: f64,
    pub k_n: f64,
}

impl CellParameters {
    /// Identified C/4 parameters, completed with literature-typical values for the
    /// quantities the identification does not cover (layer thicknesses, maximum
    /// concentrations, electrolyte transport, temperature). Those completions are
    /// not identified values.
    pub fn lfp_reference() -> Self {
        CellParameters {
            r_s_n: 8.10e-7,
            r_s_p: 1.67e-8,
            d_s_n: 1.28e-15,
            d_s_p: 4.05e-18,
            eps_n: 0.655,
            eps_p: 0.681,
            k_n: 2.02e-12,
            k_p: 9.50e-13,
            a_cell: 2.125,
            r_l: 1.54e-3,
            // literature-typical completions
            l_n: 3.2e-5,
            l_s: 2.5e-5,
            l_p: 4.0e-5,
            c_s_max_n: 30_555.0,
            c_s_max_p: 22_806.0,
            c_e0: 1000.0,
            d_e: 3.2e-10,
            eps_e_n: 0.3,
            eps_e_s: 0.45,
            eps_e_p: 0.3,
            t_plus: 0.38,
            brugg: 1.5,
            nu: 0.62,
            temperature: 298.15,
            windows: Windows {
                charge: StoichWindow {
                    theta_p_100: 0.065,
                    theta_p_0: 0.910,
                    theta_n_100: 0.832,
                    theta_n_0: 0.011,
                    theta_p_alpha: 0.220,
                    theta_p_beta: 0.817,
                },
                discharge: StoichWindow {
                    theta_p_100: 0.066,
                    theta_p_0: 0.925,
                    theta_n_100: 0.831,
                    theta_n_0: 0.009,
                    theta_p_alpha: 0.196,
                    theta_p_beta: 0.804,
                },
            },
        }
    }

    pub fn with_rates(&self, rates: &RateParameters) -> Self {
        let mut p = self.clone();
        p.d_s_p = rates.d_s_p;
        p.d_s_n = rates.d_s_n;
        p.k_p = rates.k_p;
        p.k_n = rates.k_n;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_s_n", self.r_s_n),
            ("r_s_p", self.r_s_p),
            ("d_s_n", self.d_s_n),
            ("d_s_p", self.d_s_p),
            ("k_n", self.k_n),
            ("k_p", self.k_p),
            ("a_cell", self.a_cell),
            ("l_n", self.l_n),
            ("l_s", self.l_s),
            ("l_p", self.l_p),
            ("c_s_max_n", self.c_s_max_n),
            ("c_s_max_p", self.c_s_max_p),
            ("c_e0", self.c_e0),
            ("d_e", self.d_e),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Parameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.r_l.is_finite() && self.r_l >= 0.0) {
            return Err(ModelError::Parameter(format!("r_l must be >= 0, got {}", self.r_l)));
        }
        if !(self.brugg.is_finite() && self.nu.is_finite()) {
            return Err(ModelError::Parameter("brugg and nu must be finite".into()));
        }
        let fractions = [
            ("eps_n", self.eps_n),
            ("eps_p", self.eps_p),
            ("eps_e_n", self.eps_e_n),
            ("eps_e_s", self.eps_e_s),
            ("eps_e_p", self.eps_e_p),
            ("t_plus", self.t_plus),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v < 1.0) {
                return Err(ModelError::Parameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for dir in [Direction::Charge, Direction::Discharge] {
            let w = self.windows.get(dir);
            let d = dir.label();
            if !(0.0 < w.theta_p_alpha && w.theta_p_alpha < w.theta_p_beta && w.theta_p_beta < 1.0) {
                return Err(ModelError::Parameter(format!(
                    "{d}: need 0 < theta_p_alpha < theta_p_beta < 1"
                )));
            }
            if !(w.theta_p_100 < w.theta_p_alpha && w.theta_p_beta < w.theta_p_0) {
                return Err(ModelError::Parameter(format!(
                    "{d}: two-phase plateau must lie inside the positive window"
                )));
            }
            if !(0.0 <= w.theta_n_0 && w.theta_n_0 < w.theta_n_100 && w.theta_n_100 <= 1.0) {
                return Err(ModelError::Parameter(format!(
                    "{d}: need 0 <= theta_n_0 < theta_n_100 <= 1"
                )));
            }
            if !(w.theta_p_100 >= 0.0 && w.theta_p_0 <= 1.0) {
                return Err(ModelError::Parameter(format!("{d}: positive window outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn radius(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.r_s_n,
            Electrode::Positive => self.r_s_p,
        }
    }

    pub fn diffusivity(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.d_s_n,
            Electrode::Positive => self.d_s_p,
        }
    }

    pub fn thickness(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.l_n,
            Electrode::Positive => self.l_p,
        }
    }

    pub fn c_max(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.c_s_max_n,
            Electrode::Positive => self.c_s_max_p,
        }
    }

    pub fn rate_constant(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.k_n,
            Electrode::Positive => self.k_p,
        }
    }

    /// Specific interfacial area a_s = 3 eps / R [1/m].
    pub fn specific_area(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => 3.0 * self.eps_n / self.r_s_n,
            Electrode::Positive => 3.0 * self.eps_p / self.r_s_p,
        }
    }

    /// Molar flux into the particle surface per ampere [mol/(m^2 s A)].
    /// Lithium enters the positive particle on discharge and the negative on charge.
    pub fn surface_flux_per_amp(&self, e: Electrode) -> f64 {
        let mag = 1.0
            / (FARADAY * self.a_cell * self.thickness(e) * self.specific_area(e));
        match e {
            Electrode::Negative => -mag,
            Electrode::Positive => mag,
        }
    }

    /// Nominal capacity [A h] of the positive charge window.
    pub fn nominal_capacity_ah(&self) -> f64 {
        let w = &self.windows.charge;
        FARADAY * self.a_cell * self.l_p * self.eps_p * self.c_s_max_p * (w.theta_p_0 - w.theta_p_100)
            / 3600.0
    }

    /// Current [A] of a given C-rate.
    pub fn c_rate_current(&self, c_rate: f64) -> f64 {
        self.nominal_capacity_ah() * c_rate
    }

    pub fn thermal_voltage(&self) -> f64 {
        GAS_CONSTANT * self.temperature / FARADAY
    }

    /// Names accepted by [`CellParameters::get`] and [`CellParameters::set`].
    pub const FIELD_NAMES: &'static [&'static str] = &[
        "theta_p_100_ch",
        "theta_p_0_ch",
        "theta_n_100_ch",
        "theta_n_0_ch",
        "theta_p_alpha_ch",
        "theta_p_beta_ch",
        "theta_p_100_dis",
        "theta_p_0_dis",
        "theta_n_100_dis",
        "theta_n_0_dis",
        "theta_p_alpha_dis",
        "theta_p_beta_dis",
        "r_s_p",
        "r_s_n",
        "d_s_p",
        "d_s_n",
        "eps_p",
        "eps_n",
        "k_p",
        "k_n",
        "a_cell",
        "r_l",
        "l_n",
        "l_s",
        "l_p",
        "c_s_max_n",
        "c_s_max_p",
        "c_e0",
        "d_e",
        "eps_e_n",
        "eps_e_s",
        "eps_e_p",
        "t_plus",
        "brugg",
        "nu",
        "temperature",
    ];

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        let (window_field, dir) = if let Some(stem) = name.strip_suffix("_ch") {
            (stem, Some(Direction::Charge))
        } else if let Some(stem) = name.strip_suffix("_dis") {
            (stem, Some(Direction::Discharge))
        } else {
            (name, None)
        };
        if let Some(dir) = dir {
            let w = self.windows.get_mut(dir);
            return match window_field {
                "theta_p_100" => Some(&mut w.theta_p_100),
                "theta_p_0" => Some(&mut w.theta_p_0),
                "theta_n_100" => Some(&mut w.theta_n_100),
                "theta_n_0" => Some(&mut w.theta_n_0),
                "theta_p_alpha" => Some(&mut w.theta_p_alpha),
                "theta_p_beta" => Some(&mut w.theta_p_beta),
                _ => None,
            };
        }
        Some(match name {
            "r_s_p" => &mut self.r_s_p,
            "r_s_n" => &mut self.r_s_n,
            "d_s_p" => &mut self.d_s_p,
            "d_s_n" => &mut self.d_s_n,
            "eps_p" => &mut self.eps_p,
            "eps_n" => &mut self.eps_n,
            "k_p" => &mut self.k_p,
            "k_n" => &mut self.k_n,
            "a_cell" => &mut self.a_cell,
            "r_l" => &mut self.r_l,
            "l_n" => &mut self.l_n,
            "l_s" => &mut self.l_s,
            "l_p" => &mut self.l_p,
            "c_s_max_n" => &mut self.c_s_max_n,
            "c_s_max_p" => &mut self.c_s_max_p,
            "c_e0" => &mut self.c_e0,
            "d_e" => &mut self.d_e,
            "eps_e_n" => &mut self.eps_e_n,
            "eps_e_s" => &mut self.eps_e_s,
            "eps_e_p" => &mut self.eps_e_p,
            "t_plus" => &mut self.t_plus,
            "brugg" => &mut self.brugg,
            "nu" => &mut self.nu,
            "temperature" => &mut self.temperature,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut copy = self.clone();
        copy.field_mut(name)
            .map(|v| *v)
            .ok_or_else(|| ModelError::Config(format!("unknown parameter '{name}'")))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = self
            .field_mut(name)
            .ok_or_else(|| ModelError::Config(format!("unknown parameter '{name}'")))?;
        *slot = value;
        Ok(())
    }
}

/// Parameter file contents: base cell parameters plus rate-dependent overrides
/// keyed by C-rate label ("C/4", "C/2", "1C", ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub cell: CellParameters,
    #[serde(default)]
    pub rates: BTreeMap<String, RateParameters>,
}

impl ParameterSet {
    pub fn lfp_reference() -> Self {
        let mut rates = BTreeMap::new();
        rates.insert(
            "C/4".to_string(),
            RateParameters { d_s_p: 4.05e-18, d_s_n: 1.28e-15, k_p: 9.50e-13, k_n: 2.02e-12 },
        );
        rates.insert(
            "C/2".to_string(),
            RateParameters { d_s_p: 5.45e-18, d_s_n: 1.00e-10, k_p: 6.00e-13, k_n: 2.56e-12 },
        );
        rates.insert(
            "1C".to_string(),
            RateParameters { d_s_p: 2.74e-18, d_s_n: 1.42e-15, k_p: 1.45e-12, k_n: 4.71e-12 },
        );
        ParameterSet { cell: CellParameters::lfp_reference(), rates }
    }

    /// Cell parameters for a C-rate label; the base set when the label is unknown.
    pub fn for_rate(&self, label: Option<&str>) -> CellParameters {
        match label.and_then(|l| self.rates.get(l)) {
            Some(r) => self.cell.with_rates(r),
            None => self.cell.clone(),
        }
    }
}
