//! Output map: exchange current densities, overpotentials, electrolyte
//! potential drop, cell voltage and state of charge.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::{CellParameters, Direction, Electrode, FARADAY, GAS_CONSTANT};
use crate::scalar::Scalar;

/// `i0 = k F sqrt(c_e c (c_max - c))` [A/m^2].
pub fn exchange_current_density<T: Scalar>(
    params: &CellParameters,
    electrode: Electrode,
    c_eff: &T,
    c_e_avg: f64,
) -> Result<T> {
    let cmax = params.c_max(electrode);
    let v = c_eff.value();
    if !(v > 0.0 && v < cmax) {
        return Err(ModelError::Saturation { electrode: electrode.name(), value: v, max: cmax });
    }
    if !(c_e_avg > 0.0) {
        return Err(ModelError::Domain(format!("electrolyte concentration {c_e_avg} must be > 0")));
    }
    let k = params.rate_constant(electrode);
    Ok((c_eff.clone() * (c_eff.lift(cmax) - c_eff.clone()) * c_e_avg).sqrt() * (k * FARADAY))
}

/// `eta = (2RT/F) asinh(I p / (2 a_s A L i0))`, `p = -1` positive, `+1` negative.
pub fn overpotential<T: Scalar>(params: &CellParameters, electrode: Electrode, current: &T, i0: &T) -> Result<T> {
    if !(i0.value() > 0.0) {
        return Err(ModelError::Domain(format!("exchange current density {} must be > 0", i0.value())));
    }
    let p = match electrode {
        Electrode::Positive => -1.0,
        Electrode::Negative => 1.0,
    };
    let denom = 2.0 * params.specific_area(electrode) * params.a_cell * params.thickness(electrode);
    let arg = current.clone() * (p / denom) / i0.clone();
    Ok(arg.asinh() * (2.0 * params.thermal_voltage()))
}

/// `(2 R T nu / F) ln(c_e(L) / c_e(0))` from the end volumes.
pub fn electrolyte_potential_drop(c_e: &[f64], params: &CellParameters) -> Result<f64> {
    let (first, last) = match (c_e.first(), c_e.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(ModelError::Domain("empty electrolyte state".into())),
    };
    if !(first > 0.0 && last > 0.0) {
        return Err(ModelError::Domain(format!(
            "electrolyte end concentrations must be > 0, got {first}, {last}"
        )));
    }
    Ok(2.0 * GAS_CONSTANT * params.temperature * params.nu / FARADAY * (last / first).ln())
}

/// `(SOC_p, SOC_n)` from bulk stoichiometries; unclamped.
pub fn soc(theta_p_bulk: f64, theta_n_bulk: f64, dir: Direction, params: &CellParameters) -> (f64, f64) {
    let w = params.windows.get(dir);
    (
        (w.theta_p_0 - theta_p_bulk) / (w.theta_p_0 - w.theta_p_100),
        (theta_n_bulk - w.theta_n_0) / (w.theta_n_100 - w.theta_n_0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSnapshot {
    pub v_cell: f64,
    pub u_p: f64,
    pub u_n: f64,
    pub eta_p: f64,
    pub eta_n: f64,
    pub dphi_e: f64,
    pub i0_p: f64,
    pub i0_n: f64,
    pub soc_p: f64,
    pub soc_n: f64,
    /// Ohmic drop `R_l I`.
    pub ohmic: f64,
}

impl OutputSnapshot {
    pub fn recompose(&self) -> f64 {
        self.u_p + self.eta_p - self.u_n - self.eta_n + self.dphi_e - self.ohmic
    }
}

/// Everything the voltage needs, already reduced from the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputInputs {
    pub current: f64,
    /// OCP potentials at the lookup stoichiometries.
    pub u_p: f64,
    pub u_n: f64,
    /// Concentrations entering the exchange current densities.
    pub c_p_eff: f64,
    pub c_n_eff: f64,
    pub c_e_neg: f64,
    pub c_e_pos: f64,
    pub dphi_e: f64,
    pub theta_p_bulk: f64,
    pub theta_n_bulk: f64,
    pub direction: Direction,
}

pub fn compose(params: &CellParameters, inp: &OutputInputs) -> Result<OutputSnapshot> {
    let i = inp.current;
    let i0_p = exchange_current_density(params, Electrode::Positive, &inp.c_p_eff, inp.c_e_pos)?;
    let i0_n = exchange_current_density(params, Electrode::Negative, &inp.c_n_eff, inp.c_e_neg)?;
    let eta_p = overpotential(params, Electrode::Positive, &i, &i0_p)?;
    let eta_n = overpotential(params, Electrode::Negative, &i, &i0_n)?;
    let (soc_p, soc_n) = soc(inp.theta_p_bulk, inp.theta_n_bulk, inp.direction, params);
    let ohmic = params.r_l * i;
    let v_cell = inp.u_p + eta_p - inp.u_n - eta_n + inp.dphi_e - ohmic;
    Ok(OutputSnapshot {
        v_cell,
        u_p: inp.u_p,
        u_n: inp.u_n,
        eta_p,
        eta_n,
        dphi_e: inp.dphi_e,
        i0_p,
        i0_n,
        soc_p,
        soc_n,
        ohmic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> CellParameters {
        CellParameters::lfp_reference()
    }

    #[test]
    fn exchange_current_hand_value() {
        let p = params();
        let c = 0.5 * p.c_s_max_p;
        let i0 = exchange_current_density(&p, Electrode::Positive, &c, 1000.0).unwrap();
        // 9.50e-13 * 96485.33212 * sqrt(1000) * 11403
        assert_relative_eq!(i0, 3.305_247_8e-2, max_relative = 1e-6);
        let off = exchange_current_density(&p, Electrode::Positive, &(0.4 * p.c_s_max_p), 1000.0).unwrap();
        assert!(off < i0);
        for bad in [0.0, p.c_s_max_p, 1.1 * p.c_s_max_p] {
            assert!(matches!(
                exchange_current_density(&p, Electrode::Positive, &bad, 1000.0),
                Err(ModelError::Saturation { .. })
            ));
        }
    }

    #[test]
    fn overpotential_is_odd_and_linearizes() {
        let p = params();
        let i0 = 0.02;
        for e in [Electrode::Positive, Electrode::Negative] {
            assert_eq!(overpotential(&p, e, &0.0, &i0).unwrap(), 0.0);
            let a = overpotential(&p, e, &3.0, &i0).unwrap();
            assert_eq!(overpotential(&p, e, &-3.0, &i0).unwrap(), -a);
            let i = 1e-6;
            let sign = if e == Electrode::Positive { -1.0 } else { 1.0 };
            let lin = GAS_CONSTANT * p.temperature * i * sign
                / (FARADAY * p.specific_area(e) * p.a_cell * p.thickness(e) * i0);
            assert_relative_eq!(overpotential(&p, e, &i, &i0).unwrap() / lin, 1.0, max_relative = 1e-9);
        }
        let ap = overpotential(&p, Electrode::Positive, &1.0, &i0).unwrap();
        let an = overpotential(&p, Electrode::Negative, &1.0, &i0).unwrap();
        assert!(ap < 0.0 && an > 0.0);
        assert!(overpotential(&p, Electrode::Positive, &1.0, &0.0).is_err());
    }

    #[test]
    fn electrolyte_drop_values() {
        let mut p = params();
        assert_eq!(electrolyte_potential_drop(&[1000.0; 6], &p).unwrap(), 0.0);
        p.nu = 1.0;
        let expect = 2.0 * 8.314 * 298.15 / 96485.0 * (1100.0f64 / 900.0).ln();
        let got = electrolyte_potential_drop(&[900.0, 1000.0, 1100.0], &p).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-4);
        let swapped = electrolyte_potential_drop(&[1100.0, 1000.0, 900.0], &p).unwrap();
        assert_relative_eq!(swapped, -got, max_relative = 1e-14);
        assert!(electrolyte_potential_drop(&[0.0, 1.0], &p).is_err());
    }

    #[test]
    fn soc_endpoints() {
        let p = params();
        let (sp, _) = soc(0.925, 0.5, Direction::Discharge, &p);
        assert_eq!(sp, 0.0);
        let (sp, _) = soc(0.066, 0.5, Direction::Discharge, &p);
        assert_eq!(sp, 1.0);
        let w = p.windows.charge;
        let (_, sn) = soc(0.5, 0.5 * (w.theta_n_0 + w.theta_n_100), Direction::Charge, &p);
        assert_relative_eq!(sn, 0.5, max_relative = 1e-12);
    }
}
