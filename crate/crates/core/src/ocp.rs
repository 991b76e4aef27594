//! Open-circuit potential tables.
//!
//! Tables are data: two-column CSV `(theta, volts)`. Evaluation is either
//! piecewise linear or monotone cubic Hermite (Fritsch-Carlson), the latter
//! being smooth enough for repeated differentiation while keeping flat
//! plateaus exactly flat.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::{CellParameters, Direction, Electrode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    MonotoneCubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpTable {
    theta: Vec<f64>,
    volts: Vec<f64>,
    slopes: Vec<f64>,
    mode: Interpolation,
}

impl OcpTable {
    pub fn new(theta: Vec<f64>, volts: Vec<f64>, mode: Interpolation) -> Result<Self> {
        if theta.len() < 2 || theta.len() != volts.len() {
            return Err(ModelError::Config("OCP table needs >= 2 rows of (theta, volts)".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::Config("OCP theta must be strictly increasing".into()));
        }
        if theta[0] < 0.0 || theta[theta.len() - 1] > 1.0 {
            return Err(ModelError::Config("OCP theta must lie in [0, 1]".into()));
        }
        if volts.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Config("OCP volts must be finite".into()));
        }
        let slopes = pchip_slopes(&theta, &volts);
        Ok(OcpTable { theta, volts, slopes, mode })
    }

    pub fn with_mode(mut self, mode: Interpolation) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> Interpolation {
        self.mode
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.theta.iter().copied().zip(self.volts.iter().copied())
    }

    pub fn eval(&self, theta: f64) -> Result<f64> {
        self.eval_generic(&theta)
    }

    /// Evaluate at a (possibly differentiated) stoichiometry. Outside the
    /// sampled range the end value is held constant.
    pub fn eval_generic<T: Scalar>(&self, theta: &T) -> Result<T> {
        let x = theta.value();
        if !(0.0..=1.0).contains(&x) {
            return Err(ModelError::Domain(format!("stoichiometry {x} outside [0, 1]")));
        }
        let n = self.theta.len();
        if x < self.theta[0] || x > self.theta[n - 1] {
            warn!("stoichiometry {x:.4} outside OCP table range, holding end value");
            let v = if x < self.theta[0] { self.volts[0] } else { self.volts[n - 1] };
            return Ok(theta.lift(v));
        }
        let k = match self.theta.partition_point(|&t| t <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.theta[k], self.theta[k + 1]);
        let (y0, y1) = (self.volts[k], self.volts[k + 1]);
        let h = x1 - x0;
        let s = theta.clone() - x0;
        Ok(match self.mode {
            Interpolation::Linear => s * ((y1 - y0) / h) + y0,
            Interpolation::MonotoneCubic => {
                let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
                let delta = (y1 - y0) / h;
                let c2 = (3.0 * delta - 2.0 * m0 - m1) / h;
                let c3 = (m0 + m1 - 2.0 * delta) / (h * h);
                // Horner in s
                ((s.clone() * c3 + c2) * s.clone() + m0) * s + y0
            }
        })
    }

    pub fn read_csv(path: &Path, mode: Interpolation) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
        let (mut theta, mut volts) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| ModelError::Config(format!("{}: short row", path.display())))?
                    .parse::<f64>()
                    .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
            };
            theta.push(get(0)?);
            volts.push(get(1)?);
        }
        OcpTable::new(theta, volts, mode)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta", "volts"])?;
        for (t, v) in self.samples() {
            w.write_record([format!("{t}"), format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fritsch-Carlson slopes with the three-point shape-preserving end rule.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let (w1, w2) = (2.0 * h[k] + h[k - 1], h[k] + 2.0 * h[k - 1]);
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if m * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            m
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

/// The tables a simulation needs: direction-specific positive curves and a
/// shared negative curve.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSet {
    pub positive_charge: OcpTable,
    pub positive_discharge: OcpTable,
    pub negative: OcpTable,
}

impl OcpSet {
    pub fn table(&self, electrode: Electrode, dir: Direction) -> &OcpTable {
        match (electrode, dir) {
            (Electrode::Negative, _) => &self.negative,
            (Electrode::Positive, Direction::Charge) => &self.positive_charge,
            (Electrode::Positive, Direction::Discharge) => &self.positive_discharge,
        }
    }

    pub fn with_mode(self, mode: Interpolation) -> Self {
        OcpSet {
            positive_charge: self.positive_charge.with_mode(mode),
            positive_discharge: self.positive_discharge.with_mode(mode),
            negative: self.negative.with_mode(mode),
        }
    }

    /// Synthetic LFP/graphite curves matched to the windows in `params`.
    pub fn synthetic(params: &CellParameters) -> Result<Self> {
        let ch = &params.windows.charge;
        let dis = &params.windows.discharge;
        Ok(OcpSet {
            positive_charge: synthetic_lfp(ch.theta_p_alpha, ch.theta_p_beta, 3.430)?,
            positive_discharge: synthetic_lfp(dis.theta_p_alpha, dis.theta_p_beta, 3.400)?,
            negative: synthetic_graphite()?,
        })
    }
}

/// LFP-shaped curve: exactly flat at `plateau` on `[alpha, beta]`, rising
/// steeply toward empty and falling steeply toward full lithiation.
pub fn synthetic_lfp(alpha: f64, beta: f64, plateau: f64) -> Result<OcpTable> {
    let mut theta: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    theta.extend([alpha, beta]);
    theta.sort_by(f64::total_cmp);
    theta.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let volts = theta
        .iter()
        .map(|&t| {
            if t < alpha {
                let s = (alpha - t) / alpha;
                plateau + 0.03 * s + 0.35 * s.powi(4)
            } else if t > beta {
                let s = (t - beta) / (1.0 - beta);
                plateau - 0.03 * s - 0.9 * s.powi(4)
            } else {
                plateau
            }
        })
        .collect();
    OcpTable::new(theta, volts, Interpolation::MonotoneCubic)
}

/// Graphite-shaped curve from a common empirical fit, sampled on `[0.005, 1]`.
pub fn synthetic_graphite() -> Result<OcpTable> {
    let theta: Vec<f64> = (0..=199).map(|k| 0.005 + 0.995 * k as f64 / 199.0).collect();
    let volts = theta
        .iter()
        .map(|&t: &f64| {
            0.7222 + 0.1387 * t + 0.029 * t.sqrt() - 0.0172 / t + 0.0019 / t.powf(1.5)
                + 0.2808 * (0.9 - 15.0 * t).exp()
                - 0.7984 * (0.4465 * t - 0.4108).exp()
        })
        .collect();
    OcpTable::new(theta, volts, Interpolation::MonotoneCubic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(mode: Interpolation) -> OcpTable {
        OcpTable::new(vec![0.0, 0.2, 0.5, 1.0], vec![4.0, 3.5, 3.5, 2.5], mode).unwrap()
    }

    #[test]
    fn reproduces_samples_and_midpoints() {
        for mode in [Interpolation::Linear, Interpolation::MonotoneCubic] {
            let t = table(mode);
            for (x, y) in [(0.0, 4.0), (0.2, 3.5), (0.5, 3.5), (1.0, 2.5)] {
                assert_eq!(t.eval(x).unwrap(), y);
            }
            assert_eq!(t.eval(0.35).unwrap(), 3.5);
        }
        assert_relative_eq!(table(Interpolation::Linear).eval(0.1).unwrap(), 3.75, max_relative = 1e-14);
    }

    #[test]
    fn rejects_out_of_domain_and_bad_tables() {
        let t = table(Interpolation::Linear);
        assert!(matches!(t.eval(-0.1), Err(ModelError::Domain(_))));
        assert!(t.eval(1.01).is_err());
        assert!(OcpTable::new(vec![0.0, 0.0], vec![1.0, 1.0], Interpolation::Linear).is_err());
        assert!(OcpTable::new(vec![0.0, 1.2], vec![1.0, 1.0], Interpolation::Linear).is_err());
    }

    #[test]
    fn holds_end_values_outside_sampled_range() {
        let t = OcpTable::new(vec![0.1, 0.9], vec![3.0, 2.0], Interpolation::Linear).unwrap();
        assert_eq!(t.eval(0.05).unwrap(), 3.0);
        assert_eq!(t.eval(0.95).unwrap(), 2.0);
    }

    #[test]
    fn synthetic_positive_plateau_is_flat_and_monotone() {
        let p = CellParameters::lfp_reference();
        let set = OcpSet::synthetic(&p).unwrap();
        for dir in [Direction::Charge, Direction::Discharge] {
            let w = p.windows.get(dir);
            let t = set.table(Electrode::Positive, dir);
            let u0 = t.eval(w.theta_p_alpha).unwrap();
            for k in 0..=50 {
                let th = w.theta_p_alpha + (w.theta_p_beta - w.theta_p_alpha) * k as f64 / 50.0;
                assert_eq!(t.eval(th).unwrap(), u0);
            }
            let mut last = f64::INFINITY;
            for k in 0..=1000 {
                let u = t.eval(k as f64 / 1000.0).unwrap();
                assert!(u <= last + 1e-12);
                last = u;
            }
        }
        // hysteresis: charge plateau above discharge plateau
        assert!(set.positive_charge.eval(0.5).unwrap() > set.positive_discharge.eval(0.5).unwrap());
    }

    #[test]
    fn cubic_jet_derivative_matches_difference() {
        use crate::scalar::Jet;
        let t = synthetic_graphite().unwrap();
        let x = 0.4123;
        let mut j = Jet::variable(1, 1, x, 0);
        j.set_coeff(1, &[1.0, 0.0]);
        let u = t.eval_generic(&j).unwrap();
        let h = 1e-7;
        let fd = (t.eval(x + h).unwrap() - t.eval(x - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(u.coeff(0)[1], fd, max_relative = 1e-5);
        assert_relative_eq!(u.coeff(1)[0], fd, max_relative = 1e-5);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ocp.csv");
        let t = table(Interpolation::MonotoneCubic);
        t.write_csv(&path).unwrap();
        let back = OcpTable::read_csv(&path, Interpolation::MonotoneCubic).unwrap();
        assert_eq!(back, t);
    }
}
