//! Nonlinear observability of the positive electrode: extended Lie
//! derivatives of the half-cell output, the stacked-gradient matrix, its
//! numerical rank and condition number, and sweeps along trajectories.

use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cell::CellModel;
use crate::error::{ModelError, Result};
use crate::model::electrolyte::ElectrolyteGrid;
use crate::params::Direction;
use crate::profile::LoadProfile;
use crate::scalar::Jet;
use crate::sim::SimulationResult;
use crate::state::{FullState, PositiveState, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LieMethod {
    /// Taylor-mode propagation with forward gradients (exact to rounding).
    #[default]
    Jet,
    /// Nested central differences.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservabilityConfig {
    pub method: LieMethod,
    /// Relative finite-difference step.
    pub jacobian_step: f64,
    /// Singular values below `rank_tol * sigma_max * dim` count as zero.
    pub rank_tol: f64,
    /// `dI/dt` and `d2I/dt2` used when no profile is supplied. With a profile
    /// the first is differenced from it and the second is zero.
    pub input_derivatives: (f64, f64),
    /// Analyse every `stride`-th record of a trajectory.
    pub stride: usize,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        ObservabilityConfig {
            method: LieMethod::Jet,
            jacobian_step: 1e-6,
            rank_tol: 1e-8,
            input_derivatives: (0.0, 0.0),
            stride: 10,
        }
    }
}

impl ObservabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jacobian_step > 0.0 && self.rank_tol > 0.0) || self.stride == 0 {
            return Err(ModelError::Config("observability steps and tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Input and its time derivatives `[I, dI/dt, d2I/dt2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputJet {
    pub current: f64,
    pub rate: f64,
    pub accel: f64,
}

impl InputJet {
    pub fn constant(current: f64) -> Self {
        InputJet { current, rate: 0.0, accel: 0.0 }
    }

    fn derivative(&self, k: usize) -> f64 {
        match k {
            0 => self.current,
            1 => self.rate,
            2 => self.accel,
            _ => 0.0,
        }
    }

    fn shifted(&self, k: usize, delta: f64) -> Self {
        let mut s = *self;
        match k {
            0 => s.current += delta,
            1 => s.rate += delta,
            _ => s.accel += delta,
        }
        s
    }
}

/// Positive particle together with the frozen context of the output.
#[derive(Debug, Clone)]
pub struct PositivePoint {
    pub positive: PositiveState,
    pub c_e_pos: f64,
    pub direction: Direction,
}

impl PositivePoint {
    pub fn from_state(model: &CellModel, state: &FullState, current: f64) -> Self {
        PositivePoint {
            positive: state.positive.clone(),
            c_e_pos: ElectrolyteGrid::region_mean(&state.electrolyte, model.electrolyte_grid().positive()),
            direction: Direction::from_current(current).unwrap_or(state.direction),
        }
    }

    pub fn dim(&self) -> usize {
        self.positive.vector().len()
    }
}

/// Values `L^0..L^{order}` and gradients `dL^J/dx` of the extended Lie
/// derivatives of `h = U_p + eta_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieStack {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Taylor-mode evaluation: the state jet is grown one coefficient at a time
/// from `x' = f(x, u(t))`, then pushed through the output. The `k`-th time
/// derivative of `h` along the input path is exactly the extended Lie
/// derivative of order `k`.
fn lie_stack_jet(model: &CellModel, point: &PositivePoint, input: &InputJet, order: usize) -> Result<LieStack> {
    let x0 = point.positive.vector();
    let n = x0.len();
    let mut u = Jet::constant(order, n, input.current);
    for k in 1..=order.min(2) {
        let mut c = vec![0.0; n + 1];
        c[0] = input.derivative(k) / factorial(k);
        u.set_coeff(k, &c);
    }
    let mut x: Vec<Jet> = x0.iter().enumerate().map(|(i, &v)| Jet::variable(order, n, v, i)).collect();
    for k in 0..order {
        let f = model.positive_rhs(&point.positive, &x, &u);
        for (xi, fi) in x.iter_mut().zip(&f) {
            let c: Vec<f64> = fi.coeff(k).iter().map(|v| v / (k + 1) as f64).collect();
            xi.set_coeff(k + 1, &c);
        }
    }
    let h = model.positive_half_cell(&point.positive, &x, &u, point.c_e_pos, point.direction)?;
    let mut values = Vec::with_capacity(order + 1);
    let mut gradients = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let c = h.coeff(k);
        let s = factorial(k);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Numerical(format!("non-finite Lie derivative of order {k}")));
        }
        values.push(s * c[0]);
        gradients.push(c[1..].iter().map(|g| s * g).collect());
    }
    Ok(LieStack { values, gradients })
}

struct FdContext<'a> {
    model: &'a CellModel,
    point: &'a PositivePoint,
    steps: Vec<f64>,
    input_steps: [f64; 3],
}

impl FdContext<'_> {
    fn output(&self, x: &[f64], u: &InputJet) -> Result<f64> {
        self.model.positive_half_cell(&self.point.positive, x, &u.current, self.point.c_e_pos, self.point.direction)
    }

    /// `L^order(x, u)` by recursion on central differences.
    fn lie(&self, order: usize, x: &[f64], u: &InputJet) -> Result<f64> {
        if order == 0 {
            return self.output(x, u);
        }
        let f = self.model.positive_rhs(&self.point.positive, x, &u.current);
        let mut acc = 0.0;
        for (i, fi) in f.iter().enumerate() {
            acc += self.partial_x(order - 1, x, u, i)? * fi;
        }
        // input-derivative terms; inputs above the second derivative vanish
        for k in 0..2 {
            let next = u.derivative(k + 1);
            if next != 0.0 {
                let h = self.input_steps[k];
                let up = self.lie(order - 1, x, &u.shifted(k, h))?;
                let dn = self.lie(order - 1, x, &u.shifted(k, -h))?;
                acc += (up - dn) / (2.0 * h) * next;
            }
        }
        Ok(acc)
    }

    fn partial_x(&self, order: usize, x: &[f64], u: &InputJet, i: usize) -> Result<f64> {
        let h = self.steps[i];
        let mut xp = x.to_vec();
        xp[i] += h;
        let up = self.lie(order, &xp, u)?;
        xp[i] = x[i] - h;
        let dn = self.lie(order, &xp, u)?;
        Ok((up - dn) / (2.0 * h))
    }
}

fn lie_stack_fd(
    model: &CellModel,
    point: &PositivePoint,
    input: &InputJet,
    order: usize,
    step: f64,
) -> Result<LieStack> {
    let x0 = point.positive.vector();
    let n = x0.len();
    let p = &model.params;
    let scales: Vec<f64> = (0..n).map(|i| if i < model.n_r() { p.c_s_max_p } else { p.r_s_p }).collect();
    let steps = x0.iter().zip(&scales).map(|(v, s)| step * v.abs().max(*s)).collect();
    let i_scale = input.current.abs().max(p.c_rate_current(1.0));
    let ctx = FdContext { model, point, steps, input_steps: [step * i_scale, step * i_scale, step * i_scale] };
    let mut values = Vec::with_capacity(order + 1);
    let mut gradients = Vec::with_capacity(order + 1);
    for k in 0..=order {
        values.push(ctx.lie(k, &x0, input)?);
        let g = (0..n).map(|i| ctx.partial_x(k, &x0, input, i)).collect::<Result<Vec<f64>>>()?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Numerical(format!("non-finite Lie derivative of order {k}")));
        }
        gradients.push(g);
    }
    Ok(LieStack { values, gradients })
}

/// Lie derivatives of orders `0..=order` at `point` under `input`.
pub fn lie_stack(
    model: &CellModel,
    point: &PositivePoint,
    input: &InputJet,
    order: usize,
    config: &ObservabilityConfig,
) -> Result<LieStack> {
    match config.method {
        LieMethod::Jet => lie_stack_jet(model, point, input, order),
        LieMethod::FiniteDifference => lie_stack_fd(model, point, input, order, config.jacobian_step),
    }
}

/// Observability matrix, raw and with columns scaled by the characteristic
/// state magnitudes (`c_s_max_p` for concentrations, `R_s_p` for `r_p`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityMatrix {
    pub raw: DMatrix<f64>,
    pub scaled: DMatrix<f64>,
}

pub fn observability_matrix(
    model: &CellModel,
    point: &PositivePoint,
    input: &InputJet,
    config: &ObservabilityConfig,
) -> Result<ObservabilityMatrix> {
    let n = point.dim();
    let stack = lie_stack(model, point, input, n - 1, config)?;
    let raw = DMatrix::from_fn(n, n, |r, c| stack.gradients[r][c]);
    let p = &model.params;
    let mut scaled = raw.clone();
    for c in 0..n {
        let s = if c < model.n_r() { p.c_s_max_p } else { p.r_s_p };
        scaled.column_mut(c).scale_mut(s);
    }
    Ok(ObservabilityMatrix { raw, scaled })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCondition {
    pub rank: usize,
    /// `sigma_max / sigma_min`; infinite when rank deficient.
    pub cond: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

pub fn rank_and_condition(o: &DMatrix<f64>, rank_tol: f64) -> RankCondition {
    let sv = o.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let dim = o.nrows().max(o.ncols()) as f64;
    let threshold = rank_tol * sigma_max * dim;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let full = o.nrows().min(o.ncols());
    let cond = if rank == full && sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
    RankCondition { rank, cond, sigma_min, sigma_max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityPoint {
    pub time: f64,
    pub soc_p: f64,
    pub regime: Regime,
    pub rank: usize,
    pub full_rank_needed: usize,
    pub cond_scaled: f64,
    pub cond_raw: f64,
    pub sigma_min_scaled: f64,
}

impl ObservabilityPoint {
    pub fn log10_cond_scaled(&self) -> f64 {
        self.cond_scaled.log10()
    }

    pub fn log10_cond_raw(&self) -> f64 {
        self.cond_raw.log10()
    }
}

/// Analyse one state.
pub fn analyse_state(
    model: &CellModel,
    state: &FullState,
    input: &InputJet,
    config: &ObservabilityConfig,
) -> Result<(RankCondition, RankCondition)> {
    let point = PositivePoint::from_state(model, state, input.current);
    let o = observability_matrix(model, &point, input, config)?;
    Ok((rank_and_condition(&o.scaled, config.rank_tol), rank_and_condition(&o.raw, config.rank_tol)))
}

/// Observability along a stored trajectory. With a profile, `dI/dt` comes from
/// backward differencing it; otherwise the configured input derivatives apply.
/// Points that fail are logged and skipped.
pub fn sweep(
    model: &CellModel,
    result: &SimulationResult,
    profile: Option<&LoadProfile>,
    config: &ObservabilityConfig,
) -> Result<Vec<ObservabilityPoint>> {
    config.validate()?;
    let picked: Vec<_> = result.records.iter().step_by(config.stride).collect();
    if picked.iter().any(|r| r.state.is_none()) {
        return Err(ModelError::Config("observability sweep needs stored states".into()));
    }
    let points = crate::par::map(&picked, |r| {
        let state = r.state.as_ref().expect("checked above");
        let input = match profile {
            Some(p) => InputJet { current: p.current_at(r.time), rate: p.current_rate(r.time), accel: 0.0 },
            None => InputJet { current: r.current, rate: config.input_derivatives.0, accel: config.input_derivatives.1 },
        };
        match analyse_state(model, state, &input, config) {
            Ok((scaled, raw)) => Some(ObservabilityPoint {
                time: r.time,
                soc_p: r.output.soc_p,
                regime: r.regime,
                rank: scaled.rank,
                full_rank_needed: r.regime.dim(model.n_r()),
                cond_scaled: scaled.cond,
                cond_raw: raw.cond,
                sigma_min_scaled: scaled.sigma_min,
            }),
            Err(e) => {
                warn!("observability at t = {:.1} s failed: {e}", r.time);
                None
            }
        }
    });
    Ok(points.into_iter().flatten().collect())
}

pub fn write_sweep_csv(path: &Path, points: &[ObservabilityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "soc_p", "regime", "rank", "full_rank_needed", "log10_cond_scaled", "log10_cond_raw"])?;
    for p in points {
        w.write_record([
            p.time.to_string(),
            p.soc_p.to_string(),
            p.regime.label().to_string(),
            p.rank.to_string(),
            p.full_rank_needed.to_string(),
            p.log10_cond_scaled().to_string(),
            p.log10_cond_raw().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary statistics of `log10(cond)` over finite points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub count: usize,
}

pub fn cond_stats(points: &[ObservabilityPoint]) -> CondStats {
    let mut v: Vec<f64> = points.iter().map(|p| p.log10_cond_scaled()).filter(|v| v.is_finite()).collect();
    let count = v.len();
    if count == 0 {
        return CondStats { mean: f64::NAN, median: f64::NAN, std: f64::NAN, count };
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / count as f64;
    let median = if count % 2 == 1 { v[count / 2] } else { 0.5 * (v[count / 2 - 1] + v[count / 2]) };
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64).sqrt();
    CondStats { mean, median, std, count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::two_phase::Phase;
    use crate::model::{DiscretizationConfig, Scheme};
    use approx::assert_relative_eq;

    fn model(n_r: usize, scheme: Scheme) -> CellModel {
        CellModel::reference(DiscretizationConfig { n_r, scheme, ..Default::default() }).unwrap()
    }

    fn one_phase(c: Vec<f64>) -> PositivePoint {
        PositivePoint { positive: PositiveState::OnePhase { phase: Phase::Alpha, c }, c_e_pos: 1000.0, direction: Direction::Discharge }
    }

    #[test]
    fn rank_and_condition_basics() {
        let id = DMatrix::<f64>::identity(3, 3);
        let rc = rank_and_condition(&id, 1e-8);
        assert_eq!((rc.rank, rc.cond), (3, 1.0));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 10.0]));
        let rc = rank_and_condition(&d, 1e-8);
        assert_eq!(rc.rank, 2);
        assert_relative_eq!(rc.cond, 10.0, max_relative = 1e-12);
        let dup = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 0.0, 1.0, 5.0]);
        let rc = rank_and_condition(&dup, 1e-8);
        assert_eq!(rc.rank, 2);
        assert!(rc.cond.is_infinite());
    }

    #[test]
    fn order_zero_at_rest_is_the_ocp() {
        let m = model(2, Scheme::Fvm);
        let c = 0.1 * m.params.c_s_max_p;
        let pt = one_phase(vec![c; 2]);
        let s = lie_stack(&m, &pt, &InputJet::constant(0.0), 1, &ObservabilityConfig::default()).unwrap();
        let u = m.ocp.table(crate::Electrode::Positive, Direction::Discharge).eval(0.1).unwrap();
        assert_relative_eq!(s.values[0], u, max_relative = 1e-14);
    }

    #[test]
    fn jet_and_nested_differences_agree() {
        for (n_r, two) in [(2, false), (3, false), (2, true)] {
            let m = model(n_r, Scheme::Fvm);
            let p = &m.params;
            let pt = if two {
                PositivePoint {
                    positive: PositiveState::TwoPhase {
                        core: Phase::Beta,
                        c_core: Phase::Beta.edge(p, Direction::Charge),
                        shell: vec![0.24 * p.c_s_max_p, 0.23 * p.c_s_max_p],
                        r_p: 0.6 * p.r_s_p,
                    },
                    c_e_pos: 1000.0,
                    direction: Direction::Charge,
                }
            } else {
                one_phase((0..n_r).map(|k| (0.05 + 0.01 * k as f64) * p.c_s_max_p).collect())
            };
            let cur = if two { -p.c_rate_current(1.0) } else { p.c_rate_current(1.0) };
            let input = InputJet { current: cur, rate: 1e-3, accel: 0.0 };
            let cfg = ObservabilityConfig::default();
            let a = lie_stack(&m, &pt, &input, 1, &cfg).unwrap();
            let b = lie_stack(&m, &pt, &input, 1, &ObservabilityConfig { method: LieMethod::FiniteDifference, jacobian_step: 1e-4, ..cfg }).unwrap();
            for k in 0..=1 {
                assert_relative_eq!(a.values[k], b.values[k], max_relative = 1e-5, epsilon = 1e-12);
                let scale = a.gradients[k].iter().fold(0.0f64, |s, v| s.max(v.abs()));
                for (ga, gb) in a.gradients[k].iter().zip(&b.gradients[k]) {
                    assert!((ga - gb).abs() <= 1e-4 * scale, "{n_r} {two} order {k}: {ga} vs {gb}");
                }
            }
        }
    }

    #[test]
    fn dimensions_follow_regime() {
        let m = model(2, Scheme::Fvm);
        let p = &m.params;
        let pt = one_phase(vec![0.1 * p.c_s_max_p; 2]);
        let o = observability_matrix(&m, &pt, &InputJet::constant(1.0), &ObservabilityConfig::default()).unwrap();
        assert_eq!(o.raw.shape(), (2, 2));
        let pt = PositivePoint {
            positive: PositiveState::TwoPhase {
                core: Phase::Alpha,
                c_core: Phase::Alpha.edge(p, Direction::Discharge),
                shell: vec![Phase::Beta.edge(p, Direction::Discharge); 2],
                r_p: 0.5 * p.r_s_p,
            },
            c_e_pos: 1000.0,
            direction: Direction::Discharge,
        };
        let o = observability_matrix(&m, &pt, &InputJet::constant(1.0), &ObservabilityConfig::default()).unwrap();
        assert_eq!(o.scaled.shape(), (3, 3));
    }

    #[test]
    fn constant_input_ignores_configured_rates() {
        let m = model(3, Scheme::Fvm);
        let p = &m.params;
        let pt = one_phase(vec![0.1 * p.c_s_max_p, 0.11 * p.c_s_max_p, 0.12 * p.c_s_max_p]);
        let cfg = ObservabilityConfig::default();
        let a = observability_matrix(&m, &pt, &InputJet::constant(2.0), &cfg).unwrap();
        let b = observability_matrix(&m, &pt, &InputJet::constant(2.0), &ObservabilityConfig { input_derivatives: (5.0, 1.0), ..cfg }).unwrap();
        assert_eq!(a, b);
    }
}
