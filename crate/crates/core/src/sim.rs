//! Time integration of the coupled cell over a load profile, with phase
//! transition events and a lithium audit.

use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::cell::{CellModel, Lithium};
use crate::error::{ModelError, Result};
use crate::integrate::{
    explicit_linear_step, explicit_step, explicit_substeps, ArrowPattern, LinearTrbdf2, Method, NonlinearTrbdf2,
};
use crate::model::two_phase::build_two_phase_system_with;
use crate::model::reconstruct::bulk_two_phase;
use crate::model::Scheme;
use crate::output::OutputSnapshot;
use crate::params::{Direction, Electrode, FARADAY};
use crate::phase::{
    apply_sign_flip, enter_two_phase, event_indicator, exit_two_phase, EventKind, TransitionEvent,
};
use crate::profile::LoadProfile;
use crate::state::{FullState, PositiveState, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    pub method: Method,
    /// Relative lithium mismatch tolerated across a transition.
    pub mass_tol: f64,
    /// Event localization tolerance [s].
    pub event_tol: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Newton tolerance (scaled max-norm) of the implicit two-phase solve.
    pub newton_tol: f64,
    /// Keep the full state in every record.
    pub store_states: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1.0,
            method: Method::Trbdf2,
            mass_tol: 1e-10,
            event_tol: 1e-3,
            v_min: 2.0,
            v_max: 3.65,
            newton_tol: 1e-11,
            store_states: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ModelError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.mass_tol > 0.0 && self.event_tol > 0.0 && self.newton_tol > 0.0) {
            return Err(ModelError::Config("tolerances must be > 0".into()));
        }
        if !(self.v_min < self.v_max) {
            return Err(ModelError::Config("v_min must be below v_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: f64,
    pub current: f64,
    pub output: OutputSnapshot,
    pub regime: Regime,
    pub r_p: f64,
    pub lithium: Lithium,
    /// Charge passed since the start [C].
    pub charge: f64,
    pub state: Option<FullState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    VoltageCutoff,
    /// Output map left its valid domain (saturated electrode).
    DomainExit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub records: Vec<Record>,
    pub events: Vec<TransitionEvent>,
    pub termination: Termination,
    pub final_state: FullState,
}

/// Integrates a [`CellModel`]; caches the linear step factorizations.
pub struct Simulator<'a> {
    pub model: &'a CellModel,
    pub config: SolverConfig,
    cache: std::cell::RefCell<Option<(f64, [LinearTrbdf2; 3])>>,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a CellModel, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Simulator { model, config, cache: std::cell::RefCell::new(None) })
    }

    fn linear_steppers(&self, h: f64) -> [LinearTrbdf2; 3] {
        let mut cache = self.cache.borrow_mut();
        if let Some((ch, st)) = cache.as_ref() {
            if *ch == h {
                return st.clone();
            }
        }
        let m = self.model;
        let st = [
            LinearTrbdf2::new(m.negative_system(), h),
            LinearTrbdf2::new(m.positive_one_phase_system(), h),
            LinearTrbdf2::new(m.electrolyte_system(), h),
        ];
        if h == self.config.dt {
            *cache = Some((h, st.clone()));
        }
        st
    }

    fn linear(&self, which: usize, y: &[f64], current: f64, h: f64) -> Result<Vec<f64>> {
        let m = self.model;
        let sys = match which {
            0 => m.negative_system(),
            1 => m.positive_one_phase_system(),
            _ => m.electrolyte_system(),
        };
        match self.config.method {
            Method::Trbdf2 => self.linear_steppers(h)[which].step(sys, y, current),
            method => Ok(explicit_linear_step(method, sys, y, current, h)),
        }
    }

    fn two_phase(&self, pos: &PositiveState, current: f64, h: f64, depth: usize) -> Result<Vec<f64>> {
        let m = self.model;
        let n = m.n_r();
        let PositiveState::TwoPhase { core, c_core, r_p, .. } = pos else {
            return Err(ModelError::PhaseDomain("two-phase step on a one-phase particle".into()));
        };
        let x = pos.vector();
        let f = |y: &[f64], out: &mut [f64]| out.copy_from_slice(&m.positive_rhs(pos, y, &current));
        let mut next = match self.config.method {
            Method::Trbdf2 => {
                let dense = match m.scheme() {
                    Scheme::Fvm => vec![0, n],
                    Scheme::Fdm => vec![0, 1, n],
                };
                let pattern = ArrowPattern { dense };
                let mut scale = vec![m.params.c_s_max_p; n];
                scale.push(m.params.r_s_p);
                let solver = NonlinearTrbdf2 { f: &f, pattern: &pattern, scale: &scale, tol: self.config.newton_tol };
                let radius = m.params.r_s_p;
                let step = solver.step(&x, h).and_then(|y| {
                    // a converged but unphysical iterate is treated like a Newton failure
                    if y.iter().all(|v| v.is_finite()) && y[n] < radius {
                        Ok(y)
                    } else {
                        Err(ModelError::Numerical("two-phase step left the domain".into()))
                    }
                });
                match step {
                    Ok(y) => y,
                    Err(e) if depth < 12 => {
                        debug!("two-phase step of {h} s failed ({e}); halving");
                        let mid = self.two_phase(pos, current, 0.5 * h, depth + 1)?;
                        return self.two_phase(&pos.with_vector(&mid), current, 0.5 * h, depth + 1);
                    }
                    Err(e) => return Err(e),
                }
            }
            method => {
                let interface = crate::model::two_phase::interface_for_core(&m.params, current, *core, *c_core);
                let r = r_p.clamp(1e-3 * m.params.r_s_p, 0.9999 * m.params.r_s_p);
                let rho = build_two_phase_system_with(&m.params, r, n, interface)
                    .map(|s| s.gershgorin_bound())
                    .unwrap_or(1.0);
                // grid motion and the nodal scheme stiffen the shell a little beyond the fixed-grid bound
                explicit_step(method, &f, &x, h, explicit_substeps(method, 2.0 * rho, h))
            }
        };
        if m.scheme() == Scheme::Fvm {
            // The semi-discrete lithium total is exact but nonlinear in r_p, so
            // the step keeps it only to local truncation error. The defect is
            // put back into the front position.
            let radius = m.params.r_s_p;
            let influx = radius * radius * m.params.surface_flux_per_amp(Electrode::Positive) * current;
            let total = |c: &[f64], r: f64| bulk_two_phase(c, &r, *c_core, radius) * radius.powi(3) / 3.0;
            let target = total(&x[..n], x[n]) + influx * h;
            for _ in 0..3 {
                let r = next[n];
                let eps = 1e-6 * (radius - r).min(r.abs()).max(1e-9 * radius);
                let slope = (total(&next[..n], r + eps) - total(&next[..n], r - eps)) / (2.0 * eps);
                let miss = target - total(&next[..n], r);
                if slope == 0.0 || miss.abs() <= 1e-15 * target.abs() {
                    break;
                }
                next[n] = r + miss / slope;
            }
        }
        Ok(next)
    }

    /// Advance the continuous state by `h` at constant current, without
    /// transition handling.
    pub fn advance(&self, state: &FullState, current: f64, h: f64) -> Result<FullState> {
        let negative = self.linear(0, &state.negative, current, h)?;
        let electrolyte = self.linear(2, &state.electrolyte, current, h)?;
        let positive = match &state.positive {
            PositiveState::OnePhase { .. } => state.positive.with_vector(&self.linear(1, &state.positive.vector(), current, h)?),
            two => two.with_vector(&self.two_phase(two, current, h, 0)?),
        };
        let next = FullState { negative, positive, electrolyte, direction: state.direction };
        if !next.is_finite() {
            return Err(ModelError::Numerical("non-finite state".into()));
        }
        Ok(next)
    }

    fn due(&self, state: &FullState, current: f64) -> Option<(EventKind, f64)> {
        event_indicator(self.model, &state.positive, current).filter(|(_, v)| *v >= 0.0)
    }

    fn transition(&self, state: &FullState, kind: EventKind, time: f64) -> Result<(FullState, TransitionEvent)> {
        let m = self.model;
        let before = m.lithium(state).positive;
        let r_p_before = state.positive.r_p();
        let positive = match kind {
            EventKind::EnterTwoPhase => enter_two_phase(m, &state.positive, state.direction, self.config.mass_tol)?,
            EventKind::ExitTwoPhase => exit_two_phase(m, &state.positive, state.direction, self.config.mass_tol)?,
            EventKind::SignFlip => state.positive.clone(),
        };
        let next = FullState { positive, ..state.clone() };
        let event = TransitionEvent {
            time,
            kind,
            pre_mass: before,
            post_mass: m.lithium(&next).positive,
            r_p_before,
            r_p_after: next.positive.r_p(),
        };
        debug!("{kind:?} at t = {time:.3} s, r_p {r_p_before:.4e} -> {:.4e}", event.r_p_after);
        Ok((next, event))
    }

    /// One step of length `h` at constant current starting at time `t`, with
    /// transitions localized by bisection. Returns the new state and the
    /// events that occurred.
    pub fn step(&self, state: &FullState, current: f64, t: f64, h: f64) -> Result<(FullState, Vec<TransitionEvent>)> {
        let mut events = Vec::new();
        let mut state = state.clone();
        if let Some(d) = Direction::from_current(current) {
            if d != state.direction {
                let flipped = apply_sign_flip(&state, current);
                if state.regime().is_two_phase() {
                    let (s, e) = self.transition(&flipped, EventKind::SignFlip, t)?;
                    events.push(e);
                    state = s;
                } else {
                    state = flipped;
                }
            }
        }
        let mut now = t;
        let end = t + h;
        for _ in 0..8 {
            // an event already due at the start of the sub-interval
            if let Some((kind, _)) = self.due(&state, current) {
                let (s, e) = self.transition(&state, kind, now)?;
                events.push(e);
                state = s;
                continue;
            }
            let rest = end - now;
            if rest <= 1e-12 * h.max(1.0) {
                return Ok((state, events));
            }
            let trial = self.advance(&state, current, rest)?;
            let Some((kind, _)) = self.due(&trial, current) else {
                return Ok((trial, events));
            };
            let (mut lo, mut hi) = (0.0, rest);
            let mut at_hi = trial;
            while hi - lo > self.config.event_tol {
                let mid = 0.5 * (lo + hi);
                let s = self.advance(&state, current, mid)?;
                if self.due(&s, current).is_some() {
                    hi = mid;
                    at_hi = s;
                } else {
                    lo = mid;
                }
            }
            now += hi;
            let (s, e) = self.transition(&at_hi, kind, now)?;
            events.push(e);
            state = s;
        }
        Err(ModelError::Numerical(format!("too many transitions within one step at t = {t}")))
    }

    fn record(&self, state: &FullState, time: f64, current: f64, charge: f64, output: OutputSnapshot) -> Record {
        Record {
            time,
            current,
            output,
            regime: state.regime(),
            r_p: state.positive.r_p(),
            lithium: self.model.lithium(state),
            charge,
            state: self.config.store_states.then(|| state.clone()),
        }
    }

    pub fn simulate(&self, profile: &LoadProfile, init: &FullState) -> Result<SimulationResult> {
        self.simulate_from(profile, init, profile.start(), 0.0)
    }

    /// Run the profile from time `t0` (for example a checkpoint) to its end;
    /// `charge0` is the charge already passed at `t0`.
    pub fn simulate_from(
        &self,
        profile: &LoadProfile,
        init: &FullState,
        t0: f64,
        charge0: f64,
    ) -> Result<SimulationResult> {
        let dt = self.config.dt;
        let t_end = profile.end();
        let mut state = init.clone();
        let mut t = t0;
        let mut charge = charge0;
        let mut records = Vec::new();
        let mut events = Vec::new();
        let i0 = profile.current_at(t0);
        let out0 = match self.model.output(&state, i0) {
            Ok(o) => o,
            Err(e) => return Err(e),
        };
        records.push(self.record(&state, t, i0, charge, out0));
        let mut termination = Termination::Completed;
        let mut k: u64 = 0;
        while t < t_end - 1e-9 {
            let current = profile.current_at(t);
            // stay on the dt grid, split at profile breakpoints
            let grid_next = t0 + (k + 1) as f64 * dt;
            let t_next = grid_next.min(profile.next_break(t)).min(t_end);
            let h = t_next - t;
            if t_next >= grid_next - 1e-9 {
                k += 1;
            }
            let (next, evs) = self.step(&state, current, t, h).map_err(|e| match e {
                ModelError::Numerical(detail) => ModelError::Blowup { last_good_time: t, detail },
                other => other,
            })?;
            events.extend(evs);
            state = next;
            charge += current * h;
            t = t_next;
            match self.model.output(&state, current) {
                Ok(out) => {
                    let v = out.v_cell;
                    records.push(self.record(&state, t, current, charge, out));
                    if (current > 0.0 && v < self.config.v_min) || (current < 0.0 && v > self.config.v_max) {
                        termination = Termination::VoltageCutoff;
                        break;
                    }
                }
                Err(e @ (ModelError::Saturation { .. } | ModelError::Domain(_))) => {
                    warn!("stopping at t = {t:.1} s: {e}");
                    termination = Termination::DomainExit(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(SimulationResult { records, events, termination, final_state: state })
    }
}

/// Constant-current cycling between two states of charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleProtocol {
    pub c_rate: f64,
    pub cycles: usize,
    /// Starting (discharged) state of charge; charge comes first.
    pub soc_low: f64,
    pub soc_high: f64,
    /// Rest between halves [s].
    pub rest: f64,
}

impl Default for CycleProtocol {
    fn default() -> Self {
        CycleProtocol { c_rate: 0.25, cycles: 3, soc_low: 0.05, soc_high: 0.95, rest: 0.0 }
    }
}

impl CycleProtocol {
    /// Halves last exactly the time the nominal capacity needs to cover the
    /// SOC span, so every cycle passes the same charge.
    pub fn profile(&self, model: &CellModel) -> Result<LoadProfile> {
        if !(self.c_rate > 0.0) || self.cycles == 0 || !(0.0 <= self.soc_low && self.soc_low < self.soc_high) {
            return Err(ModelError::Config("cycle protocol needs c_rate > 0, cycles >= 1, soc_low < soc_high".into()));
        }
        let half = (self.soc_high - self.soc_low) * 3600.0 / self.c_rate;
        LoadProfile::cc_cycles(model.params.c_rate_current(self.c_rate), half, self.cycles, self.rest)
    }

    pub fn run(&self, sim: &Simulator) -> Result<(SimulationResult, CycleReport)> {
        let init = sim.model.initial_state(self.soc_low, Direction::Charge)?;
        let profile = self.profile(sim.model)?;
        let result = sim.simulate(&profile, &init)?;
        let report = CycleReport::new(&result, &profile, self.cycles);
        Ok((result, report))
    }
}

/// Per-cycle peaks of the electrode bulk lithium and the coulomb audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Largest positive / negative solid lithium [mol] within each cycle.
    pub peak_positive: Vec<f64>,
    pub peak_negative: Vec<f64>,
    /// Largest relative change of a peak between consecutive cycles.
    pub peak_spread: f64,
    pub audit: MassReport,
    pub completed: bool,
}

impl CycleReport {
    pub fn new(result: &SimulationResult, profile: &LoadProfile, cycles: usize) -> Self {
        let period = (profile.end() - profile.start()) / cycles as f64;
        let mut peak_positive = vec![f64::NEG_INFINITY; cycles];
        let mut peak_negative = vec![f64::NEG_INFINITY; cycles];
        for r in &result.records {
            let k = (((r.time - profile.start()) / period) as usize).min(cycles - 1);
            peak_positive[k] = peak_positive[k].max(r.lithium.positive);
            peak_negative[k] = peak_negative[k].max(r.lithium.negative);
        }
        let spread = |v: &[f64]| {
            v.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).fold(0.0, f64::max)
        };
        CycleReport {
            peak_spread: spread(&peak_positive).max(spread(&peak_negative)),
            peak_positive,
            peak_negative,
            audit: mass_audit(result),
            completed: result.termination == Termination::Completed,
        }
    }
}

/// Lithium bookkeeping against coulomb counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    /// `|N(t) - N(0) -+ Q(t)/F| / N(0)` per record.
    pub drift_negative: Vec<f64>,
    pub drift_positive: Vec<f64>,
    /// `|N_e(t) - N_e(0)| / N_e(0)` per record.
    pub drift_electrolyte: Vec<f64>,
    pub max_negative: f64,
    pub max_positive: f64,
    pub max_electrolyte: f64,
}

impl MassReport {
    pub fn max_solid(&self) -> f64 {
        self.max_negative.max(self.max_positive)
    }
}

pub fn mass_audit(result: &SimulationResult) -> MassReport {
    let first = &result.records[0];
    let (n0, p0, e0) = (first.lithium.negative, first.lithium.positive, first.lithium.electrolyte);
    let q0 = first.charge;
    let mut rep = MassReport {
        drift_negative: Vec::with_capacity(result.records.len()),
        drift_positive: Vec::with_capacity(result.records.len()),
        drift_electrolyte: Vec::with_capacity(result.records.len()),
        max_negative: 0.0,
        max_positive: 0.0,
        max_electrolyte: 0.0,
    };
    for r in &result.records {
        let moles = (r.charge - q0) / FARADAY;
        let dn = ((r.lithium.negative - n0) + moles).abs() / n0;
        let dp = ((r.lithium.positive - p0) - moles).abs() / p0;
        let de = (r.lithium.electrolyte - e0).abs() / e0;
        rep.max_negative = rep.max_negative.max(dn);
        rep.max_positive = rep.max_positive.max(dp);
        rep.max_electrolyte = rep.max_electrolyte.max(de);
        rep.drift_negative.push(dn);
        rep.drift_positive.push(dp);
        rep.drift_electrolyte.push(de);
    }
    rep
}

/// One row of the result CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub time_s: f64,
    #[serde(rename = "current_A")]
    pub current_a: f64,
    #[serde(rename = "voltage_V")]
    pub voltage_v: f64,
    pub soc_p: f64,
    pub soc_n: f64,
    pub r_p_over_r: f64,
    pub regime: String,
    pub mass_drift_rel: f64,
}

pub fn result_rows(result: &SimulationResult, model: &CellModel) -> Vec<ResultRow> {
    let audit = mass_audit(result);
    result
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| ResultRow {
            time_s: r.time,
            current_a: r.current,
            voltage_v: r.output.v_cell,
            soc_p: r.output.soc_p,
            soc_n: r.output.soc_n,
            r_p_over_r: r.r_p / model.params.r_s_p,
            regime: r.regime.label().to_string(),
            mass_drift_rel: audit.drift_negative[k].max(audit.drift_positive[k]),
        })
        .collect()
}

pub fn write_result_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["time_s", "current_A", "voltage_V", "soc_p", "soc_n", "r_p_over_R", "regime", "mass_drift_rel"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_result_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if k == 0 {
            continue;
        }
        rows.push(rec.deserialize(None)?);
    }
    Ok(rows)
}

pub fn write_events_csv(path: &Path, events: &[TransitionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "kind", "pre_mass_mol", "post_mass_mol", "r_p_before_m", "r_p_after_m"])?;
    for e in events {
        let kind = match e.kind {
            EventKind::EnterTwoPhase => "enter_two_phase",
            EventKind::ExitTwoPhase => "exit_two_phase",
            EventKind::SignFlip => "sign_flip",
        };
        w.write_record([
            e.time.to_string(),
            kind.to_string(),
            e.pre_mass.to_string(),
            e.post_mass.to_string(),
            e.r_p_before.to_string(),
            e.r_p_after.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiscretizationConfig;
    use approx::assert_relative_eq;

    fn model() -> CellModel {
        CellModel::reference(DiscretizationConfig::default()).unwrap()
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let m = model();
        let sim = Simulator::new(&m, SolverConfig::default()).unwrap();
        for soc in [0.9, 0.5] {
            let s = m.initial_state(soc, Direction::Discharge).unwrap();
            let res = sim.simulate(&LoadProfile::constant(0.0, 50.0).unwrap(), &s).unwrap();
            let v0 = res.records[0].output.v_cell;
            assert!(res.records.iter().all(|r| (r.output.v_cell - v0).abs() < 1e-12));
            assert!(res.events.is_empty());
            assert_eq!(res.records.len(), 51);
        }
    }

    #[test]
    fn euler_negative_step_is_exactly_coulombic() {
        let m = model();
        let cfg = SolverConfig { method: Method::Euler, ..Default::default() };
        let sim = Simulator::new(&m, cfg).unwrap();
        let s = m.initial_state(0.6, Direction::Discharge).unwrap();
        let i = 5.0;
        let next = sim.advance(&s, i, 1.0).unwrap();
        let dn = m.lithium(&next).negative - m.lithium(&s).negative;
        assert_relative_eq!(dn, -i / FARADAY, max_relative = 1e-10);
    }

    #[test]
    fn result_csv_round_trips() {
        let m = model();
        let sim = Simulator::new(&m, SolverConfig::default()).unwrap();
        let s = m.initial_state(0.9, Direction::Discharge).unwrap();
        let res = sim.simulate(&LoadProfile::constant(m.params.c_rate_current(1.0), 20.0).unwrap(), &s).unwrap();
        let rows = result_rows(&res, &m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_result_csv(&path, &rows).unwrap();
        assert_eq!(read_result_csv(&path).unwrap(), rows);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("time_s,current_A,voltage_V,soc_p,soc_n,r_p_over_R,regime,mass_drift_rel\n"));
    }
}
