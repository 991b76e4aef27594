//! Parameter identification: voltage RMSE against measured datasets and a
//! seeded particle-swarm search over a bounded parameter subset.

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell::CellModel;
use crate::error::{ModelError, Result};
use crate::model::DiscretizationConfig;
use crate::ocp::OcpSet;
use crate::par;
use crate::params::{CellParameters, Direction, ParameterSet};
use crate::profile::LoadProfile;
use crate::sim::{Record, Simulator, SolverConfig, Termination};

/// Objective value for candidates that cut off early, leave the domain or
/// fail numerically. Large but finite so the swarm keeps moving.
pub const PENALTY_V: f64 = 10.0;

/// Full-cell vector fitted on the low-rate charge and discharge data.
pub const LAMBDA_C4: [&str; 22] = [
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
];

/// Rate-dependent transport and kinetics, refitted per C-rate.
pub const LAMBDA_C2_1C: [&str; 4] = ["d_s_p", "d_s_n", "k_p", "k_n"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    /// Search in `ln` space (only for strictly positive bounds).
    #[serde(default)]
    pub log: bool,
}

impl Bound {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Bound { lo, hi, log: false }
    }

    /// `value / 10^decades .. value * 10^decades`, searched logarithmically.
    pub fn decades(value: f64, decades: f64) -> Self {
        let f = 10f64.powf(decades);
        Bound { lo: value / f, hi: value * f, log: true }
    }

    fn from_unit(&self, u: f64) -> f64 {
        if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        if self.log {
            (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSubset {
    pub names: Vec<String>,
    pub bounds: Vec<Bound>,
}

impl ParameterSubset {
    pub fn new(names: Vec<String>, bounds: Vec<Bound>) -> Result<Self> {
        let s = ParameterSubset { names, bounds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(ModelError::Usage("parameter subset is empty".into()));
        }
        if self.names.len() != self.bounds.len() {
            return Err(ModelError::Config(format!(
                "{} parameter names but {} bounds",
                self.names.len(),
                self.bounds.len()
            )));
        }
        let probe = CellParameters::lfp_reference();
        for (name, b) in self.names.iter().zip(&self.bounds) {
            probe.get(name)?;
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(ModelError::Config(format!("bounds for {name} must satisfy lo < hi, got [{}, {}]", b.lo, b.hi)));
            }
            if b.log && b.lo <= 0.0 {
                return Err(ModelError::Config(format!("log-scaled bounds for {name} must be positive")));
            }
        }
        let mut seen = self.names.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.names.len() {
            return Err(ModelError::Config("parameter subset has duplicate names".into()));
        }
        Ok(())
    }

    /// Default search box around `base`: stoichiometries +-0.05 inside (0, 1),
    /// porosities +-50% below 1, everything else +-1 decade.
    pub fn around(names: &[&str], base: &CellParameters) -> Result<Self> {
        let mut bounds = Vec::with_capacity(names.len());
        for name in names {
            let v = base.get(name)?;
            let b = if name.starts_with("theta_") {
                Bound::linear((v - 0.05).max(1e-4), (v + 0.05).min(1.0 - 1e-4))
            } else if name.starts_with("eps_") {
                Bound::linear(0.5 * v, (1.5 * v).min(0.99))
            } else {
                Bound::decades(v, 1.0)
            };
            bounds.push(b);
        }
        ParameterSubset::new(names.iter().map(|s| s.to_string()).collect(), bounds)
    }

    pub fn preset(name: &str, base: &CellParameters) -> Result<Self> {
        match name {
            "c4" | "lambda_c4" => ParameterSubset::around(&LAMBDA_C4, base),
            "c2-1c" | "lambda_c2_1c" => ParameterSubset::around(&LAMBDA_C2_1C, base),
            other => Err(ModelError::Usage(format!("unknown parameter preset '{other}' (expected c4 or c2-1c)"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn apply_unit(&self, base: &CellParameters, u: &[f64]) -> Result<CellParameters> {
        let mut p = base.clone();
        for ((name, b), &x) in self.names.iter().zip(&self.bounds).zip(u) {
            p.set(name, b.from_unit(x))?;
        }
        Ok(p)
    }
}

/// Measured voltage on the profile's timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub profile: LoadProfile,
    pub voltage: Vec<f64>,
    pub direction: Direction,
    #[serde(default)]
    pub c_rate_label: Option<String>,
    /// Defaults to empty (0) for charge data and full (1) for discharge data.
    #[serde(default)]
    pub initial_soc: Option<f64>,
}

impl Dataset {
    pub fn new(
        profile: LoadProfile,
        voltage: Vec<f64>,
        direction: Direction,
        c_rate_label: Option<String>,
        initial_soc: Option<f64>,
    ) -> Result<Self> {
        let d = Dataset { profile, voltage, direction, c_rate_label, initial_soc };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.voltage.len() != self.profile.samples().len() {
            return Err(ModelError::Config(format!(
                "dataset has {} voltages for {} timestamps",
                self.voltage.len(),
                self.profile.samples().len()
            )));
        }
        if let Some(v) = self.voltage.iter().find(|v| !(1.5..=4.0).contains(*v)) {
            return Err(ModelError::Config(format!("measured voltage {v} V outside [1.5, 4.0] V")));
        }
        if let Some(s) = self.initial_soc {
            if !(0.0..=1.0).contains(&s) {
                return Err(ModelError::Config(format!("initial SOC {s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn initial_soc(&self) -> f64 {
        self.initial_soc.unwrap_or(match self.direction {
            Direction::Charge => 0.0,
            Direction::Discharge => 1.0,
        })
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.profile.samples().iter().map(|s| s.0)
    }

    /// `time_s,current_A,voltage_V`.
    pub fn read_csv(path: &Path, direction: Direction, c_rate_label: Option<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut samples = Vec::new();
        let mut voltage = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| ModelError::Config(format!("{}:{}: expected time_s,current_A,voltage_V", path.display(), line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| ModelError::Config(format!("{}:{}: {e}", path.display(), line + 2)))
            };
            samples.push((field(0)?, field(1)?));
            voltage.push(field(2)?);
        }
        Dataset::new(LoadProfile::new(samples)?, voltage, direction, c_rate_label, None)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_s", "current_A", "voltage_V"])?;
        for ((t, i), v) in self.profile.samples().iter().zip(&self.voltage) {
            w.write_record([t.to_string(), i.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear interpolation of the simulated cell voltage at `t`; `None` past the end.
fn voltage_at(records: &[Record], t: f64) -> Option<f64> {
    let k = records.partition_point(|r| r.time < t - 1e-9);
    let hi = records.get(k)?;
    if (hi.time - t).abs() <= 1e-9 || k == 0 {
        return Some(hi.output.v_cell);
    }
    let lo = &records[k - 1];
    let w = (t - lo.time) / (hi.time - lo.time);
    Some(lo.output.v_cell + w * (hi.output.v_cell - lo.output.v_cell))
}

/// Simulated voltage on the dataset timestamps, or `None` when the run does
/// not cover them (early cutoff, domain exit, numerical failure).
pub fn simulated_voltage(model: &CellModel, dataset: &Dataset, solver: &SolverConfig) -> Option<Vec<f64>> {
    let solver = SolverConfig { store_states: false, ..solver.clone() };
    let sim = Simulator::new(model, solver).ok()?;
    let init = model.initial_state(dataset.initial_soc(), dataset.direction).ok()?;
    let res = match sim.simulate(&dataset.profile, &init) {
        Ok(r) => r,
        Err(e) => {
            debug!("candidate failed: {e}");
            return None;
        }
    };
    if res.termination != Termination::Completed {
        return None;
    }
    dataset.timestamps().map(|t| voltage_at(&res.records, t)).collect()
}

/// Root-mean-square voltage error [V]; [`PENALTY_V`] when the simulation does
/// not reach the end of the dataset.
pub fn voltage_rmse(model: &CellModel, dataset: &Dataset, solver: &SolverConfig) -> f64 {
    match simulated_voltage(model, dataset, solver) {
        Some(v) => {
            let sse: f64 = v.iter().zip(&dataset.voltage).map(|(a, b)| (a - b).powi(2)).sum();
            (sse / v.len() as f64).sqrt()
        }
        None => PENALTY_V,
    }
}

/// Simulate `profile` and sample the voltage on its timestamps, with optional
/// Gaussian measurement noise.
pub fn synthesize(
    model: &CellModel,
    profile: &LoadProfile,
    direction: Direction,
    c_rate_label: Option<String>,
    solver: &SolverConfig,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut d = Dataset {
        profile: profile.clone(),
        voltage: vec![],
        direction,
        c_rate_label,
        initial_soc: None,
    };
    let mut v = simulated_voltage(model, &d, solver)
        .ok_or_else(|| ModelError::Domain("synthetic run did not cover the whole profile".into()))?;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_std).map_err(|e| ModelError::Config(e.to_string()))?;
        for x in &mut v {
            *x += noise.sample(&mut rng);
        }
    }
    d.voltage = v;
    d.validate()?;
    Ok(d)
}

/// Everything needed to score a candidate parameter vector.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub base: &'a CellParameters,
    pub ocp: &'a OcpSet,
    pub disc: DiscretizationConfig,
    pub solver: SolverConfig,
    pub datasets: &'a [Dataset],
    pub subset: &'a ParameterSubset,
}

impl Problem<'_> {
    /// Per-dataset RMSE for a full parameter set.
    pub fn rmse(&self, params: &CellParameters) -> Vec<f64> {
        match CellModel::new(params.clone(), self.disc.clone(), self.ocp.clone()) {
            Ok(m) => self.datasets.iter().map(|d| voltage_rmse(&m, d, &self.solver)).collect(),
            Err(_) => vec![PENALTY_V; self.datasets.len()],
        }
    }

    fn objective(&self, u: &[f64]) -> f64 {
        match self.subset.apply_unit(self.base, u) {
            Ok(p) => self.rmse(&p).iter().sum(),
            Err(_) => PENALTY_V * self.datasets.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Stop after this many generations without a meaningful improvement of
    /// the best objective (`None` always spends the whole budget).
    pub patience: Option<usize>,
    /// Improvements below `ftol_abs + ftol_rel * best` do not count.
    pub ftol_abs: f64,
    pub ftol_rel: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm: 20,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            patience: Some(12),
            ftol_abs: 1e-6,
            ftol_rel: 1e-3,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm == 0 {
            return Err(ModelError::Config("swarm size must be >= 1".into()));
        }
        if [self.inertia, self.cognitive, self.social, self.ftol_abs, self.ftol_rel].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::Config("swarm coefficients must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: BTreeMap<String, f64>,
    /// Sum of the per-dataset RMSEs at the best point [V].
    pub best_rmse: f64,
    pub dataset_rmse: Vec<f64>,
    pub evaluations: usize,
    pub seed: u64,
    pub budget: usize,
    /// Best-so-far objective after each evaluation.
    pub trace: Vec<f64>,
}

impl FitResult {
    /// `base` with the fitted values substituted; every other field untouched.
    pub fn apply(&self, base: &CellParameters) -> Result<CellParameters> {
        let mut p = base.clone();
        for (name, v) in &self.values {
            p.set(name, *v)?;
        }
        Ok(p)
    }
}

struct Particle {
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best_f: f64,
}

/// Seeded particle-swarm minimisation of the summed RMSE over the unit box,
/// mapped onto the subset's bounds, with reflection at the walls. At most
/// `budget` objective evaluations; each generation is evaluated in parallel.
pub fn identify(problem: &Problem, seed: u64, budget: usize, pso: &PsoConfig) -> Result<FitResult> {
    if problem.datasets.is_empty() {
        return Err(ModelError::Usage("identification needs at least one dataset".into()));
    }
    if budget == 0 {
        return Err(ModelError::Usage("evaluation budget must be >= 1".into()));
    }
    problem.subset.validate()?;
    pso.validate()?;
    for d in problem.datasets {
        d.validate()?;
    }
    let dim = problem.subset.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swarm: Vec<Particle> = (0..pso.swarm)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
            Particle { best_x: x.clone(), x, v, best_f: f64::INFINITY }
        })
        .collect();

    let mut trace = Vec::with_capacity(budget);
    let mut best_f = f64::INFINITY;
    let mut best_x = swarm[0].x.clone();
    let mut stale = 0usize;
    let mut generation = 0usize;
    while trace.len() < budget {
        if generation > 0 {
            for p in swarm.iter_mut() {
                for d in 0..dim {
                    let (r1, r2) = (rng.gen::<f64>(), rng.gen::<f64>());
                    let v = pso.inertia * p.v[d]
                        + pso.cognitive * r1 * (p.best_x[d] - p.x[d])
                        + pso.social * r2 * (best_x[d] - p.x[d]);
                    let v = v.clamp(-0.5, 0.5);
                    let mut x = p.x[d] + v;
                    let mut v = v;
                    // reflect off the walls of the unit box
                    if x < 0.0 {
                        x = -x;
                        v = -v;
                    } else if x > 1.0 {
                        x = 2.0 - x;
                        v = -v;
                    }
                    p.x[d] = x.clamp(0.0, 1.0);
                    p.v[d] = v;
                }
            }
        }
        let take = pso.swarm.min(budget - trace.len());
        let positions: Vec<Vec<f64>> = swarm[..take].iter().map(|p| p.x.clone()).collect();
        let values = par::map(&positions, |u| problem.objective(u));
        let before = best_f;
        for (p, f) in swarm[..take].iter_mut().zip(values) {
            if f < p.best_f {
                p.best_f = f;
                p.best_x = p.x.clone();
            }
            if f < best_f {
                best_f = f;
                best_x = p.x.clone();
            }
            trace.push(best_f);
        }
        generation += 1;
        debug!("generation {generation}: best {best_f:.6e} after {} evaluations", trace.len());
        if before.is_finite() && before - best_f <= pso.ftol_abs + pso.ftol_rel * best_f {
            stale += 1;
        } else {
            stale = 0;
        }
        if pso.patience.is_some_and(|n| stale >= n) {
            info!("swarm stalled after {generation} generations");
            break;
        }
    }

    let best = problem.subset.apply_unit(problem.base, &best_x)?;
    let dataset_rmse = problem.rmse(&best);
    let values = problem
        .subset
        .names
        .iter()
        .map(|n| Ok((n.clone(), best.get(n)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(FitResult {
        names: problem.subset.names.clone(),
        values,
        best_rmse: best_f,
        dataset_rmse,
        evaluations: trace.len(),
        seed,
        budget,
        trace,
    })
}

/// Fitted values written back into a parameter file: the rate-dependent
/// names go into the `rate` column when it exists, everything else into the
/// base cell parameters.
pub fn update_parameter_set(set: &ParameterSet, rate: Option<&str>, values: &BTreeMap<String, f64>) -> Result<ParameterSet> {
    let mut out = set.clone();
    for (name, &v) in values {
        let column = rate.and_then(|r| out.rates.get_mut(r));
        match (name.as_str(), column) {
            ("d_s_p", Some(c)) => c.d_s_p = v,
            ("d_s_n", Some(c)) => c.d_s_n = v,
            ("k_p", Some(c)) => c.k_p = v,
            ("k_n", Some(c)) => c.k_n = v,
            _ => out.cell.set(name, v)?,
        }
    }
    Ok(out)
}

/// Unit-box coordinates of `params` within `subset` (outside values clamp).
pub fn unit_coordinates(subset: &ParameterSubset, params: &CellParameters) -> Result<Vec<f64>> {
    subset
        .names
        .iter()
        .zip(&subset.bounds)
        .map(|(n, b)| Ok(b.to_unit(params.get(n)?).clamp(0.0, 1.0)))
        .collect()
}
