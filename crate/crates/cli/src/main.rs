//! `coreshell` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 missing file, 4 invalid configuration,
//! 5 simulation failure, 6 other I/O. Failures print one JSON error record
//! on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use coreshell::identify::{self, Dataset, ParameterSubset, Problem};
use coreshell::io::{write_json, LoadedConfig, RunConfig};
use coreshell::model::Scheme;
use coreshell::observability::{self, cond_stats, CondStats, ObservabilityPoint};
use coreshell::profile::LoadProfile;
use coreshell::sim::{self, CycleProtocol, MassReport, SimulationResult, Simulator};
use coreshell::{Direction, ModelError, Result};

#[derive(Parser, Debug)]
#[command(name = "coreshell", version, about = "Core-shell LFP single particle model")]
struct Cli {
    /// Run configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a load profile: result CSV, event log and summary.
    Simulate {
        #[arg(long)]
        profile: PathBuf,
        /// Initial SOC; empty for charging profiles, full otherwise.
        #[arg(long)]
        soc0: Option<f64>,
        /// Rate-dependent parameter column; nearest to the profile's first current by default.
        #[arg(long)]
        rate: Option<String>,
    },
    /// Constant-current cycling with a lithium audit.
    Cycle {
        #[arg(long = "crate", default_value_t = 0.25)]
        c_rate: f64,
        #[arg(long, default_value_t = 3)]
        cycles: usize,
        #[arg(long, default_value_t = 0.05)]
        soc_low: f64,
        #[arg(long, default_value_t = 0.95)]
        soc_high: f64,
        /// Rest between half cycles [s].
        #[arg(long, default_value_t = 0.0)]
        rest: f64,
    },
    /// Observability sweep of the positive electrode along a profile.
    Observe {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        nr: Option<usize>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        soc0: Option<f64>,
        #[arg(long)]
        rate: Option<String>,
    },
    /// Fit a parameter subset to measured voltage.
    Identify {
        /// Comma-separated dataset CSVs (time_s,current_A,voltage_V).
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = "c2-1c")]
        subset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long)]
        rate: Option<String>,
    },
    /// FVM vs FDM: voltage, lithium drift and conditioning tables.
    CompareScheme {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        soc0: Option<f64>,
        #[arg(long)]
        rate: Option<String>,
    },
    /// Synthetic measurement: simulate a profile and add voltage noise.
    Synthesize {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        soc0: Option<f64>,
        #[arg(long)]
        rate: Option<String>,
        /// Noise standard deviation [mV].
        #[arg(long, default_value_t = 0.0)]
        noise_mv: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn fail(kind: &str, message: String, code: i32) -> ExitCode {
    let rec = ErrorRecord { error: kind, message, exit_code: code };
    eprintln!("{}", serde_json::to_string(&rec).unwrap_or_default());
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string().trim().to_string(), 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), e.exit_code()),
    }
}

/// Everything is loaded and validated before the output directory is touched.
fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.config.output_dir.clone())
        .ok_or_else(|| ModelError::Usage("no output directory: pass --out or set output_dir".into()))?;
    match cli.command {
        Command::Simulate { profile, soc0, rate } => simulate(&cfg, &profile, soc0, rate, &out),
        Command::Cycle { c_rate, cycles, soc_low, soc_high, rest } => {
            let proto = CycleProtocol { c_rate, cycles, soc_low, soc_high, rest };
            cycle(&cfg, &proto, &out)
        }
        Command::Observe { profile, nr, scheme, soc0, rate } => observe(&cfg, &profile, nr, scheme, soc0, rate, &out),
        Command::Identify { data, subset, seed, budget, rate } => fit(&cfg, &data, &subset, seed, budget, rate, &out),
        Command::CompareScheme { profile, soc0, rate } => compare(&cfg, &profile, soc0, rate, &out),
        Command::Synthesize { profile, soc0, rate, noise_mv, seed } => synthesize(&cfg, &profile, soc0, rate, noise_mv, seed, &out),
    }
}

fn read_profile(path: &Path) -> Result<LoadProfile> {
    if !path.is_file() {
        return Err(ModelError::MissingFile(path.display().to_string()));
    }
    LoadProfile::read_csv(path)
}

fn first_current(profile: &LoadProfile) -> f64 {
    profile.samples().iter().map(|s| s.1).find(|i| *i != 0.0).unwrap_or(0.0)
}

/// Direction, initial SOC and rate label for a profile.
struct Start {
    direction: Direction,
    soc0: f64,
    rate: Option<String>,
}

fn start_for(cfg: &LoadedConfig, profile: &LoadProfile, soc0: Option<f64>, rate: Option<String>) -> Result<Start> {
    let i = first_current(profile);
    let direction = Direction::from_current(i).unwrap_or(Direction::Discharge);
    let soc0 = soc0.unwrap_or(match direction {
        Direction::Charge => 0.0,
        Direction::Discharge => 1.0,
    });
    if !(0.0..=1.0).contains(&soc0) {
        return Err(ModelError::Config(format!("initial SOC {soc0} outside [0, 1]")));
    }
    let rate = rate.or_else(|| cfg.config.rate.clone()).or_else(|| cfg.nearest_rate(i));
    if let Some(r) = &rate {
        if !cfg.parameters.rates.contains_key(r) {
            return Err(ModelError::Config(format!("rate '{r}' has no parameter column")));
        }
    }
    Ok(Start { direction, soc0, rate })
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn run_profile(cfg: &LoadedConfig, model: &coreshell::cell::CellModel, profile: &LoadProfile, start: &Start) -> Result<SimulationResult> {
    let sim = Simulator::new(model, cfg.config.solver.clone())?;
    let init = model.initial_state(start.soc0, start.direction)?;
    sim.simulate(profile, &init)
}

#[derive(Serialize)]
struct RunSummary {
    termination: sim::Termination,
    rate: Option<String>,
    final_time_s: f64,
    final_voltage_v: f64,
    final_soc_p: f64,
    transitions: usize,
    max_drift_negative: f64,
    max_drift_positive: f64,
    max_drift_electrolyte: f64,
}

fn summary(result: &SimulationResult, audit: &MassReport, rate: Option<String>) -> RunSummary {
    let last = result.records.last().expect("at least the initial record");
    RunSummary {
        termination: result.termination.clone(),
        rate,
        final_time_s: last.time,
        final_voltage_v: last.output.v_cell,
        final_soc_p: last.output.soc_p,
        transitions: result.events.len(),
        max_drift_negative: audit.max_negative,
        max_drift_positive: audit.max_positive,
        max_drift_electrolyte: audit.max_electrolyte,
    }
}

fn simulate(cfg: &LoadedConfig, profile: &Path, soc0: Option<f64>, rate: Option<String>, out: &Path) -> Result<()> {
    let profile = read_profile(profile)?;
    let start = start_for(cfg, &profile, soc0, rate)?;
    let model = cfg.model(start.rate.as_deref())?;
    let result = run_profile(cfg, &model, &profile, &start)?;
    prepare_out(out)?;
    sim::write_result_csv(&out.join("result.csv"), &sim::result_rows(&result, &model))?;
    sim::write_events_csv(&out.join("events.csv"), &result.events)?;
    let audit = sim::mass_audit(&result);
    write_json(&out.join("summary.json"), &summary(&result, &audit, start.rate))?;
    info!("simulate: {:?} after {} records", result.termination, result.records.len());
    completed(&result)
}

/// A run that left the physical domain has written its partial output but
/// still fails the command.
fn completed(result: &SimulationResult) -> Result<()> {
    match &result.termination {
        sim::Termination::DomainExit(why) => {
            let t = result.records.last().map_or(0.0, |r| r.time);
            Err(ModelError::Domain(format!("run stopped at t = {t} s: {why}")))
        }
        _ => Ok(()),
    }
}

fn cycle(cfg: &LoadedConfig, proto: &CycleProtocol, out: &Path) -> Result<()> {
    let rate = cfg.config.rate.clone().or_else(|| cfg.nearest_rate(cfg.parameters.cell.c_rate_current(proto.c_rate)));
    let model = cfg.model(rate.as_deref())?;
    let sim = Simulator::new(&model, cfg.config.solver.clone())?;
    let (result, report) = proto.run(&sim)?;
    prepare_out(out)?;
    sim::write_result_csv(&out.join("result.csv"), &sim::result_rows(&result, &model))?;
    sim::write_events_csv(&out.join("events.csv"), &result.events)?;
    write_json(&out.join("cycle_report.json"), &report)?;
    completed(&result)
}

#[derive(Serialize)]
struct SweepSummary {
    scheme: Scheme,
    n_r: usize,
    points: usize,
    rank_deficient: usize,
    log10_cond: CondStats,
}

fn sweep_summary(points: &[ObservabilityPoint], scheme: Scheme, n_r: usize) -> SweepSummary {
    SweepSummary {
        scheme,
        n_r,
        points: points.len(),
        rank_deficient: points.iter().filter(|p| p.rank < p.full_rank_needed).count(),
        log10_cond: cond_stats(points),
    }
}

fn observe(
    cfg: &LoadedConfig,
    profile: &Path,
    nr: Option<usize>,
    scheme: Option<Scheme>,
    soc0: Option<f64>,
    rate: Option<String>,
    out: &Path,
) -> Result<()> {
    let profile = read_profile(profile)?;
    let start = start_for(cfg, &profile, soc0, rate)?;
    let mut disc = cfg.config.discretization.clone();
    disc.n_r = nr.unwrap_or(disc.n_r);
    disc.scheme = scheme.unwrap_or(disc.scheme);
    let model = cfg.model_with(start.rate.as_deref(), disc.clone())?;
    let result = run_profile(cfg, &model, &profile, &start)?;
    let points = observability::sweep(&model, &result, Some(&profile), &cfg.config.observability)?;
    prepare_out(out)?;
    observability::write_sweep_csv(&out.join("observability.csv"), &points)?;
    write_json(&out.join("observability_summary.json"), &sweep_summary(&points, disc.scheme, disc.n_r))?;
    completed(&result)
}

fn read_dataset(cfg: &LoadedConfig, path: &Path) -> Result<Dataset> {
    if !path.is_file() {
        return Err(ModelError::MissingFile(path.display().to_string()));
    }
    // direction and rate from the data itself; refined below
    let mut d = Dataset::read_csv(path, Direction::Discharge, None)?;
    let i = first_current(&d.profile);
    d.direction = Direction::from_current(i).unwrap_or(Direction::Discharge);
    d.c_rate_label = cfg.nearest_rate(i);
    Ok(d)
}

#[derive(Serialize)]
struct FitReport<'a> {
    subset: &'a str,
    rate: Option<String>,
    datasets: Vec<String>,
    #[serde(flatten)]
    fit: &'a identify::FitResult,
}

fn fit(cfg: &LoadedConfig, data: &[PathBuf], subset: &str, seed: u64, budget: usize, rate: Option<String>, out: &Path) -> Result<()> {
    if data.is_empty() {
        return Err(ModelError::Usage("identify needs at least one --data file".into()));
    }
    if budget == 0 {
        return Err(ModelError::Usage("--budget must be >= 1".into()));
    }
    let datasets = data.iter().map(|p| read_dataset(cfg, p)).collect::<Result<Vec<_>>>()?;
    let rate = rate.or_else(|| cfg.config.rate.clone()).or_else(|| datasets[0].c_rate_label.clone());
    let base = cfg.parameters.for_rate(rate.as_deref());
    let subset_def = ParameterSubset::preset(subset, &base)?;
    let problem = Problem {
        base: &base,
        ocp: &cfg.ocp,
        disc: cfg.config.discretization.clone(),
        solver: cfg.config.solver.clone(),
        datasets: &datasets,
        subset: &subset_def,
    };
    let result = identify::identify(&problem, seed, budget, &cfg.config.optimizer)?;
    let fitted = identify::update_parameter_set(&cfg.parameters, rate.as_deref(), &result.values)?;
    prepare_out(out)?;
    let report = FitReport {
        subset,
        rate: rate.clone(),
        datasets: data.iter().map(|p| p.display().to_string()).collect(),
        fit: &result,
    };
    write_json(&out.join("fit.json"), &report)?;
    write_json(&out.join("parameters.json"), &fitted)?;
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    voltage_rmse_between_v: f64,
    fvm: RunSummary,
    fdm: RunSummary,
    conditioning: Vec<SweepSummary>,
}

fn compare(cfg: &LoadedConfig, profile: &Path, soc0: Option<f64>, rate: Option<String>, out: &Path) -> Result<()> {
    let profile = read_profile(profile)?;
    let start = start_for(cfg, &profile, soc0, rate)?;
    let mut runs = Vec::new();
    for scheme in [Scheme::Fvm, Scheme::Fdm] {
        let mut disc = cfg.config.discretization.clone();
        disc.scheme = scheme;
        let model = cfg.model_with(start.rate.as_deref(), disc.clone())?;
        let result = run_profile(cfg, &model, &profile, &start)?;
        let points = observability::sweep(&model, &result, Some(&profile), &cfg.config.observability)?;
        let rows = sim::result_rows(&result, &model);
        runs.push((disc, result, rows, points));
    }
    let (fvm, fdm) = (&runs[0], &runs[1]);
    // both runs share the dt grid; compare over the common span
    let n = fvm.2.len().min(fdm.2.len());
    let sse: f64 = (0..n).map(|k| (fvm.2[k].voltage_v - fdm.2[k].voltage_v).powi(2)).sum();
    prepare_out(out)?;
    {
        let mut w = csv::Writer::from_path(out.join("voltage.csv")).map_err(ModelError::from)?;
        w.write_record(["time_s", "voltage_fvm_V", "voltage_fdm_V", "difference_V"]).map_err(ModelError::from)?;
        for k in 0..n {
            let (a, b) = (&fvm.2[k], &fdm.2[k]);
            w.write_record([a.time_s.to_string(), a.voltage_v.to_string(), b.voltage_v.to_string(), (a.voltage_v - b.voltage_v).to_string()])
                .map_err(ModelError::from)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.join("mass_drift.csv")).map_err(ModelError::from)?;
        w.write_record(["time_s", "mass_drift_fvm", "mass_drift_fdm"]).map_err(ModelError::from)?;
        for k in 0..n {
            w.write_record([fvm.2[k].time_s.to_string(), fvm.2[k].mass_drift_rel.to_string(), fdm.2[k].mass_drift_rel.to_string()])
                .map_err(ModelError::from)?;
        }
        w.flush()?;
    }
    let conditioning: Vec<SweepSummary> = runs.iter().map(|r| sweep_summary(&r.3, r.0.scheme, r.0.n_r)).collect();
    {
        let mut w = csv::Writer::from_path(out.join("conditioning.csv")).map_err(ModelError::from)?;
        w.write_record(["scheme", "n_r", "points", "rank_deficient", "mean_log10_cond", "median_log10_cond", "std_log10_cond"])
            .map_err(ModelError::from)?;
        for c in &conditioning {
            w.write_record([
                format!("{:?}", c.scheme).to_lowercase(),
                c.n_r.to_string(),
                c.points.to_string(),
                c.rank_deficient.to_string(),
                c.log10_cond.mean.to_string(),
                c.log10_cond.median.to_string(),
                c.log10_cond.std.to_string(),
            ])
            .map_err(ModelError::from)?;
        }
        w.flush()?;
    }
    let s = CompareSummary {
        voltage_rmse_between_v: if n > 0 { (sse / n as f64).sqrt() } else { 0.0 },
        fvm: summary(&fvm.1, &sim::mass_audit(&fvm.1), start.rate.clone()),
        fdm: summary(&fdm.1, &sim::mass_audit(&fdm.1), start.rate.clone()),
        conditioning,
    };
    write_json(&out.join("comparison.json"), &s)?;
    completed(&runs[0].1).and(completed(&runs[1].1))
}

fn synthesize(
    cfg: &LoadedConfig,
    profile: &Path,
    soc0: Option<f64>,
    rate: Option<String>,
    noise_mv: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if !(noise_mv >= 0.0 && noise_mv.is_finite()) {
        return Err(ModelError::Usage(format!("--noise-mv must be >= 0, got {noise_mv}")));
    }
    let profile = read_profile(profile)?;
    let start = start_for(cfg, &profile, soc0, rate)?;
    let model = cfg.model(start.rate.as_deref())?;
    let mut d = identify::synthesize(&model, &profile, start.direction, start.rate.clone(), &cfg.config.solver, noise_mv * 1e-3, seed)?;
    d.initial_soc = Some(start.soc0);
    prepare_out(out)?;
    d.write_csv(&out.join("dataset.csv"))?;
    Ok(())
}
