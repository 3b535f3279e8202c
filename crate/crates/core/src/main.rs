use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use feedertune::estimator::{Estimator, EstimatorOptions, NamedBound};
use feedertune::ingest::{self, MeasurementSet, VoltageRecord};
use feedertune::netmodel::NetworkModel;
use feedertune::oracle::{self, AngleMode, HourProfile, PfOptions, PowerFlow, SubstationRecord};
use feedertune::report::{self, ReportInputs, StateSummary};
use feedertune::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "feedertune", version, about = "Feeder model enhancement from AMI and DAS data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Topology JSON document.
    #[arg(long, global = true)]
    topology: Option<PathBuf>,
    /// Directory holding ami_energy.csv, ami_voltage.csv and das.csv.
    #[arg(long, global = true)]
    measurements: Option<PathBuf>,
    /// Output directory (also the input directory of pf, compare and report).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON options file (synthesis or estimator options).
    #[arg(long, global = true)]
    options: Option<PathBuf>,
    /// Seed for `synth`; overrides the seed in the options file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Hours to process: `0..23`, `7`, or `6,7,18`.
    #[arg(long, global = true, default_value = "0..23")]
    hours: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feeder, its true day and measurement files.
    Synth,
    /// Validate measurement files and write the per-hour measurement sets.
    Ingest,
    /// Estimate unmetered loads and the substation state hour by hour.
    Estimate,
    /// Re-solve the exported profiles with the Newton power flow.
    Pf {
        /// How source angles are chosen for each hour.
        #[arg(long, value_enum, default_value_t = Angles::PerHour)]
        angles: Angles,
    },
    /// Compare estimated and power-flow states.
    Compare,
    /// Write the full validation report.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Angles {
    /// Each hour uses its own estimated angles.
    PerHour,
    /// Every hour uses the angles of the peak hour.
    Peak,
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Validation(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let hours = parse_hours(&g.hours)?;
    match &cli.command {
        Command::Synth => synth_cmd(g),
        Command::Ingest => {
            let net = load_network(g)?;
            let (set, _) = load_measurements(g, &net, &hours)?;
            let anomalies: usize = set.hours.iter().map(|h| h.anomalies.len()).sum();
            write(&g.out, "measurements.json", &pretty(&set.to_json(&net)))?;
            println!("{} hours ingested, {anomalies} anomalies", set.hours.len());
            Ok(())
        }
        Command::Estimate => estimate_cmd(g, &hours),
        Command::Pf { angles } => pf_cmd(g, *angles),
        Command::Compare => compare_cmd(g),
        Command::Report => report_cmd(g, &hours),
    }
}

fn parse_hours(s: &str) -> Result<Vec<u32>> {
    let bad = || Failure::Validation(format!("invalid --hours `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.iter().any(|&h| h > 23) {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn load_network(g: &Global) -> Result<NetworkModel> {
    let path = g.topology.as_ref().ok_or_else(|| Failure::Validation("--topology is required".into()))?;
    Ok(NetworkModel::from_json(&read(path)?)?)
}

fn load_measurements(g: &Global, net: &NetworkModel, hours: &[u32]) -> Result<(MeasurementSet, Vec<VoltageRecord>)> {
    let dir = g.measurements.as_ref().ok_or_else(|| Failure::Validation("--measurements is required".into()))?;
    let energy = ingest::parse_energy_csv(&read(&dir.join("ami_energy.csv"))?)?;
    let voltage = ingest::parse_voltage_csv(&read(&dir.join("ami_voltage.csv"))?)?;
    let das = ingest::parse_das_csv(&read(&dir.join("das.csv"))?)?;
    let set = ingest::build_measurement_set(net, &energy, &voltage, &das, hours)?;
    Ok((set, voltage))
}

fn synth_cmd(g: &Global) -> Result<()> {
    let mut cfg = match &g.options {
        Some(p) => serde_json::from_str::<SynthConfig>(&read(p)?)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let out = match synth::generate(&cfg) {
        Ok(o) => o,
        Err(e @ synth::SynthError::NonConvergent { .. }) => return Err(Failure::Solver(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    out.write_to(&g.out)?;
    println!(
        "{} buses, {} loads, {} PV units written to {}",
        out.network.buses.len(),
        out.network.loads.len(),
        out.network.pvs.len(),
        g.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct HourStatus {
    hour: u32,
    status: String,
    iterations: usize,
    objective: f64,
    kkt_residual: f64,
    constraint_residual: f64,
    head_residual_p_pu: f64,
    head_residual_q_pu: f64,
    worst_constraint: Option<String>,
    bounds: Vec<NamedBound>,
}

fn estimate_cmd(g: &Global, hours: &[u32]) -> Result<()> {
    let net = load_network(g)?;
    let (set, _) = load_measurements(g, &net, hours)?;
    let opts = match &g.options {
        Some(p) => EstimatorOptions::from_json(&read(p)?)?,
        None => EstimatorOptions::default(),
    };
    let est = Estimator::new(&net);
    let day = est.solve_day(&set, &opts);

    let mut status = Vec::new();
    let mut errors = Vec::new();
    for (h, r) in &day.hours {
        match r {
            Ok(s) => {
                let meas = set.hour(*h).expect("solved hours come from the set");
                let bounds = est.problem(meas, &opts).map(|p| p.bounds_report()).unwrap_or_default();
                status.push(HourStatus {
                    hour: *h,
                    status: format!("{:?}", s.status),
                    iterations: s.iterations,
                    objective: s.objective,
                    kkt_residual: s.kkt_residual,
                    constraint_residual: s.constraint_residual_inf,
                    head_residual_p_pu: s.head_residual.p,
                    head_residual_q_pu: s.head_residual.q,
                    worst_constraint: s.worst_constraint.clone(),
                    bounds,
                });
            }
            Err(e) => errors.push(format!("hour {h}: {e}")),
        }
    }
    if !errors.is_empty() {
        return Err(Failure::Validation(errors.join("; ")));
    }
    let states: Vec<StateSummary> = day.optimal().iter().map(|s| StateSummary::from_estimate(&net, est.layout(), s)).collect();
    write(&g.out, "profiles.csv", &day.profiles_csv(&net))?;
    write(&g.out, "substation.csv", &day.substation_csv())?;
    write(&g.out, "estimate_states.json", &pretty(&states))?;
    write(&g.out, "estimate_status.json", &pretty(&status))?;
    let failures = day.failures();
    write(&g.out, "estimate_failures.json", &pretty(&failures))?;
    println!("{} of {} hours estimated", states.len(), day.hours.len());
    if failures.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = failures.iter().map(|(h, why)| format!("hour {h}: {why}")).collect();
        Err(Failure::Solver(list.join("; ")))
    }
}

fn read_estimate(g: &Global, net: &NetworkModel) -> Result<(Vec<HourProfile>, Vec<SubstationRecord>)> {
    let profiles = oracle::read_profiles(net, &read(&g.out.join("profiles.csv"))?)?;
    let subs = oracle::read_substation(&read(&g.out.join("substation.csv"))?)?;
    Ok((profiles, subs))
}

fn pf_cmd(g: &Global, angles: Angles) -> Result<()> {
    let net = load_network(g)?;
    let (profiles, subs) = read_estimate(g, &net)?;
    let mode = match angles {
        Angles::PerHour => AngleMode::PerHour,
        Angles::Peak => AngleMode::Constant {
            reference_hour: oracle::peak_hour(&subs).ok_or_else(|| Failure::Validation("substation.csv is empty".into()))?,
        },
    };
    let vmag: Vec<(u32, [f64; 3])> = profiles.iter().map(|p| (p.hour, p.src_vmag)).collect();
    let schedule = oracle::source_schedule(&vmag, &subs, mode)?;
    let inputs: Vec<oracle::HourInput> = profiles
        .iter()
        .zip(&schedule)
        .map(|(p, (_, source))| oracle::HourInput { hour: p.hour, injections: p.injections.clone(), source: *source })
        .collect();
    let pf = PowerFlow::new(&net);
    let opts = PfOptions::default();
    let results = oracle::solve_timeseries(&pf, &inputs, &opts);
    let mut monitors = Vec::new();
    let mut states = Vec::new();
    let mut failed = Vec::new();
    for (inp, r) in inputs.iter().zip(results) {
        match r {
            Ok(sol) if sol.converged => {
                monitors.extend(pf.monitors(&sol, inp.hour));
                states.push(StateSummary::from_power_flow(&net, pf.layout(), inp.hour, &sol, &inp.injections));
            }
            Ok(sol) => failed.push(format!("hour {}: no convergence (residual {:.2e})", inp.hour, sol.max_residual)),
            Err(e) => failed.push(e.to_string()),
        }
    }
    write(&g.out, "monitors.csv", &oracle::write_monitors(&monitors))?;
    write(&g.out, "pf_states.json", &pretty(&states))?;
    println!("{} of {} hours solved", states.len(), inputs.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(failed.join("; ")))
    }
}

fn read_states(g: &Global, name: &str) -> Result<Vec<StateSummary>> {
    Ok(serde_json::from_str(&read(&g.out.join(name))?)?)
}

fn compare_cmd(g: &Global) -> Result<()> {
    let net = load_network(g)?;
    let est = read_states(g, "estimate_states.json")?;
    let pf = read_states(g, "pf_states.json")?;
    let mut hours = Vec::new();
    for e in &est {
        let Some(o) = pf.iter().find(|o| o.hour == e.hour) else {
            continue;
        };
        hours.push(report::compare_states(&net, e, o)?);
    }
    let peak = est
        .iter()
        .filter(|e| hours.iter().any(|h| h.hour == e.hour))
        .max_by(|a, b| a.head_power_kw().p.total_cmp(&b.head_power_kw().p))
        .map(|e| e.hour);
    if let Some(h) = peak.and_then(|p| hours.iter().find(|h| h.hour == p)) {
        write(&g.out, "category_table.csv", &report::category_csv(&h.category_table))?;
    }
    write(&g.out, "v_error.csv", &report::bus_errors_csv(&hours))?;
    let worst = hours.iter().map(|h| h.max_abs_v_error_pu).fold(0.0, f64::max);
    let cat = hours.iter().map(|h| h.max_category_percent()).fold(0.0, f64::max);
    println!("{} hours compared: max |V| difference {worst:.3e} pu, max category error {cat:.4}%", hours.len());
    Ok(())
}

fn report_cmd(g: &Global, hours: &[u32]) -> Result<()> {
    let net = load_network(g)?;
    let (set, readings) = load_measurements(g, &net, hours)?;
    let (profiles, _) = read_estimate(g, &net)?;
    let est = read_states(g, "estimate_states.json")?;
    let pf = read_states(g, "pf_states.json")?;
    let failed: BTreeMap<u32, String> = match std::fs::read_to_string(g.out.join("estimate_failures.json")) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => BTreeMap::new(),
    };
    let rep = report::build_report(ReportInputs {
        net: &net,
        measurements: &set.hours,
        voltage_readings: &readings,
        profiles: &profiles,
        estimates: &est,
        oracle: &pf,
        failed_hours: failed,
    })?;
    write(&g.out, "report.json", &rep.to_json())?;
    write(&g.out, "category_table.csv", &rep.category_table_csv())?;
    write(&g.out, "v_rms.csv", &rep.v_rms_csv())?;
    write(&g.out, "feeder_characteristics.csv", &rep.characteristics.to_csv())?;
    let summary = rep.summary();
    write(&g.out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
