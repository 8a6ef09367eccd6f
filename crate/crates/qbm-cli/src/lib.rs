//! `qbm` command-line driver. [`run`] parses arguments, merges the optional
//! config file, evaluates the requested subcommand and writes its output
//! files. Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use clap::Parser;
use serde::Serialize;
use std::ffi::OsString;
use std::path::PathBuf;

use qbm::compare::{
    default_lambda_grid, preset, presets, ratio_sweep, validity_report, SweepResult, Thresholds,
    DEFAULT_TEMPERATURES, SWEEP_CSV_COLUMNS,
};
use qbm::exact::{
    stationary_closed, stationary_quadrature, transient_moments, InitialState, MomentTrajectory,
    StationaryMoments,
};
use qbm::markov::{integrate_markov, stationary_markov};
use qbm::nonmarkov::{integrate_nonmarkov_with, stationary_nonmarkov, NonMarkovOptions};
use qbm::oracle::{build_bath, evolve, measure, OracleMeasurement};
use qbm::params::{derive_params, derive_params_from_bare, ModelParams};
use qbm::sysbath::{
    energy_flow, interaction_energy_leading, interaction_energy_numerical, NumericalOptions,
};
use qbm::QbmError;

use config::{Cli, Command, FileConfig, InteractionChoice, ParamValues, TransientMethod};
use output::{num, Metadata, Output};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<QbmError> for CliError {
    fn from(e: QbmError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn output_dir(cli: &Cli, file: &FileConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| file.output.as_ref().and_then(|o| o.dir.clone()))
        .or_else(|| std::env::var_os("QBM_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qbm-output"))
}

/// Executes a parsed command line; returns the output record listing the
/// files written.
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let jobs = cli
        .jobs
        .or_else(|| file.output.as_ref().and_then(|o| o.jobs));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let mut out = Output::new(output_dir(cli, &file))?;
    pool.install(|| dispatch(&cli.command, &file, &mut out))?;
    Ok(out)
}

fn dispatch(cmd: &Command, file: &FileConfig, out: &mut Output) -> Result<(), CliError> {
    match cmd {
        Command::Stationary(a) => {
            let v = a.params.merge(file.params.as_ref())?;
            let quad = a.quadrature
                || file
                    .stationary
                    .as_ref()
                    .and_then(|s| s.quadrature)
                    .unwrap_or(false);
            cmd_stationary(&v, quad, out)
        }
        Command::Transient(a) => {
            let v = a.params.merge(file.params.as_ref())?;
            let f = file.transient.clone().unwrap_or_default();
            let opts = TransientOpts {
                t_end: a.t_end.or(f.t_end).unwrap_or(50.0),
                dt: a.dt.or(f.dt).unwrap_or(0.1),
                method: a.method.or(f.method).unwrap_or(TransientMethod::All),
                q0: a.q0.or(f.q0).unwrap_or(0.0),
                p0: a.p0.or(f.p0).unwrap_or(0.0),
                init_temp: a.init_temp.or(f.init_temp).unwrap_or(0.0),
            };
            cmd_transient(&v, &opts, out)
        }
        Command::Sweep(a) => {
            let f = file.sweep.clone().unwrap_or_default();
            let fp = file.params.clone().unwrap_or_default();
            let gamma = a
                .gamma
                .or(f.gamma)
                .or(fp.gamma)
                .ok_or_else(|| CliError::Config("sweep needs --gamma".into()))?;
            let omega_r = a.omega_r.or(f.omega_r).or(fp.omega_r).unwrap_or(1.0);
            let lambdas = match a.lambdas.clone().or(f.lambdas) {
                Some(l) => l,
                None => default_lambda_grid(a.lambda_points.or(f.lambda_points).unwrap_or(13)),
            };
            let temps = a
                .temps
                .clone()
                .or(f.temps)
                .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
            check_grid("lambdas", &lambdas)?;
            check_grid("temps", &temps)?;
            let s = ratio_sweep(gamma, omega_r, &lambdas, &temps);
            let name = format!("{}.csv", s.file_stem());
            write_sweep(out, "sweep", &s, &name)
        }
        Command::Validity(a) => {
            let f = file.validity.clone().unwrap_or_default();
            let name = a.preset.clone().or(f.preset);
            let lo = a.lambda_over_omega.or(f.lambda_over_omega);
            cmd_validity(name.as_deref(), lo, &a.params, file, out)
        }
        Command::Interaction(a) => {
            let v = a.params.merge(file.params.as_ref())?;
            let mode = a
                .mode
                .or(file.interaction.as_ref().and_then(|s| s.mode))
                .unwrap_or(InteractionChoice::Both);
            cmd_interaction(&v, mode, out)
        }
        Command::Oracle(a) => {
            let v = a.params.merge(file.params.as_ref())?;
            let f = file.oracle.clone().unwrap_or_default();
            let p = model(&v)?;
            let g = p.gamma.max(f64::MIN_POSITIVE);
            let opts = OracleOpts {
                modes: a.modes.or(f.modes).unwrap_or(4000),
                omega_max: a.omega_max.or(f.omega_max).unwrap_or(10.0 * p.lambda),
                start: a.window_start.or(f.window_start).unwrap_or(3.0 / g),
                end: a.window_end.or(f.window_end).unwrap_or(5.0 / g),
                dt: a.dt.or(f.dt).unwrap_or(0.1),
            };
            cmd_oracle(&p, &opts, out)
        }
        Command::Figures(a) => {
            let f = file.figures.clone().unwrap_or_default();
            let gammas = a
                .gamma
                .clone()
                .or(f.gamma)
                .unwrap_or_else(|| vec![0.001, 0.005]);
            let points = a.lambda_points.or(f.lambda_points).unwrap_or(13);
            let temps = a
                .temps
                .clone()
                .or(f.temps)
                .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
            check_grid("temps", &temps)?;
            let grid = default_lambda_grid(points);
            for g in gammas {
                let s = ratio_sweep(g, 1.0, &grid, &temps);
                write_sweep(out, "figures", &s, &format!("figure_ratios_g{g}.csv"))?;
            }
            Ok(())
        }
    }
}

fn check_grid(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config(format!(
            "{name} must be a non-empty list of finite numbers"
        )));
    }
    Ok(())
}

fn model(v: &ParamValues) -> Result<ModelParams, CliError> {
    let p = match v.omega {
        Some(om) => derive_params_from_bare(om, v.gamma, v.lambda, v.temp)?,
        None => derive_params(v.omega_r.unwrap_or(1.0), v.gamma, v.lambda, v.temp)?,
    };
    Ok(p)
}

fn param_meta(command: &str, p: &ModelParams) -> Metadata {
    let mut m = Metadata::new(command);
    m.push_num("omega_r", p.omega_r);
    m.push_num("omega", p.omega());
    m.push_num("gamma", p.gamma);
    m.push_num("lambda", p.lambda);
    m.push_num("temperature", p.temperature);
    m.push("bath", "drude_ohmic");
    m
}

fn stem(p: &ModelParams) -> String {
    format!(
        "or{}_g{}_l{}_t{}",
        p.omega_r, p.gamma, p.lambda, p.temperature
    )
}

fn moment_row(m: &StationaryMoments) -> Vec<String> {
    vec![
        m.method.label().to_string(),
        num(m.q2),
        num(m.p2),
        num(m.pq_sym),
        num(m.uncertainty_product()),
    ]
}

fn cmd_stationary(v: &ParamValues, quadrature: bool, out: &mut Output) -> Result<(), CliError> {
    let p = model(v)?;
    let mut rows = vec![
        stationary_closed(&p)?,
        stationary_markov(&p)?,
        stationary_nonmarkov(&p)?,
    ];
    if quadrature {
        rows.insert(1, stationary_quadrature(&p, 1e-10)?.moments);
    }
    println!("{:<18} {:>24} {:>24}", "method", "<q^2>", "<p^2>");
    for m in &rows {
        println!(
            "{:<18} {:>24} {:>24}",
            m.method.label(),
            num(m.q2),
            num(m.p2)
        );
    }
    let table: Vec<Vec<String>> = rows.iter().map(moment_row).collect();
    out.csv(
        &format!("stationary_{}.csv", stem(&p)),
        &param_meta("stationary", &p),
        &["method", "q2", "p2", "pq_sym", "uncertainty_product"],
        &table,
    )?;
    Ok(())
}

struct TransientOpts {
    t_end: f64,
    dt: f64,
    method: TransientMethod,
    q0: f64,
    p0: f64,
    init_temp: f64,
}

fn cmd_transient(v: &ParamValues, o: &TransientOpts, out: &mut Output) -> Result<(), CliError> {
    let p = model(v)?;
    if !(o.dt > 0.0) || !(o.t_end > 0.0) || !(o.init_temp >= 0.0) {
        return Err(CliError::Config(
            "t_end and dt must be positive, init_temp non-negative".into(),
        ));
    }
    let n = (o.t_end / o.dt).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * o.dt).collect();
    let th = InitialState::thermal(p.omega_r, o.init_temp);
    let init = InitialState {
        q2: th.q2 + o.q0 * o.q0,
        p2: th.p2 + o.p0 * o.p0,
        pq_sym: th.pq_sym + 2.0 * o.q0 * o.p0,
        q: o.q0,
        p: o.p0,
    };
    let all = o.method == TransientMethod::All;
    let mut runs: Vec<MomentTrajectory> = Vec::new();
    if all || o.method == TransientMethod::Exact {
        runs.push(transient_moments(&p, &init, &grid)?);
    }
    if all || o.method == TransientMethod::Markov {
        runs.push(integrate_markov(&p, &init, &grid)?);
    }
    if all || o.method == TransientMethod::Nonmarkov {
        runs.push(integrate_nonmarkov_with(
            &p,
            &init,
            &grid,
            &NonMarkovOptions::for_params(&p),
        )?);
    }
    for tr in runs {
        let mut meta = param_meta("transient", &p);
        meta.push("method", tr.method.label());
        meta.push_num("init_q", o.q0);
        meta.push_num("init_p", o.p0);
        meta.push_num("init_temperature", o.init_temp);
        let rows: Vec<Vec<String>> = (0..tr.t.len())
            .map(|i| {
                [
                    tr.t[i],
                    tr.mean_q[i],
                    tr.mean_p[i],
                    tr.q2[i],
                    tr.p2[i],
                    tr.pq_sym[i],
                ]
                .iter()
                .map(|x| num(*x))
                .collect()
            })
            .collect();
        out.csv(
            &format!("transient_{}_{}.csv", tr.method.label(), stem(&p)),
            &meta,
            &["t", "mean_q", "mean_p", "q2", "p2", "pq_sym"],
            &rows,
        )?;
    }
    Ok(())
}

fn write_sweep(
    out: &mut Output,
    command: &str,
    s: &SweepResult,
    name: &str,
) -> Result<(), CliError> {
    let mut meta = Metadata::new(command);
    meta.push_num("gamma", s.gamma);
    meta.push_num("omega_r", s.omega_r);
    meta.push_list("lambda_grid", &s.lambda_grid);
    meta.push_list("temperature_grid", &s.temperature_grid);
    meta.push("bath", "drude_ohmic");
    let flagged = s.flagged().count();
    meta.push("flagged_points", flagged);
    if flagged > 0 {
        eprintln!("warning: {flagged} grid points flagged, ratios left empty");
    }
    out.csv(name, &meta, &SWEEP_CSV_COLUMNS, &s.csv_rows())?;
    Ok(())
}

#[derive(Serialize)]
struct PresetOutput {
    report: qbm::compare::PresetReport,
    point: Option<qbm::compare::ValidityReport>,
}

fn cmd_validity(
    name: Option<&str>,
    lambda_over_omega: Option<f64>,
    params: &config::ParamArgs,
    file: &FileConfig,
    out: &mut Output,
) -> Result<(), CliError> {
    let th = Thresholds::default();
    let mut meta = Metadata::new("validity");
    meta.push_num("threshold_weak_coupling", th.weak_coupling);
    meta.push_num("threshold_born", th.born);
    meta.push_num("threshold_coarse_grain_min", th.coarse_grain_min);
    match name {
        Some(n) => {
            let pr = preset(n).ok_or_else(|| {
                let known: Vec<String> = presets().into_iter().map(|p| p.name).collect();
                CliError::Config(format!(
                    "unknown preset `{n}` (known: {})",
                    known.join(", ")
                ))
            })?;
            let report = pr.report(&th);
            println!("{}: Q = {}", pr.name, pr.q_factor);
            for line in &report.inequalities {
                println!("  {line}");
            }
            let point = match lambda_over_omega {
                Some(lo) => {
                    meta.push_num("lambda_over_omega", lo);
                    Some(validity_report(&pr.params_at(lo, 1.0)?, &th))
                }
                None => None,
            };
            meta.push("preset", &pr.name);
            meta.push_num("q_factor", pr.q_factor);
            out.json(
                &format!("validity_{}.json", pr.name),
                &meta,
                &PresetOutput { report, point },
            )?;
        }
        None => {
            let v = params.merge(file.params.as_ref())?;
            let p = model(&v)?;
            let r = validity_report(&p, &th);
            println!(
                "Q = {}, gamma*lambda/omega^2 = {} (born ok: {})",
                num(r.q_factor),
                num(r.born.value),
                r.born.ok
            );
            let mut m = param_meta("validity", &p);
            m.entries.extend(meta.entries.into_iter().skip(2));
            out.json(&format!("validity_{}.json", stem(&p)), &m, &r)?;
        }
    }
    Ok(())
}

fn cmd_interaction(
    v: &ParamValues,
    mode: InteractionChoice,
    out: &mut Output,
) -> Result<(), CliError> {
    let p = model(v)?;
    let mut rows = Vec::new();
    if matches!(mode, InteractionChoice::Leading | InteractionChoice::Both) {
        rows.push(vec![
            "h_sb_leading_closed".to_string(),
            num(interaction_energy_leading(&p)?),
        ]);
    }
    if matches!(mode, InteractionChoice::Numerical | InteractionChoice::Both) {
        let e = interaction_energy_numerical(&p, &NumericalOptions::default())?;
        rows.push(vec!["h_sb_numerical".to_string(), num(e)]);
        let f = energy_flow(&p)?;
        rows.push(vec!["delta_e_system".to_string(), num(f.delta_e_system)]);
        rows.push(vec![
            "delta_e_interaction".to_string(),
            num(f.delta_e_interaction),
        ]);
        rows.push(vec!["delta_e_bath".to_string(), num(f.delta_e_bath)]);
    }
    for r in &rows {
        println!("{:<22} {}", r[0], r[1]);
    }
    out.csv(
        &format!("interaction_{}.csv", stem(&p)),
        &param_meta("interaction", &p),
        &["quantity", "value"],
        &rows,
    )?;
    Ok(())
}

struct OracleOpts {
    modes: usize,
    omega_max: f64,
    start: f64,
    end: f64,
    dt: f64,
}

#[derive(Serialize)]
struct OracleOutput {
    params: ModelParams,
    n_modes: usize,
    omega_max: f64,
    recurrence_time: f64,
    measurement: OracleMeasurement,
    exact: StationaryMoments,
    rel_diff_q2: f64,
    rel_diff_p2: f64,
}

fn cmd_oracle(p: &ModelParams, o: &OracleOpts, out: &mut Output) -> Result<(), CliError> {
    if !(o.dt > 0.0) || !(o.end > o.start) {
        return Err(CliError::Config(
            "oracle needs dt > 0 and window_end > window_start".into(),
        ));
    }
    let bath = build_bath(&p.drude(), o.modes, o.omega_max, Some(o.end))?;
    let n = ((o.end - o.start) / o.dt).round().max(1.0) as usize;
    let ts: Vec<f64> = (0..=n)
        .map(|i| o.start + (o.end - o.start) * i as f64 / n as f64)
        .collect();
    let init = InitialState::thermal(p.omega_r, p.temperature);
    let run = evolve(&bath, p, &init, &ts)?;
    let m = measure(&run, p.gamma, (o.start, o.end))?;
    let exact = stationary_closed(p)?;
    let res = OracleOutput {
        params: *p,
        n_modes: o.modes,
        omega_max: o.omega_max,
        recurrence_time: bath.recurrence_time,
        rel_diff_q2: m.moments.q2 / exact.q2 - 1.0,
        rel_diff_p2: m.moments.p2 / exact.p2 - 1.0,
        measurement: m,
        exact,
    };
    println!(
        "oracle <q^2> {} (exact {}), <p^2> {} (exact {}), energy drift {:e}",
        num(res.measurement.moments.q2),
        num(exact.q2),
        num(res.measurement.moments.p2),
        num(exact.p2),
        res.measurement.energy_drift
    );
    let mut meta = param_meta("oracle", p);
    meta.push("n_modes", o.modes);
    meta.push_num("omega_max", o.omega_max);
    meta.push_num("window_start", o.start);
    meta.push_num("window_end", o.end);
    meta.push_num("dt", o.dt);
    out.json(
        &format!("oracle_{}_n{}.json", stem(p), o.modes),
        &meta,
        &res,
    )?;
    Ok(())
}
