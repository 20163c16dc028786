//! The batch subcommands: `reduce`, `modes`, `fit`, `simulate`, `compare`.
//!
//! Every command stages its artifacts in memory and writes them only after
//! the computation has succeeded, so failures never leave partial output
//! sets. Wall-clock timings and warnings go to the stderr log; the files
//! themselves carry no timestamps and are byte-identical across reruns.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use dyneq::ctrlagg::{aggregate_controllers, evaluate_fr, path_tf, FitOptions};
use dyneq::dynamics::DynamicModel;
use dyneq::modal::{analyze, ModalAnalysis};
use dyneq::model::{
    solve_powerflow, ControllerKind, ModelError, PowerSystemCase, SignalKind, Zone,
};
use dyneq::pipeline::PipelineError;
use dyneq::sim::{compare_trajectories, simulate, Event, MetricsReport, SimOptions, Trajectory};
use dyneq::ReductionOptions;

use crate::config::{resolve, CommonArgs, Scenario};
use crate::output::{fmt_f64, Artifacts};
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, clap::Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller ids to aggregate, comma separated
    #[arg(long, required = true, value_delimiter = ',')]
    pub controllers: Vec<String>,
    /// Common input signal; defaults to the kind's conventional input
    #[arg(long, value_parser = parse_signal)]
    pub input: Option<SignalKind>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSON file holding the event list of a single ad-hoc scenario
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Integration step in seconds
    #[arg(long)]
    pub dt: Option<f64>,
    /// Window length in seconds
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reduced case file to validate against the full case
    #[arg(long)]
    pub reduced: PathBuf,
    /// JSON file holding the event list of a single ad-hoc scenario
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Integration step in seconds
    #[arg(long)]
    pub dt: Option<f64>,
    /// Window length in seconds
    #[arg(long)]
    pub t_end: Option<f64>,
}

fn parse_signal(text: &str) -> Result<SignalKind, String> {
    serde_json::from_value(serde_json::Value::String(text.to_string())).map_err(|_| {
        format!(
            "unknown signal '{text}' (expected delta_omega, delta_pe, delta_vt, delta_pmech, \
             vref, efd, or vpss)"
        )
    })
}

fn classify_model_error(e: ModelError) -> Failure {
    match e {
        ModelError::Io { .. } | ModelError::Parse { .. } => Failure::Config(e.to_string()),
        _ => Failure::Algorithm(e.to_string()),
    }
}

fn classify_pipeline_error(e: PipelineError) -> Failure {
    match e {
        PipelineError::Model(inner) => classify_model_error(inner),
        other => Failure::Algorithm(other.to_string()),
    }
}

fn load(path: &Path) -> Result<PowerSystemCase, Failure> {
    dyneq::load_case(path).map_err(classify_model_error)
}

fn build_model(case: &PowerSystemCase, classical: bool) -> Result<DynamicModel, Failure> {
    let solution = solve_powerflow(case)
        .map_err(|e| Failure::Algorithm(format!("base-case power flow: {e}")))?;
    DynamicModel::build(case, &solution, classical)
        .map_err(|e| Failure::Algorithm(format!("dynamic model: {e}")))
}

// ---------------------------------------------------------------------------
// reduce

fn summary_rows(
    full: &PowerSystemCase,
    reduced: &PowerSystemCase,
    full_states: usize,
    reduced_states: usize,
) -> Vec<(&'static str, usize, usize)> {
    vec![
        ("buses", full.buses.len(), reduced.buses.len()),
        ("branches", full.branches.len(), reduced.branches.len()),
        ("generators", full.generators.len(), reduced.generators.len()),
        ("controllers", full.controllers.len(), reduced.controllers.len()),
        ("states", full_states, reduced_states),
    ]
}

fn push_summary(artifacts: &mut Artifacts, rows: &[(&'static str, usize, usize)]) {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(q, f, r)| vec![q.to_string(), f.to_string(), r.to_string()])
        .collect();
    artifacts.push_csv("summary.csv", "quantity,full,reduced", &rows);
}

fn print_summary(rows: &[(&'static str, usize, usize)]) {
    println!("{:<12} {:>6} {:>8}", "quantity", "full", "reduced");
    for (q, f, r) in rows {
        println!("{q:<12} {f:>6} {r:>8}");
    }
}

fn announce(out_dir: &Path, names: &[String]) {
    println!("wrote {} to {}", names.join(", "), out_dir.display());
}

pub fn cmd_reduce(args: &ReduceArgs) -> Result<(), Failure> {
    let run = resolve(&args.common)?;
    let case = load(&run.case_path)?;
    let mut artifacts = Artifacts::new();

    if case.buses_in_zone(Zone::External).next().is_none() {
        log::warn!("external zone is empty; the reduced case equals the input");
        let model = build_model(&case, run.options.force_classical)?;
        let states = model.state_dim();
        artifacts.push_json("reduced_case.json", &case)?;
        let provenance = serde_json::json!({
            "eliminated_buses": [],
            "meshes": [],
            "boundary_residuals": [],
            "notes": ["external zone is empty; the reduced case equals the input"],
        });
        artifacts.push_json("provenance.json", &provenance)?;
        let rows = summary_rows(&case, &case, states, states);
        push_summary(&mut artifacts, &rows);
        let written = artifacts.write(&run.out_dir)?;
        print_summary(&rows);
        announce(&run.out_dir, &written);
        return Ok(());
    }

    let started = Instant::now();
    let reduced = dyneq::reduce(&case, &run.options).map_err(classify_pipeline_error)?;
    log::info!("reduction finished in {:.3} s", started.elapsed().as_secs_f64());

    let mut provenance = serde_json::to_value(&reduced)
        .map_err(|e| Failure::Config(format!("cannot serialize provenance: {e}")))?;
    provenance
        .as_object_mut()
        .expect("reduced model serializes to an object")
        .remove("case");

    artifacts.push_json("reduced_case.json", &reduced.case)?;
    artifacts.push_json("provenance.json", &provenance)?;
    let rows = summary_rows(
        &case,
        &reduced.case,
        reduced.full_state_count,
        reduced.reduced_state_count,
    );
    push_summary(&mut artifacts, &rows);
    let written = artifacts.write(&run.out_dir)?;
    print_summary(&rows);
    announce(&run.out_dir, &written);
    Ok(())
}

// ---------------------------------------------------------------------------
// modes

#[derive(Debug, Clone, Serialize)]
struct ModeRow {
    mode_id: String,
    re: f64,
    im: f64,
    freq_hz: f64,
    damping_pct: f64,
}

/// Mode table rows, optionally restricted to a frequency band, sorted by
/// damping ascending (ties broken by the stable mode index).
fn mode_rows(analysis: &ModalAnalysis, band: Option<(f64, f64)>, oscillatory_only: bool) -> Vec<(usize, ModeRow)> {
    let mut picked: Vec<(usize, ModeRow)> = analysis
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            band.is_none_or(|(lo, hi)| m.frequency_hz >= lo && m.frequency_hz <= hi)
                && (!oscillatory_only || m.eigenvalue.im > 0.0)
        })
        .map(|(idx, m)| {
            (
                idx,
                ModeRow {
                    mode_id: format!("m{idx}"),
                    re: m.eigenvalue.re,
                    im: m.eigenvalue.im,
                    freq_hz: m.frequency_hz,
                    damping_pct: 100.0 * m.damping_ratio,
                },
            )
        })
        .collect();
    picked.sort_by(|a, b| a.1.damping_pct.total_cmp(&b.1.damping_pct).then(a.0.cmp(&b.0)));
    picked
}

fn mode_csv_rows(rows: &[(usize, ModeRow)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(_, r)| {
            vec![
                r.mode_id.clone(),
                fmt_f64(r.re),
                fmt_f64(r.im),
                fmt_f64(r.freq_hz),
                fmt_f64(r.damping_pct),
            ]
        })
        .collect()
}

pub fn cmd_modes(args: &ModesArgs) -> Result<(), Failure> {
    let run = resolve(&args.common)?;
    let case = load(&run.case_path)?;
    let model = build_model(&case, run.options.force_classical)?;
    let analysis = analyze(&model).map_err(|e| Failure::Algorithm(e.to_string()))?;

    let rows = mode_rows(&analysis, args.common.band, false);
    let mut artifacts = Artifacts::new();
    artifacts.push_csv(
        "modes.csv",
        "mode_id,re,im,freq_hz,damping_pct",
        &mode_csv_rows(&rows),
    );

    let mut shape_rows: Vec<Vec<String>> = Vec::new();
    match rows.first() {
        None => log::warn!("no mode matches the requested band; the tables are empty"),
        Some((idx, row)) => {
            let mode = &analysis.modes[*idx];
            for g in &case.generators {
                let omega = model
                    .omega_index(&g.id)
                    .expect("every case generator has a speed state");
                let angle = mode.shape[omega].arg().to_degrees();
                shape_rows.push(vec![g.id.clone(), fmt_f64(angle)]);
            }
            println!(
                "mode shape written for {} ({} Hz, {} % damping)",
                row.mode_id,
                fmt_f64(row.freq_hz),
                fmt_f64(row.damping_pct)
            );
        }
    }
    artifacts.push_csv("mode_shape.csv", "generator,angle_deg", &shape_rows);

    let written = artifacts.write(&run.out_dir)?;
    println!("{:<8} {:>12} {:>12} {:>10} {:>12}", "mode", "re", "im", "freq_hz", "damping_pct");
    for (_, r) in &rows {
        println!(
            "{:<8} {:>12.6} {:>12.6} {:>10.4} {:>12.2}",
            r.mode_id, r.re, r.im, r.freq_hz, r.damping_pct
        );
    }
    announce(&run.out_dir, &written);
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

fn default_common_input(kind: ControllerKind) -> SignalKind {
    match kind {
        ControllerKind::Avr => SignalKind::DeltaVt,
        ControllerKind::Gov => SignalKind::DeltaOmega,
        ControllerKind::Pss => SignalKind::DeltaOmega,
    }
}

fn orders_for(kind: ControllerKind, options: &ReductionOptions) -> (usize, usize) {
    match kind {
        ControllerKind::Avr => options.avr_orders,
        ControllerKind::Gov => options.gov_orders,
        ControllerKind::Pss => options.pss_orders,
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let run = resolve(&args.common)?;
    let case = load(&run.case_path)?;

    let mut members = Vec::new();
    for id in &args.controllers {
        let ctrl = case
            .controller(id)
            .ok_or_else(|| Failure::Algorithm(format!("case has no controller '{id}'")))?;
        let host = case
            .generators
            .iter()
            .find(|g| g.controllers.iter().any(|c| c == id))
            .ok_or_else(|| {
                Failure::Algorithm(format!("controller '{id}' is not attached to any generator"))
            })?;
        members.push((ctrl, host));
    }
    let kind = members[0].0.kind;
    let input = args.input.unwrap_or_else(|| default_common_input(kind));
    let orders = orders_for(kind, &run.options);
    let freqs = run
        .options
        .grid
        .build()
        .map_err(|e| Failure::Config(format!("frequency grid: {e}")))?;
    let fit_options = FitOptions {
        allow_unstable: run.options.allow_unstable_fit,
        ..FitOptions::default()
    };

    let (equivalent, report) =
        aggregate_controllers(&members, input, &freqs, orders, &fit_options)
            .map_err(|e| Failure::Algorithm(format!("controller aggregation: {e}")))?;

    let mut artifacts = Artifacts::new();
    artifacts.push_json("equivalent_controller.json", &equivalent)?;
    artifacts.push_json("fit_report.json", &report)?;

    for summary in &report.paths {
        let fitted = equivalent
            .inputs
            .iter()
            .find(|p| p.signal == summary.signal)
            .expect("every fitted path appears in the equivalent controller");
        let fit_fr = evaluate_fr(&path_tf(&fitted.blocks), &summary.target.freqs_hz)
            .map_err(|e| Failure::Algorithm(format!("evaluating the fitted path: {e}")))?;
        let h_max = summary
            .target
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        let rows: Vec<Vec<String>> = summary
            .target
            .freqs_hz
            .iter()
            .zip(summary.target.values.iter().zip(&fit_fr.values))
            .map(|(f, (target, fit))| {
                let rel = (fit - target).norm() / target.norm().max(1e-12 * h_max);
                vec![
                    fmt_f64(2.0 * std::f64::consts::PI * f),
                    fmt_f64(target.re),
                    fmt_f64(target.im),
                    fmt_f64(fit.re),
                    fmt_f64(fit.im),
                    fmt_f64(rel),
                ]
            })
            .collect();
        artifacts.push_csv(
            &format!("fr_{}.csv", summary.signal.as_str()),
            "omega_rad_s,target_re,target_im,fit_re,fit_im,rel_err",
            &rows,
        );
        println!(
            "path {}: orders ({}, {}), max rel err {}, rms rel err {}, {} iterations",
            summary.signal,
            summary.orders.0,
            summary.orders.1,
            fmt_f64(summary.max_rel_err),
            fmt_f64(summary.rms_rel_err),
            summary.iterations
        );
    }

    let written = artifacts.write(&run.out_dir)?;
    announce(&run.out_dir, &written);
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

fn load_events(path: &Path) -> Result<Vec<Event>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read events {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("events {} are invalid: {e}", path.display())))
}

/// The scenario list a simulation-style command runs: an ad-hoc `--events`
/// scenario wins over the config's list; with neither, one undisturbed run.
fn resolve_scenarios(
    configured: &[Scenario],
    events: Option<&Path>,
    dt: Option<f64>,
    t_end: Option<f64>,
) -> Result<Vec<Scenario>, Failure> {
    let scenarios = match events {
        Some(path) => vec![Scenario {
            name: "run".into(),
            events: load_events(path)?,
            dt,
            t_end,
        }],
        None if configured.is_empty() => {
            vec![Scenario { name: "run".into(), events: Vec::new(), dt, t_end }]
        }
        None => configured
            .iter()
            .cloned()
            .map(|mut s| {
                if dt.is_some() {
                    s.dt = dt;
                }
                if t_end.is_some() {
                    s.t_end = t_end;
                }
                s
            })
            .collect(),
    };
    for s in &scenarios {
        let opts = sim_options(s);
        if !(opts.dt > 0.0 && opts.t_end > opts.dt) {
            return Err(Failure::Config(format!(
                "scenario '{}' needs 0 < dt < t_end, got dt = {}, t_end = {}",
                s.name, opts.dt, opts.t_end
            )));
        }
    }
    Ok(scenarios)
}

fn sim_options(s: &Scenario) -> SimOptions {
    let mut opts = SimOptions::default();
    if let Some(dt) = s.dt {
        opts.dt = dt;
    }
    if let Some(t_end) = s.t_end {
        opts.t_end = t_end;
    }
    opts
}

fn trajectory_csv(traj: &Trajectory) -> (String, Vec<Vec<String>>) {
    let header = std::iter::once("time".to_string())
        .chain(traj.channels.iter().cloned())
        .collect::<Vec<_>>()
        .join(",");
    let rows = traj
        .time
        .iter()
        .zip(&traj.data)
        .map(|(t, row)| {
            std::iter::once(fmt_f64(*t))
                .chain(row.iter().map(|v| fmt_f64(*v)))
                .collect()
        })
        .collect();
    (header, rows)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let run = resolve(&args.common)?;
    let case = load(&run.case_path)?;
    let model = build_model(&case, run.options.force_classical)?;
    let scenarios =
        resolve_scenarios(&run.scenarios, args.events.as_deref(), args.dt, args.t_end)?;

    let mut artifacts = Artifacts::new();
    for scenario in &scenarios {
        let opts = sim_options(scenario);
        let started = Instant::now();
        let traj = simulate(&model, &scenario.events, &opts).map_err(|e| {
            Failure::Algorithm(format!("scenario '{}': {e}", scenario.name))
        })?;
        log::info!(
            "scenario '{}' integrated in {:.3} s",
            scenario.name,
            started.elapsed().as_secs_f64()
        );
        let (header, rows) = trajectory_csv(&traj);
        artifacts.push_csv(&format!("traj_{}.csv", scenario.name), &header, &rows);
    }
    let written = artifacts.write(&run.out_dir)?;
    announce(&run.out_dir, &written);
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Serialize)]
struct ScenarioOutcome {
    name: String,
    dt: f64,
    t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricsReport>,
}

#[derive(Debug, Serialize)]
struct ModesSection {
    full: Vec<ModeRow>,
    reduced: Vec<ModeRow>,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    modes: ModesSection,
    scenarios: Vec<ScenarioOutcome>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let run = resolve(&args.common)?;
    if !args.reduced.exists() {
        return Err(Failure::Config(format!(
            "reduced case file {} does not exist",
            args.reduced.display()
        )));
    }
    let full_case = load(&run.case_path)?;
    let reduced_case = load(&args.reduced)?;
    let full_model = build_model(&full_case, run.options.force_classical)?;
    let reduced_model = build_model(&reduced_case, run.options.force_classical)?;
    let scenarios =
        resolve_scenarios(&run.scenarios, args.events.as_deref(), args.dt, args.t_end)?;

    let full_analysis = analyze(&full_model).map_err(|e| Failure::Algorithm(e.to_string()))?;
    let reduced_analysis =
        analyze(&reduced_model).map_err(|e| Failure::Algorithm(e.to_string()))?;
    let full_rows = mode_rows(&full_analysis, args.common.band, true);
    let reduced_rows = mode_rows(&reduced_analysis, args.common.band, true);

    let mut outcomes = Vec::new();
    let mut failures = 0usize;
    for scenario in &scenarios {
        let opts = sim_options(scenario);
        let run_one = |label: &str, model: &DynamicModel| {
            let started = Instant::now();
            let result = simulate(model, &scenario.events, &opts)
                .map_err(|e| format!("{label} model: {e}"));
            (result, started.elapsed().as_secs_f64())
        };
        let (full_traj, full_secs) = run_one("full", &full_model);
        let (reduced_traj, reduced_secs) = run_one("reduced", &reduced_model);
        log::info!(
            "scenario '{}': full model {:.3} s, reduced model {:.3} s",
            scenario.name,
            full_secs,
            reduced_secs
        );
        let metrics = full_traj.and_then(|f| {
            let r = reduced_traj?;
            compare_trajectories(&f, &r).map_err(|e| format!("comparison: {e}"))
        });
        let outcome = match metrics {
            Ok(report) => {
                println!(
                    "scenario {}: worst channel {} (max abs diff {})",
                    scenario.name,
                    report.worst_channel,
                    fmt_f64(report.worst_max_abs_diff)
                );
                ScenarioOutcome {
                    name: scenario.name.clone(),
                    dt: opts.dt,
                    t_end: opts.t_end,
                    error: None,
                    metrics: Some(report),
                }
            }
            Err(message) => {
                failures += 1;
                log::error!("scenario '{}': {message}", scenario.name);
                ScenarioOutcome {
                    name: scenario.name.clone(),
                    dt: opts.dt,
                    t_end: opts.t_end,
                    error: Some(message),
                    metrics: None,
                }
            }
        };
        outcomes.push(outcome);
    }

    let mut artifacts = Artifacts::new();
    let mut csv_rows = Vec::new();
    println!("{:<8} {:<8} {:>10} {:>12}", "model", "mode", "freq_hz", "damping_pct");
    for (label, rows) in [("full", &full_rows), ("reduced", &reduced_rows)] {
        for (_, r) in rows {
            println!("{label:<8} {:<8} {:>10.4} {:>12.2}", r.mode_id, r.freq_hz, r.damping_pct);
            csv_rows.push(vec![
                label.to_string(),
                r.mode_id.clone(),
                fmt_f64(r.re),
                fmt_f64(r.im),
                fmt_f64(r.freq_hz),
                fmt_f64(r.damping_pct),
            ]);
        }
    }
    artifacts.push_csv(
        "modes_compare.csv",
        "model,mode_id,re,im,freq_hz,damping_pct",
        &csv_rows,
    );
    let report = CompareReport {
        modes: ModesSection {
            full: full_rows.into_iter().map(|(_, r)| r).collect(),
            reduced: reduced_rows.into_iter().map(|(_, r)| r).collect(),
        },
        scenarios: outcomes,
    };
    artifacts.push_json("metrics.json", &report)?;
    let written = artifacts.write(&run.out_dir)?;
    announce(&run.out_dir, &written);

    if failures > 0 {
        return Err(Failure::Algorithm(format!(
            "{failures} of {} scenario(s) failed; see metrics.json",
            scenarios.len()
        )));
    }
    Ok(())
}
