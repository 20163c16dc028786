//! End-to-end reduction pipeline: validate, solve the base case, find the
//! anchoring mode and its coherent groups, build the reduced network, and
//! aggregate the controllers of each group onto its equivalent machine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctrlagg::{
    aggregate_controllers, linear_grid, log_grid, AggregationReport, CtrlaggError, FitOptions,
};
use crate::dynamics::{DynamicModel, DynamicsError};
use crate::genagg::EquivalentGenerator;
use crate::modal::{
    analyze, find_coherent_groups, select_mode, CoherencyGrouping, ModalError, Mode, ModeSelector,
};
use crate::model::{
    solve_powerflow, validate_case, ControllerKind, Generator, ModelError, PowerSystemCase,
    SignalKind,
};
use crate::netred::{reduce_network, NetredError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("case validation: {0}")]
    Model(#[from] ModelError),
    #[error("full-model dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("modal analysis: {0}")]
    Modal(#[from] ModalError),
    #[error("network reduction: {0}")]
    Netred(#[from] NetredError),
    #[error("controller aggregation: {0}")]
    Ctrlagg(#[from] CtrlaggError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

/// Frequency grid used for controller response sampling and fitting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub n_points: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo_hz: 0.01, hi_hz: 10.0, n_points: 200, spacing: Spacing::Log }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>, CtrlaggError> {
        match self.spacing {
            Spacing::Log => log_grid(self.lo_hz, self.hi_hz, self.n_points),
            Spacing::Linear => linear_grid(self.lo_hz, self.hi_hz, self.n_points),
        }
    }
}

fn default_band() -> (f64, f64) {
    (0.1, 2.0)
}
fn default_angle_tol() -> f64 {
    10.0
}
fn default_avr_orders() -> (usize, usize) {
    (3, 4)
}
fn default_gov_orders() -> (usize, usize) {
    (2, 3)
}
fn default_pss_orders() -> (usize, usize) {
    (3, 4)
}

/// Everything the reduction needs beyond the case itself. All fields have
/// defaults, so `{}` is a valid configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionOptions {
    /// Frequency band (Hz) in which to look for the anchoring mode.
    pub band_hz: (f64, f64),
    /// Explicit mode index in the sorted mode table; overrides the band.
    pub mode_index: Option<usize>,
    /// Coherency tolerance on mode-shape angles, degrees.
    pub angle_tol_deg: f64,
    pub grid: GridSpec,
    /// (numerator, denominator) orders of the fitted equivalent paths.
    pub avr_orders: (usize, usize),
    pub gov_orders: (usize, usize),
    pub pss_orders: (usize, usize),
    /// Keep fits with right-half-plane poles instead of rejecting them.
    pub allow_unstable_fit: bool,
    /// Model every machine as classical, ignoring one-axis data.
    pub force_classical: bool,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            band_hz: default_band(),
            mode_index: None,
            angle_tol_deg: default_angle_tol(),
            grid: GridSpec::default(),
            avr_orders: default_avr_orders(),
            gov_orders: default_gov_orders(),
            pss_orders: default_pss_orders(),
            allow_unstable_fit: false,
            force_classical: false,
        }
    }
}

/// Serializable digest of the anchoring mode.
#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
}

impl ModeSummary {
    fn of(mode: &Mode) -> Self {
        ModeSummary {
            eigenvalue_re: mode.eigenvalue.re,
            eigenvalue_im: mode.eigenvalue.im,
            frequency_hz: mode.frequency_hz,
            damping_ratio: mode.damping_ratio,
        }
    }
}

/// The reduced equivalent plus the evidence trail of how it was built.
#[derive(Debug, Serialize)]
pub struct ReducedModel {
    pub case: PowerSystemCase,
    pub selected_mode: ModeSummary,
    pub grouping: CoherencyGrouping,
    pub meshes: Vec<crate::netred::ReiMesh>,
    pub equivalents: Vec<EquivalentGenerator>,
    pub controller_reports: Vec<AggregationReport>,
    pub eliminated_buses: Vec<String>,
    pub boundary_residuals: Vec<crate::netred::BoundaryResidual>,
    pub notes: Vec<String>,
    pub full_state_count: usize,
    pub reduced_state_count: usize,
    pub full_bus_count: usize,
    pub reduced_bus_count: usize,
}

fn common_input_for(kind: ControllerKind) -> SignalKind {
    match kind {
        ControllerKind::Avr => SignalKind::DeltaVt,
        ControllerKind::Gov => SignalKind::DeltaOmega,
        ControllerKind::Pss => SignalKind::DeltaOmega,
    }
}

fn orders_for(kind: ControllerKind, opts: &ReductionOptions) -> (usize, usize) {
    match kind {
        ControllerKind::Avr => opts.avr_orders,
        ControllerKind::Gov => opts.gov_orders,
        ControllerKind::Pss => opts.pss_orders,
    }
}

/// Runs the full reduction and returns the reduced case together with the
/// grouping, fits, and verification residuals behind it.
pub fn reduce(
    case: &PowerSystemCase,
    options: &ReductionOptions,
) -> Result<ReducedModel, PipelineError> {
    validate_case(case)?;
    let solution = solve_powerflow(case).map_err(ModelError::from)?;
    let full_model = DynamicModel::build(case, &solution, options.force_classical)?;
    let full_state_count = full_model.state_dim();

    let analysis = analyze(&full_model)?;
    let selector = match options.mode_index {
        Some(index) => ModeSelector::Index(index),
        None => ModeSelector::Band { lo_hz: options.band_hz.0, hi_hz: options.band_hz.1 },
    };
    let mode = select_mode(&analysis, &selector)?;
    let grouping = find_coherent_groups(&full_model, mode, options.angle_tol_deg);

    let reduction = reduce_network(case, &solution, &grouping)?;
    let mut reduced_case = reduction.case;
    let mut notes = reduction.notes;
    notes.push(
        "convention: inertia constants H are read as MW·s/MVA (seconds) on each machine's own \
         rating and combined as kinetic energies"
            .to_string(),
    );

    let freqs = options.grid.build()?;
    let fit_options =
        FitOptions { allow_unstable: options.allow_unstable_fit, ..FitOptions::default() };

    let mut controller_reports = Vec::new();
    for eq in &reduction.equivalents {
        for kind in [ControllerKind::Avr, ControllerKind::Gov, ControllerKind::Pss] {
            let members = member_controllers(case, &eq.members, kind);
            if members.is_empty() {
                continue;
            }
            let (ctrl, report) = aggregate_controllers(
                &members,
                common_input_for(kind),
                &freqs,
                orders_for(kind, options),
                &fit_options,
            )?;
            let host = reduced_case
                .generators
                .iter_mut()
                .find(|g| g.id == eq.generator.id)
                .expect("equivalent generator present in reduced case");
            host.controllers.push(ctrl.id.clone());
            notes.push(format!(
                "group [{}]: fitted equivalent {} '{}' from {} member controller(s)",
                eq.members.join(", "),
                kind,
                ctrl.id,
                members.len()
            ));
            reduced_case.controllers.push(ctrl);
            controller_reports.push(report);
        }
    }

    validate_case(&reduced_case)?;
    let reduced_solution = solve_powerflow(&reduced_case).map_err(ModelError::from)?;
    let reduced_model =
        DynamicModel::build(&reduced_case, &reduced_solution, options.force_classical)?;

    Ok(ReducedModel {
        selected_mode: ModeSummary::of(mode),
        grouping,
        meshes: reduction.meshes,
        equivalents: reduction.equivalents,
        controller_reports,
        eliminated_buses: reduction.eliminated_buses,
        boundary_residuals: reduction.boundary_residuals,
        notes,
        full_state_count,
        reduced_state_count: reduced_model.state_dim(),
        full_bus_count: case.buses.len(),
        reduced_bus_count: reduced_case.buses.len(),
        case: reduced_case,
    })
}

/// All controllers of `kind` hosted by the group members, paired with their
/// host machines, in member order.
fn member_controllers<'a>(
    case: &'a PowerSystemCase,
    members: &[String],
    kind: ControllerKind,
) -> Vec<(&'a crate::model::Controller, &'a Generator)> {
    let mut out = Vec::new();
    for member in members {
        let Some(gen) = case.generator(member) else { continue };
        for cid in &gen.controllers {
            if let Some(ctrl) = case.controller(cid) {
                if ctrl.kind == kind {
                    out.push((ctrl, gen));
                }
            }
        }
    }
    out
}
