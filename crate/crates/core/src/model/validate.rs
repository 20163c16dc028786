//! Structural and numerical case validation.
//!
//! Checks run in three passes: record-level invariants (ids, parameter
//! ranges, controller diagrams), topology (zone partition rules and
//! connectivity), and finally a flat-start power-flow solve. All violations
//! are collected before reporting so one pass surfaces every problem.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::powerflow::solve_powerflow;
use super::types::*;
use super::ModelError;

/// One invariant violation, locating the offending record by a JSON-ish path.
#[derive(Debug, Clone)]
pub struct Violation {
    pub locus: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
    /// Iterations and final mismatch of the flat-start solve.
    pub powerflow_iterations: usize,
    pub powerflow_mismatch_pu: f64,
}

struct Checker {
    violations: Vec<Violation>,
    warnings: Vec<String>,
}

impl Checker {
    fn fail(&mut self, locus: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { locus: locus.into(), message: message.into() });
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }
}

/// Validates every case invariant; on success the report carries warnings
/// and the flat-start power-flow figures.
pub fn validate_case(case: &PowerSystemCase) -> Result<ValidationReport, ModelError> {
    let mut ck = Checker { violations: Vec::new(), warnings: Vec::new() };

    check_scalars(case, &mut ck);
    let bus_ids = check_buses(case, &mut ck);
    check_branches(case, &bus_ids, &mut ck);
    check_generators(case, &bus_ids, &mut ck);
    check_loads(case, &bus_ids, &mut ck);
    check_controllers(case, &mut ck);
    check_zones_and_connectivity(case, &bus_ids, &mut ck);

    if !ck.violations.is_empty() {
        return Err(ModelError::Validation(ck.violations));
    }

    // Numerical solvability: the case must carry a consistent operating point.
    let solution = solve_powerflow(case)?;
    Ok(ValidationReport {
        warnings: ck.warnings,
        powerflow_iterations: solution.iterations,
        powerflow_mismatch_pu: solution.max_mismatch_pu,
    })
}

fn check_scalars(case: &PowerSystemCase, ck: &mut Checker) {
    if !(case.base_mva.is_finite() && case.base_mva > 0.0) {
        ck.fail("base_mva", format!("must be finite and positive, got {}", case.base_mva));
    }
    if !(case.f_hz.is_finite() && case.f_hz > 0.0) {
        ck.fail("f_hz", format!("must be finite and positive, got {}", case.f_hz));
    }
    if case.buses.iter().all(|b| b.id != case.slack_bus) {
        ck.fail("slack_bus", format!("references unknown bus '{}'", case.slack_bus));
    }
}

fn check_buses(case: &PowerSystemCase, ck: &mut Checker) -> HashSet<String> {
    let mut seen = HashSet::new();
    for (i, bus) in case.buses.iter().enumerate() {
        let locus = format!("buses[{i}]");
        if !seen.insert(bus.id.clone()) {
            ck.fail(&locus, format!("duplicate bus id '{}'", bus.id));
        }
        if !(bus.base_kv.is_finite() && bus.base_kv > 0.0) {
            ck.fail(&locus, format!("base_kv must be positive, got {}", bus.base_kv));
        }
        if !bus.shunt.re.is_finite() || !bus.shunt.im.is_finite() {
            ck.fail(&locus, "shunt admittance must be finite");
        }
    }
    seen
}

fn check_branches(case: &PowerSystemCase, bus_ids: &HashSet<String>, ck: &mut Checker) {
    for (i, br) in case.branches.iter().enumerate() {
        let locus = format!("branches[{i}]");
        if br.from_bus == br.to_bus {
            ck.fail(&locus, format!("self-loop at bus '{}'", br.from_bus));
        }
        for end in [&br.from_bus, &br.to_bus] {
            if !bus_ids.contains(end) {
                ck.fail(&locus, format!("references unknown bus '{end}'"));
            }
        }
        if !br.series_admittance.re.is_finite() || !br.series_admittance.im.is_finite() {
            ck.fail(&locus, "series_admittance must be finite");
        } else if br.series_admittance.norm() == 0.0 {
            ck.fail(&locus, "series_admittance must be nonzero");
        }
        if !br.shunt_admittance_total.re.is_finite() || !br.shunt_admittance_total.im.is_finite()
        {
            ck.fail(&locus, "shunt_admittance_total must be finite");
        }
        if !(br.tap.is_finite() && br.tap > 0.0) {
            ck.fail(&locus, format!("tap must be positive, got {}", br.tap));
        }
    }
}

fn check_generators(case: &PowerSystemCase, bus_ids: &HashSet<String>, ck: &mut Checker) {
    let mut seen = HashSet::new();
    let mut ctrl_owner: HashMap<&str, &str> = HashMap::new();
    for (i, gen) in case.generators.iter().enumerate() {
        let locus = format!("generators[{i}]");
        if !seen.insert(gen.id.clone()) {
            ck.fail(&locus, format!("duplicate generator id '{}'", gen.id));
        }
        if !bus_ids.contains(&gen.bus) {
            ck.fail(&locus, format!("references unknown bus '{}'", gen.bus));
        }
        for (name, v) in [("rated_mva", gen.rated_mva), ("inertia_h", gen.inertia_h),
                          ("xd_prime", gen.xd_prime)] {
            if !(v.is_finite() && v > 0.0) {
                ck.fail(&locus, format!("{name} must be positive, got {v}"));
            }
        }
        if !(gen.damping_d.is_finite() && gen.damping_d >= 0.0) {
            ck.fail(&locus, format!("damping_d must be ≥ 0, got {}", gen.damping_d));
        }
        if gen.xd.is_some() != gen.td0_prime.is_some() {
            ck.fail(&locus, "xd and td0_prime must be given together (one-axis model)");
        }
        if let (Some(xd), Some(td0)) = (gen.xd, gen.td0_prime) {
            if !(xd.is_finite() && xd > 0.0 && xd >= gen.xd_prime) {
                ck.fail(&locus, format!("xd must be positive and ≥ xd_prime, got {xd}"));
            }
            if !(td0.is_finite() && td0 > 0.0) {
                ck.fail(&locus, format!("td0_prime must be positive, got {td0}"));
            }
        }
        let s = (gen.p_gen.powi(2) + gen.q_gen.powi(2)).sqrt();
        if s > gen.rated_mva {
            ck.warn(format!(
                "generator '{}' dispatched at {:.1} MVA above its {:.1} MVA rating",
                gen.id, s, gen.rated_mva
            ));
        }
        for cid in &gen.controllers {
            if case.controller(cid).is_none() {
                ck.fail(&locus, format!("references unknown controller '{cid}'"));
            }
            if let Some(prev) = ctrl_owner.insert(cid.as_str(), gen.id.as_str()) {
                ck.fail(
                    &locus,
                    format!("controller '{cid}' already attached to generator '{prev}'"),
                );
            }
        }
    }
    for ctrl in &case.controllers {
        if !ctrl_owner.contains_key(ctrl.id.as_str()) {
            ck.warn(format!("controller '{}' is not attached to any generator", ctrl.id));
        }
    }
}

fn check_loads(case: &PowerSystemCase, bus_ids: &HashSet<String>, ck: &mut Checker) {
    for (i, load) in case.loads.iter().enumerate() {
        let locus = format!("loads[{i}]");
        if !bus_ids.contains(&load.bus) {
            ck.fail(&locus, format!("references unknown bus '{}'", load.bus));
        }
        if !(load.p_mw.is_finite() && load.q_mvar.is_finite()) {
            ck.fail(&locus, "p_mw/q_mvar must be finite");
        }
        if !load.y_shunt.re.is_finite() || !load.y_shunt.im.is_finite() {
            ck.fail(&locus, "y_shunt must be finite");
        }
    }
}

/// Signals a controller may tap as path inputs. Machine-side outputs (efd,
/// delta_pmech) are not measurable inputs; vpss is only meaningful on an AVR,
/// where the stabilizer output is summed in.
const MEASURABLE: [SignalKind; 4] = [
    SignalKind::DeltaOmega,
    SignalKind::DeltaPe,
    SignalKind::DeltaVt,
    SignalKind::Vref,
];

fn check_controllers(case: &PowerSystemCase, ck: &mut Checker) {
    let mut seen = HashSet::new();
    for (i, ctrl) in case.controllers.iter().enumerate() {
        let locus = format!("controllers[{i}]");
        if !seen.insert(ctrl.id.clone()) {
            ck.fail(&locus, format!("duplicate controller id '{}'", ctrl.id));
        }
        if ctrl.inputs.is_empty() {
            ck.fail(&locus, "at least one input path is required");
        }
        let mut signals = BTreeSet::new();
        for (p, path) in ctrl.inputs.iter().enumerate() {
            let plocus = format!("{locus}.inputs[{p}]");
            if !signals.insert(path.signal) {
                ck.fail(&plocus, format!("duplicate input signal '{}'", path.signal));
            }
            let input_ok = MEASURABLE.contains(&path.signal)
                || (path.signal == SignalKind::Vpss && ctrl.kind == ControllerKind::Avr);
            if !input_ok {
                ck.fail(
                    &plocus,
                    format!("signal '{}' is not a valid {} input", path.signal, ctrl.kind),
                );
            }
            for (b, block) in path.blocks.iter().enumerate() {
                let blocus = format!("{plocus}.blocks[{b}]");
                if !block.kind.params_finite() {
                    ck.fail(&blocus, "block parameters must be finite");
                }
                match &block.kind {
                    BlockKind::Lag { t, .. } | BlockKind::Washout { t } => {
                        if *t <= 0.0 {
                            ck.fail(&blocus, format!("time constant must be positive, got {t}"));
                        }
                    }
                    BlockKind::LeadLag { t2, .. } => {
                        if *t2 <= 0.0 {
                            ck.fail(&blocus, format!("t2 must be positive, got {t2}"));
                        }
                    }
                    BlockKind::Rational { num, den } => {
                        if den.iter().all(|c| *c == 0.0) {
                            ck.fail(&blocus, "rational denominator must be nonzero");
                        } else if num.iter().any(|c| *c != 0.0) && block.kind.relative_degree() < 0
                        {
                            ck.fail(&blocus, "rational block must be proper (deg num ≤ deg den)");
                        }
                    }
                    _ => {}
                }
                if block.limits.is_some() {
                    ck.warn(format!(
                        "controller '{}' carries output limits on a block; limits are parsed but \
                         ignored (linear analysis only)",
                        ctrl.id
                    ));
                }
            }
        }
        if ctrl.output_signal != ctrl.kind.expected_output() {
            ck.fail(
                &locus,
                format!(
                    "a {} must output '{}', got '{}'",
                    ctrl.kind,
                    ctrl.kind.expected_output(),
                    ctrl.output_signal
                ),
            );
        }
    }
}

fn check_zones_and_connectivity(
    case: &PowerSystemCase,
    bus_ids: &HashSet<String>,
    ck: &mut Checker,
) {
    if case.buses.is_empty() {
        ck.fail("buses", "case must contain at least one bus");
        return;
    }
    let zone_of: BTreeMap<&str, Zone> =
        case.buses.iter().map(|b| (b.id.as_str(), b.zone)).collect();

    // Adjacency over valid branches only; invalid ones were reported above.
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for br in &case.branches {
        if bus_ids.contains(&br.from_bus) && bus_ids.contains(&br.to_bus) {
            adj.entry(br.from_bus.as_str()).or_default().push(br.to_bus.as_str());
            adj.entry(br.to_bus.as_str()).or_default().push(br.from_bus.as_str());
        }
    }

    // Zone discipline: internal and external areas may only touch through
    // boundary buses, and each boundary bus must actually bridge the two.
    for (i, br) in case.branches.iter().enumerate() {
        if let (Some(&zf), Some(&zt)) =
            (zone_of.get(br.from_bus.as_str()), zone_of.get(br.to_bus.as_str()))
        {
            if matches!(
                (zf, zt),
                (Zone::Internal, Zone::External) | (Zone::External, Zone::Internal)
            ) {
                ck.fail(
                    format!("branches[{i}]"),
                    format!(
                        "branch '{}'-'{}' connects internal and external zones directly; \
                         the frontier must pass through boundary buses",
                        br.from_bus, br.to_bus
                    ),
                );
            }
        }
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.zone != Zone::Boundary {
            continue;
        }
        let neigh = adj.get(bus.id.as_str()).cloned().unwrap_or_default();
        let has_internal = neigh.iter().any(|n| zone_of.get(n) == Some(&Zone::Internal));
        let has_external = neigh.iter().any(|n| zone_of.get(n) == Some(&Zone::External));
        if !(has_internal && has_external) {
            ck.fail(
                format!("buses[{i}]"),
                format!(
                    "boundary bus '{}' must have at least one internal and one external neighbor",
                    bus.id
                ),
            );
        }
    }

    // Connectivity: every bus reachable from the slack.
    if !bus_ids.contains(&case.slack_bus) {
        return; // reported already; BFS start undefined
    }
    let mut reached: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    reached.insert(case.slack_bus.as_str());
    queue.push_back(case.slack_bus.as_str());
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(u).into_iter().flatten() {
            if reached.insert(v) {
                queue.push_back(v);
            }
        }
    }
    let unreached: Vec<&str> = case
        .buses
        .iter()
        .map(|b| b.id.as_str())
        .filter(|id| !reached.contains(id))
        .collect();
    if !unreached.is_empty() {
        ck.fail(
            "branches",
            format!(
                "network is not connected: buses [{}] unreachable from slack '{}'",
                unreached.join(", "),
                case.slack_bus
            ),
        );
    }
}
