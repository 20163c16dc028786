//! End-to-end static reduction: REI meshes for coherent groups, Kron
//! elimination of the remaining external buses, and reassembly into a case
//! whose internal zone is untouched.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::admittance::AdmittanceMatrix;
use super::kron::kron_eliminate;
use super::rei::{build_rei, ReiMesh};
use super::NetredError;
use crate::genagg::{aggregate_generators_at, EquivalentGenerator};
use crate::modal::CoherencyGrouping;
use crate::model::{
    solve_powerflow, Branch, Bus, BusId, BusVoltageSolution, PowerSystemCase, Zone,
};

/// Admittances below this magnitude (pu) are dropped when reconstructing
/// branches and shunts from the reduced matrix.
const NEGLIGIBLE_Y: f64 = 1e-12;
/// Required agreement between original and reduced base-case boundary
/// voltages (pu magnitude, rad angle).
const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundaryResidual {
    pub bus: BusId,
    pub voltage_mag_err: f64,
    pub angle_err_rad: f64,
}

#[derive(Debug)]
pub struct NetworkReduction {
    /// Reduced case skeleton: internal zone untouched, each coherent group
    /// replaced by its REI equivalent bus and aggregate generator, external
    /// controllers dropped (controller aggregation is a separate stage).
    pub case: PowerSystemCase,
    pub meshes: Vec<ReiMesh>,
    pub equivalents: Vec<EquivalentGenerator>,
    pub eliminated_buses: Vec<BusId>,
    pub boundary_residuals: Vec<BoundaryResidual>,
    pub notes: Vec<String>,
    /// True when there was nothing to reduce (empty external zone).
    pub identity: bool,
}

/// Reduces the external zone of `case` about the solved base case. The
/// grouping must partition the external generators; external buses that end
/// up injection-free after load conversion are Kron-eliminated.
pub fn reduce_network(
    case: &PowerSystemCase,
    solution: &BusVoltageSolution,
    grouping: &CoherencyGrouping,
) -> Result<NetworkReduction, NetredError> {
    let zone_of: BTreeMap<&str, Zone> =
        case.buses.iter().map(|b| (b.id.as_str(), b.zone)).collect();
    let external_buses: Vec<&Bus> =
        case.buses.iter().filter(|b| b.zone == Zone::External).collect();

    if external_buses.is_empty() {
        return Ok(NetworkReduction {
            case: case.clone(),
            meshes: vec![],
            equivalents: vec![],
            eliminated_buses: vec![],
            boundary_residuals: vec![],
            notes: vec!["external zone is empty; nothing to reduce".into()],
            identity: true,
        });
    }
    if zone_of.get(case.slack_bus.as_str()) == Some(&Zone::External) {
        return Err(NetredError::Verification(format!(
            "slack bus '{}' lies in the external zone; the slack must be retained",
            case.slack_bus
        )));
    }

    // Canonicalize and check the grouping against the external generators.
    let mut groups: Vec<Vec<String>> = grouping
        .groups
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.sort();
            g
        })
        .filter(|g| !g.is_empty())
        .collect();
    groups.sort();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, group) in groups.iter().enumerate() {
        for id in group {
            if seen.insert(id.as_str(), k).is_some() {
                return Err(NetredError::DuplicateGroupMember { generator: id.clone() });
            }
        }
    }
    let missing: Vec<String> = case
        .external_generators()
        .iter()
        .filter(|g| !seen.contains_key(g.id.as_str()))
        .map(|g| g.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(NetredError::GroupingIncomplete { generators: missing });
    }

    // REI mesh and aggregate machine per group.
    let mut meshes: Vec<ReiMesh> = Vec::with_capacity(groups.len());
    let mut equivalents: Vec<EquivalentGenerator> = Vec::with_capacity(groups.len());
    let mut notes = vec![
        "REI equivalents are exact at the base case only; accuracy degrades away from the \
         anchoring operating point"
            .to_string(),
    ];
    for group in &groups {
        let mesh = build_rei(group, case, solution)?;
        let members: Vec<_> =
            group.iter().map(|id| case.generator(id).expect("checked member")).collect();
        let mut eq = aggregate_generators_at(&members, case, solution)?;
        eq.generator.bus = mesh.equivalent_bus.clone();
        eq.generator.p_gen = mesh.equivalent_injection.re * case.base_mva;
        eq.generator.q_gen = mesh.equivalent_injection.im * case.base_mva;
        notes.push(format!(
            "group [{}]: terminal-voltage angle spread {:.3}°, REI power residual {:.3e} pu",
            group.join(", "),
            mesh.angle_spread_deg,
            mesh.power_residual_pu
        ));
        meshes.push(mesh);
        equivalents.push(eq);
    }

    // External subsystem admittance over [boundary, R_k, external, G_k].
    let boundary: Vec<&Bus> =
        case.buses.iter().filter(|b| b.zone == Zone::Boundary).collect();
    let mut order: Vec<BusId> = boundary.iter().map(|b| b.id.clone()).collect();
    order.extend(meshes.iter().map(|m| m.equivalent_bus.clone()));
    order.extend(external_buses.iter().map(|b| b.id.clone()));
    order.extend(meshes.iter().map(|m| m.ground_bus.clone()));
    let keep: Vec<BusId> = order[..boundary.len() + meshes.len()].to_vec();

    let mut sub = AdmittanceMatrix::zeros(order);
    for br in &case.branches {
        let zf = zone_of[br.from_bus.as_str()];
        let zt = zone_of[br.to_bus.as_str()];
        let in_sub = (zf == Zone::External && zt != Zone::Internal)
            || (zt == Zone::External && zf != Zone::Internal);
        if in_sub {
            let f = sub.index_of(&br.from_bus).unwrap();
            let t = sub.index_of(&br.to_bus).unwrap();
            sub.add_branch(f, t, br.series_admittance, br.shunt_admittance_total, br.tap);
        }
    }
    for bus in &external_buses {
        let i = sub.index_of(&bus.id).unwrap();
        sub.add_shunt(i, bus.shunt);
    }
    for load in &case.loads {
        if zone_of[load.bus.as_str()] != Zone::External {
            continue;
        }
        let i = sub.index_of(&load.bus).unwrap();
        let mut y = load.y_shunt;
        let s = load.s_pu(case.base_mva);
        if s.norm() > 0.0 {
            let v = solution.voltage(&load.bus).expect("validated load bus");
            y += s.conj() / v.norm_sqr();
        }
        sub.add_shunt(i, y);
    }
    for mesh in &meshes {
        let g = sub.index_of(&mesh.ground_bus).unwrap();
        let r = sub.index_of(&mesh.equivalent_bus).unwrap();
        for (bus, y) in &mesh.member_branches {
            let i = sub.index_of(bus).unwrap();
            sub.add_branch(i, g, *y, Complex64::new(0.0, 0.0), 1.0);
        }
        sub.add_branch(g, r, mesh.ground_branch, Complex64::new(0.0, 0.0), 1.0);
    }

    let reduced_y = kron_eliminate(&sub, &keep)?;

    // Reassemble the case.
    let shunt_add: Vec<Complex64> = (0..reduced_y.dim())
        .map(|i| (0..reduced_y.dim()).map(|j| reduced_y.matrix()[(i, j)]).sum())
        .collect();

    let mut buses: Vec<Bus> = Vec::new();
    for bus in &case.buses {
        match bus.zone {
            Zone::Internal => buses.push((*bus).clone()),
            Zone::Boundary => {
                let mut b = (*bus).clone();
                let add = shunt_add[reduced_y.index_of(&b.id).unwrap()];
                if add.norm() > NEGLIGIBLE_Y {
                    b.shunt += add;
                }
                buses.push(b);
            }
            Zone::External => {}
        }
    }
    for (mesh, group) in meshes.iter().zip(&groups) {
        let first_gen = case.generator(&group[0]).unwrap();
        let base_kv = case.bus(&first_gen.bus).map(|b| b.base_kv).unwrap_or(1.0);
        let add = shunt_add[reduced_y.index_of(&mesh.equivalent_bus).unwrap()];
        buses.push(Bus {
            id: mesh.equivalent_bus.clone(),
            base_kv,
            zone: Zone::External,
            shunt: if add.norm() > NEGLIGIBLE_Y { add } else { Complex64::new(0.0, 0.0) },
        });
    }

    let mut branches: Vec<Branch> = case
        .branches
        .iter()
        .filter(|br| {
            zone_of[br.from_bus.as_str()] != Zone::External
                && zone_of[br.to_bus.as_str()] != Zone::External
        })
        .cloned()
        .collect();
    for i in 0..reduced_y.dim() {
        for j in (i + 1)..reduced_y.dim() {
            let y = -reduced_y.matrix()[(i, j)];
            if y.norm() > NEGLIGIBLE_Y {
                branches.push(Branch {
                    from_bus: reduced_y.order()[i].clone(),
                    to_bus: reduced_y.order()[j].clone(),
                    series_admittance: y,
                    shunt_admittance_total: Complex64::new(0.0, 0.0),
                    tap: 1.0,
                });
            }
        }
    }

    let mut generators: Vec<_> = case
        .generators
        .iter()
        .filter(|g| zone_of[g.bus.as_str()] != Zone::External)
        .cloned()
        .collect();
    generators.extend(equivalents.iter().map(|e| e.generator.clone()));

    let retained_ctrl_ids: Vec<&str> = generators
        .iter()
        .flat_map(|g| g.controllers.iter().map(|c| c.as_str()))
        .collect();
    let controllers = case
        .controllers
        .iter()
        .filter(|c| retained_ctrl_ids.contains(&c.id.as_str()))
        .cloned()
        .collect();

    let loads = case
        .loads
        .iter()
        .filter(|l| zone_of[l.bus.as_str()] != Zone::External)
        .cloned()
        .collect();

    let reduced_case = PowerSystemCase {
        base_mva: case.base_mva,
        f_hz: case.f_hz,
        slack_bus: case.slack_bus.clone(),
        buses,
        branches,
        generators,
        controllers,
        loads,
    };

    // Verify: the reduced case must validate, solve, and reproduce the
    // retained buses' base-case voltages.
    crate::model::validate_case(&reduced_case)?;
    let reduced_solution = solve_powerflow(&reduced_case).map_err(crate::model::ModelError::from)?;
    let boundary_residuals =
        voltage_residuals(case, solution, &reduced_case, &reduced_solution);
    for r in &boundary_residuals {
        if r.voltage_mag_err > BOUNDARY_TOL || r.angle_err_rad > BOUNDARY_TOL {
            return Err(NetredError::Verification(format!(
                "boundary bus '{}' voltage moved by |ΔV| = {:.3e} pu, Δθ = {:.3e} rad in the \
                 reduced base case (tolerance {BOUNDARY_TOL:.0e})",
                r.bus, r.voltage_mag_err, r.angle_err_rad
            )));
        }
    }

    let eliminated_buses: Vec<BusId> =
        external_buses.iter().map(|b| b.id.clone()).collect();

    Ok(NetworkReduction {
        case: reduced_case,
        meshes,
        equivalents,
        eliminated_buses,
        boundary_residuals,
        notes,
        identity: false,
    })
}

fn voltage_residuals(
    case: &PowerSystemCase,
    full: &BusVoltageSolution,
    reduced_case: &PowerSystemCase,
    reduced: &BusVoltageSolution,
) -> Vec<BoundaryResidual> {
    reduced_case
        .buses
        .iter()
        .filter(|b| case.bus(&b.id).is_some())
        .map(|b| {
            let v0 = full.voltage(&b.id).unwrap();
            let v1 = reduced.voltage(&b.id).unwrap();
            let mut da = (v1.arg() - v0.arg()).abs();
            if da > std::f64::consts::PI {
                da = 2.0 * std::f64::consts::PI - da;
            }
            BoundaryResidual {
                bus: b.id.clone(),
                voltage_mag_err: (v1.norm() - v0.norm()).abs(),
                angle_err_rad: da,
            }
        })
        .collect()
}
