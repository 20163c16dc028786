//! Zero-power-balance REI mesh construction.
//!
//! Each coherent group's generator injections are moved through fictitious
//! branches to a common ground node held at V = 0 and from there to a single
//! equivalent bus. Admittances are chosen so every fictitious branch carries
//! exactly the member's base-case injection, which makes the mesh lossless at
//! the operating point: with member injection S_i at voltage V_i,
//!
//! * member branch      `y_iG = −conj(S_i) / |V_i|²`,
//! * collected current  `I_R  = Σ conj(S_i / V_i)`,
//! * equivalent voltage `V_R  = S_R / conj(I_R)` with `S_R = Σ S_i`,
//! * ground branch      `y_GR = I_R / V_R`.

use num_complex::Complex64;

use super::NetredError;
use crate::model::{BusId, BusVoltageSolution, GenId, PowerSystemCase, Zone};

/// Total group injection below this magnitude (pu) makes V_R undefined.
const MIN_INJECTION_PU: f64 = 1e-9;

#[derive(Debug, Clone, serde::Serialize)]
pub struct ReiMesh {
    /// Member generator ids, sorted.
    pub group: Vec<GenId>,
    pub equivalent_bus: BusId,
    pub ground_bus: BusId,
    /// Fictitious branch admittance from each member's terminal bus to the
    /// ground node, keyed by terminal bus id (one entry per member).
    pub member_branches: Vec<(BusId, Complex64)>,
    /// Admittance of the ground–equivalent branch.
    pub ground_branch: Complex64,
    /// Injection-weighted equivalent bus voltage at the base case.
    pub equivalent_voltage: Complex64,
    /// Sum of member injections (pu); the power injected at the equivalent bus.
    pub equivalent_injection: Complex64,
    /// Mesh complex-power balance residual at the base case (pu).
    pub power_residual_pu: f64,
    /// Max pairwise member terminal-voltage angle spread (degrees); REI
    /// absorbs the spread in the ground node, but a large value signals a
    /// poorly coherent group.
    pub angle_spread_deg: f64,
}

/// Builds the REI mesh for one coherent group of external generators at the
/// solved base case.
pub fn build_rei(
    group: &[GenId],
    case: &PowerSystemCase,
    solution: &BusVoltageSolution,
) -> Result<ReiMesh, NetredError> {
    let mut members: Vec<GenId> = group.to_vec();
    members.sort();
    members.dedup();
    if members.is_empty() {
        return Err(NetredError::GroupingIncomplete { generators: vec![] });
    }

    let mut injections = Vec::with_capacity(members.len());
    for id in &members {
        let gen = case
            .generator(id)
            .ok_or_else(|| NetredError::UnknownGenerator(id.clone()))?;
        if case.generator_zone(gen) != Some(Zone::External) {
            return Err(NetredError::GroupNotExternal { generator: id.clone() });
        }
        let s = solution.generator_injection_pu(case, gen);
        let v = solution.voltage(&gen.bus).expect("validated generator bus");
        injections.push((gen.bus.clone(), s, v));
    }

    let s_r: Complex64 = injections.iter().map(|(_, s, _)| s).sum();
    let i_r: Complex64 = injections.iter().map(|(_, s, v)| (s / v).conj()).sum();
    if s_r.norm() < MIN_INJECTION_PU || i_r.norm() < MIN_INJECTION_PU {
        return Err(NetredError::ZeroInjectionGroup {
            group: members,
            magnitude: s_r.norm(),
        });
    }
    let v_r = s_r / i_r.conj();
    let y_gr = i_r / v_r;

    let member_branches: Vec<(BusId, Complex64)> = injections
        .iter()
        .map(|(bus, s, v)| (bus.clone(), -s.conj() / v.norm_sqr()))
        .collect();

    // Zero-loss check, reconstructed from the mesh admittances rather than
    // the defining formulas: power injected at R through y_GR minus power
    // delivered to each member through y_iG.
    let s_at_r = v_r * (y_gr * v_r).conj();
    let delivered: Complex64 = injections
        .iter()
        .zip(&member_branches)
        .map(|((_, _, v), (_, y))| -(v * (y * v).conj()))
        .sum();
    let power_residual_pu = (s_at_r - delivered).norm();

    let angles: Vec<f64> = injections.iter().map(|(_, _, v)| v.arg()).collect();
    let angle_spread_deg = angles
        .iter()
        .flat_map(|a| angles.iter().map(move |b| (a - b).abs()))
        .fold(0.0_f64, f64::max)
        .to_degrees();

    let first = &members[0];
    Ok(ReiMesh {
        equivalent_bus: format!("rei_{first}"),
        ground_bus: format!("rei_{first}_gnd"),
        group: members,
        member_branches,
        ground_branch: y_gr,
        equivalent_voltage: v_r,
        equivalent_injection: s_r,
        power_residual_pu,
        angle_spread_deg,
    })
}
