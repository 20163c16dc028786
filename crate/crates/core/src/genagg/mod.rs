//! Generator aggregation: collapses a coherent group into one equivalent
//! machine on the combined MVA base.
//!
//! Ratings sum, kinetic energy H·S is conserved exactly, damping aggregates
//! like inertia (MVA-weighted), and the transient reactance is the parallel
//! combination of member reactances after conversion to the combined base —
//! the unique consistent choice for units paralleled at one bus.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{BusVoltageSolution, GenId, Generator, PowerSystemCase};

#[derive(Debug, Error)]
pub enum GenaggError {
    #[error("cannot aggregate an empty generator group")]
    EmptyGroup,
    #[error("generator '{generator}' has non-positive inertia H = {inertia_h}")]
    NonpositiveInertia { generator: GenId, inertia_h: f64 },
}

/// Per-member record of the re-basing arithmetic, kept for the provenance log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MemberRecord {
    pub id: GenId,
    pub rated_mva: f64,
    /// Kinetic energy H·S in MW·s.
    pub kinetic_energy_mws: f64,
    /// Member x'd converted to the combined base.
    pub xd_prime_on_combined: f64,
    pub weight: f64,
    /// Internal EMF at the base case (present when aggregated with a solved
    /// operating point).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emf: Option<Complex64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivalentGenerator {
    /// The aggregate machine. Its `bus` is the first member's terminal; the
    /// caller re-homes it onto the REI equivalent bus.
    pub generator: Generator,
    pub members: Vec<GenId>,
    pub base_conversion_log: Vec<MemberRecord>,
    /// Current-weighted complex mean of member internal EMFs at the base
    /// case (informational: the simulator re-derives the equivalent's EMF
    /// from the reduced case's own power flow).
    pub emf_mean: Option<Complex64>,
    /// Max pairwise spread of member internal EMF angles, degrees.
    pub emf_angle_spread_deg: Option<f64>,
}

/// Aggregates a coherent group into one machine. Member order does not
/// affect the result: members are canonicalized by id first.
pub fn aggregate_generators(members: &[&Generator]) -> Result<EquivalentGenerator, GenaggError> {
    aggregate_inner(members, None)
}

/// [`aggregate_generators`] with base-case internal EMFs recorded per member
/// (classical EMF behind x'd, machine current from the solved dispatch).
pub fn aggregate_generators_at(
    members: &[&Generator],
    case: &PowerSystemCase,
    solution: &BusVoltageSolution,
) -> Result<EquivalentGenerator, GenaggError> {
    aggregate_inner(members, Some((case, solution)))
}

fn aggregate_inner(
    members: &[&Generator],
    op: Option<(&PowerSystemCase, &BusVoltageSolution)>,
) -> Result<EquivalentGenerator, GenaggError> {
    if members.is_empty() {
        return Err(GenaggError::EmptyGroup);
    }
    if let Some(bad) = members.iter().find(|g| g.inertia_h <= 0.0) {
        return Err(GenaggError::NonpositiveInertia {
            generator: bad.id.clone(),
            inertia_h: bad.inertia_h,
        });
    }
    let mut members: Vec<&Generator> = members.to_vec();
    members.sort_by(|a, b| a.id.cmp(&b.id));

    let s_eq: f64 = members.iter().map(|g| g.rated_mva).sum();
    let energy: f64 = members.iter().map(|g| g.inertia_h * g.rated_mva).sum();
    let h_eq = energy / s_eq;
    let d_eq = members.iter().map(|g| g.damping_d * g.rated_mva).sum::<f64>() / s_eq;
    // Parallel reactance on the combined base: member x on S_eq is
    // x_i·(S_eq/S_i), so 1/x_eq = Σ S_i/(x_i·S_eq).
    let xdp_eq = s_eq / members.iter().map(|g| g.rated_mva / g.xd_prime).sum::<f64>();

    // One-axis parameters carry over only when every member has them.
    let (xd_eq, td0_eq) = if members.iter().all(|g| g.is_one_axis()) {
        let xd = s_eq / members.iter().map(|g| g.rated_mva / g.xd.unwrap()).sum::<f64>();
        let td0 = members
            .iter()
            .map(|g| g.td0_prime.unwrap() * g.rated_mva)
            .sum::<f64>()
            / s_eq;
        (Some(xd), Some(td0))
    } else {
        (None, None)
    };

    // Base-case EMFs for the log: E = V + j·x'd_sys·I with I = conj(S/V).
    let emfs: Option<Vec<Complex64>> = op.map(|(case, solution)| {
        members
            .iter()
            .map(|g| {
                let v = solution.voltage(&g.bus).expect("validated generator bus");
                let s = solution.generator_injection_pu(case, g);
                let i = (s / v).conj();
                let x_sys = g.xd_prime * case.base_mva / g.rated_mva;
                v + Complex64::new(0.0, x_sys) * i
            })
            .collect()
    });
    let (emf_mean, emf_spread) = match (&emfs, op) {
        (Some(emfs), Some((case, solution))) => {
            let currents: Vec<Complex64> = members
                .iter()
                .zip(emfs)
                .map(|(g, _)| {
                    let v = solution.voltage(&g.bus).unwrap();
                    (solution.generator_injection_pu(case, g) / v).conj()
                })
                .collect();
            let i_tot: Complex64 = currents.iter().sum();
            let mean = if i_tot.norm() > 1e-12 {
                emfs.iter().zip(&currents).map(|(e, i)| e * i).sum::<Complex64>() / i_tot
            } else {
                emfs.iter().sum::<Complex64>() / emfs.len() as f64
            };
            let spread = emfs
                .iter()
                .flat_map(|a| emfs.iter().map(move |b| (a.arg() - b.arg()).abs()))
                .fold(0.0_f64, f64::max)
                .to_degrees();
            (Some(mean), Some(spread))
        }
        _ => (None, None),
    };
    if let Some(spread) = emf_spread {
        if spread > 20.0 {
            log::warn!(
                "aggregated group [{}] has internal EMF angle spread {spread:.1}°; \
                 coherency is questionable",
                members.iter().map(|g| g.id.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
    }

    let log: Vec<MemberRecord> = members
        .iter()
        .enumerate()
        .map(|(k, g)| MemberRecord {
            id: g.id.clone(),
            rated_mva: g.rated_mva,
            kinetic_energy_mws: g.inertia_h * g.rated_mva,
            xd_prime_on_combined: g.xd_prime * s_eq / g.rated_mva,
            weight: g.rated_mva / s_eq,
            emf: emfs.as_ref().map(|e| e[k]),
        })
        .collect();

    let first = members[0];
    let generator = Generator {
        id: format!("eq_{}", first.id),
        bus: first.bus.clone(),
        rated_mva: s_eq,
        inertia_h: h_eq,
        xd_prime: xdp_eq,
        damping_d: d_eq,
        p_gen: members.iter().map(|g| g.p_gen).sum(),
        q_gen: members.iter().map(|g| g.q_gen).sum(),
        controllers: vec![],
        xd: xd_eq,
        td0_prime: td0_eq,
    };

    Ok(EquivalentGenerator {
        generator,
        members: members.iter().map(|g| g.id.clone()).collect(),
        base_conversion_log: log,
        emf_mean,
        emf_angle_spread_deg: emf_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gen(id: &str, s: f64, h: f64, xdp: f64) -> Generator {
        Generator {
            id: id.into(),
            bus: "b".into(),
            rated_mva: s,
            inertia_h: h,
            xd_prime: xdp,
            damping_d: 1.0,
            p_gen: 0.6 * s,
            q_gen: 0.1 * s,
            controllers: vec![],
            xd: None,
            td0_prime: None,
        }
    }

    #[test]
    fn single_member_is_identity() {
        let g = gen("g1", 250.0, 4.2, 0.27);
        let eq = aggregate_generators(&[&g]).unwrap();
        assert_eq!(eq.generator.rated_mva, 250.0);
        assert_eq!(eq.generator.inertia_h, 4.2);
        assert_relative_eq!(eq.generator.xd_prime, 0.27, max_relative = 1e-14);
        assert_eq!(eq.generator.damping_d, 1.0);
        assert_eq!(eq.generator.p_gen, g.p_gen);
        assert_eq!(eq.generator.q_gen, g.q_gen);
        assert_eq!(eq.members, vec!["g1".to_string()]);
    }

    #[test]
    fn two_identical_units_keep_per_unit_parameters() {
        // Hand per-unit oracle: each 0.3 pu / 100 MVA unit is 0.6 pu on the
        // 200 MVA base; two in parallel give 0.3 pu on 200 MVA.
        let a = gen("a", 100.0, 3.0, 0.3);
        let b = gen("b", 100.0, 3.0, 0.3);
        let eq = aggregate_generators(&[&a, &b]).unwrap();
        assert_relative_eq!(eq.generator.rated_mva, 200.0, max_relative = 1e-14);
        assert_relative_eq!(eq.generator.inertia_h, 3.0, max_relative = 1e-14);
        assert_relative_eq!(eq.generator.xd_prime, 0.3, max_relative = 1e-14);
        assert_relative_eq!(eq.base_conversion_log[0].xd_prime_on_combined, 0.6, max_relative = 1e-14);
    }

    #[test]
    fn kinetic_energy_sum_oracle() {
        // (2·50 + 4·150)/200 = 3.5 s on 200 MVA.
        let a = gen("a", 50.0, 2.0, 0.3);
        let b = gen("b", 150.0, 4.0, 0.3);
        let eq = aggregate_generators(&[&a, &b]).unwrap();
        assert_relative_eq!(eq.generator.inertia_h, 3.5, max_relative = 1e-14);
        let energy: f64 = eq.base_conversion_log.iter().map(|m| m.kinetic_energy_mws).sum();
        assert_relative_eq!(
            eq.generator.inertia_h * eq.generator.rated_mva,
            energy,
            max_relative = 1e-12
        );
    }

    #[test]
    fn admittance_conservation_on_common_base() {
        let a = gen("a", 80.0, 3.0, 0.25);
        let b = gen("b", 120.0, 3.0, 0.35);
        let c = gen("c", 55.0, 3.0, 0.19);
        let eq = aggregate_generators(&[&a, &b, &c]).unwrap();
        let sum_b: f64 = [&a, &b, &c]
            .iter()
            .map(|g| 1.0 / (g.xd_prime * eq.generator.rated_mva / g.rated_mva))
            .sum();
        assert_relative_eq!(1.0 / eq.generator.xd_prime, sum_b, max_relative = 1e-12);
    }

    #[test]
    fn member_order_does_not_matter() {
        let a = gen("a", 80.0, 2.5, 0.25);
        let b = gen("b", 120.0, 4.0, 0.35);
        let ab = aggregate_generators(&[&a, &b]).unwrap();
        let ba = aggregate_generators(&[&b, &a]).unwrap();
        assert_eq!(ab.generator, ba.generator);
        assert_eq!(ab.members, ba.members);
    }

    #[test]
    fn empty_group_is_rejected() {
        assert!(matches!(aggregate_generators(&[]), Err(GenaggError::EmptyGroup)));
    }
}
