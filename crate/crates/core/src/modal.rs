//! Small-signal analysis: linearization about the solved operating point,
//! eigenvalue/eigenvector extraction, mode selection, and coherency grouping
//! of external generators from the selected mode's speed-deviation shape.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{DynamicModel, DynamicsError};
use crate::model::GenId;

#[derive(Debug, Error)]
pub enum ModalError {
    #[error("network admittance matrix is singular: {0}")]
    SingularNetwork(String),
    #[error(
        "eigenvector iteration for eigenvalue {:.6}{:+.6}j stalled at residual {residual:.3e}",
        eigenvalue.re, eigenvalue.im
    )]
    ConvergenceFailure { eigenvalue: Complex64, residual: f64 },
    #[error("no oscillatory mode lies in the band [{lo_hz}, {hi_hz}] Hz")]
    NoModeInBand { lo_hz: f64, hi_hz: f64 },
    #[error(
        "band [{lo_hz}, {hi_hz}] Hz contains {} modes (at {candidates_hz:?} Hz); narrow the band or select by index",
        candidates_hz.len()
    )]
    AmbiguousMode { lo_hz: f64, hi_hz: f64, candidates_hz: Vec<f64> },
    #[error("mode index {index} out of range; the analysis holds {count} modes")]
    BadIndex { index: usize, count: usize },
    #[error(transparent)]
    Dynamics(DynamicsError),
}

impl From<DynamicsError> for ModalError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::SingularNetwork(msg) => ModalError::SingularNetwork(msg),
            other => ModalError::Dynamics(other),
        }
    }
}

/// One eigenvalue with its right eigenvector. The shape is normalized so its
/// largest entry is exactly 1 + 0j, which fixes both scale and phase.
#[derive(Debug, Clone)]
pub struct Mode {
    pub eigenvalue: Complex64,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub shape: DVector<Complex64>,
}

#[derive(Debug)]
pub struct ModalAnalysis {
    /// State matrix of the linearized system.
    pub a: DMatrix<f64>,
    pub labels: Vec<String>,
    /// One entry per real eigenvalue and per conjugate pair (the member with
    /// nonnegative imaginary part), sorted by frequency then real part.
    pub modes: Vec<Mode>,
}

/// How the reduction picks its anchoring mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSelector {
    /// The single oscillatory mode inside a frequency band (Hz).
    Band { lo_hz: f64, hi_hz: f64 },
    /// Directly by position in the sorted mode table.
    Index(usize),
}

/// State matrix of the model linearized at its equilibrium.
pub fn linearize(model: &DynamicModel) -> Result<(DMatrix<f64>, Vec<String>), ModalError> {
    let x0 = model.equilibrium();
    let (_, a) = model.rhs_and_jacobian(&x0, model.base_op())?;
    Ok((a, model.state_labels().to_vec()))
}

/// Full eigenanalysis of the linearized model.
pub fn analyze(model: &DynamicModel) -> Result<ModalAnalysis, ModalError> {
    let (a, labels) = linearize(model)?;
    let modes = eigen_modes(&a)?;
    Ok(ModalAnalysis { a, labels, modes })
}

/// Parlett–Reinsch balancing: a diagonal similarity with power-of-two scales
/// that equalizes row/column norms. Exact in floating point (scales are
/// powers of the radix), and it substantially improves QR convergence on
/// matrices mixing 1e-2 controller poles with the 1e2 synchronous speed.
fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let radix: f64 = 2.0;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / radix {
                c *= radix;
                r /= radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix;
                r *= radix;
                f /= radix;
            }
            if (c + r) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

fn eigen_modes(a: &DMatrix<f64>) -> Result<Vec<Mode>, ModalError> {
    let n = a.nrows();
    // The unbounded matrix-level eigenvalue routine can cycle on repeated
    // eigenvalues (identical controller chains produce them), so run the
    // capped Schur decomposition on a balanced copy, loosening the deflation
    // threshold if the tight one stalls. Any accuracy conceded here is
    // recovered per eigenvalue by the Rayleigh-refined inverse iteration
    // below.
    let balanced = balance(a);
    let schur = [f64::EPSILON, 1e-13, 1e-11, 1e-9]
        .iter()
        .find_map(|&eps| nalgebra::Schur::try_new(balanced.clone(), eps, 50_000))
        .ok_or(ModalError::ConvergenceFailure {
            eigenvalue: Complex64::new(f64::NAN, f64::NAN),
            residual: f64::NAN,
        })?;
    let eigvals = schur.complex_eigenvalues();
    let a_c = a.map(|v| Complex64::new(v, 0.0));
    let a_scale = a.amax().max(1.0);

    let mut modes: Vec<Mode> = Vec::new();
    for lam in eigvals.iter() {
        let imag_tol = 1e-9 * (1.0 + lam.norm());
        if lam.im < -imag_tol {
            continue; // conjugate partner carries the same information
        }
        let lam = if lam.im.abs() <= imag_tol {
            Complex64::new(lam.re, 0.0)
        } else {
            *lam
        };
        let shape = inverse_iteration(&a_c, lam, a_scale)?;
        let freq = lam.im.abs() / (2.0 * std::f64::consts::PI);
        let damping = if lam.norm() > 0.0 { -lam.re / lam.norm() } else { 0.0 };
        modes.push(Mode { eigenvalue: lam, frequency_hz: freq, damping_ratio: damping, shape });
    }
    debug_assert!(modes.iter().all(|m| m.shape.len() == n));
    modes.sort_by(|a, b| {
        a.frequency_hz
            .total_cmp(&b.frequency_hz)
            .then(a.eigenvalue.re.total_cmp(&b.eigenvalue.re))
    });
    Ok(modes)
}

/// Right eigenvector by shifted inverse iteration with Rayleigh refinement.
/// The start vector is deterministic, so repeated runs produce identical
/// shapes.
fn inverse_iteration(
    a: &DMatrix<Complex64>,
    lambda: Complex64,
    a_scale: f64,
) -> Result<DVector<Complex64>, ModalError> {
    let n = a.nrows();
    let shift = lambda + Complex64::new(1e-10 * (1.0 + lambda.norm()), 0.0);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();

    let mut v = DVector::from_iterator(
        n,
        (0..n).map(|k| Complex64::new(1.0 + 0.3 * ((k + 1) as f64).sqrt(), 0.1 * k as f64)),
    );
    v /= Complex64::new(v.norm(), 0.0);

    let tol = 1e-8 * (a_scale + lambda.norm());
    let mut best_res = f64::INFINITY;
    let mut best = v.clone();
    let mut lam_hat = lambda;
    for _ in 0..50 {
        let Some(y) = lu.solve(&v) else { break };
        let norm = y.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        v = y / Complex64::new(norm, 0.0);
        let av = a * &v;
        lam_hat = v.dotc(&av);
        let res = (&av - &v * lam_hat).norm();
        if res < best_res {
            best_res = res;
            best = v.clone();
        }
        if res <= tol {
            break;
        }
    }
    if best_res > tol {
        return Err(ModalError::ConvergenceFailure {
            eigenvalue: lam_hat,
            residual: best_res,
        });
    }

    // Phase fix: rotate and scale so the largest entry is exactly one.
    let (k_max, _) = best
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
        .expect("nonempty eigenvector");
    let pivot = best[k_max];
    Ok(best.map(|c| c / pivot))
}

/// Picks one mode from the analysis according to the selector.
pub fn select_mode<'a>(
    analysis: &'a ModalAnalysis,
    selector: &ModeSelector,
) -> Result<&'a Mode, ModalError> {
    match *selector {
        ModeSelector::Index(index) => analysis
            .modes
            .get(index)
            .ok_or(ModalError::BadIndex { index, count: analysis.modes.len() }),
        ModeSelector::Band { lo_hz, hi_hz } => {
            let candidates: Vec<&Mode> = analysis
                .modes
                .iter()
                .filter(|m| {
                    m.frequency_hz > 0.0 && m.frequency_hz >= lo_hz && m.frequency_hz <= hi_hz
                })
                .collect();
            match candidates.len() {
                0 => Err(ModalError::NoModeInBand { lo_hz, hi_hz }),
                1 => Ok(candidates[0]),
                _ => Err(ModalError::AmbiguousMode {
                    lo_hz,
                    hi_hz,
                    candidates_hz: candidates.iter().map(|m| m.frequency_hz).collect(),
                }),
            }
        }
    }
}

/// Partition of the external generators into coherent groups.
#[derive(Debug, Clone, Serialize)]
pub struct CoherencyGrouping {
    /// Canonical form: members sorted within each group, groups sorted by
    /// first member.
    pub groups: Vec<Vec<GenId>>,
    /// Mode-shape angle of each external generator's speed state, degrees.
    pub angles_deg: Vec<(GenId, f64)>,
    pub magnitudes: Vec<(GenId, f64)>,
    pub mode_frequency_hz: f64,
    pub angle_tol_deg: f64,
    pub notes: Vec<String>,
}

/// Groups external generators whose speed-deviation mode-shape angles agree
/// pairwise within `angle_tol_deg` (complete linkage on the circular angle
/// distance, so every pair inside a group meets the tolerance).
pub fn find_coherent_groups(
    model: &DynamicModel,
    mode: &Mode,
    angle_tol_deg: f64,
) -> CoherencyGrouping {
    let externals = model.case.external_generators();
    let mut entries: Vec<(GenId, f64, f64)> = externals
        .iter()
        .map(|g| {
            let idx = model.omega_index(&g.id).expect("external generator in model");
            let c = mode.shape[idx];
            (g.id.clone(), c.arg().to_degrees(), c.norm())
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut notes = Vec::new();
    let max_mag = entries.iter().fold(0.0f64, |m, e| m.max(e.2));
    // Generators that barely participate have numerically meaningless
    // angles: isolate them in singleton groups rather than guessing.
    let weak: Vec<bool> = entries
        .iter()
        .map(|e| max_mag > 0.0 && e.2 < 1e-8 * max_mag)
        .collect();
    for (e, w) in entries.iter().zip(&weak) {
        if *w {
            notes.push(format!(
                "generator '{}' barely participates in the selected mode (|shape| = {:.3e}); \
                 kept as its own group",
                e.0, e.2
            ));
        }
    }

    let strong: Vec<usize> =
        (0..entries.len()).filter(|k| !weak[*k]).collect();
    let angles: Vec<f64> = strong.iter().map(|k| entries[*k].1).collect();
    let clusters = complete_linkage(&angles, angle_tol_deg);

    let mut groups: Vec<Vec<GenId>> = clusters
        .into_iter()
        .map(|c| {
            let mut g: Vec<GenId> =
                c.into_iter().map(|k| entries[strong[k]].0.clone()).collect();
            g.sort();
            g
        })
        .collect();
    groups.extend(
        entries
            .iter()
            .zip(&weak)
            .filter(|(_, w)| **w)
            .map(|(e, _)| vec![e.0.clone()]),
    );
    groups.sort();

    CoherencyGrouping {
        groups,
        angles_deg: entries.iter().map(|e| (e.0.clone(), e.1)).collect(),
        magnitudes: entries.iter().map(|e| (e.0.clone(), e.2)).collect(),
        mode_frequency_hz: mode.frequency_hz,
        angle_tol_deg,
        notes,
    }
}

/// Absolute circular distance between two angles in degrees, in [0, 180].
fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Agglomerative complete-linkage clustering: two clusters merge only while
/// the largest pairwise distance across them stays within the tolerance, so
/// the final clusters satisfy the pairwise bound by construction.
fn complete_linkage(angles: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..angles.len()).map(|k| vec![k]).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let d = clusters[i]
                    .iter()
                    .flat_map(|a| clusters[j].iter().map(move |b| (*a, *b)))
                    .map(|(a, b)| circular_distance_deg(angles[a], angles[b]))
                    .fold(0.0f64, f64::max);
                if d <= tol && best.map(|(_, _, bd)| d < bd).unwrap_or(true) {
                    best = Some((i, j, d));
                }
            }
        }
        match best {
            Some((i, j, _)) => {
                let merged = clusters.remove(j);
                clusters[i].extend(merged);
            }
            None => break,
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_powerflow, Branch, Bus, Generator, PowerSystemCase, Zone};
    use approx::assert_relative_eq;

    /// Classical machine against an infinite bus: the state matrix is
    /// [[0, w_s], [-K_s/(2H), -D/(2H)]] with K_s = E V cos(d0) / X.
    fn smib_case() -> PowerSystemCase {
        PowerSystemCase {
            base_mva: 100.0,
            f_hz: 60.0,
            slack_bus: "inf".into(),
            buses: vec![
                Bus {
                    id: "inf".into(),
                    base_kv: 230.0,
                    zone: Zone::Internal,
                    shunt: Complex64::new(0.0, 0.0),
                },
                Bus {
                    id: "t1".into(),
                    base_kv: 230.0,
                    zone: Zone::Internal,
                    shunt: Complex64::new(0.0, 0.0),
                },
            ],
            branches: vec![Branch {
                from_bus: "t1".into(),
                to_bus: "inf".into(),
                series_admittance: Complex64::new(0.0, -1.0 / 0.4),
                shunt_admittance_total: Complex64::new(0.0, 0.0),
                tap: 1.0,
            }],
            generators: vec![Generator {
                id: "g1".into(),
                bus: "t1".into(),
                rated_mva: 100.0,
                inertia_h: 3.2,
                xd_prime: 0.25,
                damping_d: 1.5,
                p_gen: 80.0,
                q_gen: 30.0,
                controllers: vec![],
                xd: None,
                td0_prime: None,
            }],
            controllers: vec![],
            loads: vec![],
        }
    }

    #[test]
    fn smib_state_matrix_matches_closed_form() {
        let case = smib_case();
        let solution = solve_powerflow(&case).unwrap();
        let model = DynamicModel::build(&case, &solution, false).unwrap();
        let (a, labels) = linearize(&model).unwrap();
        assert_eq!(labels, vec!["delta:g1".to_string(), "omega:g1".to_string()]);

        // Closed-form synchronizing coefficient from the equilibrium EMF.
        let v_inf = solution.voltage("inf").unwrap();
        let v_t = solution.voltage("t1").unwrap();
        let i = ((Complex64::new(0.8, 0.3)) / v_t).conj();
        let e = v_t + Complex64::new(0.0, 0.25) * i;
        let x_total = 0.25 + 0.4;
        let delta0 = (e / v_inf).arg();
        let ks = e.norm() * v_inf.norm() * delta0.cos() / x_total;

        let w_s = 2.0 * std::f64::consts::PI * 60.0;
        assert_relative_eq!(a[(0, 0)], 0.0, epsilon = 1e-9);
        assert_relative_eq!(a[(0, 1)], w_s, epsilon = 1e-9);
        assert_relative_eq!(a[(1, 0)], -ks / (2.0 * 3.2), epsilon = 1e-8);
        assert_relative_eq!(a[(1, 1)], -1.5 / (2.0 * 3.2), epsilon = 1e-12);

        // And the corresponding swing mode.
        let analysis = analyze(&model).unwrap();
        let osc: Vec<&Mode> =
            analysis.modes.iter().filter(|m| m.frequency_hz > 0.0).collect();
        assert_eq!(osc.len(), 1);
        let d_2h = 1.5 / (2.0 * 3.2);
        let wn2 = w_s * ks / (2.0 * 3.2);
        let expected_im = (wn2 - d_2h * d_2h / 4.0).sqrt();
        assert_relative_eq!(osc[0].eigenvalue.im.abs(), expected_im, epsilon = 1e-7);
        assert_relative_eq!(osc[0].eigenvalue.re, -d_2h / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn eigenvector_satisfies_definition_and_is_deterministic() {
        let case = smib_case();
        let solution = solve_powerflow(&case).unwrap();
        let model = DynamicModel::build(&case, &solution, false).unwrap();
        let a1 = analyze(&model).unwrap();
        let a2 = analyze(&model).unwrap();
        for (m1, m2) in a1.modes.iter().zip(&a2.modes) {
            assert_eq!(m1.shape, m2.shape, "shapes must be bit-identical across runs");
            let av = &a1.a.map(|v| Complex64::new(v, 0.0)) * &m1.shape;
            let res = (&av - &m1.shape * m1.eigenvalue).norm();
            assert!(res < 1e-7, "eigen residual {res}");
            let max_entry = m1.shape.iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert_relative_eq!(max_entry, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn band_selection_distinguishes_empty_single_and_ambiguous() {
        let case = smib_case();
        let solution = solve_powerflow(&case).unwrap();
        let model = DynamicModel::build(&case, &solution, false).unwrap();
        let analysis = analyze(&model).unwrap();
        let f = analysis
            .modes
            .iter()
            .find(|m| m.frequency_hz > 0.0)
            .unwrap()
            .frequency_hz;

        let one = select_mode(
            &analysis,
            &ModeSelector::Band { lo_hz: f - 0.1, hi_hz: f + 0.1 },
        )
        .unwrap();
        assert_relative_eq!(one.frequency_hz, f);

        let err = select_mode(
            &analysis,
            &ModeSelector::Band { lo_hz: f + 1.0, hi_hz: f + 2.0 },
        )
        .unwrap_err();
        assert!(matches!(err, ModalError::NoModeInBand { .. }));

        let err = select_mode(&analysis, &ModeSelector::Index(99)).unwrap_err();
        assert!(matches!(err, ModalError::BadIndex { .. }));
    }

    #[test]
    fn complete_linkage_respects_pairwise_tolerance_and_wraparound() {
        // 0, 3, 8 chain within 10 degrees pairwise only for {0,3} + {8}? No:
        // max pairwise in {0,3,8} is 8 <= 10, so they merge. 175 and -178
        // are 7 degrees apart across the wrap.
        let angles = [0.0, 3.0, 8.0, 175.0, -178.0];
        let clusters = complete_linkage(&angles, 10.0);
        assert_eq!(clusters, vec![vec![0, 1, 2], vec![3, 4]]);

        // Tighter tolerance splits the chain: {0,3} pairwise 3, adding 8
        // would make the worst pair 8 > 5; the wrap pair at 7 degrees also
        // exceeds 5.
        let clusters = complete_linkage(&angles, 5.0);
        assert_eq!(clusters, vec![vec![0, 1], vec![2], vec![3], vec![4]]);

        // Permuting the inputs permutes indices but yields the same
        // partition of angles.
        let angles_perm = [8.0, -178.0, 0.0, 175.0, 3.0];
        let clusters = complete_linkage(&angles_perm, 10.0);
        let mut sets: Vec<Vec<i64>> = clusters
            .iter()
            .map(|c| {
                let mut v: Vec<i64> =
                    c.iter().map(|k| angles_perm[*k].round() as i64).collect();
                v.sort();
                v
            })
            .collect();
        sets.sort();
        assert_eq!(sets, vec![vec![-178, 175], vec![0, 3, 8]]);
    }

    #[test]
    fn circular_distance_handles_wrap() {
        assert_relative_eq!(circular_distance_deg(179.0, -179.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(circular_distance_deg(-90.0, 90.0), 180.0, epsilon = 1e-12);
        assert_relative_eq!(circular_distance_deg(10.0, 10.0), 0.0, epsilon = 1e-12);
    }
}
