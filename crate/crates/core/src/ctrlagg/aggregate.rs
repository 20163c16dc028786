//! Composition of member controllers into one equivalent controller per
//! kind: member responses are mapped onto a common input signal, combined as
//! a rating-weighted sum, and refit as a rational block.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use super::fit::{fit_rational, FitOptions, Weighting};
use super::relations::{transform_input, RelationSet};
use super::tf::{evaluate_fr, grids_match, path_tf, FrequencyResponse};
use super::CtrlaggError;
use crate::model::{
    Block, BlockKind, Controller, CtrlId, GenId, Generator, InputPath, SignalKind,
};

/// Signals that name another controller's output or an exogenous setpoint;
/// they are carried over as separate input paths of the equivalent controller
/// rather than mapped through a machine relation.
const CHAIN_SIGNALS: [SignalKind; 2] = [SignalKind::Vpss, SignalKind::Vref];

/// Rating-weighted pointwise sum of responses sharing one grid.
pub fn aggregate_frequency_responses(
    frs: &[FrequencyResponse],
    weights: &[f64],
) -> Result<FrequencyResponse, CtrlaggError> {
    if frs.is_empty() {
        return Err(CtrlaggError::EmptyList);
    }
    if frs.len() != weights.len() {
        return Err(CtrlaggError::GridMismatch {
            message: format!("{} responses but {} weights", frs.len(), weights.len()),
        });
    }
    let grid = &frs[0].freqs_hz;
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (fr, w) in frs.iter().zip(weights) {
        if !grids_match(grid, &fr.freqs_hz) {
            return Err(CtrlaggError::GridMismatch {
                message: "member responses are sampled on different grids".into(),
            });
        }
        for (acc, v) in values.iter_mut().zip(&fr.values) {
            *acc += *v * w;
        }
    }
    Ok(FrequencyResponse { freqs_hz: grid.clone(), values })
}

#[derive(Debug, Clone, Serialize)]
pub struct PathFitSummary {
    pub signal: SignalKind,
    pub orders: (usize, usize),
    pub max_rel_err: f64,
    pub rms_rel_err: f64,
    pub iterations: usize,
    /// The composed response the path was fitted against, kept so reports can
    /// be plotted without re-running the composition.
    pub target: FrequencyResponse,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregationReport {
    pub members: Vec<CtrlId>,
    /// Normalized rating weight per distinct host generator.
    pub weights: Vec<(GenId, f64)>,
    /// Member paths that were re-expressed from their native input onto the
    /// common input through a machine relation.
    pub transformed: Vec<(CtrlId, SignalKind)>,
    pub paths: Vec<PathFitSummary>,
}

/// Builds the equivalent controller for a coherent group. `members` pairs
/// each controller with its host generator; all members must share one
/// controller kind. Paths reading `common_input` (or a signal related to it
/// through the host machine) fold into a single fitted path; chain signals
/// such as a stabilizer output stay as separate fitted paths.
pub fn aggregate_controllers(
    members: &[(&Controller, &Generator)],
    common_input: SignalKind,
    freqs_hz: &[f64],
    orders: (usize, usize),
    options: &FitOptions,
) -> Result<(Controller, AggregationReport), CtrlaggError> {
    let Some(((first, _), rest)) = members.split_first() else {
        return Err(CtrlaggError::EmptyList);
    };
    let kind = first.kind;
    for (ctrl, _) in rest {
        if ctrl.kind != kind {
            return Err(CtrlaggError::MixedKinds {
                controller: ctrl.id.clone(),
                expected: kind,
                found: ctrl.kind,
            });
        }
    }

    // One weight per distinct host machine, so a machine carrying several
    // controllers of the same kind contributes their full summed response.
    let mut rating: BTreeMap<&str, f64> = BTreeMap::new();
    for (_, gen) in members {
        rating.insert(gen.id.as_str(), gen.rated_mva);
    }
    let total: f64 = rating.values().sum();
    let weight_of: BTreeMap<&str, f64> =
        rating.iter().map(|(id, s)| (*id, s / total)).collect();

    let n_pts = freqs_hz.len();
    let mut common_sum = vec![Complex64::new(0.0, 0.0); n_pts];
    let mut side_sums: BTreeMap<&'static str, (SignalKind, Vec<Complex64>)> = BTreeMap::new();
    let mut transformed: Vec<(CtrlId, SignalKind)> = Vec::new();

    for (ctrl, gen) in members {
        let w = weight_of[gen.id.as_str()];
        let relations = RelationSet::for_generator(gen)?;
        for path in &ctrl.inputs {
            let fr = evaluate_fr(&path_tf(&path.blocks), freqs_hz)?;
            if path.signal == common_input {
                for (acc, v) in common_sum.iter_mut().zip(&fr.values) {
                    *acc += *v * w;
                }
            } else if let Some(rel) = relations.response(common_input, path.signal, freqs_hz) {
                let moved = transform_input(&fr, &rel?)?;
                transformed.push((ctrl.id.clone(), path.signal));
                for (acc, v) in common_sum.iter_mut().zip(&moved.values) {
                    *acc += *v * w;
                }
            } else if CHAIN_SIGNALS.contains(&path.signal) {
                let entry = side_sums
                    .entry(path.signal.as_str())
                    .or_insert_with(|| (path.signal, vec![Complex64::new(0.0, 0.0); n_pts]));
                for (acc, v) in entry.1.iter_mut().zip(&fr.values) {
                    *acc += *v * w;
                }
            } else {
                return Err(CtrlaggError::MissingRelation {
                    controller: ctrl.id.clone(),
                    from: path.signal,
                    to: common_input,
                });
            }
        }
    }

    let mut inputs: Vec<InputPath> = Vec::new();
    let mut paths: Vec<PathFitSummary> = Vec::new();
    let fit_path = |signal: SignalKind,
                        values: Vec<Complex64>,
                        inputs: &mut Vec<InputPath>,
                        paths: &mut Vec<PathFitSummary>|
     -> Result<(), CtrlaggError> {
        let fr = FrequencyResponse { freqs_hz: freqs_hz.to_vec(), values };
        let (tf, report) =
            fit_rational(&fr, orders.0, orders.1, Weighting::InverseMagnitude, options)?;
        inputs.push(InputPath {
            signal,
            blocks: vec![Block {
                kind: BlockKind::Rational { num: tf.num.clone(), den: tf.den.clone() },
                limits: None,
            }],
        });
        paths.push(PathFitSummary {
            signal,
            orders,
            max_rel_err: report.max_rel_err,
            rms_rel_err: report.rms_rel_err,
            iterations: report.iterations,
            target: fr,
        });
        Ok(())
    };

    fit_path(common_input, common_sum, &mut inputs, &mut paths)?;
    for (_, (signal, values)) in side_sums {
        fit_path(signal, values, &mut inputs, &mut paths)?;
    }

    let equivalent = Controller {
        id: format!("eq_{}", first.id),
        kind,
        inputs,
        output_signal: kind.expected_output(),
    };
    let report = AggregationReport {
        members: members.iter().map(|(c, _)| c.id.clone()).collect(),
        weights: rating
            .keys()
            .map(|id| (id.to_string(), weight_of[id]))
            .collect(),
        transformed,
        paths,
    };
    Ok((equivalent, report))
}
