//! Linearized relations between measurable machine signals, used to move a
//! controller's frequency response from its native input onto the group's
//! common input before composition.

use num_complex::Complex64;

use super::tf::{evaluate_fr, grids_match, FrequencyResponse, RationalTF};
use super::CtrlaggError;
use crate::model::{Generator, SignalKind};

/// Transfer function from one measurable signal to another for a specific
/// machine, e.g. speed deviation to electrical-power deviation.
#[derive(Debug, Clone)]
pub struct SignalRelation {
    pub from: SignalKind,
    pub to: SignalKind,
    pub tf: RationalTF,
}

/// Relation from speed deviation to electrical-power deviation implied by the
/// swing equation with negligible damping: a speed swing of `dw` rides on an
/// accelerating-power swing of `-2 H s dw` in machine per unit.
pub fn swing_pe_from_omega(gen: &Generator) -> Result<SignalRelation, CtrlaggError> {
    if gen.inertia_h <= 0.0 {
        return Err(CtrlaggError::NonpositiveInertia {
            generator: gen.id.clone(),
            inertia_h: gen.inertia_h,
        });
    }
    Ok(SignalRelation {
        from: SignalKind::DeltaOmega,
        to: SignalKind::DeltaPe,
        tf: RationalTF::new(vec![0.0, -2.0 * gen.inertia_h], vec![1.0]),
    })
}

/// The relations available for one machine, searchable in both directions.
#[derive(Debug, Clone)]
pub struct RelationSet {
    relations: Vec<SignalRelation>,
}

impl RelationSet {
    pub fn for_generator(gen: &Generator) -> Result<Self, CtrlaggError> {
        Ok(RelationSet { relations: vec![swing_pe_from_omega(gen)?] })
    }

    /// Frequency response of the relation taking `from` to `to`, sampled on
    /// `freqs_hz`. A stored relation is used directly; its reverse is used as
    /// the pointwise reciprocal. Returns `None` when neither direction is
    /// known.
    pub fn response(
        &self,
        from: SignalKind,
        to: SignalKind,
        freqs_hz: &[f64],
    ) -> Option<Result<FrequencyResponse, CtrlaggError>> {
        if let Some(rel) = self.relations.iter().find(|r| r.from == from && r.to == to) {
            return Some(evaluate_fr(&rel.tf, freqs_hz));
        }
        if let Some(rel) = self.relations.iter().find(|r| r.from == to && r.to == from) {
            let forward = match evaluate_fr(&rel.tf, freqs_hz) {
                Ok(fr) => fr,
                Err(e) => return Some(Err(e)),
            };
            return Some(invert_response(&forward));
        }
        None
    }
}

fn invert_response(fr: &FrequencyResponse) -> Result<FrequencyResponse, CtrlaggError> {
    let scale = fr.values.iter().fold(0.0f64, |m, v| m.max(v.norm())).max(1.0);
    let mut values = Vec::with_capacity(fr.len());
    for (f, v) in fr.freqs_hz.iter().zip(&fr.values) {
        if v.norm() <= 1e-12 * scale {
            return Err(CtrlaggError::NearZeroH21 { freq_hz: *f, magnitude: v.norm() });
        }
        values.push(Complex64::new(1.0, 0.0) / v);
    }
    Ok(FrequencyResponse { freqs_hz: fr.freqs_hz.clone(), values })
}

/// Re-expresses a response `h2` measured from a controller's native input as
/// a response from the common input, given the relation response `h21` from
/// the common input to the native input: `h1[k] = h2[k] / h21[k]`.
pub fn transform_input(
    h2: &FrequencyResponse,
    h21: &FrequencyResponse,
) -> Result<FrequencyResponse, CtrlaggError> {
    if !grids_match(&h2.freqs_hz, &h21.freqs_hz) {
        return Err(CtrlaggError::GridMismatch {
            message: format!(
                "response has {} points, relation has {}; the grids must be identical",
                h2.len(),
                h21.len()
            ),
        });
    }
    let scale = h21.values.iter().fold(0.0f64, |m, v| m.max(v.norm())).max(1.0);
    let mut values = Vec::with_capacity(h2.len());
    for k in 0..h2.len() {
        let denom = h21.values[k];
        if denom.norm() <= 1e-12 * scale {
            return Err(CtrlaggError::NearZeroH21 {
                freq_hz: h2.freqs_hz[k],
                magnitude: denom.norm(),
            });
        }
        values.push(h2.values[k] / denom);
    }
    Ok(FrequencyResponse { freqs_hz: h2.freqs_hz.clone(), values })
}
