//! Rational transfer functions in ascending powers of the Laplace variable,
//! plus frequency-response evaluation on logarithmic grids.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CtrlaggError;
use crate::model::{Block, BlockKind};

/// Rational function `num(s) / den(s)`, coefficients stored lowest power
/// first (`num[k]` multiplies `s^k`). The denominator always has at least
/// one nonzero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        let mut tf = RationalTF { num, den };
        tf.trim();
        assert!(
            tf.den.iter().any(|c| *c != 0.0),
            "transfer function denominator must be nonzero"
        );
        tf
    }

    pub fn gain(k: f64) -> Self {
        RationalTF { num: vec![k], den: vec![1.0] }
    }

    pub fn zero() -> Self {
        RationalTF { num: vec![0.0], den: vec![1.0] }
    }

    fn trim(&mut self) {
        while self.num.len() > 1 && self.num.last() == Some(&0.0) {
            self.num.pop();
        }
        while self.den.len() > 1 && self.den.last() == Some(&0.0) {
            self.den.pop();
        }
        if self.num.is_empty() {
            self.num.push(0.0);
        }
    }

    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    /// True when the numerator degree does not exceed the denominator degree,
    /// i.e. the function is realizable as a state-space system.
    pub fn is_proper(&self) -> bool {
        self.num_degree() <= self.den_degree()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn mul(&self, other: &RationalTF) -> RationalTF {
        RationalTF::new(poly_mul(&self.num, &other.num), poly_mul(&self.den, &other.den))
    }

    pub fn add(&self, other: &RationalTF) -> RationalTF {
        let num = poly_add(
            &poly_mul(&self.num, &other.den),
            &poly_mul(&other.num, &self.den),
        );
        RationalTF::new(num, poly_mul(&self.den, &other.den))
    }

    pub fn scale(&self, k: f64) -> RationalTF {
        RationalTF::new(self.num.iter().map(|c| c * k).collect(), self.den.clone())
    }

    /// Pointwise reciprocal; the result may be improper.
    pub fn inverse(&self) -> RationalTF {
        RationalTF::new(self.den.clone(), self.num.clone())
    }

    /// Rescales so the highest-order denominator coefficient is one.
    pub fn monic(&self) -> RationalTF {
        let lead = *self.den.last().expect("nonempty denominator");
        RationalTF {
            num: self.num.iter().map(|c| c / lead).collect(),
            den: self.den.iter().map(|c| c / lead).collect(),
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly_roots(&self.num)
    }
}

impl std::fmt::Display for RationalTF {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}) / ({})", poly_string(&self.num), poly_string(&self.den))
    }
}

fn poly_string(coeffs: &[f64]) -> String {
    let terms: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| match k {
            0 => format!("{c}"),
            1 => format!("{c}*s"),
            _ => format!("{c}*s^{k}"),
        })
        .collect();
    if terms.is_empty() {
        return "0".to_string();
    }
    terms.join(" + ")
}

pub(crate) fn poly_eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + b.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Roots via the companion matrix of the normalized polynomial. Trailing
/// coefficients tiny relative to the largest one are treated as zero so that
/// noise from a fit does not spawn spurious huge roots.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return vec![];
    }
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && c.last().map(|v| v.abs() <= 1e-14 * scale) == Some(true) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return vec![];
    }
    let lead = c[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -c[i] / lead;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Transfer function of a single control block. Saturation limits do not
/// enter the linear description.
pub fn block_tf(kind: &BlockKind) -> RationalTF {
    match kind {
        BlockKind::Gain { k } => RationalTF::gain(*k),
        BlockKind::Lag { k, t } => RationalTF::new(vec![*k], vec![1.0, *t]),
        BlockKind::LeadLag { k, t1, t2 } => {
            RationalTF::new(vec![*k, *k * *t1], vec![1.0, *t2])
        }
        BlockKind::Washout { t } => RationalTF::new(vec![0.0, *t], vec![1.0, *t]),
        BlockKind::Integrator { k } => RationalTF::new(vec![*k], vec![0.0, 1.0]),
        BlockKind::Pi { kp, ki } => RationalTF::new(vec![*ki, *kp], vec![0.0, 1.0]),
        BlockKind::Rational { num, den } => RationalTF::new(num.clone(), den.clone()),
    }
}

/// Series transfer function of a block chain.
pub fn path_tf(blocks: &[Block]) -> RationalTF {
    blocks
        .iter()
        .fold(RationalTF::gain(1.0), |acc, b| acc.mul(&block_tf(&b.kind)))
}

/// Sampled frequency response on a grid of positive frequencies in Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }
}

/// True when two grids agree point by point to relative precision.
pub fn grids_match(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

/// Logarithmically spaced grid from `lo_hz` to `hi_hz` inclusive.
pub fn log_grid(lo_hz: f64, hi_hz: f64, n: usize) -> Result<Vec<f64>, CtrlaggError> {
    if !(lo_hz > 0.0 && hi_hz > lo_hz && n >= 2) {
        return Err(CtrlaggError::GridMismatch {
            message: format!(
                "logarithmic grid requires 0 < lo < hi and n >= 2, got [{lo_hz}, {hi_hz}] with {n} points"
            ),
        });
    }
    let (l0, l1) = (lo_hz.ln(), hi_hz.ln());
    Ok((0..n)
        .map(|k| (l0 + (l1 - l0) * k as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Linearly spaced grid from `lo_hz` to `hi_hz` inclusive.
pub fn linear_grid(lo_hz: f64, hi_hz: f64, n: usize) -> Result<Vec<f64>, CtrlaggError> {
    if !(lo_hz > 0.0 && hi_hz > lo_hz && n >= 2) {
        return Err(CtrlaggError::GridMismatch {
            message: format!(
                "linear grid requires 0 < lo < hi and n >= 2, got [{lo_hz}, {hi_hz}] with {n} points"
            ),
        });
    }
    Ok((0..n)
        .map(|k| lo_hz + (hi_hz - lo_hz) * k as f64 / (n - 1) as f64)
        .collect())
}

/// Evaluates `tf` at `s = j 2 pi f` over the grid, rejecting grids that land
/// on a pole.
pub fn evaluate_fr(tf: &RationalTF, freqs_hz: &[f64]) -> Result<FrequencyResponse, CtrlaggError> {
    let mut values = Vec::with_capacity(freqs_hz.len());
    for &f in freqs_hz {
        let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
        let den = poly_eval(&tf.den, s);
        let scale: f64 = tf
            .den
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * s.norm().powi(k as i32))
            .sum();
        if den.norm() <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(CtrlaggError::PoleOnGrid { freq_hz: f });
        }
        values.push(poly_eval(&tf.num, s) / den);
    }
    Ok(FrequencyResponse { freqs_hz: freqs_hz.to_vec(), values })
}
