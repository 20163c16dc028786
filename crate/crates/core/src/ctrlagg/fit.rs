//! Least-squares rational fitting of sampled frequency responses, using a
//! Levy linearization refined by Sanathanan-Koerner reweighting.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::tf::{poly_eval, FrequencyResponse, RationalTF};
use super::CtrlaggError;

/// Row weighting applied to the linearized equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// All samples weighted equally; minimizes absolute error.
    Uniform,
    /// Samples weighted by the reciprocal response magnitude; minimizes
    /// relative error and is the right choice for bode-style agreement.
    InverseMagnitude,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Keep a fit whose poles lie in the closed right half plane instead of
    /// rejecting it.
    pub allow_unstable: bool,
    pub max_iterations: usize,
    /// Relative coefficient-change threshold that stops the reweighting.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { allow_unstable: false, max_iterations: 25, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Worst relative deviation |H_fit - H| / |H| over the grid.
    pub max_rel_err: f64,
    /// Root-mean-square relative deviation over the grid.
    pub rms_rel_err: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Poles with nonnegative real part (empty for a stable fit).
    pub unstable_poles: Vec<Complex64>,
}

/// Fits `num_order`/`den_order` rational coefficients to the sampled
/// response. The returned function has a monic highest-order denominator
/// coefficient.
pub fn fit_rational(
    fr: &FrequencyResponse,
    num_order: usize,
    den_order: usize,
    weighting: Weighting,
    options: &FitOptions,
) -> Result<(RationalTF, FitReport), CtrlaggError> {
    let k_pts = fr.len();
    let required = 2 * (num_order + den_order + 2);
    if k_pts < required {
        return Err(CtrlaggError::GridMismatch {
            message: format!(
                "{k_pts} grid points cannot determine orders ({num_order}, {den_order}); \
                 at least {required} are required"
            ),
        });
    }
    if fr.freqs_hz.iter().any(|f| *f <= 0.0) {
        return Err(CtrlaggError::GridMismatch {
            message: "fit grid frequencies must be strictly positive".into(),
        });
    }

    let h_max = fr.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if h_max == 0.0 {
        let tf = RationalTF::zero();
        let report = FitReport {
            max_rel_err: 0.0,
            rms_rel_err: 0.0,
            iterations: 0,
            converged: true,
            unstable_poles: vec![],
        };
        return Ok((tf, report));
    }

    // Normalize the frequency axis by the geometric mean of the grid so the
    // Vandermonde-like columns stay comparable in magnitude.
    let omega: Vec<f64> =
        fr.freqs_hz.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let w0 = (omega.iter().map(|w| w.ln()).sum::<f64>() / k_pts as f64).exp();
    let s_norm: Vec<Complex64> =
        omega.iter().map(|w| Complex64::new(0.0, w / w0)).collect();

    let n_cols = num_order + 1 + den_order;
    let mut coeffs = DVector::<f64>::zeros(n_cols);
    let mut iterations = 0;
    let mut converged = false;

    // Base per-sample weights from the requested weighting.
    let base_w: Vec<f64> = fr
        .values
        .iter()
        .map(|h| match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseMagnitude => 1.0 / h.norm().max(1e-12 * h_max),
        })
        .collect();

    // Previous-iteration denominator values for Sanathanan-Koerner
    // reweighting; the first pass (plain Levy) uses ones.
    let mut den_prev: Vec<f64> = vec![1.0; k_pts];

    for iter in 0..options.max_iterations {
        iterations = iter + 1;
        let mut a = DMatrix::<f64>::zeros(2 * k_pts, n_cols);
        let mut b = DVector::<f64>::zeros(2 * k_pts);
        for k in 0..k_pts {
            let s = s_norm[k];
            let h = fr.values[k];
            let w = base_w[k] / den_prev[k];
            // num coefficients: + s^p
            let mut sp = Complex64::new(1.0, 0.0);
            for p in 0..=num_order {
                a[(2 * k, p)] = w * sp.re;
                a[(2 * k + 1, p)] = w * sp.im;
                sp *= s;
            }
            // den coefficients below the fixed leading one: - H s^q
            let mut sq = Complex64::new(1.0, 0.0);
            for q in 0..den_order {
                let v = -h * sq;
                a[(2 * k, num_order + 1 + q)] = w * v.re;
                a[(2 * k + 1, num_order + 1 + q)] = w * v.im;
                sq *= s;
            }
            // right-hand side: + H s^m from the fixed leading coefficient
            let rhs = h * sq;
            b[2 * k] = w * rhs.re;
            b[2 * k + 1] = w * rhs.im;
        }

        // Column equilibration keeps the singular-value spread meaningful.
        let col_scale: Vec<f64> = (0..n_cols)
            .map(|j| {
                let n = a.column(j).norm();
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect();
        for (j, sc) in col_scale.iter().enumerate() {
            let mut col = a.column_mut(j);
            col /= *sc;
        }

        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(CtrlaggError::RankDeficient { orders: (num_order, den_order) });
        }
        let x = svd
            .solve(&b, 1e-14 * smax)
            .map_err(|_| CtrlaggError::RankDeficient { orders: (num_order, den_order) })?;
        let x = DVector::from_iterator(
            n_cols,
            x.iter().zip(&col_scale).map(|(v, sc)| v / sc),
        );

        let step = (&x - &coeffs).amax();
        let scale = x.amax().max(1.0);
        coeffs = x;

        // Refresh the denominator magnitudes for the next pass.
        let mut den_norm: Vec<f64> = vec![1.0; den_order + 1];
        den_norm[..den_order]
            .iter_mut()
            .enumerate()
            .for_each(|(q, d)| *d = coeffs[num_order + 1 + q]);
        for k in 0..k_pts {
            den_prev[k] = poly_eval(&den_norm, s_norm[k]).norm().max(1e-30);
        }

        if step <= options.tolerance * scale {
            converged = true;
            break;
        }
    }

    // Undo the frequency normalization: coefficient of s^p scales by w0^-p.
    let mut num: Vec<f64> = (0..=num_order)
        .map(|p| coeffs[p] / w0.powi(p as i32))
        .collect();
    let mut den: Vec<f64> = (0..den_order)
        .map(|q| coeffs[num_order + 1 + q] / w0.powi(q as i32))
        .collect();
    den.push(1.0 / w0.powi(den_order as i32));
    let lead = *den.last().unwrap();
    num.iter_mut().for_each(|c| *c /= lead);
    den.iter_mut().for_each(|c| *c /= lead);
    let tf = RationalTF::new(num, den);

    // Poles within rounding distance of the imaginary axis are kept:
    // integrators are legitimate (they arise whenever a response is mapped
    // through the swing relation), and their fitted root lands within a few
    // ulps of zero on either side.
    let unstable_poles: Vec<Complex64> =
        tf.poles().into_iter().filter(|p| p.re > 1e-9 * (1.0 + p.norm())).collect();
    if !unstable_poles.is_empty() && !options.allow_unstable {
        let worst = unstable_poles
            .iter()
            .copied()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap();
        return Err(CtrlaggError::UnstableFit { pole: worst });
    }

    let mut max_rel = 0.0f64;
    let mut sum_sq = 0.0f64;
    for k in 0..k_pts {
        let s = Complex64::new(0.0, omega[k]);
        let err = (tf.eval(s) - fr.values[k]).norm();
        let rel = err / fr.values[k].norm().max(1e-12 * h_max);
        max_rel = max_rel.max(rel);
        sum_sq += rel * rel;
    }
    let report = FitReport {
        max_rel_err: max_rel,
        rms_rel_err: (sum_sq / k_pts as f64).sqrt(),
        iterations,
        converged,
        unstable_poles,
    };
    Ok((tf, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctrlagg::tf::{evaluate_fr, log_grid};

    fn fit_roundtrip(tf: &RationalTF, n: usize, m: usize) -> (RationalTF, FitReport) {
        let grid = log_grid(0.01, 10.0, 120).unwrap();
        let fr = evaluate_fr(tf, &grid).unwrap();
        fit_rational(&fr, n, m, Weighting::InverseMagnitude, &FitOptions::default()).unwrap()
    }

    #[test]
    fn recovers_first_order_lag() {
        let tf = RationalTF::new(vec![5.0], vec![1.0, 0.05]);
        let (_, report) = fit_roundtrip(&tf, 0, 1);
        assert!(report.max_rel_err < 1e-8, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn recovers_third_order_stabilizer_shape() {
        // 20 * 10s/(1+10s) * (1+0.05s)/(1+0.02s) * (1+3s)/(1+5.4s)
        let tf = RationalTF::new(vec![0.0, 200.0], vec![1.0, 10.0])
            .mul(&RationalTF::new(vec![1.0, 0.05], vec![1.0, 0.02]))
            .mul(&RationalTF::new(vec![1.0, 3.0], vec![1.0, 5.4]));
        let (fitted, report) = fit_roundtrip(&tf, 3, 3);
        assert!(report.max_rel_err < 1e-7, "max rel err {}", report.max_rel_err);
        // Sanity: the recovered response matches at an off-grid frequency.
        let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * 0.37);
        let err = (fitted.eval(s) - tf.eval(s)).norm() / tf.eval(s).norm();
        assert!(err < 1e-7, "off-grid rel err {err}");
    }

    #[test]
    fn unstable_data_is_rejected_unless_forced() {
        // 1/(s - 1) has a pole at +1.
        let tf = RationalTF::new(vec![1.0], vec![-1.0, 1.0]);
        let grid = log_grid(0.01, 10.0, 80).unwrap();
        let fr = evaluate_fr(&tf, &grid).unwrap();
        let err = fit_rational(&fr, 0, 1, Weighting::Uniform, &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, CtrlaggError::UnstableFit { .. }));

        let opts = FitOptions { allow_unstable: true, ..FitOptions::default() };
        let (fitted, report) =
            fit_rational(&fr, 0, 1, Weighting::Uniform, &opts).unwrap();
        assert_eq!(report.unstable_poles.len(), 1);
        assert!(report.max_rel_err < 1e-8);
        assert!((fitted.poles()[0].re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn short_grid_is_rejected() {
        let tf = RationalTF::new(vec![1.0], vec![1.0, 1.0]);
        let grid = log_grid(0.1, 1.0, 5).unwrap();
        let fr = evaluate_fr(&tf, &grid).unwrap();
        let err = fit_rational(&fr, 1, 2, Weighting::Uniform, &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, CtrlaggError::GridMismatch { .. }));
    }

    #[test]
    fn zero_response_fits_to_zero() {
        let fr = FrequencyResponse {
            freqs_hz: log_grid(0.1, 1.0, 30).unwrap(),
            values: vec![Complex64::new(0.0, 0.0); 30],
        };
        let (tf, report) =
            fit_rational(&fr, 1, 2, Weighting::Uniform, &FitOptions::default()).unwrap();
        assert_eq!(tf, RationalTF::zero());
        assert_eq!(report.max_rel_err, 0.0);
    }
}
