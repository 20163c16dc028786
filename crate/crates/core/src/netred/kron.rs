//! Kron (Schur-complement) elimination of zero-injection buses.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::admittance::AdmittanceMatrix;
use super::NetredError;
use crate::model::BusId;

/// Eliminates every bus not named in `keep`, returning the reduced matrix
/// `Y_red = Y_kk − Y_ke · Y_ee⁻¹ · Y_ek` over the kept buses (in their
/// original relative order). Driving-point and transfer impedances among
/// kept buses are preserved exactly.
pub fn kron_eliminate(
    y: &AdmittanceMatrix,
    keep: &[BusId],
) -> Result<AdmittanceMatrix, NetredError> {
    for id in keep {
        if y.index_of(id).is_none() {
            return Err(NetredError::UnknownBus(id.clone()));
        }
    }
    let kept: Vec<usize> = y
        .order()
        .iter()
        .enumerate()
        .filter(|(_, id)| keep.contains(id))
        .map(|(i, _)| i)
        .collect();
    let elim: Vec<usize> =
        (0..y.dim()).filter(|i| !kept.contains(i)).collect();
    if elim.is_empty() {
        return Ok(y.clone());
    }

    let m = y.matrix();
    let ykk = m.select_rows(kept.iter()).select_columns(kept.iter());
    let yke = m.select_rows(kept.iter()).select_columns(elim.iter());
    let yek = m.select_rows(elim.iter()).select_columns(kept.iter());
    let yee = m.select_rows(elim.iter()).select_columns(elim.iter());

    let x = solve_nonsingular(&yee, &yek).ok_or_else(|| NetredError::SingularSubmatrix {
        buses: offending_buses(y, &elim, &yee),
    })?;
    let reduced = ykk - yke * x;
    let order: Vec<BusId> = kept.iter().map(|&i| y.order()[i].clone()).collect();
    Ok(AdmittanceMatrix::from_parts(order, reduced))
}

/// LU solve with an explicit conditioning guard: rejects Y_ee whose pivots
/// collapse relative to the matrix scale (isolated buses, zero rows).
fn solve_nonsingular(
    yee: &DMatrix<Complex64>,
    yek: &DMatrix<Complex64>,
) -> Option<DMatrix<Complex64>> {
    let scale = yee.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let lu = yee.clone().full_piv_lu();
    let umin = (0..yee.nrows())
        .map(|i| lu.u()[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if !umin.is_finite() || umin <= scale * 1e-12 {
        return None;
    }
    lu.solve(yek)
}

/// Best-effort diagnosis: buses whose entire Y_ee row is (near) zero are the
/// classic cause (no branches, no shunt); otherwise report the whole set.
fn offending_buses(
    y: &AdmittanceMatrix,
    elim: &[usize],
    yee: &DMatrix<Complex64>,
) -> Vec<String> {
    let scale = yee.iter().map(|c| c.norm()).fold(0.0_f64, f64::max).max(1.0);
    let zero_rows: Vec<String> = elim
        .iter()
        .enumerate()
        .filter(|(r, _)| yee.row(*r).iter().all(|c| c.norm() <= scale * 1e-14))
        .map(|(_, &i)| y.order()[i].clone())
        .collect();
    if zero_rows.is_empty() {
        elim.iter().map(|&i| y.order()[i].clone()).collect()
    } else {
        zero_rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chain_3bus() -> AdmittanceMatrix {
        // 1 -(−j10)- 2 -(−j10)- 3
        let mut y =
            AdmittanceMatrix::zeros(vec!["1".into(), "2".into(), "3".into()]);
        y.add_branch(0, 1, c(0.0, -10.0), c(0.0, 0.0), 1.0);
        y.add_branch(1, 2, c(0.0, -10.0), c(0.0, 0.0), 1.0);
        y
    }

    #[test]
    fn series_combination_through_eliminated_middle_bus() {
        let y = chain_3bus();
        let red = kron_eliminate(&y, &["1".into(), "3".into()]).unwrap();
        assert_eq!(red.dim(), 2);
        // Hand Kron oracle: series of two −j10 branches is −j5.
        assert_relative_eq!(red.at("1", "3").im, 5.0, max_relative = 1e-12);
        assert_relative_eq!(red.at("1", "1").im, -5.0, max_relative = 1e-12);
        assert_relative_eq!(red.at("3", "3").im, -5.0, max_relative = 1e-12);
    }

    #[test]
    fn keep_all_is_identity() {
        let y = chain_3bus();
        let red = kron_eliminate(&y, &["1".into(), "2".into(), "3".into()]).unwrap();
        assert_eq!(red.dim(), 3);
        for i in ["1", "2", "3"] {
            for j in ["1", "2", "3"] {
                assert_eq!(red.at(i, j), y.at(i, j));
            }
        }
    }

    #[test]
    fn isolated_bus_elimination_is_singular() {
        let mut y =
            AdmittanceMatrix::zeros(vec!["1".into(), "2".into(), "iso".into()]);
        y.add_branch(0, 1, c(0.0, -10.0), c(0.0, 0.0), 1.0);
        let err = kron_eliminate(&y, &["1".into(), "2".into()]).unwrap_err();
        match err {
            NetredError::SingularSubmatrix { buses } => {
                assert_eq!(buses, vec!["iso".to_string()])
            }
            other => panic!("expected SingularSubmatrix, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keep_bus_is_rejected() {
        let y = chain_3bus();
        assert!(matches!(
            kron_eliminate(&y, &["1".into(), "nope".into()]),
            Err(NetredError::UnknownBus(b)) if b == "nope"
        ));
    }
}
