//! Bus admittance matrix assembly.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::model::{BusId, BusVoltageSolution, PowerSystemCase};

/// Dense complex bus admittance matrix with a bus-id ↔ row ordering map.
/// Row order follows construction order (case bus order for the builders
/// here). Dense storage is deliberate: target systems are tens of buses.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    order: Vec<BusId>,
    index: HashMap<BusId, usize>,
    m: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    /// An all-zero matrix over the given bus ordering.
    pub fn zeros(order: Vec<BusId>) -> Self {
        let n = order.len();
        let index = order.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
        AdmittanceMatrix { order, index, m: DMatrix::zeros(n, n) }
    }

    pub fn from_parts(order: Vec<BusId>, m: DMatrix<Complex64>) -> Self {
        assert_eq!(order.len(), m.nrows());
        assert_eq!(m.nrows(), m.ncols());
        let index = order.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
        AdmittanceMatrix { order, index, m }
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Bus ids in row order.
    pub fn order(&self) -> &[BusId] {
        &self.order
    }

    pub fn index_of(&self, bus: &str) -> Option<usize> {
        self.index.get(bus).copied()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.m
    }

    /// Entry by bus ids; panics on unknown ids (lookups in hot paths use
    /// row indices instead).
    pub fn at(&self, from: &str, to: &str) -> Complex64 {
        self.m[(self.index[from], self.index[to])]
    }

    /// Adds a branch π-model between two rows. `tap` is on the `from` side:
    /// `Y_ff += (y_s + y_sh/2)/t²`, `Y_ft = Y_tf += −y_s/t`,
    /// `Y_tt += y_s + y_sh/2`.
    pub fn add_branch(&mut self, f: usize, t: usize, y_s: Complex64, y_sh: Complex64, tap: f64) {
        let half = y_sh / 2.0;
        self.m[(f, f)] += (y_s + half) / (tap * tap);
        self.m[(t, t)] += y_s + half;
        self.m[(f, t)] -= y_s / tap;
        self.m[(t, f)] -= y_s / tap;
    }

    pub fn add_shunt(&mut self, i: usize, y: Complex64) {
        self.m[(i, i)] += y;
    }
}

/// Standard bus admittance matrix of the passive network: branches (with
/// taps and charging), bus shunts, and the constant-admittance part of
/// loads. Constant-power load parts are left to the power-flow mismatch
/// equations; see [`build_admittance_at`] for the converted form.
pub fn build_admittance(case: &PowerSystemCase) -> AdmittanceMatrix {
    let mut y = AdmittanceMatrix::zeros(case.buses.iter().map(|b| b.id.clone()).collect());
    for br in &case.branches {
        let f = y.index_of(&br.from_bus).expect("validated branch endpoint");
        let t = y.index_of(&br.to_bus).expect("validated branch endpoint");
        y.add_branch(f, t, br.series_admittance, br.shunt_admittance_total, br.tap);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y.add_shunt(i, bus.shunt);
    }
    for load in &case.loads {
        let i = y.index_of(&load.bus).expect("validated load bus");
        y.add_shunt(i, load.y_shunt);
    }
    y
}

/// [`build_admittance`] plus constant-power loads converted to constant
/// admittance at the solved operating point: a load consuming S at voltage V
/// becomes a shunt `y = conj(S)/|V|²`. The result describes the complete
/// algebraic network seen by dynamics and reduction.
pub fn build_admittance_at(
    case: &PowerSystemCase,
    solution: &BusVoltageSolution,
) -> AdmittanceMatrix {
    let mut y = build_admittance(case);
    for load in &case.loads {
        let s = load.s_pu(case.base_mva);
        if s.norm() == 0.0 {
            continue;
        }
        let i = y.index_of(&load.bus).expect("validated load bus");
        let v = solution.voltages[i];
        y.add_shunt(i, s.conj() / v.norm_sqr());
    }
    y
}
