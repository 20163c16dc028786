//! Newton-Raphson base-case power flow.
//!
//! Every bus is PQ except the slack: generator dispatch and constant-power
//! loads enter the mismatch equations directly, constant-admittance parts sit
//! in the Y-matrix, and the slack holds 1.0∠0 pu while absorbing the system
//! residual. A slack bus without a generator acts as an infinite bus.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use super::types::{BusId, Generator, PowerSystemCase};
use crate::netred::build_admittance;

const TOLERANCE: f64 = 1e-10;
const ACCEPTABLE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum PowerflowError {
    #[error(
        "power flow diverged: max mismatch {mismatch:.3e} pu after {iterations} iterations"
    )]
    Divergence { iterations: usize, mismatch: f64 },
    #[error("singular power-flow Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
}

/// Complex power carried by a branch, measured into each end.
#[derive(Debug, Clone)]
pub struct BranchFlow {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Power entering the branch at the from side (pu).
    pub s_from_pu: Complex64,
    /// Power entering the branch at the to side (pu).
    pub s_to_pu: Complex64,
}

#[derive(Debug, Clone)]
pub struct BusVoltageSolution {
    /// Bus ids in case order; `voltages[i]` belongs to `bus_order[i]`.
    pub bus_order: Vec<BusId>,
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
    /// Net constant-power injection the slack source provides (pu), i.e. the
    /// system residual after all specified injections.
    pub slack_injection_pu: Complex64,
    pub branch_flows: Vec<BranchFlow>,
}

impl BusVoltageSolution {
    pub fn voltage(&self, bus: &str) -> Option<Complex64> {
        self.bus_order.iter().position(|b| b == bus).map(|i| self.voltages[i])
    }

    /// Solved complex injection of one generator in pu. Non-slack machines
    /// inject their file dispatch; machines at the slack bus share the solved
    /// residual (plus the bus's constant-power load) in proportion to rating.
    pub fn generator_injection_pu(
        &self,
        case: &PowerSystemCase,
        gen: &Generator,
    ) -> Complex64 {
        if gen.bus != case.slack_bus {
            return gen.dispatch_pu(case.base_mva);
        }
        let s_load: Complex64 = case
            .loads
            .iter()
            .filter(|l| l.bus == case.slack_bus)
            .map(|l| l.s_pu(case.base_mva))
            .sum();
        let total = self.slack_injection_pu + s_load;
        let rating_sum: f64 =
            case.generators_at(&case.slack_bus).map(|g| g.rated_mva).sum();
        total * (gen.rated_mva / rating_sum)
    }
}

/// Solves the case's base-case power flow from a flat start.
pub fn solve_powerflow(case: &PowerSystemCase) -> Result<BusVoltageSolution, PowerflowError> {
    let y = build_admittance(case);
    let n = case.buses.len();
    let slack = y.index_of(&case.slack_bus).expect("validated slack bus");

    // Specified net constant-power injection per bus (pu).
    let mut s_spec = vec![Complex64::new(0.0, 0.0); n];
    for gen in &case.generators {
        let i = y.index_of(&gen.bus).expect("validated generator bus");
        s_spec[i] += gen.dispatch_pu(case.base_mva);
    }
    for load in &case.loads {
        let i = y.index_of(&load.bus).expect("validated load bus");
        s_spec[i] -= load.s_pu(case.base_mva);
    }

    // Unknowns: angle and magnitude at every non-slack bus.
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let ym = y.matrix();

    // Plain Newton overshoots from a flat start on heavily loaded cases, so
    // the first trial step is capped to a trust box (0.2 rad, 0.1 pu) and a
    // 2-norm backtracking line search guards each update.
    let mut state = newton_solve(ym, &pq, &s_spec, vec![0.0; n], vec![1.0; n])?;
    let theta = std::mem::take(&mut state.theta);
    let vm = std::mem::take(&mut state.vm);
    let (iterations, worst) = (state.iterations, state.max_mismatch);

    let voltages: Vec<Complex64> =
        (0..n).map(|i| Complex64::from_polar(vm[i], theta[i])).collect();
    let i_slack: Complex64 = (0..n).map(|k| ym[(slack, k)] * voltages[k]).sum();
    let slack_injection_pu = voltages[slack] * i_slack.conj();

    let branch_flows = case
        .branches
        .iter()
        .map(|br| {
            let f = y.index_of(&br.from_bus).unwrap();
            let t = y.index_of(&br.to_bus).unwrap();
            let half = br.shunt_admittance_total / 2.0;
            let tap = br.tap;
            let yff = (br.series_admittance + half) / (tap * tap);
            let yft = -br.series_admittance / tap;
            let i_f = yff * voltages[f] + yft * voltages[t];
            let i_t = yft * voltages[f] + (br.series_admittance + half) * voltages[t];
            BranchFlow {
                from_bus: br.from_bus.clone(),
                to_bus: br.to_bus.clone(),
                s_from_pu: voltages[f] * i_f.conj(),
                s_to_pu: voltages[t] * i_t.conj(),
            }
        })
        .collect();

    Ok(BusVoltageSolution {
        bus_order: y.order().to_vec(),
        voltages,
        iterations,
        max_mismatch_pu: worst,
        slack_injection_pu,
        branch_flows,
    })
}

struct NewtonState {
    theta: Vec<f64>,
    vm: Vec<f64>,
    iterations: usize,
    max_mismatch: f64,
}

/// Newton-Raphson in polar coordinates over the non-slack buses, with a
/// backtracking line search on the residual 2-norm. Near the solution the
/// full step passes immediately, so quadratic convergence is unaffected.
fn newton_solve(
    ym: &nalgebra::DMatrix<Complex64>,
    pq: &[usize],
    s_spec: &[Complex64],
    mut theta: Vec<f64>,
    mut vm: Vec<f64>,
) -> Result<NewtonState, PowerflowError> {
    let n = s_spec.len();
    let mismatch = |theta: &[f64], vm: &[f64]| -> Vec<Complex64> {
        let v: Vec<Complex64> =
            (0..n).map(|i| Complex64::from_polar(vm[i], theta[i])).collect();
        (0..n)
            .map(|i| {
                let i_inj: Complex64 = (0..n).map(|k| ym[(i, k)] * v[k]).sum();
                s_spec[i] - v[i] * i_inj.conj()
            })
            .collect()
    };
    let max_abs = |dm: &[Complex64]| {
        pq.iter()
            .map(|&i| dm[i].re.abs().max(dm[i].im.abs()))
            .fold(0.0_f64, f64::max)
    };
    let norm2 = |dm: &[Complex64]| {
        pq.iter().map(|&i| dm[i].norm_sqr()).sum::<f64>().sqrt()
    };

    let mut dm = mismatch(&theta, &vm);
    let mut worst = max_abs(&dm);
    let mut iterations = 0;

    while worst > TOLERANCE && iterations < MAX_ITERATIONS {
        // Polar Jacobian over the PQ unknowns: [dP/dth dP/dV; dQ/dth dQ/dV].
        let m = pq.len();
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        let mut rhs = DVector::<f64>::zeros(2 * m);
        let v: Vec<Complex64> =
            (0..n).map(|i| Complex64::from_polar(vm[i], theta[i])).collect();
        let s_calc: Vec<Complex64> = (0..n)
            .map(|i| {
                let i_inj: Complex64 = (0..n).map(|k| ym[(i, k)] * v[k]).sum();
                v[i] * i_inj.conj()
            })
            .collect();
        for (r, &i) in pq.iter().enumerate() {
            rhs[r] = dm[i].re;
            rhs[m + r] = dm[i].im;
            for (c, &j) in pq.iter().enumerate() {
                let g = ym[(i, j)].re;
                let b = ym[(i, j)].im;
                if i == j {
                    let (p, q) = (s_calc[i].re, s_calc[i].im);
                    jac[(r, c)] = -q - b * vm[i] * vm[i];
                    jac[(r, m + c)] = p / vm[i] + g * vm[i];
                    jac[(m + r, c)] = p - g * vm[i] * vm[i];
                    jac[(m + r, m + c)] = q / vm[i] - b * vm[i];
                } else {
                    let tij = theta[i] - theta[j];
                    let (st, ct) = tij.sin_cos();
                    jac[(r, c)] = vm[i] * vm[j] * (g * st - b * ct);
                    jac[(r, m + c)] = vm[i] * (g * ct + b * st);
                    jac[(m + r, c)] = -vm[i] * vm[j] * (g * ct + b * st);
                    jac[(m + r, m + c)] = vm[i] * (g * st - b * ct);
                }
            }
        }
        let lu = jac.lu();
        let dx = lu.solve(&rhs).ok_or(PowerflowError::SingularJacobian {
            iteration: iterations + 1,
        })?;

        let trial = |alpha: f64| -> (Vec<f64>, Vec<f64>, Vec<Complex64>) {
            let mut theta_t = theta.clone();
            let mut vm_t = vm.clone();
            for (r, &i) in pq.iter().enumerate() {
                theta_t[i] += alpha * dx[r];
                vm_t[i] = (vm_t[i] + alpha * dx[m + r]).max(0.05);
            }
            let dm_t = mismatch(&theta_t, &vm_t);
            (theta_t, vm_t, dm_t)
        };
        let f0 = norm2(&dm);
        let dth_max = (0..m).map(|r| dx[r].abs()).fold(0.0_f64, f64::max);
        let dv_max = (0..m).map(|r| dx[m + r].abs()).fold(0.0_f64, f64::max);
        let mut alpha =
            1.0_f64.min(0.2 / dth_max.max(1e-12)).min(0.1 / dv_max.max(1e-12));
        let mut step = trial(alpha);
        let mut best_norm = norm2(&step.2);
        for _ in 0..10 {
            if best_norm <= (1.0 - 1e-4 * alpha) * f0 {
                break;
            }
            alpha /= 2.0;
            let next = trial(alpha);
            let next_norm = norm2(&next.2);
            if next_norm < best_norm {
                step = next;
                best_norm = next_norm;
            }
        }
        (theta, vm, dm) = step;
        worst = max_abs(&dm);
        iterations += 1;
    }

    if worst > ACCEPTABLE {
        return Err(PowerflowError::Divergence { iterations, mismatch: worst });
    }
    Ok(NewtonState { theta, vm, iterations, max_mismatch: worst })
}
