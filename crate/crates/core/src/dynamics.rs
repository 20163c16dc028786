//! Nonlinear differential model of the multi-machine system: classical and
//! one-axis machines behind transient reactance, controllers realized as
//! per-path state-space blocks in deviation coordinates, and the algebraic
//! network solved through a cached factorization.
//!
//! Controller states are zero at the solved operating point by construction,
//! so the power-flow solution extends to an exact dynamic equilibrium.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::ctrlagg::{path_tf, RationalTF};
use crate::model::{
    BusId, BusVoltageSolution, ControllerKind, CtrlId, PowerSystemCase, SignalKind,
};
use crate::netred::{build_admittance_at, AdmittanceMatrix};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("network admittance matrix is singular: {0}")]
    SingularNetwork(String),
    #[error(
        "controller '{controller}' path '{signal}' has an improper transfer function; \
         it cannot be realized as a state-space block"
    )]
    ImproperPath { controller: CtrlId, signal: SignalKind },
    #[error("case has no generators; there is nothing to integrate")]
    NoGenerators,
    #[error("admittance operator bus ordering does not match the model")]
    OrderMismatch,
}

/// Single-input single-output state-space realization in controllable
/// canonical form.
#[derive(Debug, Clone)]
pub struct Lti {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl Lti {
    /// Realizes a proper rational function. Fails when the numerator degree
    /// exceeds the denominator degree.
    pub fn from_tf(tf: &RationalTF) -> Option<Lti> {
        if !tf.is_proper() {
            return None;
        }
        let monic = tf.monic();
        let m = monic.den_degree();
        let mut num = monic.num.clone();
        num.resize(m + 1, 0.0);
        let d = num[m];
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for k in 0..m {
            a[(m - 1, k)] = -monic.den[k];
        }
        let mut b = DVector::<f64>::zeros(m);
        if m > 0 {
            b[m - 1] = 1.0;
        }
        let c = RowDVector::from_iterator(m, (0..m).map(|k| num[k] - monic.den[k] * d));
        Some(Lti { a, b, c, d })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone)]
struct PathDyn {
    signal: SignalKind,
    lti: Lti,
    /// Global index of this path's first state.
    offset: usize,
}

#[derive(Debug, Clone)]
struct CtrlDyn {
    kind: ControllerKind,
    paths: Vec<PathDyn>,
}

#[derive(Debug, Clone)]
struct OneAxis {
    /// (x_d - x'_d) on the machine base.
    xd_minus_xdp: f64,
    td0: f64,
}

/// Per-machine dynamic data. States live at `offset`: rotor angle, speed
/// deviation, then the one-axis EMF state when present, then controller
/// path states.
#[derive(Debug, Clone)]
pub struct MachineDyn {
    pub id: String,
    pub bus: BusId,
    bus_idx: usize,
    offset: usize,
    /// Machine MVA over system MVA; converts system-pu power to machine pu.
    s_ratio: f64,
    /// Source admittance 1/(j x'd) on the system base.
    y_src: Complex64,
    h: f64,
    damping: f64,
    one_axis: Option<OneAxis>,
    /// Constant EMF magnitude for the classical model.
    e_mag0: f64,
    delta0: f64,
    eq0: f64,
    efd0: f64,
    pm0: f64,
    pe0: f64,
    vt0: f64,
    controllers: Vec<CtrlDyn>,
}

impl MachineDyn {
    fn source_emf(&self, x: &DVector<f64>) -> Complex64 {
        let mag = if self.one_axis.is_some() { x[self.offset + 2] } else { self.e_mag0 };
        Complex64::from_polar(mag, x[self.offset])
    }
}

/// Network operator for one topology: factorized augmented admittance plus
/// the sensitivity columns of bus voltages to each machine's internal EMF.
pub struct NetworkOp {
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Position of each bus in the unknown vector (None for the fixed bus).
    pos: Vec<Option<usize>>,
    /// Injection contribution of the fixed bus, already on the unknown side.
    fixed_rhs: DVector<Complex64>,
    /// dV(all buses)/dE_j per machine; the fixed bus entry is zero.
    w: Vec<DVector<Complex64>>,
    n_unknown: usize,
}

pub struct DynamicModel {
    pub case: PowerSystemCase,
    pub machines: Vec<MachineDyn>,
    state_dim: usize,
    labels: Vec<String>,
    base_y: AdmittanceMatrix,
    base_op: NetworkOp,
    /// Index and voltage of the infinite bus (a slack bus without machines).
    fixed: Option<(usize, Complex64)>,
    omega_s: f64,
    bus_v0: Vec<Complex64>,
}

/// Machine-side signal values with state gradients, used for both the
/// right-hand side and the analytic Jacobian.
#[derive(Clone)]
struct Sig {
    v: f64,
    g: Option<DVector<f64>>,
}

impl Sig {
    fn constant(n: Option<usize>) -> Sig {
        Sig { v: 0.0, g: n.map(DVector::zeros) }
    }

    fn state(idx: usize, x: &DVector<f64>, want: bool) -> Sig {
        let g = want.then(|| {
            let mut g = DVector::zeros(x.len());
            g[idx] = 1.0;
            g
        });
        Sig { v: x[idx], g }
    }
}

struct NetCtx {
    /// All bus voltages, fixed bus included.
    v: Vec<Complex64>,
    /// Machine internal EMFs and stator currents (system pu).
    e: Vec<Complex64>,
    i: Vec<Complex64>,
}

impl DynamicModel {
    pub fn build(
        case: &PowerSystemCase,
        solution: &BusVoltageSolution,
        force_classical: bool,
    ) -> Result<DynamicModel, DynamicsError> {
        if case.generators.is_empty() {
            return Err(DynamicsError::NoGenerators);
        }
        let base_y = build_admittance_at(case, solution);
        let slack_has_machine = case.generators.iter().any(|g| g.bus == case.slack_bus);
        let fixed = if slack_has_machine {
            None
        } else {
            let idx = base_y.index_of(&case.slack_bus).expect("slack bus in order");
            Some((idx, solution.voltage(&case.slack_bus).unwrap()))
        };

        let mut machines = Vec::with_capacity(case.generators.len());
        let mut labels: Vec<String> = Vec::new();
        let mut offset = 0usize;
        for gen in &case.generators {
            let bus_idx = base_y.index_of(&gen.bus).expect("validated generator bus");
            let s_ratio = gen.rated_mva / case.base_mva;
            let x_sys = gen.xd_prime / s_ratio;
            let y_src = Complex64::new(0.0, -1.0 / x_sys);
            let v = solution.voltage(&gen.bus).unwrap();
            let s_sys = solution.generator_injection_pu(case, gen);
            let i_sys = (s_sys / v).conj();
            let e = v + Complex64::new(0.0, x_sys) * i_sys;
            let delta0 = e.arg();
            let emag0 = e.norm();
            let pe0 = (e * i_sys.conj()).re / s_ratio;
            let i_mach = i_sys / s_ratio;
            let id0 = -(i_mach * Complex64::from_polar(1.0, -delta0)).im;
            let one_axis = if force_classical || !gen.is_one_axis() {
                None
            } else {
                Some(OneAxis {
                    xd_minus_xdp: gen.xd.unwrap() - gen.xd_prime,
                    td0: gen.td0_prime.unwrap(),
                })
            };
            let efd0 = match &one_axis {
                Some(oa) => emag0 + oa.xd_minus_xdp * id0,
                None => emag0,
            };

            let machine_offset = offset;
            labels.push(format!("delta:{}", gen.id));
            labels.push(format!("omega:{}", gen.id));
            offset += 2;
            if one_axis.is_some() {
                labels.push(format!("eq:{}", gen.id));
                offset += 1;
            }

            let mut ctrls = Vec::new();
            for cid in &gen.controllers {
                let ctrl = case.controller(cid).expect("validated controller id");
                let mut paths = Vec::new();
                for path in &ctrl.inputs {
                    let tf = path_tf(&path.blocks);
                    let lti = Lti::from_tf(&tf).ok_or_else(|| DynamicsError::ImproperPath {
                        controller: ctrl.id.clone(),
                        signal: path.signal,
                    })?;
                    for k in 0..lti.dim() {
                        labels.push(format!("ctrl:{}:{}:{}", ctrl.id, path.signal, k));
                    }
                    let dim = lti.dim();
                    paths.push(PathDyn { signal: path.signal, lti, offset });
                    offset += dim;
                }
                ctrls.push(CtrlDyn { kind: ctrl.kind, paths });
            }

            machines.push(MachineDyn {
                id: gen.id.clone(),
                bus: gen.bus.clone(),
                bus_idx,
                offset: machine_offset,
                s_ratio,
                y_src,
                h: gen.inertia_h,
                damping: gen.damping_d,
                one_axis,
                e_mag0: emag0,
                delta0,
                eq0: emag0,
                efd0,
                pm0: pe0,
                pe0,
                vt0: v.norm(),
                controllers: ctrls,
            });
        }

        let bus_v0 = base_y
            .order()
            .iter()
            .map(|b| solution.voltage(b).unwrap())
            .collect();
        let mut model = DynamicModel {
            case: case.clone(),
            machines,
            state_dim: offset,
            labels,
            base_op: NetworkOp {
                lu: DMatrix::<Complex64>::identity(1, 1).lu(),
                pos: vec![],
                fixed_rhs: DVector::zeros(0),
                w: vec![],
                n_unknown: 0,
            },
            base_y,
            fixed,
            omega_s: case.angular_frequency(),
            bus_v0,
        };
        model.base_op = model.op_for(&model.base_y)?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base_op(&self) -> &NetworkOp {
        &self.base_op
    }

    pub fn base_admittance(&self) -> &AdmittanceMatrix {
        &self.base_y
    }

    /// Factorizes the augmented admittance for a (possibly modified) network
    /// sharing this model's bus ordering.
    pub fn op_for(&self, y_case: &AdmittanceMatrix) -> Result<NetworkOp, DynamicsError> {
        if y_case.order() != self.base_y.order() {
            return Err(DynamicsError::OrderMismatch);
        }
        let n = y_case.dim();
        let mut y = y_case.matrix().clone();
        for m in &self.machines {
            y[(m.bus_idx, m.bus_idx)] += m.y_src;
        }

        let (unknown, fixed_idx): (Vec<usize>, Option<usize>) = match self.fixed {
            Some((fi, _)) => ((0..n).filter(|i| *i != fi).collect(), Some(fi)),
            None => ((0..n).collect(), None),
        };
        let nu = unknown.len();
        let mut pos: Vec<Option<usize>> = vec![None; n];
        for (p, i) in unknown.iter().enumerate() {
            pos[*i] = Some(p);
        }

        let mut yuu = DMatrix::<Complex64>::zeros(nu, nu);
        for (pi, i) in unknown.iter().enumerate() {
            for (pj, j) in unknown.iter().enumerate() {
                yuu[(pi, pj)] = y[(*i, *j)];
            }
        }
        let mut fixed_rhs = DVector::<Complex64>::zeros(nu);
        if let (Some(fi), Some((_, vs))) = (fixed_idx, self.fixed) {
            for (pi, i) in unknown.iter().enumerate() {
                fixed_rhs[pi] = -y[(*i, fi)] * vs;
            }
        }

        let lu = yuu.lu();
        // Solve for the voltage-sensitivity column of each machine EMF; a
        // failed solve means the augmented matrix is singular.
        let mut w = Vec::with_capacity(self.machines.len());
        for m in &self.machines {
            let mut rhs = DVector::<Complex64>::zeros(nu);
            let p = pos[m.bus_idx].ok_or_else(|| {
                DynamicsError::SingularNetwork(format!(
                    "machine '{}' terminal coincides with the infinite bus",
                    m.id
                ))
            })?;
            rhs[p] = m.y_src;
            let col = lu.solve(&rhs).ok_or_else(|| {
                DynamicsError::SingularNetwork(
                    "augmented admittance factorization failed".into(),
                )
            })?;
            // Expand to full bus length with zero at the fixed bus.
            let mut full = DVector::<Complex64>::zeros(n);
            for (pi, i) in unknown.iter().enumerate() {
                full[*i] = col[pi];
            }
            w.push(full);
        }
        Ok(NetworkOp { lu, pos, fixed_rhs, w, n_unknown: nu })
    }

    /// The state vector at the solved operating point.
    pub fn equilibrium(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim);
        for m in &self.machines {
            x[m.offset] = m.delta0;
            if m.one_axis.is_some() {
                x[m.offset + 2] = m.eq0;
            }
        }
        x
    }

    fn solve_network(
        &self,
        x: &DVector<f64>,
        op: &NetworkOp,
    ) -> Result<NetCtx, DynamicsError> {
        let n = self.base_y.dim();
        let e: Vec<Complex64> = self.machines.iter().map(|m| m.source_emf(x)).collect();
        let mut rhs = op.fixed_rhs.clone();
        if rhs.is_empty() {
            rhs = DVector::zeros(op.n_unknown);
        }
        for (m, em) in self.machines.iter().zip(&e) {
            let p = op.pos[m.bus_idx].expect("machine bus is never the fixed bus");
            rhs[p] += em * m.y_src;
        }
        let vu = op
            .lu
            .solve(&rhs)
            .ok_or_else(|| DynamicsError::SingularNetwork("network solve failed".into()))?;
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            match op.pos[i] {
                Some(p) => v[i] = vu[p],
                None => v[i] = self.fixed.unwrap().1,
            }
        }
        let i: Vec<Complex64> = self
            .machines
            .iter()
            .zip(&e)
            .map(|(m, em)| (em - v[m.bus_idx]) * m.y_src)
            .collect();
        Ok(NetCtx { v, e, i })
    }

    /// Machine-frame quantities and their gradients with respect to the
    /// state vector: electrical power, d-axis current, terminal-voltage
    /// magnitude (all machine pu / pu).
    fn machine_signals(
        &self,
        x: &DVector<f64>,
        ctx: &NetCtx,
        op: &NetworkOp,
        want_grad: bool,
    ) -> Vec<(Sig, Sig, Sig)> {
        let nx = self.state_dim;
        // Source parameters: (state index, machine index, is_angle).
        let mut params: Vec<(usize, usize, bool)> = Vec::new();
        if want_grad {
            for (j, m) in self.machines.iter().enumerate() {
                params.push((m.offset, j, true));
                if m.one_axis.is_some() {
                    params.push((m.offset + 2, j, false));
                }
            }
        }

        self.machines
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let ik = ctx.i[k];
                let ek = ctx.e[k];
                let vk = ctx.v[m.bus_idx];
                let rot = Complex64::from_polar(1.0, -x[m.offset]);
                let pe = (ek * ik.conj()).re / m.s_ratio;
                let id = -(ik * rot).im / m.s_ratio;
                let vt = vk.norm();

                let (mut gpe, mut gid, mut gvt) = if want_grad {
                    (
                        Some(DVector::zeros(nx)),
                        Some(DVector::zeros(nx)),
                        Some(DVector::zeros(nx)),
                    )
                } else {
                    (None, None, None)
                };
                for &(idx, j, is_angle) in &params {
                    let ej = ctx.e[j];
                    let g = if is_angle {
                        Complex64::new(0.0, 1.0) * ej
                    } else {
                        Complex64::from_polar(1.0, x[self.machines[j].offset])
                    };
                    let wj = &op.w[j];
                    let de_k = if j == k { g } else { Complex64::new(0.0, 0.0) };
                    let dv_k = g * wj[m.bus_idx];
                    let di_k = (de_k - dv_k) * m.y_src;
                    let dpe = (de_k * ik.conj() + ek * di_k.conj()).re / m.s_ratio;
                    let mut did = -(di_k * rot).im / m.s_ratio;
                    if is_angle && j == k {
                        // The rotation into the machine frame also moves with
                        // this machine's own angle.
                        did += (ik * rot).re / m.s_ratio;
                    }
                    let dvt = if vt > 0.0 {
                        (vk.conj() * dv_k).re / vt
                    } else {
                        0.0
                    };
                    gpe.as_mut().unwrap()[idx] += dpe;
                    gid.as_mut().unwrap()[idx] += did;
                    gvt.as_mut().unwrap()[idx] += dvt;
                }
                (Sig { v: pe, g: gpe }, Sig { v: id, g: gid }, Sig { v: vt, g: gvt })
            })
            .collect()
    }

    /// Evaluates every controller output for one machine. PSS outputs are
    /// computed first so that an AVR path reading `vpss` can consume them.
    fn controller_outputs(
        &self,
        m: &MachineDyn,
        x: &DVector<f64>,
        leaves: &ControlLeaves,
        want_grad: bool,
    ) -> MachineOutputs {
        let nx = self.state_dim;
        let path_output = |p: &PathDyn, input: &Sig| -> Sig {
            let xs = x.rows(p.offset, p.lti.dim());
            let mut v = p.lti.d * input.v;
            for k in 0..p.lti.dim() {
                v += p.lti.c[k] * xs[k];
            }
            let g = want_grad.then(|| {
                let mut g = input.g.clone().unwrap() * p.lti.d;
                for k in 0..p.lti.dim() {
                    g[p.offset + k] += p.lti.c[k];
                }
                g
            });
            Sig { v, g }
        };

        let leaf = |signal: SignalKind| -> &Sig {
            match signal {
                SignalKind::DeltaOmega => &leaves.delta_omega,
                SignalKind::DeltaPe => &leaves.delta_pe,
                SignalKind::DeltaVt => &leaves.delta_vt,
                _ => &leaves.zero,
            }
        };

        let mut vpss = Sig::constant(want_grad.then_some(nx));
        for c in m.controllers.iter().filter(|c| c.kind == ControllerKind::Pss) {
            for p in &c.paths {
                let out = path_output(p, leaf(p.signal));
                vpss.v += out.v;
                if let Some(g) = &mut vpss.g {
                    *g += out.g.as_ref().unwrap();
                }
            }
        }

        let mut defd = Sig::constant(want_grad.then_some(nx));
        let mut dpm = Sig::constant(want_grad.then_some(nx));
        for c in &m.controllers {
            let acc = match c.kind {
                ControllerKind::Avr => &mut defd,
                ControllerKind::Gov => &mut dpm,
                ControllerKind::Pss => continue,
            };
            for p in &c.paths {
                let input = if p.signal == SignalKind::Vpss { &vpss } else { leaf(p.signal) };
                let out = path_output(p, input);
                acc.v += out.v;
                if let Some(g) = &mut acc.g {
                    *g += out.g.as_ref().unwrap();
                }
            }
        }
        MachineOutputs { vpss, delta_efd: defd, delta_pmech: dpm }
    }

    fn eval(
        &self,
        x: &DVector<f64>,
        op: &NetworkOp,
        want_jac: bool,
    ) -> Result<(DVector<f64>, Option<DMatrix<f64>>), DynamicsError> {
        let nx = self.state_dim;
        let ctx = self.solve_network(x, op)?;
        let signals = self.machine_signals(x, &ctx, op, want_jac);

        let mut f = DVector::<f64>::zeros(nx);
        let mut jac = want_jac.then(|| DMatrix::<f64>::zeros(nx, nx));

        for (k, m) in self.machines.iter().enumerate() {
            let (pe, id, vt) = &signals[k];
            let leaves = ControlLeaves {
                delta_omega: Sig::state(m.offset + 1, x, want_jac),
                delta_pe: Sig { v: pe.v - m.pe0, g: pe.g.clone() },
                delta_vt: Sig { v: vt.v - m.vt0, g: vt.g.clone() },
                zero: Sig::constant(want_jac.then_some(nx)),
            };
            let outs = self.controller_outputs(m, x, &leaves, want_jac);

            let o = m.offset;
            let omega = x[o + 1];
            f[o] = self.omega_s * omega;
            f[o + 1] = (m.pm0 + outs.delta_pmech.v - pe.v - m.damping * omega) / (2.0 * m.h);
            if let Some(oa) = &m.one_axis {
                let eq = x[o + 2];
                f[o + 2] =
                    (m.efd0 + outs.delta_efd.v - eq - oa.xd_minus_xdp * id.v) / oa.td0;
            }
            for c in &m.controllers {
                for p in &c.paths {
                    let input = match p.signal {
                        SignalKind::DeltaOmega => &leaves.delta_omega,
                        SignalKind::DeltaPe => &leaves.delta_pe,
                        SignalKind::DeltaVt => &leaves.delta_vt,
                        SignalKind::Vpss => &outs.vpss,
                        _ => &leaves.zero,
                    };
                    let xs = x.rows(p.offset, p.lti.dim());
                    let dx = &p.lti.a * xs + &p.lti.b * input.v;
                    for r in 0..p.lti.dim() {
                        f[p.offset + r] = dx[r];
                    }
                    if let Some(j) = &mut jac {
                        for r in 0..p.lti.dim() {
                            for cidx in 0..p.lti.dim() {
                                j[(p.offset + r, p.offset + cidx)] += p.lti.a[(r, cidx)];
                            }
                            let gi = input.g.as_ref().unwrap();
                            if p.lti.b[r] != 0.0 {
                                for s in 0..nx {
                                    j[(p.offset + r, s)] += p.lti.b[r] * gi[s];
                                }
                            }
                        }
                    }
                }
            }

            if let Some(j) = &mut jac {
                j[(o, o + 1)] = self.omega_s;
                let gpm = outs.delta_pmech.g.as_ref().unwrap();
                let gpe = pe.g.as_ref().unwrap();
                for s in 0..nx {
                    j[(o + 1, s)] += (gpm[s] - gpe[s]) / (2.0 * m.h);
                }
                j[(o + 1, o + 1)] += -m.damping / (2.0 * m.h);
                if let Some(oa) = &m.one_axis {
                    let gefd = outs.delta_efd.g.as_ref().unwrap();
                    let gid = id.g.as_ref().unwrap();
                    for s in 0..nx {
                        j[(o + 2, s)] += (gefd[s] - oa.xd_minus_xdp * gid[s]) / oa.td0;
                    }
                    j[(o + 2, o + 2)] += -1.0 / oa.td0;
                }
            }
        }
        Ok((f, jac))
    }

    /// Time derivative of the state vector.
    pub fn rhs(&self, x: &DVector<f64>, op: &NetworkOp) -> Result<DVector<f64>, DynamicsError> {
        Ok(self.eval(x, op, false)?.0)
    }

    /// Time derivative together with its analytic Jacobian.
    pub fn rhs_and_jacobian(
        &self,
        x: &DVector<f64>,
        op: &NetworkOp,
    ) -> Result<(DVector<f64>, DMatrix<f64>), DynamicsError> {
        let (f, j) = self.eval(x, op, true)?;
        Ok((f, j.expect("jacobian requested")))
    }

    /// Names of the recorded output channels, aligned with [`Self::measure`].
    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for m in &self.machines {
            names.push(format!("delta:{}", m.id));
            names.push(format!("omega:{}", m.id));
            names.push(format!("pe:{}", m.id));
            names.push(format!("vt:{}", m.id));
            names.push(format!("pmech:{}", m.id));
            names.push(format!("efd:{}", m.id));
        }
        for b in self.base_y.order() {
            names.push(format!("vmag:{b}"));
        }
        names
    }

    /// Observable quantities at one state: per machine the rotor angle (rad),
    /// speed deviation (pu), electrical power and mechanical power (machine
    /// pu), terminal voltage and field voltage (pu), then every bus voltage
    /// magnitude.
    pub fn measure(&self, x: &DVector<f64>, op: &NetworkOp) -> Result<Vec<f64>, DynamicsError> {
        let ctx = self.solve_network(x, op)?;
        let signals = self.machine_signals(x, &ctx, op, false);
        let mut out = Vec::with_capacity(6 * self.machines.len() + ctx.v.len());
        for (k, m) in self.machines.iter().enumerate() {
            let (pe, _id, vt) = &signals[k];
            let leaves = ControlLeaves {
                delta_omega: Sig::state(m.offset + 1, x, false),
                delta_pe: Sig { v: pe.v - m.pe0, g: None },
                delta_vt: Sig { v: vt.v - m.vt0, g: None },
                zero: Sig::constant(None),
            };
            let outs = self.controller_outputs(m, x, &leaves, false);
            out.push(x[m.offset]);
            out.push(x[m.offset + 1]);
            out.push(pe.v);
            out.push(vt.v);
            out.push(m.pm0 + outs.delta_pmech.v);
            out.push(m.efd0 + outs.delta_efd.v);
        }
        for v in &ctx.v {
            out.push(v.norm());
        }
        Ok(out)
    }

    /// Base-case voltage of every bus in admittance order.
    pub fn base_voltages(&self) -> &[Complex64] {
        &self.bus_v0
    }

    /// Global state index of a generator's rotor-angle state.
    pub fn delta_index(&self, gen: &str) -> Option<usize> {
        self.machines.iter().find(|m| m.id == gen).map(|m| m.offset)
    }

    /// Global state index of a generator's speed-deviation state.
    pub fn omega_index(&self, gen: &str) -> Option<usize> {
        self.machines.iter().find(|m| m.id == gen).map(|m| m.offset + 1)
    }
}

struct ControlLeaves {
    delta_omega: Sig,
    delta_pe: Sig,
    delta_vt: Sig,
    zero: Sig,
}

struct MachineOutputs {
    vpss: Sig,
    delta_efd: Sig,
    delta_pmech: Sig,
}
