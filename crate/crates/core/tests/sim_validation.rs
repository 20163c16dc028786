//! Simulator validation against independent references: a standalone RK4
//! integrator of the two-state swing equation (fault response and critical
//! clearing time) and matrix-exponential predictions of the linearized model
//! for small disturbances.

use dyneq::dynamics::DynamicModel;
use dyneq::model::{solve_powerflow, Branch, Bus, Generator, PowerSystemCase, Zone};
use dyneq::sim::{simulate, Event, EventKind, SimOptions};
use nalgebra::DVector;
use num_complex::Complex64;
use std::path::Path;

fn fixture(name: &str) -> PowerSystemCase {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    dyneq::model::load_case(&path).expect("fixture loads")
}

/// Classical machine against an infinite bus through one line; no loads, no
/// controllers, zero damping, so the swing equation has no hidden terms.
fn classical_smib() -> PowerSystemCase {
    PowerSystemCase {
        base_mva: 100.0,
        f_hz: 60.0,
        slack_bus: "inf".into(),
        buses: vec![
            Bus {
                id: "b1".into(),
                base_kv: 230.0,
                zone: Zone::Internal,
                shunt: Complex64::new(0.0, 0.0),
            },
            Bus {
                id: "inf".into(),
                base_kv: 230.0,
                zone: Zone::Internal,
                shunt: Complex64::new(0.0, 0.0),
            },
        ],
        branches: vec![Branch {
            from_bus: "b1".into(),
            to_bus: "inf".into(),
            series_admittance: Complex64::new(0.0, -2.0),
            shunt_admittance_total: Complex64::new(0.0, 0.0),
            tap: 1.0,
        }],
        generators: vec![Generator {
            id: "g1".into(),
            bus: "b1".into(),
            rated_mva: 100.0,
            inertia_h: 3.5,
            xd_prime: 0.25,
            damping_d: 0.0,
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

/// Fixed-step RK4 integration of the two-state swing equation
/// `dδ/dt = ω_s Δω`, `dΔω/dt = (P_m − P_e(δ)) / 2H`, with the single-bus
/// network solved by direct complex arithmetic. The fault is a shunt at the
/// machine terminal over `[t_on, t_off)`.
struct SwingOracle {
    omega_s: f64,
    h2: f64,
    p_m: f64,
    e_mag: f64,
    v_inf: Complex64,
    y_src: Complex64,
    y_line: Complex64,
    y_fault: Complex64,
    t_on: f64,
    t_off: f64,
}

impl SwingOracle {
    fn p_e(&self, delta: f64, faulted: bool) -> f64 {
        let e = Complex64::from_polar(self.e_mag, delta);
        let mut y_bus = self.y_src + self.y_line;
        if faulted {
            y_bus += self.y_fault;
        }
        let v1 = (e * self.y_src + self.v_inf * self.y_line) / y_bus;
        let i = (e - v1) * self.y_src;
        (e * i.conj()).re
    }

    fn deriv(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let faulted = t >= self.t_on && t < self.t_off;
        [self.omega_s * x[1], (self.p_m - self.p_e(x[0], faulted)) / self.h2]
    }

    /// Integrates from `(delta0, 0)` and samples `delta` every `sample_dt`
    /// (which must be a multiple of `dt`).
    fn run(&self, delta0: f64, dt: f64, t_end: f64, sample_dt: f64) -> Vec<f64> {
        let steps = (t_end / dt).round() as usize;
        let per_sample = (sample_dt / dt).round() as usize;
        let mut x = [delta0, 0.0];
        let mut out = vec![delta0];
        for k in 0..steps {
            let t = k as f64 * dt;
            let k1 = self.deriv(t, x);
            let k2 = self.deriv(t + dt / 2.0, [x[0] + dt / 2.0 * k1[0], x[1] + dt / 2.0 * k1[1]]);
            let k3 = self.deriv(t + dt / 2.0, [x[0] + dt / 2.0 * k2[0], x[1] + dt / 2.0 * k2[1]]);
            let k4 = self.deriv(t + dt, [x[0] + dt * k3[0], x[1] + dt * k3[1]]);
            x[0] += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            x[1] += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            if (k + 1) % per_sample == 0 {
                out.push(x[0]);
            }
        }
        out
    }

    /// Largest rotor-angle advance over `delta0` reached within `t_end`.
    fn max_excursion(&self, delta0: f64, dt: f64, t_end: f64) -> f64 {
        self.run(delta0, dt, t_end, dt)
            .iter()
            .map(|d| d - delta0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn oracle_for(case: &PowerSystemCase, t_on: f64, t_off: f64) -> SwingOracle {
    let solution = solve_powerflow(case).expect("powerflow");
    let v1 = solution.voltage("b1").unwrap();
    let v_inf = solution.voltage("inf").unwrap();
    let s = Complex64::new(0.8, 0.3);
    let i = (s / v1).conj();
    let e = v1 + Complex64::new(0.0, 0.25) * i;
    SwingOracle {
        omega_s: 2.0 * std::f64::consts::PI * 60.0,
        h2: 2.0 * 3.5,
        p_m: 0.8,
        e_mag: e.norm(),
        v_inf,
        y_src: Complex64::new(0.0, -1.0 / 0.25),
        y_line: Complex64::new(0.0, -2.0),
        y_fault: Complex64::new(0.0, -1.0e4),
        t_on,
        t_off,
    }
}

fn fault_event(t_start: f64, duration: f64) -> Vec<Event> {
    vec![Event {
        kind: EventKind::ThreePhaseFault,
        target: "b1".into(),
        t_start,
        duration: Some(duration),
        fault_admittance: None,
        scale: None,
    }]
}

#[test]
fn fault_swing_matches_standalone_rk4_integrator() {
    let case = classical_smib();
    let solution = solve_powerflow(&case).expect("powerflow");
    let model = DynamicModel::build(&case, &solution, true).expect("model");

    let dt = 0.001;
    let opts = SimOptions { dt, t_end: 3.0, ..SimOptions::default() };
    let traj = simulate(&model, &fault_event(1.0, 0.08), &opts).expect("simulation");
    let delta = traj.channel("delta:g1").expect("channel");

    let oracle = oracle_for(&case, 1.0, 1.08);
    let reference = oracle.run(delta[0], 2.0e-5, 3.0, dt);

    assert_eq!(delta.len(), reference.len());
    let max_err = delta
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    // The swing grows to ~1 rad; the trapezoidal trace must track the RK4
    // reference to a tenth of a milliradian throughout.
    assert!(max_err <= 1.0e-4, "max rotor-angle deviation {max_err:.2e} rad");
}

#[test]
fn critical_clearing_time_bracketed_by_oracle() {
    let case = classical_smib();
    let solution = solve_powerflow(&case).expect("powerflow");
    let model = DynamicModel::build(&case, &solution, true).expect("model");
    let delta0 = model.equilibrium()[model.delta_index("g1").expect("g1 state")];

    // Bisect the clearing duration on the standalone integrator: unstable
    // when the rotor angle advances more than pi radians within 5 s.
    let unstable = |duration: f64| -> bool {
        let oracle = oracle_for(&case, 1.0, 1.0 + duration);
        oracle.max_excursion(delta0, 1.0e-4, 6.0) > std::f64::consts::PI
    };
    let (mut lo, mut hi) = (0.05, 1.0);
    assert!(!unstable(lo) && unstable(hi), "bisection bracket invalid");
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let cct = 0.5 * (lo + hi);

    let run = |duration: f64| -> Vec<f64> {
        let opts = SimOptions { dt: 0.002, t_end: 6.0, ..SimOptions::default() };
        simulate(&model, &fault_event(1.0, duration), &opts)
            .expect("simulation")
            .channel("delta:g1")
            .expect("channel")
    };

    // Clearing comfortably inside the critical time keeps the swing bounded.
    let stable = run(cct - 0.05);
    let stable_max =
        stable.iter().map(|d| d - delta0).fold(f64::NEG_INFINITY, f64::max);
    assert!(
        stable_max < std::f64::consts::PI,
        "stable case swung {stable_max:.2} rad past the operating point"
    );

    // Clearing past the critical time diverges monotonically beyond pi.
    let lost = run(cct + 0.05);
    let lost_max = lost.iter().map(|d| d - delta0).fold(f64::NEG_INFINITY, f64::max);
    assert!(lost_max > std::f64::consts::PI, "unstable case peaked at {lost_max:.2} rad");
    let tail = &lost[lost.len() * 3 / 4..];
    assert!(
        tail.windows(2).all(|w| w[1] >= w[0]),
        "unstable rotor angle should advance monotonically in the late window"
    );
}

#[test]
fn small_disturbance_matches_matrix_exponential() {
    let case = fixture("two_area.json");
    let solution = solve_powerflow(&case).expect("powerflow");
    // Classical machines: every state (rotor angle and speed per machine) is
    // an output channel, so the full state trajectory is observable.
    let model = DynamicModel::build(&case, &solution, true).expect("model");

    // A 0.001 pu load step at b7, expressed exactly as the simulator applies
    // it: a constant shunt computed from the base-case voltage.
    let s_load: Complex64 = case
        .loads
        .iter()
        .filter(|l| l.bus == "b7")
        .map(|l| l.s_pu(case.base_mva))
        .sum();
    let scale = 1.0 + 0.001 / s_load.re;
    let idx = model.base_admittance().index_of("b7").unwrap();
    let v0 = model.base_voltages()[idx];
    let mut y_stepped = model.base_admittance().clone();
    y_stepped.add_shunt(idx, s_load.conj() / v0.norm_sqr() * (scale - 1.0));
    let op2 = model.op_for(&y_stepped).expect("stepped network");

    let dt = 0.005f64;
    let t_step = 0.2;
    let period = 1.0 / 0.7059; // dominant inter-area swing period
    let t_end = t_step + (period / dt).ceil() * dt;
    let events = vec![Event {
        kind: EventKind::LoadStep,
        target: "b7".into(),
        t_start: t_step,
        duration: None,
        fault_admittance: None,
        scale: Some(scale),
    }];
    let opts = SimOptions { dt, t_end, ..SimOptions::default() };
    let traj = simulate(&model, &events, &opts).expect("simulation");

    // First-order reference about the pre-step state: with f0 = f(x0) under
    // the stepped network and A2 its Jacobian there, the linear response
    // solves dΔx/dt = A2 Δx + f0. Without an infinite bus A2 is singular
    // (uniform-rotation mode), so the affine system is integrated through
    // the exponential of the augmented matrix [[A2, f0], [0, 0]].
    let x0 = model.equilibrium();
    let (f0, a2) = model.rhs_and_jacobian(&x0, &op2).expect("jacobian");
    let n = x0.len();
    let mut aug = nalgebra::DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&a2);
    for i in 0..n {
        aug[(i, n)] = f0[i];
    }
    let phi = (aug * dt).exp();

    let k0 = (t_step / dt).round() as usize;
    let n_post = traj.time.len() - k0;
    let mut predictions: Vec<DVector<f64>> = Vec::with_capacity(n_post);
    let mut z = DVector::<f64>::zeros(n + 1);
    z[n] = 1.0;
    for _ in 0..n_post {
        predictions.push(&x0 + z.rows(0, n));
        z = &phi * &z;
    }

    let labels = model.state_labels().to_vec();
    let mut worst_ratio = 0.0f64;
    for g in ["g1", "g2", "g3", "g4"] {
        for (prefix, state_label) in [("delta:", "delta"), ("omega:", "omega")] {
            let ch = traj.channel(&format!("{prefix}{g}")).expect("channel");
            let si = labels
                .iter()
                .position(|l| l == &format!("{state_label}:{g}"))
                .expect("state label");
            let excursion = ch[k0..]
                .iter()
                .map(|v| (v - ch[0]).abs())
                .fold(0.0f64, f64::max);
            let err = ch[k0..]
                .iter()
                .zip(&predictions)
                .map(|(v, p)| (v - p[si]).abs())
                .fold(0.0f64, f64::max);
            assert!(excursion > 0.0, "{prefix}{g} never moved");
            let ratio = err / excursion;
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                ratio <= 0.01,
                "{prefix}{g}: nonlinear-vs-linear deviation {err:.2e} \
                 is {:.2}% of the {excursion:.2e} excursion",
                100.0 * ratio
            );
        }
    }
    assert!(worst_ratio > 0.0);
}
