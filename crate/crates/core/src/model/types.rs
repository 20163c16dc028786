//! Case data model: buses, branches, generators, controllers, and loads.
//!
//! Conventions. All network quantities (branch and shunt admittances) are per
//! unit on `base_mva`; machine parameters (`inertia_h`, `xd_prime`, `xd`,
//! `damping_d`) are entered on the machine's own `rated_mva` and converted
//! where needed. Dispatch and loads are in MW / MVAr. Complex values
//! serialize as two-element arrays `[re, im]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type BusId = String;
pub type GenId = String;
pub type CtrlId = String;

/// Study-area membership of a bus. The internal zone is fully retained,
/// the external zone is reduced, and boundary buses form the retained
/// frontier between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Internal,
    External,
    Boundary,
}

/// Physical signals a controller can consume or produce. The enumeration is
/// closed: case files referencing unknown kinds are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    DeltaOmega,
    DeltaPe,
    DeltaVt,
    DeltaPmech,
    Vref,
    Efd,
    Vpss,
}

impl SignalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::DeltaOmega => "delta_omega",
            SignalKind::DeltaPe => "delta_pe",
            SignalKind::DeltaVt => "delta_vt",
            SignalKind::DeltaPmech => "delta_pmech",
            SignalKind::Vref => "vref",
            SignalKind::Efd => "efd",
            SignalKind::Vpss => "vpss",
        }
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub base_kv: f64,
    pub zone: Zone,
    /// Shunt admittance to ground (pu on system base), e.g. a capacitor bank.
    #[serde(default = "zero_complex")]
    pub shunt: Complex64,
}

/// A branch π-model with an off-nominal tap on the `from` side:
/// `Y_ff = (y_s + y_sh/2)/t²`, `Y_ft = Y_tf = −y_s/t`, `Y_tt = y_s + y_sh/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub series_admittance: Complex64,
    #[serde(default = "zero_complex")]
    pub shunt_admittance_total: Complex64,
    #[serde(default = "one")]
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: GenId,
    pub bus: BusId,
    /// Machine MVA rating; the base for all machine per-unit parameters.
    pub rated_mva: f64,
    /// Inertia constant H in MW·s/MVA (seconds) on the machine base.
    pub inertia_h: f64,
    /// Transient reactance, pu on `rated_mva`.
    pub xd_prime: f64,
    /// Damping torque coefficient, pu torque per pu speed, machine base.
    pub damping_d: f64,
    pub p_gen: f64,
    pub q_gen: f64,
    #[serde(default)]
    pub controllers: Vec<CtrlId>,
    /// Synchronous d-axis reactance (pu on `rated_mva`). Together with
    /// `td0_prime` this promotes the machine to the one-axis model; absent,
    /// the machine is classical (constant flux).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xd: Option<f64>,
    /// Open-circuit transient time constant T'd0 in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub td0_prime: Option<f64>,
}

impl Generator {
    /// Dispatch as complex power in pu on the given system base.
    pub fn dispatch_pu(&self, base_mva: f64) -> Complex64 {
        Complex64::new(self.p_gen / base_mva, self.q_gen / base_mva)
    }

    pub fn is_one_axis(&self) -> bool {
        self.xd.is_some() && self.td0_prime.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    /// Constant-power part (MW, MVAr consumed).
    #[serde(default)]
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
    /// Constant-admittance part, pu on system base.
    #[serde(default = "zero_complex")]
    pub y_shunt: Complex64,
}

impl Load {
    pub fn s_pu(&self, base_mva: f64) -> Complex64 {
        Complex64::new(self.p_mw / base_mva, self.q_mvar / base_mva)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Avr,
    Gov,
    Pss,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Avr => "avr",
            ControllerKind::Gov => "gov",
            ControllerKind::Pss => "pss",
        }
    }

    /// The machine-side signal each controller kind must drive.
    pub fn expected_output(self) -> SignalKind {
        match self {
            ControllerKind::Avr => SignalKind::Efd,
            ControllerKind::Gov => SignalKind::DeltaPmech,
            ControllerKind::Pss => SignalKind::Vpss,
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output saturation bounds. Parsed for schema compatibility but ignored by
/// the linear analysis rails; a warning is raised during validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub min: f64,
    pub max: f64,
}

/// One typed SISO block of a controller diagram, `{type, params}` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum BlockKind {
    /// `k`
    Gain { k: f64 },
    /// `k / (1 + sT)`
    Lag { k: f64, t: f64 },
    /// `k (1 + sT1) / (1 + sT2)`
    #[serde(rename = "leadlag")]
    LeadLag { k: f64, t1: f64, t2: f64 },
    /// `sT / (1 + sT)`
    Washout { t: f64 },
    /// `k / s`
    Integrator { k: f64 },
    /// `kp + ki / s`
    Pi { kp: f64, ki: f64 },
    /// General rational transfer function; coefficient lists ascend in powers
    /// of s. Used for fitted equivalents, whose poles need not factor into
    /// the primitive blocks above.
    Rational { num: Vec<f64>, den: Vec<f64> },
}

impl BlockKind {
    /// deg(den) − deg(num) of the block's transfer function; every primitive
    /// block is proper or biproper, so this is ≥ 0 except for an improper
    /// `Rational` (rejected by validation).
    pub fn relative_degree(&self) -> i64 {
        fn degree(c: &[f64]) -> i64 {
            c.iter().rposition(|v| *v != 0.0).map_or(i64::MIN / 2, |p| p as i64)
        }
        match self {
            BlockKind::Gain { .. } => 0,
            BlockKind::Lag { .. } => 1,
            BlockKind::LeadLag { .. } => 0,
            BlockKind::Washout { .. } => 0,
            BlockKind::Integrator { .. } => 1,
            BlockKind::Pi { .. } => 0,
            BlockKind::Rational { num, den } => degree(den) - degree(num),
        }
    }

    pub fn params_finite(&self) -> bool {
        match self {
            BlockKind::Gain { k } => k.is_finite(),
            BlockKind::Lag { k, t } => k.is_finite() && t.is_finite(),
            BlockKind::LeadLag { k, t1, t2 } => {
                k.is_finite() && t1.is_finite() && t2.is_finite()
            }
            BlockKind::Washout { t } => t.is_finite(),
            BlockKind::Integrator { k } => k.is_finite(),
            BlockKind::Pi { kp, ki } => kp.is_finite() && ki.is_finite(),
            BlockKind::Rational { num, den } => {
                num.iter().chain(den).all(|v| v.is_finite())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    #[serde(flatten)]
    pub kind: BlockKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
}

impl From<BlockKind> for Block {
    fn from(kind: BlockKind) -> Self {
        Block { kind, limits: None }
    }
}

/// One input path of a controller: a signal tapped from the machine and the
/// SISO block chain applied to it. Path outputs sum at the controller output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPath {
    pub signal: SignalKind,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub id: CtrlId,
    pub kind: ControllerKind,
    pub inputs: Vec<InputPath>,
    pub output_signal: SignalKind,
}

impl Controller {
    /// The ordered, distinct input signals (one per path).
    pub fn input_signals(&self) -> Vec<SignalKind> {
        self.inputs.iter().map(|p| p.signal).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystemCase {
    pub base_mva: f64,
    /// Nominal system frequency; defaults to 60 Hz.
    #[serde(default = "default_f_hz")]
    pub f_hz: f64,
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub controllers: Vec<Controller>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

impl PowerSystemCase {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn generator(&self, id: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn controller(&self, id: &str) -> Option<&Controller> {
        self.controllers.iter().find(|c| c.id == id)
    }

    pub fn generators_at<'a>(&'a self, bus: &'a str) -> impl Iterator<Item = &'a Generator> + 'a {
        self.generators.iter().filter(move |g| g.bus == bus)
    }

    pub fn buses_in_zone(&self, zone: Zone) -> impl Iterator<Item = &Bus> {
        self.buses.iter().filter(move |b| b.zone == zone)
    }

    /// Zone of the bus a generator sits on, if the reference resolves.
    pub fn generator_zone(&self, gen: &Generator) -> Option<Zone> {
        self.bus(&gen.bus).map(|b| b.zone)
    }

    /// Generators whose terminal bus lies in the external zone, in case order.
    pub fn external_generators(&self) -> Vec<&Generator> {
        self.generators
            .iter()
            .filter(|g| self.generator_zone(g) == Some(Zone::External))
            .collect()
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_hz
    }
}

fn zero_complex() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn one() -> f64 {
    1.0
}

fn default_f_hz() -> f64 {
    60.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_kind_rejects_unknown_names() {
        let err = serde_json::from_str::<SignalKind>("\"delta_iq\"");
        assert!(err.is_err());
        let ok: SignalKind = serde_json::from_str("\"delta_omega\"").unwrap();
        assert_eq!(ok, SignalKind::DeltaOmega);
    }

    #[test]
    fn block_parses_type_params_shape() {
        let b: Block =
            serde_json::from_str(r#"{"type": "lag", "params": {"k": 50.0, "t": 0.05}}"#).unwrap();
        assert_eq!(b.kind, BlockKind::Lag { k: 50.0, t: 0.05 });
        assert!(b.limits.is_none());

        let b: Block = serde_json::from_str(
            r#"{"type": "washout", "params": {"t": 1.5}, "limits": {"min": -0.1, "max": 0.1}}"#,
        )
        .unwrap();
        assert_eq!(b.kind, BlockKind::Washout { t: 1.5 });
        assert_eq!(b.limits, Some(Limits { min: -0.1, max: 0.1 }));
    }

    #[test]
    fn relative_degree_per_block() {
        assert_eq!(BlockKind::Gain { k: 2.0 }.relative_degree(), 0);
        assert_eq!(BlockKind::Lag { k: 1.0, t: 0.1 }.relative_degree(), 1);
        assert_eq!(BlockKind::Washout { t: 1.5 }.relative_degree(), 0);
        assert_eq!(
            BlockKind::Rational { num: vec![0.0, 1.0], den: vec![1.0, 2.0, 1.0] }
                .relative_degree(),
            1
        );
        assert_eq!(
            BlockKind::Rational { num: vec![0.0, 0.0, 1.0], den: vec![1.0, 1.0] }
                .relative_degree(),
            -1
        );
    }

    #[test]
    fn complex_fields_serialize_as_pairs() {
        let br = Branch {
            from_bus: "a".into(),
            to_bus: "b".into(),
            series_admittance: Complex64::new(1.0, -10.0),
            shunt_admittance_total: Complex64::new(0.0, 0.2),
            tap: 1.0,
        };
        let js = serde_json::to_value(&br).unwrap();
        assert_eq!(js["series_admittance"], serde_json::json!([1.0, -10.0]));
        let back: Branch = serde_json::from_value(js).unwrap();
        assert_eq!(back, br);
    }
}
