//! Quarter-square four-quadrant multiplier benchmark.
//!
//! Four capacitive summers form the gate drives `vB ± Vy` and `vB ± Vx`, with
//! `Vy = (V1 + V2)/6` and `Vx = (V1 − V2)/6`. Two matched common-source
//! pairs square them: the `±Vy` pair sinks into `vo1`, the `±Vx` pair into
//! `vo2`, and each output has a load (P-type CNFET or resistor) to `vdd`.
//! In saturation each pair carries `2K(Vov² + V²)`, so
//! `Vout = Vo2 − Vo1 = R·2K(Vy² − Vx²) = R·(2K/9)·V1·V2`.

mod experiments;
mod report;

use thiserror::Error;

use crate::analysis::{operating_point, power_report, AnalysisError, OpResult};
use crate::circuit::{CircuitError, Netlist, SourceShape, SummerMode};
use crate::cnfet::{threshold_voltage, CntParams, ModelError, Polarity, Region};
use crate::mna::NewtonConfig;
use crate::root::{find_bracketed, RootError};
use crate::signal::SignalError;

pub use experiments::{
    doubler_netlist, exp_am, exp_dc_transfer, exp_doubler_thd, exp_freq_response, exp_noise, exp_noise_excluding,
    run_am, run_doubler, run_suite, small_signal_netlist, AmRun, AmSetting, DoublerRun, Tone, THD_AMPLITUDES,
};
pub use report::{emit_report, format_number, render_summary, write_atomic, ExperimentReport, Trace, MODEL_DISCLAIMER};

/// Quiescent power the kTube calibration aims for (W).
pub const TARGET_POWER: f64 = 246.9e-6;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid multiplier configuration: {0}")]
    Config(String),
    #[error("{device} leaves saturation at v1 = {v1} V, v2 = {v2} V")]
    SaturationViolated { device: String, v1: f64, v2: f64 },
    #[error("no load bias in [{lo}, {hi}] V zeroes the output: {source}")]
    NoRoot {
        lo: f64,
        hi: f64,
        #[source]
        source: RootError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadKind {
    /// P-type CNFETs with their gates at the load bias `vBP`.
    Cnfet,
    IdealResistor { ohms: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierConfig {
    pub vdd: f64,
    pub vss: f64,
    pub model: CntParams,
    /// Separate parameters for the load devices; `None` shares `model`.
    pub load_model: Option<CntParams>,
    pub tubes_core: u32,
    pub tubes_load: u32,
    /// Summer input capacitance (F); the ground capacitor is four times this.
    pub summer_c: f64,
    pub summer_mode: SummerMode,
    /// Quiescent gate voltage of the core devices (V).
    pub v_b: f64,
    /// Load gate bias (V); `None` until calibrated, built with the
    /// square-law estimate.
    pub v_bp: Option<f64>,
    pub load: LoadKind,
    pub lambda_override: Option<f64>,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            vdd: 0.9,
            vss: -0.9,
            model: CntParams::default(),
            load_model: None,
            tubes_core: 1,
            tubes_load: 2,
            summer_c: 5e-15,
            summer_mode: SummerMode::Behavioral,
            v_b: -0.3,
            v_bp: None,
            load: LoadKind::Cnfet,
            lambda_override: None,
        }
    }
}

impl MultiplierConfig {
    /// Resistor loads of 10 kΩ and no channel-length modulation: the setting
    /// where the quarter-square identity holds exactly.
    pub fn ideal() -> Self {
        Self {
            load: LoadKind::IdealResistor { ohms: 10e3 },
            lambda_override: Some(0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.vdd > 0.0 && self.vss < 0.0) {
            return Err(BenchError::Config(format!(
                "need vdd > 0 > vss, got vdd = {}, vss = {}",
                self.vdd, self.vss
            )));
        }
        if self.tubes_core == 0 || self.tubes_load != 2 * self.tubes_core {
            return Err(BenchError::Config(format!(
                "load devices need twice the core tube count ({} core, {} load)",
                self.tubes_core, self.tubes_load
            )));
        }
        self.core_model().validate()?;
        self.load_params().validate()?;
        if !(self.summer_c >= 10.0 * self.model.c_eff) {
            return Err(BenchError::Config(format!(
                "summer capacitance {:e} F must be at least 10x the device capacitance {:e} F",
                self.summer_c, self.model.c_eff
            )));
        }
        if let LoadKind::IdealResistor { ohms } = self.load {
            if !(ohms > 0.0) {
                return Err(BenchError::Config(format!("load resistance must be positive, got {ohms}")));
            }
        }
        if !(self.v_b > self.vss && self.v_b < self.vdd) {
            return Err(BenchError::Config(format!("gate bias {} V outside the supplies", self.v_b)));
        }
        Ok(())
    }

    /// Core device parameters with the lambda override applied.
    pub fn core_model(&self) -> CntParams {
        let mut m = self.model.clone();
        if let Some(l) = self.lambda_override {
            m.lambda = l;
        }
        m
    }

    pub fn load_params(&self) -> CntParams {
        let mut m = self.load_model.clone().unwrap_or_else(|| self.model.clone());
        if let Some(l) = self.lambda_override {
            m.lambda = l;
        }
        m
    }

    /// `K = kTube·tubesCore` of one core device (A/V²).
    pub fn k_core(&self) -> f64 {
        self.model.k_tube * f64::from(self.tubes_core)
    }

    /// Quiescent core overdrive `vB − vss − Vth`.
    pub fn overdrive(&self) -> f64 {
        self.v_b - self.vss - threshold_voltage(&self.model)
    }

    /// Square-law load bias that balances the core current at zero input
    /// with both outputs at 0 V.
    pub fn estimated_load_bias(&self) -> f64 {
        let core = self.core_model();
        let load = self.load_params();
        let k_core = core.k_tube * f64::from(self.tubes_core);
        let k_load = load.k_tube * f64::from(self.tubes_load);
        let i_pair = 2.0 * k_core * self.overdrive().powi(2) * (1.0 - core.lambda * self.vss);
        let vov_load = (i_pair / (k_load * (1.0 + load.lambda * self.vdd))).sqrt();
        self.vdd - threshold_voltage(&load) - vov_load
    }

    pub fn load_bias(&self) -> f64 {
        self.v_bp.unwrap_or_else(|| self.estimated_load_bias())
    }
}

/// Node names of the generated netlist.
pub mod nodes {
    pub const IN1: &str = "in1";
    pub const IN2: &str = "in2";
    pub const IN1N: &str = "in1n";
    pub const IN2N: &str = "in2n";
    pub const VO1: &str = "vo1";
    pub const VO2: &str = "vo2";
}

/// Names of the six transistors (core pairs, then loads).
pub const DEVICES: [&str; 6] = ["M1", "M2", "M3", "M4", "M5", "M6"];

const CORE_MODEL: &str = "cnt";
const LOAD_MODEL: &str = "cntload";

/// Builds the multiplier with all inputs at 0 V DC.
pub fn build_multiplier(cfg: &MultiplierConfig) -> Result<Netlist, BenchError> {
    cfg.validate()?;
    let mut n = Netlist::new("quarter-square four-quadrant CNFET multiplier");
    n.add_model(CORE_MODEL, cfg.core_model())?;
    let load_model = if cfg.load_model.is_some() { LOAD_MODEL } else { CORE_MODEL };
    if cfg.load_model.is_some() {
        n.add_model(LOAD_MODEL, cfg.load_params())?;
    }

    n.vsource("VDD", "vdd", "0", SourceShape::dc(cfg.vdd))?;
    n.vsource("VSS", "vss", "0", SourceShape::dc(cfg.vss))?;
    n.vsource("V1", nodes::IN1, "0", SourceShape::dc(0.0))?;
    n.vsource("V2", nodes::IN2, "0", SourceShape::dc(0.0))?;
    n.vsource("V1N", nodes::IN1N, "0", SourceShape::dc(0.0))?;
    n.vsource("V2N", nodes::IN2N, "0", SourceShape::dc(0.0))?;

    let setup = |s: &mut crate::circuit::Summer| {
        s.c_in = cfg.summer_c;
        s.c_gnd = 4.0 * cfg.summer_c;
        s.v_bias = cfg.v_b;
    };
    n.summer("XYP", nodes::IN1, nodes::IN2, "gy_p", cfg.summer_mode, setup)?;
    n.summer("XYN", nodes::IN1N, nodes::IN2N, "gy_n", cfg.summer_mode, setup)?;
    n.summer("XXP", nodes::IN1, nodes::IN2N, "gx_p", cfg.summer_mode, setup)?;
    n.summer("XXN", nodes::IN1N, nodes::IN2, "gx_n", cfg.summer_mode, setup)?;

    let t = cfg.tubes_core;
    n.cnfet("M1", nodes::VO2, "gx_p", "vss", CORE_MODEL, Polarity::N, t)?;
    n.cnfet("M2", nodes::VO2, "gx_n", "vss", CORE_MODEL, Polarity::N, t)?;
    n.cnfet("M3", nodes::VO1, "gy_p", "vss", CORE_MODEL, Polarity::N, t)?;
    n.cnfet("M4", nodes::VO1, "gy_n", "vss", CORE_MODEL, Polarity::N, t)?;

    match cfg.load {
        LoadKind::Cnfet => {
            n.vsource("VBP", "vbp", "0", SourceShape::dc(cfg.load_bias()))?;
            n.cnfet("M5", nodes::VO1, "vbp", "vdd", load_model, Polarity::P, cfg.tubes_load)?;
            n.cnfet("M6", nodes::VO2, "vbp", "vdd", load_model, Polarity::P, cfg.tubes_load)?;
        }
        LoadKind::IdealResistor { ohms } => {
            n.resistor("R5", "vdd", nodes::VO1, ohms)?;
            n.resistor("R6", "vdd", nodes::VO2, ohms)?;
        }
    }
    Ok(n)
}

/// Sets the DC levels of both inputs and their inverted replicas.
pub fn set_inputs(n: &mut Netlist, v1: f64, v2: f64) -> Result<(), BenchError> {
    n.set_source("V1", SourceShape::dc(v1))?;
    n.set_source("V1N", SourceShape::dc(-v1))?;
    n.set_source("V2", SourceShape::dc(v2))?;
    n.set_source("V2N", SourceShape::dc(-v2))?;
    Ok(())
}

/// Closed-form output `R·(2K/9)·v1·v2` for resistor loads with `λ = 0`.
///
/// Fails with `SaturationViolated` when a core device would leave
/// saturation (or cut off) at `(v1, v2)`.
pub fn ideal_product(v1: f64, v2: f64, cfg: &MultiplierConfig) -> Result<f64, BenchError> {
    let LoadKind::IdealResistor { ohms } = cfg.load else {
        return Err(BenchError::Config("the closed form needs resistor loads".into()));
    };
    if cfg.core_model().lambda != 0.0 {
        return Err(BenchError::Config("the closed form needs lambda = 0".into()));
    }
    let k = cfg.k_core();
    let vov = cfg.overdrive();
    let (vy, vx) = ((v1 + v2) / 6.0, (v1 - v2) / 6.0);
    let vo1 = cfg.vdd - ohms * 2.0 * k * (vov * vov + vy * vy);
    let vo2 = cfg.vdd - ohms * 2.0 * k * (vov * vov + vx * vx);
    let checks = [
        ("M1", vov + vx, vo2),
        ("M2", vov - vx, vo2),
        ("M3", vov + vy, vo1),
        ("M4", vov - vy, vo1),
    ];
    for (device, ov, vo) in checks {
        if ov <= 0.0 || vo - cfg.vss < ov {
            return Err(BenchError::SaturationViolated {
                device: device.into(),
                v1,
                v2,
            });
        }
    }
    Ok(ohms * (2.0 * k / 9.0) * v1 * v2)
}

/// Names of devices not in saturation at an operating point.
pub fn unsaturated_devices(op: &OpResult) -> Vec<String> {
    op.devices
        .iter()
        .filter(|d| d.point.region != Region::Saturation || d.point.reversed)
        .map(|d| d.name.clone())
        .collect()
}

/// Load gate bias for which `Vo1 = 0` at zero input, to within `tol` volts.
///
/// Verifies that every device is saturated at the result.
pub fn calibrate_load_bias_with(cfg: &MultiplierConfig, tol: f64, newton: &NewtonConfig) -> Result<f64, BenchError> {
    if cfg.load != LoadKind::Cnfet {
        return Err(BenchError::Config("load-bias calibration needs CNFET loads".into()));
    }
    let mut trial = cfg.clone();
    trial.v_bp = Some(cfg.load_bias());
    let mut n = build_multiplier(&trial)?;
    let mut failure = None;
    let vo1_at = |vbp: f64, n: &mut Netlist, failure: &mut Option<BenchError>| -> f64 {
        if let Err(e) = n.set_source("VBP", SourceShape::dc(vbp)) {
            failure.get_or_insert(e.into());
            return f64::NAN;
        }
        match operating_point(n, newton) {
            Ok(op) => op.voltage(nodes::VO1).unwrap_or(f64::NAN),
            Err(e) => {
                failure.get_or_insert(e.into());
                f64::NAN
            }
        }
    };
    // The square-law estimate is usually within millivolts; bracket around
    // it first and fall back to the full supply range.
    let guess = trial.v_bp.unwrap().clamp(cfg.vss, cfg.vdd);
    let (mut lo, mut hi) = ((guess - 0.05).max(cfg.vss), (guess + 0.05).min(cfg.vdd));
    let (flo, fhi) = (vo1_at(lo, &mut n, &mut failure), vo1_at(hi, &mut n, &mut failure));
    if !(flo.is_finite() && fhi.is_finite() && flo.signum() != fhi.signum()) {
        lo = cfg.vss;
        hi = cfg.vdd;
    }
    failure = None;
    let root = find_bracketed(|v| vo1_at(v, &mut n, &mut failure), lo, hi, tol, 200);
    if let Some(e) = failure {
        return Err(e);
    }
    let vbp = root.map_err(|source| BenchError::NoRoot { lo, hi, source })?;
    n.set_source("VBP", SourceShape::dc(vbp))?;
    let op = operating_point(&n, newton)?;
    if let Some(device) = unsaturated_devices(&op).into_iter().next() {
        return Err(BenchError::SaturationViolated { device, v1: 0.0, v2: 0.0 });
    }
    Ok(vbp)
}

/// [`calibrate_load_bias_with`] at 1 µV and default solver settings.
pub fn calibrate_load_bias(cfg: &MultiplierConfig) -> Result<f64, BenchError> {
    calibrate_load_bias_with(cfg, 1e-6, &NewtonConfig::default())
}

/// Fills in a calibrated load bias when the loads are CNFETs and none is set.
pub fn calibrated(cfg: &MultiplierConfig) -> Result<MultiplierConfig, BenchError> {
    let mut c = cfg.clone();
    if c.load == LoadKind::Cnfet && c.v_bp.is_none() {
        c.v_bp = Some(calibrate_load_bias(&c)?);
    }
    Ok(c)
}

/// Quiescent operating point and total source power at zero input.
pub fn quiescent(cfg: &MultiplierConfig, newton: &NewtonConfig) -> Result<(OpResult, f64), BenchError> {
    let n = build_multiplier(cfg)?;
    let op = operating_point(&n, newton)?;
    let p = power_report(&op).total;
    Ok((op, p))
}

/// kTube for which the quiescent power equals `target` (within `rel_tol`),
/// recalibrating the load bias at every trial.
pub fn calibrate_k(cfg: &MultiplierConfig, target: f64, rel_tol: f64) -> Result<f64, BenchError> {
    let newton = NewtonConfig::default();
    crate::cnfet::calibrate_k(target, rel_tol, |k| {
        let mut trial = cfg.clone();
        trial.model.k_tube = k;
        if let Some(m) = trial.load_model.as_mut() {
            m.k_tube = k;
        }
        trial.v_bp = None;
        let trial = calibrated(&trial)?;
        Ok::<f64, BenchError>(quiescent(&trial, &newton)?.1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::validate_netlist;

    #[test]
    fn default_topology() {
        let n = build_multiplier(&MultiplierConfig::default()).unwrap();
        assert!(validate_netlist(&n).is_empty());
        let count = |f: &dyn Fn(&crate::circuit::ElementKind) -> bool| n.elements().iter().filter(|e| f(&e.kind)).count();
        assert_eq!(count(&|k| matches!(k, crate::circuit::ElementKind::Cnfet { .. })), 6);
        assert_eq!(count(&|k| matches!(k, crate::circuit::ElementKind::Summer(_))), 4);
        let ideal = build_multiplier(&MultiplierConfig::ideal()).unwrap();
        let cnfets = ideal
            .elements()
            .iter()
            .filter(|e| matches!(e.kind, crate::circuit::ElementKind::Cnfet { .. }))
            .count();
        let resistors = ideal
            .elements()
            .iter()
            .filter(|e| matches!(e.kind, crate::circuit::ElementKind::Resistor { .. }))
            .count();
        assert_eq!((cnfets, resistors), (4, 2));
    }

    #[test]
    fn tube_ratio_enforced() {
        let cfg = MultiplierConfig {
            tubes_core: 2,
            ..MultiplierConfig::default()
        };
        assert!(matches!(build_multiplier(&cfg), Err(BenchError::Config(_))));
        let ok = MultiplierConfig {
            tubes_load: 4,
            ..cfg
        };
        assert!(build_multiplier(&ok).is_ok());
    }

    #[test]
    fn closed_form_product() {
        let mut cfg = MultiplierConfig::ideal();
        cfg.model.k_tube = 1e-4;
        assert_eq!(ideal_product(0.0, 0.3, &cfg).unwrap(), 0.0);
        let p = ideal_product(0.4, 0.4, &cfg).unwrap();
        assert!((p - 10e3 * (2e-4 / 9.0) * 0.16).abs() < 1e-15);
        assert!((p - 3.5556e-2).abs() < 1e-5);
        assert_eq!(ideal_product(-0.4, 0.4, &cfg).unwrap(), -p);
        cfg.v_b = cfg.vss + cfg.model.threshold() + 0.05;
        assert!(matches!(
            ideal_product(0.4, 0.0, &cfg),
            Err(BenchError::SaturationViolated { .. })
        ));
    }

    #[test]
    fn simulated_matches_closed_form() {
        let cfg = MultiplierConfig::ideal();
        let mut n = build_multiplier(&cfg).unwrap();
        set_inputs(&mut n, 0.3, -0.2).unwrap();
        let op = operating_point(&n, &NewtonConfig::default()).unwrap();
        let vout = op.voltage(nodes::VO2).unwrap() - op.voltage(nodes::VO1).unwrap();
        let expect = ideal_product(0.3, -0.2, &cfg).unwrap();
        assert!((vout / expect - 1.0).abs() < 1e-6, "{vout} vs {expect}");
    }

    #[test]
    fn load_bias_zeroes_outputs() {
        let cfg = MultiplierConfig::default();
        let vbp = calibrate_load_bias(&cfg).unwrap();
        let c = MultiplierConfig {
            v_bp: Some(vbp),
            ..cfg.clone()
        };
        let (op, _) = quiescent(&c, &NewtonConfig::default()).unwrap();
        let (vo1, vo2) = (op.voltage(nodes::VO1).unwrap(), op.voltage(nodes::VO2).unwrap());
        assert!(vo1.abs() < 1e-3 && vo2.abs() < 1e-3);
        assert_eq!(vo1, vo2);
        assert!((vbp - cfg.estimated_load_bias()).abs() < 1e-3);

        let mut strong = cfg.clone();
        let mut lm = cfg.model.clone();
        lm.k_tube *= 2.0;
        strong.load_model = Some(lm);
        let vbp_strong = calibrate_load_bias(&strong).unwrap();
        assert!(vbp_strong > vbp);
    }

    #[test]
    fn default_k_gives_target_power() {
        let c = calibrated(&MultiplierConfig::default()).unwrap();
        let (_, p) = quiescent(&c, &NewtonConfig::default()).unwrap();
        assert!((p / TARGET_POWER - 1.0).abs() < 5e-3, "{p}");
    }
}
