//! Simplified CNFET compact model.
//!
//! Geometry and threshold follow from the tube chirality; the channel current
//! is a square-law expression scaled by the tube count, with channel-length
//! modulation. Gate capacitance is a fixed per-tube total split evenly between
//! gate-source and gate-drain.

use std::fmt;

use thiserror::Error;

use crate::root::{self, RootError};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Default per-tube transconductance parameter (A/V²).
///
/// Calibrated so that the default benchmark multiplier dissipates 246.9 µW
/// at ±0.9 V; `bench::calibrate_k` reproduces it.
pub const DEFAULT_K_TUBE: f64 = 1.870_390_457_527_394e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid chirality ({n},{m}): need n >= 1, m >= 0, n >= m")]
    Chirality { n: u32, m: u32 },
    #[error("model parameter `{name}` must be {requirement}, got {value}")]
    Parameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("tube count must be at least 1")]
    Tubes,
    #[error("kTube calibration failed: {0}")]
    Calibration(#[from] RootError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    N,
    P,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::N => 1.0,
            Polarity::P => -1.0,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::N => f.write_str("N"),
            Polarity::P => f.write_str("P"),
        }
    }
}

/// Technology rows that the square-law model keeps for reference only.
#[derive(Debug, Clone, PartialEq)]
pub struct TechnologyMetadata {
    /// Length of doped source/drain extensions (m).
    pub sd_extension_length: f64,
    /// Source/drain metal contact work function (eV).
    pub metal_work_function: f64,
    /// CNT work function (eV).
    pub cnt_work_function: f64,
    /// Mean free path in intrinsic CNT (m).
    pub mfp_intrinsic: f64,
    /// Mean free path in doped CNT (m).
    pub mfp_doped: f64,
    /// Sub-lithographic pitch (m).
    pub sublithographic_pitch: f64,
    /// High-k gate oxide dielectric constant.
    pub oxide_k: f64,
    /// High-k gate oxide thickness (m).
    pub oxide_thickness: f64,
}

impl Default for TechnologyMetadata {
    fn default() -> Self {
        Self {
            sd_extension_length: 32.0e-9,
            metal_work_function: 4.6,
            cnt_work_function: 4.5,
            mfp_intrinsic: 200.0e-9,
            mfp_doped: 15.0e-9,
            sublithographic_pitch: 6.4e-9,
            oxide_k: 16.0,
            oxide_thickness: 4.0e-9,
        }
    }
}

/// CNFET technology parameters shared by all instances of a `.model`.
#[derive(Debug, Clone, PartialEq)]
pub struct CntParams {
    /// Chirality index n.
    pub n: u32,
    /// Chirality index m.
    pub m: u32,
    /// Lattice constant (m).
    pub a: f64,
    /// Carbon π-π bond energy (eV).
    pub v_pi: f64,
    /// Physical channel length (m).
    pub lch: f64,
    /// Inter-tube pitch (m).
    pub pitch: f64,
    /// Fermi level of doped source/drain regions (eV). Metadata only.
    pub efo: f64,
    /// Per-tube square-law transconductance parameter (A/V²).
    pub k_tube: f64,
    /// Channel-length modulation (1/V).
    pub lambda: f64,
    /// Gate capacitance per FET per tube (F).
    pub c_eff: f64,
    pub temperature_k: f64,
    pub metadata: TechnologyMetadata,
}

impl Default for CntParams {
    fn default() -> Self {
        Self {
            n: 25,
            m: 0,
            a: 2.49e-10,
            v_pi: 3.033,
            lch: 32.0e-9,
            pitch: 20.0e-9,
            efo: 0.6,
            k_tube: DEFAULT_K_TUBE,
            lambda: 0.3,
            c_eff: 2.0e-16,
            temperature_k: 300.0,
            metadata: TechnologyMetadata::default(),
        }
    }
}

impl CntParams {
    pub fn with_chirality(n: u32, m: u32) -> Self {
        Self {
            n,
            m,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n < 1 || self.n < self.m {
            return Err(ModelError::Chirality {
                n: self.n,
                m: self.m,
            });
        }
        let positive = [
            ("a", self.a),
            ("vpi", self.v_pi),
            ("lch", self.lch),
            ("pitch", self.pitch),
            ("kTube", self.k_tube),
            ("ceff", self.c_eff),
            ("temp", self.temperature_k),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Parameter {
                    name,
                    requirement: "positive and finite",
                    value,
                });
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::Parameter {
                name: "lambda",
                requirement: "non-negative",
                value: self.lambda,
            });
        }
        Ok(())
    }

    /// Tube diameter `a·sqrt(n² + nm + m²)/π` in meters.
    pub fn diameter(&self) -> f64 {
        diameter_from_chirality(self)
    }

    pub fn threshold(&self) -> f64 {
        threshold_voltage(self)
    }
}

pub fn diameter_from_chirality(p: &CntParams) -> f64 {
    let (n, m) = (f64::from(p.n), f64::from(p.m));
    p.a * (n * n + n * m + m * m).sqrt() / std::f64::consts::PI
}

/// Half-bandgap threshold estimate `a·Vπ/(√3·D)` in volts.
pub fn threshold_voltage(p: &CntParams) -> f64 {
    p.a * p.v_pi / (3f64.sqrt() * diameter_from_chirality(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

/// Large-signal evaluation of one device at a bias point.
///
/// `ids` flows from drain to source through the channel. `gm` and `gds` are
/// the partials of `ids` with respect to `vgs` and `vds`. `reversed` is set
/// when the physical source and drain swapped roles (vds of the wrong sign);
/// `gm` may then be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevicePoint {
    pub ids: f64,
    pub gm: f64,
    pub gds: f64,
    pub region: Region,
    pub reversed: bool,
}

/// Forward-mode N-type evaluation, `vds >= 0`.
fn square_law(k: f64, vth: f64, lambda: f64, vgs: f64, vds: f64) -> DevicePoint {
    let vov = vgs - vth;
    if vov <= 0.0 {
        return DevicePoint {
            ids: 0.0,
            gm: 0.0,
            gds: 0.0,
            region: Region::Cutoff,
            reversed: false,
        };
    }
    let clm = 1.0 + lambda * vds;
    if vds < vov {
        let core = 2.0 * vov * vds - vds * vds;
        DevicePoint {
            ids: k * core * clm,
            gm: 2.0 * k * vds * clm,
            gds: k * (2.0 * vov - 2.0 * vds) * clm + k * core * lambda,
            region: Region::Triode,
            reversed: false,
        }
    } else {
        DevicePoint {
            ids: k * vov * vov * clm,
            gm: 2.0 * k * vov * clm,
            gds: k * vov * vov * lambda,
            region: Region::Saturation,
            reversed: false,
        }
    }
}

fn n_type(k: f64, vth: f64, lambda: f64, vgs: f64, vds: f64) -> DevicePoint {
    if vds >= 0.0 {
        return square_law(k, vth, lambda, vgs, vds);
    }
    // drain and source exchange roles: ids(vgs, vds) = -f(vgs - vds, -vds)
    let f = square_law(k, vth, lambda, vgs - vds, -vds);
    DevicePoint {
        ids: -f.ids,
        gm: -f.gm,
        gds: f.gm + f.gds,
        region: f.region,
        reversed: true,
    }
}

/// Drain current and conductances of a `tubes`-wide device.
///
/// P-type devices are evaluated by reflecting the N-type expressions:
/// `ids_P(vgs, vds) = -ids_N(-vgs, -vds)`.
pub fn drain_current(
    p: &CntParams,
    polarity: Polarity,
    tubes: u32,
    vgs: f64,
    vds: f64,
) -> DevicePoint {
    let k = p.k_tube * f64::from(tubes);
    let vth = threshold_voltage(p);
    match polarity {
        Polarity::N => n_type(k, vth, p.lambda, vgs, vds),
        Polarity::P => {
            let d = n_type(k, vth, p.lambda, -vgs, -vds);
            DevicePoint { ids: -d.ids, ..d }
        }
    }
}

/// `(gm, gds)` at the bias point.
pub fn small_signal_params(
    p: &CntParams,
    polarity: Polarity,
    tubes: u32,
    vgs: f64,
    vds: f64,
) -> (f64, f64) {
    let d = drain_current(p, polarity, tubes, vgs, vds);
    (d.gm, d.gds)
}

/// `(cgs, cgd)`, each half of `c_eff·tubes`.
pub fn device_capacitances(p: &CntParams, tubes: u32) -> (f64, f64) {
    let half = 0.5 * p.c_eff * f64::from(tubes);
    (half, half)
}

/// Lower and upper bound of the kTube search.
pub const K_TUBE_RANGE: (f64, f64) = (1e-8, 1e-2);

/// Finds the kTube for which `power_at(kTube)` equals `target_power`.
///
/// `power_at` must be monotone in kTube over [`K_TUBE_RANGE`]. The search runs
/// in log-kTube and stops once the power is within `rel_tol` of the target.
pub fn calibrate_k<F, E>(target_power: f64, rel_tol: f64, mut power_at: F) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<ModelError>,
{
    if !(target_power > 0.0) {
        return Err(ModelError::Parameter {
            name: "target_power",
            requirement: "positive",
            value: target_power,
        }
        .into());
    }
    let (lo, hi) = K_TUBE_RANGE;
    let mut failure: Option<E> = None;
    let result = root::find_bracketed(
        |log_k| match power_at(log_k.exp()) {
            Ok(p) => p / target_power - 1.0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo.ln(),
        hi.ln(),
        rel_tol,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    result.map(f64::exp).map_err(|e| ModelError::from(e).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn diameter_examples() {
        let p = CntParams::default();
        assert!((p.diameter() - 1.981e-9).abs() < 1e-12);
        let unit = CntParams::with_chirality(1, 0);
        assert!((unit.diameter() - 7.926e-11).abs() < 1e-14);
        let d10 = CntParams::with_chirality(10, 0).diameter();
        let d20 = CntParams::with_chirality(20, 0).diameter();
        assert!(rel(d20, 2.0 * d10) < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert!((CntParams::default().threshold() - 0.2201).abs() < 1e-4);
        assert!((CntParams::with_chirality(19, 0).threshold() - 0.2896).abs() < 1e-4);
        let product = |n| {
            let p = CntParams::with_chirality(n, 0);
            p.threshold() * p.diameter()
        };
        for n in [5, 13, 25, 40] {
            assert!(rel(product(n), product(25)) < 1e-12);
        }
    }

    #[test]
    fn saturation_example() {
        let p = CntParams {
            k_tube: 1e-4,
            lambda: 0.0,
            ..CntParams::default()
        };
        let vth = p.threshold();
        let d = drain_current(&p, Polarity::N, 2, vth + 0.3, 0.9);
        assert_eq!(d.region, Region::Saturation);
        assert!(rel(d.ids, 1.8e-5) < 1e-12);
        assert!(rel(d.gm, 2.0 * 2e-4 * 0.3) < 1e-12);
        assert_eq!(d.gds, 0.0);
    }

    #[test]
    fn cutoff_is_silent() {
        let p = CntParams::default();
        let d = drain_current(&p, Polarity::N, 1, 0.1, 0.5);
        assert_eq!(d.region, Region::Cutoff);
        assert_eq!((d.ids, d.gm, d.gds), (0.0, 0.0, 0.0));
        assert_eq!(small_signal_params(&p, Polarity::N, 3, -1.0, 0.2), (0.0, 0.0));
    }

    #[test]
    fn gm_linear_in_tubes() {
        let p = CntParams::default();
        let (g1, _) = small_signal_params(&p, Polarity::N, 1, 0.6, 0.7);
        let (g3, _) = small_signal_params(&p, Polarity::N, 3, 0.6, 0.7);
        assert!(rel(g3, 3.0 * g1) < 1e-14);
    }

    #[test]
    fn capacitance_split() {
        let p = CntParams::default();
        let (cgs, cgd) = device_capacitances(&p, 1);
        assert!(rel(cgs, 1e-16) < 1e-15 && rel(cgd, 1e-16) < 1e-15);
        let (cgs2, cgd2) = device_capacitances(&p, 2);
        assert!(rel(cgs2, 2e-16) < 1e-15);
        assert!(rel(cgs2 + cgd2, p.c_eff * 2.0) < 1e-15);
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let p = CntParams::default();
        for &(vgs, vds) in &[(0.6, 0.9), (0.5, 0.1), (0.7, -0.3), (0.1, 0.4)] {
            let n = drain_current(&p, Polarity::N, 2, vgs, vds);
            let pp = drain_current(&p, Polarity::P, 2, -vgs, -vds);
            assert_eq!(n.ids, -pp.ids);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CntParams::with_chirality(3, 4).validate().is_err());
        assert!(CntParams::with_chirality(0, 0).validate().is_err());
        let p = CntParams {
            lambda: -0.1,
            ..CntParams::default()
        };
        assert!(p.validate().is_err());
        assert!(CntParams::default().validate().is_ok());
    }

    #[test]
    fn calibrate_k_linear_map() {
        // power proportional to kTube
        let map = |k: f64| Ok::<_, ModelError>(k * 1.32);
        let k = calibrate_k(246.9e-6, 1e-12, map).unwrap();
        assert!(rel(k * 1.32, 246.9e-6) < 1e-10);
        let k4 = calibrate_k(4.0 * 246.9e-6, 1e-12, map).unwrap();
        assert!(rel(k4, 4.0 * k) < 1e-9);
        assert!(calibrate_k(1.0, 1e-9, map).is_err());
    }
}
