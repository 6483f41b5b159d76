use std::f64::consts::PI;

use num_complex::Complex64;

use super::{prepare, probe_value, resolve_probes, AnalysisError, Probe};
use crate::circuit::{Netlist, Primitive};
use crate::mna::{
    lu_solve, newton_solve, stamp_cnfet_ac, stamp_linear_ac, Circuit, MnaError, MnaSystem, NewtonConfig,
};

/// Log-spaced frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AcSpec {
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
}

impl AcSpec {
    pub fn new(f_start: f64, f_stop: f64, points_per_decade: usize) -> Self {
        Self {
            f_start,
            f_stop,
            points_per_decade,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.f_start > 0.0) || !(self.f_stop >= self.f_start) || self.points_per_decade == 0 {
            return Err(AnalysisError::InvalidSpec(format!(
                "frequency sweep needs 0 < f_start <= f_stop and points per decade > 0 (got {:e}..{:e}, {})",
                self.f_start, self.f_stop, self.points_per_decade
            )));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        log_frequencies(self.f_start, self.f_stop, self.points_per_decade)
    }
}

/// `f_start·10^(k/ppd)` up to and including `f_stop` (within rounding).
pub fn log_frequencies(f_start: f64, f_stop: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = (f_stop / f_start).log10();
    let count = (decades * points_per_decade as f64 + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| f_start * 10f64.powf(k as f64 / points_per_decade as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcPoint {
    pub freq_hz: f64,
    /// One complex value per probe, relative to the AC source magnitude.
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct AcResult {
    pub probes: Vec<Probe>,
    pub points: Vec<AcPoint>,
    /// Operating point the devices were linearised at.
    pub bias: Vec<f64>,
}

impl AcResult {
    /// `(f, |H|)` pairs for probe `index`.
    pub fn magnitudes(&self, index: usize) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.freq_hz, p.values[index].norm())).collect()
    }
}

/// Assembles the small-signal system at `omega` around `bias`.
pub fn ac_system(circuit: &Circuit, bias: &[f64], omega: f64, gmin_floor: f64) -> MnaSystem<Complex64> {
    let mut sys = circuit.new_complex_system();
    for (i, p) in circuit.primitives().iter().enumerate() {
        match p {
            Primitive::Cnfet { .. } => stamp_cnfet_ac(p, &mut sys, bias, gmin_floor),
            _ => stamp_linear_ac(circuit, i, &mut sys, omega),
        }
    }
    sys
}

/// Solves the small-signal system at `omega` around `bias`.
pub fn ac_solve(circuit: &Circuit, bias: &[f64], omega: f64, gmin_floor: f64) -> Result<Vec<Complex64>, MnaError> {
    lu_solve(&ac_system(circuit, bias, omega, gmin_floor))
}

/// Largest AC magnitude over all tagged sources, or `None` if none is tagged.
pub(crate) fn ac_reference(circuit: &Circuit) -> Option<f64> {
    circuit
        .primitives()
        .iter()
        .filter_map(|p| match p {
            Primitive::VSource { shape, .. } => shape.ac.map(|a| a.magnitude),
            _ => None,
        })
        .filter(|m| *m > 0.0)
        .reduce(f64::max)
}

/// Small-signal sweep around the DC operating point. Probe values are
/// divided by the largest AC source magnitude.
pub fn ac_sweep(
    netlist: &Netlist,
    spec: &AcSpec,
    probes: &[Probe],
    cfg: &NewtonConfig,
) -> Result<AcResult, AnalysisError> {
    spec.validate()?;
    let circuit = prepare(netlist)?;
    let reference = ac_reference(&circuit).ok_or(AnalysisError::NoAcSource)?;
    let resolved = resolve_probes(&circuit, probes)?;
    let bias = newton_solve(&circuit, cfg, None)?.x;
    let mut points = Vec::new();
    for f in spec.frequencies() {
        let x = ac_solve(&circuit, &bias, 2.0 * PI * f, cfg.gmin_floor).map_err(|e| match e {
            MnaError::SingularMatrix { .. } => AnalysisError::SingularAt { freq_hz: f },
            other => other.into(),
        })?;
        points.push(AcPoint {
            freq_hz: f,
            values: resolved.iter().map(|&r| probe_value(&x, r) / reference).collect(),
        });
    }
    Ok(AcResult {
        probes: probes.to_vec(),
        points,
        bias,
    })
}
