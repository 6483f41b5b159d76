use super::{prepare, probe_value, resolve_probes, AnalysisError, Probe};
use crate::circuit::{Netlist, Primitive};
use crate::mna::{
    element_currents, iterate, newton_solve, node_voltage, CapState, Integration, MnaError, NewtonConfig,
    RealContext, Strategy,
};
use crate::signal::Waveform;

/// Fixed-step transient setup.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientSpec {
    pub t_stop: f64,
    pub dt: f64,
    /// Start from all-zero unknowns instead of the operating point.
    pub uic: bool,
}

impl TransientSpec {
    pub fn new(t_stop: f64, dt: f64) -> Self {
        Self { t_stop, dt, uic: false }
    }

    pub fn steps(&self) -> usize {
        (self.t_stop / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    /// One waveform per probe, sampled at `0, dt, ..., steps·dt`.
    pub waveforms: Vec<Waveform>,
    pub warnings: Vec<String>,
}

/// Trapezoidal transient from the operating point (or zero state with
/// `uic`). The first step uses backward Euler.
pub fn transient(
    netlist: &Netlist,
    spec: &TransientSpec,
    probes: &[Probe],
    cfg: &NewtonConfig,
) -> Result<TransientResult, AnalysisError> {
    if !(spec.dt > 0.0) || !spec.dt.is_finite() {
        return Err(AnalysisError::InvalidSpec(format!("dt must be positive, got {}", spec.dt)));
    }
    if !(spec.t_stop >= 10.0 * spec.dt * (1.0 - 1e-12)) {
        return Err(AnalysisError::InvalidSpec(format!(
            "t_stop = {:e} s is shorter than 10 steps of {:e} s",
            spec.t_stop, spec.dt
        )));
    }
    let circuit = prepare(netlist)?;
    let resolved = resolve_probes(&circuit, probes)?;

    let mut warnings = Vec::new();
    for p in circuit.primitives() {
        if let Primitive::VSource {
            name,
            shape,
            ..
        } = p
        {
            if let Some(s) = shape.sin {
                let per_period = 1.0 / (s.freq_hz * spec.dt);
                if per_period < 50.0 {
                    warnings.push(format!(
                        "source {name}: {per_period:.1} points per period at {:e} Hz (50 recommended)",
                        s.freq_hz
                    ));
                }
            }
        }
    }

    let mut x = if spec.uic {
        vec![0.0; circuit.unknowns()]
    } else {
        newton_solve(&circuit, cfg, None)
            .map_err(|source| AnalysisError::TransientStep { time: 0.0, source })?
            .x
    };

    let mut history = vec![CapState::default(); circuit.cap_count];
    for (i, p) in circuit.primitives().iter().enumerate() {
        if let (Primitive::Capacitor { pos, neg, .. }, Some(slot)) = (p, circuit.cap_of[i]) {
            history[slot].voltage = node_voltage(&x, *pos) - node_voltage(&x, *neg);
        }
    }

    let steps = spec.steps();
    let mut traces: Vec<Vec<f64>> = resolved.iter().map(|&r| vec![probe_value(&x, r)]).collect();
    for k in 1..=steps {
        let time = k as f64 * spec.dt;
        let method = if k == 1 {
            Integration::BackwardEuler
        } else {
            Integration::Trapezoidal
        };
        let ctx = RealContext::Transient {
            time,
            dt: spec.dt,
            method,
            history: &history,
        };
        let (next, _) = iterate(&circuit, cfg, &x, &ctx, 0.0, Strategy::Newton).map_err(|a| {
            AnalysisError::TransientStep {
                time,
                source: MnaError::NoConvergence { trace: vec![a] },
            }
        })?;
        let currents = element_currents(&circuit, &next, &ctx, cfg.gmin_floor);
        let mut updated = history.clone();
        for (i, p) in circuit.primitives().iter().enumerate() {
            if let (Primitive::Capacitor { pos, neg, .. }, Some(slot)) = (p, circuit.cap_of[i]) {
                updated[slot] = CapState {
                    voltage: node_voltage(&next, *pos) - node_voltage(&next, *neg),
                    current: currents[i],
                };
            }
        }
        history = updated;
        x = next;
        for (trace, &r) in traces.iter_mut().zip(&resolved) {
            trace.push(probe_value(&x, r));
        }
    }

    let waveforms = traces
        .into_iter()
        .zip(probes)
        .map(|(samples, p)| Waveform::new(0.0, spec.dt, samples, p.to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AnalysisError::InvalidSpec(e.to_string()))?;
    Ok(TransientResult { waveforms, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::SourceShape;

    fn rc() -> Netlist {
        let mut n = Netlist::new("rc");
        n.vsource("V1", "in", "0", SourceShape::dc(1.0)).unwrap();
        n.resistor("R1", "in", "out", 1e3).unwrap();
        n.capacitor("C1", "out", "0", 1e-6).unwrap();
        n
    }

    fn max_error(dt: f64) -> f64 {
        let tau = 1e-3;
        let spec = TransientSpec {
            t_stop: 5.0 * tau,
            dt,
            uic: true,
        };
        let r = transient(&rc(), &spec, &[Probe::node("out")], &NewtonConfig::default()).unwrap();
        let w = &r.waveforms[0];
        w.samples
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, v)| (v - (1.0 - (-w.time(k) / tau).exp())).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rc_charge_at_tau() {
        let spec = TransientSpec {
            t_stop: 1e-3,
            dt: 1e-5,
            uic: true,
        };
        let r = transient(&rc(), &spec, &[Probe::node("out")], &NewtonConfig::default()).unwrap();
        let v = *r.waveforms[0].samples.last().unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert!((v / exact - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn second_order_convergence() {
        let ratio = max_error(1e-5) / max_error(0.5e-5);
        assert!((3.2..=4.8).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_amplitude_stays_at_op() {
        let mut n = rc();
        n.set_source("V1", SourceShape::sine(0.0, 1e3)).unwrap();
        let r = transient(&n, &TransientSpec::new(2e-3, 1e-5), &[Probe::node("out")], &NewtonConfig::default()).unwrap();
        assert!(r.waveforms[0].samples.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn spec_checks() {
        let n = rc();
        let cfg = NewtonConfig::default();
        assert!(transient(&n, &TransientSpec::new(5e-5, 1e-5), &[], &cfg).is_err());
        assert!(transient(&n, &TransientSpec::new(1e-3, 0.0), &[], &cfg).is_err());
        let mut s = rc();
        s.set_source("V1", SourceShape::sine(1.0, 1e4)).unwrap();
        let r = transient(&s, &TransientSpec::new(1e-3, 1e-5), &[], &cfg).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }
}
