use std::f64::consts::PI;

use num_complex::Complex64;

use super::ac::{ac_reference, ac_system, log_frequencies};
use super::{prepare, probe_value, AnalysisError, Probe};
use crate::circuit::{Netlist, NodeId, Primitive};
use crate::cnfet::BOLTZMANN;
use crate::mna::{evaluate_cnfet, newton_solve, LuFactors, MnaError, NewtonConfig};

/// Excess channel-noise factor for the CNFET thermal noise current.
pub const CHANNEL_NOISE_GAMMA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub output: Probe,
    /// Source whose gain to the output refers noise back to the input.
    pub input_source: String,
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
    pub temperature_k: f64,
    /// Elements whose noise is left out of the sum.
    pub exclude: Vec<String>,
}

impl NoiseSpec {
    pub fn new(output: Probe, input_source: &str, f_start: f64, f_stop: f64, points_per_decade: usize) -> Self {
        Self {
            output,
            input_source: input_source.into(),
            f_start,
            f_stop,
            points_per_decade,
            temperature_k: 300.0,
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePoint {
    pub freq_hz: f64,
    /// Output noise density (V/√Hz).
    pub output_noise: f64,
    /// Input-referred density (V/√Hz); `None` where the gain vanishes.
    pub input_noise: Option<f64>,
    /// `|output / input|` small-signal gain.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResult {
    pub points: Vec<NoisePoint>,
    /// Noise generators included, with their current PSD (A²/Hz).
    pub sources: Vec<(String, f64)>,
    pub diagnostics: Vec<String>,
}

fn inject(rhs: &mut [Complex64], a: NodeId, b: NodeId) {
    if !a.is_ground() {
        rhs[a.0 - 1] -= Complex64::new(1.0, 0.0);
    }
    if !b.is_ground() {
        rhs[b.0 - 1] += Complex64::new(1.0, 0.0);
    }
}

/// Thermal noise of resistors and CNFET channels summed in power at the
/// output probe, each transfer found by unit-current injection.
pub fn noise_analysis(netlist: &Netlist, spec: &NoiseSpec, cfg: &NewtonConfig) -> Result<NoiseResult, AnalysisError> {
    if !(spec.f_start > 0.0) || !(spec.f_stop >= spec.f_start) || spec.points_per_decade == 0 {
        return Err(AnalysisError::InvalidSpec("noise sweep needs 0 < f_start <= f_stop".into()));
    }
    if !(spec.temperature_k > 0.0) {
        return Err(AnalysisError::InvalidSpec("temperature must be positive".into()));
    }
    let circuit = prepare(netlist)?;
    let out = spec.output.resolve(&circuit)?;
    let input_index = circuit
        .primitive_index(&spec.input_source)
        .filter(|&i| matches!(circuit.primitives()[i], Primitive::VSource { .. }))
        .ok_or_else(|| AnalysisError::UnknownSource(spec.input_source.clone()))?;
    let input_ac = match &circuit.primitives()[input_index] {
        Primitive::VSource { shape, .. } => shape.ac.map(|a| a.magnitude).filter(|m| *m > 0.0),
        _ => None,
    };
    let bias = newton_solve(&circuit, cfg, None)?.x;
    let four_kt = 4.0 * BOLTZMANN * spec.temperature_k;

    let mut generators: Vec<(String, NodeId, NodeId, f64)> = Vec::new();
    for p in circuit.primitives() {
        if spec.exclude.iter().any(|e| e == p.name()) {
            continue;
        }
        match p {
            Primitive::Resistor { name, pos, neg, ohms } => {
                generators.push((name.clone(), *pos, *neg, four_kt / ohms));
            }
            Primitive::Cnfet {
                name, drain, source, ..
            } => {
                let gm = evaluate_cnfet(p, &bias).map_or(0.0, |d| d.gm.abs());
                generators.push((name.clone(), *drain, *source, four_kt * CHANNEL_NOISE_GAMMA * gm));
            }
            _ => {}
        }
    }

    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    for f in log_frequencies(spec.f_start, spec.f_stop, spec.points_per_decade) {
        let sys = ac_system(&circuit, &bias, 2.0 * PI * f, cfg.gmin_floor);
        let lu = LuFactors::factor(sys.matrix.clone(), sys.dim).map_err(|e| match e {
            MnaError::SingularMatrix { .. } => AnalysisError::SingularAt { freq_hz: f },
            other => other.into(),
        })?;
        // With the input carrying an AC tag, every tagged source is driven
        // (differential replicas included); otherwise the input alone is.
        let gain = match input_ac {
            Some(m) if ac_reference(&circuit).is_some() => probe_value(&lu.solve(&sys.rhs), out) / m,
            _ => {
                let mut rhs = vec![Complex64::new(0.0, 0.0); sys.dim];
                rhs[sys.branch_row(circuit.branch_of[input_index].unwrap())] = Complex64::new(1.0, 0.0);
                probe_value(&lu.solve(&rhs), out)
            }
        };
        let mut total = 0.0;
        for (_, a, b, psd) in &generators {
            if *psd == 0.0 {
                continue;
            }
            let mut rhs = vec![Complex64::new(0.0, 0.0); sys.dim];
            inject(&mut rhs, *a, *b);
            let h = probe_value(&lu.solve(&rhs), out);
            total += h.norm_sqr() * psd;
        }
        let output_noise = total.sqrt();
        let g = gain.norm();
        let input_noise = if g > 1e-30 {
            Some(output_noise / g)
        } else {
            diagnostics.push(format!("zero gain at {f:e} Hz: input-referred noise undefined"));
            None
        };
        points.push(NoisePoint {
            freq_hz: f,
            output_noise,
            input_noise,
            gain: g,
        });
    }
    Ok(NoiseResult {
        points,
        sources: generators.into_iter().map(|(n, _, _, s)| (n, s)).collect(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::SourceShape;

    fn spec() -> NoiseSpec {
        NoiseSpec::new(Probe::node("out"), "V1", 1e3, 1e6, 3)
    }

    #[test]
    fn resistor_johnson_noise() {
        let mut n = Netlist::new("r");
        n.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        n.resistor("R1", "in", "out", 1e3).unwrap();
        let r = noise_analysis(&n, &spec(), &NewtonConfig::default()).unwrap();
        let expected = (4.0 * BOLTZMANN * 300.0 * 1e3f64).sqrt();
        assert!((expected - 4.070e-9).abs() / 4.070e-9 < 1e-3);
        for p in &r.points {
            assert!((p.output_noise / expected - 1.0).abs() < 1e-9, "{}", p.output_noise);
            assert!((p.input_noise.unwrap() - p.output_noise / p.gain).abs() < 1e-24);
        }
    }

    #[test]
    fn shorted_output_has_zero_gain() {
        let mut n = Netlist::new("s");
        n.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        n.resistor("R1", "in", "out", 1e3).unwrap();
        n.vsource("V2", "out", "0", SourceShape::dc(0.0)).unwrap();
        let r = noise_analysis(&n, &spec(), &NewtonConfig::default()).unwrap();
        assert!(r.points.iter().all(|p| p.output_noise == 0.0 && p.input_noise.is_none()));
        assert_eq!(r.diagnostics.len(), r.points.len());
    }

    #[test]
    fn parallel_pair_equals_half() {
        let mut a = Netlist::new("p");
        a.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        a.resistor("R1", "in", "out", 2e3).unwrap();
        a.resistor("R2", "in", "out", 2e3).unwrap();
        a.capacitor("C1", "out", "0", 1e-12).unwrap();
        let mut b = Netlist::new("q");
        b.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        b.resistor("R1", "in", "out", 1e3).unwrap();
        b.capacitor("C1", "out", "0", 1e-12).unwrap();
        let ra = noise_analysis(&a, &spec(), &NewtonConfig::default()).unwrap();
        let rb = noise_analysis(&b, &spec(), &NewtonConfig::default()).unwrap();
        for (p, q) in ra.points.iter().zip(&rb.points) {
            assert!((p.output_noise / q.output_noise - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_circuit() {
        let mut n = Netlist::new("c");
        n.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        n.capacitor("C1", "in", "out", 1e-12).unwrap();
        n.capacitor("C2", "out", "0", 1e-12).unwrap();
        n.vsource("V2", "out", "0", SourceShape::dc(0.0)).unwrap();
        let r = noise_analysis(&n, &spec(), &NewtonConfig::default()).unwrap();
        assert!(r.points.iter().all(|p| p.output_noise == 0.0));
    }

    #[test]
    fn rc_density_falls_past_pole() {
        let mut n = Netlist::new("rc");
        n.vsource("V1", "in", "0", SourceShape::dc(0.0)).unwrap();
        n.resistor("R1", "in", "out", 1e3).unwrap();
        n.capacitor("C1", "out", "0", 1e-9).unwrap();
        let s = NoiseSpec::new(Probe::node("out"), "V1", 1e3, 1e9, 5);
        let r = noise_analysis(&n, &s, &NewtonConfig::default()).unwrap();
        for w in r.points.windows(2) {
            assert!(w[1].output_noise <= w[0].output_noise * (1.0 + 1e-12));
        }
    }
}
