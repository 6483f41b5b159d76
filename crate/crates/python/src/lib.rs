//! Python bindings: netlists, analyses, device model, spectral helpers and
//! the multiplier benchmark.
//!
//! Errors from the simulator surface as `ValueError` (bad input) or
//! `RuntimeError` (analysis failures).

use std::collections::BTreeMap;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cnfetlab::analysis::{self as an, AcSpec, NoiseSpec, Probe, SweepSpec, TransientSpec};
use cnfetlab::bench;
use cnfetlab::circuit::{self, SourceShape, SummerMode};
use cnfetlab::cnfet::{self, Polarity};
use cnfetlab::mna::NewtonConfig;
use cnfetlab::signal;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn probes(list: &[String]) -> PyResult<Vec<Probe>> {
    list.iter().map(|p| Probe::parse(p).map_err(value_err)).collect()
}

fn polarity(p_type: bool) -> Polarity {
    if p_type {
        Polarity::P
    } else {
        Polarity::N
    }
}

/// Square-law CNFET parameters for one chirality.
#[pyclass(name = "CntParams", from_py_object)]
#[derive(Clone)]
pub struct PyCntParams {
    inner: cnfet::CntParams,
}

#[pymethods]
impl PyCntParams {
    #[new]
    #[pyo3(signature = (n = 25, m = 0))]
    fn new(n: u32, m: u32) -> PyResult<Self> {
        let inner = cnfet::CntParams::with_chirality(n, m);
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Nanotube diameter (m).
    #[getter]
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    /// Threshold voltage (V).
    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn k_tube(&self) -> f64 {
        self.inner.k_tube
    }

    #[setter]
    fn set_k_tube(&mut self, v: f64) {
        self.inner.k_tube = v;
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[setter]
    fn set_lambda_(&mut self, v: f64) {
        self.inner.lambda = v;
    }

    #[getter]
    fn c_eff(&self) -> f64 {
        self.inner.c_eff
    }

    #[setter]
    fn set_c_eff(&mut self, v: f64) {
        self.inner.c_eff = v;
    }

    /// `(ids, gm, gds, region)` at the given bias.
    #[pyo3(signature = (vgs, vds, tubes = 1, p_type = false))]
    fn drain_current(&self, vgs: f64, vds: f64, tubes: u32, p_type: bool) -> (f64, f64, f64, String) {
        let d = cnfet::drain_current(&self.inner, polarity(p_type), tubes, vgs, vds);
        (d.ids, d.gm, d.gds, format!("{:?}", d.region).to_lowercase())
    }

    fn __repr__(&self) -> String {
        format!(
            "CntParams(n={}, m={}, D={:.3} nm, Vth={:.4} V)",
            self.inner.n,
            self.inner.m,
            self.inner.diameter() * 1e9,
            self.inner.threshold()
        )
    }
}

/// Circuit description with the analyses that run on it.
#[pyclass(name = "Netlist", from_py_object)]
#[derive(Clone)]
pub struct PyNetlist {
    inner: circuit::Netlist,
}

#[pymethods]
impl PyNetlist {
    #[new]
    #[pyo3(signature = (title = ""))]
    fn new(title: &str) -> Self {
        Self {
            inner: circuit::Netlist::new(title),
        }
    }

    /// Parses netlist text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        circuit::parse_netlist(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn render(&self) -> String {
        self.inner.render()
    }

    fn add_resistor(&mut self, name: &str, pos: &str, neg: &str, ohms: f64) -> PyResult<()> {
        self.inner.resistor(name, pos, neg, ohms).map_err(value_err)
    }

    fn add_capacitor(&mut self, name: &str, pos: &str, neg: &str, farads: f64) -> PyResult<()> {
        self.inner.capacitor(name, pos, neg, farads).map_err(value_err)
    }

    /// Voltage source with a DC value, an optional `(amplitude, freq_hz)`
    /// sine and an optional AC magnitude.
    #[pyo3(signature = (name, pos, neg, dc = 0.0, sine = None, ac = None))]
    fn add_vsource(
        &mut self,
        name: &str,
        pos: &str,
        neg: &str,
        dc: f64,
        sine: Option<(f64, f64)>,
        ac: Option<f64>,
    ) -> PyResult<()> {
        let mut shape = match sine {
            Some((amp, f)) => SourceShape::sine(amp, f),
            None => SourceShape::dc(dc),
        };
        shape.dc = dc;
        if let Some(m) = ac {
            shape = shape.with_ac(m, 0.0);
        }
        self.inner.vsource(name, pos, neg, shape).map_err(value_err)
    }

    fn add_model(&mut self, name: &str, params: &PyCntParams) -> PyResult<()> {
        self.inner.add_model(name, params.inner.clone()).map_err(value_err)
    }

    #[pyo3(signature = (name, drain, gate, source, model, tubes = 1, p_type = false))]
    #[allow(clippy::too_many_arguments)]
    fn add_cnfet(
        &mut self,
        name: &str,
        drain: &str,
        gate: &str,
        source: &str,
        model: &str,
        tubes: u32,
        p_type: bool,
    ) -> PyResult<()> {
        self.inner
            .cnfet(name, drain, gate, source, model, polarity(p_type), tubes)
            .map_err(value_err)
    }

    #[pyo3(signature = (name, in_a, in_b, out, physical = false))]
    fn add_summer(&mut self, name: &str, in_a: &str, in_b: &str, out: &str, physical: bool) -> PyResult<()> {
        let mode = if physical {
            SummerMode::Physical
        } else {
            SummerMode::Behavioral
        };
        self.inner.summer(name, in_a, in_b, out, mode, |_| {}).map_err(value_err)
    }

    /// Node voltages by name plus `"power"` (total source power, W).
    fn operating_point(&self) -> PyResult<BTreeMap<String, f64>> {
        let op = an::operating_point(&self.inner, &NewtonConfig::default()).map_err(runtime_err)?;
        let mut out: BTreeMap<String, f64> = op.node_voltages().into_iter().collect();
        out.insert("power".into(), an::power_report(&op).total);
        Ok(out)
    }

    /// DC sweep; returns `(values, rows)` with one row per value and one
    /// column per probe. Failed points hold NaN.
    #[pyo3(signature = (source, start, stop, step, probes, links = Vec::new()))]
    fn dc_sweep(
        &self,
        source: &str,
        start: f64,
        stop: f64,
        step: f64,
        probes: Vec<String>,
        links: Vec<(String, f64)>,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut spec = SweepSpec::new(source, start, stop, step);
        spec.linked = links;
        let p = self::probes(&probes)?;
        let r = an::dc_sweep(&self.inner, &spec, None, &p, &NewtonConfig::default()).map_err(runtime_err)?;
        Ok((r.outer_values, r.data.into_iter().next().unwrap_or_default()))
    }

    /// Transient; returns `(times, traces)` with one trace per probe.
    #[pyo3(signature = (t_stop, dt, probes, uic = false))]
    fn transient(&self, t_stop: f64, dt: f64, probes: Vec<String>, uic: bool) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let spec = TransientSpec { t_stop, dt, uic };
        let p = self::probes(&probes)?;
        let r = an::transient(&self.inner, &spec, &p, &NewtonConfig::default()).map_err(runtime_err)?;
        let times = r.waveforms.first().map_or_else(Vec::new, |w| (0..w.len()).map(|k| w.time(k)).collect());
        Ok((times, r.waveforms.into_iter().map(|w| w.samples).collect()))
    }

    /// AC sweep; returns `(freqs, responses)` with complex values per probe.
    fn ac(&self, f_start: f64, f_stop: f64, points_per_decade: usize, probes: Vec<String>) -> PyResult<(Vec<f64>, Vec<Vec<Complex64>>)> {
        let spec = AcSpec::new(f_start, f_stop, points_per_decade);
        let p = self::probes(&probes)?;
        let r = an::ac_sweep(&self.inner, &spec, &p, &NewtonConfig::default()).map_err(runtime_err)?;
        let freqs = r.points.iter().map(|pt| pt.freq_hz).collect();
        let traces = (0..p.len()).map(|i| r.points.iter().map(|pt| pt.values[i]).collect()).collect();
        Ok((freqs, traces))
    }

    /// Noise; returns `(freqs, output V/√Hz, input-referred V/√Hz or None)`.
    #[pyo3(signature = (output, input_source, f_start, f_stop, points_per_decade, temperature = 300.0))]
    #[allow(clippy::type_complexity)]
    fn noise(
        &self,
        output: &str,
        input_source: &str,
        f_start: f64,
        f_stop: f64,
        points_per_decade: usize,
        temperature: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Option<f64>>)> {
        let mut spec = NoiseSpec::new(
            Probe::parse(output).map_err(value_err)?,
            input_source,
            f_start,
            f_stop,
            points_per_decade,
        );
        spec.temperature_k = temperature;
        let r = an::noise_analysis(&self.inner, &spec, &NewtonConfig::default()).map_err(runtime_err)?;
        Ok((
            r.points.iter().map(|p| p.freq_hz).collect(),
            r.points.iter().map(|p| p.output_noise).collect(),
            r.points.iter().map(|p| p.input_noise).collect(),
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Netlist({:?}, {} elements, {} nodes)",
            self.inner.title,
            self.inner.elements().len(),
            self.inner.nodes().len()
        )
    }
}

/// Multiplier benchmark configuration.
#[pyclass(name = "MultiplierConfig", from_py_object)]
#[derive(Clone)]
pub struct PyMultiplierConfig {
    inner: bench::MultiplierConfig,
}

#[pymethods]
impl PyMultiplierConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: bench::MultiplierConfig::default(),
        }
    }

    /// Resistor loads and no channel-length modulation.
    #[staticmethod]
    fn ideal() -> Self {
        Self {
            inner: bench::MultiplierConfig::ideal(),
        }
    }

    #[getter]
    fn k_tube(&self) -> f64 {
        self.inner.model.k_tube
    }

    #[setter]
    fn set_k_tube(&mut self, v: f64) {
        self.inner.model.k_tube = v;
    }

    #[getter]
    fn c_eff(&self) -> f64 {
        self.inner.model.c_eff
    }

    #[setter]
    fn set_c_eff(&mut self, v: f64) {
        self.inner.model.c_eff = v;
    }

    /// The multiplier netlist at zero input.
    fn netlist(&self) -> PyResult<PyNetlist> {
        let cfg = bench::calibrated(&self.inner).map_err(runtime_err)?;
        let inner = bench::build_multiplier(&cfg).map_err(runtime_err)?;
        Ok(PyNetlist { inner })
    }

    /// Closed-form product for resistor loads.
    fn ideal_product(&self, v1: f64, v2: f64) -> PyResult<f64> {
        bench::ideal_product(v1, v2, &self.inner).map_err(value_err)
    }

    /// Quiescent supply power (W).
    fn quiescent_power(&self) -> PyResult<f64> {
        let cfg = bench::calibrated(&self.inner).map_err(runtime_err)?;
        bench::quiescent(&cfg, &NewtonConfig::default()).map(|(_, p)| p).map_err(runtime_err)
    }

    /// Runs one experiment (`dc`, `thd`, `freq`, `noise`, `am_mhz`, `am_ghz`)
    /// or `all`; returns `{report: {scalar: value}}`.
    #[pyo3(signature = (experiment = "all"))]
    fn run(&self, experiment: &str) -> PyResult<BTreeMap<String, BTreeMap<String, f64>>> {
        let cfg = &self.inner;
        let reports = match experiment {
            "dc" => vec![bench::exp_dc_transfer(cfg)],
            "thd" => vec![bench::exp_doubler_thd(cfg, 0.4, 1e6)],
            "freq" => vec![bench::exp_freq_response(cfg)],
            "noise" => vec![bench::exp_noise(cfg)],
            "am_mhz" => vec![bench::exp_am(cfg, &bench::AmSetting::mhz())],
            "am_ghz" => vec![bench::exp_am(cfg, &bench::AmSetting::ghz())],
            "all" => match bench::run_suite(cfg) {
                Ok(r) => r.into_iter().map(Ok).collect(),
                Err(e) => vec![Err(e)],
            },
            other => return Err(value_err(format!("unknown experiment `{other}`"))),
        };
        reports
            .into_iter()
            .map(|r| r.map(|r| (r.name, r.scalars)).map_err(runtime_err))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "MultiplierConfig(vdd={}, vss={}, k_tube={:e}, load={:?})",
            self.inner.vdd, self.inner.vss, self.inner.model.k_tube, self.inner.load
        )
    }
}

/// `(amplitude, phase_deg)` of the component at `freq_hz`.
#[pyfunction]
fn dft_component(samples: Vec<f64>, dt: f64, freq_hz: f64) -> PyResult<(f64, f64)> {
    let w = signal::Waveform::new(0.0, dt, samples, "w").map_err(value_err)?;
    signal::dft_component(&w, freq_hz).map_err(value_err)
}

/// Total harmonic distortion (fraction) over harmonics 2..=max_harmonic.
#[pyfunction]
#[pyo3(signature = (samples, dt, f0, max_harmonic = 10))]
fn thd(samples: Vec<f64>, dt: f64, f0: f64, max_harmonic: usize) -> PyResult<f64> {
    let w = signal::Waveform::new(0.0, dt, samples, "w").map_err(value_err)?;
    signal::thd(&w, f0, max_harmonic).map_err(value_err)
}

/// −3 dB frequency of a magnitude response; infinite if it never drops.
#[pyfunction]
fn bandwidth_3db(freqs: Vec<f64>, magnitudes: Vec<f64>) -> PyResult<f64> {
    if freqs.len() != magnitudes.len() {
        return Err(value_err("freqs and magnitudes differ in length"));
    }
    let pts: Vec<(f64, f64)> = freqs.into_iter().zip(magnitudes).collect();
    signal::bandwidth_3db(&pts).map_err(value_err)
}

/// Runs the command-line front end with `args` (without the program name)
/// and returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cnfetlab::cli::run_cli(
        std::iter::once("cnfetlab".to_string()).chain(args),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

#[pymodule]
#[pyo3(name = "cnfetlab")]
fn cnfetlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCntParams>()?;
    m.add_class::<PyNetlist>()?;
    m.add_class::<PyMultiplierConfig>()?;
    m.add_function(wrap_pyfunction!(dft_component, m)?)?;
    m.add_function(wrap_pyfunction!(thd, m)?)?;
    m.add_function(wrap_pyfunction!(bandwidth_3db, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("TARGET_POWER", bench::TARGET_POWER)?;
    Ok(())
}
