use super::report::{ExperimentReport, Trace};
use super::{
    build_multiplier, calibrated, ideal_product, nodes, quiescent, set_inputs, BenchError, LoadKind,
    MultiplierConfig,
};
use crate::analysis::{
    ac_sweep, dc_sweep_with, noise_analysis, transient, AcSpec, NoiseSpec, Probe, SweepSpec, TransientSpec,
};
use crate::circuit::{Netlist, Primitive, SourceShape};
use crate::cnfet::Region;
use crate::mna::{evaluate_cnfet, node_voltage, NewtonConfig};
use crate::signal::{bandwidth_3db, dft_component, spectrum, SignalError, Waveform};

fn output_probe() -> Probe {
    Probe::differential(nodes::VO2, nodes::VO1)
}

/// Input amplitudes of the THD surface (V).
pub const THD_AMPLITUDES: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

/// DC transfer surface over V1 ∈ ±0.4 V (10 mV) and V2 ∈ ±0.4 V (50 mV).
///
/// Trace `dc_transfer` has one row per V1 value and one Vout column per V2.
pub fn exp_dc_transfer(cfg: &MultiplierConfig) -> Result<ExperimentReport, BenchError> {
    let cfg = calibrated(cfg)?;
    let newton = NewtonConfig::default();
    let netlist = build_multiplier(&cfg)?;
    let outer = SweepSpec::new("V1", -0.4, 0.4, 0.01).link("V1N", -1.0);
    let inner = SweepSpec::new("V2", -0.4, 0.4, 0.05).link("V2N", -1.0);

    let mut grid: Vec<Vec<f64>> = Vec::new();
    let mut unsaturated = 0usize;
    let mut first_violation: Option<String> = None;
    let mut last_row = None;
    let (v1s, v2s, failures) = dc_sweep_with(&netlist, &outer, Some(&inner), &newton, |row, v1, circuit, sol| {
        if last_row != Some(row) {
            grid.push(Vec::new());
            last_row = Some(row);
        }
        let Some(sol) = sol else {
            grid.last_mut().unwrap().push(f64::NAN);
            return;
        };
        let v = |name: &str| node_voltage(&sol.x, circuit.find_node(name).unwrap());
        grid.last_mut().unwrap().push(v(nodes::VO2) - v(nodes::VO1));
        for p in circuit.primitives() {
            if let Primitive::Cnfet { name, .. } = p {
                let d = evaluate_cnfet(p, &sol.x).unwrap();
                if d.region != Region::Saturation || d.reversed {
                    unsaturated += 1;
                    first_violation.get_or_insert_with(|| {
                        format!("{name} in {:?} at v1 = {v1:.3} V, v2 = {:.3} V", d.region, row.unwrap_or(0.0))
                    });
                }
            }
        }
    })?;
    let v2s = v2s.unwrap_or_default();

    let mut r = ExperimentReport::new("dc_transfer");
    let mut header = vec!["v1".to_string()];
    header.extend(v2s.iter().map(|v2| format!("vout_v2_{:+.3}", v2)));
    let mut trace = Trace {
        name: "dc_transfer".into(),
        header,
        rows: Vec::new(),
    };
    for (i, v1) in v1s.iter().enumerate() {
        let mut row = vec![*v1];
        row.extend(grid.iter().map(|col| col[i]));
        trace.rows.push(row);
    }

    let (n1, n2) = (v1s.len(), v2s.len());
    let at = |i: usize, j: usize| grid[j][i];
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut odd1, mut odd2) = (0.0f64, 0.0f64);
    let mut sign_errors = 0;
    for j in 0..n2 {
        for i in 0..n1 {
            let v = at(i, j);
            vmax = vmax.max(v);
            vmin = vmin.min(v);
            odd1 = odd1.max((v + at(n1 - 1 - i, j)).abs());
            odd2 = odd2.max((v + at(i, n2 - 1 - j)).abs());
            let (a, b) = (v1s[i], v2s[j]);
            let quadrant = a.abs() >= 0.05 - 1e-9 && b.abs() >= 0.05 - 1e-9;
            if quadrant && v.signum() != (a * b).signum() {
                sign_errors += 1;
            }
        }
    }
    r.set("output_max_v", vmax);
    r.set("output_min_v", vmin);
    r.set("output_swing_v", vmax.abs().max(vmin.abs()));
    r.set("odd_error_v1_v", odd1);
    r.set("odd_error_v2_v", odd2);
    r.set("sign_errors", sign_errors as f64);
    r.set("unsaturated_points", unsaturated as f64);
    r.set("failed_points", failures.len() as f64);
    if let Some(v) = first_violation {
        r.diagnostics.push(format!("first region violation: {v}"));
    }
    for f in &failures {
        r.diagnostics.push(format!(
            "no convergence at v1 = {:.3} V, v2 = {:.3} V: {}",
            f.outer,
            f.inner.unwrap_or(0.0),
            f.error
        ));
    }

    if let LoadKind::IdealResistor { .. } = cfg.load {
        if cfg.core_model().lambda == 0.0 {
            let mut dev = 0.0f64;
            let mut scale = 0.0f64;
            for j in 0..n2 {
                for i in 0..n1 {
                    let ideal = ideal_product(v1s[i], v2s[j], &cfg)?;
                    dev = dev.max((at(i, j) - ideal).abs());
                    scale = scale.max(ideal.abs());
                }
            }
            r.set("ideal_max_abs_dev_v", dev);
            r.set("ideal_rel_dev", dev / scale);
        }
    }

    let (op, power) = quiescent(&cfg, &newton)?;
    let vo1 = op.voltage(nodes::VO1).unwrap();
    let vo2 = op.voltage(nodes::VO2).unwrap();
    r.set("power_w", power);
    r.set("vo1_zero_v", vo1);
    r.set("vo2_zero_v", vo2);
    r.set("dc_offset_v", vo2 - vo1);
    if let Some(vbp) = cfg.v_bp.filter(|_| cfg.load == LoadKind::Cnfet) {
        r.set("load_bias_v", vbp);
    }
    r.set("k_tube", cfg.model.k_tube);
    r.traces.push(trace);
    r.netlist = Some(netlist.render());
    Ok(r)
}

/// One doubler transient: both inputs carry the same tone.
#[derive(Debug, Clone)]
pub struct DoublerRun {
    /// Full output waveform from t = 0.
    pub waveform: Waveform,
    /// The analysed window (first two input periods removed).
    pub window: Waveform,
    pub spectrum: crate::signal::Spectrum,
    /// Amplitude at the input frequency relative to the doubled fundamental.
    pub residual: f64,
}

pub const SAMPLES_PER_PERIOD: usize = 512;
pub const DOUBLER_PERIODS: usize = 12;
pub const DISCARDED_PERIODS: usize = 2;

pub fn doubler_netlist(cfg: &MultiplierConfig, a1: f64, a2: f64, freq: f64) -> Result<Netlist, BenchError> {
    let mut n = build_multiplier(cfg)?;
    let s1 = SourceShape::sine(a1, freq);
    let s2 = SourceShape::sine(a2, freq);
    n.set_source("V1", s1)?;
    n.set_source("V1N", s1.negated())?;
    n.set_source("V2", s2)?;
    n.set_source("V2N", s2.negated())?;
    Ok(n)
}

/// Transient of the doubler and its spectrum at twice the input frequency.
pub fn run_doubler(cfg: &MultiplierConfig, a1: f64, a2: f64, freq: f64) -> Result<DoublerRun, BenchError> {
    let n = doubler_netlist(cfg, a1, a2, freq)?;
    let dt = 1.0 / (freq * SAMPLES_PER_PERIOD as f64);
    let spec = TransientSpec::new(DOUBLER_PERIODS as f64 / freq, dt);
    let tr = transient(&n, &spec, &[output_probe()], &NewtonConfig::default())?;
    let waveform = tr.waveforms.into_iter().next().unwrap();
    let window = waveform.slice(
        DISCARDED_PERIODS * SAMPLES_PER_PERIOD,
        (DOUBLER_PERIODS - DISCARDED_PERIODS) * SAMPLES_PER_PERIOD,
    )?;
    let spectrum = spectrum(&window, 2.0 * freq, 10)?;
    let (a_in, _) = dft_component(&window, freq)?;
    let fundamental = spectrum.amplitude(1);
    let residual = if fundamental > 0.0 { a_in / fundamental } else { f64::INFINITY };
    Ok(DoublerRun {
        waveform,
        window,
        spectrum,
        residual,
    })
}

/// Frequency doubler at `amplitude` on both inputs, plus the THD surface over
/// [`THD_AMPLITUDES`].
pub fn exp_doubler_thd(cfg: &MultiplierConfig, amplitude: f64, freq: f64) -> Result<ExperimentReport, BenchError> {
    let cfg = calibrated(cfg)?;
    let mut r = ExperimentReport::new("doubler_thd");
    r.diagnostics.push(format!(
        "spectra use input periods {}..{} of {} ({} samples per period)",
        DISCARDED_PERIODS, DOUBLER_PERIODS, DOUBLER_PERIODS, SAMPLES_PER_PERIOD
    ));
    r.set("input_amplitude_v", amplitude);
    r.set("input_freq_hz", freq);
    match run_doubler(&cfg, amplitude, amplitude, freq) {
        Ok(run) => {
            match run.spectrum.thd() {
                Ok(t) => r.set("thd_pct", 100.0 * t),
                Err(e) => r.diagnostics.push(format!("THD: {e}")),
            }
            r.set("fundamental_v", run.spectrum.amplitude(1));
            r.set("output_dc_v", run.spectrum.dc);
            r.set("residual_ratio", run.residual);
            let mut wave = Trace::new("doubler_waveform", &["t", "vout"]);
            for (k, v) in run.waveform.samples.iter().enumerate() {
                wave.rows.push(vec![run.waveform.time(k), *v]);
            }
            let mut spec = Trace::new("doubler_spectrum", &["k", "amplitude", "phase"]);
            spec.rows.push(vec![0.0, run.spectrum.dc.abs(), 0.0]);
            for (k, a, p) in &run.spectrum.harmonics {
                spec.rows.push(vec![*k as f64, *a, *p]);
            }
            r.traces.push(wave);
            r.traces.push(spec);
        }
        Err(BenchError::Signal(e @ SignalError::ZeroFundamental { .. })) => {
            r.diagnostics.push(format!("THD: {e}"));
        }
        Err(e) => return Err(e),
    }

    let mut surface = Trace::new("thd_surface", &["a1", "a2", "thd_pct"]);
    let mut worst = 0.0f64;
    for &a1 in &THD_AMPLITUDES {
        for &a2 in &THD_AMPLITUDES {
            let run = run_doubler(&cfg, a1, a2, freq)?;
            let t = 100.0 * run.spectrum.thd()?;
            worst = worst.max(t);
            surface.rows.push(vec![a1, a2, t]);
        }
    }
    r.set("thd_surface_max_pct", worst);
    r.traces.push(surface);
    r.netlist = Some(doubler_netlist(&cfg, amplitude, amplitude, freq)?.render());
    Ok(r)
}

/// Multiplier biased with V2 at `v2_dc` and a differential AC drive on V1.
pub fn small_signal_netlist(cfg: &MultiplierConfig, v2_dc: f64) -> Result<Netlist, BenchError> {
    let mut n = build_multiplier(cfg)?;
    set_inputs(&mut n, 0.0, v2_dc)?;
    let ac = SourceShape::dc(0.0).with_ac(1.0, 0.0);
    n.set_source("V1", ac)?;
    n.set_source("V1N", ac.negated())?;
    Ok(n)
}

/// Small-signal response from V1 to the differential output with V2 at 0.2 V.
pub fn exp_freq_response(cfg: &MultiplierConfig) -> Result<ExperimentReport, BenchError> {
    let cfg = calibrated(cfg)?;
    let n = small_signal_netlist(&cfg, 0.2)?;
    let res = ac_sweep(&n, &AcSpec::new(1e6, 1e12, 20), &[output_probe()], &NewtonConfig::default())?;
    let mags = res.magnitudes(0);
    let mut r = ExperimentReport::new("freq_response");
    let lf = res.points[0].values[0];
    r.set("gain_lf", lf.norm());
    r.set("phase_lf_deg", lf.arg().to_degrees());
    r.set("bandwidth_hz", bandwidth_3db(&mags)?);
    r.set("c_eff_f", cfg.model.c_eff);
    let mut t = Trace::new("freq_response", &["freq_hz", "magnitude", "magnitude_db", "phase_deg"]);
    for p in &res.points {
        let v = p.values[0];
        t.rows.push(vec![p.freq_hz, v.norm(), 20.0 * v.norm().log10(), v.arg().to_degrees()]);
    }
    r.traces.push(t);
    r.netlist = Some(n.render());
    Ok(r)
}

/// Output and input-referred noise of the small-signal setup.
pub fn exp_noise(cfg: &MultiplierConfig) -> Result<ExperimentReport, BenchError> {
    exp_noise_excluding(cfg, &[])
}

/// [`exp_noise`] with the named elements' noise left out.
pub fn exp_noise_excluding(cfg: &MultiplierConfig, exclude: &[&str]) -> Result<ExperimentReport, BenchError> {
    let cfg = calibrated(cfg)?;
    let n = small_signal_netlist(&cfg, 0.2)?;
    let mut spec = NoiseSpec::new(output_probe(), "V1", 1e5, 1e12, 10);
    spec.exclude = exclude.iter().map(|s| s.to_string()).collect();
    let res = noise_analysis(&n, &spec, &NewtonConfig::default())?;
    let mut r = ExperimentReport::new("noise");
    let first = &res.points[0];
    r.set("output_noise_lf", first.output_noise);
    if let Some(i) = first.input_noise {
        r.set("input_noise_lf", i);
    }
    r.set("gain_lf", first.gain);
    r.set("noise_sources", res.sources.len() as f64);
    r.diagnostics.extend(res.diagnostics.iter().cloned());
    let mut t = Trace::new("noise", &["freq_hz", "output_noise", "input_noise", "gain"]);
    for p in &res.points {
        t.rows.push(vec![p.freq_hz, p.output_noise, p.input_noise.unwrap_or(f64::NAN), p.gain]);
    }
    r.traces.push(t);
    r.netlist = Some(n.render());
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub amplitude: f64,
    pub freq_hz: f64,
}

/// Carrier on V1, modulating tone on V2.
#[derive(Debug, Clone, PartialEq)]
pub struct AmSetting {
    pub label: String,
    pub carrier: Tone,
    pub modulating: Tone,
}

impl AmSetting {
    /// 10 MHz, 200 mV carrier with a 1 MHz, 50 mV modulating tone.
    pub fn mhz() -> Self {
        Self {
            label: "am_mhz".into(),
            carrier: Tone {
                amplitude: 0.2,
                freq_hz: 10e6,
            },
            modulating: Tone {
                amplitude: 0.05,
                freq_hz: 1e6,
            },
        }
    }

    /// 10 GHz carrier with a 1 GHz modulating tone, same amplitudes.
    pub fn ghz() -> Self {
        Self {
            label: "am_ghz".into(),
            carrier: Tone {
                amplitude: 0.2,
                freq_hz: 10e9,
            },
            modulating: Tone {
                amplitude: 0.05,
                freq_hz: 1e9,
            },
        }
    }

    /// Greatest common divisor of the two frequencies (Hz); both must be
    /// whole numbers of hertz.
    pub fn base_freq(&self) -> Result<u64, BenchError> {
        let whole = |f: f64| -> Result<u64, BenchError> {
            if f > 0.0 && f.fract() == 0.0 && f < 1e18 {
                Ok(f as u64)
            } else {
                Err(BenchError::Config(format!("tone frequency {f} Hz must be a positive whole number")))
            }
        };
        let (mut a, mut b) = (whole(self.carrier.freq_hz)?, whole(self.modulating.freq_hz)?);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        Ok(a)
    }
}

/// Samples per carrier period in the AM transient.
pub const AM_SAMPLES_PER_CARRIER: usize = 128;

#[derive(Debug, Clone)]
pub struct AmRun {
    pub waveform: Waveform,
    pub window: Waveform,
    pub lower: f64,
    pub upper: f64,
    pub carrier: f64,
    pub base_hz: f64,
}

/// Two-tone transient over three periods of the common base frequency; the
/// first one is discarded.
pub fn run_am(cfg: &MultiplierConfig, setting: &AmSetting) -> Result<AmRun, BenchError> {
    let g = setting.base_freq()?;
    let ratio = (setting.carrier.freq_hz as u64 / g) as usize;
    let per_base = AM_SAMPLES_PER_CARRIER * ratio.max(1);
    let base = g as f64;
    let dt = 1.0 / (base * per_base as f64);
    let mut n = build_multiplier(cfg)?;
    let c = SourceShape::sine(setting.carrier.amplitude, setting.carrier.freq_hz);
    let m = SourceShape::sine(setting.modulating.amplitude, setting.modulating.freq_hz);
    n.set_source("V1", c)?;
    n.set_source("V1N", c.negated())?;
    n.set_source("V2", m)?;
    n.set_source("V2N", m.negated())?;
    let tr = transient(&n, &TransientSpec::new(3.0 / base, dt), &[output_probe()], &NewtonConfig::default())?;
    let waveform = tr.waveforms.into_iter().next().unwrap();
    let window = waveform.slice(per_base, 2 * per_base)?;
    let (fc, fm) = (setting.carrier.freq_hz, setting.modulating.freq_hz);
    let lower = dft_component(&window, (fc - fm).abs())?.0;
    let upper = dft_component(&window, fc + fm)?.0;
    let carrier = dft_component(&window, fc)?.0;
    Ok(AmRun {
        waveform,
        window,
        lower,
        upper,
        carrier,
        base_hz: base,
    })
}

/// Amplitude-modulation run: sidebands, carrier feedthrough and sideband
/// linearity in the modulating amplitude (second run at half amplitude).
pub fn exp_am(cfg: &MultiplierConfig, setting: &AmSetting) -> Result<ExperimentReport, BenchError> {
    let cfg = calibrated(cfg)?;
    let full = run_am(&cfg, setting)?;
    let mut half_setting = setting.clone();
    half_setting.modulating.amplitude *= 0.5;
    let half = run_am(&cfg, &half_setting)?;

    let mut r = ExperimentReport::new(&setting.label);
    r.set("carrier_freq_hz", setting.carrier.freq_hz);
    r.set("modulating_freq_hz", setting.modulating.freq_hz);
    r.set("sideband_lower_v", full.lower);
    r.set("sideband_upper_v", full.upper);
    let mean = 0.5 * (full.lower + full.upper);
    r.set("sideband_mismatch", (full.lower - full.upper).abs() / mean);
    r.set("carrier_feedthrough_v", full.carrier);
    r.set("linearity_error_lower", (full.lower / half.lower / 2.0 - 1.0).abs());
    r.set("linearity_error_upper", (full.upper / half.upper / 2.0 - 1.0).abs());
    if let LoadKind::IdealResistor { ohms } = cfg.load {
        let gain = ohms * 2.0 * cfg.k_core() / 9.0;
        r.set(
            "ideal_sideband_v",
            0.5 * gain * setting.carrier.amplitude * setting.modulating.amplitude,
        );
    }

    let mut wave = Trace::new(&format!("{}_waveform", setting.label), &["t", "vout"]);
    for (k, v) in full.waveform.samples.iter().enumerate() {
        wave.rows.push(vec![full.waveform.time(k), *v]);
    }
    let top = ((2.0 * (setting.carrier.freq_hz + setting.modulating.freq_hz)) / full.base_hz).round() as usize;
    let mut spec = Trace::new(&format!("{}_spectrum", setting.label), &["freq_hz", "amplitude"]);
    for k in 1..=top {
        let f = k as f64 * full.base_hz;
        if let Ok((a, _)) = dft_component(&full.window, f) {
            spec.rows.push(vec![f, a]);
        }
    }
    r.traces.push(wave);
    r.traces.push(spec);
    Ok(r)
}

/// Runs every experiment with its default settings.
pub fn run_suite(cfg: &MultiplierConfig) -> Result<Vec<ExperimentReport>, BenchError> {
    let cfg = calibrated(cfg)?;
    let mut am = exp_am(&cfg, &AmSetting::mhz())?;
    let ghz = exp_am(&cfg, &AmSetting::ghz())?;
    am.name = "am".into();
    am.scalars = am.scalars.into_iter().map(|(k, v)| (format!("mhz_{k}"), v)).collect();
    am.scalars.extend(ghz.scalars.into_iter().map(|(k, v)| (format!("ghz_{k}"), v)));
    am.traces.extend(ghz.traces);
    am.diagnostics.extend(ghz.diagnostics);
    Ok(vec![
        exp_dc_transfer(&cfg)?,
        exp_doubler_thd(&cfg, 0.4, 1e6)?,
        exp_freq_response(&cfg)?,
        exp_noise(&cfg)?,
        am,
    ])
}
