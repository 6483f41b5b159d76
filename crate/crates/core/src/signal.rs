//! Spectral post-processing on uniformly sampled waveforms: single-bin DFT,
//! harmonic spectrum, THD and −3 dB bandwidth extraction.
//!
//! All spectral routines require a coherent window (an integer number of
//! periods of the analysed frequency); there is no window function.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("window of {periods} periods at {freq_hz:e} Hz is not an integer number of periods")]
    NonCoherentWindow { freq_hz: f64, periods: f64 },
    #[error("only {samples_per_period:.1} samples per period at {freq_hz:e} Hz (need at least 16)")]
    Undersampled { freq_hz: f64, samples_per_period: f64 },
    #[error("fundamental amplitude {amplitude:e} is too small for a distortion ratio")]
    ZeroFundamental { amplitude: f64 },
    #[error("frequency sweep is empty or has a single point")]
    EmptySweep,
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("frequency must be positive, got {0}")]
    InvalidFrequency(f64),
}

/// Uniformly sampled signal starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub label: String,
}

impl Waveform {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, label: impl Into<String>) -> Result<Self, SignalError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SignalError::InvalidWaveform(format!("dt must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(SignalError::InvalidWaveform("need at least 2 samples".into()));
        }
        Ok(Self {
            t0,
            dt,
            samples,
            label: label.into(),
        })
    }

    /// Samples `f(t0 + k·dt)` for `k in 0..n`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, label: &str, f: impl Fn(f64) -> f64) -> Result<Self, SignalError> {
        Self::new(t0, dt, (0..n).map(|k| f(t0 + k as f64 * dt)).collect(), label)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Span covered by the samples when used as a periodic window (`n·dt`).
    pub fn window(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// `count` samples starting at index `start`.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self, SignalError> {
        let end = start.checked_add(count).filter(|&e| e <= self.len()).ok_or_else(|| {
            SignalError::InvalidWaveform(format!("slice {start}+{count} exceeds {} samples", self.len()))
        })?;
        Self::new(self.time(start), self.dt, self.samples[start..end].to_vec(), self.label.clone())
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Checks the integer-period condition and the sampling density for `f`.
pub fn check_coherent(w: &Waveform, freq_hz: f64) -> Result<(), SignalError> {
    if !(freq_hz > 0.0) || !freq_hz.is_finite() {
        return Err(SignalError::InvalidFrequency(freq_hz));
    }
    let periods = w.window() * freq_hz;
    if periods < 0.5 || (periods - periods.round()).abs() > 1e-9 * periods {
        return Err(SignalError::NonCoherentWindow { freq_hz, periods });
    }
    let samples_per_period = 1.0 / (freq_hz * w.dt);
    if samples_per_period < 16.0 - 1e-9 {
        return Err(SignalError::Undersampled {
            freq_hz,
            samples_per_period,
        });
    }
    Ok(())
}

/// Peak amplitude and phase (degrees) of the component at `freq_hz`.
///
/// Phase follows the cosine convention: the component is
/// `amplitude·cos(2πf(t − t0) + phase)`.
pub fn dft_component(w: &Waveform, freq_hz: f64) -> Result<(f64, f64), SignalError> {
    check_coherent(w, freq_hz)?;
    let (re, im) = correlate(w, freq_hz);
    Ok(((re * re + im * im).sqrt(), im.atan2(re).to_degrees()))
}

fn correlate(w: &Waveform, freq_hz: f64) -> (f64, f64) {
    let n = w.len() as f64;
    let step = 2.0 * PI * freq_hz * w.dt;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in w.samples.iter().enumerate() {
        let phi = step * k as f64;
        re += v * phi.cos();
        im -= v * phi.sin();
    }
    (2.0 * re / n, 2.0 * im / n)
}

/// Harmonic content of a periodic waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub f0: f64,
    pub dc: f64,
    /// `(k, amplitude, phase_deg)` for `k = 1..=max_harmonic`.
    pub harmonics: Vec<(usize, f64, f64)>,
}

impl Spectrum {
    pub fn amplitude(&self, k: usize) -> f64 {
        self.harmonics.iter().find(|h| h.0 == k).map_or(0.0, |h| h.1)
    }

    /// RMS reconstructed from the DC term and harmonic amplitudes.
    pub fn rms(&self) -> f64 {
        (self.dc * self.dc + self.harmonics.iter().map(|h| 0.5 * h.1 * h.1).sum::<f64>()).sqrt()
    }

    /// `sqrt(Σ_{k≥2} A_k²) / A_1`.
    pub fn thd(&self) -> Result<f64, SignalError> {
        let a1 = self.amplitude(1);
        if a1 < 1e-15 {
            return Err(SignalError::ZeroFundamental { amplitude: a1 });
        }
        let rest: f64 = self.harmonics.iter().filter(|h| h.0 >= 2).map(|h| h.1 * h.1).sum();
        Ok(rest.sqrt() / a1)
    }

    /// CSV with header `k,amplitude,phase`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,amplitude,phase\n");
        s.push_str(&format!("0,{:.11e},{:.11e}\n", self.dc.abs(), if self.dc < 0.0 { 180.0 } else { 0.0 }));
        for (k, a, p) in &self.harmonics {
            s.push_str(&format!("{k},{a:.11e},{p:.11e}\n"));
        }
        s
    }
}

pub fn spectrum(w: &Waveform, f0: f64, max_harmonic: usize) -> Result<Spectrum, SignalError> {
    check_coherent(w, f0)?;
    let mut harmonics = Vec::with_capacity(max_harmonic);
    for k in 1..=max_harmonic {
        let (a, p) = dft_component(w, k as f64 * f0)?;
        harmonics.push((k, a, p));
    }
    Ok(Spectrum {
        f0,
        dc: w.mean(),
        harmonics,
    })
}

/// Total harmonic distortion over harmonics `2..=max_harmonic`.
pub fn thd(w: &Waveform, f0: f64, max_harmonic: usize) -> Result<f64, SignalError> {
    spectrum(w, f0, max_harmonic)?.thd()
}

/// Frequency where `|H|` first falls to `1/√2` of the lowest-frequency value,
/// interpolated linearly in dB against log frequency. Returns
/// `f64::INFINITY` when no crossing occurs in range.
pub fn bandwidth_3db(points: &[(f64, f64)]) -> Result<f64, SignalError> {
    if points.len() < 2 {
        return Err(SignalError::EmptySweep);
    }
    let db = |m: f64| 20.0 * m.abs().log10();
    let target = db(points[0].1) - 10.0 * 2f64.log10();
    for pair in points.windows(2) {
        let (f1, m1) = pair[0];
        let (f2, m2) = pair[1];
        let (d1, d2) = (db(m1), db(m2));
        if d1 >= target && d2 < target {
            let s = (target - d1) / (d2 - d1);
            let lf = f1.log10() + s * (f2.log10() - f1.log10());
            return Ok(10f64.powf(lf));
        }
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(amp: f64, f: f64, periods: usize, per_period: usize) -> Waveform {
        let dt = 1.0 / (f * per_period as f64);
        Waveform::from_fn(0.0, dt, periods * per_period, "w", |t| amp * (2.0 * PI * f * t).sin()).unwrap()
    }

    #[test]
    fn recovers_sine_amplitude() {
        let w = tone(0.4, 1e6, 10, 512);
        let (a, p) = dft_component(&w, 1e6).unwrap();
        assert!((a - 0.4).abs() < 1e-9);
        assert!((p + 90.0).abs() < 1e-6);
        assert!(dft_component(&w, 2e6).unwrap().0 < 1e-12);
    }

    #[test]
    fn dc_has_no_tone() {
        let w = Waveform::new(0.0, 1e-9, vec![0.7; 1000], "dc").unwrap();
        assert!(dft_component(&w, 1e6).unwrap().0 < 1e-12);
    }

    #[test]
    fn rejects_partial_periods() {
        let w = tone(1.0, 1e6, 10, 512);
        let cut = w.slice(0, 5000).unwrap();
        assert!(matches!(dft_component(&cut, 1e6), Err(SignalError::NonCoherentWindow { .. })));
        let coarse = tone(1.0, 1e6, 10, 8);
        assert!(matches!(dft_component(&coarse, 1e6), Err(SignalError::Undersampled { .. })));
    }

    #[test]
    fn synthetic_thd() {
        let f = 1e3;
        let dt = 1.0 / (f * 256.0);
        let w = Waveform::from_fn(0.0, dt, 2560, "h", |t| {
            let x = 2.0 * PI * f * t;
            x.sin() + 0.01 * (2.0 * x).sin() + 0.005 * (3.0 * x).cos()
        })
        .unwrap();
        let t = thd(&w, f, 10).unwrap();
        assert!((t - 0.011_180_339_887).abs() < 1e-9, "{t}");
        assert!(thd(&tone(1.0, f, 4, 512), f, 10).unwrap() < 1e-9);
    }

    #[test]
    fn squared_sine_spectrum() {
        let f = 1e6;
        let a = 0.3;
        let w = Waveform::from_fn(0.0, 1.0 / (f * 512.0), 5120, "s", |t| (a * (2.0 * PI * f * t).sin()).powi(2)).unwrap();
        let s = spectrum(&w, f, 4).unwrap();
        assert!((s.dc - 0.5 * a * a).abs() < 1e-12);
        assert!(s.amplitude(1) < 1e-12);
        assert!((s.amplitude(2) - 0.5 * a * a).abs() < 1e-12);
    }

    #[test]
    fn zero_fundamental() {
        let w = Waveform::new(0.0, 1e-9, vec![0.0; 1000], "z").unwrap();
        assert!(matches!(thd(&w, 1e6, 10), Err(SignalError::ZeroFundamental { .. })));
    }

    #[test]
    fn single_pole_bandwidth() {
        let fp = 1.0 / (2.0 * PI * 1e3 * 1e-6);
        let pts: Vec<(f64, f64)> = (0..=100)
            .map(|k| {
                let f = 10f64.powf(k as f64 / 20.0);
                (f, 1.0 / (1.0 + (f / fp).powi(2)).sqrt())
            })
            .collect();
        let bw = bandwidth_3db(&pts).unwrap();
        assert!((bw / 159.154_943 - 1.0).abs() < 5e-3, "{bw}");
        assert_eq!(bandwidth_3db(&[(1.0, 1.0), (10.0, 1.0)]).unwrap(), f64::INFINITY);
        assert!(matches!(bandwidth_3db(&[(1.0, 1.0)]), Err(SignalError::EmptySweep)));
    }

    #[test]
    fn two_pole_bandwidth() {
        let pts: Vec<(f64, f64)> = (0..=120)
            .map(|k| {
                let f = 10f64.powf(3.0 + k as f64 / 20.0);
                let m = 1.0 / ((1.0 + (f / 1e6).powi(2)) * (1.0 + (f / 1e9).powi(2))).sqrt();
                (f, m)
            })
            .collect();
        let bw = bandwidth_3db(&pts).unwrap();
        assert!((bw / 1e6 - 1.0).abs() < 0.02, "{bw}");
    }
}
