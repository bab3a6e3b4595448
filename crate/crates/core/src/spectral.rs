//! Framing, power spectra, cepstral smoothing, flattening and spectral flux.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Relative floor applied to spectra before taking logarithms.
pub const SPECTRAL_FLOOR: f64 = 1e-10;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("signal contains non-finite samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude (0 for an empty buffer).
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hamming => {
                if n == 1 {
                    return vec![1.0];
                }
                let denom = (n - 1) as f64;
                (0..n)
                    .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub window: Window,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { frame_len_ms: 30.0, hop_ms: 10.0, window: Window::Hamming }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.frame_len_ms) {
            return Err(Error::invalid("frame config requires 0 < hop_ms <= frame_len_ms"));
        }
        Ok(())
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    /// Number of frames covering `len` samples; the last one may be zero-padded.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        if len == 0 {
            return 0;
        }
        let fl = self.frame_len(sample_rate);
        let hop = self.hop(sample_rate);
        1 + len.saturating_sub(fl).div_ceil(hop)
    }

    /// Centre time of frame `k` in seconds.
    pub fn frame_time(&self, k: usize, sample_rate: u32) -> f64 {
        let fl = self.frame_len(sample_rate) as f64;
        (k as f64 * self.hop(sample_rate) as f64 + fl / 2.0) / sample_rate as f64
    }
}

fn raw_frames(signal: &SignalBuffer, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::invalid("empty input"));
    }
    let sr = signal.sample_rate();
    let fl = cfg.frame_len(sr);
    if fl < 2 {
        return Err(Error::invalid("frame length must be at least 2 samples"));
    }
    let hop = cfg.hop(sr);
    let x = signal.samples();
    Ok((0..cfg.frame_count(x.len(), sr))
        .map(|k| {
            let start = k * hop;
            let end = (start + fl).min(x.len());
            let mut f = x[start..end].to_vec();
            f.resize(fl, 0.0);
            f
        })
        .collect())
}

/// Splits the signal into windowed frames starting at multiples of the hop.
pub fn frame_signal(signal: &SignalBuffer, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    let mut frames = raw_frames(signal, cfg)?;
    let fl = cfg.frame_len(signal.sample_rate());
    let w = cfg.window.coefficients(fl);
    for f in &mut frames {
        f.iter_mut().zip(&w).for_each(|(s, c)| *s *= c);
    }
    Ok(frames)
}

/// Root-mean-square of each unwindowed frame.
pub fn frame_rms(signal: &SignalBuffer, cfg: &FrameConfig) -> Result<Vec<f64>> {
    Ok(raw_frames(signal, cfg)?.iter().map(|f| mean_power(f).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub bins: Vec<f64>,
    pub bin_width: f64,
    pub n_fft: usize,
}

/// Smallest power of two at least four times the frame length.
pub fn default_n_fft(frame_len: usize) -> usize {
    (4 * frame_len.max(1)).next_power_of_two()
}

pub fn power_spectrum(frame: &[f64], n_fft: usize, sample_rate: u32) -> Result<PowerSpectrum> {
    if n_fft < frame.len() {
        return Err(Error::invalid(format!(
            "n_fft {n_fft} is shorter than the frame length {}",
            frame.len()
        )));
    }
    if n_fft < 2 {
        return Err(Error::invalid("n_fft must be at least 2"));
    }
    let spec = fft::real_forward(frame, n_fft);
    Ok(PowerSpectrum {
        bins: spec[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect(),
        bin_width: sample_rate as f64 / n_fft as f64,
        n_fft,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CepstralEnvelopeConfig {
    pub lifter_len: usize,
}

impl Default for CepstralEnvelopeConfig {
    fn default() -> Self {
        Self { lifter_len: 30 }
    }
}

/// Cepstrally smoothed version of a non-negative half spectrum.
///
/// The half spectrum (length `m/2 + 1`) is floored, logged, mirrored to the
/// full even-symmetric length `m`, liftered to quefrencies below
/// `lifter_len` and exponentiated back. A lifter covering half the cepstrum
/// reproduces the floored input.
pub fn cepstral_smooth(half: &[f64], lifter_len: usize) -> Result<Vec<f64>> {
    if lifter_len == 0 {
        return Err(Error::invalid("lifter length must be at least 1"));
    }
    let n = half.len();
    let max = half.iter().cloned().fold(0.0, f64::max);
    if n < 2 || max <= 0.0 {
        return Ok(vec![if max > 0.0 { max } else { 1.0 }; n]);
    }
    let floor = SPECTRAL_FLOOR * max;
    let m = 2 * (n - 1);
    let mut buf: Vec<Complex64> = (0..m)
        .map(|k| {
            let idx = if k < n { k } else { m - k };
            Complex64::new(half[idx].max(floor).ln(), 0.0)
        })
        .collect();
    fft::inverse(&mut buf);
    for (q, c) in buf.iter_mut().enumerate() {
        let quef = q.min(m - q);
        if quef >= lifter_len {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= m as f64;
        }
    }
    fft::forward(&mut buf);
    Ok(buf[..n].iter().map(|c| c.re.exp()).collect())
}

pub fn cepstral_envelope(spec: &PowerSpectrum, cfg: &CepstralEnvelopeConfig) -> Result<Vec<f64>> {
    cepstral_smooth(&spec.bins, cfg.lifter_len)
}

/// Source-emphasized, zero-mean spectrum treated as a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedSpectrum {
    pub values: Vec<f64>,
    pub bin_width: f64,
    pub flatten_gamma: f64,
    pub n_fft: usize,
}

pub fn flatten_spectrum(spec: &PowerSpectrum, env: &[f64], gamma: f64) -> Result<FlattenedSpectrum> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid("flatten gamma must lie in (0, 1]"));
    }
    if env.len() != spec.bins.len() {
        return Err(Error::invalid("envelope length differs from spectrum length"));
    }
    if env.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("envelope must be strictly positive"));
    }
    let mut values: Vec<f64> = spec.bins.iter().zip(env).map(|(b, e)| (b / e).powf(gamma)).collect();
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    Ok(FlattenedSpectrum { values, bin_width: spec.bin_width, flatten_gamma: gamma, n_fft: spec.n_fft })
}

/// Ratio of geometric to arithmetic mean of the (floored) power spectrum:
/// near 0.56 for white noise, near 0 for harmonic frames.
pub fn spectral_flatness(spec: &PowerSpectrum) -> f64 {
    let max = spec.bins.iter().cloned().fold(0.0, f64::max);
    if spec.bins.is_empty() || max <= 0.0 {
        return 1.0;
    }
    let floor = SPECTRAL_FLOOR * max;
    let n = spec.bins.len() as f64;
    let log_mean = spec.bins.iter().map(|b| b.max(floor).ln()).sum::<f64>() / n;
    let mean = spec.bins.iter().map(|b| b.max(floor)).sum::<f64>() / n;
    log_mean.exp() / mean
}

fn normalized_magnitude(spec: &PowerSpectrum) -> Vec<f64> {
    let mag: Vec<f64> = spec.bins.iter().map(|b| b.sqrt()).collect();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        mag.iter().map(|m| m / max).collect()
    } else {
        mag
    }
}

/// Squared difference of unit-maximum magnitude spectra of adjacent frames.
pub fn spectral_flux(cur: &PowerSpectrum, prev: &PowerSpectrum) -> Result<f64> {
    if cur.bins.len() != prev.bins.len() {
        return Err(Error::invalid("spectral flux needs spectra of equal length"));
    }
    let a = normalized_magnitude(cur);
    let b = normalized_magnitude(prev);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum())
}
