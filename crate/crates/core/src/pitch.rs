//! Two-pass per-frame pitch estimation with comb annihilation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modgd::{modgd_of_flattened, parabolic, pick_peak, ModgdConfig, Peak};
use crate::spectral::{
    cepstral_envelope, default_n_fft, flatten_spectrum, mean_power, power_spectrum, spectral_flatness,
    CepstralEnvelopeConfig,
    FlattenedSpectrum, PowerSpectrum,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchRange {
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for PitchRange {
    fn default() -> Self {
        Self { f_min: 60.0, f_max: 400.0 }
    }
}

impl PitchRange {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max < sample_rate as f64 / 2.0) {
            return Err(Error::invalid("pitch range requires 0 < f_min < f_max < sample_rate/2"));
        }
        Ok(())
    }

    /// Lag window in samples: [floor(fs/f_max), ceil(fs/f_min)].
    pub fn lag_window(&self, sample_rate: u32) -> (usize, usize) {
        let fs = sample_rate as f64;
        ((fs / self.f_max).floor() as usize, (fs / self.f_min).ceil() as usize)
    }

    pub fn contains(&self, f0: f64) -> bool {
        f0 >= self.f_min && f0 <= self.f_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombConfig {
    pub alpha_c: f64,
    pub delay: usize,
}

/// Closed-form magnitude of H(z) = 1 + alpha_c z^-D at frequency `omega`.
pub fn comb_magnitude(omega: f64, cfg: &CombConfig) -> f64 {
    let a = cfg.alpha_c;
    (1.0 + a * a + 2.0 * a * (omega * cfg.delay as f64).cos()).max(0.0).sqrt()
}

/// Runs the FIR comb along the flattened spectrum with a delay equal to the
/// harmonic spacing of `f0` in bins, then removes the mean.
pub fn comb_annihilate(flat: &FlattenedSpectrum, f0: f64, alpha_c: f64) -> Result<FlattenedSpectrum> {
    if flat.values.is_empty() {
        return Err(Error::invalid("empty flattened spectrum"));
    }
    if !(-1.0..=1.0).contains(&alpha_c) {
        return Err(Error::invalid("comb gain must satisfy |alpha_c| <= 1"));
    }
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::invalid("comb pitch must be positive"));
    }
    let d = (f0 / flat.bin_width).round() as usize;
    if d == 0 {
        return Err(Error::numerical("pitch below spectral resolution"));
    }
    let x = &flat.values;
    let mut y: Vec<f64> = (0..x.len()).map(|n| if n >= d { x[n] + alpha_c * x[n - d] } else { x[n] }).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    Ok(FlattenedSpectrum { values: y, ..flat.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FramePitches {
    pub f0_a: Option<f64>,
    pub f0_b: Option<f64>,
    pub salience_a: f64,
    pub salience_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Transform size; `None` selects the next power of two >= 4x frame length.
    pub n_fft: Option<usize>,
    pub envelope: CepstralEnvelopeConfig,
    pub flatten_gamma: f64,
    pub modgd: ModgdConfig,
    pub range: PitchRange,
    pub alpha_c: f64,
    /// Pass-1 voicing: frames whose spectral flatness exceeds this are unvoiced.
    pub max_flatness: f64,
    /// Pass-2 voicing: minimum residual peak relative to the pass-1 peak.
    pub second_pass_ratio: f64,
    /// Frames whose RMS is below this level are silent.
    pub silence_rms: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_fft: None,
            envelope: CepstralEnvelopeConfig::default(),
            flatten_gamma: 0.3,
            modgd: ModgdConfig::default(),
            range: PitchRange::default(),
            alpha_c: -0.98,
            max_flatness: 0.4,
            second_pass_ratio: 0.1,
            silence_rms: 1e-4,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.range.validate(sample_rate)?;
        self.modgd.validate()?;
        if !(self.flatten_gamma > 0.0 && self.flatten_gamma <= 1.0) {
            return Err(Error::invalid("flatten gamma must lie in (0, 1]"));
        }
        if !(-1.0..0.0).contains(&self.alpha_c) {
            return Err(Error::invalid("comb gain must lie in [-1, 0)"));
        }
        if self.envelope.lifter_len == 0 {
            return Err(Error::invalid("envelope lifter length must be at least 1"));
        }
        if !(self.max_flatness >= 0.0 && self.second_pass_ratio >= 0.0 && self.silence_rms >= 0.0) {
            return Err(Error::invalid("voicing thresholds must be non-negative"));
        }
        Ok(())
    }

    pub fn n_fft_for(&self, frame_len: usize) -> usize {
        self.n_fft.unwrap_or_else(|| default_n_fft(frame_len)).max(frame_len)
    }
}

/// Per-frame pitches plus the intermediates behind them.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub pitches: FramePitches,
    pub spectrum: PowerSpectrum,
    pub flattened: Option<FlattenedSpectrum>,
    pub modgd_first: Option<Vec<f64>>,
    pub modgd_second: Option<Vec<f64>>,
    pub flatness: f64,
}

pub fn flatten_frame(frame: &[f64], sample_rate: u32, cfg: &EngineConfig) -> Result<(PowerSpectrum, FlattenedSpectrum)> {
    let spec = power_spectrum(frame, cfg.n_fft_for(frame.len()), sample_rate)?;
    let env = cepstral_envelope(&spec, &cfg.envelope)?;
    let flat = flatten_spectrum(&spec, &env, cfg.flatten_gamma)?;
    Ok((spec, flat))
}

fn lag_to_f0(bin: f64, lag_unit: f64) -> f64 {
    1.0 / (bin * lag_unit)
}

struct FirstPass {
    peak: Option<Peak>,
    modgd: Vec<f64>,
    lag_unit: f64,
}

fn first_pass(flat: &FlattenedSpectrum, sample_rate: u32, cfg: &EngineConfig) -> Result<FirstPass> {
    let m = modgd_of_flattened(flat, &cfg.modgd)?;
    let (lo, hi) = cfg.range.lag_window(sample_rate);
    if hi >= m.len() {
        return Err(Error::invalid("pitch range exceeds the lag resolution of the transform"));
    }
    let peak = pick_peak(&m.values, lo, hi)?.filter(|p| p.value > 0.0);
    Ok(FirstPass { peak, modgd: m.values, lag_unit: m.lag_unit })
}

fn in_range(f0: f64, cfg: &EngineConfig) -> Option<f64> {
    // Parabolic refinement can step marginally past the lag window edges.
    let r = cfg.range;
    (f0 >= r.f_min * 0.98 && f0 <= r.f_max * 1.02).then(|| f0.clamp(r.f_min, r.f_max))
}

/// The comb tilts the residual's lag axis, biasing broad peaks; when the
/// untouched pass-1 vector has a local maximum within two bins of the
/// residual peak, its refined location is used instead.
fn relocate_on_first_pass(first: &[f64], bin: f64, lo: usize, hi: usize) -> Peak {
    let k = bin.round().max(0.0) as usize;
    let lo_k = k.saturating_sub(2).max(lo).max(1);
    let hi_k = (k + 2).min(hi).min(first.len().saturating_sub(2));
    let best = (lo_k..=hi_k)
        .filter(|&j| first[j] > first[j - 1] && first[j] > first[j + 1])
        .max_by(|&a, &b| first[a].total_cmp(&first[b]));
    match best {
        Some(j) => parabolic(first, j),
        None => Peak { bin, value: first[k.min(first.len() - 1)] },
    }
}

/// Full two-pass analysis of one windowed frame.
pub fn analyze_frame(frame: &[f64], sample_rate: u32, cfg: &EngineConfig, keep: bool) -> Result<FrameAnalysis> {
    cfg.validate(sample_rate)?;
    let (spectrum, flat) = flatten_frame(frame, sample_rate, cfg)?;
    let silent = mean_power(frame).sqrt() < cfg.silence_rms;
    let mut out = FrameAnalysis {
        pitches: FramePitches::default(),
        spectrum,
        flattened: None,
        modgd_first: None,
        modgd_second: None,
        flatness: 1.0,
    };
    out.flatness = spectral_flatness(&out.spectrum);
    if silent || out.flatness > cfg.max_flatness {
        if keep {
            out.flattened = Some(flat);
        }
        return Ok(out);
    }
    let first = first_pass(&flat, sample_rate, cfg)?;
    let (lo, hi) = cfg.range.lag_window(sample_rate);
    if let Some(p1) = first.peak {
        if let Some(f0_a) = in_range(lag_to_f0(p1.bin, first.lag_unit), cfg) {
            out.pitches.f0_a = Some(f0_a);
            out.pitches.salience_a = p1.value;
            let residual = comb_annihilate(&flat, f0_a, cfg.alpha_c)?;
            let second = modgd_of_flattened(&residual, &cfg.modgd)?;
            if let Some(p2) = pick_peak(&second.values, lo, hi)? {
                let located = relocate_on_first_pass(&first.modgd, p2.bin, lo, hi);
                let f0_b = in_range(lag_to_f0(located.bin, second.lag_unit), cfg);
                if let (true, Some(f0_b)) = (p2.value >= cfg.second_pass_ratio * p1.value, f0_b) {
                    out.pitches.f0_b = Some(f0_b);
                    out.pitches.salience_b = located.value.min(p1.value);
                }
            }
            if keep {
                out.modgd_second = Some(second.values);
            }
        }
    }
    if keep {
        out.flattened = Some(flat);
        out.modgd_first = Some(first.modgd);
    }
    Ok(out)
}

pub fn estimate_frame_pitches(frame: &[f64], sample_rate: u32, cfg: &EngineConfig) -> Result<FramePitches> {
    Ok(analyze_frame(frame, sample_rate, cfg, false)?.pitches)
}

/// Pass-1 estimate only.
pub fn estimate_monopitch(frame: &[f64], sample_rate: u32, cfg: &EngineConfig) -> Result<Option<f64>> {
    cfg.validate(sample_rate)?;
    if mean_power(frame).sqrt() < cfg.silence_rms {
        return Ok(None);
    }
    let (spec, flat) = flatten_frame(frame, sample_rate, cfg)?;
    if spectral_flatness(&spec) > cfg.max_flatness {
        return Ok(None);
    }
    let first = first_pass(&flat, sample_rate, cfg)?;
    Ok(first.peak.and_then(|p| in_range(lag_to_f0(p.bin, first.lag_unit), cfg)))
}
