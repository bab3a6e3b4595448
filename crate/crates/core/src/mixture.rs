//! Synthetic sources, TMR mixing, additive noise and stochastic reverberation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{mean_power, SignalBuffer};

/// Harmonic source: f0 contour sampled every `contour_hop_s` seconds from t = 0
/// (linearly interpolated in between), per-harmonic amplitudes and phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub f0_contour: Vec<f64>,
    pub contour_hop_s: f64,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub duration: f64,
}

impl SyntheticSource {
    /// Constant-f0 source with 1/l amplitudes and cosine phase.
    pub fn constant(f0: f64, num_harmonics: usize, duration: f64) -> Self {
        Self {
            f0_contour: vec![f0],
            contour_hop_s: 0.01,
            amplitudes: (1..=num_harmonics).map(|l| 1.0 / l as f64).collect(),
            phases: vec![0.0; num_harmonics],
            duration,
        }
    }

    /// Largest harmonic count keeping every partial below `max_fraction`·fs.
    pub fn full_band_harmonics(max_f0: f64, sample_rate: u32, max_fraction: f64) -> usize {
        ((max_fraction * sample_rate as f64 / max_f0).floor() as usize).max(1)
    }

    pub fn num_harmonics(&self) -> usize {
        self.amplitudes.len()
    }

    /// Instantaneous f0 at time `t` seconds.
    pub fn f0_at(&self, t: f64) -> f64 {
        let c = &self.f0_contour;
        if c.len() == 1 || t <= 0.0 {
            return c[0];
        }
        let pos = t / self.contour_hop_s;
        let i = pos.floor() as usize;
        if i + 1 >= c.len() {
            return *c.last().unwrap();
        }
        let w = pos - i as f64;
        c[i] * (1.0 - w) + c[i + 1] * w
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.f0_contour.is_empty() || self.amplitudes.is_empty() {
            return Err(Error::invalid("source needs an f0 contour and at least one harmonic"));
        }
        if self.phases.len() != self.amplitudes.len() {
            return Err(Error::invalid("source needs one phase per harmonic"));
        }
        if !(self.contour_hop_s > 0.0 && self.duration >= 0.0) {
            return Err(Error::invalid("contour hop must be positive and duration non-negative"));
        }
        if self.f0_contour.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::invalid("f0 contour values must be positive"));
        }
        if self.amplitudes.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::invalid("harmonic amplitudes must be positive"));
        }
        let max_f0 = self.f0_contour.iter().cloned().fold(0.0, f64::max);
        if max_f0 * self.num_harmonics() as f64 >= sample_rate as f64 / 2.0 {
            return Err(Error::invalid(format!(
                "aliasing: {} harmonics of {max_f0} Hz reach the Nyquist frequency",
                self.num_harmonics()
            )));
        }
        Ok(())
    }
}

/// Sum of A_l cos(l·θ(t) + φ_l) with θ the integrated instantaneous f0.
pub fn synth_harmonic(src: &SyntheticSource, sample_rate: u32) -> Result<SignalBuffer> {
    src.validate(sample_rate)?;
    let fs = sample_rate as f64;
    let n = (src.duration * fs).round() as usize;
    let mut theta = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = 0.0;
        for (l, (a, ph)) in src.amplitudes.iter().zip(&src.phases).enumerate() {
            v += a * ((l + 1) as f64 * theta + ph).cos();
        }
        out.push(v);
        theta += 2.0 * std::f64::consts::PI * src.f0_at(i as f64 / fs) / fs;
        theta %= 2.0 * std::f64::consts::PI;
    }
    SignalBuffer::new(out, sample_rate)
}

/// Smooth relative contour f0·(1 + depth·s(t)) where s is a normalized sum
/// of three slow sinusoids with seeded rates (0.5-3 Hz) and phases.
pub fn jittered_contour(f0: f64, depth: f64, duration: f64, hop_s: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = (duration / hop_s).ceil() as usize + 1;
    let comps: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.5..3.0), rng.random_range(0.0..2.0 * std::f64::consts::PI)))
        .collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * hop_s;
            comps.iter().map(|(r, p)| (2.0 * std::f64::consts::PI * r * t + p).sin()).sum::<f64>()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.iter().map(|v| f0 * (1.0 + depth * if peak > 0.0 { v / peak } else { 0.0 })).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub mixture: SignalBuffer,
    pub target: Vec<f64>,
    pub masker: Vec<f64>,
}

/// Mixes at the requested target-to-masker ratio. The masker (looped or
/// truncated to the target length) is rescaled to set the ratio; both
/// components then share one gain so their powers sum to the original total.
pub fn mix_tmr(target: &SignalBuffer, masker: &SignalBuffer, tmr_db: f64) -> Result<MixResult> {
    if target.sample_rate() != masker.sample_rate() {
        return Err(Error::invalid("target and masker sample rates differ"));
    }
    if !tmr_db.is_finite() {
        return Err(Error::invalid("TMR must be finite"));
    }
    if masker.is_empty() || masker.power() <= 0.0 {
        return Err(Error::invalid("masker has zero power"));
    }
    let n = target.len();
    let m: Vec<f64> = masker.samples().iter().cycle().take(n).cloned().collect();
    let pt = target.power();
    let pm = mean_power(&m);
    if pt <= 0.0 || pm <= 0.0 {
        return Err(Error::invalid("target and masker need positive power over the overlap"));
    }
    let g = (pt / (pm * 10f64.powf(tmr_db / 10.0))).sqrt();
    let common = ((pt + pm) / (pt + g * g * pm)).sqrt();
    let t: Vec<f64> = target.samples().iter().map(|v| v * common).collect();
    let m: Vec<f64> = m.iter().map(|v| v * g * common).collect();
    let mix: Vec<f64> = t.iter().zip(&m).map(|(a, b)| a + b).collect();
    Ok(MixResult { mixture: SignalBuffer::new(mix, target.sample_rate())?, target: t, masker: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    White,
    Babble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// `f64::INFINITY` means no noise.
    pub snr_db: f64,
    pub seed: u64,
}

/// Number of independent talker-like streams summed into babble.
pub const BABBLE_STREAMS: usize = 8;

fn babble(n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; n];
    for _ in 0..BABBLE_STREAMS {
        let f0 = rng.random_range(90.0..250.0);
        let hop = 0.01;
        let contour = jittered_contour(f0, 0.15, n as f64 / fs + 1.0, hop, rng);
        let harmonics = SyntheticSource::full_band_harmonics(f0 * 1.15, sample_rate, 0.45);
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI)).collect();
        let tilt: Vec<f64> = (1..=harmonics).map(|l| 1.0 / l as f64).collect();
        let src = SyntheticSource {
            f0_contour: contour,
            contour_hop_s: hop,
            amplitudes: tilt,
            phases,
            duration: n as f64 / fs + 1.0,
        };
        let stream = synth_harmonic(&src, sample_rate).expect("babble stream parameters are valid");
        let shift = rng.random_range(0..(fs as usize).max(1));
        let rate = rng.random_range(3.0..6.0);
        let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        for (i, o) in out.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let env = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * rate * t + phase).sin());
            *o += env * env * stream.samples()[i + shift];
        }
    }
    out
}

/// Adds noise scaled so the realized noise power sits exactly `snr_db`
/// below the signal power.
pub fn add_noise(signal: &SignalBuffer, cfg: &NoiseConfig) -> Result<SignalBuffer> {
    if cfg.snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !cfg.snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite or +inf"));
    }
    let n = signal.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = match cfg.kind {
        NoiseKind::White => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::Babble => babble(n, signal.sample_rate(), &mut rng),
    };
    let pn = mean_power(&noise);
    let ps = signal.power();
    let gain = if pn > 0.0 { (ps / (pn * 10f64.powf(cfg.snr_db / 10.0))).sqrt() } else { 0.0 };
    let out = signal.samples().iter().zip(&noise).map(|(s, w)| s + gain * w).collect();
    SignalBuffer::new(out, signal.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirConfig {
    pub t60: f64,
    pub seed: u64,
    /// Response length in samples; `None` covers exactly t60.
    pub length: Option<usize>,
}

impl RirConfig {
    /// Decay rate giving a 60 dB energy drop after t60.
    pub fn delta(&self, sample_rate: u32) -> f64 {
        3.0 * std::f64::consts::LN_10 / (self.t60 * sample_rate as f64)
    }
}

/// h[n] = b[n]·exp(−δn) with b white Gaussian.
pub fn gen_rir(cfg: &RirConfig, sample_rate: u32) -> Result<Vec<f64>> {
    if !(cfg.t60 > 0.0 && cfg.t60.is_finite()) {
        return Err(Error::invalid("t60 must be positive"));
    }
    let min_len = (cfg.t60 * sample_rate as f64).ceil() as usize + 1;
    let len = cfg.length.unwrap_or(min_len).max(min_len);
    let delta = cfg.delta(sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..len).map(|n| rng.sample::<f64, _>(StandardNormal) * (-delta * n as f64).exp()).collect())
}

/// Direct O(N·M) linear convolution.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, xv) in x.iter().enumerate() {
        for (j, hv) in h.iter().enumerate() {
            y[i + j] += xv * hv;
        }
    }
    y
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut a = fft::real_forward(x, n);
    let b = fft::real_forward(h, n);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    fft::inverse(&mut a);
    a.iter().take(out_len).map(|c: &Complex64| c.re / n as f64).collect()
}

/// Full linear convolution r = s ∗ h (length N + M − 1).
pub fn apply_reverb(signal: &SignalBuffer, h: &[f64]) -> Result<SignalBuffer> {
    let y = if signal.len().saturating_mul(h.len()) <= 1 << 16 {
        convolve_direct(signal.samples(), h)
    } else {
        convolve_fft(signal.samples(), h)
    };
    SignalBuffer::new(y, signal.sample_rate())
}
