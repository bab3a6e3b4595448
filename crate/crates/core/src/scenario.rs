//! Scenario files describing synthetic sources and interference, rendered
//! deterministically from a single seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{parse_f64, parse_kv, parse_num};
use crate::error::{Error, Result};
use crate::mixture::{add_noise, apply_reverb, gen_rir, jittered_contour, mix_tmr, synth_harmonic, NoiseConfig, NoiseKind, RirConfig, SyntheticSource};
use crate::spectral::{FrameConfig, SignalBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseScheme {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmplitudeScheme {
    /// 1/l roll-off.
    Inverse,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub f0: f64,
    /// Peak relative contour deviation (0.05 = ±5%).
    pub jitter: f64,
    /// 0 selects every harmonic below 0.45·fs.
    pub harmonics: usize,
    pub phases: PhaseScheme,
    pub amplitudes: AmplitudeScheme,
}

impl SourceSpec {
    pub fn new(f0: f64) -> Self {
        Self { f0, jitter: 0.0, harmonics: 0, phases: PhaseScheme::Zero, amplitudes: AmplitudeScheme::Inverse }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sample_rate: u32,
    pub duration: f64,
    pub seed: u64,
    pub sources: Vec<SourceSpec>,
    pub tmr_db: f64,
    pub noise: Option<NoiseKind>,
    pub snr_db: f64,
    /// 0 disables reverberation.
    pub t60_ms: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration: 2.0,
            seed: 0,
            sources: Vec::new(),
            tmr_db: 0.0,
            noise: None,
            snr_db: f64::INFINITY,
            t60_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub mixture: SignalBuffer,
    /// Sources as they appear in the mixture (after TMR scaling, before
    /// reverberation and noise).
    pub sources: Vec<SignalBuffer>,
    /// Commanded f0 per source on the analysis frame-centre grid.
    pub references: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

const CONTOUR_HOP: f64 = 0.01;

impl Scenario {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some((head, field)) = key.split_once('.') {
            let idx: usize = head
                .strip_prefix("source")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::format(format!("unknown scenario key {key:?}")))?;
            while self.sources.len() < idx {
                self.sources.push(SourceSpec::new(0.0));
            }
            let s = &mut self.sources[idx - 1];
            match field {
                "f0" => s.f0 = parse_f64(key, value)?,
                "jitter" => s.jitter = parse_f64(key, value)?,
                "harmonics" => s.harmonics = parse_num(key, value)?,
                "phases" => {
                    s.phases = match value {
                        "zero" => PhaseScheme::Zero,
                        "random" => PhaseScheme::Random,
                        _ => return Err(Error::format(format!("{key}: unknown {value:?}"))),
                    }
                }
                "amplitudes" => {
                    s.amplitudes = match value {
                        "inverse" => AmplitudeScheme::Inverse,
                        "flat" => AmplitudeScheme::Flat,
                        _ => return Err(Error::format(format!("{key}: unknown {value:?}"))),
                    }
                }
                _ => return Err(Error::format(format!("unknown scenario key {key:?}"))),
            }
            return Ok(());
        }
        match key {
            "sample_rate" => self.sample_rate = parse_num(key, value)?,
            "duration" => self.duration = parse_f64(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "tmr_db" => self.tmr_db = parse_f64(key, value)?,
            "noise" => {
                self.noise = match value {
                    "none" => None,
                    "white" => Some(NoiseKind::White),
                    "babble" => Some(NoiseKind::Babble),
                    _ => return Err(Error::format(format!("noise: unknown {value:?}"))),
                }
            }
            "snr_db" => self.snr_db = parse_f64(key, value)?,
            "t60_ms" => self.t60_ms = parse_f64(key, value)?,
            _ => return Err(Error::format(format!("unknown scenario key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (k, v) in parse_kv(text)? {
            s.set(&k, &v)?;
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.sources.len() > 2 {
            return Err(Error::invalid("scenario needs one or two sources"));
        }
        if self.sample_rate == 0 || !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("sample rate and duration must be positive"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(s.f0 > 0.0 && s.f0.is_finite()) {
                return Err(Error::invalid(format!("source{} needs a positive f0", i + 1)));
            }
            if !(0.0..1.0).contains(&s.jitter) {
                return Err(Error::invalid(format!("source{} jitter must lie in [0, 1)", i + 1)));
            }
        }
        if !self.tmr_db.is_finite() || self.snr_db.is_nan() || !(self.t60_ms >= 0.0 && self.t60_ms.is_finite()) {
            return Err(Error::invalid("tmr_db must be finite, snr_db a number and t60_ms non-negative"));
        }
        Ok(())
    }

    fn build_source(&self, spec: &SourceSpec, rng: &mut ChaCha8Rng) -> SyntheticSource {
        let contour = if spec.jitter > 0.0 {
            jittered_contour(spec.f0, spec.jitter, self.duration, CONTOUR_HOP, rng)
        } else {
            vec![spec.f0]
        };
        let max_f0 = contour.iter().cloned().fold(0.0, f64::max);
        let n = if spec.harmonics == 0 {
            SyntheticSource::full_band_harmonics(max_f0, self.sample_rate, 0.45)
        } else {
            spec.harmonics
        };
        let amplitudes = (1..=n)
            .map(|l| match spec.amplitudes {
                AmplitudeScheme::Inverse => 1.0 / l as f64,
                AmplitudeScheme::Flat => 1.0,
            })
            .collect();
        let phases = (0..n)
            .map(|_| match spec.phases {
                PhaseScheme::Zero => 0.0,
                PhaseScheme::Random => rng.random_range(0.0..2.0 * std::f64::consts::PI),
            })
            .collect();
        SyntheticSource { f0_contour: contour, contour_hop_s: CONTOUR_HOP, amplitudes, phases, duration: self.duration }
    }

    /// Renders sources, mixes at the TMR, then applies reverberation
    /// (truncated to the dry length) and noise.
    pub fn render(&self, frame: &FrameConfig) -> Result<Rendered> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let specs: Vec<SyntheticSource> = self.sources.iter().map(|s| self.build_source(s, &mut rng)).collect();
        let noise_seed: u64 = rng.random();
        let rir_seed: u64 = rng.random();
        let dry: Vec<SignalBuffer> = specs.iter().map(|s| synth_harmonic(s, self.sample_rate)).collect::<Result<_>>()?;

        let (mut mixture, sources) = if dry.len() == 2 {
            let m = mix_tmr(&dry[0], &dry[1], self.tmr_db)?;
            let sr = self.sample_rate;
            (m.mixture, vec![SignalBuffer::new(m.target, sr)?, SignalBuffer::new(m.masker, sr)?])
        } else {
            (dry[0].clone(), dry.clone())
        };
        if self.t60_ms > 0.0 {
            let h = gen_rir(&RirConfig { t60: self.t60_ms / 1000.0, seed: rir_seed, length: None }, self.sample_rate)?;
            let wet = apply_reverb(&mixture, &h)?;
            mixture = SignalBuffer::new(wet.samples()[..mixture.len()].to_vec(), self.sample_rate)?;
        }
        if let Some(kind) = self.noise {
            mixture = add_noise(&mixture, &NoiseConfig { kind, snr_db: self.snr_db, seed: noise_seed })?;
        }

        let n_frames = frame.frame_count(mixture.len(), self.sample_rate);
        let times: Vec<f64> = (0..n_frames).map(|k| frame.frame_time(k, self.sample_rate)).collect();
        let references = specs
            .iter()
            .map(|s| times.iter().map(|&t| if t < self.duration { s.f0_at(t) } else { 0.0 }).collect())
            .collect();
        Ok(Rendered { mixture, sources, references, times })
    }
}
