//! Flat `key=value` configuration for the whole pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::EngineConfig;
use crate::speaker_count::{GmmConfig, SmccConfig};
use crate::spectral::{FrameConfig, Window};
use crate::tracker::PostprocessConfig;

/// Parses `key = value` lines; `#` starts a comment. Later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("line {}: expected key=value, found {line:?}", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::format(format!("line {}: empty key", ln + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::format(format!("{key}: cannot parse {value:?}")))
}

/// Parses an f64 accepting `inf`/`-inf`.
pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if v.is_nan() {
        return Err(Error::format(format!("{key}: NaN is not allowed")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    HighLow,
    Dp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub frame: FrameConfig,
    pub engine: EngineConfig,
    pub post: PostprocessConfig,
    pub grouping: Grouping,
    pub dp_block: usize,
    /// Skip stray removal and gap interpolation.
    pub raw_tracks: bool,
    pub smcc: SmccConfig,
    pub gmm: GmmConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            engine: EngineConfig::default(),
            post: PostprocessConfig::default(),
            grouping: Grouping::HighLow,
            dp_block: 50,
            raw_tracks: false,
            smcc: SmccConfig::default(),
            gmm: GmmConfig::default(),
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "frame_len_ms", "hop_ms", "window", "n_fft", "lifter", "flatten_gamma", "alpha", "gamma", "modgd_lifter", "fmin", "fmax",
    "alpha_c", "max_flatness", "second_pass_ratio", "silence_rms", "rho", "max_gap_ms", "flux_percentile", "confirm_frames",
    "grouping", "dp_block", "raw_tracks", "smcc_frame_len_ms", "smcc_hop_ms", "smcc_filters", "smcc_coeffs", "gmm_components",
    "gmm_max_iter", "gmm_tol", "seed",
];

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = || parse_f64(key, value);
        match key {
            "frame_len_ms" => self.frame.frame_len_ms = f()?,
            "hop_ms" => self.frame.hop_ms = f()?,
            "window" => {
                self.frame.window = match value {
                    "hamming" => Window::Hamming,
                    "rectangular" => Window::Rectangular,
                    _ => return Err(Error::format(format!("window: unknown {value:?}"))),
                }
            }
            "n_fft" => self.engine.n_fft = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "lifter" => self.engine.envelope.lifter_len = parse_num(key, value)?,
            "flatten_gamma" => self.engine.flatten_gamma = f()?,
            "alpha" => self.engine.modgd.alpha = f()?,
            "gamma" => self.engine.modgd.gamma = f()?,
            "modgd_lifter" => self.engine.modgd.lifter_len = parse_num(key, value)?,
            "fmin" => self.engine.range.f_min = f()?,
            "fmax" => self.engine.range.f_max = f()?,
            "alpha_c" => self.engine.alpha_c = f()?,
            "max_flatness" => self.engine.max_flatness = f()?,
            "second_pass_ratio" => self.engine.second_pass_ratio = f()?,
            "silence_rms" => self.engine.silence_rms = f()?,
            "rho" => self.post.rho = f()?,
            "max_gap_ms" => self.post.max_gap_ms = f()?,
            "flux_percentile" => self.post.flux_percentile = f()?,
            "confirm_frames" => self.post.confirm_frames = parse_num(key, value)?,
            "grouping" => {
                self.grouping = match value {
                    "high_low" => Grouping::HighLow,
                    "dp" => Grouping::Dp,
                    _ => return Err(Error::format(format!("grouping: unknown {value:?}"))),
                }
            }
            "dp_block" => self.dp_block = parse_num(key, value)?,
            "raw_tracks" => self.raw_tracks = parse_num(key, value)?,
            "smcc_frame_len_ms" => self.smcc.frame.frame_len_ms = f()?,
            "smcc_hop_ms" => self.smcc.frame.hop_ms = f()?,
            "smcc_filters" => self.smcc.n_filters = parse_num(key, value)?,
            "smcc_coeffs" => self.smcc.n_coeffs = parse_num(key, value)?,
            "gmm_components" => self.gmm.n_components = parse_num(key, value)?,
            "gmm_max_iter" => self.gmm.max_iter = parse_num(key, value)?,
            "gmm_tol" => self.gmm.tol = f()?,
            "seed" => {
                self.seed = parse_num(key, value)?;
                self.gmm.seed = self.seed;
            }
            _ => return Err(Error::format(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Validates every sub-configuration and keeps the post-processing hop in
    /// step with the analysis hop.
    pub fn finalize(mut self, sample_rate: u32) -> Result<Self> {
        self.post.hop_ms = self.frame.hop_ms;
        self.frame.validate()?;
        self.engine.validate(sample_rate)?;
        self.post.validate()?;
        self.smcc.validate()?;
        if self.dp_block == 0 {
            return Err(Error::invalid("dp_block must be positive"));
        }
        Ok(self)
    }
}
