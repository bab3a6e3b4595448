//! Group delay, modified group delay and lag-window peak picking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{cepstral_smooth, FlattenedSpectrum};

/// Relative floor for squared magnitudes and MODGD denominators.
pub const GD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModgdConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lifter_len: usize,
}

impl Default for ModgdConfig {
    fn default() -> Self {
        Self { alpha: 0.9, gamma: 0.4, lifter_len: 30 }
    }
}

impl ModgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("modgd alpha must lie in (0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("modgd gamma must lie in (0, 1]"));
        }
        if self.lifter_len == 0 {
            return Err(Error::invalid("modgd lifter length must be at least 1"));
        }
        Ok(())
    }
}

/// MODGD values over lag bins; `lag_unit` is seconds per bin (1.0 when the
/// input was not a flattened spectrum).
#[derive(Debug, Clone, PartialEq)]
pub struct ModgdVector {
    pub values: Vec<f64>,
    pub lag_unit: f64,
}

impl ModgdVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Real and imaginary parts of the transforms of x[n] and n·x[n] over the
/// half spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct GdParts {
    pub x_r: Vec<f64>,
    pub x_i: Vec<f64>,
    pub y_r: Vec<f64>,
    pub y_i: Vec<f64>,
}

impl GdParts {
    pub fn compute(x: &[f64]) -> Self {
        let n = x.len();
        let half = n / 2 + 1;
        let xs = fft::real_forward(x, n);
        let weighted: Vec<f64> = x.iter().enumerate().map(|(i, v)| i as f64 * v).collect();
        let ys = fft::real_forward(&weighted, n);
        let take = half.min(n);
        Self {
            x_r: xs[..take].iter().map(|c| c.re).collect(),
            x_i: xs[..take].iter().map(|c| c.im).collect(),
            y_r: ys[..take].iter().map(|c| c.re).collect(),
            y_i: ys[..take].iter().map(|c| c.im).collect(),
        }
    }

    pub fn numerator(&self) -> Vec<f64> {
        (0..self.x_r.len()).map(|k| self.x_r[k] * self.y_r[k] + self.x_i[k] * self.y_i[k]).collect()
    }

    pub fn magnitude_sq(&self) -> Vec<f64> {
        (0..self.x_r.len()).map(|k| self.x_r[k].powi(2) + self.x_i[k].powi(2)).collect()
    }
}

/// Group delay in samples over the half spectrum of an `x.len()`-point transform.
pub fn group_delay(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("group delay needs a non-empty sequence"));
    }
    let parts = GdParts::compute(x);
    let num = parts.numerator();
    let mag2 = parts.magnitude_sq();
    let floor = GD_FLOOR * mag2.iter().cloned().fold(0.0, f64::max);
    Ok(num
        .iter()
        .zip(&mag2)
        .map(|(n, m)| if *m > floor && *m > 0.0 { n / m } else { 0.0 })
        .collect())
}

pub fn modified_group_delay(x: &[f64], cfg: &ModgdConfig) -> Result<ModgdVector> {
    if x.is_empty() {
        return Err(Error::invalid("modified group delay needs a non-empty sequence"));
    }
    cfg.validate()?;
    let parts = GdParts::compute(x);
    let num = parts.numerator();
    let mag: Vec<f64> = parts.magnitude_sq().iter().map(|m| m.sqrt()).collect();
    let smooth = cepstral_smooth(&mag, cfg.lifter_len)?;
    let mut den: Vec<f64> = smooth.iter().map(|s| s.powf(2.0 * cfg.gamma)).collect();
    let floor = GD_FLOOR * den.iter().cloned().fold(0.0, f64::max);
    den.iter_mut().for_each(|d| *d = d.max(floor));
    let values = num
        .iter()
        .zip(&den)
        .map(|(n, d)| {
            let t = if *d > 0.0 { n / d } else { 0.0 };
            t.signum() * t.abs().powf(cfg.alpha)
        })
        .map(|v: f64| if v.is_finite() { v } else { 0.0 })
        .collect();
    Ok(ModgdVector { values, lag_unit: 1.0 })
}

/// Even-symmetric (circular) extension of a half spectrum to its full length.
pub fn symmetric_extension(half: &[f64]) -> Vec<f64> {
    if half.len() < 2 {
        return half.to_vec();
    }
    half.iter().cloned().chain(half[1..half.len() - 1].iter().rev().cloned()).collect()
}

/// MODGD of a flattened spectrum; lag bin m corresponds to m samples.
pub fn modgd_of_flattened(flat: &FlattenedSpectrum, cfg: &ModgdConfig) -> Result<ModgdVector> {
    let mut v = modified_group_delay(&symmetric_extension(&flat.values), cfg)?;
    v.lag_unit = 1.0 / (flat.n_fft as f64 * flat.bin_width);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: f64,
    pub value: f64,
}

/// Largest strict local maximum in `[lag_lo, lag_hi]`, parabolically refined.
pub fn pick_peak(v: &[f64], lag_lo: usize, lag_hi: usize) -> Result<Option<Peak>> {
    if !(lag_lo < lag_hi && lag_hi < v.len()) {
        return Err(Error::invalid(format!(
            "invalid lag range [{lag_lo}, {lag_hi}] for vector of length {}",
            v.len()
        )));
    }
    let mut best: Option<usize> = None;
    for k in lag_lo.max(1)..=lag_hi.min(v.len() - 2) {
        if v[k] > v[k - 1] && v[k] > v[k + 1] && best.is_none_or(|b| v[k] > v[b]) {
            best = Some(k);
        }
    }
    Ok(best.map(|k| parabolic(v, k)))
}

/// Three-point parabolic refinement around interior index `k`.
pub fn parabolic(v: &[f64], k: usize) -> Peak {
    let (a, b, c) = (v[k - 1], v[k], v[k + 1]);
    let den = a - 2.0 * b + c;
    if den != 0.0 {
        let delta = 0.5 * (a - c) / den;
        Peak { bin: k as f64 + delta, value: b - 0.25 * (a - c) * delta }
    } else {
        Peak { bin: k as f64, value: b }
    }
}
