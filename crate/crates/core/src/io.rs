//! WAV audio and plain-text pitch files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::SignalBuffer;

/// Reads a WAV file (integer PCM or float), averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<SignalBuffer> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<std::result::Result<_, _>>()?
        }
    };
    let mono = interleaved.chunks(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect();
    SignalBuffer::new(mono, spec.sample_rate)
}

/// Writes 16-bit mono PCM. Signals peaking above 0.99 full scale are scaled
/// down uniformly; the applied gain is returned.
pub fn write_wav(path: &Path, signal: &SignalBuffer) -> Result<f64> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let peak = signal.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.99 { 0.99 / peak } else { 1.0 };
    let mut w = hound::WavWriter::create(path, spec)?;
    for s in signal.samples() {
        w.write_sample((s * gain * 32767.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(gain)
}

/// Time-stamped rows of f0 values (Hz, 0 = unvoiced).
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTable {
    pub times: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl PitchTable {
    pub fn new(times: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.iter().any(|c| c.len() != times.len()) {
            return Err(Error::invalid("pitch columns must match the time axis"));
        }
        Ok(Self { times, columns })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_text(&self, header: &str) -> String {
        let mut s = format!("# {header}\n");
        for (i, t) in self.times.iter().enumerate() {
            write!(s, "{t:.4}").unwrap();
            for c in &self.columns {
                write!(s, " {:.3}", c[i]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Parses whitespace-separated rows, skipping blank and `#` lines.
    pub fn parse(text: &str, n_columns: usize) -> Result<Self> {
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); n_columns];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::format(format!("line {}: bad number {v:?}", ln + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != n_columns + 1 {
                return Err(Error::format(format!("line {}: expected {} fields, found {}", ln + 1, n_columns + 1, vals.len())));
            }
            if vals[1..].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::format(format!("line {}: f0 values must be finite and non-negative", ln + 1)));
            }
            times.push(vals[0]);
            for (c, v) in columns.iter_mut().zip(&vals[1..]) {
                c.push(*v);
            }
        }
        Ok(Self { times, columns })
    }

    pub fn read(path: &Path, n_columns: usize) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, n_columns)
    }

    pub fn write(&self, path: &Path, header: &str) -> Result<()> {
        std::fs::write(path, self.to_text(header))?;
        Ok(())
    }
}

pub const TRAJECTORY_HEADER: &str = "time_sec f0_track1_hz f0_track2_hz";
pub const REFERENCE_HEADER: &str = "time_sec f0_hz";
