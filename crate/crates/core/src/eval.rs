//! Voiced-frame accuracy and fine pitch error statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Correct-frame threshold (percent) for the fine pitch statistics.
pub const FINE_THRESHOLD: f64 = 10.0;

fn check_aligned(det: &[f64], reference: &[f64]) -> Result<()> {
    if det.len() != reference.len() {
        return Err(Error::invalid(format!(
            "detected ({}) and reference ({}) grids differ in length",
            det.len(),
            reference.len()
        )));
    }
    if reference.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::invalid("reference values must be finite and non-negative"));
    }
    Ok(())
}

fn is_hit(det: f64, reference: f64, p: f64) -> bool {
    det > 0.0 && (det - reference).abs() / reference < p / 100.0
}

/// Percentage of reference-voiced frames whose detection deviates by less than p percent.
/// A frame detected as unvoiced counts as a miss.
pub fn accuracy(det: &[f64], reference: &[f64], p: f64) -> Result<f64> {
    check_aligned(det, reference)?;
    let mut voiced = 0usize;
    let mut hits = 0usize;
    for (&d, &r) in det.iter().zip(reference) {
        if r > 0.0 {
            voiced += 1;
            if is_hit(d, r, p) {
                hits += 1;
            }
        }
    }
    if voiced == 0 {
        return Err(Error::invalid("empty evaluation set"));
    }
    Ok(100.0 * hits as f64 / voiced as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineStats {
    /// Mean of det − ref over correct frames.
    pub mean_error: f64,
    pub std_error: f64,
    pub n_correct: usize,
}

/// Mean and standard deviation of det − ref over frames within p percent.
pub fn fine_pitch_stats(det: &[f64], reference: &[f64], p: f64) -> Result<FineStats> {
    check_aligned(det, reference)?;
    let errs: Vec<f64> = det
        .iter()
        .zip(reference)
        .filter(|(&d, &r)| r > 0.0 && is_hit(d, r, p))
        .map(|(d, r)| d - r)
        .collect();
    if errs.is_empty() {
        return Err(Error::invalid("no correct pitch frames"));
    }
    let n = errs.len() as f64;
    let e = errs.iter().sum::<f64>() / n;
    let mean_sq = errs.iter().map(|x| x * x).sum::<f64>() / n;
    Ok(FineStats { mean_error: e, std_error: (mean_sq - e * e).max(0.0).sqrt(), n_correct: errs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_10: f64,
    pub accuracy_20: f64,
    /// Standard deviation of the fine error; `None` when no frame is within 10%.
    pub e_fs: Option<f64>,
    pub mean_fine_error: Option<f64>,
    pub n_voiced: usize,
}

pub fn evaluate(det: &[f64], reference: &[f64]) -> Result<EvalReport> {
    let accuracy_10 = accuracy(det, reference, 10.0)?;
    let accuracy_20 = accuracy(det, reference, 20.0)?;
    let fine = fine_pitch_stats(det, reference, FINE_THRESHOLD).ok();
    Ok(EvalReport {
        accuracy_10,
        accuracy_20,
        e_fs: fine.map(|f| f.std_error),
        mean_fine_error: fine.map(|f| f.mean_error),
        n_voiced: reference.iter().filter(|&&r| r > 0.0).count(),
    })
}

/// Mean absolute error over reference-voiced frames, unvoiced detections as 0 Hz.
pub fn mean_abs_error(det: &[f64], reference: &[f64]) -> Result<f64> {
    check_aligned(det, reference)?;
    let errs: Vec<f64> = det.iter().zip(reference).filter(|(_, &r)| r > 0.0).map(|(d, r)| (d - r).abs()).collect();
    if errs.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// Report per reference speaker.
    pub speakers: [EvalReport; 2],
    /// `assignment[j]` is the detected track index matched to reference j.
    pub assignment: [usize; 2],
}

/// Matches two detected tracks to two references by the permutation with the
/// smaller summed mean absolute error (identity on ties), then scores each pair.
pub fn score_pair(det: [&[f64]; 2], reference: [&[f64]; 2]) -> Result<PairReport> {
    let cost = |a: usize, b: usize| -> Result<f64> {
        Ok(mean_abs_error(det[a], reference[0])? + mean_abs_error(det[b], reference[1])?)
    };
    let assignment = if cost(1, 0)? < cost(0, 1)? { [1, 0] } else { [0, 1] };
    Ok(PairReport {
        speakers: [evaluate(det[assignment[0]], reference[0])?, evaluate(det[assignment[1]], reference[1])?],
        assignment,
    })
}
