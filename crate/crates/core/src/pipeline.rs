//! End-to-end two-pitch estimation over an utterance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Grouping, PipelineConfig};
use crate::error::Result;
use crate::io::PitchTable;
use crate::pitch::{analyze_frame, FrameAnalysis, FramePitches};
use crate::spectral::{frame_signal, spectral_flux, SignalBuffer};
use crate::tracker::{detect_single_or_silent, enforce_order, group_dp, group_high_low, remove_strays, PitchTrack, RegionLabel};

/// Per-frame intermediates for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    pub sample_rate: u32,
    pub bin_width: f64,
    pub times: Vec<f64>,
    pub flux: Vec<f64>,
    pub flatness: Vec<f64>,
    pub labels: Vec<RegionLabel>,
    pub candidates: Vec<FramePitches>,
    pub power_db: Vec<Vec<f64>>,
    pub flattened: Vec<Vec<f64>>,
    /// Lag-domain vectors, truncated just past the longest searched lag.
    pub modgd_first: Vec<Vec<f64>>,
    pub modgd_second: Vec<Vec<f64>>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub times: Vec<f64>,
    pub high: PitchTrack,
    pub low: PitchTrack,
    pub labels: Vec<RegionLabel>,
    pub candidates: Vec<FramePitches>,
    pub intermediates: Option<Intermediates>,
}

impl Estimate {
    pub fn to_table(&self) -> PitchTable {
        PitchTable { times: self.times.clone(), columns: vec![self.high.f0.clone(), self.low.f0.clone()] }
    }
}

fn splice_regions(analyses: &[FrameAnalysis], labels: &[RegionLabel]) -> Vec<FramePitches> {
    analyses
        .iter()
        .zip(labels)
        .map(|(a, l)| match l {
            RegionLabel::None => FramePitches::default(),
            RegionLabel::One => FramePitches { f0_b: None, salience_b: 0.0, ..a.pitches },
            RegionLabel::Two => a.pitches,
        })
        .collect()
}

/// Frame analysis in parallel, flux-based region labelling, grouping into
/// high/low tracks, stray removal and order enforcement.
pub fn estimate(signal: &SignalBuffer, cfg: &PipelineConfig, dump: bool) -> Result<Estimate> {
    let sr = signal.sample_rate();
    let cfg = cfg.finalize(sr)?;
    let frames = frame_signal(signal, &cfg.frame)?;
    let analyses: Vec<FrameAnalysis> =
        frames.par_iter().map(|f| analyze_frame(f, sr, &cfg.engine, dump)).collect::<Result<_>>()?;
    let n = analyses.len();
    let times: Vec<f64> = (0..n).map(|k| cfg.frame.frame_time(k, sr)).collect();

    let mut flux = vec![0.0; n];
    for t in 1..n {
        flux[t] = spectral_flux(&analyses[t].spectrum, &analyses[t - 1].spectrum)?;
    }
    let energy: Vec<f64> = frames.iter().map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt()).collect();
    let second: Vec<bool> = analyses.iter().map(|a| a.pitches.f0_b.is_some()).collect();
    let labels = detect_single_or_silent(&flux, &energy, &second, cfg.engine.silence_rms, cfg.post.flux_percentile)?;
    let candidates = splice_regions(&analyses, &labels);

    let (mut high, mut low) = match cfg.grouping {
        Grouping::HighLow => group_high_low(&candidates),
        Grouping::Dp => group_dp(&candidates, sr, cfg.dp_block)?,
    };
    if !cfg.raw_tracks {
        high = remove_strays(&high, &cfg.post);
        low = remove_strays(&low, &cfg.post);
    }
    enforce_order(&mut high, &mut low);

    let intermediates = dump.then(|| {
        let keep = cfg.engine.range.lag_window(sr).1 + 2;
        let cut = |v: &Option<Vec<f64>>| v.as_ref().map_or_else(Vec::new, |v| v[..keep.min(v.len())].to_vec());
        Intermediates {
            sample_rate: sr,
            bin_width: analyses.first().map_or(0.0, |a| a.spectrum.bin_width),
            times: times.clone(),
            flux: flux.clone(),
            flatness: analyses.iter().map(|a| a.flatness).collect(),
            labels: labels.clone(),
            candidates: candidates.clone(),
            power_db: analyses
                .iter()
                .map(|a| a.spectrum.bins.iter().map(|b| 10.0 * b.max(1e-20).log10()).collect())
                .collect(),
            flattened: analyses.iter().map(|a| a.flattened.as_ref().map_or_else(Vec::new, |f| f.values.clone())).collect(),
            modgd_first: analyses.iter().map(|a| cut(&a.modgd_first)).collect(),
            modgd_second: analyses.iter().map(|a| cut(&a.modgd_second)).collect(),
            high: high.f0.clone(),
            low: low.f0.clone(),
        }
    });
    Ok(Estimate { times, high, low, labels, candidates, intermediates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{mix_tmr, synth_harmonic, SyntheticSource};

    fn two_tone_mixture() -> SignalBuffer {
        let a = synth_harmonic(&SyntheticSource::constant(200.0, 5, 2.0), 16_000).unwrap();
        let b = synth_harmonic(&SyntheticSource::constant(280.0, 5, 2.0), 16_000).unwrap();
        mix_tmr(&a, &b, 0.0).unwrap().mixture
    }

    #[test]
    fn two_constant_sources_give_two_tracks() {
        let e = estimate(&two_tone_mixture(), &PipelineConfig::default(), false).unwrap();
        assert_eq!(e.times.len(), 198);
        let near = |v: &[f64], f: f64| v.iter().filter(|&&x| (x - f).abs() < 0.1 * f).count();
        assert!(near(&e.high.f0, 280.0) >= 190, "{:?}", e.high.f0);
        assert!(near(&e.low.f0, 200.0) >= 190, "{:?}", e.low.f0);
    }

    #[test]
    fn silence_is_unvoiced() {
        let s = SignalBuffer::new(vec![0.0; 8000], 16_000).unwrap();
        let e = estimate(&s, &PipelineConfig::default(), false).unwrap();
        assert!(e.high.f0.iter().chain(&e.low.f0).all(|&f| f == 0.0));
        assert!(e.labels.iter().all(|&l| l == RegionLabel::None));
    }

    #[test]
    fn high_track_is_never_below_low() {
        let e = estimate(&two_tone_mixture(), &PipelineConfig { grouping: Grouping::Dp, ..Default::default() }, false).unwrap();
        for (h, l) in e.high.f0.iter().zip(&e.low.f0) {
            assert!(*h == 0.0 || *l == 0.0 || h >= l);
        }
    }

    #[test]
    fn dump_holds_one_entry_per_frame() {
        let s = SignalBuffer::new(two_tone_mixture().samples()[..4000].to_vec(), 16_000).unwrap();
        let e = estimate(&s, &PipelineConfig::default(), true).unwrap();
        let d = e.intermediates.unwrap();
        assert_eq!(d.times.len(), e.times.len());
        assert_eq!(d.modgd_first.len(), e.times.len());
        assert_eq!(d.modgd_first[5].len(), 269);
    }
}
