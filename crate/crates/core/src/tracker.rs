//! Grouping of frame candidates into two trajectories and post-processing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::FramePitches;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackLabel {
    High,
    Low,
}

/// Per-frame f0 in Hz; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub label: TrackLabel,
}

impl PitchTrack {
    pub fn unvoiced(len: usize, label: TrackLabel) -> Self {
        Self { f0: vec![0.0; len], label }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.f0.iter().filter(|&&f| f > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub rho: f64,
    pub max_gap_ms: f64,
    pub hop_ms: f64,
    /// Flux percentile below which a frame may be labelled single-speaker.
    pub flux_percentile: f64,
    /// Frames within which a jump must return to the trend to count as stray.
    pub confirm_frames: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { rho: 10.0, max_gap_ms: 40.0, hop_ms: 10.0, flux_percentile: 25.0, confirm_frames: 2 }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.max_gap_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::invalid("rho, max_gap_ms and hop_ms must be positive"));
        }
        if !(0.0..=100.0).contains(&self.flux_percentile) {
            return Err(Error::invalid("flux percentile must lie in [0, 100]"));
        }
        Ok(())
    }
}

/// Max of two candidates to the high track, min to the low track; a lone
/// candidate joins the track whose last voiced value is nearer (ties to
/// high, and to low when neither track has been voiced yet).
pub fn group_high_low(per_frame: &[FramePitches]) -> (PitchTrack, PitchTrack) {
    let n = per_frame.len();
    let mut high = PitchTrack::unvoiced(n, TrackLabel::High);
    let mut low = PitchTrack::unvoiced(n, TrackLabel::Low);
    let (mut last_high, mut last_low): (Option<f64>, Option<f64>) = (None, None);
    for (t, p) in per_frame.iter().enumerate() {
        match (p.f0_a, p.f0_b) {
            (Some(a), Some(b)) => {
                high.f0[t] = a.max(b);
                low.f0[t] = a.min(b);
                last_high = Some(high.f0[t]);
                last_low = Some(low.f0[t]);
            }
            (Some(f), None) | (None, Some(f)) => {
                let to_high = match (last_high, last_low) {
                    (None, None) => false,
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    (Some(h), Some(l)) => (f - h).abs() <= (f - l).abs(),
                };
                if to_high {
                    high.f0[t] = f;
                    last_high = Some(f);
                } else {
                    low.f0[t] = f;
                    last_low = Some(f);
                }
            }
            (None, None) => {}
        }
    }
    (high, low)
}

pub fn transition_cost(l_j: f64, l_prev: f64) -> f64 {
    (l_j - l_prev).abs()
}

/// Minimum total transition cost path through per-frame candidate sets,
/// solved independently per block of `block_len` frames (each block starts
/// from the previous block's final choice). Equal costs resolve toward the
/// lower candidate.
pub fn dp_group(per_frame_candidates: &[Vec<f64>], block_len: usize) -> Result<(Vec<f64>, f64)> {
    if block_len == 0 {
        return Err(Error::invalid("DP block length must be positive"));
    }
    let mut path = Vec::with_capacity(per_frame_candidates.len());
    let mut total = 0.0;
    let mut carry: Option<f64> = None;
    for block in per_frame_candidates.chunks(block_len) {
        if block.iter().any(|c| c.is_empty()) {
            return Err(Error::numerical("candidate gap in DP block"));
        }
        let (p, cost) = dp_block(block, carry);
        total += cost;
        carry = p.last().copied();
        path.extend(p);
    }
    Ok((path, total))
}

fn better(cost: f64, cand: f64, best_cost: f64, best_cand: f64) -> bool {
    cost < best_cost || (cost == best_cost && cand < best_cand)
}

fn dp_block(block: &[Vec<f64>], start: Option<f64>) -> (Vec<f64>, f64) {
    let mut cost: Vec<f64> = block[0].iter().map(|&c| start.map_or(0.0, |s| transition_cost(c, s))).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; block[0].len()]];
    for j in 1..block.len() {
        let mut next = Vec::with_capacity(block[j].len());
        let mut ptr = Vec::with_capacity(block[j].len());
        for &c in &block[j] {
            let mut best = (f64::INFINITY, f64::INFINITY, 0usize);
            for (i, &p) in block[j - 1].iter().enumerate() {
                let total = cost[i] + transition_cost(c, p);
                if better(total, p, best.0, best.1) {
                    best = (total, p, i);
                }
            }
            next.push(best.0);
            ptr.push(best.2);
        }
        cost = next;
        back.push(ptr);
    }
    let last = block.len() - 1;
    let mut idx = 0;
    for i in 1..cost.len() {
        if better(cost[i], block[last][i], cost[idx], block[last][idx]) {
            idx = i;
        }
    }
    let best_cost = cost[idx];
    let mut path = vec![0.0; block.len()];
    for j in (0..block.len()).rev() {
        path[j] = block[j][idx];
        idx = back[j][idx];
    }
    (path, best_cost)
}

/// Groups candidates by DP over lag values within each voiced run; the DP
/// path and its complement are then labelled by mean f0.
pub fn group_dp(per_frame: &[FramePitches], sample_rate: u32, block_len: usize) -> Result<(PitchTrack, PitchTrack)> {
    let n = per_frame.len();
    let fs = sample_rate as f64;
    let mut high = PitchTrack::unvoiced(n, TrackLabel::High);
    let mut low = PitchTrack::unvoiced(n, TrackLabel::Low);
    let cands: Vec<Vec<f64>> = per_frame
        .iter()
        .map(|p| {
            let mut c: Vec<f64> = [p.f0_a, p.f0_b].iter().flatten().map(|f| fs / f).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let mut t = 0;
    while t < n {
        if cands[t].is_empty() {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && !cands[t].is_empty() {
            t += 1;
        }
        let (path, _) = dp_group(&cands[start..t], block_len)?;
        let main: Vec<f64> = path.iter().map(|l| fs / l).collect();
        let other: Vec<f64> = (start..t)
            .zip(&path)
            .map(|(k, l)| cands[k].iter().find(|&&c| c != *l).map_or(0.0, |c| fs / c))
            .collect();
        let mean = |v: &[f64]| {
            let voiced: Vec<f64> = v.iter().cloned().filter(|&f| f > 0.0).collect();
            if voiced.is_empty() {
                0.0
            } else {
                voiced.iter().sum::<f64>() / voiced.len() as f64
            }
        };
        let (hi, lo) = if mean(&main) >= mean(&other) { (main, other) } else { (other, main) };
        high.f0[start..t].copy_from_slice(&hi);
        low.f0[start..t].copy_from_slice(&lo);
    }
    Ok((high, low))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    Two,
    One,
    None,
}

/// Linear-interpolated percentile of `values` (p in [0, 100]).
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    Some(if i + 1 < v.len() { v[i] + frac * (v[i + 1] - v[i]) } else { v[i] })
}

/// Labels frames as silent (energy below `energy_floor`), single-speaker
/// (flux at or below the utterance percentile and no salient second peak)
/// or two-speaker.
pub fn detect_single_or_silent(
    flux: &[f64],
    energy: &[f64],
    second_salient: &[bool],
    energy_floor: f64,
    flux_percentile: f64,
) -> Result<Vec<RegionLabel>> {
    if flux.len() != energy.len() || flux.len() != second_salient.len() {
        return Err(Error::invalid("flux, energy and salience series must have equal lengths"));
    }
    let active: Vec<f64> = flux.iter().zip(energy).filter(|(_, &e)| e >= energy_floor).map(|(&f, _)| f).collect();
    let threshold = percentile(&active, flux_percentile).unwrap_or(0.0);
    Ok((0..flux.len())
        .map(|t| {
            if energy[t] < energy_floor {
                RegionLabel::None
            } else if flux[t] <= threshold && !second_salient[t] {
                RegionLabel::One
            } else {
                RegionLabel::Two
            }
        })
        .collect())
}

/// Replaces stray values by interpolation and bridges short unvoiced gaps.
///
/// A voiced value more than `rho` from the previous voiced value is stray
/// when a voiced value within `rho` of that previous value follows within
/// `confirm_frames` frames; otherwise it is a genuine jump and becomes the
/// new reference. Unvoiced gaps shorter than `max_gap_ms` between voiced
/// frames are linearly interpolated; longer ones stay unvoiced.
pub fn remove_strays(track: &PitchTrack, cfg: &PostprocessConfig) -> PitchTrack {
    remove_strays_with_mask(track, cfg).0
}

/// Upper bound on stray-removal passes; bridged gaps can expose new strays,
/// so passes repeat until the track stops changing.
const MAX_STRAY_PASSES: usize = 16;

/// As [`remove_strays`], also returning which input frames were classified stray.
pub fn remove_strays_with_mask(track: &PitchTrack, cfg: &PostprocessConfig) -> (PitchTrack, Vec<bool>) {
    let (mut out, mut mask) = stray_pass(track, cfg);
    for _ in 1..MAX_STRAY_PASSES {
        let (next, m) = stray_pass(&out, cfg);
        if next == out {
            break;
        }
        mask.iter_mut().zip(&m).for_each(|(a, b)| *a |= *b);
        out = next;
    }
    (out, mask)
}

fn stray_pass(track: &PitchTrack, cfg: &PostprocessConfig) -> (PitchTrack, Vec<bool>) {
    let f = &track.f0;
    let n = f.len();
    let max_gap_frames = (cfg.max_gap_ms / cfg.hop_ms - 1e-9).ceil().max(0.0) as usize;
    let mut work = f.clone();
    let mut stray = vec![false; n];
    let mut prev: Option<(usize, f64)> = None;
    let mut t = 0;
    while t < n {
        if work[t] <= 0.0 {
            t += 1;
            continue;
        }
        if let Some((pi, pv)) = prev {
            let bridged = t - pi - 1 < max_gap_frames;
            if bridged && (work[t] - pv).abs() > cfg.rho {
                let ret = (t + 1..=(t + cfg.confirm_frames).min(n - 1))
                    .find(|&k| work[k] > 0.0 && (work[k] - pv).abs() <= cfg.rho);
                if let Some(r) = ret {
                    for k in t..r {
                        if work[k] > 0.0 {
                            stray[k] = true;
                            work[k] = 0.0;
                        }
                    }
                    prev = Some((r, work[r]));
                    t = r + 1;
                    continue;
                }
            }
        }
        prev = Some((t, work[t]));
        t += 1;
    }
    let mut out = work.clone();
    let mut t = 0;
    while t < n {
        if out[t] > 0.0 {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && out[t] <= 0.0 {
            t += 1;
        }
        if start == 0 || t == n {
            continue;
        }
        let len = t - start;
        let has_stray = stray[start..t].iter().any(|&s| s);
        let all_stray = stray[start..t].iter().all(|&s| s);
        if len < max_gap_frames || (has_stray && all_stray) {
            let (a, b) = (out[start - 1], out[t]);
            for k in start..t {
                let w = (k - start + 1) as f64 / (len + 1) as f64;
                out[k] = a + w * (b - a);
            }
        }
    }
    (PitchTrack { f0: out, label: track.label }, stray)
}

/// Swaps values wherever both tracks are voiced and the high track is lower.
pub fn enforce_order(high: &mut PitchTrack, low: &mut PitchTrack) {
    for (h, l) in high.f0.iter_mut().zip(low.f0.iter_mut()) {
        if *h > 0.0 && *l > 0.0 && *h < *l {
            std::mem::swap(h, l);
        }
    }
}
