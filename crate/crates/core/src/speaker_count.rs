//! MODGD cepstral features and diagonal-GMM speaker-count classification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modgd::{modgd_of_flattened, ModgdConfig};
use crate::spectral::{
    cepstral_envelope, default_n_fft, flatten_spectrum, frame_signal, power_spectrum, CepstralEnvelopeConfig,
    FrameConfig, SignalBuffer, Window,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmccConfig {
    pub frame: FrameConfig,
    pub envelope: CepstralEnvelopeConfig,
    pub flatten_gamma: f64,
    pub modgd: ModgdConfig,
    pub n_filters: usize,
    pub n_coeffs: usize,
}

impl Default for SmccConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig { frame_len_ms: 20.0, hop_ms: 10.0, window: Window::Hamming },
            envelope: CepstralEnvelopeConfig::default(),
            flatten_gamma: 0.3,
            modgd: ModgdConfig::default(),
            n_filters: 40,
            n_coeffs: 20,
        }
    }
}

impl SmccConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.modgd.validate()?;
        if self.n_filters < 2 || self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return Err(Error::invalid("need at least 2 filters and 1..=n_filters coefficients"));
        }
        if !(self.flatten_gamma > 0.0 && self.flatten_gamma <= 1.0) {
            return Err(Error::invalid("flatten gamma must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel-spaced filters over `n_bins` bins spanning 0..fs/2.
pub fn mel_filterbank(n_filters: usize, n_bins: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyq = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyq);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64) / nyq * (n_bins - 1) as f64)
        .collect();
    (0..n_filters)
        .map(|j| {
            let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..n_bins)
                .map(|k| {
                    let x = k as f64;
                    if x > l && x <= c {
                        (x - l) / (c - l)
                    } else if x > c && x < r {
                        (r - x) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

const ENERGY_FLOOR: f64 = 1e-10;

fn frame_smcc(frame: &[f64], sample_rate: u32, cfg: &SmccConfig, bank: &[Vec<f64>]) -> Result<Vec<f64>> {
    let spec = power_spectrum(frame, default_n_fft(frame.len()), sample_rate)?;
    let env = cepstral_envelope(&spec, &cfg.envelope)?;
    let flat = flatten_spectrum(&spec, &env, cfg.flatten_gamma)?;
    let m = modgd_of_flattened(&flat, &cfg.modgd)?;
    let min = m.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = m.values.iter().map(|v| v - min).collect();
    let energies: Vec<f64> = bank.iter().map(|f| f.iter().zip(&shifted).map(|(w, v)| w * v).sum()).collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    let floor = (ENERGY_FLOOR * max).max(f64::MIN_POSITIVE);
    let logs: Vec<f64> = energies.iter().map(|e| e.max(floor).ln()).collect();
    Ok(dct2(&logs, cfg.n_coeffs))
}

/// One coefficient vector per frame.
pub fn smcc_features(signal: &SignalBuffer, cfg: &SmccConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let frames = frame_signal(signal, &cfg.frame)?;
    let n_bins = default_n_fft(cfg.frame.frame_len(signal.sample_rate())) / 2 + 1;
    let bank = mel_filterbank(cfg.n_filters, n_bins, signal.sample_rate());
    frames.par_iter().map(|f| frame_smcc(f, signal.sample_rate(), cfg, &bank)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub n_components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub kmeans_iter: usize,
    /// Variance floor relative to the global per-dimension variance.
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { n_components: 12, max_iter: 200, tol: 1e-6, kmeans_iter: 20, var_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub class_label: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: GmmModel,
    /// Mean per-vector log-likelihood after initialization and each EM step.
    pub log_likelihood: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Per-component log(w_k) + log N(x; μ_k, Σ_k).
    fn joint_log(&self, x: &[f64]) -> Vec<f64> {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, var))| {
                let q: f64 = x.iter().zip(mu.iter().zip(var)).map(|(xi, (m, v))| (xi - m).powi(2) / v + v.ln() + ln2pi).sum();
                w.ln() - 0.5 * q
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint_log(x))
    }

    /// Posterior component probabilities for one vector.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let j = self.joint_log(x);
        let total = log_sum_exp(&j);
        j.iter().map(|v| (v - total).exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::format("model components are inconsistent"));
        }
        let d = self.dim();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) || d == 0 {
            return Err(Error::format("model dimensions are inconsistent"));
        }
        if self.variances.iter().flatten().any(|v| !(*v > 0.0)) || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::format("model variances must be positive and weights non-negative"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::format("model weights must sum to 1"));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn kmeans(data: &[Vec<f64>], k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres: Vec<Vec<f64>> = sample(rng, data.len(), k).into_iter().map(|i| data[i].clone()).collect();
    for _ in 0..iters {
        let assign: Vec<usize> = data
            .par_iter()
            .map(|x| (0..k).min_by(|&a, &b| sq_dist(x, &centres[a]).total_cmp(&sq_dist(x, &centres[b]))).unwrap())
            .collect();
        let d = data[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centres[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    centres
}

fn mean_log_likelihood(model: &GmmModel, data: &[Vec<f64>]) -> f64 {
    let ll: Vec<f64> = data.par_iter().map(|x| model.log_likelihood(x)).collect();
    ll.iter().sum::<f64>() / data.len() as f64
}

/// k-means initialized EM on diagonal Gaussians. Fails if the likelihood
/// ever decreases beyond rounding.
pub fn gmm_train(data: &[Vec<f64>], class_label: usize, cfg: &GmmConfig) -> Result<TrainReport> {
    let k = cfg.n_components;
    if k == 0 {
        return Err(Error::invalid("need at least one mixture component"));
    }
    if data.len() < k {
        return Err(Error::invalid(format!("need at least {k} feature vectors, got {}", data.len())));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("feature vectors must share a non-zero dimension and be finite"));
    }
    let n = data.len() as f64;
    let gmean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let gvar: Vec<f64> = (0..d).map(|j| data.iter().map(|x| (x[j] - gmean[j]).powi(2)).sum::<f64>() / n).collect();
    let floor: Vec<f64> = gvar.iter().map(|v| (v * cfg.var_floor).max(1e-12)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = kmeans(data, k, cfg.kmeans_iter, &mut rng);
    let mut model = GmmModel {
        class_label,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![gvar.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect(); k],
    };
    let mut history = vec![mean_log_likelihood(&model, data)];
    for _ in 0..cfg.max_iter {
        let resp: Vec<Vec<f64>> = data.par_iter().map(|x| model.responsibilities(x)).collect();
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            model.weights[c] = nk / n;
            if nk <= 0.0 {
                continue;
            }
            let mu: Vec<f64> = (0..d).map(|j| resp.iter().zip(data).map(|(r, x)| r[c] * x[j]).sum::<f64>() / nk).collect();
            let var: Vec<f64> = (0..d)
                .map(|j| {
                    let v = resp.iter().zip(data).map(|(r, x)| r[c] * (x[j] - mu[j]).powi(2)).sum::<f64>() / nk;
                    v.max(floor[j])
                })
                .collect();
            model.means[c] = mu;
            model.variances[c] = var;
        }
        let wsum: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= wsum);
        let ll = mean_log_likelihood(&model, data);
        let prev = *history.last().unwrap();
        if ll < prev - 1e-9 * prev.abs().max(1.0) {
            return Err(Error::numerical(format!("EM log-likelihood decreased from {prev} to {ll}")));
        }
        history.push(ll);
        if (ll - prev).abs() < cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(TrainReport { model, log_likelihood: history })
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub version: u32,
    pub features: SmccConfig,
    pub classes: Vec<GmmModel>,
}

impl CountModel {
    pub fn new(features: SmccConfig, classes: Vec<GmmModel>) -> Self {
        Self { version: MODEL_VERSION, features, classes }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: CountModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported model version {}", m.version)));
        }
        if m.classes.is_empty() {
            return Err(Error::format("model file has no classes"));
        }
        m.classes.iter().try_for_each(|c| c.validate())?;
        Ok(m)
    }
}

/// Summed log-likelihood of a feature sequence per class, in class order.
pub fn class_scores(features: &[Vec<f64>], classes: &[GmmModel]) -> Result<Vec<(usize, f64)>> {
    if features.is_empty() {
        return Err(Error::invalid("empty feature sequence"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("need at least one class model"));
    }
    // Sequential summation keeps results independent of thread scheduling.
    Ok(classes
        .iter()
        .map(|m| {
            let ll: Vec<f64> = features.par_iter().map(|x| m.log_likelihood(x)).collect();
            (m.class_label, ll.iter().sum())
        })
        .collect())
}

/// Class with the highest accumulated likelihood; ties go to the smaller count.
pub fn classify(features: &[Vec<f64>], classes: &[GmmModel]) -> Result<usize> {
    let mut scores = class_scores(features, classes)?;
    scores.sort_by_key(|s| s.0);
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.1 > best.1 {
            best = *s;
        }
    }
    Ok(best.0)
}

pub fn count_speakers(signal: &SignalBuffer, model: &CountModel) -> Result<usize> {
    classify(&smcc_features(signal, &model.features)?, &model.classes)
}

/// Trains one model per (label, clips) class on pooled clip features.
pub fn train_count_model(classes: &[(usize, Vec<SignalBuffer>)], smcc: &SmccConfig, gmm: &GmmConfig) -> Result<(CountModel, Vec<TrainReport>)> {
    let reports = classes
        .par_iter()
        .map(|(label, clips)| {
            let mut data = Vec::new();
            for c in clips {
                data.extend(smcc_features(c, smcc)?);
            }
            gmm_train(&data, *label, gmm)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((CountModel::new(*smcc, reports.iter().map(|r| r.model.clone()).collect()), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const SR: u32 = 16_000;

    fn harmonic(f0: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (1..=20).map(|l| ((2.0 * std::f64::consts::PI * f0 * l as f64 * i as f64) / SR as f64).cos() / l as f64).sum())
            .collect()
    }

    #[test]
    fn features_have_configured_dimension() {
        let s = SignalBuffer::new(harmonic(150.0, 8000), SR).unwrap();
        let f = smcc_features(&s, &SmccConfig::default()).unwrap();
        assert_eq!(f.len(), 1 + (8000 - 320usize).div_ceil(160));
        assert!(f.iter().all(|v| v.len() == 20 && v.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn silent_input_gives_finite_features() {
        let s = SignalBuffer::new(vec![0.0; 1600], SR).unwrap();
        let f = smcc_features(&s, &SmccConfig::default()).unwrap();
        assert!(f.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn identical_frames_give_identical_vectors() {
        let one = harmonic(120.0, 320);
        let twice: Vec<f64> = one.iter().chain(&one).cloned().collect();
        let cfg = SmccConfig { frame: FrameConfig { frame_len_ms: 20.0, hop_ms: 20.0, window: Window::Hamming }, ..Default::default() };
        let f = smcc_features(&SignalBuffer::new(twice, SR).unwrap(), &cfg).unwrap();
        assert_eq!(f[0], f[1]);
    }

    #[test]
    fn dct_of_constant_is_dc_only() {
        let c = dct2(&[2.0; 8], 4);
        assert_relative_eq!(c[0], 2.0 * 8f64.sqrt(), epsilon = 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn filterbank_triangles_peak_at_one() {
        let bank = mel_filterbank(40, 1025, SR);
        assert_eq!(bank.len(), 40);
        for f in &bank {
            let m = f.iter().cloned().fold(0.0, f64::max);
            assert!(m > 0.5 && m <= 1.0);
        }
    }

    fn gaussian(n: usize, mean: &[f64], sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| mean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
    }

    #[test]
    fn single_component_recovers_mean() {
        let data = gaussian(2000, &[1.0, -2.0, 0.5], 0.7, 1);
        let cfg = GmmConfig { n_components: 1, ..Default::default() };
        let r = gmm_train(&data, 1, &cfg).unwrap();
        let se = 0.7 / (2000f64).sqrt();
        for (m, t) in r.model.means[0].iter().zip([1.0, -2.0, 0.5]) {
            assert!((m - t).abs() < 3.0 * se, "{m} vs {t}");
        }
    }

    #[test]
    fn em_is_monotone_and_deterministic() {
        let mut data = gaussian(300, &[0.0, 0.0], 1.0, 2);
        data.extend(gaussian(300, &[5.0, 1.0], 0.5, 3));
        let cfg = GmmConfig { n_components: 3, seed: 9, ..Default::default() };
        let a = gmm_train(&data, 2, &cfg).unwrap();
        assert!(a.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert_eq!(a, gmm_train(&data, 2, &cfg).unwrap());
        assert_relative_eq!(a.model.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        for x in &data[..20] {
            assert_relative_eq!(a.model.responsibilities(x).iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn too_few_vectors_error() {
        let data = gaussian(5, &[0.0], 1.0, 4);
        assert!(gmm_train(&data, 1, &GmmConfig::default()).is_err());
    }

    #[test]
    fn self_generated_data_picks_its_class() {
        let cfg = GmmConfig { n_components: 2, ..Default::default() };
        let a = gmm_train(&gaussian(400, &[0.0, 0.0], 1.0, 5), 1, &cfg).unwrap().model;
        let b = gmm_train(&gaussian(400, &[3.0, 3.0], 1.0, 6), 2, &cfg).unwrap().model;
        let test = gaussian(50, &[3.0, 3.0], 1.0, 7);
        assert_eq!(classify(&test, &[a.clone(), b]).unwrap(), 2);
        assert_eq!(classify(&test, &[a]).unwrap(), 1);
    }

    #[test]
    fn ties_favour_fewer_speakers() {
        let m = gmm_train(&gaussian(50, &[0.0], 1.0, 8), 2, &GmmConfig { n_components: 1, ..Default::default() }).unwrap().model;
        let mut one = m.clone();
        one.class_label = 1;
        assert_eq!(classify(&[vec![0.3]], &[m, one]).unwrap(), 1);
        assert!(classify(&[], &[]).is_err());
    }

    #[test]
    fn model_round_trips_through_json() {
        let g = gmm_train(&gaussian(50, &[0.0, 1.0], 1.0, 10), 1, &GmmConfig { n_components: 2, ..Default::default() }).unwrap().model;
        let m = CountModel::new(SmccConfig::default(), vec![g]);
        assert_eq!(CountModel::from_json(&m.to_json().unwrap()).unwrap(), m);
        let mut bad = m.clone();
        bad.version = 99;
        assert!(CountModel::from_json(&bad.to_json().unwrap()).is_err());
    }
}
