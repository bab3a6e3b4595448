use copitch::eval::{accuracy, fine_pitch_stats, score_pair};
use copitch::mixture::{add_noise, mix_tmr, synth_harmonic, NoiseConfig, NoiseKind, SyntheticSource};
use copitch::modgd::{group_delay, modified_group_delay, pick_peak, ModgdConfig};
use copitch::pitch::{comb_annihilate, estimate_frame_pitches, EngineConfig};
use copitch::speaker_count::{classify, gmm_train, smcc_features, GmmConfig, SmccConfig};
use copitch::spectral::{
    cepstral_smooth, flatten_spectrum, power_spectrum, cepstral_envelope, CepstralEnvelopeConfig, FlattenedSpectrum,
    SignalBuffer, Window,
};
use copitch::tracker::{dp_group, enforce_order, group_high_low, remove_strays, remove_strays_with_mask, PitchTrack, PostprocessConfig, TrackLabel};
use copitch::pitch::FramePitches;
use proptest::prelude::*;

const SR: u32 = 16_000;

fn frame_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Coefficients of Π(1 − z_i z⁻¹) for zeros strictly inside the unit circle.
fn min_phase(zeros: &[(f64, f64)]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &(r, theta) in zeros {
        // Conjugate pair: 1 − 2r cosθ z⁻¹ + r² z⁻².
        let f = [1.0, -2.0 * r * theta.cos(), r * r];
        let mut next = vec![0.0; c.len() + 2];
        for (i, a) in c.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        c = next;
    }
    c
}

fn zeros_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.1f64..0.8, 0.1f64..3.0), 1..4)
}

fn padded(x: &[f64], n: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(n, 0.0);
    v
}

fn two_pitch_frame(f1: f64, f2: f64, phases: &[f64]) -> Vec<f64> {
    let w = Window::Hamming.coefficients(480);
    (0..480)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let mut v = 0.0;
            for (k, f0) in [f1, f2].iter().enumerate() {
                let n = (7200.0 / f0) as usize;
                for l in 1..=n {
                    v += (2.0 * std::f64::consts::PI * f0 * l as f64 * t + phases[(k * 7 + l) % phases.len()]).cos() / l as f64;
                }
            }
            v * w[i]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn hamming_window_never_adds_energy(x in frame_strategy(480)) {
        let w = Window::Hamming.coefficients(480);
        let windowed: f64 = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
        prop_assert!(windowed <= x.iter().map(|a| a * a).sum::<f64>());
    }

    #[test]
    fn power_spectrum_satisfies_parseval(x in frame_strategy(480)) {
        let p = power_spectrum(&x, 2048, SR).unwrap();
        let b = &p.bins;
        let full = b[0] + b[1024] + 2.0 * b[1..1024].iter().sum::<f64>();
        let time = 2048.0 * x.iter().map(|a| a * a).sum::<f64>();
        prop_assert!((full - time).abs() <= 1e-6 * time);
    }

    #[test]
    fn flattened_spectrum_is_zero_mean(x in frame_strategy(480), gamma in 0.1f64..1.0) {
        let p = power_spectrum(&x, 2048, SR).unwrap();
        let env = cepstral_envelope(&p, &CepstralEnvelopeConfig::default()).unwrap();
        let f = flatten_spectrum(&p, &env, gamma).unwrap();
        let max = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
        prop_assert!(mean.abs() < 1e-9 * max);
    }

    #[test]
    fn envelope_is_idempotent(x in frame_strategy(480), lifter in 5usize..60) {
        let p = power_spectrum(&x, 2048, SR).unwrap();
        let once = cepstral_smooth(&p.bins, lifter).unwrap();
        let twice = cepstral_smooth(&once, lifter).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs());
        }
    }

    #[test]
    fn gamma_toward_one_approaches_group_delay(zeros in zeros_strategy()) {
        let x = padded(&min_phase(&zeros), 64);
        let gd = group_delay(&x).unwrap();
        let mut last = f64::INFINITY;
        for gamma in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let m = modified_group_delay(&x, &ModgdConfig { alpha: 1.0, gamma, lifter_len: 64 }).unwrap();
            let d = m.values.iter().zip(&gd).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
            prop_assert!(d <= last * (1.0 + 1e-9) + 1e-12, "gamma {} gave {} after {}", gamma, d, last);
            last = d;
        }
        prop_assert!(last < 1e-6);
    }

    #[test]
    fn peak_location_is_scale_invariant(v in prop::collection::vec(-5.0f64..5.0, 64), c in 1e-3f64..1e3) {
        let a = pick_peak(&v, 5, 58).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let b = pick_peak(&scaled, 5, 58).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a.bin - b.bin).abs() < 1e-9),
            (None, None) => {}
            _ => prop_assert!(false, "peak existence changed under scaling"),
        }
    }

    #[test]
    fn modgd_peak_is_scale_invariant(zeros in zeros_strategy(), c in 1e-2f64..1e2) {
        let x = padded(&min_phase(&zeros), 128);
        let cfg = ModgdConfig::default();
        let a = modified_group_delay(&x, &cfg).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = modified_group_delay(&xs, &cfg).unwrap();
        let pa = pick_peak(&a.values, 2, 60).unwrap().map(|p| p.bin);
        let pb = pick_peak(&b.values, 2, 60).unwrap().map(|p| p.bin);
        match (pa, pb) {
            (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-6),
            (None, None) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn group_delay_is_additive_under_convolution(z1 in zeros_strategy(), z2 in zeros_strategy()) {
        let a = min_phase(&z1);
        let b = min_phase(&z2);
        let mut conv = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                conv[i + j] += x * y;
            }
        }
        let n = 64;
        let (ga, gb, gc) = (group_delay(&padded(&a, n)).unwrap(), group_delay(&padded(&b, n)).unwrap(), group_delay(&padded(&conv, n)).unwrap());
        for k in 0..ga.len() {
            let sum = ga[k] + gb[k];
            prop_assert!((gc[k] - sum).abs() <= 1e-3 * sum.abs().max(1.0), "bin {}: {} vs {}", k, gc[k], sum);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn frame_pitches_ignore_amplitude(f1 in 100.0f64..140.0, f2 in 180.0f64..240.0, c in 1e-2f64..1e2,
                                      phases in prop::collection::vec(0.0f64..6.28, 16)) {
        let x = two_pitch_frame(f1, f2, &phases);
        let cfg = EngineConfig::default();
        let a = estimate_frame_pitches(&x, SR, &cfg).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = estimate_frame_pitches(&xs, SR, &cfg).unwrap();
        let close = |p: Option<f64>, q: Option<f64>| match (p, q) {
            (Some(p), Some(q)) => (p - q).abs() < 1e-6,
            (None, None) => true,
            _ => false,
        };
        prop_assert!(close(a.f0_a, b.f0_a) && close(a.f0_b, b.f0_b), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn prominent_pitch_has_the_larger_salience(f1 in 90.0f64..200.0, f2 in 150.0f64..350.0,
                                              phases in prop::collection::vec(0.0f64..6.28, 16)) {
        let p = estimate_frame_pitches(&two_pitch_frame(f1, f2, &phases), SR, &EngineConfig::default()).unwrap();
        if p.f0_a.is_some() && p.f0_b.is_some() {
            prop_assert!(p.salience_a >= p.salience_b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn comb_cancels_periodic_sequences_exactly(d in 2usize..60, period in prop::collection::vec(-50i32..50, 60)) {
        let mut p: Vec<f64> = period[..d].iter().map(|&v| v as f64).collect();
        let s: f64 = p[..d - 1].iter().sum();
        p[d - 1] = -s;
        let values: Vec<f64> = (0..1025).map(|n| p[n % d]).collect();
        let bin_width = SR as f64 / 2048.0;
        let flat = FlattenedSpectrum { values, bin_width, flatten_gamma: 1.0, n_fft: 2048 };
        let y = comb_annihilate(&flat, d as f64 * bin_width, -1.0).unwrap();
        prop_assert!(y.values[d..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grouped_tracks_stay_ordered(cands in prop::collection::vec((prop::option::of(60.0f64..400.0), prop::option::of(60.0f64..400.0)), 1..80)) {
        let frames: Vec<FramePitches> = cands.iter().map(|&(a, b)| FramePitches { f0_a: a, f0_b: b, ..Default::default() }).collect();
        let (mut h, mut l) = group_high_low(&frames);
        let post = PostprocessConfig::default();
        h = remove_strays(&h, &post);
        l = remove_strays(&l, &post);
        enforce_order(&mut h, &mut l);
        for (a, b) in h.f0.iter().zip(&l.f0) {
            prop_assert!(*a == 0.0 || *b == 0.0 || a >= b);
        }
    }

    #[test]
    fn dp_matches_exhaustive_search(cands in prop::collection::vec(prop::collection::vec(50.0f64..300.0, 1..=3), 1..=6)) {
        let (path, cost) = dp_group(&cands, cands.len()).unwrap();
        let mut best = f64::INFINITY;
        let total: usize = cands.iter().map(Vec::len).product();
        for mut code in 0..total {
            let mut seq = Vec::new();
            for c in &cands {
                seq.push(c[code % c.len()]);
                code /= c.len();
            }
            best = best.min(seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum());
        }
        prop_assert!((cost - best).abs() <= 1e-9 * best.max(1.0));
        let path_cost: f64 = path.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        prop_assert!((path_cost - cost).abs() <= 1e-9 * cost.max(1.0));
    }

    #[test]
    fn stray_removal_is_idempotent(f in prop::collection::vec(prop_oneof![Just(0.0), 80.0f64..120.0, 190.0f64..320.0], 0..60)) {
        let t = PitchTrack { f0: f, label: TrackLabel::Low };
        let cfg = PostprocessConfig::default();
        let once = remove_strays(&t, &cfg);
        prop_assert_eq!(remove_strays(&once, &cfg), once);
    }

    #[test]
    fn only_strays_are_moved(f in prop::collection::vec(prop_oneof![Just(0.0), 80.0f64..120.0, 190.0f64..320.0], 0..60)) {
        let t = PitchTrack { f0: f.clone(), label: TrackLabel::High };
        let cfg = PostprocessConfig::default();
        let (out, stray) = remove_strays_with_mask(&t, &cfg);
        for k in 0..f.len() {
            if f[k] > 0.0 && !stray[k] {
                prop_assert!((out.f0[k] - f[k]).abs() <= cfg.rho);
            }
        }
    }

    #[test]
    fn accuracy_is_monotone_in_threshold(pairs in prop::collection::vec((0.0f64..400.0, 50.0f64..400.0), 1..100), p1 in 0.0f64..50.0, dp in 0.0f64..50.0) {
        let (det, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(accuracy(&det, &r, p1).unwrap() <= accuracy(&det, &r, p1 + dp).unwrap());
    }

    #[test]
    fn fine_spread_matches_two_pass_oracle(pairs in prop::collection::vec((50.0f64..400.0, -0.09f64..0.09), 1..100)) {
        let r: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let det: Vec<f64> = pairs.iter().map(|p| p.0 * (1.0 + p.1)).collect();
        let stats = fine_pitch_stats(&det, &r, 10.0).unwrap();
        let errs: Vec<f64> = det.iter().zip(&r).map(|(d, r)| d - r).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64).sqrt();
        prop_assert!((stats.std_error - sd).abs() < 1e-9);
    }

    #[test]
    fn pair_scores_ignore_detected_order(a in prop::collection::vec(0.0f64..300.0, 20), b in prop::collection::vec(0.0f64..300.0, 20),
                                         ra in prop::collection::vec(80.0f64..150.0, 20), rb in prop::collection::vec(180.0f64..260.0, 20)) {
        let x = score_pair([&a, &b], [&ra, &rb]).unwrap();
        let y = score_pair([&b, &a], [&ra, &rb]).unwrap();
        prop_assert_eq!(x.speakers, y.speakers);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn synthesis_and_noise_are_seed_deterministic(f0 in 80.0f64..300.0, seed in any::<u64>(), snr in -5.0f64..30.0) {
        let s = synth_harmonic(&SyntheticSource::constant(f0, 10, 0.2), SR).unwrap();
        let cfg = NoiseConfig { kind: NoiseKind::Babble, snr_db: snr, seed };
        prop_assert_eq!(add_noise(&s, &cfg).unwrap(), add_noise(&s, &cfg).unwrap());
    }

    #[test]
    fn zero_tmr_mix_is_symmetric_in_power(fa in 80.0f64..300.0, fb in 80.0f64..300.0, ga in 0.01f64..10.0) {
        let a = SignalBuffer::new(synth_harmonic(&SyntheticSource::constant(fa, 8, 0.3), SR).unwrap().samples().iter().map(|v| v * ga).collect(), SR).unwrap();
        let b = synth_harmonic(&SyntheticSource::constant(fb, 8, 0.3), SR).unwrap();
        let p = mix_tmr(&a, &b, 0.0).unwrap().mixture.power();
        let q = mix_tmr(&b, &a, 0.0).unwrap().mixture.power();
        prop_assert!((p - q).abs() <= 1e-9 * p.max(q));
    }

    #[test]
    fn white_noise_variance_matches_snr(snr in -10.0f64..30.0, seed in any::<u64>()) {
        let s = synth_harmonic(&SyntheticSource::constant(150.0, 10, 6.25), SR).unwrap();
        prop_assert!(s.len() >= 100_000);
        let noisy = add_noise(&s, &NoiseConfig { kind: NoiseKind::White, snr_db: snr, seed }).unwrap();
        let noise: Vec<f64> = noisy.samples().iter().zip(s.samples()).map(|(a, b)| a - b).collect();
        let mean = noise.iter().sum::<f64>() / noise.len() as f64;
        let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / noise.len() as f64;
        let target = s.power() / 10f64.powf(snr / 10.0);
        prop_assert!((var - target).abs() <= 0.02 * target);
    }

    #[test]
    fn em_never_decreases_likelihood(data in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 30..120), k in 1usize..5, seed in any::<u64>()) {
        let r = gmm_train(&data, 1, &GmmConfig { n_components: k, seed, ..Default::default() }).unwrap();
        prop_assert!(r.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
        for x in &data {
            prop_assert!((r.model.responsibilities(x).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn speaker_count_ignores_global_gain() {
    let cfg = SmccConfig::default();
    let clip = |f: &[f64]| {
        let mut s = synth_harmonic(&SyntheticSource::constant(f[0], 20, 0.5), SR).unwrap();
        if f.len() > 1 {
            let b = synth_harmonic(&SyntheticSource::constant(f[1], 20, 0.5), SR).unwrap();
            s = mix_tmr(&s, &b, 0.0).unwrap().mixture;
        }
        s
    };
    let gmm = GmmConfig { n_components: 4, ..Default::default() };
    let one = gmm_train(&[110.0, 160.0, 230.0].iter().flat_map(|&f| smcc_features(&clip(&[f]), &cfg).unwrap()).collect::<Vec<_>>(), 1, &gmm).unwrap().model;
    let two = gmm_train(&[[110.0, 210.0], [130.0, 190.0]].iter().flat_map(|f| smcc_features(&clip(f), &cfg).unwrap()).collect::<Vec<_>>(), 2, &gmm).unwrap().model;
    let models = [one, two];
    for f in [vec![140.0], vec![120.0, 220.0]] {
        let s = clip(&f);
        let base = classify(&smcc_features(&s, &cfg).unwrap(), &models).unwrap();
        for g in [1e-3, 0.5, 20.0] {
            let scaled = SignalBuffer::new(s.samples().iter().map(|v| v * g).collect(), SR).unwrap();
            assert_eq!(classify(&smcc_features(&scaled, &cfg).unwrap(), &models).unwrap(), base);
        }
    }
}
