use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scm_core::qstats::{esr_spectrum, g2_rate_model, hbt_histogram, rabi_trace, HbtOptions, SpinParams, ThreeLevelRates};
use scm_core::spectro::linspace;

fn rates() -> impl Strategy<Value = ThreeLevelRates> {
    (1e-3..1.0f64, 0.01..1.0f64, 0.0..0.1f64, 1e-4..0.05f64).prop_map(|(pump, decay, shelving, deshelving)| {
        ThreeLevelRates {
            pump,
            decay,
            shelving,
            deshelving,
        }
    })
}

/// State at time `t` of one jump trajectory started in the ground state,
/// with every transition drawn from competing exponential clocks.
fn state_at(r: &ThreeLevelRates, t: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut state = 0;
    let mut now = 0.0;
    loop {
        let out: Vec<(usize, f64)> = match state {
            0 => vec![(1, r.pump)],
            1 => vec![(0, r.decay), (2, r.shelving)],
            _ => vec![(0, r.deshelving)],
        };
        let (next, wait) = out
            .iter()
            .filter(|(_, k)| *k > 0.0)
            .map(|&(s, k)| (s, -(1.0 - rng.random::<f64>()).ln() / k))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if now + wait > t {
            return state;
        }
        now += wait;
        state = next;
    }
}

#[test]
fn populations_after_emission_match_a_jump_simulation() {
    let r = ThreeLevelRates {
        pump: 0.2,
        decay: 1.0 / 16.4,
        shelving: 0.03,
        deshelving: 0.01,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let trials = 20_000;
    for t in [0.0, 2.0, 5.0, 10.0, 25.0, 60.0, 150.0, 400.0] {
        let mut hits = [0usize; 3];
        for _ in 0..trials {
            hits[state_at(&r, t, &mut rng)] += 1;
        }
        let model = r.populations_after_emission(t);
        for s in 0..3 {
            let p = model[s];
            let est = hits[s] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt().max(1.0 / trials as f64);
            assert!((est - p).abs() <= 3.0 * sigma, "state {s} at t = {t}: {est} vs {p}");
        }
    }
}

#[test]
fn count_rate_matches_the_steady_state() {
    // without shelving the clicks form a renewal process with
    // inter-photon time Exp(pump) + Exp(decay)
    let r = ThreeLevelRates {
        pump: 0.1,
        decay: 1.0 / 12.7,
        shelving: 0.0,
        deshelving: 0.0,
    };
    let h = hbt_histogram(&r, &HbtOptions::new(2.0e6, 1.0, 100.0, 3)).unwrap();
    let mean = 1.0 / r.pump + 1.0 / r.decay;
    let var = 1.0 / r.pump.powi(2) + 1.0 / r.decay.powi(2);
    let expected = h.total_time / mean;
    let sigma = (expected * var / (mean * mean)).sqrt();
    let n = h.detected_photons() as f64;
    assert!((n - expected).abs() <= 3.0 * sigma, "{n} vs {expected} +- {sigma}");
    assert!((r.emission_rate().unwrap() - 1.0 / mean).abs() < 1e-15);
}

#[test]
fn histogram_is_reproducible_and_antibunched() {
    let r = ThreeLevelRates::default();
    let opts = HbtOptions::new(4.0e6, 2.0, 200.0, 11);
    let a = hbt_histogram(&r, &opts).unwrap();
    let b = hbt_histogram(&r, &opts).unwrap();
    assert_eq!(a, b);
    let c = hbt_histogram(&r, &HbtOptions { seed: 12, ..opts }).unwrap();
    assert_ne!(a.counts.y, c.counts.y);
    let centre = a.normalized.x.iter().position(|x| x.abs() < 1.0).unwrap();
    let min = a.normalized.y.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(a.normalized.y[centre], min);
    assert!(min < 0.5, "{min}");
}

#[test]
fn invalid_acquisitions_are_rejected() {
    let r = ThreeLevelRates::default();
    assert!(hbt_histogram(&r, &HbtOptions::new(100.0, 1.0, 200.0, 0)).is_err());
    assert!(hbt_histogram(&r, &HbtOptions::new(1e4, 0.0, 50.0, 0)).is_err());
    assert!(hbt_histogram(&ThreeLevelRates { decay: 0.0, ..r }, &HbtOptions::new(1e4, 1.0, 50.0, 0)).is_err());
    // an unpumped emitter is dark rather than invalid
    let dark = hbt_histogram(&ThreeLevelRates { pump: 0.0, ..r }, &HbtOptions::new(1e4, 1.0, 50.0, 0)).unwrap();
    assert_eq!(dark.detected_photons(), 0);
    assert!(dark.normalized.y.iter().all(|&v| v == 0.0));
}

#[test]
fn spin_readout_shapes() {
    let s = SpinParams {
        zeeman_split: 0.056,
        ..SpinParams::default()
    };
    let esr = esr_spectrum(&s, &linspace(2.8, 2.94, 1401)).unwrap();
    let min_near = |c: f64| {
        esr.x
            .iter()
            .zip(&esr.y)
            .filter(|(x, _)| (*x - c).abs() < 0.02)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(x, _)| *x)
            .unwrap()
    };
    assert!((min_near(2.842) - 2.842).abs() < 1e-9);
    assert!((min_near(2.898) - 2.898).abs() < 1e-9);
    let period = 2.0 * std::f64::consts::PI / s.rabi_freq;
    let rabi = rabi_trace(&s, &[0.0, 0.5 * period, period]).unwrap();
    assert!((rabi.y[0] - 1.0).abs() < 1e-15);
    assert!((rabi.y[1] - (1.0 - s.contrast)).abs() < 1e-12);
    assert!((rabi.y[2] - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn populations_stay_a_probability_vector(r in rates(), t in 0.0..2000.0f64) {
        let p = r.populations_after_emission(t);
        for k in 0..3 {
            prop_assert!(p[k] >= -1e-12 && p[k] <= 1.0 + 1e-12, "{:?}", p);
        }
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
        let ss = r.steady_state().unwrap();
        prop_assert!(ss.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((r.rate_matrix() * ss).amax() < 1e-12);
    }

    #[test]
    fn g2_starts_at_zero_and_settles_at_one(r in rates()) {
        let tail = 60.0 / r.slowest_rate();
        let g = g2_rate_model(&r, &[-tail, 0.0, tail]).unwrap();
        prop_assert!(g.y[1].abs() < 1e-12);
        prop_assert!((g.y[0] - g.y[2]).abs() < 1e-12);
        prop_assert!((g.y[2] - 1.0).abs() < 1e-6, "{}", g.y[2]);
    }
}
