use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::ThreeLevelRates;
use crate::error::{Error, Result};
use crate::model::{Series, TimeTrace, Unit, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbtOptions {
    /// Simulated acquisition time (ns).
    pub total_time: f64,
    pub bin_width: f64,
    /// Histogram covers delays in `[-max_delay, max_delay]`.
    pub max_delay: f64,
    pub seed: u64,
    /// Uncorrelated clicks per detector (1/ns).
    #[serde(default)]
    pub dark_count_rate: f64,
}

impl HbtOptions {
    pub fn new(total_time: f64, bin_width: f64, max_delay: f64, seed: u64) -> Self {
        Self {
            total_time,
            bin_width,
            max_delay,
            seed,
            dark_count_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtHistogram {
    /// Raw start-stop coincidences per delay bin (bin centers in ns).
    pub counts: TimeTrace,
    /// Coincidences divided by the uncorrelated expectation
    /// `N_a N_b w (T - |tau|) / T^2`.
    pub normalized: TimeTrace,
    pub clicks: [u64; 2],
    pub total_time: f64,
}

impl HbtHistogram {
    pub fn detected_photons(&self) -> u64 {
        self.clicks[0] + self.clicks[1]
    }

    /// Mean click rate summed over both detectors (1/ns).
    pub fn count_rate(&self) -> f64 {
        self.detected_photons() as f64 / self.total_time
    }

    /// Expected coincidences per bin for uncorrelated detectors.
    pub fn uncorrelated_level(&self, tau: f64) -> f64 {
        let t = self.total_time;
        let w = self.counts.x.get(1).zip(self.counts.x.first()).map_or(0.0, |(b, a)| b - a);
        self.clicks[0] as f64 * self.clicks[1] as f64 * w * (t - tau.abs()).max(0.0) / (t * t)
    }
}

fn exp_wait(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Emission times of one trajectory started in the steady state.
fn emissions(rates: &ThreeLevelRates, total: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    if rates.pump == 0.0 {
        return Ok(out);
    }
    let p = rates.steady_state()?;
    let u: f64 = rng.random();
    let mut state = if u < p[0] {
        0
    } else if u < p[0] + p[1] {
        1
    } else {
        2
    };
    let mut t = 0.0;
    let leave_excited = rates.decay + rates.shelving;
    loop {
        match state {
            0 => {
                t += exp_wait(rng, rates.pump);
                state = 1;
            }
            1 => {
                t += exp_wait(rng, leave_excited);
                if t >= total {
                    break;
                }
                if rng.random::<f64>() * leave_excited < rates.decay {
                    out.push(t);
                    state = 0;
                } else {
                    state = 2;
                }
            }
            _ => {
                t += exp_wait(rng, rates.deshelving);
                state = 0;
            }
        }
        if t >= total {
            break;
        }
    }
    Ok(out)
}

fn poisson_times(rate: f64, total: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = exp_wait(rng, rate);
    while t < total {
        out.push(t);
        t += exp_wait(rng, rate);
    }
    out
}

fn merge(a: &mut Vec<f64>, extra: Vec<f64>) {
    if !extra.is_empty() {
        a.extend(extra);
        a.sort_by(f64::total_cmp);
    }
}

/// Simulated Hanbury Brown-Twiss measurement: a continuous-time Gillespie
/// trajectory of the three-level emitter, each photon sent to one of two
/// detectors with equal probability, and every start-stop pair within
/// `max_delay` histogrammed by `t_b - t_a`.
pub fn hbt_histogram(rates: &ThreeLevelRates, opts: &HbtOptions) -> Result<HbtHistogram> {
    rates.validate()?;
    if !(opts.bin_width > 0.0) {
        return Err(Error::violation("bin_width", "must be > 0"));
    }
    if !(opts.total_time > 0.0) || !(opts.max_delay > 0.0) || opts.max_delay + opts.bin_width >= opts.total_time {
        return Err(Error::violation("max_delay", "need 0 < max_delay < total_time"));
    }
    if !(opts.dark_count_rate >= 0.0) {
        return Err(Error::violation("dark_count_rate", "must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let photons = emissions(rates, opts.total_time, &mut rng)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in photons {
        if rng.random::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    merge(&mut a, poisson_times(opts.dark_count_rate, opts.total_time, &mut rng));
    merge(&mut b, poisson_times(opts.dark_count_rate, opts.total_time, &mut rng));

    let w = opts.bin_width;
    let half = (opts.max_delay / w).round() as i64;
    let nbins = (2 * half + 1) as usize;
    let mut hist = vec![0u64; nbins];
    // outermost bins are filled out to their edges
    let reach = (half as f64 + 0.5) * w;
    let mut lo = 0;
    for &ta in &a {
        while lo < b.len() && b[lo] < ta - reach {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let d = tb - ta;
            if d > reach {
                break;
            }
            let k = (d / w).round() as i64;
            if k.abs() <= half {
                hist[(k + half) as usize] += 1;
            }
        }
    }

    let x: Vec<f64> = (-half..=half).map(|k| k as f64 * w).collect();
    let t = opts.total_time;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let normalized = x
        .iter()
        .zip(&hist)
        .map(|(&tau, &c)| {
            let expect = na * nb * w * (t - tau.abs()) / (t * t);
            if expect > 0.0 {
                c as f64 / expect
            } else {
                0.0
            }
        })
        .collect();
    Ok(HbtHistogram {
        counts: Series::new(x.clone(), hist.iter().map(|&c| c as f64).collect(), Unit::Ns, Unit::Counts)?,
        normalized: Series::new(x, normalized, Unit::Ns, Unit::Normalized)?,
        clicks: [a.len() as u64, b.len() as u64],
        total_time: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pump_gives_an_empty_histogram() {
        let h = hbt_histogram(&ThreeLevelRates::with_pump(0.0), &HbtOptions::new(1e5, 1.0, 50.0, 0)).unwrap();
        assert_eq!(h.detected_photons(), 0);
        assert!(h.counts.y.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let r = ThreeLevelRates::default();
        let o = HbtOptions::new(2e6, 1.0, 100.0, 42);
        let a = hbt_histogram(&r, &o).unwrap();
        let b = hbt_histogram(&r, &o).unwrap();
        assert_eq!(a, b);
        let c = hbt_histogram(&r, &HbtOptions { seed: 43, ..o }).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn dark_counts_fill_the_dip() {
        let r = ThreeLevelRates::with_pump(0.2);
        let clean = hbt_histogram(&r, &HbtOptions::new(2e6, 2.0, 50.0, 1)).unwrap();
        let noisy = hbt_histogram(
            &r,
            &HbtOptions {
                dark_count_rate: 0.02,
                ..HbtOptions::new(2e6, 2.0, 50.0, 1)
            },
        )
        .unwrap();
        let mid = clean.normalized.len() / 2;
        assert!(noisy.normalized.y[mid] > clean.normalized.y[mid] + 0.1);
    }

    #[test]
    fn invalid_options_are_rejected() {
        let r = ThreeLevelRates::default();
        assert!(hbt_histogram(&r, &HbtOptions::new(1e4, 0.0, 10.0, 0)).is_err());
        assert!(hbt_histogram(&r, &HbtOptions::new(1e4, 1.0, 2e4, 0)).is_err());
    }
}
