use serde::{Deserialize, Serialize};

use super::Weighting;
use crate::error::{Error, Result};
use crate::lsq::{self, LeastSquaresProblem, LmOptions};
use crate::model::{TimeTrace, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    /// ns
    pub tau: f64,
    /// Decaying amplitude at the window start.
    pub amplitude: f64,
    pub baseline: f64,
    pub tau_stderr: f64,
    pub window_start: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LifetimeFit {
    /// Total decay rate `1 / tau` (1/ns).
    pub fn rate(&self) -> f64 {
        1.0 / self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeOptions {
    /// Defaults to the time of the peak bin.
    pub window_start: Option<f64>,
    pub window_end: Option<f64>,
    pub tau_guess: Option<f64>,
    pub weighting: Weighting,
    pub max_iterations: usize,
}

impl Default for LifetimeOptions {
    fn default() -> Self {
        Self {
            window_start: None,
            window_end: None,
            tau_guess: None,
            weighting: Weighting::Poisson,
            max_iterations: 200,
        }
    }
}

struct Decay {
    t: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
}

impl LeastSquaresProblem for Decay {
    fn n_residuals(&self) -> usize {
        self.t.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (a, tau, b) = (p[0], p[1], p[2]);
        for i in 0..self.t.len() {
            out[i] = (a * (-self.t[i] / tau).exp() + b - self.y[i]) * self.inv_sigma[i];
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }

    fn scale(&self, j: usize) -> f64 {
        match j {
            1 => 1.0,
            _ => self.y.iter().copied().fold(1.0, f64::max),
        }
    }
}

/// Fits `A exp(-(t - t0)/tau) + B` to a decay histogram, starting at the
/// peak bin (or `window_start`).
///
/// A trace without a decaying component above its tail level, or a window
/// shorter than three estimated lifetimes, is rejected as `WindowTooShort`.
pub fn fit_lifetime(trace: &TimeTrace, opts: &LifetimeOptions) -> Result<LifetimeFit> {
    trace.validate()?;
    let start = match opts.window_start {
        Some(t0) => trace.x.partition_point(|&t| t < t0),
        None => {
            let max = trace.max_y();
            trace.y.iter().position(|&v| v == max).unwrap_or(0)
        }
    };
    let end = match opts.window_end {
        Some(t1) => trace.x.partition_point(|&t| t <= t1),
        None => trace.len(),
    };
    if end < start + 4 {
        return Err(Error::WindowTooShort(format!(
            "{} points in the fit window, need at least 4",
            end.saturating_sub(start)
        )));
    }
    let t0 = trace.x[start];
    let t: Vec<f64> = trace.x[start..end].iter().map(|v| v - t0).collect();
    let y = trace.y[start..end].to_vec();
    let tail = (y.len() / 10).max(1);
    let b0 = y[y.len() - tail..].iter().sum::<f64>() / tail as f64;
    let a0 = y[0] - b0;
    if !(a0 > 0.0) {
        return Err(Error::WindowTooShort("no decay above the tail level".into()));
    }
    let tau0 = opts.tau_guess.unwrap_or_else(|| {
        // area under the excess over its initial height
        let area: f64 = t
            .windows(2)
            .zip(y.windows(2))
            .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1] - 2.0 * b0))
            .sum();
        (area / a0).max(t[1])
    });
    let span = *t.last().unwrap_or(&0.0);
    if span < 3.0 * tau0 {
        return Err(Error::WindowTooShort(format!(
            "window spans {span:.3} ns, shorter than 3 x {tau0:.3} ns"
        )));
    }
    let inv_sigma = y
        .iter()
        .map(|&v| match opts.weighting {
            Weighting::Poisson => 1.0 / v.max(1.0).sqrt(),
            Weighting::Uniform => 1.0,
        })
        .collect();
    let prob = Decay { t, y, inv_sigma };
    let lm = lsq::minimize(
        &prob,
        &[a0, tau0, b0],
        &LmOptions {
            max_iterations: opts.max_iterations,
            ..Default::default()
        },
    )?;
    let stderr = lm.stderr();
    Ok(LifetimeFit {
        tau: lm.params[1],
        amplitude: lm.params[0],
        baseline: lm.params[2],
        tau_stderr: stderr[1],
        window_start: t0,
        iterations: lm.iterations,
        converged: lm.converged,
    })
}
