//! Dormand-Prince 5(4) with embedded error control, for small complex systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t = 0` and returns the state at each time
/// in `t_out`, which must be non-negative and strictly increasing.
pub fn integrate<const N: usize, F>(
    f: F,
    y0: [Complex64; N],
    t_out: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<[Complex64; N]>>
where
    F: Fn(f64, &[Complex64; N], &mut [Complex64; N]),
{
    let zero = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = 0.0;
    let mut y = y0;
    let mut k = [[zero; N]; 7];
    f(t, &y, &mut k[0]);

    let scale = |a: &[Complex64; N], b: &[Complex64; N], i: usize| {
        opts.atol + opts.rtol * a[i].norm().max(b[i].norm())
    };
    let mut h = {
        let d0 = rms(|i| y[i].norm() / scale(&y, &y, i), N);
        let d1 = rms(|i| k[0][i].norm() / scale(&y, &y, i), N);
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    };
    let mut steps = 0usize;

    for &target in t_out {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::ToleranceNotMet { t, rtol: opts.rtol });
            }
            let mut last = false;
            if t + h >= target {
                h = target - t;
                last = true;
            }
            let mut stage = [zero; N];
            for s in 1..7 {
                for i in 0..N {
                    let mut acc = zero;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += kj[i] * A[s][j];
                    }
                    stage[i] = y[i] + acc * h;
                }
                f(t + C[s] * h, &stage, &mut k[s]);
            }
            // stage 7 evaluated at the fifth-order solution (FSAL)
            let y_new = stage;
            let err = rms(
                |i| {
                    let mut e = zero;
                    for (s, ks) in k.iter().enumerate() {
                        e += ks[i] * E[s];
                    }
                    (e * h).norm() / scale(&y, &y_new, i)
                },
                N,
            );
            steps += 1;
            if err <= 1.0 {
                t = if last { target } else { t + h };
                y = y_new;
                k[0] = k[6];
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h *= fac;
                }
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h <= 1e-15 * t.abs().max(1e-300) {
                return Err(Error::ToleranceNotMet { t, rtol: opts.rtol });
            }
        }
        out.push(y);
    }
    Ok(out)
}

fn rms(term: impl Fn(usize) -> f64, n: usize) -> f64 {
    ((0..n).map(|i| term(i).powi(2)).sum::<f64>() / n as f64).sqrt()
}
