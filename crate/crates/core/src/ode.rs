//! Dormand–Prince 5(4) integrator with step control, exact landing on output
//! times and optional continuous (dense) output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub dense: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
            h0: None,
            h_max: None,
            dense: false,
        }
    }
}

impl OdeOptions {
    pub fn with_dense(mut self, dense: bool) -> Self {
        self.dense = dense;
        self
    }

    pub fn tightened(mut self, factor: f64) -> Self {
        self.rtol *= factor;
        self.atol *= factor;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    coeffs: Vec<f64>,
}

/// Piecewise quartic interpolant covering every accepted step.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    n: usize,
    segments: Vec<Segment>,
}

impl DenseOutput {
    pub fn t_min(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn t_max(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t0 + s.h)
    }

    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let first = self.segments.first()?;
        if t < first.t0 || t > self.t_max() {
            return None;
        }
        let idx = self
            .segments
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        let th = (t - seg.t0) / seg.h;
        let th1 = 1.0 - th;
        let n = self.n;
        let c = &seg.coeffs;
        Some(
            (0..n)
                .map(|i| {
                    c[i] + th
                        * (c[n + i]
                            + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dense: Option<DenseOutput>,
    pub stats: Stats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm(y0: &[f64], y1: &[f64], e: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = y0.len().max(1);
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(e)
        .map(|((a, b), e)| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n as f64).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], opts: &OdeOptions, span: f64) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let sc: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / v.len().max(1) as f64)
            .sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, k)| y + h0 * k).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates y' = f(t, y) from `t0`, reporting the state exactly at each entry of `t_out`
/// (non-decreasing, all ≥ t0).
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], t_out: &[f64], opts: &OdeOptions) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if let Some(&bad) = t_out.iter().find(|&&t| t < t0 || !t.is_finite()) {
        return Err(Error::OutOfRange { t: bad, lo: t0, hi: f64::INFINITY });
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidState("output times must be non-decreasing".into()));
    }
    let t_end = t_out.last().copied().unwrap_or(t0);
    let mut stats = Stats::default();
    let mut dense = opts.dense.then(|| DenseOutput { n, segments: Vec::new() });

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1);
    stats.evaluations += 1;

    let span = t_end - t0;
    let mut h = if span > 0.0 {
        opts.h0.unwrap_or_else(|| {
            stats.evaluations += 1;
            initial_step(&mut f, t0, &y, &k1, opts, span)
        })
    } else {
        0.0
    };
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut times = Vec::with_capacity(t_out.len());
    let mut states = Vec::with_capacity(t_out.len());

    for &target in t_out {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Stiffness { t });
            }
            let remaining = target - t;
            let (hs, hits) = if h >= remaining * (1.0 - 1e-12) {
                (remaining, true)
            } else {
                (h, false)
            };
            if hs < 1e-14 * t.abs().max(1.0) && !hits {
                return Err(Error::Stiffness { t });
            }

            for i in 0..n {
                ys[i] = y[i] + hs * A21 * k1[i];
            }
            f(t + C2 * hs, &ys, &mut k2);
            for i in 0..n {
                ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * hs, &ys, &mut k3);
            for i in 0..n {
                ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * hs, &ys, &mut k4);
            for i in 0..n {
                ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * hs, &ys, &mut k5);
            for i in 0..n {
                ys[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + hs, &ys, &mut k6);
            for i in 0..n {
                y5[i] = y[i]
                    + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let t_new = if hits { target } else { t + hs };
            f(t_new, &y5, &mut k7);
            stats.evaluations += 6;
            for i in 0..n {
                err[i] = hs
                    * (E1 * k1[i]
                        + E3 * k3[i]
                        + E4 * k4[i]
                        + E5 * k5[i]
                        + E6 * k6[i]
                        + E7 * k7[i]);
            }
            let en = err_norm(&y, &y5, &err, opts.rtol, opts.atol);
            if !en.is_finite() {
                stats.rejected += 1;
                h = hs * 0.1;
                continue;
            }
            if en <= 1.0 {
                stats.accepted += 1;
                if let Some(dense) = dense.as_mut() {
                    let mut c = vec![0.0; 5 * n];
                    for i in 0..n {
                        let dy = y5[i] - y[i];
                        let bspl = hs * k1[i] - dy;
                        c[i] = y[i];
                        c[n + i] = dy;
                        c[2 * n + i] = bspl;
                        c[3 * n + i] = dy - hs * k7[i] - bspl;
                        c[4 * n + i] = hs
                            * (D1 * k1[i]
                                + D3 * k3[i]
                                + D4 * k4[i]
                                + D5 * k5[i]
                                + D6 * k6[i]
                                + D7 * k7[i]);
                    }
                    dense.segments.push(Segment { t0: t, h: hs, coeffs: c });
                }
                std::mem::swap(&mut y, &mut y5);
                std::mem::swap(&mut k1, &mut k7);
                t = t_new;
                let fac = (0.9 * en.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                let proposal = hs * fac;
                h = if hits { proposal.max(h) } else { proposal };
                if let Some(hm) = opts.h_max {
                    h = h.min(hm);
                }
            } else {
                stats.rejected += 1;
                h = hs * (0.9 * en.powf(-0.2)).max(0.2);
            }
        }
        times.push(target);
        states.push(y.clone());
    }

    Ok(Solution { times, states, dense, stats })
}
