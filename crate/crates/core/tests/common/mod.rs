//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use herald_core::spectral::CavityParams;
use herald_core::tags::TimeTag;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use std::f64::consts::PI;

/// Argument where `sinc^2` drops to one half, found by bisection.
pub fn sinc2_half_point() -> f64 {
    let (mut lo, mut hi) = (0.5_f64, 3.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (mid.sin() / mid).powi(2) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn csinc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-300 {
        Complex64::new(1.0, 0.0)
    } else {
        z.sin() / z
    }
}

fn weights(p: &CavityParams, m_max: i64) -> Vec<f64> {
    let x_half = sinc2_half_point();
    (-m_max..=m_max)
        .map(|m| {
            if m == 0 {
                1.0
            } else {
                let x = 2.0 * x_half * m as f64 * p.fsr / p.envelope_fwhm;
                (x.sin() / x).powi(2)
            }
        })
        .collect()
}

fn big_gamma(gamma: f64, m: i64, fsr: f64) -> Complex64 {
    Complex64::new(0.5 * gamma, m as f64 * fsr)
}

/// Side factor of one term: the decaying exponential on the branch the
/// delay falls on, times the transit-time `sinc`.
fn branch_factor(p: &CavityParams, tau: f64, m_s: i64, m_i: i64) -> Complex64 {
    let s = tau - 0.5 * p.tau0;
    let g = if s >= 0.0 {
        big_gamma(p.gamma_s, m_s, p.fsr)
    } else {
        big_gamma(p.gamma_i, m_i, p.fsr)
    };
    let decay = if s >= 0.0 {
        (-2.0 * PI * g * s).exp()
    } else {
        (2.0 * PI * g * s).exp()
    };
    decay * csinc(Complex64::new(0.0, PI * p.tau0) * g)
}

fn prefactor_sq(p: &CavityParams) -> f64 {
    p.gamma_s * p.gamma_i * p.center_freq_s * p.center_freq_i
}

/// Term-by-term double sum over signal and idler modes.
pub fn double_sum(p: &CavityParams, tau: f64, m_max: i64) -> f64 {
    let w = weights(p, m_max);
    let mut acc = Complex64::new(0.0, 0.0);
    for m_s in -m_max..=m_max {
        for m_i in -m_max..=m_max {
            let ws = w[(m_s + m_max) as usize];
            let wi = w[(m_i + m_max) as usize];
            let denom = big_gamma(p.gamma_s, m_s, p.fsr) + big_gamma(p.gamma_i, m_i, p.fsr);
            acc += ws * wi / denom * branch_factor(p, tau, m_s, m_i);
        }
    }
    prefactor_sq(p) * acc.norm_sqr()
}

/// Same double sum with the inner mode sum tabulated once, so that large
/// truncations stay affordable. Every exponential is still evaluated
/// directly per term.
pub struct BruteForce {
    params: CavityParams,
    m_max: i64,
    weights: Vec<f64>,
    inner_s: Vec<Complex64>,
    inner_i: Vec<Complex64>,
}

impl BruteForce {
    pub fn new(params: &CavityParams, m_max: i64) -> Self {
        let w = weights(params, m_max);
        let inner = |outer_gamma: f64, other_gamma: f64| -> Vec<Complex64> {
            (-m_max..=m_max)
                .map(|m| {
                    let g = big_gamma(outer_gamma, m, params.fsr);
                    (-m_max..=m_max)
                        .map(|k| {
                            w[(k + m_max) as usize] / (g + big_gamma(other_gamma, k, params.fsr))
                        })
                        .sum()
                })
                .collect()
        };
        Self {
            params: *params,
            m_max,
            inner_s: inner(params.gamma_s, params.gamma_i),
            inner_i: inner(params.gamma_i, params.gamma_s),
            weights: w,
        }
    }

    pub fn value(&self, tau: f64) -> f64 {
        let p = &self.params;
        let signal_side = tau >= 0.5 * p.tau0;
        let inner = if signal_side {
            &self.inner_s
        } else {
            &self.inner_i
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for m in -self.m_max..=self.m_max {
            let k = (m + self.m_max) as usize;
            acc += self.weights[k] * inner[k] * branch_factor(p, tau, m, m);
        }
        prefactor_sq(p) * acc.norm_sqr()
    }
}

/// Poisson process of `rate` on `[0, duration_ps)`, integer picoseconds.
pub fn poisson_times<R: Rng>(rng: &mut R, rate_per_s: f64, duration_ps: u64) -> Vec<u64> {
    let gap = Exp::new(rate_per_s * 1e-12).unwrap();
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += gap.sample(rng);
        if t >= duration_ps as f64 {
            return out;
        }
        out.push(t as u64);
    }
}

/// Merges per-channel time lists into one sorted tag stream.
pub fn merge(channels: &[Vec<u64>]) -> Vec<TimeTag> {
    let mut tags: Vec<TimeTag> = channels
        .iter()
        .enumerate()
        .flat_map(|(ch, ts)| ts.iter().map(move |&t| TimeTag::new(t, ch as u8)))
        .collect();
    tags.sort_by_key(|t| (t.timestamp_ps, t.channel));
    tags
}

/// O(n^2) reference histogram of `t_sig - t_ref` over bins of `width`
/// starting at `start`.
pub fn naive_histogram(
    tags: &[TimeTag],
    ch_ref: u8,
    ch_sig: u8,
    width: u64,
    start: i64,
    n_bins: usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; n_bins];
    for (i, r) in tags.iter().enumerate() {
        if r.channel != ch_ref {
            continue;
        }
        for (j, s) in tags.iter().enumerate() {
            if s.channel != ch_sig || (ch_ref == ch_sig && i == j) {
                continue;
            }
            let d = s.timestamp_ps as i64 - r.timestamp_ps as i64;
            let off = d - start;
            if off >= 0 && ((off / width as i64) as usize) < n_bins {
                counts[(off / width as i64) as usize] += 1;
            }
        }
    }
    counts
}
