use rand::Rng;
use std::f64::consts::PI;

use super::{CrossCorrelation, Side, SpectralError};

const MIN_PHASE_POINTS: usize = 4096;

/// One branch of the correlation: `exp(-2 pi gamma u) P(u)` with `P`
/// periodic in the round trip `T`. Delays are drawn as a whole number of
/// round trips (geometric with ratio `exp(-2 pi gamma T)`) plus a phase
/// within one round trip from a fine table.
#[derive(Debug, Clone)]
struct Branch {
    /// Cumulative mass at the phase-grid nodes, normalized to end at 1.
    cdf: Vec<f64>,
    ln_q: f64,
    mass: f64,
}

impl Branch {
    fn new(model: &CrossCorrelation, side: Side, n: usize) -> Self {
        let p = model.params();
        let period = 1.0 / p.fsr;
        let gamma = match side {
            Side::Signal => p.gamma_s,
            Side::Idler => p.gamma_i,
        };
        let step = period / n as f64;
        let g: Vec<f64> = (0..=n)
            .map(|j| model.side_value(side, j as f64 * step))
            .collect();
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in g.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        let ln_q = -2.0 * PI * gamma * period;
        // Sum over all round trips of the one-period integral.
        let mass = acc / -(ln_q.exp_m1());
        Self { cdf, ln_q, mass }
    }

    /// Distance from the crossover, in units of the round trip.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let k = (u.ln() / self.ln_q).floor();
        let v: f64 = rng.random();
        let upper = self
            .cdf
            .partition_point(|&c| c <= v)
            .clamp(1, self.cdf.len() - 1);
        let lo = upper - 1;
        let width = self.cdf[upper] - self.cdf[lo];
        let frac = if width > 0.0 {
            (v - self.cdf[lo]) / width
        } else {
            0.0
        };
        k + (lo as f64 + frac) / (self.cdf.len() - 1) as f64
    }
}

/// Draws signal-minus-idler delays with density proportional to the
/// correlation, restricted to `|tau| <= t_range`.
///
/// The comb pulses are a few picoseconds wide, far narrower than any
/// practical grid over the whole delay range, so the sampler tabulates a
/// single round trip finely and uses the exponential envelope analytically.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    signal: Branch,
    idler: Branch,
    p_signal: f64,
    period: f64,
    crossover: f64,
    t_range: f64,
}

impl DelaySampler {
    pub fn new(model: &CrossCorrelation, t_range: f64) -> Result<Self, SpectralError> {
        let p = model.params();
        let required = p.min_delay_range();
        if !(t_range >= required * (1.0 - 1e-12)) {
            return Err(SpectralError::RangeTooShort {
                range: t_range,
                required,
            });
        }
        let n = (8 * (2 * model.m_max() + 1))
            .next_power_of_two()
            .max(MIN_PHASE_POINTS);
        let signal = Branch::new(model, Side::Signal, n);
        let idler = Branch::new(model, Side::Idler, n);
        let total = signal.mass + idler.mass;
        if !(total.is_finite() && total > 0.0) {
            return Err(SpectralError::ZeroIntegral);
        }
        Ok(Self {
            p_signal: signal.mass / total,
            signal,
            idler,
            period: 1.0 / p.fsr,
            crossover: 0.5 * p.tau0,
            t_range,
        })
    }

    /// Integral of the correlation over all delays.
    pub fn total_mass(&self) -> f64 {
        self.signal.mass + self.idler.mass
    }

    /// Probability that a delay falls on the signal side of the crossover.
    pub fn signal_fraction(&self) -> f64 {
        self.p_signal
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let tau = if rng.random::<f64>() < self.p_signal {
                self.crossover + self.signal.sample(rng) * self.period
            } else {
                self.crossover - self.idler.sample(rng) * self.period
            };
            if tau.abs() <= self.t_range {
                return tau;
            }
        }
    }
}
