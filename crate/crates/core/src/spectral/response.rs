//! Theory histograms: the correlation as it appears after two detectors
//! with Gaussian timing jitter and a counting board that floors
//! timestamps to a fixed resolution.

use super::{CrossCorrelation, SpectralError};

/// Timing response of a detector pair seen through the delay axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayResponse {
    /// Timestamp quantum of the counting board, s.
    pub quantum_s: f64,
    /// Standard deviation of the signal-minus-idler jitter, s.
    pub jitter_sigma_s: f64,
}

impl DelayResponse {
    /// Response for two channels with independent jitter.
    pub fn from_channels(quantum_s: f64, sigma_a: f64, sigma_b: f64) -> Self {
        Self {
            quantum_s,
            jitter_sigma_s: sigma_a.hypot(sigma_b),
        }
    }

    /// Probability that a true delay `offset_s` away from a quantized delay
    /// value is recorded as that value.
    ///
    /// Flooring both timestamps with an arrival phase uniform within the
    /// quantum turns a delay into a triangle of half-width one quantum;
    /// jitter smears the triangle with a Gaussian.
    pub fn kernel(&self, offset_s: f64) -> f64 {
        let x = offset_s / self.quantum_s;
        let s = self.jitter_sigma_s / self.quantum_s;
        if s <= 0.0 {
            return (1.0 - x.abs()).max(0.0);
        }
        if x.abs() > 1.0 + 10.0 * s {
            return 0.0;
        }
        // Gaussian-smoothed ramp max(y, 0), second-differenced.
        let ramp = |y: f64| {
            let z = y / s;
            y * 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
                + s * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        (ramp(x + 1.0) - 2.0 * ramp(x) + ramp(x - 1.0)).max(0.0)
    }

    /// Half-width of the kernel support, s.
    pub fn support(&self) -> f64 {
        self.quantum_s + 10.0 * self.jitter_sigma_s
    }
}

/// Expected (unnormalized) histogram of recorded delays.
///
/// Bins are `[start + j w, start + (j + 1) w)` in picoseconds and collect
/// every quantized delay value `n * quantum` inside them. The correlation
/// is integrated on a uniform grid of spacing at most `step_s`, so `step_s`
/// must resolve the narrowest feature of the model.
pub fn expected_histogram(
    model: &CrossCorrelation,
    response: &DelayResponse,
    bin_width_ps: u64,
    range_ps: (i64, i64),
    step_s: f64,
) -> Result<Vec<f64>, SpectralError> {
    let (start, end) = range_ps;
    if bin_width_ps == 0 || end <= start || !((end - start) as u64).is_multiple_of(bin_width_ps) {
        return Err(SpectralError::InvalidBinning(format!(
            "bin width {bin_width_ps} ps does not tile [{start}, {end}) ps"
        )));
    }
    let quantum_ps = (response.quantum_s * 1e12).round() as i64;
    if quantum_ps <= 0 || !(step_s > 0.0) {
        return Err(SpectralError::InvalidBinning(
            "quantum and step must be positive".into(),
        ));
    }
    let n_bins = ((end - start) as u64 / bin_width_ps) as usize;
    let first_q = start.div_euclid(quantum_ps) + i64::from(start.rem_euclid(quantum_ps) != 0);
    let last_q = (end - 1).div_euclid(quantum_ps);
    if last_q < first_q {
        return Ok(vec![0.0; n_bins]);
    }

    let support = response.support();
    let lo = first_q as f64 * response.quantum_s - support;
    let hi = last_q as f64 * response.quantum_s + support;
    let n_grid = ((hi - lo) / step_s).ceil() as usize + 1;
    let step = (hi - lo) / (n_grid - 1) as f64;
    let taus: Vec<f64> = (0..n_grid).map(|k| lo + k as f64 * step).collect();
    let values = model.values(&taus);

    let kernel_points = (support / step).ceil() as usize + 1;
    let mut counts = vec![0.0; n_bins];
    for q in first_q..=last_q {
        let center = q as f64 * response.quantum_s;
        let c = ((center - lo) / step).round() as usize;
        let from = c.saturating_sub(kernel_points);
        let to = (c + kernel_points).min(n_grid - 1);
        let mass: f64 = (from..=to)
            .map(|k| values[k] * response.kernel(taus[k] - center))
            .sum::<f64>()
            * step;
        let bin = ((q * quantum_ps - start) as u64 / bin_width_ps) as usize;
        counts[bin] += mass;
    }
    Ok(counts)
}
