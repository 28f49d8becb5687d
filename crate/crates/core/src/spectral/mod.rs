//! Signal/idler cross-correlation of a doubly-resonant, cavity-enhanced
//! down-converter.
//!
//! The correlation is a coherent sum over pairs of longitudinal cavity
//! modes. For a delay on the signal side of the crossover point
//! (`tau >= tau0 / 2`) every term shares the decay `exp(-pi gamma_s s)`
//! with `s = tau - tau0 / 2`, and the remaining mode sum is periodic in `s`
//! with the cavity round-trip time. The idler side mirrors this. The model
//! precomputes one complex coefficient per mode and side, so evaluating the
//! correlation at any delay is a single polynomial evaluation.

mod curve;
mod response;
mod sampler;

pub use curve::{tabulate_pdf, CorrelationCurve, MIN_GRID_POINTS};
pub use response::{expected_histogram, DelayResponse};
pub use sampler::DelaySampler;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Cavity free spectral range, Hz.
pub const DEFAULT_FSR: f64 = 490e6;
/// Phase-matching bandwidth of the down-conversion, Hz.
pub const DEFAULT_ENVELOPE_FWHM: f64 = 148e9;
/// Signal/idler transit-time difference in a 2 cm crystal with a group
/// index difference of 0.1.
pub const DEFAULT_TAU0: f64 = 6.7e-12;
/// Spectral FWHM of the single-mode heralded photon, Hz.
pub const DEFAULT_PHOTON_BANDWIDTH: f64 = 7e6;
/// Rubidium D1 line, Hz.
pub const RB_D1_FREQUENCY: f64 = 377.107_463e12;
pub const DEFAULT_GRID_POINTS: usize = 16384;
/// Half-width of the default delay grid, s.
pub const DEFAULT_T_RANGE: f64 = 300e-9;

/// Mode amplitude bound used to pick the default truncation.
const TRUNCATION_AMPLITUDE: f64 = 1e-4;

/// Argument at which `sinc^2` falls to one half.
pub(crate) const SINC2_HALF_POINT: f64 = 1.391_557_378_251_002_5;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("delay must be finite, got {0}")]
    NonFiniteDelay(f64),
    #[error("invalid cavity parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("delay range {range:e} s is shorter than the required {required:e} s")]
    RangeTooShort { range: f64, required: f64 },
    #[error("at least {min} grid points are required, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("correlation curve integrates to zero")]
    ZeroIntegral,
    #[error("invalid histogram binning: {0}")]
    InvalidBinning(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spectral description of the doubly-resonant down-converter. Rates and
/// frequencies are in Hz (cycles per second), times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityParams {
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub fsr: f64,
    pub tau0: f64,
    pub envelope_fwhm: f64,
    pub center_freq_s: f64,
    pub center_freq_i: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        let gamma = gamma_for_bandwidth(DEFAULT_PHOTON_BANDWIDTH);
        Self {
            gamma_s: gamma,
            gamma_i: gamma,
            fsr: DEFAULT_FSR,
            tau0: DEFAULT_TAU0,
            envelope_fwhm: DEFAULT_ENVELOPE_FWHM,
            center_freq_s: RB_D1_FREQUENCY,
            center_freq_i: RB_D1_FREQUENCY,
        }
    }
}

/// Cavity damping rate whose single-mode heralded photon has the given
/// spectral FWHM.
///
/// With equal signal and idler damping the single-mode correlation is the
/// two-sided exponential `exp(-2 pi gamma |tau|)` in intensity. Its field
/// `exp(-pi gamma |tau|)` has a Lorentzian-squared spectrum
/// `1 / ((gamma/2)^2 + f^2)^2`, whose FWHM is `gamma * sqrt(sqrt(2) - 1)`.
pub fn gamma_for_bandwidth(fwhm: f64) -> f64 {
    fwhm / (std::f64::consts::SQRT_2 - 1.0).sqrt()
}

impl CavityParams {
    /// Every violated invariant, in field order.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let positive = [
            ("gamma_s", self.gamma_s),
            ("gamma_i", self.gamma_i),
            ("fsr", self.fsr),
            ("envelope_fwhm", self.envelope_fwhm),
            ("center_freq_s", self.center_freq_s),
            ("center_freq_i", self.center_freq_i),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                issues.push(format!(
                    "cavity.{name} must be positive and finite, got {value}"
                ));
            }
        }
        if !(self.tau0.is_finite() && self.tau0 >= 0.0) {
            issues.push(format!(
                "cavity.tau0 must be non-negative, got {}",
                self.tau0
            ));
        } else if self.fsr > 0.0 && self.tau0 >= 1.0 / self.fsr {
            issues.push(format!(
                "cavity.tau0 ({:e} s) must be shorter than one round trip ({:e} s)",
                self.tau0,
                1.0 / self.fsr
            ));
        }
        issues
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SpectralError::InvalidParams(issues))
        }
    }

    /// Cavity round-trip time, the spacing of the correlation comb.
    pub fn comb_period(&self) -> f64 {
        comb_period(self)
    }

    /// Field decay time `1 / (pi min(gamma))` of the slower arm.
    pub fn decay_time(&self) -> f64 {
        1.0 / (PI * self.gamma_s.min(self.gamma_i))
    }

    /// Shortest delay half-range accepted by [`tabulate_pdf`].
    pub fn min_delay_range(&self) -> f64 {
        10.0 * self.decay_time()
    }

    /// Phase-matching envelope weight of comb mode `m`: a `sinc^2` profile
    /// in detuning with FWHM `envelope_fwhm`, equal to 1 at `m = 0`.
    pub fn envelope_weight(&self, m: i64) -> f64 {
        if m == 0 {
            return 1.0;
        }
        let x = 2.0 * SINC2_HALF_POINT * m as f64 * self.fsr / self.envelope_fwhm;
        let s = x.sin() / x;
        s * s
    }

    /// Smallest truncation beyond which every mode amplitude is bounded by
    /// `1e-4` of the degenerate mode.
    ///
    /// The amplitude of mode `m` carries the envelope weight twice (signal
    /// and idler) and the transit-time `sinc`. Both are bounded by their
    /// sidelobe envelopes `1/x^2` and `1/x`.
    pub fn default_m_max(&self) -> usize {
        let xw = 2.0 * SINC2_HALF_POINT * self.fsr / self.envelope_fwhm;
        let xs = PI * self.tau0 * self.fsr;
        let bound = |m: f64| {
            let w = (1.0 / (xw * m).powi(2)).min(1.0);
            let s = if xs > 0.0 {
                (1.0 / (xs * m)).min(1.0)
            } else {
                1.0
            };
            w * w * s
        };
        let mut m = 1usize;
        while bound(m as f64) >= TRUNCATION_AMPLITUDE {
            m += 1;
        }
        m
    }
}

/// Round-trip time `1 / fsr`.
pub fn comb_period(params: &CavityParams) -> f64 {
    1.0 / params.fsr
}

/// Signed comb-mode index; 0 is the degenerate mode at the atomic line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ModeIndex(pub i32);

impl ModeIndex {
    pub fn detuning(self, fsr: f64) -> f64 {
        self.0 as f64 * fsr
    }

    pub fn is_degenerate(self) -> bool {
        self.0 == 0
    }
}

/// `sin(z) / z`, continuous at the origin.
fn csinc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-6 {
        Complex64::new(1.0, 0.0) - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// Branch of the correlation a delay falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    /// `tau >= tau0 / 2`, decay set by the signal damping.
    Signal,
    /// `tau < tau0 / 2`, decay set by the idler damping.
    Idler,
}

/// Precomputed multimode cross-correlation.
#[derive(Debug, Clone)]
pub struct CrossCorrelation {
    params: CavityParams,
    m_max: usize,
    coeff_s: Vec<Complex64>,
    coeff_i: Vec<Complex64>,
    prefactor_sq: f64,
}

impl CrossCorrelation {
    /// Builds the model with modes `-m_max..=m_max` for both signal and
    /// idler. `m_max = 0` is the single-mode limit.
    pub fn new(params: &CavityParams, m_max: usize) -> Result<Self, SpectralError> {
        params.validate()?;
        let n = 2 * m_max + 1;
        let m_max_i = m_max as i64;
        let weights: Vec<f64> = (-m_max_i..=m_max_i)
            .map(|m| params.envelope_weight(m))
            .collect();
        let mean_gamma = 0.5 * (params.gamma_s + params.gamma_i);

        // Gamma_S + Gamma_I depends on m_s + m_i only, so the inner mode sum
        // is the same for both sides:
        // B(m) = sum_k w(k) / (mean_gamma + i (m + k) fsr).
        let inner: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|a| {
                let m = a as i64 - m_max_i;
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, &w) in weights.iter().enumerate() {
                    let k = b as i64 - m_max_i;
                    let im = (m + k) as f64 * params.fsr;
                    let denom = mean_gamma * mean_gamma + im * im;
                    acc += Complex64::new(w * mean_gamma / denom, -w * im / denom);
                }
                acc
            })
            .collect();

        let side_coeffs = |gamma: f64| -> Vec<Complex64> {
            (0..n)
                .map(|a| {
                    let m = a as f64 - m_max as f64;
                    let big_gamma = Complex64::new(0.5 * gamma, m * params.fsr);
                    let z = Complex64::new(0.0, PI * params.tau0) * big_gamma;
                    weights[a] * inner[a] * csinc(z)
                })
                .collect()
        };
        let coeff_s = side_coeffs(params.gamma_s);
        let coeff_i = side_coeffs(params.gamma_i);
        let prefactor_sq =
            params.gamma_s * params.gamma_i * params.center_freq_s * params.center_freq_i;

        Ok(Self {
            params: *params,
            m_max,
            coeff_s,
            coeff_i,
            prefactor_sq,
        })
    }

    /// Model with the truncation from [`CavityParams::default_m_max`].
    pub fn with_default_truncation(params: &CavityParams) -> Result<Self, SpectralError> {
        Self::new(params, params.default_m_max())
    }

    pub fn params(&self) -> &CavityParams {
        &self.params
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    fn coefficients(&self, side: Side) -> &[Complex64] {
        match side {
            Side::Signal => &self.coeff_s,
            Side::Idler => &self.coeff_i,
        }
    }

    fn gamma(&self, side: Side) -> f64 {
        match side {
            Side::Signal => self.params.gamma_s,
            Side::Idler => self.params.gamma_i,
        }
    }

    /// Splits a delay into its side and the non-negative distance from the
    /// crossover point.
    fn locate(&self, tau: f64) -> (Side, f64) {
        let s = tau - 0.5 * self.params.tau0;
        if s >= 0.0 {
            (Side::Signal, s)
        } else {
            (Side::Idler, -s)
        }
    }

    /// Correlation at distance `u >= 0` from the crossover on `side`.
    pub(crate) fn side_value(&self, side: Side, u: f64) -> f64 {
        let decay = (-2.0 * PI * self.gamma(side) * u).exp();
        self.prefactor_sq * decay * self.comb_power(side, u)
    }

    /// `|sum_m c_m exp(-2 pi i m fsr u)|^2`, periodic in `u` with the round
    /// trip. Evaluated by Horner's rule; the common factor `z^-m_max` has
    /// unit modulus and drops out.
    pub(crate) fn comb_power(&self, side: Side, u: f64) -> f64 {
        let phase = -2.0 * PI * (self.params.fsr * u).fract();
        let z = Complex64::new(phase.cos(), phase.sin());
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coefficients(side).iter().rev() {
            acc = acc * z + c;
        }
        acc.norm_sqr()
    }

    /// Correlation value at delay `tau = t_signal - t_idler`.
    pub fn value(&self, tau: f64) -> f64 {
        let (side, u) = self.locate(tau);
        self.side_value(side, u)
    }

    /// Values at many delays. Four delays are evaluated per pass so their
    /// Horner chains run side by side.
    pub fn values(&self, taus: &[f64]) -> Vec<f64> {
        const LANES: usize = 4;
        let mut out = vec![0.0; taus.len()];
        out.par_chunks_mut(1024)
            .zip(taus.par_chunks(1024))
            .for_each(|(out, taus)| {
                for (o, t) in out.chunks_mut(LANES).zip(taus.chunks(LANES)) {
                    if t.len() < LANES {
                        for (o, &tau) in o.iter_mut().zip(t) {
                            *o = self.value(tau);
                        }
                        continue;
                    }
                    let mut z = [Complex64::new(0.0, 0.0); LANES];
                    let mut coeffs: [&[Complex64]; LANES] = [&[]; LANES];
                    let mut decay = [0.0; LANES];
                    for l in 0..LANES {
                        let (side, u) = self.locate(t[l]);
                        let phase = -2.0 * PI * (self.params.fsr * u).fract();
                        z[l] = Complex64::new(phase.cos(), phase.sin());
                        coeffs[l] = self.coefficients(side);
                        decay[l] = (-2.0 * PI * self.gamma(side) * u).exp();
                    }
                    let mut acc = [Complex64::new(0.0, 0.0); LANES];
                    for j in (0..coeffs[0].len()).rev() {
                        for l in 0..LANES {
                            acc[l] = acc[l] * z[l] + coeffs[l][j];
                        }
                    }
                    for l in 0..LANES {
                        o[l] = self.prefactor_sq * decay[l] * acc[l].norm_sqr();
                    }
                }
            });
        out
    }

    /// Relative spectral power of each signal mode, indexed by
    /// `m + m_max`, summing to one.
    pub fn mode_powers(&self) -> Vec<f64> {
        let powers: Vec<f64> = self.coeff_s.iter().map(|c| c.norm_sqr()).collect();
        let total: f64 = powers.iter().sum();
        powers.into_iter().map(|p| p / total).collect()
    }
}

/// Multimode correlation at a single delay, truncated at `m_max`.
pub fn eval_cross_correlation(
    params: &CavityParams,
    tau: f64,
    m_max: usize,
) -> Result<f64, SpectralError> {
    if !tau.is_finite() {
        return Err(SpectralError::NonFiniteDelay(tau));
    }
    Ok(CrossCorrelation::new(params, m_max)?.value(tau))
}

/// Single-mode limit: only the degenerate signal and idler modes.
pub fn eval_single_mode_correlation(params: &CavityParams, tau: f64) -> Result<f64, SpectralError> {
    eval_cross_correlation(params, tau, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(gamma: f64, tau0: f64) -> CavityParams {
        CavityParams {
            gamma_s: gamma,
            gamma_i: gamma,
            tau0,
            ..CavityParams::default()
        }
    }

    #[test]
    fn comb_period_examples() {
        let mut p = CavityParams::default();
        assert!((comb_period(&p) - 2.0408e-9).abs() < 1e-13);
        p.fsr = 1e9;
        assert_eq!(comb_period(&p), 1e-9);
        p.fsr = 250e6;
        assert_eq!(comb_period(&p), 4e-9);
    }

    #[test]
    fn default_gamma_gives_seven_mhz_photons() {
        let g = CavityParams::default().gamma_s;
        // Lorentzian-squared half maximum.
        let half = 0.5 * DEFAULT_PHOTON_BANDWIDTH;
        let profile = |f: f64| 1.0 / ((0.25 * g * g + f * f) * (0.25 * g * g + f * f));
        assert!((profile(half) / profile(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn envelope_weight_has_requested_fwhm() {
        let p = CavityParams {
            fsr: 1e6,
            envelope_fwhm: 2e9,
            ..CavityParams::default()
        };
        // Half maximum at 1 GHz detuning = mode 1000.
        assert!((p.envelope_weight(1000) - 0.5).abs() < 1e-9);
        assert_eq!(p.envelope_weight(0), 1.0);
    }

    #[test]
    fn default_truncation_for_default_cavity() {
        let m = CavityParams::default().default_m_max();
        assert!((600..=700).contains(&m), "m_max = {m}");
    }

    #[test]
    fn rejects_bad_params_exhaustively() {
        let p = CavityParams {
            gamma_s: -1.0,
            fsr: 0.0,
            tau0: -1e-12,
            ..CavityParams::default()
        };
        let issues = p.issues();
        assert_eq!(issues.len(), 3, "{issues:?}");
        let long = CavityParams {
            tau0: 3e-9,
            ..CavityParams::default()
        };
        assert_eq!(long.issues().len(), 1);
    }

    #[test]
    fn rejects_non_finite_delay() {
        let p = CavityParams::default();
        assert!(matches!(
            eval_cross_correlation(&p, f64::NAN, 3),
            Err(SpectralError::NonFiniteDelay(_))
        ));
    }

    #[test]
    fn single_mode_peak_is_at_zero_for_symmetric_cavity() {
        let p = symmetric(5e6, 0.0);
        let peak = eval_cross_correlation(&p, 0.0, 0).unwrap();
        for tau in [-1e-9, 1e-12, 3e-9, -40e-9] {
            assert!(eval_cross_correlation(&p, tau, 0).unwrap() < peak);
        }
        // exp(-2 pi gamma |tau|)
        let tau = 10e-9;
        let ratio = eval_cross_correlation(&p, tau, 0).unwrap() / peak;
        assert!((ratio - (-2.0 * PI * 5e6 * tau).exp()).abs() < 1e-12);
    }

    #[test]
    fn single_mode_matches_zero_truncation() {
        let p = CavityParams::default();
        let model = CrossCorrelation::new(&p, 0).unwrap();
        for k in -500..500 {
            let tau = k as f64 * 0.37e-9 + 1e-13;
            let a = eval_single_mode_correlation(&p, tau).unwrap();
            assert_eq!(a, model.value(tau));
        }
    }

    #[test]
    fn single_mode_decay_constant() {
        let p = symmetric(3.5e6, 6.7e-12);
        let t0 = 0.5 * p.tau0;
        let a = eval_single_mode_correlation(&p, t0).unwrap();
        let b = eval_single_mode_correlation(&p, t0 + 1.0 / (2.0 * PI * p.gamma_s)).unwrap();
        assert!((b / a - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn single_mode_symmetric_in_delay() {
        let p = symmetric(7e6, 0.0);
        for k in 1..200 {
            let tau = k as f64 * 0.731e-9;
            let a = eval_single_mode_correlation(&p, tau).unwrap();
            let b = eval_single_mode_correlation(&p, -tau).unwrap();
            assert!((a - b).abs() <= 1e-14 * a.max(b));
        }
    }

    #[test]
    fn batch_values_match_pointwise() {
        let model = CrossCorrelation::new(&CavityParams::default(), 40).unwrap();
        let taus: Vec<f64> = (0..1003).map(|k| -5e-9 + k as f64 * 1.01e-11).collect();
        let batch = model.values(&taus);
        for (tau, v) in taus.iter().zip(&batch) {
            let p = model.value(*tau);
            assert!(
                (p - v).abs() <= 1e-12 * p.abs().max(1e-300),
                "{tau}: {p} vs {v}"
            );
        }
    }

    #[test]
    fn mode_powers_normalized_and_peaked_at_zero() {
        let model = CrossCorrelation::new(&CavityParams::default(), 50).unwrap();
        let p = model.mode_powers();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let center = p[50];
        assert!(p.iter().all(|&x| x <= center));
    }
}
