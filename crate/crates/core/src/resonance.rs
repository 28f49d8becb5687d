//! Share of heralded photons resonant with the atomic line, from
//! coincidence counts taken behind a weak and a strong absorption cell.
//!
//! With a resonant share `f` and resonant transmission `T`, the in-window
//! coincidences scale as `f T + (1 - f)`. The ratio of two such counts
//! determines `f`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ResonanceError {
    #[error("high-OD coincidence count must be positive")]
    NoHighCounts,
    #[error(
        "transmissions must satisfy 0 <= t_high < t_low <= 1, got t_low {t_low}, t_high {t_high}"
    )]
    BadTransmissions { t_low: f64, t_high: f64 },
    #[error("ratio {ratio} makes the transmission model degenerate")]
    Degenerate { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub c_low: f64,
    pub c_high: f64,
    pub ratio: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub fraction: f64,
    /// Set when the unclamped solution fell outside `[0, 1]`.
    pub clamped: bool,
    /// Statistical error of `fraction` for Poisson counts.
    pub fraction_stderr: f64,
}

impl ResonanceReport {
    pub fn to_text(&self) -> String {
        format!(
            "c_low = {}\nc_high = {}\nratio = {:.6}\nt_low = {:.6}\nt_high = {:.6}\n\
             fraction = {:.6}\nfraction_stderr = {:.6}\nclamped = {}\n",
            self.c_low,
            self.c_high,
            self.ratio,
            self.t_low,
            self.t_high,
            self.fraction,
            self.fraction_stderr,
            self.clamped
        )
    }
}

/// Resonant transmission of a cell with optical density `od`.
pub fn transmission_for_od(od: f64) -> f64 {
    (-od).exp()
}

fn solve(ratio: f64, t_low: f64, t_high: f64) -> Result<f64, ResonanceError> {
    let denom = ratio * (1.0 - t_high) - (1.0 - t_low);
    if denom.abs() <= 1e-12 * (ratio * (1.0 - t_high)).abs().max(1.0) {
        return Err(ResonanceError::Degenerate { ratio });
    }
    Ok((ratio - 1.0) / denom)
}

pub fn resonant_fraction(
    c_low: f64,
    c_high: f64,
    t_low: f64,
    t_high: f64,
) -> Result<ResonanceReport, ResonanceError> {
    if !(c_high > 0.0) {
        return Err(ResonanceError::NoHighCounts);
    }
    if !(0.0 <= t_high && t_high < t_low && t_low <= 1.0) {
        return Err(ResonanceError::BadTransmissions { t_low, t_high });
    }
    let ratio = c_low / c_high;
    let raw = solve(ratio, t_low, t_high)?;
    let fraction = raw.clamp(0.0, 1.0);

    // df/dR by central difference, then Poisson errors on both counts.
    let h = 1e-6 * ratio.max(1e-6);
    let slope = match (
        solve(ratio + h, t_low, t_high),
        solve(ratio - h, t_low, t_high),
    ) {
        (Ok(up), Ok(down)) => (up - down) / (2.0 * h),
        _ => f64::NAN,
    };
    let rel = (1.0 / c_low.max(1.0) + 1.0 / c_high).sqrt();
    Ok(ResonanceReport {
        c_low,
        c_high,
        ratio,
        t_low,
        t_high,
        fraction,
        clamped: raw != fraction,
        fraction_stderr: (slope * ratio * rel).abs(),
    })
}
