use std::io::{self, Write};

use super::{CavityParams, CrossCorrelation, SpectralError};

pub const MIN_GRID_POINTS: usize = 4096;

/// Correlation values on a uniform delay grid, optionally normalized into
/// a probability density with its cumulative table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized_pdf: Option<Vec<f64>>,
    /// Cumulative trapezoid integral of the density, 0 at the first grid
    /// point and 1 at the last.
    pub cdf: Option<Vec<f64>>,
}

fn trapezoid(step: f64, values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

fn uniform_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    let step = (end - start) / (n - 1) as f64;
    (0..n).map(|j| start + j as f64 * step).collect()
}

impl CorrelationCurve {
    /// Unnormalized curve on a uniform grid over `[start, end]`.
    pub fn from_model(model: &CrossCorrelation, start: f64, end: f64, n_points: usize) -> Self {
        let tau_grid = uniform_grid(start, end, n_points.max(2));
        let values = model.values(&tau_grid);
        Self {
            tau_grid,
            values,
            normalized_pdf: None,
            cdf: None,
        }
    }

    pub fn step(&self) -> f64 {
        self.tau_grid[1] - self.tau_grid[0]
    }

    /// Trapezoidal integral of the raw values.
    pub fn integral(&self) -> f64 {
        trapezoid(self.step(), &self.values)
    }

    /// Trapezoidal integral of the density, if present.
    pub fn pdf_integral(&self) -> Option<f64> {
        self.normalized_pdf
            .as_ref()
            .map(|p| trapezoid(self.step(), p))
    }

    /// Adds the normalized density and cumulative table.
    pub fn normalize(mut self) -> Result<Self, SpectralError> {
        let total = self.integral();
        if !(total.is_finite() && total > 0.0) {
            return Err(SpectralError::ZeroIntegral);
        }
        let pdf: Vec<f64> = self.values.iter().map(|v| v / total).collect();
        let step = self.step();
        let mut cdf = Vec::with_capacity(pdf.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in pdf.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        // Absorb rounding so the table ends exactly at one.
        let last = acc;
        for c in &mut cdf {
            *c /= last;
        }
        self.normalized_pdf = Some(pdf);
        self.cdf = Some(cdf);
        Ok(self)
    }

    /// Grid point of the largest value.
    pub fn argmax(&self) -> f64 {
        let (idx, _) =
            self.values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        self.tau_grid[idx]
    }

    /// Cumulative probability at `tau`, linear between grid points.
    pub fn cdf_at(&self, tau: f64) -> Option<f64> {
        let cdf = self.cdf.as_ref()?;
        let first = self.tau_grid[0];
        let step = self.step();
        let x = (tau - first) / step;
        if x <= 0.0 {
            return Some(0.0);
        }
        let i = x.floor() as usize;
        if i >= cdf.len() - 1 {
            return Some(1.0);
        }
        let frac = x - i as f64;
        Some(cdf[i] + frac * (cdf[i + 1] - cdf[i]))
    }

    /// Delay at cumulative probability `u` in `[0, 1]`, the inverse of
    /// [`CorrelationCurve::cdf_at`].
    pub fn inverse_cdf(&self, u: f64) -> Option<f64> {
        let cdf = self.cdf.as_ref()?;
        let u = u.clamp(0.0, 1.0);
        // First cell whose upper edge exceeds u.
        let upper = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
        let lo = upper - 1;
        let width = cdf[upper] - cdf[lo];
        let frac = if width > 0.0 {
            (u - cdf[lo]) / width
        } else {
            0.0
        };
        Some(self.tau_grid[lo] + frac * self.step())
    }

    /// CSV with header `tau_s,value[,pdf]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match &self.normalized_pdf {
            Some(pdf) => {
                writeln!(out, "tau_s,value,pdf")?;
                for ((t, v), p) in self.tau_grid.iter().zip(&self.values).zip(pdf) {
                    writeln!(out, "{t:.16e},{v:.16e},{p:.16e}")?;
                }
            }
            None => {
                writeln!(out, "tau_s,value")?;
                for (t, v) in self.tau_grid.iter().zip(&self.values) {
                    writeln!(out, "{t:.16e},{v:.16e}")?;
                }
            }
        }
        out.flush()
    }
}

/// Tabulates the correlation on `n_points` over `[-t_range, t_range]` and
/// normalizes it for inverse-CDF sampling.
pub fn tabulate_pdf(
    params: &CavityParams,
    m_max: usize,
    t_range: f64,
    n_points: usize,
) -> Result<CorrelationCurve, SpectralError> {
    params.validate()?;
    let required = params.min_delay_range();
    if !(t_range >= required * (1.0 - 1e-12)) {
        return Err(SpectralError::RangeTooShort {
            range: t_range,
            required,
        });
    }
    if n_points < MIN_GRID_POINTS {
        return Err(SpectralError::TooFewPoints {
            got: n_points,
            min: MIN_GRID_POINTS,
        });
    }
    let model = CrossCorrelation::new(params, m_max)?;
    CorrelationCurve::from_model(&model, -t_range, t_range, n_points).normalize()
}
