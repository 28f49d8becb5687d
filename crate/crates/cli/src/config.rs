//! Run configuration file: TOML with an `[analysis]` table and the
//! simulation under `[simulation]`.

use std::path::{Path, PathBuf};

use herald_core::correlator::HistogramSpec;
use herald_core::g2::{extrapolation_grid, ExtrapolationModel, G2Options};
use herald_core::generator::SimConfig;
use herald_core::spectral::{DEFAULT_GRID_POINTS, DEFAULT_T_RANGE, MIN_GRID_POINTS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Reference and signal channel of coincidence histograms.
    pub ref_channel: u8,
    pub sig_channel: u8,
    pub bin_ns: f64,
    /// Half-range of coincidence histograms.
    pub range_ns: f64,
    pub trigger_channel: u8,
    pub arm_a_channel: u8,
    pub arm_b_channel: u8,
    /// Full coincidence window of g2 and resonance measurements.
    pub window_ns: f64,
    /// Widest g2 extrapolation window; ten windows up to it are counted.
    pub max_window_ns: f64,
    pub fit_min_window_ns: f64,
    pub extrapolation: ExtrapolationModel,
    pub bunching_factor: f64,
    pub od_low: f64,
    pub od_high: f64,
    /// Half-range and grid size of analytic curves.
    pub curve_range_ns: f64,
    pub curve_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_m_max: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let g2 = G2Options::default();
        Self {
            ref_channel: 0,
            sig_channel: 1,
            bin_ns: 1.0,
            range_ns: 100.0,
            trigger_channel: g2.ch_trigger,
            arm_a_channel: g2.ch_a,
            arm_b_channel: g2.ch_b,
            window_ns: g2.window_ps as f64 * 1e-3,
            max_window_ns: 2000.0,
            fit_min_window_ns: g2.fit_min_window_ps as f64 * 1e-3,
            extrapolation: g2.model,
            bunching_factor: g2.bunching_factor,
            od_low: herald_core::presets::OD_LOW,
            od_high: herald_core::presets::OD_HIGH,
            curve_range_ns: DEFAULT_T_RANGE * 1e9,
            curve_points: DEFAULT_GRID_POINTS,
            curve_m_max: None,
        }
    }
}

/// Whole picoseconds in `ns`, if positive and finite.
pub fn ns_to_ps(ns: f64) -> Option<u64> {
    let ps = (ns * 1e3).round();
    (ns.is_finite() && ps >= 1.0 && ps < u64::MAX as f64).then_some(ps as u64)
}

impl AnalysisConfig {
    pub fn histogram_spec(&self) -> Result<HistogramSpec, String> {
        let bin = ns_to_ps(self.bin_ns).ok_or_else(|| {
            format!(
                "analysis.bin_ns must be at least 0.001, got {}",
                self.bin_ns
            )
        })?;
        let half = ns_to_ps(self.range_ns).ok_or_else(|| {
            format!(
                "analysis.range_ns must be at least 0.001, got {}",
                self.range_ns
            )
        })?;
        HistogramSpec::centered(bin, half).map_err(|e| e.to_string())
    }

    pub fn window_ps(&self) -> Result<u64, String> {
        ns_to_ps(self.window_ns).ok_or_else(|| {
            format!(
                "analysis.window_ns must be positive, got {}",
                self.window_ns
            )
        })
    }

    pub fn g2_options(&self) -> Result<G2Options, String> {
        let max = ns_to_ps(self.max_window_ns).ok_or_else(|| {
            format!(
                "analysis.max_window_ns must be positive, got {}",
                self.max_window_ns
            )
        })?;
        let fit_min = if self.fit_min_window_ns == 0.0 {
            0
        } else {
            ns_to_ps(self.fit_min_window_ns).ok_or_else(|| {
                format!(
                    "analysis.fit_min_window_ns must be >= 0, got {}",
                    self.fit_min_window_ns
                )
            })?
        };
        let opts = G2Options {
            ch_trigger: self.trigger_channel,
            ch_a: self.arm_a_channel,
            ch_b: self.arm_b_channel,
            window_ps: self.window_ps()?,
            extrapolation_windows_ps: extrapolation_grid(max),
            fit_min_window_ps: fit_min,
            model: self.extrapolation,
            bunching_factor: self.bunching_factor,
        };
        let issues = opts.issues();
        if issues.is_empty() {
            Ok(opts)
        } else {
            Err(issues.join("; "))
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if let Err(e) = self.histogram_spec() {
            issues.push(e);
        }
        if let Err(e) = self.g2_options() {
            issues.push(e);
        }
        if !(self.od_low >= 0.0 && self.od_high > self.od_low && self.od_high.is_finite()) {
            issues.push(format!(
                "analysis.od_high must exceed analysis.od_low >= 0, got {} and {}",
                self.od_high, self.od_low
            ));
        }
        if !(self.curve_range_ns.is_finite() && self.curve_range_ns > 0.0) {
            issues.push(format!(
                "analysis.curve_range_ns must be positive, got {}",
                self.curve_range_ns
            ));
        }
        if self.curve_points < MIN_GRID_POINTS {
            issues.push(format!(
                "analysis.curve_points must be at least {}, got {}",
                MIN_GRID_POINTS, self.curve_points
            ));
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory for outputs; the command line and `HERALD_OUTPUT_DIR`
    /// take precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub simulation: SimConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim().into()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Config file or the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn issues(&self) -> Vec<String> {
        let mut issues = self.simulation.issues();
        issues.extend(self.analysis.issues());
        issues
    }

    /// Fails with every violated invariant.
    pub fn validate(&self) -> Result<(), CliError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "invalid configuration:\n  {}",
                issues.join("\n  ")
            )))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
