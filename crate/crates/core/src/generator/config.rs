use serde::{Deserialize, Serialize};

use crate::spectral::{CavityParams, DEFAULT_T_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn orthogonal(self) -> Self {
        match self {
            Self::H => Self::V,
            Self::V => Self::H,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    Active,
    Inactive,
}

/// Atomic filter seen as a polarization-dependent transmission per comb
/// mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub mode: FilterMode,
    pub peak_transmission_h: f64,
    pub peak_transmission_v: f64,
    /// FWHM of the transmission line, Hz.
    pub linewidth_fwhm: f64,
    pub out_of_band_extinction_db: f64,
    /// Transmission of every mode when the filter is off.
    pub inactive_transmission: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::Active,
            peak_transmission_h: 0.100,
            peak_transmission_v: 0.095,
            linewidth_fwhm: 80e6,
            out_of_band_extinction_db: 35.0,
            inactive_transmission: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn peak_transmission(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::H => self.peak_transmission_h,
            Polarization::V => self.peak_transmission_v,
        }
    }

    /// Fraction of peak transmission left far off resonance.
    pub fn leakage_floor(&self) -> f64 {
        10f64.powf(-self.out_of_band_extinction_db / 10.0)
    }

    /// Lorentzian line shape at `detuning` Hz, 1 on resonance and 1/2 at
    /// half the linewidth.
    pub fn line_shape(&self, detuning: f64) -> f64 {
        let x = 2.0 * detuning / self.linewidth_fwhm;
        1.0 / (1.0 + x * x)
    }

    /// Transmission of a photon in comb mode `m`. Inside the linewidth the
    /// line shape applies; outside it the extinction ratio caps the leakage.
    pub fn transmission(&self, m: i32, fsr: f64, pol: Polarization) -> f64 {
        match self.mode {
            FilterMode::Inactive => self.inactive_transmission,
            FilterMode::Active => {
                let detuning = m as f64 * fsr;
                let shape = self.line_shape(detuning);
                let relative = if 2.0 * detuning.abs() <= self.linewidth_fwhm {
                    shape
                } else {
                    shape.min(self.leakage_floor())
                };
                self.peak_transmission(pol) * relative
            }
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for (name, t) in [
            ("peak_transmission_h", self.peak_transmission_h),
            ("peak_transmission_v", self.peak_transmission_v),
            ("inactive_transmission", self.inactive_transmission),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                issues.push(format!("filter.{name} must be in (0, 1], got {t}"));
            }
        }
        if !(self.linewidth_fwhm.is_finite() && self.linewidth_fwhm > 0.0) {
            issues.push(format!(
                "filter.linewidth_fwhm must be positive, got {}",
                self.linewidth_fwhm
            ));
        }
        if !(self.out_of_band_extinction_db >= 0.0) {
            issues.push(format!(
                "filter.out_of_band_extinction_db must be >= 0, got {}",
                self.out_of_band_extinction_db
            ));
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub od: f64,
    /// When false, off-resonant photons are absorbed like resonant ones.
    pub affects_resonant_only: bool,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            od: 0.0,
            affects_resonant_only: true,
        }
    }
}

impl CellConfig {
    pub fn survival(&self, resonant: bool) -> f64 {
        if resonant || !self.affects_resonant_only {
            (-self.od).exp()
        } else {
            1.0
        }
    }

    pub fn issues(&self) -> Vec<String> {
        if self.od >= 0.0 && self.od.is_finite() {
            vec![]
        } else {
            vec![format!("cell.od must be >= 0, got {}", self.od)]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Counts/s.
    pub dark_rate: f64,
    /// Standard deviation of the timing jitter, s.
    pub jitter_sigma: f64,
    /// Timestamp quantum, s.
    pub bin_resolution: f64,
    /// Optional non-extending dead time, s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_time: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 0.5,
            dark_rate: 250.0,
            jitter_sigma: 150e-12,
            bin_resolution: 1e-9,
            dead_time: None,
        }
    }
}

impl DetectorConfig {
    /// Timestamp quantum in whole picoseconds.
    pub fn bin_ps(&self) -> u64 {
        (self.bin_resolution * 1e12).round() as u64
    }

    pub fn issues(&self, channel: usize) -> Vec<String> {
        let mut issues = Vec::new();
        let name = |f: &str| format!("detectors[{channel}].{f}");
        if !(0.0..=1.0).contains(&self.efficiency) {
            issues.push(format!(
                "{} must be in [0, 1], got {}",
                name("efficiency"),
                self.efficiency
            ));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            issues.push(format!(
                "{} must be >= 0, got {}",
                name("dark_rate"),
                self.dark_rate
            ));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            issues.push(format!(
                "{} must be >= 0, got {}",
                name("jitter_sigma"),
                self.jitter_sigma
            ));
        }
        if !(self.bin_resolution > 0.0 && self.bin_resolution.is_finite()) || self.bin_ps() == 0 {
            issues.push(format!(
                "{} must be at least 1 ps, got {}",
                name("bin_resolution"),
                self.bin_resolution
            ));
        } else if self.bin_ps() > u32::MAX as u64 {
            issues.push(format!("{} is too coarse", name("bin_resolution")));
        }
        if let Some(d) = self.dead_time {
            if !(d >= 0.0 && d.is_finite()) {
                issues.push(format!("{} must be >= 0, got {d}", name("dead_time")));
            }
        }
        issues
    }
}

/// Where the signal photon goes after the filter. The idler always lands
/// on channel 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Signal straight to channel 1.
    #[serde(alias = "a")]
    Direct,
    /// Signal through an absorption cell to channel 1.
    #[serde(alias = "b")]
    AbsorptionCell,
    /// Signal split 50/50 onto channels 1 and 2.
    #[serde(alias = "c")]
    SplitSignal,
}

impl Scenario {
    pub fn channel_count(self) -> u8 {
        match self {
            Self::Direct | Self::AbsorptionCell => 2,
            Self::SplitSignal => 3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Self::Direct => 'a',
            Self::AbsorptionCell => 'b',
            Self::SplitSignal => 'c',
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a" | "direct" => Ok(Self::Direct),
            "b" | "absorption-cell" => Ok(Self::AbsorptionCell),
            "c" | "split-signal" => Ok(Self::SplitSignal),
            _ => Err(format!("unknown scenario {s:?} (expected a, b or c)")),
        }
    }
}

/// Pairs expected in one run above which a run needs `allow_large_runs`.
pub const LARGE_RUN_PAIRS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Pairs/s.
    pub pair_rate: f64,
    /// s.
    pub duration: f64,
    pub rng_seed: u64,
    pub scenario: Scenario,
    /// Mode truncation; the cavity's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    /// Largest sampled `|delta_t|`, s.
    pub t_range: f64,
    pub signal_polarization: Polarization,
    pub allow_large_runs: bool,
    pub cavity: CavityParams,
    pub filter: FilterConfig,
    pub cell: CellConfig,
    /// One entry per channel, or empty for defaults on every channel.
    pub detectors: Vec<DetectorConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            pair_rate: 1e5,
            duration: 1.0,
            rng_seed: 1,
            scenario: Scenario::Direct,
            m_max: None,
            t_range: DEFAULT_T_RANGE,
            signal_polarization: Polarization::H,
            allow_large_runs: false,
            cavity: CavityParams::default(),
            filter: FilterConfig::default(),
            cell: CellConfig::default(),
            detectors: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn m_max(&self) -> usize {
        self.m_max.unwrap_or_else(|| self.cavity.default_m_max())
    }

    pub fn channel_count(&self) -> u8 {
        self.scenario.channel_count()
    }

    /// Detector settings for every channel.
    pub fn channel_detectors(&self) -> Vec<DetectorConfig> {
        if self.detectors.is_empty() {
            vec![DetectorConfig::default(); self.channel_count() as usize]
        } else {
            self.detectors.clone()
        }
    }

    pub fn expected_pairs(&self) -> f64 {
        self.pair_rate * self.duration
    }

    /// Every violated invariant.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(self.pair_rate.is_finite() && self.pair_rate > 0.0) {
            issues.push(format!(
                "pair_rate must be positive, got {}",
                self.pair_rate
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            issues.push(format!("duration must be positive, got {}", self.duration));
        }
        issues.extend(self.cavity.issues());
        if self.cavity.issues().is_empty() {
            let required = self.cavity.min_delay_range();
            if !(self.t_range >= required * (1.0 - 1e-12)) {
                issues.push(format!(
                    "t_range {:e} s must cover ten decay times ({required:e} s)",
                    self.t_range
                ));
            }
        }
        issues.extend(self.filter.issues());
        issues.extend(self.cell.issues());
        let n = self.channel_count() as usize;
        if !self.detectors.is_empty() && self.detectors.len() != n {
            issues.push(format!(
                "scenario {} needs {n} detectors, got {}",
                self.scenario.letter(),
                self.detectors.len()
            ));
        }
        for (k, d) in self.detectors.iter().enumerate() {
            issues.extend(d.issues(k));
        }
        let resolutions: Vec<u64> = self
            .channel_detectors()
            .iter()
            .map(|d| d.bin_ps())
            .collect();
        if resolutions.windows(2).any(|w| w[0] != w[1]) {
            issues.push("all detectors must share one bin_resolution".into());
        }
        if self.expected_pairs() > LARGE_RUN_PAIRS && !self.allow_large_runs {
            issues.push(format!(
                "{:e} expected pairs exceeds {LARGE_RUN_PAIRS:e}; set allow_large_runs to proceed",
                self.expected_pairs()
            ));
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_transmission_defaults() {
        let f = FilterConfig::default();
        let fsr = 490e6;
        assert_eq!(f.transmission(0, fsr, Polarization::H), 0.100);
        assert_eq!(f.transmission(0, fsr, Polarization::V), 0.095);
        for m in [1, -1, 7, -300] {
            let t = f.transmission(m, fsr, Polarization::H);
            assert!(t <= 0.100 * 10f64.powf(-3.5) * (1.0 + 1e-12), "m={m}: {t}");
        }
        assert!((f.line_shape(40e6) - 0.5).abs() < 1e-12);
        let opaque = FilterConfig {
            out_of_band_extinction_db: f64::INFINITY,
            ..f
        };
        assert_eq!(opaque.transmission(1, fsr, Polarization::H), 0.0);
        // Far out the line shape itself drops below the cap.
        let far = f.transmission(40, fsr, Polarization::H);
        assert!((far - 0.100 * f.line_shape(40.0 * fsr)).abs() < 1e-18);
        let off = FilterConfig {
            mode: FilterMode::Inactive,
            ..f
        };
        assert_eq!(off.transmission(5, fsr, Polarization::V), 0.5);
    }

    #[test]
    fn cell_survival() {
        let c = CellConfig {
            od: 0.3,
            ..CellConfig::default()
        };
        assert!((c.survival(true) - 0.7408).abs() < 1e-4);
        assert_eq!(c.survival(false), 1.0);
        let c6 = CellConfig {
            od: 6.0,
            ..CellConfig::default()
        };
        assert!((c6.survival(true) - 0.002479).abs() < 1e-6);
        assert_eq!(CellConfig::default().survival(true), 1.0);
    }

    #[test]
    fn config_issues_are_exhaustive() {
        let cfg = SimConfig {
            pair_rate: 0.0,
            duration: -1.0,
            t_range: 1e-9,
            scenario: Scenario::SplitSignal,
            detectors: vec![DetectorConfig {
                efficiency: 2.0,
                ..DetectorConfig::default()
            }],
            ..SimConfig::default()
        };
        let issues = cfg.issues();
        assert_eq!(issues.len(), 5, "{issues:#?}");
        assert!(SimConfig::default().issues().is_empty());
    }

    #[test]
    fn large_runs_need_opt_in() {
        let mut cfg = SimConfig {
            pair_rate: 1e8,
            duration: 100.0,
            ..SimConfig::default()
        };
        assert_eq!(cfg.issues().len(), 1);
        cfg.allow_large_runs = true;
        assert!(cfg.issues().is_empty());
    }

    #[test]
    fn scenario_names() {
        assert_eq!("b".parse(), Ok(Scenario::AbsorptionCell));
        assert_eq!("split-signal".parse(), Ok(Scenario::SplitSignal));
        assert!("d".parse::<Scenario>().is_err());
        assert_eq!(Scenario::SplitSignal.channel_count(), 3);
    }
}
