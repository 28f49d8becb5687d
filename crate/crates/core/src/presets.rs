//! Named runs reproducing each measurement, with the analyses that go
//! with them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::correlator::{
    coincidence_histogram, height_matched_chi2, window_coincidences, CorrelatorError,
    HistogramResult, HistogramSpec,
};
use crate::g2::G2Error;
use crate::generator::{FilterMode, Scenario, SimConfig, SimError, SourceModel};
use crate::resonance::ResonanceError;
use crate::spectral::{expected_histogram, CrossCorrelation, DelayResponse, SpectralError};
use crate::tags::TimeTag;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    G2(#[from] G2Error),
    #[error(transparent)]
    Resonance(#[from] ResonanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Multimode comb, filter off.
    Fig2,
    /// Single-mode double exponential, filter on.
    Fig3,
    /// Weak and strong absorption cell on the signal arm.
    Fig4,
    /// Heralded g2 behind a 50/50 splitter.
    G2Table,
}

/// Optical densities of the weak and strong cell.
pub const OD_LOW: f64 = 0.3;
pub const OD_HIGH: f64 = 6.0;
/// Half-range of the preset coincidence histograms, ps.
pub const HISTOGRAM_HALF_RANGE_PS: u64 = 100_000;
/// Coincidence window of the absorption measurement, ps.
pub const RESONANCE_WINDOW_PS: u64 = 40_000;

impl Preset {
    pub const ALL: [Preset; 4] = [Self::Fig2, Self::Fig3, Self::Fig4, Self::G2Table];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::G2Table => "g2-table",
        }
    }

    /// Simulation runs of the preset. `fig4` has the weak-cell run first.
    pub fn configs(self, seed: u64) -> Vec<SimConfig> {
        let base = SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        };
        match self {
            Self::Fig2 => {
                let mut c = SimConfig {
                    pair_rate: 1e5,
                    duration: 10.0,
                    ..base
                };
                c.filter.mode = FilterMode::Inactive;
                vec![c]
            }
            Self::Fig3 => vec![SimConfig {
                pair_rate: 2e7,
                duration: 250.0,
                allow_large_runs: true,
                ..base
            }],
            Self::Fig4 => [OD_LOW, OD_HIGH]
                .into_iter()
                .map(|od| {
                    let mut c = SimConfig {
                        pair_rate: 2e8,
                        duration: 30.0,
                        scenario: Scenario::AbsorptionCell,
                        allow_large_runs: true,
                        ..base.clone()
                    };
                    c.cell.od = od;
                    c
                })
                .collect(),
            // Pair rate tuned so accidental multi-pair events give g2 near
            // 0.04; no rate follows from first principles.
            Self::G2Table => vec![SimConfig {
                pair_rate: 1.75e7,
                duration: 460.0,
                scenario: Scenario::SplitSignal,
                allow_large_runs: true,
                ..base
            }],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset {s:?} (expected fig2, fig3, fig4 or g2-table)"))
    }
}

/// Correlation model whose delays the simulation draws.
pub fn sampled_model(config: &SimConfig) -> Result<CrossCorrelation, SpectralError> {
    match config.filter.mode {
        FilterMode::Inactive => CrossCorrelation::new(&config.cavity, config.m_max()),
        FilterMode::Active => CrossCorrelation::new(&config.cavity, 0),
    }
}

/// Delay response between the idler channel and signal channel `ch_sig`.
pub fn delay_response(config: &SimConfig, ch_sig: usize) -> DelayResponse {
    let d = config.channel_detectors();
    DelayResponse::from_channels(
        d[0].bin_resolution,
        d[0].jitter_sigma,
        d[ch_sig].jitter_sigma,
    )
}

/// Integration step that resolves the narrowest feature of `model`.
fn theory_step(model: &CrossCorrelation) -> f64 {
    if model.m_max() == 0 {
        10e-12
    } else {
        1e-12
    }
}

/// Measured histogram set against the analytic expectation.
#[derive(Debug, Clone)]
pub struct HistogramCheck {
    pub histogram: HistogramResult,
    /// Expected counts before height matching, arbitrary units.
    pub theory: Vec<f64>,
    pub scale: f64,
    /// Flat accidental level per bin from the measured singles.
    pub background: f64,
    pub chi2_per_dof: f64,
    /// Mean spacing of local maxima near zero delay, ns.
    pub peak_spacing_ns: Option<f64>,
    /// Spectral content at the comb frequency relative to zero frequency.
    pub comb_ratio: f64,
}

impl HistogramCheck {
    pub fn to_text(&self) -> String {
        let spacing = self
            .peak_spacing_ns
            .map_or("none".to_string(), |s| format!("{s:.4}"));
        format!(
            "coincidences = {}\nbackground_per_bin = {:.4}\nchi2_per_dof = {:.4}\n\
             peak_spacing_ns = {spacing}\ncomb_ratio = {:.6}\n",
            self.histogram.total(),
            self.background,
            self.chi2_per_dof,
            self.comb_ratio
        )
    }

    /// CSV `delay_ps,counts,expected` with the height-matched expectation.
    pub fn to_csv(&self) -> String {
        let spec = self.histogram.spec();
        let mut out = String::from("delay_ps,counts,expected\n");
        for (j, (&c, &t)) in self.histogram.counts.iter().zip(&self.theory).enumerate() {
            let e = self.scale * t + self.background;
            out.push_str(&format!("{},{c},{e:.6}\n", spec.lower_edge(j)));
        }
        out
    }
}

/// Mean distance between local maxima of `counts[from..to]`, in bins.
pub fn mean_peak_spacing(counts: &[u64], from: usize, to: usize) -> Option<f64> {
    let peaks: Vec<usize> = (from.max(1)..to.min(counts.len() - 1))
        .filter(|&j| counts[j] > counts[j - 1] && counts[j] >= counts[j + 1])
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    Some((peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64)
}

/// Idler/signal histogram of a run with 1-quantum bins over
/// `±half_range_ps`, compared with the correlation the run sampled.
pub fn histogram_check(
    config: &SimConfig,
    tags: &[TimeTag],
    ch_sig: u8,
    half_range_ps: u64,
) -> Result<HistogramCheck, AnalysisError> {
    let response = delay_response(config, ch_sig as usize);
    let bin_ps = config.channel_detectors()[0].bin_ps();
    let spec = HistogramSpec::centered(bin_ps, half_range_ps)?;
    let histogram = coincidence_histogram(tags, config.channel_count(), 0, ch_sig, &spec)?;
    let model = sampled_model(config)?;
    let theory = expected_histogram(
        &model,
        &response,
        bin_ps,
        spec.range_ps(),
        theory_step(&model),
    )?;
    let background = histogram.accidental_level(config.duration);
    let (scale, chi2_per_dof) = height_matched_chi2(&histogram.counts, &theory, background);

    // Local maxima where the correlation stands well above accidentals.
    let center = histogram.counts.len() / 2;
    let reach = (20_000 / bin_ps) as usize;
    let peak_spacing_ns = mean_peak_spacing(
        &histogram.counts,
        center.saturating_sub(reach),
        center + reach + 1,
    )
    .map(|bins| bins * bin_ps as f64 * 1e-3);
    let comb_ratio = histogram.spectral_ratio(config.cavity.fsr);
    Ok(HistogramCheck {
        histogram,
        theory,
        scale,
        background,
        chi2_per_dof,
        peak_spacing_ns,
        comb_ratio,
    })
}

/// Analytic in-window coincidence count of an idler/signal pair of
/// channels, split into correlated pairs and accidentals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowExpectation {
    pub correlated: f64,
    pub accidental: f64,
    pub idler_rate: f64,
    pub signal_rate: f64,
}

impl WindowExpectation {
    pub fn total(&self) -> f64 {
        self.correlated + self.accidental
    }
}

/// Expected coincidences with `|t_sig - t_idler| <= window_ps / 2` for a
/// two-channel scenario.
pub fn expected_window_counts(
    config: &SimConfig,
    window_ps: u64,
) -> Result<WindowExpectation, AnalysisError> {
    let source = SourceModel::new(config)?;
    let det = config.channel_detectors();
    let cell = config.scenario == Scenario::AbsorptionCell;
    let m_max = source.m_max() as i32;
    let (mut both, mut signal, mut idler) = (0.0, 0.0, 0.0);
    for (k, p) in source.mode_probabilities().iter().enumerate() {
        let m = k as i32 - m_max;
        let (ts, ti) = source.transmissions(m);
        let a = if cell {
            config.cell.survival(m == 0)
        } else {
            1.0
        };
        both += p * ts * ti * a;
        signal += p * ts * a;
        idler += p * ti;
    }
    let (eta_i, eta_s) = (det[0].efficiency, det[1].efficiency);
    let idler_rate = config.pair_rate * idler * eta_i + det[0].dark_rate;
    let signal_rate = config.pair_rate * signal * eta_s + det[1].dark_rate;

    // Share of the correlation landing inside the window after jitter and
    // quantization.
    let model = sampled_model(config)?;
    let response = delay_response(config, 1);
    let half = (window_ps / 2) as i64;
    let q_ps = det[0].bin_ps() as i64;
    let inside: f64 =
        expected_histogram(&model, &response, 1, (-half, half + 1), theory_step(&model))?
            .iter()
            .sum();
    let capture = inside / source.sampler().total_mass();

    let values_in_window = (2 * half / q_ps + 1) as f64;
    Ok(WindowExpectation {
        correlated: config.pair_rate * config.duration * both * eta_i * eta_s * capture,
        accidental: idler_rate
            * signal_rate
            * config.duration
            * values_in_window
            * q_ps as f64
            * 1e-12,
        idler_rate,
        signal_rate,
    })
}

/// In-window idler/signal coincidences of a two-channel run.
pub fn measured_window_counts(
    config: &SimConfig,
    tags: &[TimeTag],
    window_ps: u64,
) -> Result<u64, AnalysisError> {
    Ok(window_coincidences(
        tags,
        config.channel_count(),
        0,
        1,
        window_ps,
    )?)
}
