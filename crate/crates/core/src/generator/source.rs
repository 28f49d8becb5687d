use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use super::{
    stage_rng, CellConfig, EventRng, FilterConfig, FilterMode, PairEvent, Polarization, SimConfig,
    SimError, Stage,
};
use crate::spectral::{CavityParams, CrossCorrelation, DelaySampler, ModeIndex};

pub(crate) const CELL_WORDS: u32 = 4;

/// Everything drawn once per run: mode probabilities, filter
/// transmissions per mode and the delay sampler.
#[derive(Debug, Clone)]
pub struct SourceModel {
    m_max: usize,
    mode_probs: Vec<f64>,
    t_signal: Vec<f64>,
    t_idler: Vec<f64>,
    sampler: DelaySampler,
    signal_pol: Polarization,
}

impl SourceModel {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        let issues = config.issues();
        if !issues.is_empty() {
            return Err(SimError::InvalidConfig(issues));
        }
        let m_max = config.m_max();
        let full = CrossCorrelation::new(&config.cavity, m_max)?;
        // The active filter passes a single comb line, whose correlation is
        // the single-mode double exponential.
        let sampler = match config.filter.mode {
            FilterMode::Inactive => DelaySampler::new(&full, config.t_range)?,
            FilterMode::Active => {
                DelaySampler::new(&CrossCorrelation::new(&config.cavity, 0)?, config.t_range)?
            }
        };
        let signal_pol = config.signal_polarization;
        let fsr = config.cavity.fsr;
        let modes = -(m_max as i32)..=m_max as i32;
        let t_signal = modes
            .clone()
            .map(|m| config.filter.transmission(m, fsr, signal_pol))
            .collect();
        let t_idler = modes
            .map(|m| config.filter.transmission(-m, fsr, signal_pol.orthogonal()))
            .collect();
        Ok(Self {
            m_max,
            mode_probs: full.mode_powers(),
            t_signal,
            t_idler,
            sampler,
            signal_pol,
        })
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Probability of each signal mode `m`, indexed by `m + m_max`.
    pub fn mode_probabilities(&self) -> &[f64] {
        &self.mode_probs
    }

    /// Filter transmission of the signal and idler photon of a pair whose
    /// signal is in mode `m`.
    pub fn transmissions(&self, m: i32) -> (f64, f64) {
        let k = (m + self.m_max as i32) as usize;
        (self.t_signal[k], self.t_idler[k])
    }

    pub fn sampler(&self) -> &DelaySampler {
        &self.sampler
    }

    fn index_to_mode(&self, k: usize) -> ModeIndex {
        ModeIndex(k as i32 - self.m_max as i32)
    }

    /// Probability that at least one photon of a pair passes the filter.
    fn pass_any(&self, k: usize) -> f64 {
        1.0 - (1.0 - self.t_signal[k]) * (1.0 - self.t_idler[k])
    }

    /// Rate of pairs with at least one photon past the filter.
    pub fn filtered_rate(&self, pair_rate: f64) -> f64 {
        pair_rate
            * self
                .mode_probs
                .iter()
                .enumerate()
                .map(|(k, p)| p * self.pass_any(k))
                .sum::<f64>()
    }

    /// Share of filtered pairs that are in the degenerate mode.
    pub fn resonant_fraction_after_filter(&self) -> f64 {
        let weights: Vec<f64> = self
            .mode_probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * self.pass_any(k))
            .collect();
        weights[self.m_max] / weights.iter().sum::<f64>()
    }

    /// Source of every pair, before any filtering.
    pub fn pairs(&self, config: &SimConfig) -> PairStream {
        PairStream {
            rng: stage_rng(config.rng_seed, Stage::Source, 0),
            gap: Exp::new(config.pair_rate).expect("pair rate validated"),
            duration: config.duration,
            t: 0.0,
            next_id: 0,
            modes: WeightedIndex::new(&self.mode_probs).expect("mode powers are positive"),
            model: self.clone(),
        }
    }

    /// Source of the pairs that keep at least one photon after the filter,
    /// with the filter outcome already applied.
    pub fn filtered_source(&self, config: &SimConfig) -> FilteredSource {
        let weights: Vec<f64> = self
            .mode_probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * self.pass_any(k))
            .collect();
        let rate = self.filtered_rate(config.pair_rate);
        FilteredSource {
            inner: PairStream {
                rng: stage_rng(config.rng_seed, Stage::Source, 0),
                gap: Exp::new(rate).expect("filtered rate is positive"),
                duration: config.duration,
                t: 0.0,
                next_id: 0,
                modes: WeightedIndex::new(&weights).expect("filter passes some mode"),
                model: self.clone(),
            },
        }
    }
}

/// Homogeneous Poisson stream of pairs over `[0, duration]`.
#[derive(Debug, Clone)]
pub struct PairStream {
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    duration: f64,
    t: f64,
    next_id: u64,
    modes: WeightedIndex<f64>,
    model: SourceModel,
}

impl Iterator for PairStream {
    type Item = PairEvent;

    fn next(&mut self) -> Option<PairEvent> {
        self.t += self.gap.sample(&mut self.rng);
        if self.t > self.duration {
            self.t = f64::INFINITY;
            return None;
        }
        let mode = self.model.index_to_mode(self.modes.sample(&mut self.rng));
        let delta_t = self.model.sampler.sample(&mut self.rng);
        let id = self.next_id;
        self.next_id += 1;
        Some(PairEvent {
            id,
            t_create: self.t,
            delta_t,
            mode,
            resonant: mode.is_degenerate(),
            pol_signal: self.model.signal_pol,
            signal_alive: true,
            idler_alive: true,
        })
    }
}

/// Thinned pair stream: only pairs that keep a photon after the filter.
#[derive(Debug, Clone)]
pub struct FilteredSource {
    inner: PairStream,
}

impl Iterator for FilteredSource {
    type Item = PairEvent;

    fn next(&mut self) -> Option<PairEvent> {
        let mut event = self.inner.next()?;
        let k = (event.mode.0 + self.inner.model.m_max as i32) as usize;
        let ts = self.inner.model.t_signal[k];
        let ti = self.inner.model.t_idler[k];
        // Survival pattern conditioned on at least one survivor.
        let u = self.inner.rng.random::<f64>() * self.inner.model.pass_any(k);
        let both = ts * ti;
        let signal_only = ts * (1.0 - ti);
        event.signal_alive = u < both + signal_only;
        event.idler_alive = u < both || u >= both + signal_only;
        Some(event)
    }
}

/// Every pair of the run, unfiltered.
pub fn generate_pairs(config: &SimConfig) -> Result<PairStream, SimError> {
    Ok(SourceModel::new(config)?.pairs(config))
}

/// Filters signal and idler independently; keeps pairs with a survivor.
pub fn apply_filter<R: Rng + ?Sized>(
    events: impl IntoIterator<Item = PairEvent>,
    filter: &FilterConfig,
    cavity: &CavityParams,
    rng: &mut R,
) -> Vec<PairEvent> {
    events
        .into_iter()
        .filter_map(|mut e| {
            let ts = filter.transmission(e.mode.0, cavity.fsr, e.pol_signal);
            let ti = filter.transmission(-e.mode.0, cavity.fsr, e.pol_signal.orthogonal());
            e.signal_alive &= rng.random::<f64>() < ts;
            e.idler_alive &= rng.random::<f64>() < ti;
            (e.signal_alive || e.idler_alive).then_some(e)
        })
        .collect()
}

pub(crate) fn absorb(event: &mut PairEvent, cell: &CellConfig, rng: &mut EventRng) {
    if event.signal_alive {
        let u: f64 = rng.at(event.id).random();
        event.signal_alive = u < cell.survival(event.resonant);
    }
}

/// Passes the signal photon through the cell; keeps pairs with a
/// survivor. Draws are keyed by event id.
pub fn apply_absorption(
    events: impl IntoIterator<Item = PairEvent>,
    cell: &CellConfig,
    rng: &mut EventRng,
) -> Vec<PairEvent> {
    events
        .into_iter()
        .filter_map(|mut e| {
            absorb(&mut e, cell, rng);
            (e.signal_alive || e.idler_alive).then_some(e)
        })
        .collect()
}

/// Cell stream for `seed`, as used by the simulator.
pub fn cell_rng(seed: u64) -> EventRng {
    EventRng::new(seed, Stage::Cell, CELL_WORDS)
}
