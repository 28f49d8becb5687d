//! Seeded Monte Carlo of the heralded-photon chain: pair creation, the
//! atomic filter, an optional absorption cell on the signal arm, and
//! photon-counting detectors.
//!
//! Randomness is split into independent ChaCha streams per stage. The cell
//! and detector stages draw from a position keyed by the event id, so two
//! runs that differ only in the cell see the same pairs and the same
//! detector behavior for every pair that reaches the detectors in both.

mod config;
mod detect;
mod source;

pub use config::*;
pub use detect::{detect, Detector};
pub use source::{
    apply_absorption, apply_filter, cell_rng, generate_pairs, FilteredSource, PairStream,
    SourceModel,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::spectral::{ModeIndex, SpectralError};
use crate::tags::{TagError, TagHeader, TimeTag};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Tags(#[from] TagError),
}

/// One signal/idler pair. The idler reaches the detectors at `t_create`,
/// the signal at `t_create + delta_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub id: u64,
    pub t_create: f64,
    pub delta_t: f64,
    /// Signal mode; the idler sits in the mirror mode `-m`.
    pub mode: ModeIndex,
    pub resonant: bool,
    pub pol_signal: Polarization,
    pub signal_alive: bool,
    pub idler_alive: bool,
}

/// Independent random stream per simulation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Source = 1,
    Filter = 2,
    Cell = 3,
    Detect = 4,
    /// Dark counts of channel `k` use stream `Dark + k`.
    Dark = 16,
}

pub fn stage_rng(seed: u64, stage: Stage, offset: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64 + offset);
    rng
}

/// Random stream addressed by event id: each event owns a fixed block of
/// words, so its draws do not depend on which other events exist.
#[derive(Debug, Clone)]
pub struct EventRng {
    rng: ChaCha8Rng,
    words_per_event: u128,
}

impl EventRng {
    pub fn new(seed: u64, stage: Stage, words_per_event: u32) -> Self {
        Self {
            rng: stage_rng(seed, stage, 0),
            words_per_event: words_per_event as u128,
        }
    }

    pub fn at(&mut self, id: u64) -> &mut ChaCha8Rng {
        self.rng.set_word_pos(id as u128 * self.words_per_event);
        &mut self.rng
    }
}

/// Per-channel counts from one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub expected_pairs: f64,
    /// Pairs with at least one photon past the filter (and the cell).
    pub source_events: u64,
    pub photon_tags: Vec<u64>,
    pub dark_tags: Vec<u64>,
    /// Tags removed by detector dead time.
    pub dead_time_losses: Vec<u64>,
}

impl SimStats {
    pub fn tags_per_channel(&self) -> Vec<u64> {
        self.photon_tags
            .iter()
            .zip(&self.dark_tags)
            .zip(&self.dead_time_losses)
            .map(|((p, d), l)| p + d - l)
            .collect()
    }

    pub fn total_tags(&self) -> u64 {
        self.tags_per_channel().iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub header: TagHeader,
    pub tags: Vec<TimeTag>,
    pub stats: SimStats,
}

pub fn tag_header(config: &SimConfig) -> TagHeader {
    let bin = config.channel_detectors()[0].bin_ps();
    TagHeader {
        channel_count: config.channel_count(),
        resolution_ps: bin as u32,
    }
}

/// Runs the whole chain and hands every tag, in stream order, to `sink`.
///
/// Only pairs with a photon past the filter are generated (a thinned
/// Poisson process), which keeps runs with billions of pairs cheap.
pub fn simulate_with<F>(config: &SimConfig, mut sink: F) -> Result<SimStats, SimError>
where
    F: FnMut(TimeTag) -> Result<(), TagError>,
{
    let model = SourceModel::new(config)?;
    let mut source = model.filtered_source(config);
    let mut cell_rng = EventRng::new(config.rng_seed, Stage::Cell, source::CELL_WORDS);
    let use_cell = config.scenario == Scenario::AbsorptionCell;
    let mut detector = Detector::new(config);

    let mut source_events = 0;
    for mut event in source.by_ref() {
        if use_cell {
            source::absorb(&mut event, &config.cell, &mut cell_rng);
            if !(event.signal_alive || event.idler_alive) {
                continue;
            }
        }
        source_events += 1;
        detector.push_event(&event, &mut sink)?;
    }
    let mut stats = detector.finish(&mut sink)?;
    stats.expected_pairs = config.expected_pairs();
    stats.source_events = source_events;
    Ok(stats)
}

/// [`simulate_with`] collected in memory.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    let mut tags = Vec::new();
    let stats = simulate_with(config, |t| {
        tags.push(t);
        Ok(())
    })?;
    Ok(SimOutput {
        header: tag_header(config),
        tags,
        stats,
    })
}
