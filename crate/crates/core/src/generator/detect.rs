use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use super::{stage_rng, DetectorConfig, EventRng, PairEvent, Scenario, SimConfig, SimStats, Stage};
use crate::tags::{TagError, TimeTag};

const DETECT_WORDS: u32 = 16;

/// Dark counts of one channel as an ordered Poisson stream.
#[derive(Debug, Clone)]
struct DarkStream {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    next: f64,
}

impl DarkStream {
    fn new(seed: u64, channel: u8, rate: f64) -> Self {
        let mut rng = stage_rng(seed, Stage::Dark, channel as u64);
        let gap = (rate > 0.0).then(|| Exp::new(rate).expect("dark rate validated"));
        let next = gap.map_or(f64::INFINITY, |g| g.sample(&mut rng));
        Self { rng, gap, next }
    }

    fn pop_before(&mut self, t: f64) -> Option<f64> {
        if self.next >= t {
            return None;
        }
        let now = self.next;
        self.next += self
            .gap
            .expect("finite next implies a rate")
            .sample(&mut self.rng);
        Some(now)
    }
}

/// Detector bank that turns time-ordered pairs into a sorted tag stream.
///
/// Tags are held in a small reorder buffer until no later pair can
/// produce an earlier tag.
#[derive(Debug, Clone)]
pub struct Detector {
    detectors: Vec<DetectorConfig>,
    scenario: Scenario,
    duration: f64,
    bin_s: f64,
    bin_ps: u64,
    rng: EventRng,
    darks: Vec<DarkStream>,
    pending: BinaryHeap<Reverse<(u64, u8)>>,
    /// Largest amount a tag can precede its pair's creation time, ps.
    lookback_ps: u64,
    last_kept: Vec<Option<u64>>,
    dead_ps: Vec<Option<u64>>,
    stats: SimStats,
}

impl Detector {
    pub fn new(config: &SimConfig) -> Self {
        Self::with_detectors(
            config.channel_detectors(),
            config.scenario,
            config.duration,
            config.t_range,
            config.rng_seed,
        )
    }

    pub fn with_detectors(
        detectors: Vec<DetectorConfig>,
        scenario: Scenario,
        duration: f64,
        t_range: f64,
        seed: u64,
    ) -> Self {
        let n = detectors.len();
        let bin_s = detectors[0].bin_resolution;
        let max_jitter = detectors.iter().map(|d| d.jitter_sigma).fold(0.0, f64::max);
        let lookback = t_range + 40.0 * max_jitter + 2.0 * bin_s;
        let darks = detectors
            .iter()
            .enumerate()
            .map(|(k, d)| DarkStream::new(seed, k as u8, d.dark_rate))
            .collect();
        Self {
            bin_ps: detectors[0].bin_ps(),
            dead_ps: detectors
                .iter()
                .map(|d| d.dead_time.map(|t| (t * 1e12).round() as u64))
                .collect(),
            detectors,
            scenario,
            duration,
            bin_s,
            rng: EventRng::new(seed, Stage::Detect, DETECT_WORDS),
            darks,
            pending: BinaryHeap::new(),
            lookback_ps: (lookback * 1e12).ceil() as u64 + 1,
            last_kept: vec![None; n],
            stats: SimStats {
                photon_tags: vec![0; n],
                dark_tags: vec![0; n],
                dead_time_losses: vec![0; n],
                ..SimStats::default()
            },
        }
    }

    fn quantize(&self, t: f64) -> Option<u64> {
        if !(t >= 0.0 && t < self.duration) {
            return None;
        }
        Some((t / self.bin_s).floor() as u64 * self.bin_ps)
    }

    /// Adds the detections of one pair. Pairs must arrive in creation
    /// order.
    pub fn push_event<F>(&mut self, event: &PairEvent, sink: &mut F) -> Result<(), TagError>
    where
        F: FnMut(TimeTag) -> Result<(), TagError>,
    {
        let rng = self.rng.at(event.id);
        let u_idler: f64 = rng.random();
        let u_signal: f64 = rng.random();
        let u_split: f64 = rng.random();
        let u_r: f64 = rng.random();
        let u_phi: f64 = rng.random();
        // Box-Muller keeps the number of draws per event fixed.
        let r = (-2.0 * (1.0 - u_r).ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u_phi;
        let (z_idler, z_signal) = (r * phi.cos(), r * phi.sin());

        let signal_channel = match self.scenario {
            Scenario::SplitSignal if u_split >= 0.5 => 2,
            _ => 1,
        };
        if event.idler_alive && u_idler < self.detectors[0].efficiency {
            let t = event.t_create + self.detectors[0].jitter_sigma * z_idler;
            if let Some(ts) = self.quantize(t) {
                self.pending.push(Reverse((ts, 0)));
                self.stats.photon_tags[0] += 1;
            }
        }
        let d = self.detectors[signal_channel];
        if event.signal_alive && u_signal < d.efficiency {
            let t = event.t_create + event.delta_t + d.jitter_sigma * z_signal;
            if let Some(ts) = self.quantize(t) {
                self.pending.push(Reverse((ts, signal_channel as u8)));
                self.stats.photon_tags[signal_channel] += 1;
            }
        }
        self.add_darks(event.t_create);
        let safe = ((event.t_create * 1e12) as u64).saturating_sub(self.lookback_ps);
        self.emit_before(safe, sink)
    }

    fn add_darks(&mut self, before: f64) {
        for k in 0..self.darks.len() {
            while let Some(t) = self.darks[k].pop_before(before.min(self.duration)) {
                if let Some(ts) = self.quantize(t) {
                    self.pending.push(Reverse((ts, k as u8)));
                    self.stats.dark_tags[k] += 1;
                }
            }
        }
    }

    fn emit_before<F>(&mut self, limit_ps: u64, sink: &mut F) -> Result<(), TagError>
    where
        F: FnMut(TimeTag) -> Result<(), TagError>,
    {
        while let Some(&Reverse((ts, ch))) = self.pending.peek() {
            if ts >= limit_ps {
                break;
            }
            self.pending.pop();
            let k = ch as usize;
            if let (Some(dead), Some(last)) = (self.dead_ps[k], self.last_kept[k]) {
                if ts < last + dead {
                    self.stats.dead_time_losses[k] += 1;
                    continue;
                }
            }
            self.last_kept[k] = Some(ts);
            sink(TimeTag::new(ts, ch))?;
        }
        Ok(())
    }

    /// Adds the remaining dark counts and flushes every tag.
    pub fn finish<F>(mut self, sink: &mut F) -> Result<SimStats, TagError>
    where
        F: FnMut(TimeTag) -> Result<(), TagError>,
    {
        self.add_darks(f64::INFINITY);
        self.emit_before(u64::MAX, sink)?;
        Ok(self.stats)
    }
}

/// Detects a batch of time-ordered pairs, dark counts included.
pub fn detect(
    events: &[PairEvent],
    detectors: &[DetectorConfig],
    scenario: Scenario,
    duration: f64,
    t_range: f64,
    seed: u64,
) -> (Vec<TimeTag>, SimStats) {
    let mut detector =
        Detector::with_detectors(detectors.to_vec(), scenario, duration, t_range, seed);
    let mut tags = Vec::new();
    let mut sink = |t| {
        tags.push(t);
        Ok(())
    };
    for e in events {
        detector
            .push_event(e, &mut sink)
            .expect("collecting sink never fails");
    }
    let stats = detector
        .finish(&mut sink)
        .expect("collecting sink never fails");
    (tags, stats)
}
