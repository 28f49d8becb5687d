//! All-pairs coincidence histograms between two channels.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::tags::{TagError, TagHeader, TagReader, TimeTag};

const REF_CHUNK: usize = 1 << 15;

#[derive(Debug, Error)]
pub enum CorrelatorError {
    #[error("channel {channel} outside declared count {channel_count}")]
    UnknownChannel { channel: u8, channel_count: u8 },
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("tag {index} at {timestamp_ps} ps precedes the previous tag")]
    Unsorted { index: u64, timestamp_ps: u64 },
    #[error("histogram CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Tags(#[from] TagError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bin layout: `n` bins of `bin_width_ps` tiling `[start_ps, end_ps)` of
/// delay `t_sig - t_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramSpec {
    bin_width_ps: u64,
    start_ps: i64,
    end_ps: i64,
}

impl HistogramSpec {
    pub fn new(bin_width_ps: u64, start_ps: i64, end_ps: i64) -> Result<Self, CorrelatorError> {
        if bin_width_ps == 0 {
            return Err(CorrelatorError::InvalidBinning(
                "bin width must be at least 1 ps".into(),
            ));
        }
        if end_ps <= start_ps {
            return Err(CorrelatorError::InvalidBinning(format!(
                "empty delay range [{start_ps}, {end_ps}) ps"
            )));
        }
        let span = (end_ps as i128 - start_ps as i128) as u128;
        if !span.is_multiple_of(bin_width_ps as u128) {
            return Err(CorrelatorError::InvalidBinning(format!(
                "bin width {bin_width_ps} ps does not tile [{start_ps}, {end_ps}) ps"
            )));
        }
        if span / (bin_width_ps as u128) < 2 {
            return Err(CorrelatorError::InvalidBinning(
                "range must span at least two bins".into(),
            ));
        }
        Ok(Self {
            bin_width_ps,
            start_ps,
            end_ps,
        })
    }

    /// Bins centered on whole multiples of the bin width, covering
    /// `-half_range_ps..=half_range_ps`.
    pub fn centered(bin_width_ps: u64, half_range_ps: u64) -> Result<Self, CorrelatorError> {
        if bin_width_ps == 0 {
            return Err(CorrelatorError::InvalidBinning(
                "bin width must be at least 1 ps".into(),
            ));
        }
        let n_side = half_range_ps.div_ceil(bin_width_ps) as i64;
        let w = bin_width_ps as i64;
        let start = -n_side * w - w / 2;
        Self::new(bin_width_ps, start, start + (2 * n_side + 1) * w)
    }

    pub fn bin_width_ps(&self) -> u64 {
        self.bin_width_ps
    }

    pub fn range_ps(&self) -> (i64, i64) {
        (self.start_ps, self.end_ps)
    }

    pub fn n_bins(&self) -> usize {
        ((self.end_ps - self.start_ps) as u64 / self.bin_width_ps) as usize
    }

    pub fn lower_edge(&self, bin: usize) -> i64 {
        self.start_ps + (bin as u64 * self.bin_width_ps) as i64
    }

    #[inline]
    fn bin_of(&self, delay: i64) -> Option<usize> {
        if delay < self.start_ps || delay >= self.end_ps {
            return None;
        }
        Some(((delay - self.start_ps) as u64 / self.bin_width_ps) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramResult {
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub counts: Vec<u64>,
    pub n_ref_events: u64,
    pub n_sig_events: u64,
}

impl HistogramResult {
    fn empty(spec: &HistogramSpec) -> Self {
        Self {
            bin_width_ps: spec.bin_width_ps,
            range_ps: spec.range_ps(),
            counts: vec![0; spec.n_bins()],
            n_ref_events: 0,
            n_sig_events: 0,
        }
    }

    pub fn spec(&self) -> HistogramSpec {
        HistogramSpec {
            bin_width_ps: self.bin_width_ps,
            start_ps: self.range_ps.0,
            end_ps: self.range_ps.1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin centers in ps.
    pub fn centers_ps(&self) -> Vec<f64> {
        let w = self.bin_width_ps as f64;
        (0..self.counts.len())
            .map(|j| self.range_ps.0 as f64 + (j as f64 + 0.5) * w)
            .collect()
    }

    /// Counts expected per bin from uncorrelated tags at the measured
    /// singles rates over a run of `duration_s`.
    pub fn accidental_level(&self, duration_s: f64) -> f64 {
        self.n_ref_events as f64 * self.n_sig_events as f64 * self.bin_width_ps as f64 * 1e-12
            / duration_s
    }

    /// Cross-correlation normalized to the accidental level, 1 for
    /// uncorrelated channels.
    pub fn normalized(&self, duration_s: f64) -> Vec<f64> {
        let level = self.accidental_level(duration_s);
        self.counts.iter().map(|&c| c as f64 / level).collect()
    }

    /// `|sum_j c_j exp(-2 pi i f t_j)| / sum_j c_j` over bin centers: the
    /// relative strength of a periodic modulation at `freq_hz`.
    pub fn spectral_ratio(&self, freq_hz: f64) -> f64 {
        let total = self.total() as f64;
        if total == 0.0 {
            return 0.0;
        }
        let w = -2.0 * std::f64::consts::PI * freq_hz * 1e-12;
        let sum: Complex64 = self
            .centers_ps()
            .iter()
            .zip(&self.counts)
            .map(|(&t, &c)| Complex64::from_polar(c as f64, w * t))
            .sum();
        sum.norm() / total
    }

    /// CSV with header `delay_ps,counts`, one row per bin keyed by its
    /// lower edge.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delay_ps,counts")?;
        let spec = self.spec();
        for (j, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", spec.lower_edge(j), c)?;
        }
        out.flush()
    }

    /// Reads a histogram written by [`HistogramResult::write_csv`]. The
    /// event totals are not part of the CSV and come back as zero.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CorrelatorError> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "delay_ps,counts" => {}
            Some(Err(e)) => return Err(e.into()),
            _ => {
                return Err(CorrelatorError::Csv {
                    line: 1,
                    message: "expected header delay_ps,counts".into(),
                })
            }
        }
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: &str| CorrelatorError::Csv {
                line: lineno,
                message: message.into(),
            };
            let (d, c) = line
                .split_once(',')
                .ok_or_else(|| bad("expected two fields"))?;
            edges.push(d.trim().parse::<i64>().map_err(|_| bad("bad delay"))?);
            counts.push(c.trim().parse::<u64>().map_err(|_| bad("bad count"))?);
        }
        if edges.len() < 2 {
            return Err(CorrelatorError::Csv {
                line: 1,
                message: "need at least two bins".into(),
            });
        }
        let width = edges[1] - edges[0];
        if width <= 0 || edges.windows(2).any(|w| w[1] - w[0] != width) {
            return Err(CorrelatorError::Csv {
                line: 2,
                message: "bins are not uniform".into(),
            });
        }
        let spec = HistogramSpec::new(
            width as u64,
            edges[0],
            edges[0] + width * edges.len() as i64,
        )?;
        Ok(Self {
            counts,
            ..Self::empty(&spec)
        })
    }
}

fn check_channel(channel: u8, channel_count: u8) -> Result<(), CorrelatorError> {
    if channel >= channel_count {
        Err(CorrelatorError::UnknownChannel {
            channel,
            channel_count,
        })
    } else {
        Ok(())
    }
}

#[inline]
fn delay(sig: u64, reference: u64) -> i64 {
    sig.wrapping_sub(reference) as i64
}

/// Histogram of `t_sig - t_ref` over every (reference, signal) pair whose
/// delay falls in the range. With `ch_ref == ch_sig` a tag is never paired
/// with itself.
///
/// Timestamps must be sorted and below `2^63` ps.
pub fn coincidence_histogram(
    tags: &[TimeTag],
    channel_count: u8,
    ch_ref: u8,
    ch_sig: u8,
    spec: &HistogramSpec,
) -> Result<HistogramResult, CorrelatorError> {
    check_channel(ch_ref, channel_count)?;
    check_channel(ch_sig, channel_count)?;
    if let Some(index) = crate::tags::first_unsorted(tags) {
        return Err(CorrelatorError::Unsorted {
            index: index as u64,
            timestamp_ps: tags[index].timestamp_ps,
        });
    }
    let pick = |ch: u8| -> Vec<u64> {
        tags.iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.timestamp_ps)
            .collect()
    };
    let refs = pick(ch_ref);
    let sigs = if ch_sig == ch_ref {
        refs.clone()
    } else {
        pick(ch_sig)
    };
    let mut result = histogram_of_times(&refs, &sigs, ch_ref == ch_sig, spec);
    result.n_ref_events = refs.len() as u64;
    result.n_sig_events = sigs.len() as u64;
    Ok(result)
}

/// Pairs with `|t_sig - t_ref| <= window_ps / 2`.
pub fn window_coincidences(
    tags: &[TimeTag],
    channel_count: u8,
    ch_ref: u8,
    ch_sig: u8,
    window_ps: u64,
) -> Result<u64, CorrelatorError> {
    let half = (window_ps / 2) as i64;
    let spec = HistogramSpec::new(1, -half, half + 1)?;
    Ok(coincidence_histogram(tags, channel_count, ch_ref, ch_sig, &spec)?.total())
}

/// Core sweep over sorted reference and signal times. Reference chunks are
/// processed independently and their histograms added.
fn histogram_of_times(
    refs: &[u64],
    sigs: &[u64],
    same_channel: bool,
    spec: &HistogramSpec,
) -> HistogramResult {
    let n_bins = spec.n_bins();
    let counts = refs
        .par_chunks(REF_CHUNK)
        .enumerate()
        .map(|(chunk_index, chunk)| {
            let mut counts = vec![0u64; n_bins];
            let base = chunk_index * REF_CHUNK;
            let mut lo = sigs.partition_point(|&s| delay(s, chunk[0]) < spec.start_ps);
            for (k, &r) in chunk.iter().enumerate() {
                while lo < sigs.len() && delay(sigs[lo], r) < spec.start_ps {
                    lo += 1;
                }
                let own = base + k;
                for (j, &s) in sigs[lo..].iter().enumerate() {
                    let d = delay(s, r);
                    if d >= spec.end_ps {
                        break;
                    }
                    if same_channel && lo + j == own {
                        continue;
                    }
                    counts[((d - spec.start_ps) as u64 / spec.bin_width_ps) as usize] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    HistogramResult {
        counts,
        ..HistogramResult::empty(spec)
    }
}

/// Single-pass histogram over a tag stream of any length. Memory holds
/// only the tags still able to pair within the delay range.
#[derive(Debug, Clone)]
pub struct HistogramAccumulator {
    spec: HistogramSpec,
    channel_count: u8,
    ch_ref: u8,
    ch_sig: u8,
    refs: VecDeque<u64>,
    sigs: VecDeque<u64>,
    result: HistogramResult,
    seen: u64,
    last: u64,
}

impl HistogramAccumulator {
    pub fn new(
        spec: HistogramSpec,
        channel_count: u8,
        ch_ref: u8,
        ch_sig: u8,
    ) -> Result<Self, CorrelatorError> {
        check_channel(ch_ref, channel_count)?;
        check_channel(ch_sig, channel_count)?;
        Ok(Self {
            result: HistogramResult::empty(&spec),
            spec,
            channel_count,
            ch_ref,
            ch_sig,
            refs: VecDeque::new(),
            sigs: VecDeque::new(),
            seen: 0,
            last: 0,
        })
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<(), CorrelatorError> {
        check_channel(tag.channel, self.channel_count)?;
        let t = tag.timestamp_ps;
        if self.seen > 0 && t < self.last {
            return Err(CorrelatorError::Unsorted {
                index: self.seen,
                timestamp_ps: t,
            });
        }
        self.seen += 1;
        self.last = t;

        let spec = self.spec;
        // Later signal tags only see larger delays, later references only
        // smaller ones.
        while self
            .refs
            .front()
            .is_some_and(|&r| delay(t, r) >= spec.end_ps)
        {
            self.refs.pop_front();
        }
        while self
            .sigs
            .front()
            .is_some_and(|&s| delay(s, t) < spec.start_ps)
        {
            self.sigs.pop_front();
        }

        let is_ref = tag.channel == self.ch_ref;
        let is_sig = tag.channel == self.ch_sig;
        if is_sig {
            self.result.n_sig_events += 1;
            for &r in &self.refs {
                if let Some(b) = spec.bin_of(delay(t, r)) {
                    self.result.counts[b] += 1;
                }
            }
        }
        if is_ref {
            self.result.n_ref_events += 1;
            for &s in &self.sigs {
                if let Some(b) = spec.bin_of(delay(s, t)) {
                    self.result.counts[b] += 1;
                }
            }
        }
        if is_ref {
            self.refs.push_back(t);
        }
        if is_sig {
            self.sigs.push_back(t);
        }
        Ok(())
    }

    pub fn push_all(&mut self, tags: &[TimeTag]) -> Result<(), CorrelatorError> {
        tags.iter().try_for_each(|&t| self.push(t))
    }

    pub fn finish(self) -> HistogramResult {
        self.result
    }
}

/// Streams a tag file through a [`HistogramAccumulator`].
pub fn correlate_file(
    path: impl AsRef<std::path::Path>,
    ch_ref: u8,
    ch_sig: u8,
    spec: HistogramSpec,
) -> Result<(TagHeader, HistogramResult), CorrelatorError> {
    let reader = TagReader::open(path)?;
    let header = reader.header();
    let mut acc = HistogramAccumulator::new(spec, header.channel_count, ch_ref, ch_sig)?;
    for tag in reader {
        acc.push(tag?)?;
    }
    Ok((header, acc.finish()))
}

/// Least-squares height match of an expected shape plus a fixed flat
/// background to measured counts. Returns the scale and `chi^2 / dof`
/// with Poisson variances taken from the fitted expectation.
pub fn height_matched_chi2(counts: &[u64], shape: &[f64], background: f64) -> (f64, f64) {
    assert_eq!(counts.len(), shape.len());
    // Start from the area match and refine with the Pearson weights.
    let excess: f64 = counts.iter().map(|&c| c as f64 - background).sum();
    let mut scale = excess / shape.iter().sum::<f64>();
    for _ in 0..20 {
        let (mut num, mut den) = (0.0, 0.0);
        for (&c, &s) in counts.iter().zip(shape) {
            let var = (scale * s + background).max(1.0);
            num += s * (c as f64 - background) / var;
            den += s * s / var;
        }
        scale = num / den;
    }
    let chi2: f64 = counts
        .iter()
        .zip(shape)
        .map(|(&c, &s)| {
            let e = scale * s + background;
            (c as f64 - e).powi(2) / e.max(1.0)
        })
        .sum();
    (scale, chi2 / (counts.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(list: &[(u64, u8)]) -> Vec<TimeTag> {
        list.iter().map(|&(t, c)| TimeTag::new(t, c)).collect()
    }

    #[test]
    fn single_pair_lands_in_its_bin() {
        let spec = HistogramSpec::new(1000, -10_000, 10_000).unwrap();
        let h = coincidence_histogram(&tags(&[(1000, 0), (6000, 1)]), 2, 0, 1, &spec).unwrap();
        assert_eq!(h.total(), 1);
        let bin = h.counts.iter().position(|&c| c == 1).unwrap();
        assert_eq!(spec.lower_edge(bin), 5000);
        assert_eq!((h.n_ref_events, h.n_sig_events), (1, 1));
    }

    #[test]
    fn counts_all_pairs_not_only_nearest() {
        let spec = HistogramSpec::new(10, -100, 100).unwrap();
        let t = tags(&[(0, 0), (5, 0), (20, 1), (30, 1)]);
        let h = coincidence_histogram(&t, 2, 0, 1, &spec).unwrap();
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn same_channel_excludes_self_pairs() {
        let spec = HistogramSpec::new(10, -50, 50).unwrap();
        let t = tags(&[(0, 0), (20, 0)]);
        let h = coincidence_histogram(&t, 1, 0, 0, &spec).unwrap();
        assert_eq!(h.total(), 2);
        let mut acc = HistogramAccumulator::new(spec, 1, 0, 0).unwrap();
        acc.push_all(&t).unwrap();
        assert_eq!(acc.finish(), h);
    }

    #[test]
    fn binning_validation() {
        assert!(HistogramSpec::new(0, 0, 10).is_err());
        assert!(HistogramSpec::new(3, 0, 10).is_err());
        assert!(HistogramSpec::new(10, 0, 10).is_err());
        assert!(HistogramSpec::new(10, 10, 0).is_err());
        let c = HistogramSpec::centered(1000, 5000).unwrap();
        assert_eq!(c.range_ps(), (-5500, 5500));
        assert_eq!(c.n_bins(), 11);
        let odd = HistogramSpec::centered(3, 4).unwrap();
        assert_eq!(odd.range_ps(), (-7, 8));
    }

    #[test]
    fn unknown_channel_and_empty_stream() {
        let spec = HistogramSpec::new(10, -50, 50).unwrap();
        assert!(matches!(
            coincidence_histogram(&[], 2, 0, 2, &spec),
            Err(CorrelatorError::UnknownChannel { channel: 2, .. })
        ));
        let h = coincidence_histogram(&[], 2, 0, 1, &spec).unwrap();
        assert_eq!(h.counts, vec![0; 10]);
    }

    #[test]
    fn csv_round_trip() {
        let spec = HistogramSpec::new(5, -5, 10).unwrap();
        let h = HistogramResult {
            counts: vec![0, 5, 2],
            ..HistogramResult::empty(&spec)
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "delay_ps,counts\n-5,0\n0,5\n5,2\n");
        let back = HistogramResult::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, h);
        assert!(HistogramResult::read_csv(&b"delay,counts\n"[..]).is_err());
    }

    #[test]
    fn spectral_ratio_detects_modulation() {
        let spec = HistogramSpec::new(1, 0, 1000).unwrap();
        let flat = HistogramResult {
            counts: vec![100; 1000],
            ..HistogramResult::empty(&spec)
        };
        assert!(flat.spectral_ratio(0.1e12) < 1e-9);
        let comb: Vec<u64> = (0..1000)
            .map(|j| if j % 10 == 0 { 100 } else { 0 })
            .collect();
        let comb = HistogramResult {
            counts: comb,
            ..HistogramResult::empty(&spec)
        };
        assert!((comb.spectral_ratio(0.1e12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chi2_of_exact_shape_is_zero() {
        let shape = [1.0, 4.0, 9.0, 4.0, 1.0];
        let counts = [12, 42, 92, 42, 12];
        let (scale, chi2) = height_matched_chi2(&counts, &shape, 2.0);
        assert!((scale - 10.0).abs() < 1e-9);
        assert!(chi2 < 1e-12);
    }
}
