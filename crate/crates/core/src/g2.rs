//! Heralded second-order auto-correlation from a trigger channel and two
//! arms behind a beam splitter.
//!
//! `g2 = N23 * N1 / (N2 * N3)` with `N1` triggers, `N2`/`N3` trigger
//! windows holding at least one tag on each arm, and `N23` windows holding
//! tags on both. At the measurement window `N23` is usually zero or a
//! handful of counts, so it is estimated from wider windows and
//! extrapolated back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlator::CorrelatorError;
use crate::tags::TimeTag;

#[derive(Debug, Error)]
pub enum G2Error {
    #[error("no trigger tags on channel {0}")]
    NoTriggers(u8),
    #[error("no windows with a tag on arm channel {0}; g2 is undefined")]
    EmptyArm(u8),
    #[error("trigger and arm channels must be distinct, got {0}, {1}, {2}")]
    ChannelsNotDistinct(u8, u8, u8),
    #[error("invalid g2 options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Input(#[from] CorrelatorError),
}

/// Functional form fitted to `N23(W)` over the extrapolation windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapolationModel {
    /// No fit: `N23` counted at the measurement window.
    Direct,
    /// `b W + c W^2`. The linear term carries one-pair-plus-accidental
    /// triples, the quadratic term two independent accidentals.
    LinearQuadratic,
    /// `a + b W^2`.
    OffsetQuadratic,
    /// `b W^2`.
    Quadratic,
}

impl ExtrapolationModel {
    fn basis(self, w: f64) -> Vec<f64> {
        match self {
            Self::Direct => vec![],
            Self::LinearQuadratic => vec![w, w * w],
            Self::OffsetQuadratic => vec![1.0, w * w],
            Self::Quadratic => vec![w * w],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::LinearQuadratic => "linear-quadratic",
            Self::OffsetQuadratic => "offset-quadratic",
            Self::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for ExtrapolationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtrapolationModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Self::Direct,
            Self::LinearQuadratic,
            Self::OffsetQuadratic,
            Self::Quadratic,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown extrapolation model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2Options {
    pub ch_trigger: u8,
    pub ch_a: u8,
    pub ch_b: u8,
    /// Full width of the symmetric window around each trigger, ps.
    pub window_ps: u64,
    pub extrapolation_windows_ps: Vec<u64>,
    /// Only windows at least this wide enter the fit.
    pub fit_min_window_ps: u64,
    pub model: ExtrapolationModel,
    /// Multiplier applied to the extrapolated `N23`; 2 allows for thermal
    /// bunching of the pair source.
    pub bunching_factor: f64,
}

pub const DEFAULT_WINDOW_PS: u64 = 40_000;
pub const DEFAULT_MAX_WINDOW_PS: u64 = 2_000_000;

/// Ten evenly spaced windows up to `max_window_ps`.
pub fn extrapolation_grid(max_window_ps: u64) -> Vec<u64> {
    (1..=10).map(|k| max_window_ps * k / 10).collect()
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            ch_trigger: 0,
            ch_a: 1,
            ch_b: 2,
            window_ps: DEFAULT_WINDOW_PS,
            extrapolation_windows_ps: extrapolation_grid(DEFAULT_MAX_WINDOW_PS),
            fit_min_window_ps: 200_000,
            model: ExtrapolationModel::LinearQuadratic,
            bunching_factor: 2.0,
        }
    }
}

impl G2Options {
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.ch_trigger == self.ch_a || self.ch_trigger == self.ch_b || self.ch_a == self.ch_b {
            issues.push(format!(
                "g2 channels must be distinct, got trigger {} and arms {}, {}",
                self.ch_trigger, self.ch_a, self.ch_b
            ));
        }
        if self.window_ps == 0 {
            issues.push("g2.window_ps must be positive".into());
        }
        if !(self.bunching_factor.is_finite() && self.bunching_factor > 0.0) {
            issues.push(format!(
                "g2.bunching_factor must be positive, got {}",
                self.bunching_factor
            ));
        }
        if self.model != ExtrapolationModel::Direct {
            let n_fit = self.fit_windows().len();
            let needed = self.model.basis(1.0).len() + 1;
            if n_fit < needed {
                issues.push(format!(
                    "g2 fit needs at least {needed} extrapolation windows >= {} ps, got {n_fit}",
                    self.fit_min_window_ps
                ));
            }
        }
        if self.extrapolation_windows_ps.contains(&0) {
            issues.push("g2 extrapolation windows must be positive".into());
        }
        issues
    }

    fn fit_windows(&self) -> Vec<u64> {
        self.extrapolation_windows_ps
            .iter()
            .copied()
            .filter(|&w| w >= self.fit_min_window_ps)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Report {
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    /// Estimated joint windows at `window_ps`, bunching factor included.
    pub n23: f64,
    /// Joint windows counted directly at `window_ps`.
    pub n23_direct: u64,
    pub window_ps: u64,
    pub extrapolation_windows_ps: Vec<u64>,
    /// Joint windows counted at each extrapolation window.
    pub n23_by_window: Vec<u64>,
    pub model: ExtrapolationModel,
    pub bunching_factor: f64,
    pub g2_value: f64,
    pub g2_stderr: f64,
}

impl G2Report {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let windows: Vec<String> = self
            .extrapolation_windows_ps
            .iter()
            .map(|w| w.to_string())
            .collect();
        format!(
            "n1 = {}\nn2 = {}\nn3 = {}\nn23 = {:.6}\nn23_direct = {}\nwindow_ps = {}\n\
             extrapolation_windows_ps = [{}]\nmodel = {}\nbunching_factor = {}\n\
             g2_value = {:.6}\ng2_stderr = {:.6}\n",
            self.n1,
            self.n2,
            self.n3,
            self.n23,
            self.n23_direct,
            self.window_ps,
            windows.join(", "),
            self.model,
            self.bunching_factor,
            self.g2_value,
            self.g2_stderr
        )
    }

    /// CSV `window_ps,n23` of the counts behind the extrapolation.
    pub fn n23_csv(&self) -> String {
        let mut out = String::from("window_ps,n23\n");
        for (w, n) in self
            .extrapolation_windows_ps
            .iter()
            .zip(&self.n23_by_window)
        {
            out.push_str(&format!("{w},{n}\n"));
        }
        out
    }
}

/// Whether each trigger's window `[t - half, t + half]` holds an arm tag.
/// Triggers and arm times are sorted.
fn window_hits(triggers: &[u64], arm: &[u64], half: u64) -> Vec<bool> {
    let mut lo = 0;
    triggers
        .iter()
        .map(|&t| {
            let from = t.saturating_sub(half);
            while lo < arm.len() && arm[lo] < from {
                lo += 1;
            }
            lo < arm.len() && arm[lo] <= t.saturating_add(half)
        })
        .collect()
}

fn joint_count(triggers: &[u64], a: &[u64], b: &[u64], window_ps: u64) -> u64 {
    let half = window_ps / 2;
    let ha = window_hits(triggers, a, half);
    let hb = window_hits(triggers, b, half);
    ha.iter().zip(&hb).filter(|(x, y)| **x && **y).count() as u64
}

/// Weighted least squares for `y = X beta` with weights `1 / max(y, 1)`.
/// Returns the prediction at `x0` and its variance.
fn fit_and_predict(xs: &[Vec<f64>], ys: &[f64], x0: &[f64]) -> (f64, f64) {
    let p = x0.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for (x, &y) in xs.iter().zip(ys) {
        let w = 1.0 / y.max(1.0);
        for i in 0..p {
            rhs[i] += w * x[i] * y;
            for j in 0..p {
                a[i][j] += w * x[i] * x[j];
            }
        }
    }
    let inv = invert(&a);
    let beta: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|j| inv[i][j] * rhs[j]).sum())
        .collect();
    let pred: f64 = (0..p).map(|i| x0[i] * beta[i]).sum();
    let var: f64 = (0..p)
        .map(|i| (0..p).map(|j| x0[i] * inv[i][j] * x0[j]).sum::<f64>())
        .sum();
    (pred, var)
}

/// Inverse of a 1x1 or 2x2 matrix.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match a.len() {
        1 => vec![vec![1.0 / a[0][0]]],
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            vec![
                vec![a[1][1] / det, -a[0][1] / det],
                vec![-a[1][0] / det, a[0][0] / det],
            ]
        }
        n => unreachable!("no {n}-parameter extrapolation model"),
    }
}

pub fn heralded_g2(tags: &[TimeTag], opts: &G2Options) -> Result<G2Report, G2Error> {
    if opts.ch_trigger == opts.ch_a || opts.ch_trigger == opts.ch_b || opts.ch_a == opts.ch_b {
        return Err(G2Error::ChannelsNotDistinct(
            opts.ch_trigger,
            opts.ch_a,
            opts.ch_b,
        ));
    }
    let issues = opts.issues();
    if !issues.is_empty() {
        return Err(G2Error::InvalidOptions(issues.join("; ")));
    }
    if let Some(index) = crate::tags::first_unsorted(tags) {
        return Err(CorrelatorError::Unsorted {
            index: index as u64,
            timestamp_ps: tags[index].timestamp_ps,
        }
        .into());
    }
    let pick = |ch: u8| -> Vec<u64> {
        tags.iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.timestamp_ps)
            .collect()
    };
    let triggers = pick(opts.ch_trigger);
    let a = pick(opts.ch_a);
    let b = pick(opts.ch_b);
    if triggers.is_empty() {
        return Err(G2Error::NoTriggers(opts.ch_trigger));
    }

    let half = opts.window_ps / 2;
    let ha = window_hits(&triggers, &a, half);
    let hb = window_hits(&triggers, &b, half);
    let n1 = triggers.len() as u64;
    let n2 = ha.iter().filter(|&&x| x).count() as u64;
    let n3 = hb.iter().filter(|&&x| x).count() as u64;
    if n2 == 0 {
        return Err(G2Error::EmptyArm(opts.ch_a));
    }
    if n3 == 0 {
        return Err(G2Error::EmptyArm(opts.ch_b));
    }
    let n23_direct = ha.iter().zip(&hb).filter(|(x, y)| **x && **y).count() as u64;
    let n23_by_window: Vec<u64> = opts
        .extrapolation_windows_ps
        .iter()
        .map(|&w| joint_count(&triggers, &a, &b, w))
        .collect();

    let us = |w: u64| w as f64 * 1e-6;
    let (estimate, variance) = match opts.model {
        ExtrapolationModel::Direct => (n23_direct as f64, (n23_direct as f64).max(1.0)),
        model => {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = opts
                .extrapolation_windows_ps
                .iter()
                .zip(&n23_by_window)
                .filter(|(&w, _)| w >= opts.fit_min_window_ps)
                .map(|(&w, &n)| (model.basis(us(w)), n as f64))
                .unzip();
            fit_and_predict(&xs, &ys, &model.basis(us(opts.window_ps)))
        }
    };
    let n23 = (opts.bunching_factor * estimate).clamp(0.0, n2.min(n3) as f64);
    let scale = n1 as f64 / (n2 as f64 * n3 as f64);
    Ok(G2Report {
        n1,
        n2,
        n3,
        n23,
        n23_direct,
        window_ps: opts.window_ps,
        extrapolation_windows_ps: opts.extrapolation_windows_ps.clone(),
        n23_by_window,
        model: opts.model,
        bunching_factor: opts.bunching_factor,
        g2_value: n23 * scale,
        g2_stderr: opts.bunching_factor * variance.max(0.0).sqrt() * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_is_closed_on_both_sides() {
        let triggers = [1000];
        assert_eq!(window_hits(&triggers, &[980], 20), vec![true]);
        assert_eq!(window_hits(&triggers, &[1020], 20), vec![true]);
        assert_eq!(window_hits(&triggers, &[979, 1021], 20), vec![false]);
        assert_eq!(window_hits(&[5], &[0], 20), vec![true]);
    }

    #[test]
    fn multiple_tags_count_one_window() {
        let tags: Vec<TimeTag> = [(100, 0), (101, 1), (102, 1), (103, 2), (104, 2)]
            .iter()
            .map(|&(t, c)| TimeTag::new(t, c))
            .collect();
        let opts = G2Options {
            model: ExtrapolationModel::Direct,
            ..G2Options::default()
        };
        let r = heralded_g2(&tags, &opts).unwrap();
        assert_eq!((r.n1, r.n2, r.n3, r.n23_direct), (1, 1, 1, 1));
    }

    #[test]
    fn undefined_cases_are_errors() {
        let opts = G2Options::default();
        assert!(matches!(
            heralded_g2(&[], &opts),
            Err(G2Error::NoTriggers(0))
        ));
        let only_a = [TimeTag::new(10, 0), TimeTag::new(12, 1)];
        assert!(matches!(
            heralded_g2(&only_a, &opts),
            Err(G2Error::EmptyArm(2))
        ));
        let same = G2Options {
            ch_b: 1,
            ..G2Options::default()
        };
        assert!(matches!(
            heralded_g2(&only_a, &same),
            Err(G2Error::ChannelsNotDistinct(..))
        ));
    }

    #[test]
    fn fit_recovers_exact_polynomial() {
        let ws = [0.2, 0.4, 0.6, 0.8, 1.0];
        let xs: Vec<Vec<f64>> = ws
            .iter()
            .map(|&w| ExtrapolationModel::LinearQuadratic.basis(w))
            .collect();
        let ys: Vec<f64> = ws.iter().map(|&w| 30.0 * w + 500.0 * w * w).collect();
        let (pred, var) = fit_and_predict(&xs, &ys, &[0.04, 0.0016]);
        assert!((pred - (30.0 * 0.04 + 500.0 * 0.0016)).abs() < 1e-9);
        assert!(var > 0.0);
    }

    #[test]
    fn options_validation() {
        assert!(G2Options::default().issues().is_empty());
        let bad = G2Options {
            extrapolation_windows_ps: vec![40_000],
            bunching_factor: 0.0,
            ..G2Options::default()
        };
        assert_eq!(bad.issues().len(), 2);
        assert_eq!(
            "offset-quadratic".parse(),
            Ok(ExtrapolationModel::OffsetQuadratic)
        );
    }
}
