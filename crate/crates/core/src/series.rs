//! Time series container and dataset normalization.
//!
//! Samples are stored row-major in one flat buffer: sample `i` occupies
//! `values[i * dim..(i + 1) * dim]`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Genuine,
    Forgery,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesLabel {
    pub subject: Option<String>,
    pub class: Class,
    pub source: Option<PathBuf>,
}

impl SeriesLabel {
    /// Short identifier used in reports and output file names.
    pub fn id(&self) -> String {
        match &self.source {
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            None => "series".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dim: usize,
    values: Vec<f64>,
    timestamps: Option<Vec<f64>>,
    pub label: SeriesLabel,
}

impl TimeSeries {
    /// Builds a series from a flat row-major buffer.
    pub fn new(dim: usize, values: Vec<f64>, timestamps: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("series dimension must be at least 1"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                values.len()
            )));
        }
        let n = values.len() / dim;
        if n < 2 {
            return Err(Error::usage(format!("series needs at least 2 samples, got {n}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value in sample {} channel {}",
                i / dim,
                i % dim
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(Error::usage(format!(
                    "{} timestamps for {n} samples",
                    ts.len()
                )));
            }
            if ts.iter().any(|t| !t.is_finite()) {
                return Err(Error::Numeric("non-finite timestamp".into()));
            }
            if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::usage(format!(
                    "timestamps not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            dim,
            values,
            timestamps,
            label: SeriesLabel::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], timestamps: Option<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(dim, rows.concat(), timestamps)
    }

    /// Uniformly sampled series at `fe` hz starting at t = 0.
    pub fn sampled_at(dim: usize, values: Vec<f64>, fe: f64) -> Result<Self> {
        if !(fe > 0.0 && fe.is_finite()) {
            return Err(Error::usage(format!("sampling frequency must be positive, got {fe}")));
        }
        let n = values.len() / dim.max(1);
        let ts = (0..n).map(|i| i as f64 / fe).collect();
        Self::new(dim, values, Some(ts))
    }

    pub fn with_label(mut self, label: SeriesLabel) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    /// Time in seconds at a fractional zero-based sample index, by linear
    /// interpolation of the timestamps. Series without timestamps use the
    /// index itself as time. Indices outside `[0, n-1]` are clamped.
    pub fn time_at(&self, index: f64) -> f64 {
        let last = (self.len() - 1) as f64;
        let x = index.clamp(0.0, last);
        match &self.timestamps {
            None => x,
            Some(ts) => {
                let i = (x.floor() as usize).min(ts.len() - 2);
                let w = x - i as f64;
                ts[i] + w * (ts[i + 1] - ts[i])
            }
        }
    }

    /// Keeps every `step`-th sample (and its timestamp). Used to build
    /// sped-up variants of a recording.
    pub fn decimate(&self, step: usize) -> Result<Self> {
        let step = step.max(1);
        let idx: Vec<usize> = (0..self.len()).step_by(step).collect();
        let values = idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect();
        let ts = self.timestamps.as_ref().map(|_| {
            // Re-stamp on the original grid so the decimated series plays faster.
            (0..idx.len()).map(|k| self.time_at(k as f64)).collect()
        });
        Ok(Self::new(self.dim, values, ts)?.with_label(self.label.clone()))
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let dim = self.dim;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % dim, v))
            .collect();
        Self {
            dim,
            values,
            timestamps: self.timestamps.clone(),
            label: self.label.clone(),
        }
    }
}

pub(crate) fn check_same_dim(series: &[TimeSeries]) -> Result<usize> {
    let dim = series
        .first()
        .ok_or_else(|| Error::usage("empty series set"))?
        .dim();
    for s in series {
        if s.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    Ok(dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelPolicy {
    #[serde(rename = "z-score")]
    ZScore,
    #[serde(rename = "min-max")]
    MinMax,
}

impl ChannelPolicy {
    /// Positions and pressure are standardized, every other channel is
    /// mapped into the unit interval.
    pub fn for_channel(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "x" | "y" | "z" | "pressure" => ChannelPolicy::ZScore,
            _ => ChannelPolicy::MinMax,
        }
    }

    pub fn for_channels<S: AsRef<str>>(names: &[S]) -> Vec<Self> {
        names.iter().map(|n| Self::for_channel(n.as_ref())).collect()
    }
}

impl std::str::FromStr for ChannelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z-score" | "zscore" | "z" => Ok(ChannelPolicy::ZScore),
            "min-max" | "minmax" | "m" => Ok(ChannelPolicy::MinMax),
            other => Err(Error::usage(format!("unknown channel policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub policy: Vec<ChannelPolicy>,
    /// Channels that could not be scaled under their policy; they are
    /// mapped to the constant 0.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

impl NormalizationStats {
    /// Stats that leave every channel unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
            mins: vec![0.0; dim],
            maxs: vec![1.0; dim],
            policy: vec![ChannelPolicy::ZScore; dim],
            degenerate: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.policy.len()
    }

    fn is_degenerate(&self, ch: usize) -> bool {
        match self.policy[ch] {
            ChannelPolicy::ZScore => !(self.stds[ch] > 0.0),
            ChannelPolicy::MinMax => !(self.maxs[ch] > self.mins[ch]),
        }
    }
}

/// Pooled per-channel statistics over every sample of every series.
pub fn fit_normalization(
    series_set: &[TimeSeries],
    policy: &[ChannelPolicy],
) -> Result<NormalizationStats> {
    let dim = check_same_dim(series_set)?;
    if policy.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: policy.len(),
        });
    }
    let count: usize = series_set.iter().map(TimeSeries::len).sum();
    let mut sums = vec![0.0; dim];
    let mut mins = vec![f64::INFINITY; dim];
    let mut maxs = vec![f64::NEG_INFINITY; dim];
    for s in series_set {
        for x in s.samples() {
            for ch in 0..dim {
                sums[ch] += x[ch];
                mins[ch] = mins[ch].min(x[ch]);
                maxs[ch] = maxs[ch].max(x[ch]);
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    // Second pass for the variance to avoid cancellation.
    let mut sq = vec![0.0; dim];
    for s in series_set {
        for x in s.samples() {
            for ch in 0..dim {
                let d = x[ch] - means[ch];
                sq[ch] += d * d;
            }
        }
    }
    let stds = sq.iter().map(|v| (v / count as f64).sqrt()).collect();
    let mut stats = NormalizationStats {
        means,
        stds,
        mins,
        maxs,
        policy: policy.to_vec(),
        degenerate: Vec::new(),
    };
    stats.degenerate = (0..dim).filter(|&ch| stats.is_degenerate(ch)).collect();
    for &ch in &stats.degenerate {
        log::warn!("channel {ch} is degenerate under {:?}; mapped to 0", stats.policy[ch]);
    }
    Ok(stats)
}

pub fn normalize(series: &TimeSeries, stats: &NormalizationStats) -> Result<TimeSeries> {
    if series.dim() != stats.dim() {
        return Err(Error::Dimension {
            expected: stats.dim(),
            found: series.dim(),
        });
    }
    Ok(series.map_values(|ch, v| {
        if stats.is_degenerate(ch) {
            return 0.0;
        }
        match stats.policy[ch] {
            ChannelPolicy::ZScore => (v - stats.means[ch]) / stats.stds[ch],
            ChannelPolicy::MinMax => (v - stats.mins[ch]) / (stats.maxs[ch] - stats.mins[ch]),
        }
    }))
}

/// Inverse of [`normalize`]. Degenerate channels come back as their mean
/// (z-score) or minimum (min-max).
pub fn denormalize(series: &TimeSeries, stats: &NormalizationStats) -> Result<TimeSeries> {
    if series.dim() != stats.dim() {
        return Err(Error::Dimension {
            expected: stats.dim(),
            found: series.dim(),
        });
    }
    Ok(series.map_values(|ch, v| match (stats.policy[ch], stats.is_degenerate(ch)) {
        (ChannelPolicy::ZScore, true) => stats.means[ch],
        (ChannelPolicy::MinMax, true) => stats.mins[ch],
        (ChannelPolicy::ZScore, false) => v * stats.stds[ch] + stats.means[ch],
        (ChannelPolicy::MinMax, false) => v * (stats.maxs[ch] - stats.mins[ch]) + stats.mins[ch],
    }))
}
