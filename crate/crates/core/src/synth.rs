//! Noisy ellipse traversals with controlled shape and temporal variability.
//!
//! Each series draws semi-axes `a, b`, angular frequency `omega` and phase
//! `phi` around nominal values and emits
//! `center + (a cos(omega t + phi), b sin(omega t + phi)) + noise` at
//! `t = k / fe`. The jitter-free, noise-free process is the neutral shape.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; series `i` uses stream
//! `i` so the output does not depend on generation order. Gaussian noise
//! uses the ziggurat sampler of `rand_distr::StandardNormal`.
//!
//! Temporal functions here map neutral-shape time to the time (seconds) at
//! which the series reaches the same phase, the same direction as the ones
//! estimated by alignment.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::centroid::{NeutralShape, TemporalFunction};
use crate::error::{Error, Result};
use crate::series::{SeriesLabel, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseProcessConfig {
    pub a0: f64,
    pub b0: f64,
    pub center: [f64; 2],
    pub f0: f64,
    pub fe: f64,
    pub phi0: f64,
    pub sigma: f64,
    /// Half-width of the relative uniform jitter on `a` and `b`.
    pub amp_jitter: f64,
    /// Half-width of the relative uniform jitter on `omega`.
    pub freq_jitter: f64,
    /// Half-width of the additive uniform jitter on `phi` (radians).
    pub phase_jitter: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for EllipseProcessConfig {
    fn default() -> Self {
        Self {
            a0: 2.0,
            b0: 1.0,
            center: [1.0, 0.5],
            f0: 1.0,
            fe: 400.0,
            phi0: 0.0,
            sigma: 1.5,
            amp_jitter: 0.25,
            freq_jitter: 0.1,
            phase_jitter: 0.25,
            duration: 1.0,
            seed: 7,
        }
    }
}

impl EllipseProcessConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.a0,
            self.b0,
            self.center[0],
            self.center[1],
            self.f0,
            self.fe,
            self.phi0,
            self.sigma,
            self.amp_jitter,
            self.freq_jitter,
            self.phase_jitter,
            self.duration,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::usage("ellipse parameters must be finite"));
        }
        if !(self.f0 > 0.0) || !(self.fe > 2.0 * self.f0) {
            return Err(Error::usage(format!(
                "need fe > 2 f0 > 0, got f0 = {}, fe = {}",
                self.f0, self.fe
            )));
        }
        if self.sigma < 0.0 || self.amp_jitter < 0.0 || self.freq_jitter < 0.0 || self.phase_jitter < 0.0 {
            return Err(Error::usage("noise and jitter widths must be non-negative"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::usage("duration must be positive"));
        }
        if self.freq_jitter >= 1.0 || self.amp_jitter >= 1.0 {
            return Err(Error::usage("relative jitters must stay below 1"));
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        TAU * self.f0
    }

    /// Samples per nominal traversal.
    pub fn samples(&self) -> usize {
        (self.duration * self.fe).round() as usize
    }

    /// Noise-free point of the neutral shape at time `t` (seconds).
    pub fn neutral_point(&self, t: f64) -> [f64; 2] {
        let p = self.omega0() * t + self.phi0;
        [
            self.center[0] + self.a0 * p.cos(),
            self.center[1] + self.b0 * p.sin(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawnParams {
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub phi: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedSeries {
    pub series: TimeSeries,
    pub xi: TemporalFunction,
    pub params: DrawnParams,
}

fn uniform(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    half_width * (2.0 * rng.random::<f64>() - 1.0)
}

fn emit(
    config: &EllipseProcessConfig,
    params: DrawnParams,
    phase_of_time: impl Fn(f64) -> f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeries> {
    let mut values = Vec::with_capacity(2 * n);
    for k in 0..n {
        let p = phase_of_time(k as f64 / config.fe);
        let mut x = config.center[0] + params.a * p.cos();
        let mut y = config.center[1] + params.b * p.sin();
        if config.sigma > 0.0 {
            x += config.sigma * rng.sample::<f64, _>(StandardNormal);
            y += config.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        values.push(x);
        values.push(y);
    }
    TimeSeries::sampled_at(2, values, config.fe)
}

fn series_label(name: String) -> SeriesLabel {
    SeriesLabel {
        source: Some(name.into()),
        ..Default::default()
    }
}

pub fn generate(config: &EllipseProcessConfig, n_series: usize) -> Result<Vec<GeneratedSeries>> {
    config.validate()?;
    if n_series == 0 {
        return Err(Error::usage("n_series must be at least 1"));
    }
    let n = config.samples();
    if n < 2 {
        return Err(Error::usage("duration * fe must give at least 2 samples"));
    }
    let omega0 = config.omega0();
    (0..n_series)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let params = DrawnParams {
                a: config.a0 * (1.0 + uniform(&mut rng, config.amp_jitter)),
                b: config.b0 * (1.0 + uniform(&mut rng, config.amp_jitter)),
                omega: omega0 * (1.0 + uniform(&mut rng, config.freq_jitter)),
                phi: config.phi0 + uniform(&mut rng, config.phase_jitter),
            };
            let series = emit(config, params, |t| params.omega * t + params.phi, n, &mut rng)?
                .with_label(series_label(format!("series_{i:03}")));
            // Time at which this series reaches the neutral phase of time tau.
            let xi = (0..n)
                .map(|t| {
                    let tau = t as f64 / config.fe;
                    (omega0 * tau + config.phi0 - params.phi) / params.omega
                })
                .collect();
            Ok(GeneratedSeries {
                series,
                xi: TemporalFunction {
                    values: xi,
                    series_ref: format!("series_{i:03}"),
                },
                params,
            })
        })
        .collect()
}

/// Noise-free, jitter-free ellipse at `n` equally spaced times spanning
/// `[0, duration]`, with times as the temporal function.
pub fn theoretical_neutral_shape(config: &EllipseProcessConfig, n: usize) -> Result<NeutralShape> {
    config.validate()?;
    if n < 2 {
        return Err(Error::usage("theoretical shape needs n >= 2"));
    }
    let times: Vec<f64> = (0..n)
        .map(|k| config.duration * k as f64 / (n - 1) as f64)
        .collect();
    let values = times.iter().flat_map(|&t| config.neutral_point(t)).collect();
    NeutralShape::new(2, values, times)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffNominalMode {
    DoubleFreq,
    HalfFreq,
    ConstAccel,
    ConstDecel,
    FreqModulated,
}

impl OffNominalMode {
    pub const ALL: [OffNominalMode; 5] = [
        OffNominalMode::DoubleFreq,
        OffNominalMode::HalfFreq,
        OffNominalMode::ConstAccel,
        OffNominalMode::ConstDecel,
        OffNominalMode::FreqModulated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OffNominalMode::DoubleFreq => "double-freq",
            OffNominalMode::HalfFreq => "half-freq",
            OffNominalMode::ConstAccel => "const-accel",
            OffNominalMode::ConstDecel => "const-decel",
            OffNominalMode::FreqModulated => "freq-modulated",
        }
    }

    /// Series time at which the neutral time `tau` is reached, for a nominal
    /// traversal of length `d`.
    fn xi(self, tau: f64, d: f64) -> f64 {
        let u = tau / d;
        match self {
            OffNominalMode::DoubleFreq => 0.5 * tau,
            OffNominalMode::HalfFreq => 2.0 * tau,
            OffNominalMode::ConstAccel => d * (0.5 * u + 0.5 * u * u),
            OffNominalMode::ConstDecel => d * (1.5 * u - 0.5 * u * u),
            OffNominalMode::FreqModulated => {
                tau + FM_DEPTH * d / (TAU * FM_CYCLES) * (TAU * FM_CYCLES * u).sin()
            }
        }
    }

    /// Inverse of [`Self::xi`]: neutral time reached at series time `s`.
    fn neutral_time(self, s: f64, d: f64) -> f64 {
        let v = s / d;
        match self {
            OffNominalMode::DoubleFreq => 2.0 * s,
            OffNominalMode::HalfFreq => 0.5 * s,
            OffNominalMode::ConstAccel => d * (-0.5 + (0.25 + 2.0 * v).sqrt()),
            OffNominalMode::ConstDecel => d * (1.5 - (2.25 - 2.0 * v).max(0.0).sqrt()),
            OffNominalMode::FreqModulated => {
                // xi is strictly increasing; bisection is plenty.
                let (mut lo, mut hi) = (s - d, s + d);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.xi(mid, d) < s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

const FM_DEPTH: f64 = 0.5;
const FM_CYCLES: f64 = 3.0;

impl FromStr for OffNominalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        OffNominalMode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::usage(format!("unknown off-nominal mode `{s}`")))
    }
}

/// One traversal whose timing departs from the neutral one according to
/// `mode`. Semi-axes are drawn from the process like any other series;
/// frequency and phase are replaced by the mode's temporal function.
pub fn generate_offnominal(
    config: &EllipseProcessConfig,
    mode: OffNominalMode,
) -> Result<GeneratedSeries> {
    config.validate()?;
    let d = config.duration;
    let n_neutral = config.samples();
    let end = mode.xi(d, d);
    let n = (end * config.fe).round() as usize;
    if n < 2 || n_neutral < 2 {
        return Err(Error::usage("off-nominal series would have fewer than 2 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX - mode as u64);
    let params = DrawnParams {
        a: config.a0 * (1.0 + uniform(&mut rng, config.amp_jitter)),
        b: config.b0 * (1.0 + uniform(&mut rng, config.amp_jitter)),
        omega: config.omega0(),
        phi: config.phi0,
    };
    let series = emit(
        config,
        params,
        |s| params.omega * mode.neutral_time(s, d) + params.phi,
        n,
        &mut rng,
    )?
    .with_label(series_label(format!("offnominal_{}", mode.name())));
    let xi = (0..n_neutral)
        .map(|t| mode.xi(t as f64 / config.fe, d))
        .collect();
    Ok(GeneratedSeries {
        series,
        xi: TemporalFunction {
            values: xi,
            series_ref: format!("offnominal_{}", mode.name()),
        },
        params,
    })
}

/// Root mean squared distance between the shape samples and the neutral
/// ellipse evaluated at the shape's own times.
pub fn shape_rmse(config: &EllipseProcessConfig, shape: &NeutralShape) -> f64 {
    let sum: f64 = shape
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = config.neutral_point(t);
            let s = shape.sample(i);
            (s[0] - p[0]).powi(2) + (s[1] - p[1]).powi(2)
        })
        .sum();
    (sum / shape.len() as f64).sqrt()
}

/// Same measure for a raw series at its timestamps.
pub fn series_rmse(config: &EllipseProcessConfig, series: &TimeSeries) -> f64 {
    let sum: f64 = (0..series.len())
        .map(|i| {
            let p = config.neutral_point(series.time_at(i as f64));
            let s = series.sample(i);
            (s[0] - p[0]).powi(2) + (s[1] - p[1]).powi(2)
        })
        .sum();
    (sum / series.len() as f64).sqrt()
}
