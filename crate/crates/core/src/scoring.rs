//! Shape and temporal dissimilarities, their fusion, and subject models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_expectations, forward_backward, sq_dist, KernelParam, RowExpectations};
use crate::centroid::{
    estimate_neutral_shape, CentroidOptions, CentroidTrace, NeutralShape, TemporalFunction,
};
use crate::error::{Error, Result};
use crate::series::{
    check_same_dim, fit_normalization, normalize, ChannelPolicy, Class, NormalizationStats,
    TimeSeries,
};

pub const DEFAULT_ALPHA: f64 = 0.85;

/// Exponents `j` tried by [`tune_nu`]; the kernel scale is `nu_base * 2^j`.
pub const NU_GRID: std::ops::RangeInclusive<i32> = -4..=4;

/// Minimum mean row entropy (nats) of the alignment posterior accepted by
/// [`tune_nu`]: half the entropy of a uniform choice among three cells.
pub fn entropy_floor() -> f64 {
    3f64.ln() / 2.0
}

/// Mean squared distance between the reference rows and their aligned
/// expectations.
pub(crate) fn aligned_squared_error(reference: &TimeSeries, e: &RowExpectations) -> f64 {
    let n = reference.len();
    let sum: f64 = (0..n).map(|t| sq_dist(reference.sample(t), e.expected_sample(t))).sum();
    sum / n as f64
}

/// Mean squared difference between each shape sample and the expected
/// sample of `o` aligned with it.
pub fn shape_dissimilarity(o: &TimeSeries, shape: &NeutralShape, k: KernelParam) -> Result<f64> {
    let e = align_expectations(shape.series(), o, k)?;
    Ok(aligned_squared_error(shape.series(), &e))
}

/// Least-squares slope of `values` against the one-based index.
pub fn regression_slope(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "slope needs at least 2 points, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean_x = (n + 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = (i + 1) as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Trapezoidal area under `values` on a unit-spaced index grid.
pub fn area_under_curve(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "area needs at least 2 points, got {}",
            values.len()
        )));
    }
    Ok(values.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum())
}

pub fn temporal_dissimilarity_with(xi: &[f64], mean_slope: f64, mean_auc: f64) -> Result<f64> {
    if !(mean_slope > 0.0 && mean_auc > 0.0) {
        return Err(Error::usage(format!(
            "model statistics must be positive (slope {mean_slope}, auc {mean_auc})"
        )));
    }
    let s = regression_slope(xi)? / mean_slope - 1.0;
    let a = area_under_curve(xi)? / mean_auc - 1.0;
    Ok(s * s * (a * a))
}

pub fn temporal_dissimilarity(xi: &TemporalFunction, model: &SubjectModel) -> Result<f64> {
    temporal_dissimilarity_with(&xi.values, model.mean_slope, model.mean_auc)
}

pub fn fused_score(delta_f: f64, delta_t: f64, alpha: f64) -> f64 {
    alpha * delta_f.ln_1p() + (1.0 - alpha) * delta_t.ln_1p()
}

/// Diagonal (index-proportional) pairing of two series, as squared
/// distances.
fn diagonal_sq_dists<'a>(a: &'a TimeSeries, b: &'a TimeSeries) -> impl Iterator<Item = f64> + 'a {
    let (n, m) = (a.len(), b.len());
    (0..n).map(move |t| {
        let u = ((t * (m - 1)) as f64 / (n - 1) as f64).round() as usize;
        sq_dist(a.sample(t), b.sample(u))
    })
}

/// Kernel scale `1 / (d * m2)` with `m2` the mean squared distance between
/// diagonally paired samples of all training pairs.
pub fn nu_base(training_set: &[TimeSeries]) -> Result<f64> {
    let dim = check_same_dim(training_set)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, a) in training_set.iter().enumerate() {
        for b in &training_set[i + 1..] {
            for d in diagonal_sq_dists(a, b) {
                sum += d;
                count += 1;
            }
        }
    }
    let mut m2 = if count > 0 { sum / count as f64 } else { 0.0 };
    if !(m2 > 0.0) {
        // Fall back to the expected squared distance between two
        // independent pooled samples.
        let stats = fit_normalization(training_set, &vec![ChannelPolicy::ZScore; dim])?;
        m2 = 2.0 * stats.stds.iter().map(|s| s * s).sum::<f64>();
    }
    if !(m2 > 0.0) {
        m2 = 1.0;
    }
    Ok(1.0 / (dim as f64 * m2))
}

pub fn mean_row_entropy(a: &TimeSeries, b: &TimeSeries, k: KernelParam) -> Result<f64> {
    let post = forward_backward(a, b, k)?;
    let mut total = 0.0;
    for t in 0..post.rows() {
        let h: f64 = post
            .row_conditional(t)?
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        total += h;
    }
    Ok(total / post.rows() as f64)
}

/// Largest kernel scale on the grid `nu_base * 2^j` for which every
/// training pair keeps a mean posterior row entropy above
/// [`entropy_floor`]. Falls back to the smallest grid value.
pub fn tune_nu(training_set: &[TimeSeries]) -> Result<KernelParam> {
    if training_set.len() < 2 {
        return Err(Error::usage(format!(
            "kernel tuning needs at least 2 series, got {}",
            training_set.len()
        )));
    }
    let base = nu_base(training_set)?;
    let pairs: Vec<(usize, usize)> = (0..training_set.len())
        .flat_map(|i| (i + 1..training_set.len()).map(move |j| (i, j)))
        .collect();
    let floor = entropy_floor();
    for j in NU_GRID.rev() {
        let k = KernelParam::new(base * 2f64.powi(j))?;
        let ok = pairs.par_iter().all(|&(a, b)| {
            mean_row_entropy(&training_set[a], &training_set[b], k)
                .map(|h| h > floor)
                .unwrap_or(false)
        });
        if ok {
            log::debug!("tuned nu = {} (j = {j})", k.nu());
            return Ok(k);
        }
    }
    log::warn!("no kernel scale keeps the posterior entropy above the floor; using the smallest");
    KernelParam::new(base * 2f64.powi(*NU_GRID.start()))
}

/// Enrollment artifact of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectModel {
    pub shape: NeutralShape,
    /// Mean regression slope of the training temporal functions
    /// (seconds per shape index).
    pub mean_slope: f64,
    /// Mean trapezoidal area under the training temporal functions
    /// (seconds times shape index).
    pub mean_auc: f64,
    pub nu: KernelParam,
    pub alpha: f64,
    pub norm_stats: NormalizationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollOptions {
    pub alpha: f64,
    /// Per-channel normalization; all channels z-scored when absent.
    pub policy: Option<Vec<ChannelPolicy>>,
    /// Skip tuning and use this kernel scale.
    pub nu: Option<KernelParam>,
    pub centroid: CentroidOptions,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            policy: None,
            nu: None,
            centroid: CentroidOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enrollment {
    pub model: SubjectModel,
    pub trace: CentroidTrace,
    pub training_xi: Vec<TemporalFunction>,
}

pub fn enroll(genuine_set: &[TimeSeries], opts: &EnrollOptions) -> Result<SubjectModel> {
    enroll_detailed(genuine_set, opts).map(|e| e.model)
}

pub fn enroll_detailed(genuine_set: &[TimeSeries], opts: &EnrollOptions) -> Result<Enrollment> {
    if genuine_set.len() < 2 {
        return Err(Error::usage(format!(
            "enrollment needs at least 2 genuine series, got {}",
            genuine_set.len()
        )));
    }
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(Error::usage(format!("alpha must lie in [0, 1], got {}", opts.alpha)));
    }
    let dim = check_same_dim(genuine_set)?;
    let policy = opts
        .policy
        .clone()
        .unwrap_or_else(|| vec![ChannelPolicy::ZScore; dim]);
    let norm_stats = fit_normalization(genuine_set, &policy)?;
    let normalized = genuine_set
        .iter()
        .map(|s| normalize(s, &norm_stats))
        .collect::<Result<Vec<_>>>()?;
    let nu = match opts.nu {
        Some(k) => k,
        None => tune_nu(&normalized)?,
    };
    let (shape, trace) = estimate_neutral_shape(&normalized, nu, opts.centroid)?;
    let training_xi = normalized
        .par_iter()
        .map(|s| crate::centroid::extract_temporal_function(s, &shape, nu))
        .collect::<Result<Vec<_>>>()?;
    let n = training_xi.len() as f64;
    let mut mean_slope = 0.0;
    let mut mean_auc = 0.0;
    for xi in &training_xi {
        mean_slope += regression_slope(&xi.values)? / n;
        mean_auc += area_under_curve(&xi.values)? / n;
    }
    if !(mean_slope > 0.0 && mean_auc > 0.0) {
        return Err(Error::Degenerate(format!(
            "training temporal functions have non-positive statistics (slope {mean_slope}, auc {mean_auc})"
        )));
    }
    Ok(Enrollment {
        model: SubjectModel {
            shape,
            mean_slope,
            mean_auc,
            nu,
            alpha: opts.alpha,
            norm_stats,
        },
        trace,
        training_xi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub delta_f: f64,
    pub delta_t: f64,
    pub delta: f64,
    pub label: Class,
    pub series_ref: String,
}

/// Scores a raw (unnormalized) series against a model. Lower is more
/// genuine-like.
pub fn score(o: &TimeSeries, model: &SubjectModel) -> Result<ScoreRecord> {
    let x = normalize(o, &model.norm_stats)?;
    let e = align_expectations(model.shape.series(), &x, model.nu)?;
    let delta_f = aligned_squared_error(model.shape.series(), &e);
    let xi: Vec<f64> = e.expected_time.iter().map(|et| x.time_at(et - 1.0)).collect();
    let delta_t = temporal_dissimilarity_with(&xi, model.mean_slope, model.mean_auc)?;
    Ok(ScoreRecord {
        delta_f,
        delta_t,
        delta: fused_score(delta_f, delta_t, model.alpha),
        label: o.label.class,
        series_ref: o.label.id(),
    })
}
