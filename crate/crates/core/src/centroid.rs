//! Time-elastic centroid (neutral shape) estimation and temporal function
//! extraction.
//!
//! The centroid of a set is built by aligning a reference against every
//! member and averaging, row by row, the expected aligned samples and the
//! expected aligned times. Iterating with the centroid as the new reference
//! refines it while the mean shape dissimilarity (inertia) keeps dropping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_expectations, forward_backward, KernelParam, RowExpectations};
use crate::error::{Error, Result};
use crate::series::{check_same_dim, TimeSeries};

/// Centroid samples with the expected occurrence time (seconds) of each.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralShape {
    samples: TimeSeries,
    times: Vec<f64>,
}

impl NeutralShape {
    pub fn new(dim: usize, samples: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        let samples = TimeSeries::new(dim, samples, None)?;
        if times.len() != samples.len() {
            return Err(Error::usage(format!(
                "{} times for {} shape samples",
                times.len(),
                samples.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite shape time".into()));
        }
        Ok(Self { samples, times })
    }

    /// A series taken as-is; times are its timestamps (or indices).
    pub fn from_series(series: &TimeSeries) -> Self {
        let times = (0..series.len()).map(|i| series.time_at(i as f64)).collect();
        let samples = TimeSeries::new(series.dim(), series.values().to_vec(), None)
            .expect("a valid series stays valid without timestamps");
        Self { samples, times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        self.samples.sample(t)
    }

    pub fn values(&self) -> &[f64] {
        self.samples.values()
    }

    /// The shape samples as an (untimed) series, for alignment.
    pub fn series(&self) -> &TimeSeries {
        &self.samples
    }
}

/// Expected alignment time (seconds, in the source series' clock) for each
/// neutral-shape index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFunction {
    pub values: Vec<f64>,
    pub series_ref: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CentroidTrace {
    /// Inertia of the initial medoid followed by every accepted refinement.
    pub inertia: Vec<f64>,
    /// Refinement steps evaluated, accepted or not.
    pub iterations: usize,
    /// True when the loop stopped on a non-improving step rather than on
    /// the iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for CentroidOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            rel_tol: 1e-4,
        }
    }
}

/// Index of the member with the largest summed log alignment score to the
/// others. Ties go to the lowest index.
pub fn medoid_index(series_set: &[TimeSeries], k: KernelParam) -> Result<usize> {
    check_same_dim(series_set)?;
    let n = series_set.len();
    if n == 1 {
        return Ok(0);
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let scores = pairs
        .par_iter()
        .map(|&(i, j)| forward_backward(&series_set[i], &series_set[j], k).map(|p| p.log_total()))
        .collect::<Result<Vec<f64>>>()?;
    let mut totals = vec![0.0; n];
    for (&(i, j), s) in pairs.iter().zip(&scores) {
        totals[i] += s;
        totals[j] += s;
    }
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t > totals[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn medoid(series_set: &[TimeSeries], k: KernelParam) -> Result<&TimeSeries> {
    Ok(&series_set[medoid_index(series_set, k)?])
}

fn align_set(
    reference: &TimeSeries,
    series_set: &[TimeSeries],
    k: KernelParam,
) -> Result<Vec<RowExpectations>> {
    series_set
        .par_iter()
        .map(|s| align_expectations(reference, s, k))
        .collect()
}

fn average_expectations(
    reference: &TimeSeries,
    series_set: &[TimeSeries],
    aligned: &[RowExpectations],
) -> Result<NeutralShape> {
    let n = reference.len();
    let dim = reference.dim();
    let weight = 1.0 / series_set.len() as f64;
    let mut samples = vec![0.0; n * dim];
    let mut times = vec![0.0; n];
    for (s, e) in series_set.iter().zip(aligned) {
        for (acc, v) in samples.iter_mut().zip(e.expected_samples()) {
            *acc += weight * v;
        }
        for (acc, et) in times.iter_mut().zip(&e.expected_time) {
            *acc += weight * s.time_at(et - 1.0);
        }
    }
    NeutralShape::new(dim, samples, times)
}

fn mean_shape_error(reference: &TimeSeries, aligned: &[RowExpectations]) -> f64 {
    let per_series: Vec<f64> = aligned
        .iter()
        .map(|e| crate::scoring::aligned_squared_error(reference, e))
        .collect();
    per_series.iter().sum::<f64>() / per_series.len() as f64
}

/// One averaging pass of the set against `reference`. The output has the
/// reference's length; its times are generally not uniform.
pub fn centroid_step(
    reference: &TimeSeries,
    series_set: &[TimeSeries],
    k: KernelParam,
) -> Result<NeutralShape> {
    let dim = check_same_dim(series_set)?;
    if reference.dim() != dim {
        return Err(Error::Dimension {
            expected: reference.dim(),
            found: dim,
        });
    }
    let aligned = align_set(reference, series_set, k)?;
    average_expectations(reference, series_set, &aligned)
}

/// Linear re-interpolation of the shape onto `n_out` equally spaced times
/// spanning its time range. Runs of equal times are first merged into the
/// mean of their samples.
pub fn resample_uniform(shape: &NeutralShape, n_out: usize) -> Result<NeutralShape> {
    if n_out < 2 {
        return Err(Error::usage(format!("resampling needs n_out >= 2, got {n_out}")));
    }
    let times = shape.times();
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::usage(format!("shape times decrease at index {}", i + 1)));
    }
    let dim = shape.dim();

    // Collapse duplicated times.
    let mut knots: Vec<f64> = Vec::with_capacity(times.len());
    let mut values: Vec<f64> = Vec::with_capacity(shape.values().len());
    let mut i = 0;
    while i < times.len() {
        let mut j = i + 1;
        while j < times.len() && times[j] == times[i] {
            j += 1;
        }
        let count = (j - i) as f64;
        knots.push(times[i]);
        for ch in 0..dim {
            let sum: f64 = (i..j).map(|r| shape.sample(r)[ch]).sum();
            values.push(sum / count);
        }
        i = j;
    }
    if knots.len() < 2 {
        return Err(Error::Degenerate("all shape times are equal".into()));
    }

    let lo = knots[0];
    let hi = *knots.last().unwrap();
    let step = (hi - lo) / (n_out - 1) as f64;
    let mut out_times = Vec::with_capacity(n_out);
    let mut out = Vec::with_capacity(n_out * dim);
    let mut seg = 0;
    for q in 0..n_out {
        let t = if q == n_out - 1 { hi } else { lo + q as f64 * step };
        while seg + 2 < knots.len() && knots[seg + 1] < t {
            seg += 1;
        }
        let (t0, t1) = (knots[seg], knots[seg + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        for ch in 0..dim {
            let a = values[seg * dim + ch];
            let b = values[(seg + 1) * dim + ch];
            out.push(if w == 1.0 { b } else { a + w * (b - a) });
        }
        out_times.push(t);
    }
    NeutralShape::new(dim, out, out_times)
}

/// Replaces every time by the running maximum, so a step whose expected
/// times wobble can still be resampled.
fn monotone_times(mut shape: NeutralShape) -> NeutralShape {
    let mut hi = f64::NEG_INFINITY;
    for t in &mut shape.times {
        hi = hi.max(*t);
        *t = hi;
    }
    shape
}

/// Iterative centroid estimation seeded with the medoid. Returns the best
/// shape seen and the inertia trace.
pub fn estimate_neutral_shape(
    series_set: &[TimeSeries],
    k: KernelParam,
    opts: CentroidOptions,
) -> Result<(NeutralShape, CentroidTrace)> {
    let m = medoid_index(series_set, k)?;
    let n_out = series_set[m].len();
    let mut best = NeutralShape::from_series(&series_set[m]);
    let mut aligned = align_set(best.series(), series_set, k)?;
    let mut best_inertia = mean_shape_error(best.series(), &aligned);
    let mut trace = CentroidTrace {
        inertia: vec![best_inertia],
        ..Default::default()
    };

    while trace.iterations < opts.max_iter {
        trace.iterations += 1;
        let step = average_expectations(best.series(), series_set, &aligned)?;
        let candidate = resample_uniform(&monotone_times(step), n_out)?;
        let cand_aligned = align_set(candidate.series(), series_set, k)?;
        let inertia = mean_shape_error(candidate.series(), &cand_aligned);
        log::debug!("centroid iteration {}: inertia {inertia}", trace.iterations);
        if best_inertia - inertia > opts.rel_tol * best_inertia {
            best = candidate;
            aligned = cand_aligned;
            best_inertia = inertia;
            trace.inertia.push(inertia);
        } else {
            trace.converged = true;
            break;
        }
    }
    Ok((best, trace))
}

/// Expected time of `series` aligned with each neutral-shape sample.
pub fn extract_temporal_function(
    series: &TimeSeries,
    shape: &NeutralShape,
    k: KernelParam,
) -> Result<TemporalFunction> {
    let e = align_expectations(shape.series(), series, k)?;
    Ok(TemporalFunction {
        values: e.expected_time.iter().map(|et| series.time_at(et - 1.0)).collect(),
        series_ref: series.label.id(),
    })
}
