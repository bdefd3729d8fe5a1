//! Probabilistic time-elastic alignment of two series.
//!
//! Every monotonic path through the `n × n'` lattice (steps right, down and
//! diagonal) is scored by the product of local kernels along it. The forward
//! and backward sums give, for each cell, the probability that the two
//! samples are aligned. All arithmetic is in the log domain.
//!
//! Indices in this API are zero-based; [`RowExpectations::expected_time`]
//! is reported one-based.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub use oracle::{monotone_paths, oracle_posterior};

/// Scale `nu` of the local kernel `exp(-nu * |a - b|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KernelParam(f64);

impl KernelParam {
    pub fn new(nu: f64) -> Result<Self> {
        if nu > 0.0 && nu.is_finite() {
            Ok(Self(nu))
        } else {
            Err(Error::usage(format!("kernel parameter must be positive and finite, got {nu}")))
        }
    }

    pub fn nu(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for KernelParam {
    type Error = Error;

    fn try_from(nu: f64) -> Result<Self> {
        Self::new(nu)
    }
}

impl From<KernelParam> for f64 {
    fn from(k: KernelParam) -> f64 {
        k.0
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn local_kernel(a: &[f64], b: &[f64], k: KernelParam) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok((-k.nu() * sq_dist(a, b)).exp())
}

#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Filled alignment lattice for one pair of series.
#[derive(Debug, Clone)]
pub struct AlignmentPosterior {
    rows: usize,
    cols: usize,
    log_total: f64,
    log_total_backward: f64,
    cell_log_posterior: Vec<f64>,
}

impl AlignmentPosterior {
    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        log_total: f64,
        log_total_backward: f64,
        cell_log_posterior: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(cell_log_posterior.len(), rows * cols);
        Self {
            rows,
            cols,
            log_total,
            log_total_backward,
            cell_log_posterior,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Log of the summed score of all alignment paths (the forward value at
    /// the last cell).
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    /// The same quantity read from the backward recursion at the first cell.
    pub fn log_total_backward(&self) -> f64 {
        self.log_total_backward
    }

    pub fn log_posterior(&self, t: usize, u: usize) -> f64 {
        self.cell_log_posterior[t * self.cols + u]
    }

    pub fn posterior(&self, t: usize, u: usize) -> f64 {
        self.log_posterior(t, u).exp()
    }

    pub fn log_posterior_row(&self, t: usize) -> &[f64] {
        &self.cell_log_posterior[t * self.cols..(t + 1) * self.cols]
    }

    /// Distribution over columns of the alignment of row `t`, given that row
    /// `t` is aligned at all.
    pub fn row_conditional(&self, t: usize) -> Result<Vec<f64>> {
        if t >= self.rows {
            return Err(Error::usage(format!("row {t} out of range 0..{}", self.rows)));
        }
        let row = self.log_posterior_row(t);
        let marginal = log_sum_exp(row.iter().copied());
        // Every lattice cell lies on some monotonic path, so this is a broken lattice.
        assert!(marginal.is_finite(), "row {t} has zero alignment mass");
        Ok(row.iter().map(|lp| (lp - marginal).exp()).collect())
    }
}

/// Runs the forward and backward recursions between `o` (rows) and `o2`
/// (columns).
pub fn forward_backward(
    o: &TimeSeries,
    o2: &TimeSeries,
    k: KernelParam,
) -> Result<AlignmentPosterior> {
    if o.dim() != o2.dim() {
        return Err(Error::Dimension {
            expected: o.dim(),
            found: o2.dim(),
        });
    }
    if o.len() < 2 || o2.len() < 2 {
        return Err(Error::usage("alignment needs series of length at least 2"));
    }
    lattice(o.values(), o2.values(), o.dim(), k.nu())
}

pub(crate) fn lattice(a: &[f64], b: &[f64], dim: usize, nu: f64) -> Result<AlignmentPosterior> {
    let n = a.len() / dim;
    let m = b.len() / dim;
    let mut lk = Vec::with_capacity(n * m);
    for x in a.chunks_exact(dim) {
        for y in b.chunks_exact(dim) {
            lk.push(-nu * sq_dist(x, y));
        }
    }
    if lk.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite local kernel value".into()));
    }

    const NEG: f64 = f64::NEG_INFINITY;
    let mut fwd = vec![NEG; n * m];
    for i in 0..n {
        for j in 0..m {
            let idx = i * m + j;
            fwd[idx] = if i == 0 && j == 0 {
                lk[0]
            } else {
                let up = if i > 0 { fwd[idx - m] } else { NEG };
                let left = if j > 0 { fwd[idx - 1] } else { NEG };
                let diag = if i > 0 && j > 0 { fwd[idx - m - 1] } else { NEG };
                lk[idx] + log_sum_exp3(up, left, diag)
            };
        }
    }

    let mut bwd = vec![NEG; n * m];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let idx = i * m + j;
            bwd[idx] = if i == n - 1 && j == m - 1 {
                lk[idx]
            } else {
                let down = if i + 1 < n { bwd[idx + m] } else { NEG };
                let right = if j + 1 < m { bwd[idx + 1] } else { NEG };
                let diag = if i + 1 < n && j + 1 < m { bwd[idx + m + 1] } else { NEG };
                lk[idx] + log_sum_exp3(down, right, diag)
            };
        }
    }

    let log_total = fwd[n * m - 1];
    let log_total_backward = bwd[0];
    if !log_total.is_finite() || !log_total_backward.is_finite() {
        return Err(Error::Numeric(format!(
            "total alignment score is not finite (log = {log_total})"
        )));
    }

    // Both recursions include the cell's own kernel factor once.
    for ((f, b), l) in fwd.iter_mut().zip(&bwd).zip(&lk) {
        *f = *f + *b - *l - log_total;
    }
    Ok(AlignmentPosterior::from_parts(n, m, log_total, log_total_backward, fwd))
}

/// Per-row expectations of the aligned column samples and column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RowExpectations {
    dim: usize,
    expected_sample: Vec<f64>,
    /// One-based expected column index for each row.
    pub expected_time: Vec<f64>,
}

impl RowExpectations {
    pub fn len(&self) -> usize {
        self.expected_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expected_time.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expected_sample(&self, t: usize) -> &[f64] {
        &self.expected_sample[t * self.dim..(t + 1) * self.dim]
    }

    pub fn expected_samples(&self) -> &[f64] {
        &self.expected_sample
    }
}

pub fn expectations(
    o: &TimeSeries,
    o2: &TimeSeries,
    post: &AlignmentPosterior,
) -> Result<RowExpectations> {
    if post.rows() != o.len() || post.cols() != o2.len() {
        return Err(Error::usage(format!(
            "posterior is {}x{} but series are {}x{}",
            post.rows(),
            post.cols(),
            o.len(),
            o2.len()
        )));
    }
    let dim = o2.dim();
    let mut expected_sample = vec![0.0; o.len() * dim];
    let mut expected_time = Vec::with_capacity(o.len());
    for t in 0..post.rows() {
        let p = post.row_conditional(t)?;
        let acc = &mut expected_sample[t * dim..(t + 1) * dim];
        let mut et = 0.0;
        for (u, (w, y)) in p.iter().zip(o2.samples()).enumerate() {
            for (a, v) in acc.iter_mut().zip(y) {
                *a += w * v;
            }
            et += w * (u + 1) as f64;
        }
        expected_time.push(et);
    }
    Ok(RowExpectations {
        dim,
        expected_sample,
        expected_time,
    })
}

/// Convenience: align `reference` against `series` and return the row
/// expectations.
pub fn align_expectations(
    reference: &TimeSeries,
    series: &TimeSeries,
    k: KernelParam,
) -> Result<RowExpectations> {
    let post = forward_backward(reference, series, k)?;
    expectations(reference, series, &post)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: &[&[f64]]) -> TimeSeries {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TimeSeries::from_rows(&rows, None).unwrap()
    }

    #[test]
    fn kernel_values() {
        let k1 = KernelParam::new(1.0).unwrap();
        assert_eq!(local_kernel(&[0.5, 2.0], &[0.5, 2.0], k1).unwrap(), 1.0);
        let v = local_kernel(&[0.0], &[1.0], k1).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        let tiny = KernelParam::new(1e-12).unwrap();
        assert!(local_kernel(&[0.0, 0.0], &[3.0, 4.0], tiny).unwrap() > 1.0 - 1e-9);
        assert!(local_kernel(&[0.0], &[1.0, 2.0], k1).is_err());
        assert!(KernelParam::new(0.0).is_err());
        assert!(KernelParam::new(f64::NAN).is_err());
    }

    #[test]
    fn kernel_power_law_in_nu() {
        let a = [0.3, -1.1];
        let b = [1.4, 0.2];
        let base = local_kernel(&a, &b, KernelParam::new(0.7).unwrap()).unwrap();
        for c in [0.5, 2.0, 3.0] {
            let scaled = local_kernel(&a, &b, KernelParam::new(0.7 * c).unwrap()).unwrap();
            assert!((scaled - base.powf(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_count_paths() {
        for nu in [0.1, 1.0, 10.0] {
            let k = KernelParam::new(nu).unwrap();
            let s2 = series(&[&[1.0], &[1.0]]);
            let s3 = series(&[&[1.0], &[1.0], &[1.0]]);
            assert!((forward_backward(&s2, &s2, k).unwrap().log_total().exp() - 3.0).abs() < 1e-12);
            assert!((forward_backward(&s3, &s3, k).unwrap().log_total().exp() - 13.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        // Paths: (1,1)->(2,2), (1,1)->(1,2)->(2,2), (1,1)->(2,1)->(2,2).
        let o = series(&[&[0.0], &[1.0]]);
        let o2 = series(&[&[0.0], &[2.0]]);
        let nu = 0.5;
        let k = |a: f64, b: f64| (-nu * (a - b) * (a - b)).exp();
        let (k11, k12, k21, k22) = (k(0., 0.), k(0., 2.), k(1., 0.), k(1., 2.));
        let diag = k11 * k22;
        let via12 = k11 * k12 * k22;
        let via21 = k11 * k21 * k22;
        let total = diag + via12 + via21;

        let post = forward_backward(&o, &o2, KernelParam::new(nu).unwrap()).unwrap();
        assert!((post.log_total() - total.ln()).abs() < 1e-12);
        assert!((post.posterior(0, 1) - via12 / total).abs() < 1e-12);
        assert!((post.posterior(1, 0) - via21 / total).abs() < 1e-12);

        // Row 0 holds (1,1) with mass 1 and (1,2) with mass via12/total.
        let p0 = post.row_conditional(0).unwrap();
        let r0 = [1.0, via12 / total];
        let z: f64 = r0.iter().sum();
        assert!((p0[0] - r0[0] / z).abs() < 1e-12);
        let e = expectations(&o, &o2, &post).unwrap();
        let et0 = (1.0 * r0[0] + 2.0 * r0[1]) / z;
        assert!((e.expected_time[0] - et0).abs() < 1e-12);
        let es0 = (0.0 * r0[0] + 2.0 * r0[1]) / z;
        assert!((e.expected_sample(0)[0] - es0).abs() < 1e-12);
        // Row 1 holds (2,1) with via21/total and (2,2) with 1.
        let r1 = [via21 / total, 1.0];
        let z1: f64 = r1.iter().sum();
        assert!((e.expected_time[1] - (r1[0] + 2.0 * r1[1]) / z1).abs() < 1e-12);
    }

    #[test]
    fn constant_column_series_expectation() {
        let o = series(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        let c = series(&[&[3.0, 4.0], &[3.0, 4.0], &[3.0, 4.0], &[3.0, 4.0]]);
        let e = align_expectations(&o, &c, KernelParam::new(0.3).unwrap()).unwrap();
        for t in 0..3 {
            let s = e.expected_sample(t);
            assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_alignment_is_diagonal_at_large_nu() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 * 0.9).sin() * 3.0, i as f64]).collect();
        let s = TimeSeries::from_rows(&rows, None).unwrap();
        let e = align_expectations(&s, &s, KernelParam::new(50.0).unwrap()).unwrap();
        for (t, et) in e.expected_time.iter().enumerate() {
            assert!((et - (t + 1) as f64).abs() < 0.1, "row {t}: {et}");
        }
        assert!(e.expected_time.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = series(&[&[0.0], &[1.0]]);
        let b = series(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            forward_backward(&a, &b, KernelParam::new(1.0).unwrap()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn huge_values_are_numeric_errors() {
        let a = series(&[&[0.0], &[1e200]]);
        let b = series(&[&[0.0], &[-1e200]]);
        assert!(matches!(
            forward_backward(&a, &b, KernelParam::new(1.0).unwrap()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn long_series_do_not_underflow() {
        let n = 600;
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05).sin() * 5.0).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05 + 0.4).cos() * 5.0).collect();
        let a = TimeSeries::new(1, a, None).unwrap();
        let b = TimeSeries::new(1, b, None).unwrap();
        let post = forward_backward(&a, &b, KernelParam::new(2.0).unwrap()).unwrap();
        assert!(post.log_total().is_finite());
        for t in [0, n / 2, n - 1] {
            let s: f64 = post.row_conditional(t).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
