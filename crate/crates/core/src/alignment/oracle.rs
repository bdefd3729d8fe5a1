//! Brute-force alignment posterior by explicit enumeration of every
//! monotonic lattice path. Exponential in the lengths; only for checking
//! the recursions on small inputs.

use crate::error::{Error, Result};
use crate::series::TimeSeries;

use super::{AlignmentPosterior, KernelParam};

pub const ORACLE_MAX_LEN: usize = 8;

/// Every path from `(0, 0)` to `(n-1, m-1)` using steps right, down or
/// diagonal.
pub fn monotone_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    if n == 0 || m == 0 {
        return out;
    }
    let mut path = vec![(0, 0)];
    extend(n, m, &mut path, &mut out);
    out
}

fn extend(n: usize, m: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    let (i, j) = *path.last().unwrap();
    if (i, j) == (n - 1, m - 1) {
        out.push(path.clone());
        return;
    }
    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
        let (a, b) = (i + di, j + dj);
        if a < n && b < m {
            path.push((a, b));
            extend(n, m, path, out);
            path.pop();
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Enumerated lattice over flat sample buffers. Accepts single-sample
/// series, which the recursive implementation does not.
pub fn oracle_lattice(a: &[f64], b: &[f64], dim: usize, nu: f64) -> Result<AlignmentPosterior> {
    if dim == 0 || !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::usage("sample buffers do not match the dimension"));
    }
    let n = a.len() / dim;
    let m = b.len() / dim;
    if n == 0 || m == 0 {
        return Err(Error::usage("empty series"));
    }
    if n > ORACLE_MAX_LEN || m > ORACLE_MAX_LEN {
        return Err(Error::usage(format!(
            "oracle enumeration limited to lengths <= {ORACLE_MAX_LEN}, got {n}x{m}"
        )));
    }
    let log_k = |i: usize, j: usize| -> f64 {
        let x = &a[i * dim..(i + 1) * dim];
        let y = &b[j * dim..(j + 1) * dim];
        let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
        -nu * d2
    };

    let mut cell = vec![f64::NEG_INFINITY; n * m];
    let mut total = f64::NEG_INFINITY;
    for path in monotone_paths(n, m) {
        let score: f64 = path.iter().map(|&(i, j)| log_k(i, j)).sum();
        total = log_add(total, score);
        for &(i, j) in &path {
            cell[i * m + j] = log_add(cell[i * m + j], score);
        }
    }
    for c in &mut cell {
        *c -= total;
    }
    Ok(AlignmentPosterior::from_parts(n, m, total, total, cell))
}

pub fn oracle_posterior(
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
    oracle_lattice(o.values(), o2.values(), o.dim(), k.nu())
}
