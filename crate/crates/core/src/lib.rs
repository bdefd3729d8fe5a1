//! Separation of multivariate time series into a neutral shape and a
//! per-series temporal function, using a probabilistic time-elastic
//! alignment. Includes a two-factor dissimilarity for one-class
//! verification (signature forgery detection), a synthetic ellipse
//! generator and an EER evaluation harness.

pub mod alignment;
pub mod centroid;
pub mod error;
pub mod eval;
pub mod io;
pub mod scoring;
pub mod series;
pub mod synth;

pub use alignment::{align_expectations, forward_backward, AlignmentPosterior, KernelParam, RowExpectations};
pub use centroid::{
    centroid_step, estimate_neutral_shape, extract_temporal_function, medoid, resample_uniform, CentroidOptions,
    CentroidTrace, NeutralShape, TemporalFunction,
};
pub use error::{Error, Result};
pub use eval::{averaged_eer, equal_error_rate, evaluate, run_protocol, sweep, EvalReport, LabeledScore};
pub use scoring::{enroll, fused_score, score, tune_nu, EnrollOptions, ScoreRecord, SubjectModel};
pub use series::{denormalize, fit_normalization, normalize, ChannelPolicy, Class, NormalizationStats, TimeSeries};
