//! Verification metrics: threshold sweep, equal error rate, per-subject
//! averaged EER, and the enrollment/scoring protocol runner.
//!
//! A test item is accepted when its score is at or below the threshold.
//! Rates are percentages.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::scoring::{enroll, score, EnrollOptions};
use crate::series::Class;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: Class,
    pub subject: String,
    #[serde(default)]
    pub series_ref: String,
}

fn ser_threshold<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.is_finite() {
        s.serialize_f64(*t)
    } else if *t > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    #[serde(serialize_with = "ser_threshold")]
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn split(scores: &[LabeledScore]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = Vec::new();
    let mut forgery = Vec::new();
    for s in scores {
        if !s.score.is_finite() {
            return Err(Error::Numeric(format!("non-finite score for {}", s.series_ref)));
        }
        match s.label {
            Class::Genuine => genuine.push(s.score),
            Class::Forgery => forgery.push(s.score),
            Class::Unknown => {
                return Err(Error::usage(format!("unlabeled score for {}", s.series_ref)))
            }
        }
    }
    if genuine.is_empty() || forgery.is_empty() {
        return Err(Error::usage(format!(
            "need both classes, got {} genuine and {} forgery scores",
            genuine.len(),
            forgery.len()
        )));
    }
    genuine.sort_by(f64::total_cmp);
    forgery.sort_by(f64::total_cmp);
    Ok((genuine, forgery))
}

/// FAR and FRR at every distinct score plus the two infinite sentinels.
pub fn sweep(scores: &[LabeledScore]) -> Result<Vec<SweepPoint>> {
    let (genuine, forgery) = split(scores)?;
    let mut thresholds: Vec<f64> = genuine.iter().chain(&forgery).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let accepted = |sorted: &[f64], t: f64| sorted.partition_point(|&s| s <= t) as f64;
    let (ng, nf) = (genuine.len() as f64, forgery.len() as f64);
    let point = |t: f64| SweepPoint {
        threshold: t,
        far: 100.0 * accepted(&forgery, t) / nf,
        frr: 100.0 * (ng - accepted(&genuine, t)) / ng,
    };
    let mut out = Vec::with_capacity(thresholds.len() + 2);
    out.push(SweepPoint {
        threshold: f64::NEG_INFINITY,
        far: 0.0,
        frr: 100.0,
    });
    out.extend(thresholds.into_iter().map(point));
    out.push(SweepPoint {
        threshold: f64::INFINITY,
        far: 100.0,
        frr: 0.0,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EerPoint {
    pub eer: f64,
    #[serde(serialize_with = "ser_threshold")]
    pub threshold: f64,
}

fn cross(o: &SweepPoint, a: &SweepPoint, b: &SweepPoint) -> f64 {
    (a.far - o.far) * (b.frr - o.frr) - (a.frr - o.frr) * (b.far - o.far)
}

/// Equal error rate read off the lower convex hull of the (FAR, FRR)
/// operating points, interpolating linearly between the two hull vertices
/// that bracket FAR = FRR.
pub fn equal_error_rate(sweep: &[SweepPoint]) -> Result<EerPoint> {
    if sweep.is_empty() {
        return Err(Error::usage("empty sweep"));
    }
    let mut pts = sweep.to_vec();
    pts.sort_by(|a, b| a.far.total_cmp(&b.far).then(a.frr.total_cmp(&b.frr)));
    let mut hull: Vec<SweepPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // Keep only the descending part; vertices past the minimum FRR are
    // dominated operating points.
    let min_frr = hull.iter().map(|p| p.frr).fold(f64::INFINITY, f64::min);
    let end = hull.iter().position(|p| p.frr == min_frr).unwrap_or(hull.len() - 1);
    hull.truncate(end + 1);

    let diff = |p: &SweepPoint| p.far - p.frr;
    if let Some(p) = hull.iter().find(|p| diff(p) == 0.0) {
        return Ok(EerPoint {
            eer: p.far,
            threshold: p.threshold,
        });
    }
    for w in hull.windows(2) {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        if d0 < 0.0 && d1 > 0.0 {
            let f = d0 / (d0 - d1);
            let eer = w[0].far + f * (w[1].far - w[0].far);
            let threshold = match (w[0].threshold.is_finite(), w[1].threshold.is_finite()) {
                (true, true) => w[0].threshold + f * (w[1].threshold - w[0].threshold),
                (true, false) => w[0].threshold,
                (false, true) => w[1].threshold,
                (false, false) => 0.0,
            };
            return Ok(EerPoint { eer, threshold });
        }
    }
    // Only reachable for sweeps without the sentinels.
    let p = sweep
        .iter()
        .min_by(|a, b| diff(a).abs().total_cmp(&diff(b).abs()))
        .unwrap();
    Ok(EerPoint {
        eer: 0.5 * (p.far + p.frr),
        threshold: p.threshold,
    })
}

/// Realized operating point with the smallest |FAR - FRR| (lowest threshold
/// on ties).
pub fn nearest_operating_point(sweep: &[SweepPoint]) -> Option<SweepPoint> {
    sweep.iter().copied().reduce(|best, p| {
        if (p.far - p.frr).abs() < (best.far - best.frr).abs() {
            p
        } else {
            best
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectEer {
    pub subject: String,
    pub eer: f64,
    #[serde(serialize_with = "ser_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedEer {
    pub aeer: f64,
    pub per_subject: Vec<SubjectEer>,
    /// Subjects left out because they lack genuine or forgery scores.
    pub excluded: Vec<String>,
}

pub fn averaged_eer(scores: &[LabeledScore]) -> Result<AveragedEer> {
    let mut by_subject: BTreeMap<&str, Vec<LabeledScore>> = BTreeMap::new();
    for s in scores {
        by_subject.entry(s.subject.as_str()).or_default().push(s.clone());
    }
    let mut per_subject = Vec::new();
    let mut excluded = Vec::new();
    for (subject, group) in by_subject {
        let has = |c| group.iter().any(|s| s.label == c);
        if !(has(Class::Genuine) && has(Class::Forgery)) {
            log::warn!("subject {subject} lacks a class; excluded from aEER");
            excluded.push(subject.to_string());
            continue;
        }
        let e = equal_error_rate(&sweep(&group)?)?;
        per_subject.push(SubjectEer {
            subject: subject.to_string(),
            eer: e.eer,
            threshold: e.threshold,
        });
    }
    if per_subject.is_empty() {
        return Err(Error::usage("no subject has both genuine and forgery scores"));
    }
    let aeer = per_subject.iter().map(|s| s.eer).sum::<f64>() / per_subject.len() as f64;
    Ok(AveragedEer {
        aeer,
        per_subject,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub eer: f64,
    pub aeer: f64,
    /// Rates at the realized threshold closest to the equal-error point.
    pub far_at_eer: f64,
    pub frr_at_eer: f64,
    #[serde(serialize_with = "ser_threshold")]
    pub threshold_at_eer: f64,
    #[serde(serialize_with = "ser_threshold")]
    pub nearest_threshold: f64,
    pub per_subject: Vec<SubjectEer>,
    pub excluded_subjects: Vec<String>,
    pub sweep: Vec<SweepPoint>,
    pub scores: Vec<LabeledScore>,
}

pub fn evaluate(scores: &[LabeledScore]) -> Result<EvalReport> {
    let sw = sweep(scores)?;
    let global = equal_error_rate(&sw)?;
    let nearest = nearest_operating_point(&sw).expect("sweep has sentinels");
    let avg = averaged_eer(scores)?;
    Ok(EvalReport {
        eer: global.eer,
        aeer: avg.aeer,
        far_at_eer: nearest.far,
        frr_at_eer: nearest.frr,
        threshold_at_eer: global.threshold,
        nearest_threshold: nearest.threshold,
        per_subject: avg.per_subject,
        excluded_subjects: avg.excluded,
        sweep: sw,
        scores: scores.to_vec(),
    })
}

/// Enrolls every subject on its training genuine series, scores its test
/// items and evaluates the pooled scores.
pub fn run_protocol(dataset: &Dataset, opts: &EnrollOptions) -> Result<EvalReport> {
    let mut problems = Vec::new();
    for s in &dataset.subjects {
        if s.train_genuine.len() < 2 {
            problems.push(format!(
                "subject {}: needs at least 2 training genuine series, has {}",
                s.id,
                s.train_genuine.len()
            ));
        }
    }
    let n_forgery: usize = dataset.subjects.iter().map(|s| s.test_forgery.len()).sum();
    let n_genuine: usize = dataset.subjects.iter().map(|s| s.test_genuine.len()).sum();
    if n_forgery == 0 {
        problems.push("no test forgery series in the dataset".into());
    }
    if n_genuine == 0 {
        problems.push("no test genuine series in the dataset".into());
    }
    if !problems.is_empty() {
        return Err(Error::Manifest(problems));
    }

    let mut opts = opts.clone();
    if opts.policy.is_none() {
        opts.policy = Some(dataset.policy.clone());
    }
    let per_subject = dataset
        .subjects
        .par_iter()
        .map(|s| -> Result<Vec<LabeledScore>> {
            let model = enroll(&s.train_genuine, &opts)?;
            let tests = s
                .test_genuine
                .iter()
                .map(|x| (x, Class::Genuine))
                .chain(s.test_forgery.iter().map(|x| (x, Class::Forgery)));
            tests
                .map(|(x, class)| {
                    let r = score(x, &model)?;
                    Ok(LabeledScore {
                        score: r.delta,
                        label: class,
                        subject: s.id.clone(),
                        series_ref: r.series_ref,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<LabeledScore> = per_subject.into_iter().flatten().collect();
    evaluate(&scores)
}
