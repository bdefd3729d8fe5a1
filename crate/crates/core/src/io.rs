//! Series files, dataset manifests and model persistence.
//!
//! Series are CSV with a header naming the channels and an optional leading
//! `t` column in seconds. Manifests and models are versioned JSON. Readers
//! reject malformed input and report the file and line or field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentPosterior, KernelParam};
use crate::centroid::{NeutralShape, TemporalFunction};
use crate::error::{Error, Result};
use crate::scoring::SubjectModel;
use crate::series::{ChannelPolicy, Class, NormalizationStats, SeriesLabel, TimeSeries};

pub const MODEL_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// A parsed series with its channel names.
#[derive(Debug, Clone)]
pub struct SeriesFile {
    pub series: TimeSeries,
    pub channels: Vec<String>,
}

/// Reads a series CSV. Without a `t` column, timestamps are synthesized as
/// `index / fe` when `fe` is given.
pub fn read_series_csv(path: &Path, fe: Option<f64>) -> Result<SeriesFile> {
    let text = read_to_string(path)?;
    parse_series_csv(&text, path, fe)
}

fn parse_series_csv(text: &str, path: &Path, fe: Option<f64>) -> Result<SeriesFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_t = headers.first().is_some_and(|h| h.eq_ignore_ascii_case("t"));
    let channels: Vec<String> = headers[usize::from(has_t)..].to_vec();
    if channels.is_empty() || channels.iter().any(String::is_empty) {
        return Err(parse_err(path, 1, "header must name at least one channel"));
    }

    let mut values = Vec::new();
    let mut times = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: `{field}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", col + 1)));
            }
            if has_t && col == 0 {
                if let Some(&prev) = times.last() {
                    if v <= prev {
                        return Err(parse_err(path, line, "timestamps must be strictly increasing"));
                    }
                }
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = values.len() / channels.len();
    let timestamps = if has_t {
        Some(times)
    } else {
        fe.map(|f| (0..n).map(|i| i as f64 / f).collect())
    };
    let series = TimeSeries::new(channels.len(), values, timestamps)
        .map_err(|e| parse_err(path, 0, e.to_string()))?
        .with_label(SeriesLabel {
            source: Some(path.to_path_buf()),
            ..Default::default()
        });
    Ok(SeriesFile { series, channels })
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v:?}")
}

pub fn write_series_csv(path: &Path, series: &TimeSeries, channels: &[String]) -> Result<()> {
    if channels.len() != series.dim() {
        return Err(Error::Dimension {
            expected: series.dim(),
            found: channels.len(),
        });
    }
    let mut out = String::from("t");
    for c in channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, x) in series.samples().enumerate() {
        out.push_str(&fmt_f64(series.time_at(i as f64)));
        for v in x {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Svc2004Options {
    /// Keep the pressure column of 7-column files as a fourth channel.
    pub keep_pressure: bool,
    /// Drop samples recorded with the pen lifted.
    pub drop_pen_up: bool,
}

impl Svc2004Options {
    pub fn channels(&self) -> Vec<String> {
        let mut c = vec!["x".to_string(), "y".to_string(), "pen".to_string()];
        if self.keep_pressure {
            c.push("pressure".to_string());
        }
        c
    }
}

/// Reads an SVC2004 signature file: a point count, then one line per point
/// with `x y timestamp button` and, for task 2, azimuth, altitude and
/// pressure. Timestamps (milliseconds) are converted to seconds and
/// shifted so the first sample is at 0.
pub fn import_svc2004(path: &Path, opts: Svc2004Options) -> Result<TimeSeries> {
    let text = read_to_string(path)?;
    parse_svc2004(&text, path, opts)
}

fn parse_svc2004(text: &str, path: &Path, opts: Svc2004Options) -> Result<TimeSeries> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (_, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let declared: usize = first
        .parse()
        .map_err(|_| parse_err(path, 1, format!("expected point count, found `{first}`")))?;

    let mut values = Vec::new();
    let mut times = Vec::new();
    let mut count = 0usize;
    for (line, l) in lines {
        count += 1;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(parse_err(path, line, format!("expected at least 4 columns, found {}", fields.len())));
        }
        if opts.keep_pressure && fields.len() < 7 {
            return Err(parse_err(path, line, "pressure requested but the line has no pressure column"));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("column {}: `{}` is not a number", i + 1, fields[i])))
        };
        let (x, y, ts, button) = (num(0)?, num(1)?, num(2)?, num(3)?);
        let pressure = if opts.keep_pressure { Some(num(6)?) } else { None };
        if opts.drop_pen_up && button == 0.0 {
            continue;
        }
        values.extend([x, y, if button != 0.0 { 1.0 } else { 0.0 }]);
        values.extend(pressure);
        if let Some(&prev) = times.last() {
            if ts / 1000.0 <= prev {
                return Err(parse_err(path, line, "timestamps must be strictly increasing"));
            }
        }
        times.push(ts / 1000.0);
    }
    if count != declared {
        return Err(parse_err(
            path,
            1,
            format!("declared {declared} points but found {count}"),
        ));
    }
    let t0 = times.first().copied().unwrap_or(0.0);
    for t in &mut times {
        *t -= t0;
    }
    let dim = if opts.keep_pressure { 4 } else { 3 };
    TimeSeries::new(dim, values, Some(times))
        .map(|s| {
            s.with_label(SeriesLabel {
                source: Some(path.to_path_buf()),
                ..Default::default()
            })
        })
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    #[default]
    Csv,
    Svc2004,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    /// Defaults from the channel name when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<ChannelPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    #[serde(default)]
    pub train_genuine: Vec<PathBuf>,
    #[serde(default)]
    pub test_genuine: Vec<PathBuf>,
    #[serde(default)]
    pub test_forgery: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub sampling_frequency_hz: f64,
    pub channels: Vec<ChannelSpec>,
    pub subjects: Vec<SubjectEntry>,
    #[serde(default)]
    pub format: SeriesFormat,
}

impl DatasetManifest {
    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn policy(&self) -> Vec<ChannelPolicy> {
        self.channels
            .iter()
            .map(|c| c.policy.unwrap_or_else(|| ChannelPolicy::for_channel(&c.name)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SubjectData {
    pub id: String,
    pub train_genuine: Vec<TimeSeries>,
    pub test_genuine: Vec<TimeSeries>,
    pub test_forgery: Vec<TimeSeries>,
}

/// A manifest with every referenced series loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sampling_frequency_hz: f64,
    pub channels: Vec<String>,
    pub policy: Vec<ChannelPolicy>,
    pub subjects: Vec<SubjectData>,
}

fn check_version(value: &serde_json::Value, path: &Path, expected: u32) -> Result<()> {
    match value.get("version") {
        Some(v) if v.as_u64() == Some(u64::from(expected)) => Ok(()),
        Some(v) => Err(Error::Version {
            path: path.to_path_buf(),
            found: v.to_string(),
            expected,
        }),
        None => Err(Error::Schema {
            path: path.to_path_buf(),
            field: "version".into(),
            msg: "missing".into(),
        }),
    }
}

fn parse_json_value(text: &str, path: &Path) -> Result<serde_json::Value> {
    serde_json::from_str(text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value, path: &Path) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let value = parse_json_value(text, path)?;
    check_version(&value, path, MANIFEST_VERSION)?;
    let m: DatasetManifest = from_value(value, path)?;
    if !(m.sampling_frequency_hz > 0.0 && m.sampling_frequency_hz.is_finite()) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            field: "sampling_frequency_hz".into(),
            msg: "must be positive".into(),
        });
    }
    if m.channels.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            field: "channels".into(),
            msg: "at least one channel required".into(),
        });
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    parse_manifest(&read_to_string(path)?, path)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_string(path, &(text + "\n"))
}

fn read_any(path: &Path, manifest: &DatasetManifest) -> Result<SeriesFile> {
    match manifest.format {
        SeriesFormat::Csv => read_series_csv(path, Some(manifest.sampling_frequency_hz)),
        SeriesFormat::Svc2004 => {
            let opts = Svc2004Options {
                keep_pressure: manifest.channels.iter().any(|c| c.name == "pressure"),
                drop_pen_up: false,
            };
            Ok(SeriesFile {
                series: import_svc2004(path, opts)?,
                channels: opts.channels(),
            })
        }
    }
}

/// Loads every series of a manifest. Relative paths are resolved against
/// the manifest's directory. All failures are collected and reported
/// together.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    dataset_from_manifest(&manifest, base)
}

pub fn dataset_from_manifest(manifest: &DatasetManifest, base: &Path) -> Result<Dataset> {
    let names = manifest.channel_names();
    let mut problems = Vec::new();
    let mut load = |files: &[PathBuf], subject: &str, class: Class| -> Vec<TimeSeries> {
        let mut out = Vec::new();
        for f in files {
            let p = if f.is_absolute() { f.clone() } else { base.join(f) };
            match read_any(&p, manifest) {
                Ok(sf) if sf.channels != names => problems.push(format!(
                    "{}: channels {:?} do not match manifest {:?}",
                    p.display(),
                    sf.channels,
                    names
                )),
                Ok(sf) => {
                    let mut label = sf.series.label.clone();
                    label.subject = Some(subject.to_string());
                    label.class = class;
                    out.push(sf.series.with_label(label));
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
        out
    };
    let mut subjects = Vec::new();
    for s in &manifest.subjects {
        subjects.push(SubjectData {
            id: s.id.clone(),
            train_genuine: load(&s.train_genuine, &s.id, Class::Genuine),
            test_genuine: load(&s.test_genuine, &s.id, Class::Genuine),
            test_forgery: load(&s.test_forgery, &s.id, Class::Forgery),
        });
    }
    if manifest.subjects.is_empty() {
        problems.push("manifest lists no subjects".into());
    }
    if !problems.is_empty() {
        return Err(Error::Manifest(problems));
    }
    Ok(Dataset {
        sampling_frequency_hz: manifest.sampling_frequency_hz,
        channels: names,
        policy: manifest.policy(),
        subjects,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeDoc {
    times: Vec<f64>,
    samples: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    alpha: f64,
    nu: f64,
    shape: ShapeDoc,
    mean_slope: f64,
    mean_auc: f64,
    normalization: NormalizationStats,
    /// Unit of the temporal functions behind `mean_slope` and `mean_auc`.
    xi_units: String,
}

pub fn model_to_json(model: &SubjectModel) -> String {
    let dim = model.shape.dim();
    let doc = ModelDoc {
        version: MODEL_VERSION,
        alpha: model.alpha,
        nu: model.nu.nu(),
        shape: ShapeDoc {
            times: model.shape.times().to_vec(),
            samples: model.shape.values().chunks(dim).map(<[f64]>::to_vec).collect(),
        },
        mean_slope: model.mean_slope,
        mean_auc: model.mean_auc,
        normalization: model.norm_stats.clone(),
        xi_units: "seconds".into(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes") + "\n"
}

pub fn model_from_json(text: &str, path: &Path) -> Result<SubjectModel> {
    let value = parse_json_value(text, path)?;
    check_version(&value, path, MODEL_VERSION)?;
    let doc: ModelDoc = from_value(value, path)?;
    let field = |field: &str, msg: String| Error::Schema {
        path: path.to_path_buf(),
        field: field.into(),
        msg,
    };
    if doc.xi_units != "seconds" {
        return Err(field("xi_units", format!("unsupported unit `{}`", doc.xi_units)));
    }
    let nu = KernelParam::new(doc.nu).map_err(|e| field("nu", e.to_string()))?;
    if !(0.0..=1.0).contains(&doc.alpha) {
        return Err(field("alpha", "must lie in [0, 1]".into()));
    }
    if !(doc.mean_slope > 0.0) {
        return Err(field("mean_slope", "must be positive".into()));
    }
    if !(doc.mean_auc > 0.0) {
        return Err(field("mean_auc", "must be positive".into()));
    }
    let dim = doc.shape.samples.first().map_or(0, Vec::len);
    if let Some(i) = doc.shape.samples.iter().position(|s| s.len() != dim) {
        return Err(field(&format!("shape.samples[{i}]"), format!("expected {dim} channels")));
    }
    let shape = NeutralShape::new(dim, doc.shape.samples.concat(), doc.shape.times)
        .map_err(|e| field("shape", e.to_string()))?;
    let ns = &doc.normalization;
    let dims = [ns.means.len(), ns.stds.len(), ns.mins.len(), ns.maxs.len(), ns.policy.len()];
    if dims.iter().any(|&d| d != dim) {
        return Err(field("normalization", format!("per-channel arrays must have {dim} entries")));
    }
    Ok(SubjectModel {
        shape,
        mean_slope: doc.mean_slope,
        mean_auc: doc.mean_auc,
        nu,
        alpha: doc.alpha,
        norm_stats: doc.normalization,
    })
}

pub fn save_model(model: &SubjectModel, path: &Path) -> Result<()> {
    write_string(path, &model_to_json(model))
}

pub fn load_model(path: &Path) -> Result<SubjectModel> {
    model_from_json(&read_to_string(path)?, path)
}

/// Posterior lattice as linear-domain probabilities, one row per sample of
/// the first series.
pub fn write_posterior_csv(path: &Path, post: &AlignmentPosterior) -> Result<()> {
    let mut out = String::new();
    for t in 0..post.rows() {
        let row: Vec<String> = (0..post.cols()).map(|u| fmt_f64(post.posterior(t, u))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_string(path, &out)
}

/// Shape as CSV: one-based index, expected time, then the channels.
pub fn write_shape_csv(path: &Path, shape: &NeutralShape, channels: &[String]) -> Result<()> {
    let mut out = String::from("t,xi");
    for c in channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, time) in shape.times().iter().enumerate() {
        out.push_str(&format!("{},{}", i + 1, fmt_f64(*time)));
        for v in shape.sample(i) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn write_xi_csv(path: &Path, xi: &TemporalFunction) -> Result<()> {
    let mut out = String::from("t,xi\n");
    for (i, v) in xi.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, fmt_f64(*v)));
    }
    write_string(path, &out)
}
