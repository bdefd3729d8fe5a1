use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use shapetime_core::alignment::KernelParam;
use shapetime_core::centroid::NeutralShape;
use shapetime_core::io::{
    load_dataset, load_model, model_from_json, model_to_json, read_series_csv, save_model, write_series_csv,
};
use shapetime_core::scoring::SubjectModel;
use shapetime_core::series::{ChannelPolicy, Class, NormalizationStats, TimeSeries};
use shapetime_core::Error;

fn model() -> impl Strategy<Value = SubjectModel> {
    (1usize..=4, 2usize..20).prop_flat_map(|(dim, n)| {
        (
            proptest::collection::vec(-1e3f64..1e3, n * dim),
            proptest::collection::vec(1e-6f64..1.0, n),
            (1e-6f64..1e3, 1e-6f64..1e3, 1e-6f64..1e3, 0.0f64..=1.0),
            proptest::collection::vec((-1e3f64..1e3, 1e-6f64..1e3, -1e3f64..0.0, 1e-3f64..1e3, any::<bool>()), dim),
        )
            .prop_map(move |(samples, steps, (slope, auc, nu, alpha), ch)| {
                let times = steps
                    .iter()
                    .scan(0.0, |t, s| {
                        *t += s;
                        Some(*t)
                    })
                    .collect();
                SubjectModel {
                    shape: NeutralShape::new(dim, samples, times).unwrap(),
                    mean_slope: slope,
                    mean_auc: auc,
                    nu: KernelParam::new(nu).unwrap(),
                    alpha,
                    norm_stats: NormalizationStats {
                        means: ch.iter().map(|c| c.0).collect(),
                        stds: ch.iter().map(|c| c.1).collect(),
                        mins: ch.iter().map(|c| c.2).collect(),
                        maxs: ch.iter().map(|c| c.2 + c.3).collect(),
                        policy: ch
                            .iter()
                            .map(|c| if c.4 { ChannelPolicy::ZScore } else { ChannelPolicy::MinMax })
                            .collect(),
                        degenerate: Vec::new(),
                    },
                }
            })
    })
}

proptest! {
    #[test]
    fn model_json_round_trip(m in model()) {
        let text = model_to_json(&m);
        let back = model_from_json(&text, &PathBuf::from("m.json")).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn series_csv_round_trip(
        (dim, values) in (1usize..=3, 2usize..30).prop_flat_map(|(d, n)| (Just(d), proptest::collection::vec(-1e6f64..1e6, n * d))),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let n = values.len() / dim;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * 0.0025).collect();
        let s = TimeSeries::new(dim, values, Some(ts)).unwrap();
        let names: Vec<String> = (0..dim).map(|c| format!("c{c}")).collect();
        write_series_csv(&path, &s, &names).unwrap();
        let back = read_series_csv(&path, None).unwrap();
        prop_assert_eq!(back.channels, names);
        prop_assert_eq!(back.series.values(), s.values());
        prop_assert_eq!(back.series.timestamps(), s.timestamps());
    }
}

fn sample_model() -> SubjectModel {
    SubjectModel {
        shape: NeutralShape::new(1, vec![0.0, 1.0, 0.5], vec![0.0, 0.5, 1.0]).unwrap(),
        mean_slope: 0.5,
        mean_auc: 2.0,
        nu: KernelParam::new(0.7).unwrap(),
        alpha: 0.85,
        norm_stats: NormalizationStats::identity(1),
    }
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&sample_model(), &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), sample_model());
}

#[test]
fn model_version_is_checked_first() {
    let text = model_to_json(&sample_model()).replace("\"version\": 1", "\"version\": 2");
    match model_from_json(&text, &PathBuf::from("m.json")) {
        Err(Error::Version { found, expected, .. }) => {
            assert_eq!(found, "2");
            assert_eq!(expected, 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_schema_errors_name_the_field() {
    let text = model_to_json(&sample_model()).replace("\"mean_slope\"", "\"mean_slop\"");
    assert!(matches!(model_from_json(&text, &PathBuf::from("m.json")), Err(Error::Schema { .. })));
    let text = model_to_json(&sample_model()).replace("\"nu\": 0.7", "\"nu\": -0.7");
    match model_from_json(&text, &PathBuf::from("m.json")) {
        Err(Error::Schema { field, .. }) => assert_eq!(field, "nu"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_model_is_a_parse_error() {
    let text = model_to_json(&sample_model());
    let cut = &text[..text.len() / 2];
    match model_from_json(cut, &PathBuf::from("m.json")) {
        Err(Error::Parse { path, line, .. }) => {
            assert_eq!(path, PathBuf::from("m.json"));
            assert!(line > 0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn dataset_loads_relative_paths_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    for name in ["g1", "g2", "f1"] {
        fs::write(dir.path().join(format!("data/{name}.csv")), "x,y\n0,1\n1,2\n2,3\n").unwrap();
    }
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"version": 1, "sampling_frequency_hz": 100, "channels": [{"name": "x"}, {"name": "y"}],
            "subjects": [{"id": "u1", "train_genuine": ["data/g1.csv"], "test_genuine": ["data/g2.csv"],
                          "test_forgery": ["data/f1.csv"]}]}"#,
    )
    .unwrap();
    let ds = load_dataset(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(ds.channels, vec!["x", "y"]);
    assert_eq!(ds.policy, vec![ChannelPolicy::ZScore; 2]);
    let s = &ds.subjects[0];
    assert_eq!(s.test_forgery[0].label.class, Class::Forgery);
    assert_eq!(s.train_genuine[0].label.subject.as_deref(), Some("u1"));
    assert_eq!(s.test_genuine[0].timestamps().unwrap(), &[0.0, 0.01, 0.02]);
}

#[test]
fn dataset_reports_every_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.csv"), "x\n0\n1\n").unwrap();
    fs::write(dir.path().join("bad.csv"), "x\n0\nnope\n").unwrap();
    fs::write(dir.path().join("wrong.csv"), "z\n0\n1\n").unwrap();
    fs::write(
        dir.path().join("m.json"),
        r#"{"version": 1, "sampling_frequency_hz": 100, "channels": [{"name": "x"}],
            "subjects": [{"id": "u1", "train_genuine": ["ok.csv", "missing.csv", "bad.csv", "wrong.csv"]}]}"#,
    )
    .unwrap();
    match load_dataset(&dir.path().join("m.json")) {
        Err(Error::Manifest(problems)) => {
            assert_eq!(problems.len(), 3, "{problems:?}");
            assert!(problems[0].contains("missing.csv"));
            assert!(problems[1].contains("bad.csv:3:"));
            assert!(problems[2].contains("wrong.csv"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn manifest_version_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(&path, r#"{"version": 3, "sampling_frequency_hz": 100, "channels": [{"name": "x"}], "subjects": []}"#)
        .unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Version { .. })));
}
