use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use shapetime_core::alignment::{expectations, forward_backward, KernelParam};
use shapetime_core::centroid::{estimate_neutral_shape, extract_temporal_function, medoid_index, CentroidOptions};
use shapetime_core::eval::run_protocol;
use shapetime_core::io::{
    import_svc2004, load_dataset, load_model, read_series_csv, save_model, write_posterior_csv, write_series_csv,
    write_shape_csv, write_xi_csv, Svc2004Options,
};
use shapetime_core::scoring::{enroll_detailed, score as score_series, tune_nu, EnrollOptions};
use shapetime_core::series::{ChannelPolicy, TimeSeries};
use shapetime_core::synth::{generate, generate_offnominal, theoretical_neutral_shape, EllipseProcessConfig};

use crate::args::{
    AlignArgs, CentroidArgs, EnrollArgs, EvalArgs, InputArgs, InputFormat, ScoreArgs, SeparateArgs, SynthArgs,
};
use crate::Failure;

type CmdResult = Result<(), Failure>;

impl InputArgs {
    fn validate(&self) -> CmdResult {
        match self.format {
            InputFormat::Csv if self.keep_pressure || self.drop_pen_up => Err(Failure::usage(
                "--keep-pressure and --drop-pen-up apply to --format svc2004 only",
            )),
            InputFormat::Svc2004 if self.fe.is_some() => {
                Err(Failure::usage("--fe applies to CSV input; SVC2004 files carry timestamps"))
            }
            _ => Ok(()),
        }
    }

    /// Reads every input; all must share the same channels.
    fn read(&self, paths: &[PathBuf]) -> Result<(Vec<TimeSeries>, Vec<String>), Failure> {
        let mut series = Vec::with_capacity(paths.len());
        let mut channels: Option<Vec<String>> = None;
        for p in paths {
            let (s, names) = match self.format {
                InputFormat::Csv => {
                    let f = read_series_csv(p, self.fe)?;
                    (f.series, f.channels)
                }
                InputFormat::Svc2004 => {
                    let opts = Svc2004Options {
                        keep_pressure: self.keep_pressure,
                        drop_pen_up: self.drop_pen_up,
                    };
                    (import_svc2004(p, opts)?, opts.channels())
                }
            };
            match &channels {
                Some(c) if *c != names => {
                    return Err(Failure {
                        code: 1,
                        msg: format!("{}: channels {names:?} differ from {c:?}", p.display()),
                    })
                }
                Some(_) => {}
                None => channels = Some(names),
            }
            series.push(s);
        }
        Ok((series, channels.unwrap_or_default()))
    }
}

impl CentroidArgs {
    fn options(&self) -> CentroidOptions {
        CentroidOptions {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
        }
    }

    fn kernel(&self) -> Result<Option<KernelParam>, Failure> {
        Ok(self.nu.map(KernelParam::new).transpose()?)
    }
}

fn prepare_out(out: &Path) -> CmdResult {
    fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", out.display()),
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> CmdResult {
    let text = serde_json::to_string_pretty(value).expect("json value serializes") + "\n";
    fs::write(path, text).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    })
}

/// File-name stems for outputs, made unique by prefixing the position when
/// two inputs share a stem.
fn output_stems(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_"))
                .unwrap_or_else(|| "series".into())
        })
        .collect();
    let unique: HashSet<&String> = stems.iter().collect();
    if unique.len() == stems.len() {
        stems
    } else {
        stems.iter().enumerate().map(|(i, s)| format!("{i:03}_{s}")).collect()
    }
}

pub fn synth_ellipse(a: SynthArgs) -> CmdResult {
    let config = EllipseProcessConfig {
        a0: a.a0,
        b0: a.b0,
        f0: a.f0,
        fe: a.fe,
        sigma: a.sigma,
        amp_jitter: a.amp_jitter,
        freq_jitter: a.freq_jitter,
        phase_jitter: a.phase_jitter,
        duration: a.duration,
        seed: a.seed,
        ..Default::default()
    };
    config.validate()?;
    let generated = generate(&config, a.n)?;
    let offnominal = a
        .offnominal
        .iter()
        .map(|&m| generate_offnominal(&config, m).map(|g| (m, g)))
        .collect::<Result<Vec<_>, _>>()?;
    let neutral = theoretical_neutral_shape(&config, config.samples())?;

    prepare_out(&a.out)?;
    let channels = vec!["x".to_string(), "y".to_string()];
    let mut series_truth = Vec::new();
    for (i, g) in generated.iter().enumerate() {
        let file = format!("series_{i:03}.csv");
        write_series_csv(&a.out.join(&file), &g.series, &channels)?;
        series_truth.push(json!({ "file": file, "params": g.params, "xi": g.xi.values }));
    }
    let mut off_truth = Vec::new();
    for (mode, g) in &offnominal {
        let file = format!("offnominal_{}.csv", mode.name());
        write_series_csv(&a.out.join(&file), &g.series, &channels)?;
        off_truth.push(json!({ "mode": mode, "file": file, "params": g.params, "xi": g.xi.values }));
    }
    write_shape_csv(&a.out.join("neutral_shape.csv"), &neutral, &channels)?;
    write_json(
        &a.out.join("truth.json"),
        &json!({
            "config": config,
            "xi_units": "seconds",
            "series": series_truth,
            "offnominal": off_truth,
        }),
    )?;
    println!("wrote {} series to {}", generated.len() + offnominal.len(), a.out.display());
    Ok(())
}

pub fn separate(a: SeparateArgs) -> CmdResult {
    a.input.validate()?;
    let k = a.centroid.kernel()?;
    let (set, channels) = a.input.read(&a.inputs)?;
    let k = match k {
        Some(k) => k,
        // A lone series is tuned against itself.
        None if set.len() == 1 => tune_nu(&[set[0].clone(), set[0].clone()])?,
        None => tune_nu(&set)?,
    };
    let medoid = medoid_index(&set, k)?;
    let (shape, trace) = estimate_neutral_shape(&set, k, a.centroid.options())?;

    prepare_out(&a.out)?;
    write_shape_csv(&a.out.join("shape.csv"), &shape, &channels)?;
    for (s, stem) in set.iter().zip(output_stems(&a.inputs)) {
        let xi = extract_temporal_function(s, &shape, k)?;
        write_xi_csv(&a.out.join(format!("xi_{stem}.csv")), &xi)?;
    }
    write_json(
        &a.out.join("trace.json"),
        &json!({
            "nu": k.nu(),
            "medoid": a.inputs[medoid],
            "inertia": trace.inertia,
            "iterations": trace.iterations,
            "converged": trace.converged,
        }),
    )?;
    println!(
        "shape of {} samples from {} series, nu {}, {} accepted step(s)",
        shape.len(),
        set.len(),
        k.nu(),
        trace.inertia.len() - 1
    );
    Ok(())
}

pub fn enroll(a: EnrollArgs) -> CmdResult {
    a.input.validate()?;
    let nu = a.centroid.kernel()?;
    let (set, channels) = a.input.read(&a.inputs)?;
    let opts = EnrollOptions {
        alpha: a.alpha,
        policy: Some(ChannelPolicy::for_channels(&channels)),
        nu,
        centroid: a.centroid.options(),
    };
    let e = enroll_detailed(&set, &opts)?;

    prepare_out(&a.out)?;
    save_model(&e.model, &a.out.join("model.json"))?;
    write_shape_csv(&a.out.join("shape.csv"), &e.model.shape, &channels)?;
    write_json(
        &a.out.join("trace.json"),
        &json!({
            "nu": e.model.nu.nu(),
            "inertia": e.trace.inertia,
            "iterations": e.trace.iterations,
            "converged": e.trace.converged,
            "training_xi": e.training_xi,
        }),
    )?;
    println!(
        "model from {} series: nu {}, mean slope {}, mean auc {}",
        set.len(),
        e.model.nu.nu(),
        e.model.mean_slope,
        e.model.mean_auc
    );
    Ok(())
}

pub fn score(a: ScoreArgs) -> CmdResult {
    a.input.validate()?;
    let mut model = load_model(&a.model)?;
    if let Some(alpha) = a.alpha {
        model.alpha = alpha;
    }
    let (set, _) = a.input.read(&a.inputs)?;
    let records = set.iter().map(|s| score_series(s, &model)).collect::<Result<Vec<_>, _>>()?;

    prepare_out(&a.out)?;
    let rows: Vec<_> = records
        .iter()
        .zip(&a.inputs)
        .map(|(r, p)| json!({ "file": p, "delta_f": r.delta_f, "delta_t": r.delta_t, "delta": r.delta }))
        .collect();
    write_json(&a.out.join("scores.json"), &json!({ "alpha": model.alpha, "scores": rows }))?;
    for (r, p) in records.iter().zip(&a.inputs) {
        println!("{}\t{}\t{}\t{}", p.display(), r.delta_f, r.delta_t, r.delta);
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let nu = a.centroid.kernel()?;
    let dataset = load_dataset(&a.manifest)?;
    let opts = EnrollOptions {
        alpha: a.alpha,
        policy: None,
        nu,
        centroid: a.centroid.options(),
    };
    let report = run_protocol(&dataset, &opts)?;

    prepare_out(&a.out)?;
    let value = serde_json::to_value(&report).expect("report serializes");
    write_json(&a.out.join("report.json"), &value)?;
    let mut sweep = String::from("threshold,far,frr\n");
    for p in &report.sweep {
        sweep.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.frr));
    }
    let path = a.out.join("sweep.csv");
    fs::write(&path, sweep).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    })?;
    println!(
        "EER {:.4}%  aEER {:.4}%  FAR {:.4}%  FRR {:.4}%",
        report.eer, report.aeer, report.far_at_eer, report.frr_at_eer
    );
    Ok(())
}

pub fn align(a: AlignArgs) -> CmdResult {
    a.input.validate()?;
    let k = a.nu.map(KernelParam::new).transpose()?;
    let (set, channels) = a.input.read(&[a.first.clone(), a.second.clone()])?;
    let k = match k {
        Some(k) => k,
        None => tune_nu(&set)?,
    };
    let (o, o2) = (&set[0], &set[1]);
    let post = forward_backward(o, o2, k)?;
    let e = expectations(o, o2, &post)?;

    prepare_out(&a.out)?;
    write_posterior_csv(&a.out.join("posterior.csv"), &post)?;
    let mut text = String::from("t,expected_t");
    for c in &channels {
        text.push(',');
        text.push_str(c);
    }
    text.push('\n');
    for t in 0..e.len() {
        text.push_str(&format!("{},{:?}", t + 1, e.expected_time[t]));
        for v in e.expected_sample(t) {
            text.push_str(&format!(",{v:?}"));
        }
        text.push('\n');
    }
    let path = a.out.join("expectations.csv");
    fs::write(&path, text).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    })?;
    write_json(
        &a.out.join("alignment.json"),
        &json!({ "nu": k.nu(), "log_total": post.log_total(), "rows": post.rows(), "cols": post.cols() }),
    )?;
    println!("log total {} over {}x{} cells, nu {}", post.log_total(), post.rows(), post.cols(), k.nu());
    Ok(())
}
