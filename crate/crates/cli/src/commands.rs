use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use deepvio::dataio::{
    corrupt_frames, generate_synthetic, load_euroc_layout, split, write_euroc_layout, Dataset, FlightSpec, WorldSpec,
};
use deepvio::flightsim::{fly as fly_mission, Estimator, FlightOutcome, Mission};
use deepvio::geometry::{Pose, Trajectory};
use deepvio::kalman::{bound_report, monte_carlo_consistency, riccati_steady_state, ConstantVelocity, KalmanModel};
use deepvio::model::{
    evaluate_open_loop, train as train_fresh, train_model, EpochStats, EvalReport, FusionConfig, FusionModel,
    LossMode, TrainConfig,
};
use deepvio::plot::{Chart, Series};

use crate::settings::Settings;
use crate::{BoundArgs, EvalArgs, FlyArgs, GenArgs, ReportArgs, TrainArgs};

/// Assertion failures of a run; empty means success.
type Failures = Vec<String>;

/// Checkpoint manifest key holding the number of epochs trained so far.
const EPOCHS_KEY: &str = "train.epochs";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// `data/part` when `gen` wrote it, else `data` itself.
fn part_dir(data: &Path, part: &str) -> PathBuf {
    let sub = data.join(part);
    if sub.is_dir() {
        sub
    } else {
        data.to_path_buf()
    }
}

fn load(dir: &Path) -> Result<Dataset> {
    load_euroc_layout(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_model(path: &Path) -> Result<(FusionModel, BTreeMap<String, String>)> {
    FusionModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn gen(mut s: Settings, a: GenArgs, seed: u64, out: &Path) -> Result<Failures> {
    let standard = FlightSpec::standard();
    let duration = s.value("duration", a.duration, standard.duration_s)?;
    let corrupt = s.value("corrupt", a.corrupt, deepvio::dataio::STANDARD_CORRUPTION)?;
    let train_fraction = s.value("split", a.split, deepvio::dataio::STANDARD_TRAIN_FRACTION)?;
    let height = s.value("height", a.height, standard.image_shape.0)?;
    let width = s.value("width", a.width, standard.image_shape.1)?;
    s.finish(out)?;
    if !(0.0..=1.0).contains(&corrupt) {
        bail!("corruption fraction {corrupt} not in [0, 1]");
    }

    let spec = FlightSpec {
        duration_s: duration,
        image_shape: (height, width, 1),
        ..standard
    };
    let ds = generate_synthetic(&WorldSpec::default(), &spec, seed)?;
    let ds = corrupt_frames(&ds, corrupt, seed);
    let (train, test) = split(&ds, train_fraction)?;
    for (name, part) in [("all", &ds), ("train", &train), ("test", &test)] {
        let dir = out.join(name);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        write_euroc_layout(part, &dir).with_context(|| format!("writing {}", dir.display()))?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "frames = {}", ds.len() + 1);
    let _ = writeln!(summary, "observations = {}", ds.len());
    let _ = writeln!(summary, "corrupted_frames = {}", ds.corrupted_count());
    let _ = writeln!(summary, "train_observations = {}", train.len());
    let _ = writeln!(summary, "test_observations = {}", test.len());
    let _ = writeln!(
        summary,
        "trajectory_diagonal_m = {:.6}",
        ds.ground_truth_trajectory()?.bounding_box_diagonal()
    );
    write(&out.join("gen_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(vec![])
}

pub fn train(mut s: Settings, a: TrainArgs, seed: u64, out: &Path) -> Result<Failures> {
    let defaults = TrainConfig::default();
    let model_defaults = FusionConfig::default();
    let data = s.required_path("data", a.data)?;
    let tc = TrainConfig {
        epochs: s.value("epochs", a.epochs, defaults.epochs)?,
        lr: s.value("lr", a.lr, defaults.lr)?,
        seq_len: s.value("seq_len", a.seq_len, defaults.seq_len)?,
        prev_noise: s.value("prev_noise", a.prev_noise, defaults.prev_noise)?,
        seed,
    };
    let loss = s.value("loss", a.loss, "sigma".to_string())?;
    let beta = s.value("beta", a.beta, 500.0)?;
    let gamma = s.value("gamma", a.gamma, model_defaults.gamma)?;
    let resume = s.path("resume", a.resume)?;
    let dims = s.take_prefixed("model.");

    let train_ds = load(&part_dir(&data, "train"))?;
    let test_dir = data.join("test");
    let val_ds = if test_dir.is_dir() { Some(load(&test_dir)?) } else { None };

    let loss_mode = match loss.as_str() {
        "sigma" => LossMode::LearnedSigma,
        "beta" => LossMode::FixedBeta(beta),
        other => bail!("unknown loss `{other}`, expected `sigma` or `beta`"),
    };
    let (model, offset) = match &resume {
        Some(path) => {
            if !dims.is_empty() {
                bail!("a resumed run keeps the checkpoint's model keys");
            }
            let (model, meta) = load_model(path)?;
            let done: usize = match meta.get(EPOCHS_KEY) {
                Some(v) => v.parse().with_context(|| format!("{EPOCHS_KEY} = `{v}`"))?,
                None => 0,
            };
            (Some(model), done)
        }
        None => (None, 0),
    };
    let config = match &model {
        Some(m) => m.config.clone(),
        None => {
            let base = FusionConfig {
                image_shape: train_ds.meta.image_shape,
                gamma,
                loss_mode,
                ..model_defaults
            };
            let config = model_config(base, &dims)?;
            let mut meta = BTreeMap::new();
            config.to_meta(&mut meta);
            for (k, v) in meta.iter().filter(|(k, _)| !RESERVED_MODEL_KEYS.contains(&k.as_str())) {
                s.record(k, v);
            }
            config
        }
    };
    s.finish(out)?;
    if config.image_shape != train_ds.meta.image_shape {
        bail!(
            "model expects {:?} images, dataset has {:?}",
            config.image_shape,
            train_ds.meta.image_shape
        );
    }

    let started = Instant::now();
    let total = offset + tc.epochs;
    let progress = |e: &EpochStats| {
        eprintln!(
            "epoch {}/{total} loss {:.4} data {:.4} val {:.4} m ({:.0} s)",
            e.epoch + offset,
            e.train_loss,
            e.data_loss,
            e.val_trans_rmse,
            started.elapsed().as_secs_f64()
        );
    };
    let outcome = match model {
        Some(m) => train_model(m, &train_ds, val_ds.as_ref(), &tc, progress)?,
        None => train_fresh(&train_ds, val_ds.as_ref(), &config, &tc, progress)?,
    };

    let mut log = format!("{}\n", EpochStats::CSV_HEADER);
    let mut epochs = Vec::new();
    for e in &outcome.log {
        let e = EpochStats {
            epoch: e.epoch + offset,
            ..e.clone()
        };
        let _ = writeln!(log, "{}", e.csv_row());
        epochs.push(e);
    }
    write(&out.join("train_log.csv"), &log)?;

    let extra = |n: usize| {
        let mut m = BTreeMap::new();
        m.insert(EPOCHS_KEY.to_string(), n.to_string());
        m.insert("train.seed".to_string(), seed.to_string());
        m
    };
    outcome.model.save(&out.join("model.ckpt"), &extra(total))?;
    outcome.best.save(&out.join("best.ckpt"), &extra(offset + outcome.best_epoch))?;

    let curve = |f: fn(&EpochStats) -> f64| epochs.iter().map(|e| (e.epoch as f64, f(e))).collect::<Vec<_>>();
    Chart::new("Training loss", "epoch", "loss per observation")
        .with(Series::line("optimized", curve(|e| e.train_loss)))
        .with(Series::line("L_x + L_q", curve(|e| e.data_loss)))
        .write(&out.join("loss.svg"))?;
    if val_ds.is_some() {
        Chart::new("Validation error", "epoch", "translation RMSE [m]")
            .with(Series::line("val", curve(|e| e.val_trans_rmse)))
            .write(&out.join("val.svg"))?;
    }

    let mut summary = String::new();
    if let (Some(first), Some(last)) = (epochs.first(), epochs.last()) {
        let _ = writeln!(summary, "epochs = {total}");
        let _ = writeln!(summary, "first_train_loss = {:.6}", first.train_loss);
        let _ = writeln!(summary, "last_train_loss = {:.6}", last.train_loss);
        let _ = writeln!(summary, "first_data_loss = {:.6}", first.data_loss);
        let _ = writeln!(summary, "last_data_loss = {:.6}", last.data_loss);
        let _ = writeln!(summary, "data_loss_reduction = {:.6}", 1.0 - last.data_loss / first.data_loss);
        let _ = writeln!(summary, "final_val_trans_rmse_m = {:.6}", last.val_trans_rmse);
        let _ = writeln!(summary, "best_epoch = {}", offset + outcome.best_epoch);
        let (s_x, s_q) = outcome.model.loss_weight_values();
        let _ = writeln!(summary, "s_x = {s_x:.6}");
        let _ = writeln!(summary, "s_q = {s_q:.6}");
    }
    write(&out.join("train_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(vec![])
}

/// Set from the `loss`, `beta`, `gamma` keys and the dataset.
const RESERVED_MODEL_KEYS: [&str; 3] = ["model.image_shape", "model.loss_mode", "model.gamma"];

fn model_config(base: FusionConfig, overrides: &[(String, String)]) -> Result<FusionConfig> {
    let mut meta = BTreeMap::new();
    base.to_meta(&mut meta);
    for (k, v) in overrides {
        if RESERVED_MODEL_KEYS.contains(&k.as_str()) {
            bail!("`{k}` is set through the loss, beta and gamma keys or the dataset");
        }
        if !meta.contains_key(k) {
            bail!("unknown model key `{k}`");
        }
        meta.insert(k.clone(), v.clone());
    }
    let config = FusionConfig::from_meta(&meta)?;
    config.validate()?;
    Ok(config)
}

/// Ground truth echoed back, for checking the evaluation pipeline.
fn passthrough(ds: &Dataset) -> Result<EvalReport> {
    let Some(truth) = ds.ground_truth() else {
        bail!("evaluation needs ground truth");
    };
    let n = truth.len();
    Ok(EvalReport {
        predictions: truth.clone(),
        truth,
        imu_only: vec![false; n],
        corrupted: ds.observations().iter().map(|o| o.frame.corrupted).collect(),
        trans_rmse: 0.0,
        rot_rmse: 0.0,
    })
}

fn xy(poses: &[Pose]) -> Vec<(f64, f64)> {
    poses.iter().map(|p| (p.position.x, p.position.y)).collect()
}

pub fn eval(mut s: Settings, a: EvalArgs, out: &Path) -> Result<Failures> {
    let data = s.required_path("data", a.data)?;
    let estimator = s.value("estimator", a.estimator, "learned".to_string())?;
    let checkpoint = s.path("checkpoint", a.checkpoint)?;
    let assert_rmse: Option<f64> = s.optional("assert_rmse", a.assert_rmse)?;
    let assert_fraction: Option<f64> = s.optional("assert_rmse_fraction", a.assert_rmse_fraction)?;
    let assert_fallback = s.switch("assert_fallback", a.assert_fallback)?;
    s.finish(out)?;

    let ds = load(&part_dir(&data, "test"))?;
    let report = match estimator.as_str() {
        "learned" => {
            let Some(ckpt) = checkpoint else {
                bail!("the learned estimator needs `--checkpoint`");
            };
            let (model, _) = load_model(&ckpt)?;
            evaluate_open_loop(&model, &ds)?
        }
        "passthrough" => passthrough(&ds)?,
        other => bail!("unknown estimator `{other}`, expected `learned` or `passthrough`"),
    };
    // the whole flight's extent when `gen` wrote it, else the evaluated part's
    let all = data.join("all");
    let (diagonal, diagonal_of) = if all.is_dir() {
        (load(&all)?.ground_truth_trajectory()?.bounding_box_diagonal(), "all")
    } else {
        (ds.ground_truth_trajectory()?.bounding_box_diagonal(), "evaluated")
    };
    let corrupted = report.corrupted.iter().filter(|c| **c).count();
    let clean_rmse = report.subset_trans_rmse(false).unwrap_or(f64::NAN);
    let corrupted_rmse = report.subset_trans_rmse(true).unwrap_or(f64::NAN);

    let mut m = String::new();
    let _ = writeln!(m, "estimator = {estimator}");
    let _ = writeln!(m, "observations = {}", report.predictions.len());
    let _ = writeln!(m, "trans_rmse_m = {:.6}", report.trans_rmse);
    let _ = writeln!(m, "rot_rmse_rad = {:.6}", report.rot_rmse);
    let _ = writeln!(m, "trajectory_diagonal_m = {diagonal:.6}");
    let _ = writeln!(m, "diagonal_of = {diagonal_of}");
    let _ = writeln!(m, "rmse_over_diagonal = {:.6}", report.trans_rmse / diagonal);
    let _ = writeln!(m, "corrupted_frames = {corrupted}");
    let _ = writeln!(m, "imu_only_updates = {}", report.imu_only_count());
    let _ = writeln!(m, "clean_trans_rmse_m = {clean_rmse:.6}");
    let _ = writeln!(m, "corrupted_trans_rmse_m = {corrupted_rmse:.6}");
    write(&out.join("metrics.txt"), &m)?;
    write(&out.join("eval.csv"), report.to_csv())?;
    print!("{m}");

    Chart::new("Top-down trajectory", "x [m]", "y [m]")
        .with(Series::line("truth", xy(&report.truth)))
        .with(Series::line(estimator.as_str(), xy(&report.predictions)))
        .equal()
        .write(&out.join("trajectory.svg"))?;
    let errs = report.translation_errors();
    let times: Vec<f64> = report.truth.iter().map(|p| p.timestamp).collect();
    let dropped: Vec<(f64, f64)> = times
        .iter()
        .zip(&errs)
        .zip(&report.corrupted)
        .filter(|(_, c)| **c)
        .map(|((t, e), _)| (*t, *e))
        .collect();
    Chart::new("Translation error", "t [s]", "error [m]")
        .with(Series::line("error", times.iter().copied().zip(errs.iter().copied()).collect()))
        .with(Series::markers("corrupted frame", dropped))
        .write(&out.join("errors.svg"))?;

    let mut failures = vec![];
    if let Some(limit) = assert_rmse {
        if !(report.trans_rmse < limit) {
            failures.push(format!("translation RMSE {:.4} m is not below {limit} m", report.trans_rmse));
        }
    }
    if let Some(f) = assert_fraction {
        if !(report.trans_rmse < f * diagonal) {
            failures.push(format!(
                "translation RMSE {:.4} m is not below {f} of the {diagonal:.4} m diagonal",
                report.trans_rmse
            ));
        }
    }
    if assert_fallback {
        if report.imu_only_count() != corrupted || report.imu_only != report.corrupted {
            failures.push(format!(
                "{} IMU-only updates for {corrupted} corrupted frames",
                report.imu_only_count()
            ));
        }
        if !(corrupted_rmse >= clean_rmse) {
            failures.push(format!(
                "corrupted-frame RMSE {corrupted_rmse:.4} m is below clean-frame RMSE {clean_rmse:.4} m"
            ));
        }
    }
    Ok(failures)
}

pub fn bound(mut s: Settings, a: BoundArgs, seed: u64, out: &Path) -> Result<Failures> {
    let self_test = s.switch("self_test", a.self_test)?;
    if self_test {
        s.finish(out)?;
        let model = KalmanModel::scalar(1.0, 1.0, 1.0, 1.0)?;
        let ss = riccati_steady_state(&model, 1e-15, 10_000)?;
        let p = ss.predicted[(0, 0)];
        let analytic = 0.5 * (1.0 + 5f64.sqrt());
        let mut text = String::new();
        let _ = writeln!(text, "steady_state_p = {p:.15}");
        let _ = writeln!(text, "analytic_p = {analytic:.15}");
        let _ = writeln!(text, "abs_error = {:.3e}", (p - analytic).abs());
        let _ = writeln!(text, "iterations = {}", ss.iterations);
        write(&out.join("bound_selftest.txt"), &text)?;
        print!("{text}");
        return Ok(if (p - analytic).abs() < 1e-9 {
            vec![]
        } else {
            vec![format!("scalar fixed point {p} differs from {analytic}")]
        });
    }

    let data = s.required_path("data", a.data)?;
    let checkpoint = s.required_path("checkpoint", a.checkpoint)?;
    let accel_psd = s.value("accel_psd", a.accel_psd, 1.0)?;
    let ds = load(&part_dir(&data, "test"))?;
    let world = ds.meta.world.clone().unwrap_or_default();
    let gsd = world.ground_sample_distance(2.0, ds.meta.image_shape.1);
    let meas_sigma = s.value("meas_sigma", a.meas_sigma, gsd)?;
    let mc_runs = s.value("mc_runs", a.mc_runs, 0)?;
    let assert_consistency: Option<f64> = s.optional("assert_consistency", a.assert_consistency)?;
    s.finish(out)?;
    if assert_consistency.is_some() && mc_runs == 0 {
        bail!("`--assert-consistency` needs `--mc-runs`");
    }

    let (model, _) = load_model(&checkpoint)?;
    let eval = evaluate_open_loop(&model, &ds)?;
    let truth = Trajectory::from_poses(eval.truth.clone())?;
    let ml = Trajectory::from_poses(eval.predictions.clone())?;
    let cv = ConstantVelocity {
        dt: 1.0 / ds.meta.camera_rate_hz,
        accel_psd,
        meas_sigma,
        axes: 3,
    };
    let report = bound_report(&cv, &truth, &ml, seed)?;
    let mut summary = report.summary();
    let mut failures = vec![];
    if mc_runs > 0 {
        let c = monte_carlo_consistency(&cv.model()?, mc_runs, 150, 50, seed)?;
        let worst = c.worst_ratio_error(3);
        let emp: Vec<String> = c.empirical_std.iter().take(3).map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(summary, "mc_runs = {mc_runs}");
        let _ = writeln!(summary, "mc_position_std_m = {}", emp.join(","));
        let _ = writeln!(summary, "mc_worst_ratio_error = {worst:.6}");
        if let Some(tol) = assert_consistency {
            if !(worst < tol) {
                failures.push(format!("Monte Carlo std is off by {worst:.4}, tolerance {tol}"));
            }
        }
    }
    write(&out.join("bound.csv"), report.to_csv())?;
    write(&out.join("bound_summary.txt"), &summary)?;
    print!("{summary}");

    let series = |f: fn(&deepvio::kalman::BoundRow) -> f64| {
        report.rows.iter().map(|r| (r.timestamp, f(r))).collect::<Vec<_>>()
    };
    Chart::new("Learned estimate against the filter bound", "t [s]", "position error [m]")
        .with(Series::line("learned", series(|r| r.ml_err)))
        .with(Series::line("kalman filter", series(|r| r.kf_err)))
        .with(Series::line("steady-state std", series(|r| r.kf_steady_std)))
        .write(&out.join("bound.svg"))?;
    Ok(failures)
}

pub fn fly(mut s: Settings, a: FlyArgs, seed: u64, out: &Path) -> Result<Failures> {
    let mission_path = s.path("mission", a.mission)?;
    let estimator = s.value("estimator", a.estimator, "truth".to_string())?;
    let checkpoint = s.path("checkpoint", a.checkpoint)?;
    let kf_accel_psd = s.value("kf_accel_psd", a.kf_accel_psd, 1.0)?;
    let kf_meas_sigma = s.value("kf_meas_sigma", a.kf_meas_sigma, 0.02)?;
    let corrupt: Option<f64> = s.optional("corrupt", a.corrupt)?;
    let assert_landing: Option<f64> = s.optional("assert_landing", a.assert_landing)?;
    s.finish(out)?;

    let mut mission = match &mission_path {
        Some(p) => Mission::read(p).with_context(|| format!("reading mission {}", p.display()))?,
        None => Mission::standard(),
    };
    if let Some(c) = corrupt {
        mission.corrupt_fraction = c;
    }
    let est = match estimator.as_str() {
        "truth" => Estimator::Truth,
        "kf" => Estimator::Kalman {
            accel_psd: kf_accel_psd,
            meas_sigma: kf_meas_sigma,
        },
        "learned" => {
            let Some(ckpt) = checkpoint else {
                bail!("the learned estimator needs `--checkpoint`");
            };
            let (model, _) = load_model(&ckpt)?;
            if mission_path.is_none() {
                mission.image_shape = model.config.image_shape;
            }
            Estimator::Learned(Box::new(model))
        }
        other => bail!("unknown estimator `{other}`, expected `truth`, `kf` or `learned`"),
    };

    let started = Instant::now();
    let outcome = fly_mission(&mission, &est, &WorldSpec::default(), seed)?;
    eprintln!("flight simulated in {:.2} s", started.elapsed().as_secs_f64());

    write(&out.join("flight.csv"), outcome.log.to_csv())?;
    mission.write(&out.join("mission.txt"))?;
    let summary = outcome.summary(est.name());
    write(&out.join("flight_summary.txt"), &summary)?;
    print!("{summary}");
    flight_charts(&outcome, &mission, out)?;

    let mut failures = vec![];
    if let Some(limit) = assert_landing {
        if !outcome.landed() {
            failures.push(format!("vehicle did not land: {:?}", outcome.status));
        } else if !(outcome.landing_error < limit) {
            failures.push(format!("landing error {:.4} m is not below {limit} m", outcome.landing_error));
        }
    }
    Ok(failures)
}

fn flight_charts(outcome: &FlightOutcome, mission: &Mission, out: &Path) -> Result<()> {
    let r = &outcome.log.records;
    let truth: Vec<Pose> = r.iter().map(|r| r.truth).collect();
    let est: Vec<Pose> = r.iter().map(|r| r.estimate).collect();
    let target: Vec<(f64, f64)> = r.iter().map(|r| (r.target.position.x, r.target.position.y)).collect();
    Chart::new("Top-down flight", "x [m]", "y [m]")
        .with(Series::line("truth", xy(&truth)))
        .with(Series::line("estimate", xy(&est)))
        .with(Series::line("setpoint", target))
        .with(Series::markers("pad", vec![mission.plan.pad]))
        .equal()
        .write(&out.join("topdown.svg"))?;
    let over_time = |f: &dyn Fn(&deepvio::flightsim::FlightRecord) -> f64| r.iter().map(|r| (r.time, f(r))).collect();
    Chart::new("Altitude", "t [s]", "z [m]")
        .with(Series::line("truth", over_time(&|r| r.truth.position.z)))
        .with(Series::line("estimate", over_time(&|r| r.estimate.position.z)))
        .with(Series::line("setpoint", over_time(&|r| r.target.position.z)))
        .write(&out.join("altitude.svg"))?;
    Ok(())
}

const SUMMARY_FILES: [&str; 6] = [
    "gen_summary.txt",
    "train_summary.txt",
    "metrics.txt",
    "bound_selftest.txt",
    "bound_summary.txt",
    "flight_summary.txt",
];

pub fn report(mut s: Settings, a: ReportArgs, out: &Path) -> Result<Failures> {
    let inputs = s.list("input", a.inputs);
    s.finish(out)?;
    if inputs.is_empty() {
        bail!("`--input` names no run directories");
    }
    let mut md = String::from("# deepvio report\n");
    for dir in &inputs {
        let dir_path = Path::new(dir);
        if !dir_path.is_dir() {
            bail!("{dir} is not a directory");
        }
        let _ = writeln!(md, "\n## {dir}\n");
        if let Ok(echo) = std::fs::read_to_string(dir_path.join(crate::settings::ECHO_FILE)) {
            let _ = writeln!(md, "Configuration:\n\n```\n{echo}```\n");
        }
        for f in SUMMARY_FILES {
            if let Ok(text) = std::fs::read_to_string(dir_path.join(f)) {
                let _ = writeln!(md, "`{f}`:\n\n```\n{text}```\n");
            }
        }
        let mut svgs: Vec<String> = std::fs::read_dir(dir_path)
            .with_context(|| format!("listing {dir}"))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".svg"))
            .collect();
        svgs.sort();
        for svg in svgs {
            let _ = writeln!(md, "![{svg}]({})\n", dir_path.join(&svg).display());
        }
    }
    write(&out.join("report.md"), &md)?;
    print!("{md}");
    Ok(vec![])
}
