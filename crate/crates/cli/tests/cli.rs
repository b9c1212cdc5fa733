use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_deepvio");

const SMALL_MODEL: &str = "\
model.visual_feature_dim = 6
model.inertial_hidden = 5
model.inertial_feature_dim = 4
model.core_hidden = 7
model.head_hidden = 12
model.encoder_channels = 2,3,4,4
";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Two seconds of 9x16 frames: 20 frames, 19 observations.
fn smoke_data(root: &Path) -> std::path::PathBuf {
    let data = root.join("data");
    ok(&["gen", "--duration", "2", "--height", "9", "--width", "16", "--out", p(&data)]);
    data
}

fn small_model_config(root: &Path) -> std::path::PathBuf {
    let cfg = root.join("small.cfg");
    std::fs::write(&cfg, SMALL_MODEL).unwrap();
    cfg
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

#[test]
fn gen_writes_the_requested_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let stdout = ok(&["gen", "--duration", "60", "--seed", "7", "--height", "9", "--width", "16", "--out", p(&out)]);
    assert_eq!(value(&stdout, "frames"), "600");
    let frames = read(&out.join("all/frames.csv"));
    assert_eq!(frames.lines().skip(1).count(), 600);
    assert_eq!(value(&stdout, "corrupted_frames"), "120");
    assert!(out.join("train").is_dir() && out.join("test").is_dir());
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    ok(&["gen", "--duration", "1.5", "--corrupt", "0.3", "--height", "9", "--width", "16", "--out", p(&a)]);
    let echo = read(&a.join("config.echo"));
    assert!(echo.starts_with("command = gen\n"));
    assert_eq!(value(&echo, "corrupt"), "0.3");

    let b = dir.path().join("b");
    ok(&["--config", p(&a.join("config.echo")), "gen", "--out", p(&b)]);
    for f in ["all/imu.csv", "all/frames.csv", "test/groundtruth.csv", "gen_summary.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    // flags beat the file
    let c = dir.path().join("c");
    ok(&["--config", p(&a.join("config.echo")), "gen", "--corrupt", "0", "--out", p(&c)]);
    assert_eq!(value(&read(&c.join("gen_summary.txt")), "corrupted_frames"), "0");
}

#[test]
fn bad_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "durration = 3\n").unwrap();
    let o = run(&["--config", p(&cfg), "gen", "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("durration"));
}

#[test]
fn train_smoke_both_losses_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = smoke_data(dir.path());
    let cfg = small_model_config(dir.path());

    let sigma = dir.path().join("sigma");
    ok(&["--config", p(&cfg), "train", "--data", p(&data), "--epochs", "1", "--loss", "sigma", "--out", p(&sigma)]);
    let log = read(&sigma.join("train_log.csv"));
    let row: Vec<&str> = log.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!(row[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()), "{row:?}");
    assert!(sigma.join("model.ckpt").is_file() && sigma.join("loss.svg").is_file());

    let beta = dir.path().join("beta");
    ok(&[
        "--config", p(&cfg), "train", "--data", p(&data), "--epochs", "1", "--loss", "beta", "--beta", "500",
        "--out", p(&beta),
    ]);
    assert_eq!(value(&read(&beta.join("config.echo")), "model.visual_feature_dim"), "6");

    let resumed = dir.path().join("resumed");
    let ckpt = sigma.join("model.ckpt");
    ok(&["train", "--data", p(&data), "--epochs", "2", "--resume", p(&ckpt), "--out", p(&resumed)]);
    let log = read(&resumed.join("train_log.csv"));
    let epochs: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["2", "3"]);
    assert_eq!(value(&read(&resumed.join("train_summary.txt")), "epochs"), "3");
}

#[test]
fn missing_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--data", p(&dir.path().join("nowhere")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["eval", "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn passthrough_eval_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = smoke_data(dir.path());
    let out = dir.path().join("eval");
    let stdout = ok(&["eval", "--data", p(&data), "--estimator", "passthrough", "--assert-rmse", "1e-12", "--out", p(&out)]);
    assert_eq!(value(&stdout, "trans_rmse_m"), "0.000000");
    assert!(read(&out.join("eval.csv")).lines().count() > 1);
    assert!(out.join("trajectory.svg").is_file());
}

#[test]
fn eval_assertions_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = smoke_data(dir.path());
    let cfg = small_model_config(dir.path());
    let model = dir.path().join("m");
    ok(&["--config", p(&cfg), "train", "--data", p(&data), "--epochs", "1", "--out", p(&model)]);
    let ckpt = model.join("model.ckpt");
    let out = dir.path().join("e");
    let o = run(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt), "--assert-rmse", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let metrics = read(&out.join("metrics.txt"));
    assert_eq!(value(&metrics, "imu_only_updates"), value(&metrics, "corrupted_frames"));
    ok(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt), "--assert-rmse", "100", "--out", p(&out)]);
}

#[test]
fn bound_self_test_prints_the_golden_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["bound", "--self-test", "--out", p(dir.path())]);
    let v: f64 = value(&stdout, "steady_state_p").parse().unwrap();
    assert!((v - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-9);
}

#[test]
fn bound_report_on_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = smoke_data(dir.path());
    let cfg = small_model_config(dir.path());
    let model = dir.path().join("m");
    ok(&["--config", p(&cfg), "train", "--data", p(&data), "--epochs", "1", "--out", p(&model)]);
    let out = dir.path().join("b");
    let stdout = ok(&[
        "bound", "--data", p(&data), "--checkpoint", p(&model.join("model.ckpt")), "--mc-runs", "20",
        "--assert-consistency", "0.5", "--out", p(&out),
    ]);
    assert!(value(&stdout, "ml_over_bound").parse::<f64>().unwrap() > 0.0);
    let csv = read(&out.join("bound.csv"));
    assert!(csv.starts_with("timestamp_s,kf_err_m,ml_err_m,kf_steady_std_m\n"));
    assert!(out.join("bound.svg").is_file());
}

#[test]
fn fly_truth_lands_and_asserts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let stdout = ok(&["fly", "--estimator", "truth", "--assert-landing", "0.05", "--out", p(&out)]);
    assert!(value(&stdout, "status").starts_with("landed"));
    for f in ["flight.csv", "mission.txt", "topdown.svg", "altitude.svg", "config.echo"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = run(&["fly", "--estimator", "truth", "--assert-landing", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fly_reads_a_mission_file_and_the_kalman_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&["fly", "--estimator", "truth", "--out", p(&first)]);
    let mission = read(&first.join("mission.txt")).replace("pad = 2,1", "pad = 1.5,0.5");
    let file = dir.path().join("m.txt");
    std::fs::write(&file, mission).unwrap();
    let out = dir.path().join("kf");
    let stdout = ok(&["fly", "--mission", p(&file), "--estimator", "kf", "--assert-landing", "0.1", "--out", p(&out)]);
    assert_eq!(value(&stdout, "estimator"), "kf");
    assert!(read(&out.join("mission.txt")).contains("pad = 1.5,0.5"));
}

#[test]
fn report_collects_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let data = smoke_data(dir.path());
    let fly = dir.path().join("fly");
    ok(&["fly", "--out", p(&fly)]);
    let out = dir.path().join("r");
    ok(&["report", "--input", p(&data), "--input", p(&fly), "--out", p(&out)]);
    let md = read(&out.join("report.md"));
    assert!(md.contains("gen_summary.txt") && md.contains("flight_summary.txt"));
    assert!(md.contains("topdown.svg"));
}
