use super::*;
use crate::dataio::{generate_synthetic, split, corrupt_frames, Dataset, FlightSpec, ImuSample, WorldSpec};
use crate::nn::gradcheck;
use rand::Rng;

pub(crate) fn small_config() -> FusionConfig {
    FusionConfig {
        image_shape: (9, 16, 1),
        visual_feature_dim: 6,
        inertial_hidden: 5,
        inertial_feature_dim: 4,
        core_hidden: 7,
        head_hidden: 12,
        encoder_channels: [2, 3, 4, 4],
        ..FusionConfig::default()
    }
}

/// Nine frames, so eight observations.
pub(crate) fn smoke_dataset() -> Dataset {
    let flight = FlightSpec {
        duration_s: 0.9,
        image_shape: (9, 16, 1),
        ..FlightSpec::standard()
    };
    generate_synthetic(&WorldSpec::default(), &flight, 3).unwrap()
}

fn model() -> FusionModel {
    FusionModel::new(small_config(), PoseNormalizer::IDENTITY, 11).unwrap()
}

fn randomize(m: &mut FusionModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in m.param_ids() {
        for v in m.params.value_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

#[test]
fn visual_features_are_deterministic_and_zero_for_blank_frames() {
    let ds = smoke_dataset();
    let m = model();
    let f = &ds.observations()[0].frame;
    let a = m.encode_visual(f).unwrap();
    assert_eq!(a, m.encode_visual(f).unwrap());
    assert_eq!(a.values.len(), 6);
    assert_eq!(a.kind, FeatureKind::Visual);
    assert!(a.values.iter().any(|v| *v != 0.0));
    let blank = Frame {
        pixels: Tensor::zeros(&[9, 16, 1]),
        timestamp: 0.0,
        corrupted: false,
    };
    assert!(m.encode_visual(&blank).unwrap().values.iter().all(|v| *v == 0.0));
}

#[test]
fn visual_encoder_rejects_bad_frames() {
    let ds = smoke_dataset();
    let m = model();
    let mut f = ds.observations()[0].frame.clone();
    f.corrupted = true;
    assert!(matches!(m.encode_visual(&f), Err(Error::CorruptedFrame(_))));
    let wrong = Frame {
        pixels: Tensor::zeros(&[8, 16, 1]),
        timestamp: 0.0,
        corrupted: false,
    };
    assert!(matches!(m.encode_visual(&wrong), Err(Error::Shape { .. })));
}

#[test]
fn visual_gradient_matches_finite_differences() {
    let ds = smoke_dataset();
    let mut m = model();
    randomize(&mut m, 1);
    let frame = ds.observations()[2].frame.clone();
    let convs: Vec<ParamId> = m
        .param_ids()
        .into_iter()
        .filter(|id| m.params.value(*id).shape().len() == 4)
        .collect();
    assert_eq!(convs.len(), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probes = gradcheck::check(&m.params, &convs, 10, 1e-5, &mut rng, |g, s| {
        let px = g.input(frame.pixels.clone());
        let z = m.visual_vars(g, s, px)?;
        g.sum(z)
    })
    .unwrap();
    assert!(gradcheck::worst(&probes) < 1e-4, "{probes:?}");
}

fn window(samples: &[(f64, [f64; 6])], t0: f64, t1: f64) -> ImuWindow {
    let s = samples
        .iter()
        .map(|(t, v)| ImuSample {
            timestamp: *t,
            accel: Vec3::new(v[0], v[1], v[2]),
            gyro: Vec3::new(v[3], v[4], v[5]),
        })
        .collect();
    ImuWindow::new(s, t0, t1).unwrap()
}

#[test]
fn single_sample_window_is_one_lstm_step() {
    let mut m = model();
    randomize(&mut m, 3);
    let w = window(&[(0.0, [0.3, -0.2, 9.81, 0.1, 0.0, -0.05])], 0.0, 0.1);
    let z = m.encode_inertial(&w).unwrap();
    assert_eq!(z.kind, FeatureKind::Inertial);

    let mut g = Graph::new();
    let zero = LstmVars::from_state(&mut g, &LstmState::zeros(5));
    let x = g.input(Tensor::vector(vec![0.3 / 9.81, -0.2 / 9.81, 1.0, 0.1, 0.0, -0.05, 0.0]));
    let s = lstm_step(&mut g, &m.params, &m.layout.inertial, x, zero).unwrap();
    let expect = m.dense(&mut g, &m.params, s.hidden, m.layout.inertial_proj).unwrap();
    assert_eq!(z.values, g.value(expect).data());
}

#[test]
fn inertial_features_depend_on_sample_order() {
    let mut m = model();
    randomize(&mut m, 4);
    let a = [0.5, 0.0, 9.0, 0.0, 0.2, 0.0];
    let b = [-0.5, 1.0, 10.0, 0.3, 0.0, -0.1];
    let w1 = window(&[(0.0, a), (0.05, b)], 0.0, 0.1);
    let w2 = window(&[(0.0, b), (0.05, a)], 0.0, 0.1);
    assert_eq!(m.encode_inertial(&w1).unwrap(), m.encode_inertial(&w1.clone()).unwrap());
    assert_ne!(m.encode_inertial(&w1).unwrap(), m.encode_inertial(&w2).unwrap());
}

#[test]
fn predictions_are_deterministic_and_unit() {
    let ds = smoke_dataset();
    let mut m = model();
    randomize(&mut m, 5);
    let o = &ds.observations()[1];
    let prev = ds.observations()[0].ground_truth.unwrap();
    let s = m.initial_state();
    let a = m.predict(o, &prev, &s).unwrap();
    assert_eq!(a, m.predict(o, &prev, &s).unwrap());
    assert!(!a.imu_only);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let b = m.layout.rotation.b;
        for v in m.params.value_mut(b).data_mut() {
            *v = rng.random_range(-50.0..50.0);
        }
        let q = m.predict(o, &prev, &s).unwrap().pose.orientation();
        assert!((q.norm() - 1.0).abs() < 1e-12 && q.w >= 0.0);
    }
}

#[test]
fn zero_rotation_head_keeps_previous_attitude() {
    let ds = smoke_dataset();
    let mut m = model();
    for id in [m.layout.rotation.w, m.layout.rotation.b] {
        m.params.value_mut(id).data_mut().fill(0.0);
    }
    let prev = Pose::new(Vec3::new(0.0, 0.0, 2.0), Quat::from_axis_angle(Vec3::x(), 0.3), 0.0).unwrap();
    let p = m.predict(&ds.observations()[0], &prev, &m.initial_state()).unwrap();
    assert_eq!(p.pose.orientation(), prev.orientation());
    assert!(p.state.is_finite());
}

#[test]
fn imu_only_path_ignores_pixels() {
    let ds = smoke_dataset();
    let m = model();
    let prev = ds.start_pose().copied().unwrap();
    let mut poisoned = ds.observations()[0].clone();
    poisoned.frame.pixels = Tensor::full(&[9, 16, 1], f64::NAN);
    let p = m.predict_imu_only(&poisoned.imu, &prev, &m.initial_state()).unwrap();
    assert!(p.imu_only && p.state.is_finite());
    let fused = m.fused_features(None, &poisoned.imu, &prev).unwrap();
    assert_eq!(fused.values.len(), 6 + 4);
    assert_eq!(fused.kind, FeatureKind::Fused);
    // a dropout frame is routed to the same branch
    let dropped = corrupt_frames(&ds, 1.0, 0);
    let q = m.predict(&dropped.observations()[0], &prev, &m.initial_state()).unwrap();
    assert_eq!(q, p);
}

#[test]
fn predictions_do_not_see_the_future() {
    let ds = smoke_dataset();
    let mut m = model();
    randomize(&mut m, 7);
    let (_, test) = split(&ds, 0.25).unwrap();
    let before = evaluate_open_loop(&m, &test).unwrap();
    let mut obs = test.observations().to_vec();
    let last = obs.len() - 1;
    obs[last].frame.pixels.data_mut()[0] = 0.77;
    obs[last].imu = window(&[(obs[last].imu.t_start(), [1.0; 6])], obs[last].imu.t_start(), obs[last].imu.t_end());
    let mutated = Dataset::new(test.meta.clone(), test.start_frame().cloned(), test.start_pose().copied(), obs).unwrap();
    let after = evaluate_open_loop(&m, &mutated).unwrap();
    assert_eq!(before.predictions[..last], after.predictions[..last]);
    assert_ne!(before.predictions[last], after.predictions[last]);
}

#[test]
fn full_model_gradient_check() {
    let ds = smoke_dataset();
    let mut m = model();
    randomize(&mut m, 8);
    let obs: Vec<Observation> = ds.observations()[..3].to_vec();
    let start = ds.start_pose().copied().unwrap();
    let names = [
        "visual.stem",
        "visual.block1.conv2",
        "visual.block2.proj",
        "visual.fc2.w",
        "inertial.lstm.w_input",
        "inertial.proj.w",
        "core.lstm.w_hidden",
        "core.lstm.bias",
        "head.fc.w",
        "head.translation.w",
        "head.rotation.b",
        "loss.s_x",
        "loss.s_q",
    ];
    let ids: Vec<ParamId> = names.iter().map(|n| m.params.id(n).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let probes = gradcheck::check(&m.params, &ids, 26, 1e-5, &mut rng, |g, s| {
        let w = m.loss_weights(g, s);
        let mut state = LstmVars::from_state(g, &LstmState::zeros(7));
        let mut prev = start;
        let mut losses = Vec::new();
        for o in &obs {
            let out = m.step_vars(g, s, Some(&o.frame), &o.imu, &prev, state)?;
            let t = o.ground_truth.unwrap();
            let l = pose_loss(g, out.translation, out.quat_raw, t.position, t.orientation(), w, &m.config)?;
            losses.push(l.total);
            state = out.state;
            prev = t;
        }
        let all = g.concat(&losses)?;
        g.sum(all)
    })
    .unwrap();
    assert!(gradcheck::worst(&probes) < 1e-4, "{probes:#?}");
}

#[test]
fn smoke_training_is_finite_and_deterministic() {
    let ds = smoke_dataset();
    let tc = TrainConfig {
        epochs: 2,
        seq_len: 4,
        lr: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (tr, va) = split(&ds, 0.75).unwrap();
    let a = train(&tr, Some(&va), &small_config(), &tc, |_| {}).unwrap();
    assert_eq!(a.log.len(), 2);
    for e in &a.log {
        assert!(e.train_loss.is_finite() && e.val_trans_rmse.is_finite());
    }
    let b = train(&tr, Some(&va), &small_config(), &tc, |_| {}).unwrap();
    assert_eq!(a.log_csv(), b.log_csv());
    assert!(a.log_csv().starts_with("epoch,train_loss,data_loss,val_trans_rmse_m,val_rot_rmse_rad,s_x,s_q\n"));
}

#[test]
fn training_with_dropouts_still_learns() {
    let ds = corrupt_frames(&smoke_dataset(), 0.2, 4);
    assert!(ds.corrupted_count() > 0);
    let tc = TrainConfig {
        epochs: 200,
        seq_len: 8,
        lr: 1e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(&ds, None, &small_config(), &tc, |_| {}).unwrap();
    let first = out.log[0].data_loss;
    let last = out.log.last().unwrap().data_loss;
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let ds = smoke_dataset();
    let mut m = model();
    randomize(&mut m, 10);
    m.normalizer = PoseNormalizer {
        mean: Vec3::new(1.0, 0.5, 1.5),
        std: Vec3::new(0.7, 0.4, 0.6),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut extra = BTreeMap::new();
    extra.insert("epoch".to_string(), "3".to_string());
    m.save(&path, &extra).unwrap();
    let (back, meta) = FusionModel::load(&path).unwrap();
    assert_eq!(meta.get("epoch").map(String::as_str), Some("3"));
    assert_eq!(back.config, m.config);
    assert_eq!(back.normalizer, m.normalizer);
    assert_eq!(evaluate_open_loop(&back, &ds).unwrap(), evaluate_open_loop(&m, &ds).unwrap());
}

#[test]
fn empty_training_set_is_rejected() {
    let ds = smoke_dataset();
    let (tr, _) = split(&ds, 0.5).unwrap();
    let bare = Dataset::new(tr.meta.clone(), None, None, tr.observations()[..1].to_vec()).unwrap();
    let r = train(&bare, None, &small_config(), &TrainConfig::default(), |_| {});
    assert!(matches!(r, Err(Error::EmptyInput(_))));
}
