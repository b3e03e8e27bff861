use cdtd_core::copula::{Component, ContinuousMarginal, CopulaSpec};
use cdtd_core::trainer::{train, Silent, TrainConfig, TrainState};
use cdtd_core::{Dataset, Error, PreprocState, ScheduleMode};

fn desk(n: usize, seed: u64) -> (PreprocState, Dataset) {
    let spec = CopulaSpec::desk(0.8);
    let raw = spec.generate(n, seed).unwrap();
    let pre = PreprocState::fit(&spec.schema().unwrap(), &raw).unwrap();
    let data = pre.apply(&raw).unwrap();
    (pre, data)
}

fn small(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch: 128,
        warmup: steps / 4,
        trunk_width: 32,
        proj_dim: 32,
        log_every: 0,
        valid_every: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn untrained_losses_are_calibrated() {
    let (pre, data) = desk(4096, 3);
    let cfg = TrainConfig { trunk_width: 64, proj_dim: 64, ..TrainConfig::default() };
    for mode in [ScheduleMode::Single, ScheduleMode::PerType, ScheduleMode::PerFeature] {
        let st = TrainState::new(&TrainConfig { mode, ..cfg.clone() }, &pre).unwrap();
        let rows: Vec<usize> = (0..4096).collect();
        for (i, t) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            let l = st.feature_losses_at(&data, &rows, t, 100 + i as u64).unwrap();
            for (k, v) in l.iter().enumerate() {
                assert!((v - 1.0).abs() <= 0.05, "{mode:?} t={t} feature {k}: {v}");
            }
        }
    }
}

#[test]
fn first_step_joint_loss_is_one() {
    let (pre, data) = desk(4096, 4);
    let mut st = TrainState::new(&TrainConfig { batch: 4096, trunk_width: 64, proj_dim: 64, ..TrainConfig::default() }, &pre)
        .unwrap();
    let rows: Vec<usize> = (0..4096).collect();
    let m = st.train_step(&data, &rows).unwrap();
    assert!((m.loss - 1.0).abs() <= 0.05, "{}", m.loss);
    assert!((m.loss_normalized - m.loss).abs() < 1e-12);
}

#[test]
fn zero_lr_with_frozen_fits_changes_nothing() {
    let (pre, data) = desk(500, 5);
    let cfg = TrainConfig { lr: 0.0, fit_schedules: false, fit_normalizer: false, ..small(10) };
    let mut st = TrainState::new(&cfg, &pre).unwrap();
    let before = st.net.params.clone();
    let ema = st.ema.clone();
    let reg = st.registry.clone();
    let rows: Vec<usize> = (0..128).collect();
    for _ in 0..3 {
        st.train_step(&data, &rows).unwrap();
    }
    assert_eq!(st.net.params, before);
    assert_eq!(st.ema, ema);
    assert_eq!(st.registry, reg);
}

#[test]
fn ema_starts_at_live_weights() {
    let (pre, _) = desk(200, 6);
    let st = TrainState::new(&small(10), &pre).unwrap();
    assert_eq!(st.ema, st.net.params);
}

#[test]
fn schedule_and_network_updates_are_separate() {
    let (pre, data) = desk(500, 7);
    let rows: Vec<usize> = (0..128).collect();

    // The network step does not feed into the schedule or normalizer fit.
    let mut frozen = TrainState::new(&TrainConfig { lr: 0.0, ..small(10) }, &pre).unwrap();
    let mut live = TrainState::new(&small(10), &pre).unwrap();
    frozen.train_step(&data, &rows).unwrap();
    live.train_step(&data, &rows).unwrap();
    assert_ne!(frozen.net.params, live.net.params);
    assert_eq!(frozen.registry, live.registry);
    assert_eq!(frozen.normalizer.predict(0.3), live.normalizer.predict(0.3));
    assert_ne!(frozen.registry, TrainState::new(&small(10), &pre).unwrap().registry);

    // Schedule and normalizer fits do not touch the network.
    let mut fit = TrainState::new(&small(10), &pre).unwrap();
    let mut nofit =
        TrainState::new(&TrainConfig { fit_schedules: false, fit_normalizer: false, ..small(10) }, &pre).unwrap();
    fit.train_step(&data, &rows).unwrap();
    nofit.train_step(&data, &rows).unwrap();
    assert_eq!(fit.net.params, nofit.net.params);
    assert_ne!(fit.registry, nofit.registry);
}

#[test]
fn same_seed_same_weights() {
    let (pre, data) = desk(600, 8);
    let run = || {
        let mut st = TrainState::new(&small(30), &pre).unwrap();
        let s = train(&mut st, &data, None, &mut Silent).unwrap();
        (st.net.params, st.ema, st.registry, s.final_loss)
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let mut st = TrainState::new(&TrainConfig { seed: 1, ..small(30) }, &pre).unwrap();
    train(&mut st, &data, None, &mut Silent).unwrap();
    assert_ne!(st.net.params, a.0);
}

fn gaussian_single(n: usize) -> (PreprocState, Dataset) {
    let spec = CopulaSpec {
        continuous: vec![ContinuousMarginal {
            name: "x".into(),
            components: vec![Component { weight: 1.0, mean: 0.0, std: 1.0 }],
            integer: false,
        }],
        categorical: vec![],
        rho: 0.0,
        correlation: None,
    };
    let raw = spec.generate(n, 9).unwrap();
    let pre = PreprocState::fit(&spec.schema().unwrap(), &raw).unwrap();
    let data = pre.apply(&raw).unwrap();
    (pre, data)
}

/// For a standard-normal feature the initial denoiser `x_t / (σ² + 1)` is
/// already the posterior mean, so the calibrated loss cannot fall below 1.
#[test]
fn standard_normal_feature_stays_at_unit_loss() {
    let (pre, data) = gaussian_single(4000);
    let cfg = TrainConfig { steps: 200, batch: 256, warmup: 20, trunk_width: 64, proj_dim: 64, log_every: 0, ..TrainConfig::default() };
    let mut st = TrainState::new(&cfg, &pre).unwrap();
    let s = train(&mut st, &data, None, &mut Silent).unwrap();
    assert!((s.tail_loss - 1.0).abs() < 0.05, "{}", s.tail_loss);
}

/// Categorical losses fall well below the no-information level once the
/// noisy embedding identifies the class at low noise.
#[test]
fn categorical_features_train_below_unit_loss() {
    let mut spec = CopulaSpec::desk(0.6);
    spec.continuous.clear();
    let raw = spec.generate(4000, 10).unwrap();
    let pre = PreprocState::fit(&spec.schema().unwrap(), &raw).unwrap();
    let data = pre.apply(&raw).unwrap();
    let cfg = TrainConfig { steps: 200, batch: 256, warmup: 20, trunk_width: 64, proj_dim: 64, log_every: 0, ..TrainConfig::default() };
    let mut st = TrainState::new(&cfg, &pre).unwrap();
    let rows: Vec<usize> = (0..2000).collect();
    let t = 0.05;
    let before = st.feature_losses_at(&data, &rows, t, 1).unwrap();
    train(&mut st, &data, None, &mut Silent).unwrap();
    let after = st.feature_losses_at(&data, &rows, t, 1).unwrap();
    for (b, a) in before.iter().zip(&after) {
        assert!((b - 1.0).abs() < 0.05 && *a < 0.9, "before {b} after {a}");
    }
}

#[test]
fn divergence_and_shape_errors() {
    let (pre, data) = desk(300, 11);
    let mut st = TrainState::new(&TrainConfig { lr: 1e4, warmup: 0, ..small(20) }, &pre).unwrap();
    let r = train(&mut st, &data, None, &mut Silent);
    assert!(matches!(r, Err(Error::Diverged { .. }) | Err(Error::NonFiniteLoss { .. }) | Ok(_)));

    let (pre2, _) = gaussian_single(50);
    let st = TrainState::new(&small(5), &pre2).unwrap();
    assert!(st.validation_loss(&data, &[0, 1]).is_err());
}

#[test]
fn validation_runs_on_schedule() {
    let (pre, data) = desk(600, 12);
    let cfg = TrainConfig { valid_every: 5, valid_rows: 100, ..small(12) };
    let mut st = TrainState::new(&cfg, &pre).unwrap();
    let s = train(&mut st, &data, Some(&data), &mut Silent).unwrap();
    let steps: Vec<u64> = s.validation.iter().map(|v| v.0).collect();
    assert_eq!(steps, vec![5, 10, 12]);
    assert!(s.validation.iter().all(|v| v.1.is_finite()));
}
