mod common;

use cdtd::io::{load_csv, load_schema};
use cdtd::pipeline::{generate, train_model};
use cdtd::{Checkpoint, Error};
use cdtd_core::trainer::Silent;
use cdtd_core::{SampleConfig, ScheduleMode};
use common::{desk_files, tiny_config};

fn trained(mode: ScheduleMode) -> Checkpoint {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 400, mode);
    let schema = load_schema(&f.schema).unwrap();
    let data = load_csv(&f.data, &schema, "data").unwrap();
    train_model(&tiny_config(mode), &schema, &data, &mut Silent).unwrap()
}

#[test]
fn save_load_save_is_byte_identical() {
    for mode in [ScheduleMode::Single, ScheduleMode::PerType, ScheduleMode::PerFeature] {
        let ckpt = trained(mode);
        let bytes = ckpt.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CDTD");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.params, ckpt.params);
        assert_eq!(back.ema, ckpt.ema);
        assert_eq!(back.preproc, ckpt.preproc);
        assert_eq!(back.meta, ckpt.meta);
        for (a, b) in back.registry.entries.iter().zip(&ckpt.registry.entries) {
            assert_eq!((a.mu_logit, a.nu_raw, a.gamma_log), (b.mu_logit, b.nu_raw, b.gamma_log));
        }
    }
}

#[test]
fn damaged_files_are_rejected() {
    let bytes = trained(ScheduleMode::PerType).to_bytes().unwrap();
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::Version { found: 2, .. })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Checkpoint(_))));
    assert!(Error::Version { found: 2, expected: 1 }.exit_code() == 2);
}

#[test]
fn loaded_checkpoint_samples_like_the_original() {
    let ckpt = trained(ScheduleMode::PerType);
    let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    let cfg = SampleConfig { steps: 10, ..SampleConfig::new(1500, 5) };
    let a = generate(&ckpt, &cfg, 1).unwrap();
    assert_eq!(a, generate(&back, &cfg, 3).unwrap());
    assert_eq!(a.n_rows(), 1500);
    let tail = generate(&ckpt, &SampleConfig { n_rows: 500, row_offset: 1000, ..cfg.clone() }, 2).unwrap();
    assert_eq!(tail.rows, a.rows[1000..]);
}

#[test]
fn conditional_model_keeps_target_labels() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 400, ScheduleMode::PerType);
    let mut schema = load_schema(&f.schema).unwrap();
    schema.target = schema.index_of("c2");
    let data = load_csv(&f.data, &schema, "data").unwrap();
    let mut cfg = tiny_config(ScheduleMode::PerType);
    cfg.train.conditional = true;
    let ckpt = train_model(&cfg, &schema, &data, &mut Silent).unwrap();
    assert_eq!(ckpt.registry.n_cat, 1);
    let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    let out = generate(&back, &SampleConfig { steps: 5, ..SampleConfig::new(2000, 1) }, 2).unwrap();
    let a = out.rows.iter().filter(|r| r[3] == "a").count() as f64 / 2000.0;
    assert!((a - 0.4).abs() < 0.05, "{a}");
}
