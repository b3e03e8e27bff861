#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdtd::io::{write_csv, write_json, SchemaFile};
use cdtd::RunConfig;
use cdtd_core::copula::CopulaSpec;
use cdtd_core::{ScheduleMode, TrainConfig};

pub fn cdtd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdtd")).args(args).env("CDTD_THREADS", "2").output().expect("run cdtd")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn tiny_config(mode: ScheduleMode) -> RunConfig {
    RunConfig {
        train: TrainConfig {
            steps: 50,
            batch: 64,
            warmup: 5,
            trunk_width: 32,
            proj_dim: 16,
            embed_dim: 4,
            log_every: 25,
            valid_every: 25,
            mode,
            ..TrainConfig::default()
        },
        valid_fraction: 0.2,
    }
}

/// Desk copula data, its schema and a tiny config, written into `dir`.
pub struct Files {
    pub spec: PathBuf,
    pub schema: PathBuf,
    pub data: PathBuf,
    pub config: PathBuf,
}

pub fn desk_files(dir: &Path, n: usize, mode: ScheduleMode) -> Files {
    let spec = CopulaSpec::desk(0.8);
    let files = Files {
        spec: dir.join("spec.json"),
        schema: dir.join("schema.json"),
        data: dir.join("train.csv"),
        config: dir.join("config.json"),
    };
    write_json(&files.spec, &spec).unwrap();
    write_json(&files.schema, &SchemaFile::from_schema(&spec.schema().unwrap())).unwrap();
    write_csv(&files.data, &spec.generate(n, 1).unwrap()).unwrap();
    write_json(&files.config, &tiny_config(mode)).unwrap();
    files
}
