//! Train, sample and evaluate on tables in memory.

use std::io::Write;
use std::path::Path;

use cdtd_core::copula::CopulaSpec;
use cdtd_core::metrics::{evaluate, EvalOptions, EvalReport};
use cdtd_core::sampler::{generate_block, Generated, NetworkDenoiser};
use cdtd_core::split::split_indices;
use cdtd_core::trainer::{train, TrainObserver};
use cdtd_core::{PreprocState, RawTable, SampleConfig, ScheduleMode, ScheduleRegistry, TableSchema, TrainConfig, TrainState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, TrainMeta};
use crate::error::{Error, Result};
use crate::io::LoadedTable;

/// Rows generated per parallel work item.
pub const SAMPLE_BLOCK: usize = 1024;

/// Contents of `--config`: every [`TrainConfig`] field plus the share of
/// rows held out for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub valid_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), valid_fraction: 0.0 }
    }
}

/// Worker threads: `CDTD_THREADS` if set to a positive integer, otherwise
/// the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("CDTD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Keep rows whose categorical labels were all seen by `preproc`.
fn known_rows(preproc: &PreprocState, table: &RawTable) -> RawTable {
    let cat_idx = preproc.schema.cat_indices();
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&r| cat_idx.iter().zip(&preproc.cat).all(|(&j, enc)| enc.encode(&table.rows[r][j]).is_ok()))
        .collect();
    table.select_rows(&keep)
}

/// Fit preprocessing and train a model on `data`.
pub fn train_model(
    config: &RunConfig,
    schema: &TableSchema,
    data: &LoadedTable,
    observer: &mut dyn TrainObserver,
) -> Result<Checkpoint> {
    config.train.validate()?;
    let v = config.valid_fraction;
    if !(0.0..1.0).contains(&v) {
        return Err(Error::Usage(format!("valid_fraction must lie in [0, 1), got {v}")));
    }
    let table = &data.table;
    let (train_raw, valid_raw) = if v > 0.0 {
        let s = split_indices(table.n_rows(), (1.0 - v, v, 0.0), None, config.train.seed)?;
        (table.select_rows(&s.train), Some(table.select_rows(&s.valid)))
    } else {
        (table.clone(), None)
    };
    let preproc = PreprocState::fit(schema, &train_raw)?;
    let train_data = preproc.apply(&train_raw)?;
    let valid_data = match &valid_raw {
        Some(t) => {
            let known = known_rows(&preproc, t);
            (known.n_rows() > 0).then(|| preproc.apply(&known)).transpose()?
        }
        None => None,
    };
    let mut state = TrainState::new(&config.train, &preproc)?;
    let summary = train(&mut state, &train_data, valid_data.as_ref(), observer)?;
    Ok(Checkpoint {
        schema: schema.clone(),
        network: state.net.config.clone(),
        registry: state.registry.clone(),
        params: state.net.params.clone(),
        ema: state.ema.clone(),
        normalizer: state.normalizer.clone(),
        preproc,
        meta: TrainMeta {
            steps: summary.steps,
            seed: config.train.seed,
            final_loss: summary.final_loss,
            tail_loss: summary.tail_loss,
            config: config.train.clone(),
            validation: summary.validation,
            dropped_rows: data.dropped,
        },
    })
}

/// Generate rows in original units with the checkpoint's EMA weights.
///
/// Rows are produced in blocks on a pool of `threads` workers; the output
/// does not depend on the thread count.
pub fn generate(ckpt: &Checkpoint, config: &SampleConfig, threads: usize) -> Result<RawTable> {
    config.validate()?;
    let layout = ckpt.layout()?;
    let net = ckpt.sampling_network()?;
    let den = NetworkDenoiser::new(&net)?;
    let cond = layout.cond_col.map(|_| layout.cond_proportions.as_slice());
    let blocks: Vec<(usize, usize)> =
        (0..config.n_rows).step_by(SAMPLE_BLOCK).map(|s| (s, SAMPLE_BLOCK.min(config.n_rows - s))).collect();
    let run = |&(start, n): &(usize, usize)| {
        let cfg = SampleConfig { n_rows: n, row_offset: config.row_offset + start as u64, ..config.clone() };
        generate_block(&den, &ckpt.registry, cond, &cfg)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker threads: {e}")))?;
    let parts: Vec<Generated> = pool.install(|| blocks.par_iter().map(run).collect::<cdtd_core::Result<_>>())?;
    let mut parts = parts.into_iter();
    let mut all = parts.next().expect("at least one block");
    parts.for_each(|p| all.append(p));
    Ok(ckpt.preproc.invert(&all.cont, &all.dataset_cat_columns(&layout))?)
}

pub fn eval_tables(
    schema: &TableSchema,
    real: &RawTable,
    fake: &RawTable,
    train: Option<&RawTable>,
) -> Result<EvalReport> {
    Ok(evaluate(schema, real, fake, train, EvalOptions::default())?)
}

pub fn make_synthetic(spec: &CopulaSpec, n: usize, seed: u64) -> Result<RawTable> {
    if n == 0 {
        return Err(Error::Usage("--n must be at least 1".into()));
    }
    spec.validate()?;
    Ok(spec.generate(n, seed)?)
}

/// Column names of the schedule entities in a registry.
pub fn entity_names(registry: &ScheduleRegistry, feature_names: &[String]) -> Vec<String> {
    match registry.mode {
        ScheduleMode::Single => vec!["all".into()],
        ScheduleMode::PerType => vec!["continuous".into(), "categorical".into()],
        ScheduleMode::PerFeature => feature_names.to_vec(),
    }
}

/// CSV of `(t, σ_e(t))` over an even grid, one column per entity.
pub fn write_schedule_grid<W: Write>(
    mut w: W,
    registry: &ScheduleRegistry,
    feature_names: &[String],
    points: usize,
) -> std::io::Result<()> {
    let names = entity_names(registry, feature_names);
    let quote = |s: &str| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
    let header: Vec<String> = std::iter::once("t".to_string()).chain(names.iter().map(|n| quote(n))).collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, sig) in registry.grid(points) {
        let cells: Vec<String> = std::iter::once(t.to_string()).chain(sig.iter().map(f64::to_string)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_schedule_grid_file(path: &Path, ckpt: &Checkpoint, points: usize) -> Result<()> {
    let layout = ckpt.layout()?;
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let f = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(f);
    write_schedule_grid(&mut w, &ckpt.registry, &layout.names, points).map_err(io)?;
    w.flush().map_err(io)
}
