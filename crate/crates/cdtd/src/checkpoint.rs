//! Self-describing model checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CDTD" | version u32
//! schema JSON | preprocessing JSON | network config JSON      (u64 length + bytes each)
//! registry: mode u8, n_cont u32, n_cat u32, bounds 4×f64,
//!           n_entries u32, per entry (mu_logit, nu_raw, gamma_log, σ_min, σ_max) f64
//! live tensors | EMA tensors: count u32, per tensor name (u32 length + UTF-8),
//!           rank u32, dims u64…, data f32…
//! normalizer: n u32, freqs f64×n, weights f64×2n (cos then sin), bias f64
//! metadata JSON
//! ```

use std::path::Path;

use cdtd_core::network::Tensor;
use cdtd_core::schedule::SigmaBounds;
use cdtd_core::trainer::ModelLayout;
use cdtd_core::{
    LossNormalizer, Network, NetworkConfig, Parameters, PreprocState, ScheduleMode, ScheduleParams, ScheduleRegistry,
    TableSchema, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{open_error, Error, Result};

pub const MAGIC: &[u8; 4] = b"CDTD";
pub const VERSION: u32 = 1;

/// Training record stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub steps: u64,
    pub seed: u64,
    pub final_loss: f64,
    pub tail_loss: f64,
    pub config: TrainConfig,
    pub validation: Vec<(u64, f64)>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema: TableSchema,
    pub preproc: PreprocState,
    pub network: NetworkConfig,
    pub registry: ScheduleRegistry,
    pub params: Parameters<f32>,
    /// EMA weights, used for sampling.
    pub ema: Parameters<f32>,
    pub normalizer: LossNormalizer,
    pub meta: TrainMeta,
}

impl Checkpoint {
    pub fn layout(&self) -> Result<ModelLayout> {
        Ok(ModelLayout::new(&self.preproc, self.meta.config.conditional)?)
    }

    /// EMA network with embedding rows re-normalized.
    pub fn sampling_network(&self) -> Result<Network<f32>> {
        let mut params = self.ema.clone();
        params.normalize_embeddings();
        Ok(Network::new(self.network.clone(), params)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.json(&self.schema)?;
        w.json(&self.preproc)?;
        w.json(&self.network)?;
        write_registry(&mut w, &self.registry)?;
        write_tensors(&mut w, &self.params)?;
        write_tensors(&mut w, &self.ema)?;
        let n = &self.normalizer;
        if n.weights.len() != 2 * n.freqs.len() {
            return Err(Error::Checkpoint("normalizer needs two weights per frequency".into()));
        }
        w.len32(n.freqs.len())?;
        n.freqs.iter().chain(&n.weights).for_each(|&v| w.f64(v));
        w.f64(n.bias);
        w.json(&self.meta)?;
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic (not a model checkpoint)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let schema: TableSchema = r.json("schema")?;
        schema.validate()?;
        let preproc: PreprocState = r.json("preprocessing")?;
        if preproc.schema != schema {
            return Err(Error::Checkpoint("preprocessing schema differs from the stored schema".into()));
        }
        let network: NetworkConfig = r.json("network config")?;
        network.validate()?;
        let registry = read_registry(&mut r)?;
        let params = Parameters::from_tensors(&network, read_tensors(&mut r)?)?;
        let ema = Parameters::from_tensors(&network, read_tensors(&mut r)?)?;
        let n = r.u32()? as usize;
        let freqs = r.f64s(n)?;
        let weights = r.f64s(2 * n)?;
        let bias = r.f64()?;
        let normalizer = LossNormalizer::from_parts(freqs, weights, bias);
        let meta: TrainMeta = r.json("metadata")?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ckpt = Self { schema, preproc, network, registry, params, ema, normalizer, meta };
        let layout = ckpt.layout()?;
        if registry_mismatch(&ckpt.registry, &layout) || ckpt.network.n_cont != layout.n_cont {
            return Err(Error::Checkpoint("registry or network does not match the preprocessing state".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| open_error("model", path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn registry_mismatch(reg: &ScheduleRegistry, layout: &ModelLayout) -> bool {
    reg.n_cont != layout.n_cont || reg.n_cat != layout.n_cat()
}

fn mode_code(m: ScheduleMode) -> u8 {
    match m {
        ScheduleMode::Single => 0,
        ScheduleMode::PerType => 1,
        ScheduleMode::PerFeature => 2,
    }
}

fn write_registry(w: &mut Writer, reg: &ScheduleRegistry) -> Result<()> {
    w.buf.push(mode_code(reg.mode));
    w.len32(reg.n_cont)?;
    w.len32(reg.n_cat)?;
    for v in [reg.bounds.cont.0, reg.bounds.cont.1, reg.bounds.cat.0, reg.bounds.cat.1] {
        w.f64(v);
    }
    w.len32(reg.entries.len())?;
    for e in &reg.entries {
        for v in [e.mu_logit, e.nu_raw, e.gamma_log, e.sigma_min, e.sigma_max] {
            w.f64(v);
        }
    }
    Ok(())
}

fn read_registry(r: &mut Reader) -> Result<ScheduleRegistry> {
    let mode = match r.take(1)?[0] {
        0 => ScheduleMode::Single,
        1 => ScheduleMode::PerType,
        2 => ScheduleMode::PerFeature,
        m => return Err(Error::Checkpoint(format!("unknown schedule mode {m}"))),
    };
    let n_cont = r.u32()? as usize;
    let n_cat = r.u32()? as usize;
    let b = r.f64s(4)?;
    let bounds = SigmaBounds { cont: (b[0], b[1]), cat: (b[2], b[3]) };
    let mut reg = ScheduleRegistry::new(mode, n_cont, n_cat, bounds)?;
    let n = r.u32()? as usize;
    if n != reg.entries.len() {
        return Err(Error::Checkpoint(format!("registry has {n} entries, mode {} needs {}", mode.name(), reg.entries.len())));
    }
    for e in &mut reg.entries {
        let v = r.f64s(5)?;
        if v.iter().any(|x| !x.is_finite()) || !(v[3] >= 0.0 && v[4] > v[3]) {
            return Err(Error::Checkpoint("invalid schedule parameters".into()));
        }
        *e = ScheduleParams {
            mu_logit: v[0],
            nu_raw: v[1],
            gamma_log: v[2],
            sigma_min: v[3],
            sigma_max: v[4],
            adam_m: [0.0; 3],
            adam_v: [0.0; 3],
            adam_t: 0,
        };
    }
    Ok(reg)
}

fn write_tensors(w: &mut Writer, p: &Parameters<f32>) -> Result<()> {
    let tensors = p.tensors();
    w.len32(tensors.len())?;
    for t in tensors {
        w.len32(t.name.len())?;
        w.bytes(t.name.as_bytes());
        w.len32(t.dims.len())?;
        t.dims.iter().for_each(|&d| w.u64(d as u64));
        t.data.iter().for_each(|v| w.bytes(&v.to_le_bytes()));
    }
    Ok(())
}

fn read_tensors(r: &mut Reader) -> Result<Vec<Tensor<f32>>> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("tensor dimension overflows".into()))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is too large")))?;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push(Tensor { name, dims, data });
    }
    Ok(out)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn len32(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("count {n} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn json<T: Serialize>(&mut self, v: &T) -> Result<()> {
        let s = serde_json::to_vec(v).map_err(|e| Error::Checkpoint(format!("cannot encode section: {e}")))?;
        self.u64(s.len() as u64);
        self.bytes(&s);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint("truncated file".into()));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self, what: &str) -> Result<T> {
        let len = usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("section too large".into()))?;
        serde_json::from_slice(self.take(len)?).map_err(|e| Error::Checkpoint(format!("{what} section: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_rejects_truncation() {
        let mut r = Reader { buf: &[1, 2, 3], pos: 0 };
        assert!(r.u32().is_err());
        let mut r = Reader { buf: &[1, 0, 0, 0], pos: 0 };
        assert_eq!(r.u32().unwrap(), 1);
    }

    #[test]
    fn header_checks() {
        assert!(matches!(Checkpoint::from_bytes(b"NOPE\x01\0\0\0"), Err(Error::Checkpoint(_))));
        assert!(matches!(Checkpoint::from_bytes(b"CDTD\x02\0\0\0"), Err(Error::Version { found: 2, expected: 1 })));
        assert!(matches!(Checkpoint::from_bytes(b"CDTD\x01\0\0\0"), Err(Error::Checkpoint(_))));
    }
}
