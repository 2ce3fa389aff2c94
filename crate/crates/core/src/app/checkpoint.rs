use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

use super::config::Config;
use crate::params::ParamStore;
use crate::tensor::{Adam, AdamConfig};

pub const MAGIC: &[u8; 8] = b"SPCHCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("config fingerprint mismatch: checkpoint {found}, current {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("checkpoint tensor {name}: {detail}")]
    Tensor { name: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameters, step counter, optional Adam state and the resolved config
/// that produced them. `meta` carries extra header lines such as the model
/// kind and character vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub meta: IndexMap<String, String>,
    pub step: u64,
    pub tensors: IndexMap<String, TensorRecord>,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn from_store(config: &Config, store: &ParamStore, step: u64, optimizer: Option<&Adam>) -> Self {
        let tensors = store
            .iter()
            .map(|(n, t)| {
                (
                    n.to_string(),
                    TensorRecord {
                        shape: t.shape().to_vec(),
                        data: t.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            config: config.clone(),
            meta: IndexMap::new(),
            step,
            tensors,
            optimizer: optimizer.cloned(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    /// Errors unless `config` hashes to the same fingerprint.
    pub fn check_fingerprint(&self, config: &Config) -> Result<()> {
        let (found, expected) = (self.fingerprint(), config.fingerprint());
        if found != expected {
            return Err(CheckpointError::Fingerprint { expected, found });
        }
        Ok(())
    }

    /// Copies every tensor of `store` from the checkpoint. Names and shapes
    /// must match exactly.
    pub fn load_into(&self, store: &ParamStore) -> Result<()> {
        for (name, t) in store.iter() {
            let rec = self.tensors.get(name).ok_or_else(|| CheckpointError::Tensor {
                name: name.into(),
                detail: "missing".into(),
            })?;
            if rec.shape != t.shape() {
                return Err(CheckpointError::Tensor {
                    name: name.into(),
                    detail: format!("shape {:?}, model expects {:?}", rec.shape, t.shape()),
                });
            }
            t.data_mut().copy_from_slice(&rec.data);
        }
        if let Some(extra) = self.tensors.keys().find(|k| !store.contains(k)) {
            return Err(CheckpointError::Tensor {
                name: extra.clone(),
                detail: "not part of the model".into(),
            });
        }
        Ok(())
    }

    fn header_text(&self) -> String {
        let mut s = self.config.to_text();
        for (k, v) in &self.meta {
            s.push_str(&format!("@{k} = {v}\n"));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.header_text());
        put_str(&mut out, &self.fingerprint());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, rec) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(rec.shape.len() as u64).to_le_bytes());
            for &d in &rec.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f64s(&mut out, &rec.data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                for v in [opt.config.beta1, opt.config.beta2, opt.config.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&(opt.moments.len() as u64).to_le_bytes());
                for (name, (m, v)) in &opt.moments {
                    put_str(&mut out, name);
                    out.extend_from_slice(&(m.len() as u64).to_le_bytes());
                    put_f64s(&mut out, m);
                    put_f64s(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(r.err_at(0, "bad magic"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let header_at = r.pos;
        let header = r.string("header")?;
        let mut config_text = String::new();
        let mut meta = IndexMap::new();
        for line in header.lines() {
            if let Some(rest) = line.strip_prefix('@') {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| r.err_at(header_at, &format!("bad header line {line:?}")))?;
                meta.insert(k.to_string(), v.to_string());
            } else {
                config_text.push_str(line);
                config_text.push('\n');
            }
        }
        let config = Config::from_text(&config_text, "checkpoint header")
            .map_err(|e| r.err_at(header_at, &e.to_string()))?;
        let fp_at = r.pos;
        let fingerprint = r.string("fingerprint")?;
        if fingerprint != config.fingerprint() {
            return Err(r.err_at(fp_at, "fingerprint does not match header"));
        }
        let step = r.u64("step")?;
        let n = r.len("tensor count")?;
        let mut tensors = IndexMap::new();
        for _ in 0..n {
            let name = r.string("tensor name")?;
            let ndim = r.len("tensor rank")?;
            let shape = (0..ndim)
                .map(|_| r.len("tensor dim"))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| r.err("tensor size overflows"))?;
            let data = r.f64s(numel, "tensor values")?;
            tensors.insert(name, TensorRecord { shape, data });
        }
        let optimizer = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let step = r.u64("adam step")?;
                let beta1 = r.f64("adam beta1")?;
                let beta2 = r.f64("adam beta2")?;
                let eps = r.f64("adam eps")?;
                let mut opt = Adam::new(AdamConfig { beta1, beta2, eps });
                opt.step = step;
                let n = r.len("moment count")?;
                for _ in 0..n {
                    let name = r.string("moment name")?;
                    let len = r.len("moment length")?;
                    let m = r.f64s(len, "first moment")?;
                    let v = r.f64s(len, "second moment")?;
                    opt.moments.insert(name, (m, v));
                }
                Some(opt)
            }
            other => return Err(r.err(&format!("optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(r.err(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config,
            meta,
            step,
            tensors,
            optimizer,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_atomic(path.as_ref(), &self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path.as_ref()).map_err(crate::with_path(path.as_ref()))?)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: &str) -> CheckpointError {
        self.err_at(self.pos, detail)
    }

    fn err_at(&self, offset: usize, detail: &str) -> CheckpointError {
        CheckpointError::Format {
            offset,
            detail: detail.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(&format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    // A length that must also fit in the remaining bytes.
    fn len(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        if v > self.bytes.len() as u64 {
            return Err(self.err_at(at, &format!("{what} {v} exceeds file size")));
        }
        Ok(v as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what)?;
        let at = self.pos;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err_at(at, &format!("{what} is not UTF-8")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let nbytes = n
            .checked_mul(8)
            .ok_or_else(|| self.err(&format!("{what} length overflows")))?;
        let raw = self.take(nbytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
