//! Binary checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! b"MSGNNCKP" version
//! meta_len  meta (UTF-8 `key=value` lines)
//! count     { name_len name rank dims[rank] f32[prod(dims)] } * count
//! ```
//!
//! Model configuration keys are stored under `model.`; trainers may add their
//! own keys and extra tensors (optimizer moments live under `optim.`).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Msgnn, MsgnnConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MSGNNCKP";
pub const VERSION: u32 = 1;

/// Named tensors plus a text metadata snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf).map_err(|e| bad(e.to_string()))?;
    if buf.len() != n {
        return Err(bad("truncated file"));
    }
    Ok(buf)
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| bad(format!("{what} too large")))
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut meta = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(bad(format!("metadata entry {k:?} is not representable")));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        out.extend_from_slice(&len_u32(meta.len(), "metadata")?.to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&len_u32(self.tensors.len(), "tensor count")?.to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&len_u32(name.len(), "name")?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len_u32(t.rank(), "rank")?.to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&len_u32(d, "dimension")?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut r: impl Read) -> Result<Self> {
        let magic = read_bytes(&mut r, MAGIC.len())?;
        if magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let meta = String::from_utf8(read_bytes(&mut r, meta_len)?).map_err(|_| bad("metadata is not UTF-8"))?;
        let meta = meta
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| bad(format!("malformed metadata line {line:?}")))
            })
            .collect::<Result<_>>()?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(read_bytes(&mut r, name_len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| bad(format!("tensor {name}: shape overflow")))?;
            let raw = read_bytes(&mut r, n)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_bytes(bytes.as_slice()).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// Model configuration recorded under `model.`.
    pub fn model_config(&self) -> Result<MsgnnConfig> {
        let mut cfg = MsgnnConfig::default();
        let mut seen = false;
        for (k, v) in &self.meta {
            if let Some(key) = k.strip_prefix("model.") {
                if !cfg.set(key, v)? {
                    return Err(bad(format!("unknown model key {key}")));
                }
                seen = true;
            }
        }
        if !seen {
            return Err(bad("no model configuration recorded"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Msgnn<f32> {
    /// Snapshot of the configuration and every parameter.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        for (k, v) in self.config.pairs() {
            ckpt.set_meta(format!("model.{k}"), v);
        }
        ckpt.tensors = self.params.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect();
        ckpt
    }

    /// Rebuilds the network described by the checkpoint and loads its weights.
    /// Every parameter must be present with the expected shape; tensors outside
    /// the model are allowed only under the `optim.` prefix.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut model = Msgnn::new(ckpt.model_config()?)?;
        let mut loaded = vec![false; model.params.len()];
        for (name, t) in &ckpt.tensors {
            if name.starts_with("optim.") {
                continue;
            }
            let id = model
                .params
                .id(name)
                .ok_or_else(|| bad(format!("unexpected tensor {name} for this configuration")))?;
            model.params.set(name, t.clone())?;
            loaded[id.0] = true;
        }
        if let Some(i) = loaded.iter().position(|&l| !l) {
            return Err(bad(format!(
                "missing tensor {}",
                model.params.name(crate::tensor::ParamId(i))
            )));
        }
        Ok(model)
    }

    /// Like [`from_checkpoint`](Self::from_checkpoint) but also requires the
    /// recorded configuration to equal `expected`.
    pub fn from_checkpoint_with(ckpt: &Checkpoint, expected: &MsgnnConfig) -> Result<Self> {
        let found = ckpt.model_config()?;
        if let Some(((k, want), (_, got))) = expected
            .pairs()
            .into_iter()
            .zip(found.pairs())
            .find(|(a, b)| a.1 != b.1)
        {
            return Err(bad(format!(
                "config mismatch on {k}: expected {want}, checkpoint has {got}"
            )));
        }
        Self::from_checkpoint(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
