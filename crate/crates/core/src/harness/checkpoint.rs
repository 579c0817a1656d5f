//! Binary checkpoint format:
//! `"HCKP" | u32 version | u64 metadata length | JSON metadata | records`,
//! each record `u16 name length | name | u8 rank | rank × u64 dims | f32 data`,
//! all little-endian.

use std::fs;
use std::path::Path;

use numcore::Tensor64;
use serde::{Deserialize, Serialize};

use super::train::Recognizer;
use crate::cmlpe::{CmlpeConfig, GenerationPair};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::recognizers::{Classifier, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture description stored alongside the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "kebab-case")]
pub enum CheckpointMeta {
    Classifier {
        model: ModelConfig,
        num_classes: usize,
        #[serde(default)]
        dct_inputs: bool,
    },
    Generator {
        config: CmlpeConfig,
    },
}

pub fn encode_checkpoint(meta: &CheckpointMeta, tensors: &[(String, &Tensor64)]) -> Result<Vec<u8>> {
    let meta_json = serde_json::to_vec(meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_json);
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| Error::Config(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Config(format!("tensor {name} has too many axes")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Truncated)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointMeta, Vec<(String, Tensor64)>)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated);
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let meta_len = r.len()?;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let mut tensors = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::ShapeMismatch("tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::Truncated)?;
        let raw = r.take(count.checked_mul(4).ok_or(Error::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push((name, Tensor64::new(shape, data)?));
    }
    Ok((meta, tensors))
}

pub fn save_checkpoint(path: impl AsRef<Path>, meta: &CheckpointMeta, tensors: &[(String, &Tensor64)]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(meta, tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointMeta, Vec<(String, Tensor64)>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

fn named<'a>(store: &'a ParamStore, prefix: &str) -> impl Iterator<Item = (String, &'a Tensor64)> + 'a {
    let prefix = prefix.to_string();
    store.names().iter().zip(store.tensors()).map(move |(n, t)| (format!("{prefix}{n}"), t))
}

pub fn save_classifier(model: &Recognizer, path: impl AsRef<Path>) -> Result<()> {
    let meta = CheckpointMeta::Classifier {
        model: model.classifier.config(),
        num_classes: model.classifier.num_classes(),
        dct_inputs: model.dct_inputs,
    };
    let tensors: Vec<_> = named(model.classifier.params(), "").collect();
    save_checkpoint(path, &meta, &tensors)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<Recognizer> {
    let (meta, tensors) = load_checkpoint(path)?;
    let CheckpointMeta::Classifier { model, num_classes, dct_inputs } = meta else {
        return Err(Error::ShapeMismatch("checkpoint holds a generator, not a classifier".into()));
    };
    let mut classifier = Classifier::new(&model, num_classes, 0)?;
    classifier.params_mut().load_named(tensors)?;
    Ok(Recognizer { classifier, dct_inputs })
}

const FORWARD_PREFIX: &str = "forward.";
const REVERSED_PREFIX: &str = "reversed.";

pub fn save_generator(pair: &GenerationPair, path: impl AsRef<Path>) -> Result<()> {
    let meta = CheckpointMeta::Generator { config: pair.config().clone() };
    let tensors: Vec<_> = named(pair.forward_model.params(), FORWARD_PREFIX)
        .chain(named(pair.reversed_model.params(), REVERSED_PREFIX))
        .collect();
    save_checkpoint(path, &meta, &tensors)
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<GenerationPair> {
    let (meta, tensors) = load_checkpoint(path)?;
    let CheckpointMeta::Generator { config } = meta else {
        return Err(Error::ShapeMismatch("checkpoint holds a classifier, not a generator".into()));
    };
    let mut pair = GenerationPair::new(config, 0)?;
    let (mut fwd, mut rev) = (Vec::new(), Vec::new());
    for (name, t) in tensors {
        if let Some(n) = name.strip_prefix(FORWARD_PREFIX) {
            fwd.push((n.to_string(), t));
        } else if let Some(n) = name.strip_prefix(REVERSED_PREFIX) {
            rev.push((n.to_string(), t));
        } else {
            return Err(Error::ShapeMismatch(format!("unexpected generator tensor {name}")));
        }
    }
    pair.forward_model.params_mut().load_named(fwd)?;
    pair.reversed_model.params_mut().load_named(rev)?;
    Ok(pair)
}
