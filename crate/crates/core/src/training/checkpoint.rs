//! Binary checkpoints: `u64` LE header length, a JSON header, raw LE `f64`
//! blobs in manifest order, then a SHA-256 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::RngState;
use crate::tensor::{ParamStore, Tensor};
use crate::training::adam::{AdamConfig, AdamState};

pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
    pub rng: RngState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub vocab: Option<Vocabulary>,
    /// Free-form run metadata (seed, effective settings).
    pub meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
    frozen: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabHeader {
    tokens: Vec<String>,
    digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    epoch: usize,
    rng: RngState,
    adam: Option<AdamHeader>,
    vocab: Option<VocabHeader>,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut body: Vec<u8> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, data: &[f64]| {
            entries.push(TensorEntry { name, shape, dtype: "f64".into(), offset: body.len() });
            for v in data {
                body.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (_, name, t) in self.params.iter() {
            push(name.to_string(), t.shape().to_vec(), t.data());
        }
        if let Some(adam) = &self.adam {
            adam.validate(&self.params)?;
            for (i, (_, name, t)) in self.params.iter().enumerate() {
                push(format!("{M_PREFIX}{name}"), t.shape().to_vec(), &adam.m[i]);
                push(format!("{V_PREFIX}{name}"), t.shape().to_vec(), &adam.v[i]);
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            epoch: self.epoch,
            rng: self.rng.clone(),
            adam: self.adam.as_ref().map(|a| AdamHeader { config: a.config, step: a.step, frozen: a.frozen.clone() }),
            vocab: self.vocab.as_ref().map(|v| VocabHeader { tokens: v.tokens().to_vec(), digest: v.digest() }),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + body.len() + DIGEST_LEN);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&body);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + DIGEST_LEN {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let (content, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(content).as_slice() != digest {
            return Err(Error::Checkpoint("content digest mismatch (corrupted or truncated file)".into()));
        }
        let header_len = u64::from_le_bytes(content[..8].try_into().expect("8 bytes")) as usize;
        let body_start = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= content.len())
            .ok_or_else(|| Error::Checkpoint("header length exceeds file size".into()))?;
        let header: Header = serde_json::from_slice(&content[8..body_start])
            .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.version
            )));
        }
        let body = &content[body_start..];
        let read = |e: &TensorEntry| -> Result<Tensor> {
            if e.dtype != "f64" {
                return Err(Error::Checkpoint(format!("tensor `{}` has unsupported dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let end = e.offset + n * 8;
            let raw = body
                .get(e.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` lies outside the body", e.name)))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Tensor::new(e.shape.clone(), data)
        };
        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for e in &header.tensors {
            if e.name.starts_with(M_PREFIX) {
                m.push(read(e)?.data().to_vec());
            } else if e.name.starts_with(V_PREFIX) {
                v.push(read(e)?.data().to_vec());
            } else {
                params.insert(e.name.clone(), read(e)?)?;
            }
        }
        let adam = match header.adam {
            Some(h) => {
                let state = AdamState {
                    config: h.config,
                    step: h.step,
                    frozen: h.frozen,
                    names: params.iter().map(|(_, n, _)| n.to_string()).collect(),
                    m,
                    v,
                };
                state.validate(&params).map_err(|e| Error::Checkpoint(e.to_string()))?;
                Some(state)
            }
            None => None,
        };
        let vocab = match header.vocab {
            Some(h) => {
                let vocab = Vocabulary::from_tokens(h.tokens)?;
                if vocab.digest() != h.digest {
                    return Err(Error::Checkpoint("vocabulary digest mismatch".into()));
                }
                Some(vocab)
            }
            None => None,
        };
        Ok(Self { config: header.config, params, adam, rng: header.rng, epoch: header.epoch, vocab, meta: header.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized training state (everything but `meta`),
    /// hex encoded.
    pub fn state_digest(&self) -> Result<String> {
        let bare = Checkpoint { meta: serde_json::Value::Null, ..self.clone() };
        Ok(hex::encode(Sha256::digest(bare.to_bytes()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CatVrnn, InitMode};
    use crate::rng::Rng;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig { init_mode: InitMode::Adaptive, ..ModelConfig::tiny(6, 2) };
        let model = CatVrnn::new(cfg.clone(), 3).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), model.params());
        adam.step = 4;
        adam.m[0][1] = 0.25;
        adam.v[2][0] = 1e-300;
        let vocab = Vocabulary::from_tokens(["<pad>", "<unk>", "a", "b", "c", "d"].map(String::from).to_vec()).unwrap();
        Checkpoint {
            config: cfg,
            params: model.params().clone(),
            adam: Some(adam),
            rng: Rng::new(9).state(),
            epoch: 7,
            vocab: Some(vocab),
            meta: serde_json::json!({"seed": 9}),
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), c.to_bytes().unwrap());
    }

    #[test]
    fn corrupted_byte_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for pos in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(Checkpoint::from_bytes(&bad).is_err(), "byte {pos}");
        }
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        let content = &bytes[..bytes.len() - DIGEST_LEN];
        let len = u64::from_le_bytes(content[..8].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&content[8..8 + len]).unwrap();
        header["version"] = serde_json::json!(99);
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = (json.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(&json);
        out.extend_from_slice(&content[8 + len..]);
        let d = Sha256::digest(&out);
        out.extend_from_slice(&d);
        let err = Checkpoint::from_bytes(&out).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
