//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `DECK`, format version `u32`, model kind `u8`,
//! JSON model description (`u32` length + bytes), Adam step `u64`, shape table
//! (`u32` count, then per tensor a `u16` name length, name, `u8` rank and `u32`
//! extents), then the `f64` payload: every value tensor, then every first
//! moment, then every second moment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{DecoderStack, EncoderStack};
use crate::classifiers::{Classifier, ConvLstmClassifier, ConvLstmConfig, FeatureKind, MlpClassifier, MlpConfig};
use crate::error::{Error, Result};
use crate::nn::{Parameter, ParameterSet, Tensor};
use crate::pki::PkiNetwork;
use crate::scalar::Scalar;
use crate::signal::hex;

pub const MAGIC: &[u8; 4] = b"DECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum ModelKind {
    Mlp = 1,
    ConvLstm = 2,
    Encoder = 3,
    Decoder = 4,
    Pki = 5,
}

impl ModelKind {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::Mlp,
            2 => Self::ConvLstm,
            3 => Self::Encoder,
            4 => Self::Decoder,
            5 => Self::Pki,
            _ => return Err(Error::Decode(format!("unknown model kind {b}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model<S> {
    Mlp(MlpClassifier<S>),
    ConvLstm(ConvLstmClassifier<S>),
    Encoder(EncoderStack<S>),
    Decoder(DecoderStack<S>),
    Pki(PkiNetwork<S>),
}

#[derive(Serialize, Deserialize)]
struct ClassifierHeader<C> {
    config: C,
    trained: bool,
}

#[derive(Serialize, Deserialize)]
struct StackHeader {
    widths: Vec<usize>,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
struct PkiHeader {
    features: FeatureKind,
    base_hash: String,
    config: MlpConfig,
    trained: bool,
}

impl<S: Scalar> Model<S> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mlp(_) => ModelKind::Mlp,
            Model::ConvLstm(_) => ModelKind::ConvLstm,
            Model::Encoder(_) => ModelKind::Encoder,
            Model::Decoder(_) => ModelKind::Decoder,
            Model::Pki(_) => ModelKind::Pki,
        }
    }

    pub fn params(&self) -> &ParameterSet<S> {
        match self {
            Model::Mlp(m) => m.params(),
            Model::ConvLstm(m) => m.params(),
            Model::Encoder(m) => m.params(),
            Model::Decoder(m) => m.params(),
            Model::Pki(m) => m.params(),
        }
    }

    fn header(&self) -> Result<Vec<u8>> {
        let json = match self {
            Model::Mlp(m) => serde_json::to_vec(&ClassifierHeader {
                config: m.config(),
                trained: m.is_trained(),
            }),
            Model::ConvLstm(m) => serde_json::to_vec(&ClassifierHeader {
                config: m.config(),
                trained: m.is_trained(),
            }),
            Model::Encoder(m) => serde_json::to_vec(&StackHeader {
                widths: m.widths(),
                steps: m.steps(),
            }),
            Model::Decoder(m) => serde_json::to_vec(&StackHeader {
                widths: m.widths(),
                steps: m.steps(),
            }),
            Model::Pki(m) => serde_json::to_vec(&PkiHeader {
                features: m.feature_kind(),
                base_hash: m.base_hash().to_string(),
                config: m.mlp().config().clone(),
                trained: m.is_trained(),
            }),
        };
        json.map_err(|e| Error::Decode(format!("cannot describe model: {e}")))
    }
}

pub fn encode_checkpoint<S: Scalar>(model: &Model<S>) -> Result<Vec<u8>> {
    let params = model.params();
    let header = model.header()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.kind() as u8);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&params.step().to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.value.rank() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    let sections: [fn(&Parameter<S>) -> &Tensor<S>; 3] = [|p| &p.value, |p| &p.m, |p| &p.v];
    for section in sections {
        for p in params.iter() {
            for v in section(p).values() {
                out.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
            }
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Decode(format!("truncated checkpoint: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Decode("shape overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Decode(format!("bad model description: {e}")))
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<Model<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let kind = ModelKind::from_byte(r.u8()?)?;
    let header_len = r.u32()? as usize;
    let header = r.take(header_len)?;
    let step = r.u64()?;

    let count = r.u32()? as usize;
    let mut table = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Decode("parameter name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Decode(format!("corrupt shape {shape:?} for `{name}`")));
        }
        table.push((name, shape));
    }
    let mut sections = Vec::with_capacity(3);
    for _ in 0..3 {
        let tensors = table
            .iter()
            .map(|(_, shape)| {
                let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                let n = n.ok_or_else(|| Error::Decode("shape overflow".into()))?;
                let values = r.f64s(n)?.into_iter().map(S::lit).collect();
                Tensor::new(shape.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        sections.push(tensors);
    }
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let v = sections.pop().unwrap();
    let m = sections.pop().unwrap();
    let values = sections.pop().unwrap();

    let mut params = ParameterSet::new();
    for ((name, _), value) in table.iter().zip(values) {
        if params.id(name).is_some() {
            return Err(Error::Decode(format!("duplicate parameter `{name}`")));
        }
        params.add(name.clone(), value);
    }
    for ((p, m), v) in params.iter_mut().zip(m).zip(v) {
        p.m = m;
        p.v = v;
    }
    params.set_step(step);

    Ok(match kind {
        ModelKind::Mlp => {
            let h: ClassifierHeader<MlpConfig> = json(header)?;
            Model::Mlp(MlpClassifier::from_parts(h.config, params, h.trained)?)
        }
        ModelKind::ConvLstm => {
            let h: ClassifierHeader<ConvLstmConfig> = json(header)?;
            Model::ConvLstm(ConvLstmClassifier::from_parts(h.config, params, h.trained)?)
        }
        ModelKind::Encoder => {
            let h: StackHeader = json(header)?;
            Model::Encoder(EncoderStack::from_parts(&h.widths, h.steps, params)?)
        }
        ModelKind::Decoder => {
            let h: StackHeader = json(header)?;
            Model::Decoder(DecoderStack::from_parts(&h.widths, h.steps, params)?)
        }
        ModelKind::Pki => {
            let h: PkiHeader = json(header)?;
            let mlp = MlpClassifier::from_parts(h.config, params, h.trained)?;
            Model::Pki(PkiNetwork::from_parts(h.features, h.base_hash, mlp)?)
        }
    })
}

/// Hex SHA-256 of encoded checkpoint bytes; PKI networks record their base's.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Writes the checkpoint and returns its hash.
pub fn save_checkpoint<S: Scalar>(model: &Model<S>, path: &Path) -> Result<String> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(checkpoint_hash(&bytes))
}

/// Loads a checkpoint and returns it with its hash.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(Model<S>, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((decode_checkpoint(&bytes)?, checkpoint_hash(&bytes)))
}

/// Ensures a PKI network is used with the base classifier it was trained on.
pub fn check_pairing<S: Scalar>(pki: &PkiNetwork<S>, base_hash: &str) -> Result<()> {
    if pki.base_hash() != base_hash {
        return Err(Error::Pairing {
            expected: pki.base_hash().to_string(),
            found: base_hash.to_string(),
        });
    }
    Ok(())
}

/// Loads a PKI checkpoint for use with the base checkpoint at `base_path`.
pub fn load_pki_for<S: Scalar>(pki_path: &Path, base_path: &Path) -> Result<(PkiNetwork<S>, Model<S>)> {
    let (pki, _) = load_checkpoint::<S>(pki_path)?;
    let Model::Pki(pki) = pki else {
        return Err(Error::invalid(format!("{} is not a PKI checkpoint", pki_path.display())));
    };
    let (base, hash) = load_checkpoint::<S>(base_path)?;
    check_pairing(&pki, &hash)?;
    Ok((pki, base))
}
