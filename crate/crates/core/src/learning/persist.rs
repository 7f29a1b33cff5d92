//! The "LSKM" container shared by all three encoder models:
//! magic, u8 kind tag, u32 d, u32 N, then little-endian f64 arrays in field
//! order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{AtomDictionary, AutoencoderModel, MixtureModel};
use crate::error::{LsedError, Result};
use crate::util::{hash8, push_f64s, ByteReader};

pub const LSKM_MAGIC: &[u8; 4] = b"LSKM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ModelKind {
    Dictionary = 1,
    Autoencoder = 2,
    Mixture = 3,
}

impl ModelKind {
    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Dictionary),
            2 => Ok(ModelKind::Autoencoder),
            3 => Ok(ModelKind::Mixture),
            t => Err(LsedError::format("LSKM", format!("unknown model kind {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dictionary => "dictionary",
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Mixture => "mixture",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dictionary(AtomDictionary),
    Autoencoder(AutoencoderModel),
    Mixture(MixtureModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Dictionary(_) => ModelKind::Dictionary,
            Model::Autoencoder(_) => ModelKind::Autoencoder,
            Model::Mixture(_) => ModelKind::Mixture,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Dictionary(m) => m.dim(),
            Model::Autoencoder(m) => m.dim(),
            Model::Mixture(m) => m.dim(),
        }
    }

    /// Code length produced by the model.
    pub fn code_len(&self) -> usize {
        match self {
            Model::Dictionary(m) => m.num_atoms(),
            Model::Autoencoder(m) => m.hidden_units(),
            Model::Mixture(m) => m.num_components(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(LSKM_MAGIC);
        out.push(self.kind() as u8);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.code_len() as u32).to_le_bytes());
        match self {
            Model::Dictionary(m) => push_f64s(&mut out, m.atoms().as_slice()),
            Model::Autoencoder(m) => {
                push_f64s(&mut out, m.weights());
                push_f64s(&mut out, m.bias());
                push_f64s(&mut out, m.decode_weights());
                push_f64s(&mut out, m.decode_bias());
            }
            Model::Mixture(m) => {
                push_f64s(&mut out, m.weights());
                push_f64s(&mut out, m.means());
                push_f64s(&mut out, m.variances());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "LSKM");
        if r.take(4)? != LSKM_MAGIC {
            return Err(LsedError::format("LSKM", "bad magic"));
        }
        let kind = ModelKind::from_tag(r.u8()?)?;
        let d = r.u32()? as usize;
        let n = r.u32()? as usize;
        let model = match kind {
            ModelKind::Dictionary => {
                let atoms = r.f64s(d * n)?;
                Model::Dictionary(AtomDictionary::new(DMatrix::from_vec(d, n, atoms))?)
            }
            ModelKind::Autoencoder => {
                let w = r.f64s(d * n)?;
                let b = r.f64s(n)?;
                let v = r.f64s(d * n)?;
                let c = r.f64s(d)?;
                Model::Autoencoder(AutoencoderModel::new(d, n, w, b, v, c)?)
            }
            ModelKind::Mixture => {
                let w = r.f64s(n)?;
                let mu = r.f64s(n * d)?;
                let var = r.f64s(n * d)?;
                Model::Mixture(MixtureModel::new(d, w, mu, var)?)
            }
        };
        r.finish()?;
        Ok(model)
    }

    /// Identifier derived from the serialised bytes.
    pub fn model_id(&self) -> [u8; 8] {
        hash8(&[&self.to_bytes()])
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl From<AtomDictionary> for Model {
    fn from(m: AtomDictionary) -> Self {
        Model::Dictionary(m)
    }
}

impl From<AutoencoderModel> for Model {
    fn from(m: AutoencoderModel) -> Self {
        Model::Autoencoder(m)
    }
}

impl From<MixtureModel> for Model {
    fn from(m: MixtureModel) -> Self {
        Model::Mixture(m)
    }
}
