use std::fs;
use std::path::Path;

use crate::error::{LsedError, Result};
use crate::learning::ModelKind;
use crate::util::{push_f64s, ByteReader};

pub const LSKD_MAGIC: &[u8; 4] = b"LSKD";

/// `R` concatenated region vectors of length `N`, tagged with the producing
/// encoder kind and a hash binding it to model and patch geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDescriptor {
    regions: usize,
    code_len: usize,
    values: Vec<f64>,
    kind: ModelKind,
    config_hash: [u8; 8],
}

impl FaceDescriptor {
    pub fn new(
        regions: usize,
        code_len: usize,
        values: Vec<f64>,
        kind: ModelKind,
        config_hash: [u8; 8],
    ) -> Result<Self> {
        if regions == 0 || code_len == 0 {
            return Err(LsedError::Empty("descriptor"));
        }
        if values.len() != regions * code_len {
            return Err(LsedError::dims(regions * code_len, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LsedError::Numerical("non-finite descriptor entry".into()));
        }
        Ok(FaceDescriptor {
            regions,
            code_len,
            values,
            kind,
            config_hash,
        })
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    /// Total length `R * N`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region(&self, r: usize) -> &[f64] {
        &self.values[r * self.code_len..(r + 1) * self.code_len]
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config_hash(&self) -> [u8; 8] {
        self.config_hash
    }

    /// Multiplies every entry by `c`, keeping the metadata.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.regions,
            self.code_len,
            self.values.iter().map(|v| v * c).collect(),
            self.kind,
            self.config_hash,
        )
    }

    pub fn check_compatible(&self, other: &FaceDescriptor) -> Result<()> {
        if self.regions != other.regions || self.code_len != other.code_len {
            return Err(LsedError::Incompatible(format!(
                "descriptor shapes {}x{} and {}x{}",
                self.regions, self.code_len, other.regions, other.code_len
            )));
        }
        if self.kind != other.kind || self.config_hash != other.config_hash {
            return Err(LsedError::Incompatible(
                "descriptors come from different models or patch grids".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 8 * self.values.len());
        out.extend_from_slice(LSKD_MAGIC);
        out.extend_from_slice(&(self.regions as u32).to_le_bytes());
        out.extend_from_slice(&(self.code_len as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.config_hash);
        push_f64s(&mut out, &self.values);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "LSKD");
        if r.take(4)? != LSKD_MAGIC {
            return Err(LsedError::format("LSKD", "bad magic"));
        }
        let regions = r.u32()? as usize;
        let code_len = r.u32()? as usize;
        let kind = ModelKind::from_tag(r.u8()?)?;
        let hash: [u8; 8] = r.take(8)?.try_into().unwrap();
        let values = r.f64s(regions * code_len)?;
        r.finish()?;
        Self::new(regions, code_len, values, kind, hash)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
