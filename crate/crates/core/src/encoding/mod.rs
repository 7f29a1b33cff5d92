//! Sparse encoders: l1-minimisation over a dictionary, the autoencoder's
//! hidden layer, and Gaussian mixture posteriors.

mod l1;

pub use l1::{solve_l1, L1EncoderConfig, L1Solution};

use crate::error::{LsedError, Result};
use crate::util::log_sum_exp;
use crate::learning::{AtomDictionary, AutoencoderModel, MixtureModel, Model, ModelKind};

/// Entries with magnitude at or below this count as zero.
pub const SUPPORT_TOL: f64 = 1e-6;

/// Abnormal conditions reported alongside a code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeFlag {
    /// The l1 residual bound could not be met; the code is the
    /// minimum-residual point found.
    ConstraintUnmet,
    /// Every mixture responsibility underflowed; the code is uniform.
    Underflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub values: Vec<f64>,
    pub model_id: [u8; 8],
    pub flag: Option<CodeFlag>,
}

impl SparseCode {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices with `|value| > SUPPORT_TOL`.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.values)
    }
}

pub fn support_of(values: &[f64]) -> Vec<usize> {
    (0..values.len()).filter(|&i| values[i].abs() > SUPPORT_TOL).collect()
}

pub fn encode_l1(dict: &AtomDictionary, x: &[f64], cfg: &L1EncoderConfig) -> Result<SparseCode> {
    cfg.validate()?;
    let s = solve_l1(dict, x, cfg)?;
    Ok(SparseCode {
        flag: s.constraint_unmet.then_some(CodeFlag::ConstraintUnmet),
        values: s.coefficients,
        model_id: Model::Dictionary(dict.clone()).model_id(),
    })
}

pub fn encode_sann(model: &AutoencoderModel, x: &[f64]) -> Result<SparseCode> {
    let mut values = vec![0.0; model.hidden_units()];
    sann_into(model, x, &mut values)?;
    Ok(SparseCode {
        values,
        model_id: Model::Autoencoder(model.clone()).model_id(),
        flag: None,
    })
}

pub fn encode_gmm(model: &MixtureModel, x: &[f64]) -> Result<SparseCode> {
    let mut values = vec![0.0; model.num_components()];
    let flag = gmm_into(model, &model.log_norms(), x, &mut values)?;
    Ok(SparseCode {
        values,
        model_id: Model::Mixture(model.clone()).model_id(),
        flag,
    })
}

fn check_probe(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(LsedError::dims(dim, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LsedError::Numerical("non-finite probe".into()));
    }
    Ok(())
}

fn sann_into(model: &AutoencoderModel, x: &[f64], out: &mut [f64]) -> Result<()> {
    check_probe(model.dim(), x)?;
    model.hidden_into(x, out);
    Ok(())
}

fn gmm_into(
    model: &MixtureModel,
    log_norms: &[f64],
    x: &[f64],
    out: &mut [f64],
) -> Result<Option<CodeFlag>> {
    check_probe(model.dim(), x)?;
    model.joint_log_densities(x, log_norms, out);
    let lse = log_sum_exp(out);
    if !lse.is_finite() {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|v| *v = u);
        return Ok(Some(CodeFlag::Underflow));
    }
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - lse).exp();
        total += *v;
    }
    // renormalise away the rounding of exp/ln
    out.iter_mut().for_each(|v| *v /= total);
    Ok(None)
}

/// Common interface over the three encoders.
pub trait SparseEncoder: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Input feature dimension.
    fn dim(&self) -> usize;

    /// Code length `N`.
    fn code_len(&self) -> usize;

    fn model_id(&self) -> [u8; 8];

    /// Writes the code of `x` into `out` (length [`Self::code_len`]).
    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>>;

    fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        let mut values = vec![0.0; self.code_len()];
        let flag = self.encode_into(x, &mut values)?;
        Ok(SparseCode {
            values,
            model_id: self.model_id(),
            flag,
        })
    }
}

impl<T: SparseEncoder + ?Sized> SparseEncoder for &T {
    fn kind(&self) -> ModelKind {
        (**self).kind()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn code_len(&self) -> usize {
        (**self).code_len()
    }

    fn model_id(&self) -> [u8; 8] {
        (**self).model_id()
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>> {
        (**self).encode_into(x, out)
    }
}

#[derive(Debug, Clone)]
pub struct L1Encoder {
    dict: AtomDictionary,
    cfg: L1EncoderConfig,
    id: [u8; 8],
}

impl L1Encoder {
    pub fn new(dict: AtomDictionary, cfg: L1EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::Dictionary(dict);
        let id = model.model_id();
        let Model::Dictionary(dict) = model else { unreachable!() };
        Ok(L1Encoder { dict, cfg, id })
    }

    pub fn dictionary(&self) -> &AtomDictionary {
        &self.dict
    }

    pub fn config(&self) -> &L1EncoderConfig {
        &self.cfg
    }
}

impl SparseEncoder for L1Encoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Dictionary
    }

    fn dim(&self) -> usize {
        self.dict.dim()
    }

    fn code_len(&self) -> usize {
        self.dict.num_atoms()
    }

    fn model_id(&self) -> [u8; 8] {
        self.id
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>> {
        let s = solve_l1(&self.dict, x, &self.cfg)?;
        out.copy_from_slice(&s.coefficients);
        Ok(s.constraint_unmet.then_some(CodeFlag::ConstraintUnmet))
    }
}

#[derive(Debug, Clone)]
pub struct SannEncoder {
    model: AutoencoderModel,
    id: [u8; 8],
}

impl SannEncoder {
    pub fn new(model: AutoencoderModel) -> Self {
        let id = Model::Autoencoder(model.clone()).model_id();
        SannEncoder { model, id }
    }

    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }
}

impl SparseEncoder for SannEncoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Autoencoder
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn code_len(&self) -> usize {
        self.model.hidden_units()
    }

    fn model_id(&self) -> [u8; 8] {
        self.id
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>> {
        sann_into(&self.model, x, out)?;
        Ok(None)
    }
}

#[derive(Debug, Clone)]
pub struct GmmEncoder {
    model: MixtureModel,
    log_norms: Vec<f64>,
    id: [u8; 8],
}

impl GmmEncoder {
    pub fn new(model: MixtureModel) -> Self {
        let id = Model::Mixture(model.clone()).model_id();
        let log_norms = model.log_norms();
        GmmEncoder { model, log_norms, id }
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }
}

impl SparseEncoder for GmmEncoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Mixture
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn code_len(&self) -> usize {
        self.model.num_components()
    }

    fn model_id(&self) -> [u8; 8] {
        self.id
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>> {
        gmm_into(&self.model, &self.log_norms, x, out)
    }
}

/// Any of the three encoders, built from a persisted [`Model`].
#[derive(Debug, Clone)]
pub enum Encoder {
    L1(L1Encoder),
    Sann(SannEncoder),
    Gmm(GmmEncoder),
}

impl Encoder {
    pub fn from_model(model: Model, l1: L1EncoderConfig) -> Result<Self> {
        Ok(match model {
            Model::Dictionary(d) => Encoder::L1(L1Encoder::new(d, l1)?),
            Model::Autoencoder(m) => Encoder::Sann(SannEncoder::new(m)),
            Model::Mixture(m) => Encoder::Gmm(GmmEncoder::new(m)),
        })
    }

    fn inner(&self) -> &dyn SparseEncoder {
        match self {
            Encoder::L1(e) => e,
            Encoder::Sann(e) => e,
            Encoder::Gmm(e) => e,
        }
    }
}

impl SparseEncoder for Encoder {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn code_len(&self) -> usize {
        self.inner().code_len()
    }

    fn model_id(&self) -> [u8; 8] {
        self.inner().model_id()
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<Option<CodeFlag>> {
        self.inner().encode_into(x, out)
    }
}
