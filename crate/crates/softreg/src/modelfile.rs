//! Versioned on-disk model format. Structured JSON text, chosen over a
//! binary format for inspectability; floats serialize via shortest
//! round-trip formatting, so save/load reproduces predictions bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FittedModel, FusedModel, HyperParams, Orientation, Variant};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub variant: Variant,
    pub t_depth: usize,
    /// Experts surviving in the first stored model.
    pub k_active: usize,
    pub hyperparams: HyperParams,
    /// One model, or an as-is/flipped pair for fusion (as-is first).
    pub models: Vec<FittedModel>,
    pub trace_path: Option<String>,
}

impl ModelFile {
    pub fn single(model: FittedModel, hp: HyperParams, trace_path: Option<String>) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            variant: model.meta.variant,
            t_depth: model.t_depth,
            k_active: model.experts.len(),
            hyperparams: hp,
            models: vec![model],
            trace_path,
        }
    }

    pub fn fused(
        asis: FittedModel,
        flipped: FittedModel,
        hp: HyperParams,
        trace_path: Option<String>,
    ) -> Result<Self> {
        // constructing the fused pair validates the orientation pairing
        FusedModel::new(asis.clone(), flipped.clone())?;
        Ok(ModelFile {
            version: MODEL_FILE_VERSION,
            variant: asis.meta.variant,
            t_depth: asis.t_depth,
            k_active: asis.experts.len(),
            hyperparams: hp,
            models: vec![asis, flipped],
            trace_path,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.models.len() {
            1 => self.models[0].validate(),
            2 => {
                self.models[0].validate()?;
                self.models[1].validate()?;
                FusedModel::new(self.models[0].clone(), self.models[1].clone())?;
                Ok(())
            }
            n => Err(Error::Data(format!("model file holds {n} models, want 1 or 2"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("serialize model: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let probe: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: not valid model JSON: {e}", path.display())))?;
        let found = probe
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Data(format!("{}: missing version field", path.display())))?;
        if found != MODEL_FILE_VERSION as u64 {
            return Err(Error::Version {
                expected: MODEL_FILE_VERSION,
                found,
            });
        }
        let mf: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        mf.validate()?;
        Ok(mf)
    }

    pub fn n_features(&self) -> usize {
        self.models[0].n_features
    }

    /// The model used for geometry diagnostics (the as-is fit of a pair).
    pub fn primary(&self) -> &FittedModel {
        &self.models[0]
    }

    pub fn predictor(&self) -> Result<Predictor> {
        match self.models.len() {
            1 => Ok(Predictor::Single(self.models[0].clone())),
            2 => Ok(Predictor::Fused(FusedModel::new(
                self.models[0].clone(),
                self.models[1].clone(),
            )?)),
            n => Err(Error::Data(format!("model file holds {n} models"))),
        }
    }
}

/// Prediction front end that always reports P(label = 1) in the data
/// file's original coding: a flipped single model contributes e^{-lambda},
/// the fused pair averages both votes.
pub enum Predictor {
    Single(FittedModel),
    Fused(FusedModel),
}

impl Predictor {
    pub fn prob_raw(&self, raw: &[f64]) -> Result<f64> {
        match self {
            Predictor::Single(m) => {
                let p = m.predict_prob(raw)?;
                Ok(match m.orientation {
                    Orientation::AsIs => p,
                    Orientation::Flipped => 1.0 - p,
                })
            }
            Predictor::Fused(f) => f.fused_prob(raw),
        }
    }
}
