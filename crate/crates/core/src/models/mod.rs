//! Regression models: a one-hidden-layer perceptron (Adam or L-BFGS) and
//! epsilon-SVR, plus the self-contained JSON model file.

pub mod fastmath;
pub mod kernel;
pub mod lbfgs;
pub mod mlp;
pub mod params;
pub mod svr;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kernel::Kernel;
pub use mlp::{mlp_fit, MlpModel, StopCriteria};
pub use params::{Activation, HyperParams, KernelKind, LearningRate, MlpParams, ModelKind, Solver, SvrParams};
pub use svr::{svr_fit, SvrModel};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FittedModel {
    Mlp(MlpModel),
    Svr(SvrModel),
}

impl FittedModel {
    /// Prediction for an already standardized feature vector.
    pub fn predict_standardized(&self, x: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Mlp(m) => m.predict(x),
            FittedModel::Svr(m) => m.predict(x),
        }
    }

    /// Fits on standardized features.
    pub fn fit(x: &Matrix, y: &[f64], params: &HyperParams, seed: u64) -> Result<Self> {
        Ok(match params {
            HyperParams::Mlp(p) => FittedModel::Mlp(mlp_fit(x, y, p, seed, None)?),
            HyperParams::Svr(p) => FittedModel::Svr(svr_fit(x, y, p)?),
        })
    }
}

/// A fitted model bundled with the feature scaling it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub params: HyperParams,
    pub standardizer: Standardizer,
    pub fitted: FittedModel,
}

impl TrainedModel {
    /// Standardizes raw features on `x` itself, then fits.
    pub fn train(x: &Matrix, y: &[f64], params: &HyperParams, seed: u64) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let xs = standardizer.apply(x)?;
        let fitted = FittedModel::fit(&xs, y, params, seed)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind: params.kind(),
            params: *params,
            standardizer,
            fitted,
        })
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.n_features() {
            return Err(Error::Dimension { expected: self.n_features(), got: raw.len() });
        }
        let mut z = vec![0.0; raw.len()];
        self.standardizer.transform_row(raw, &mut z);
        self.fitted.predict_standardized(&z)
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Schema(format!("unsupported schema_version {v}"))),
            None => return Err(Error::Schema("missing schema_version".into())),
        }
        let model: TrainedModel =
            serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        let consistent = matches!(
            (&model.kind, &model.params, &model.fitted),
            (ModelKind::Mlp, HyperParams::Mlp(_), FittedModel::Mlp(_))
                | (ModelKind::Svr, HyperParams::Svr(_), FittedModel::Svr(_))
        );
        if !consistent {
            return Err(Error::Schema("model kind, params and fitted model disagree".into()));
        }
        Ok(model)
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_json(&text)
}
