//! Regression primitives used by the stacked model.

pub mod baseline;
pub mod ensemble;
pub mod standardize;
pub mod svr;
pub mod tree;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use baseline::{fit_mean_baseline, MeanModel};
pub use ensemble::{
    fit_adaboost_r2, fit_adaboost_r2_traced, fit_forest, weighted_median, AdaBoostParams,
    AdaBoostR2, BaseLearner, BoostMember, ForestParams, RandomForest, RoundTrace, Sampling,
};
pub use standardize::Standardizer;
pub use svr::{fit_svr, solve_svr, Gamma, SvrModel, SvrParams, SvrSolution};
pub use tree::{fit_tree, fit_tree_unweighted, MaxFeatures, Node, RegressionTree, TreeParams};

/// Any fitted regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Regressor {
    Mean(MeanModel),
    Tree(RegressionTree),
    Forest(RandomForest),
    AdaboostR2(AdaBoostR2),
    Svr(SvrModel),
}

impl Regressor {
    /// Expected input dimension, if the model has one.
    pub fn n_features(&self) -> Option<usize> {
        match self {
            Regressor::Mean(_) => None,
            Regressor::Tree(t) => Some(t.n_features),
            Regressor::Forest(f) => f.trees.first().map(|t| t.n_features),
            Regressor::AdaboostR2(a) => a.members.first().map(|m| match m {
                BoostMember::Tree(t) => t.n_features,
                BoostMember::Forest(f) => f.trees.first().map_or(0, |t| t.n_features),
            }),
            Regressor::Svr(s) => Some(s.n_features),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.n_features() {
            if d != x.len() {
                return Err(Error::LengthMismatch {
                    left: x.len(),
                    right: d,
                });
            }
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Mean(m) => m.mean,
            Regressor::Tree(t) => t.predict(x),
            Regressor::Forest(f) => f.predict(x),
            Regressor::AdaboostR2(a) => a.predict(x),
            Regressor::Svr(s) => s.predict(x),
        }
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// False only for an SVR that hit its iteration budget.
    pub fn converged(&self) -> bool {
        match self {
            Regressor::Svr(s) => s.converged,
            _ => true,
        }
    }
}

/// Version of the JSON model document layout.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of a value's JSON serialization.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument<T> {
    pub format_version: u32,
    pub fingerprint: String,
    pub model: T,
}

impl<T: Serialize + DeserializeOwned> ModelDocument<T> {
    pub fn new(model: T, fingerprint: String) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            fingerprint,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: header.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }
}
