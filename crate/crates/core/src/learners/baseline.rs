use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicts the mean training target everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub mean: f64,
}

pub fn fit_mean_baseline(y: &[f64]) -> Result<MeanModel> {
    if y.is_empty() {
        return Err(Error::EmptyInput("targets"));
    }
    Ok(MeanModel {
        mean: y.iter().sum::<f64>() / y.len() as f64,
    })
}
