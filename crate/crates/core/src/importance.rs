//! Impurity-based importance of the meta layer's inputs, one per category.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Regressor;
use crate::phone::CategoryKey;
use crate::stacking::StackedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub category: CategoryKey,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    /// In inventory order.
    pub values: Vec<Importance>,
    /// False when the meta model made no splits; all values are then 0.
    pub normalized: bool,
}

/// Per-category importance of a tree-based meta model: each member's
/// impurity importance weighted by its ensemble weight, normalized to sum 1.
pub fn meta_importance(model: &StackedModel) -> Result<ImportanceReport> {
    let k = model.inventory.len();
    let raw = match &model.meta {
        Regressor::AdaboostR2(a) => {
            let mut acc = vec![0.0; k];
            for (m, &w) in a.members.iter().zip(&a.member_weights) {
                for (s, v) in acc.iter_mut().zip(m.impurity_importance()) {
                    *s += w * v;
                }
            }
            acc
        }
        Regressor::Forest(f) => f.impurity_importance(),
        Regressor::Tree(t) => t.impurity_importance(),
        Regressor::Svr(_) | Regressor::Mean(_) => {
            return Err(Error::Unsupported(
                "importance requires a tree-based meta model".into(),
            ))
        }
    };
    if raw.len() != k {
        return Err(Error::LayoutMismatch(format!(
            "meta model has {} inputs, inventory has {k}",
            raw.len()
        )));
    }
    let total: f64 = raw.iter().sum();
    let normalized = total > 0.0;
    let values = model
        .inventory
        .keys
        .iter()
        .zip(raw)
        .map(|(c, v)| Importance {
            category: c.clone(),
            value: if normalized { v / total } else { 0.0 },
        })
        .collect();
    Ok(ImportanceReport { values, normalized })
}

impl ImportanceReport {
    /// The `k` largest, ties broken by category name.
    pub fn top_k(&self, k: usize) -> Vec<Importance> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.category.cmp(&b.category)));
        v.truncate(k);
        v
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "category,importance")?;
        for i in self.top_k(self.values.len()) {
            writeln!(w, "{},{:.16e}", i.category, i.value)?;
        }
        Ok(())
    }
}
