//! Ethical transformations applied to a contextual view.

mod massage;
mod rank;
mod repair;
mod reweight;
mod rules;
mod split;
mod suppress;

pub use massage::{massage, MassageOutcome, NaiveBayesRanker, Ranker, ScoreRanker};
pub use rank::{diversity_order, diversity_select, equality_order, equality_rank, top_k};
pub use repair::{
    manager_ratio_factor, repair_manager_ratio, repair_oversample, replication_factor, ManagerFormula,
    RepairOutcome,
};
pub use reweight::{materialize_weights, reweight, ValueWeight, WEIGHT_COLUMN};
pub use rules::{default_rules, parse_rules, select_rule, select_transform, TransformRule};
pub use split::{apportion, priority_split, Allocation, Share};
pub use suppress::{suppress, SuppressOutcome};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::relation::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Suppression,
    RepairOversample,
    Reweighting,
    Massaging,
    EqualityRank,
    DiversitySelect,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] = [
        TransformKind::Suppression,
        TransformKind::RepairOversample,
        TransformKind::Reweighting,
        TransformKind::Massaging,
        TransformKind::EqualityRank,
        TransformKind::DiversitySelect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Suppression => "suppression",
            TransformKind::RepairOversample => "repair_oversample",
            TransformKind::Reweighting => "reweighting",
            TransformKind::Massaging => "massaging",
            TransformKind::EqualityRank => "equality_rank",
            TransformKind::DiversitySelect => "diversity_select",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Param(format!("unknown transformation `{s}`")))
    }
}

/// The transformed view handed to the downstream consumer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EthicalView {
    pub table: Table,
    pub weight_column: Option<String>,
    pub transform: TransformKind,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub provenance_id: Option<String>,
}

/// Parses a textual value into the type of `table`'s `column`.
pub fn value_for(table: &Table, column: &str, raw: &str) -> Result<Value> {
    let index = table.column_index(column)?;
    let column = table.schema.column(index);
    Value::parse(raw, column.ty).map_err(|e| Error::Param(format!("value for `{}`: {e}", column.name)))
}

pub(crate) fn require_numeric(table: &Table, column: &str) -> Result<usize> {
    let index = table.column_index(column)?;
    let col = table.schema.column(index);
    if !col.ty.is_numeric() {
        return Err(Error::TypeMismatch(format!(
            "score column `{}` is {}, expected a number",
            col.name, col.ty
        )));
    }
    Ok(index)
}
