//! Group-imbalance detection and protected-attribute association.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::relation::{ColumnType, Table, Value};

pub const DEFAULT_DISPARITY_THRESHOLD: f64 = 0.8;
pub const DEFAULT_ASSOC_THRESHOLD: f64 = 0.5;

/// Numeric columns with at most this many distinct values are treated
/// as categorical.
pub const CATEGORICAL_MAX_DISTINCT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupCount {
    pub value: Value,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupProfile {
    pub attribute: String,
    /// Groups in order of first appearance.
    pub groups: Vec<GroupCount>,
}

impl GroupProfile {
    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn count_of(&self, value: &Value) -> usize {
        self.groups
            .iter()
            .find(|g| &g.value == value)
            .map_or(0, |g| g.count)
    }
}

pub fn group_cardinalities(table: &Table, attribute: &str) -> Result<GroupProfile> {
    let index = table.column_index(attribute)?;
    let mut groups: Vec<GroupCount> = Vec::new();
    let mut slots: HashMap<&Value, usize> = HashMap::new();
    for value in table.column_values(index) {
        match slots.get(value) {
            Some(&slot) => groups[slot].count += 1,
            None => {
                slots.insert(value, groups.len());
                groups.push(GroupCount {
                    value: value.clone(),
                    count: 1,
                });
            }
        }
    }
    Ok(GroupProfile {
        attribute: table.schema.column(index).name.clone(),
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityReport {
    pub attribute: String,
    pub min_group: Option<GroupCount>,
    pub max_group: Option<GroupCount>,
    /// Smallest over largest cardinality; 1 when there is nothing to compare.
    pub ratio: f64,
    pub flagged: bool,
    pub threshold: f64,
}

/// Four-fifths style check: flags when at least two groups exist and the
/// smallest is below `threshold` times the largest.
pub fn disparity(profile: &GroupProfile, threshold: f64) -> DisparityReport {
    // First occurrence wins ties on both ends.
    let min = profile
        .groups
        .iter()
        .fold(None::<&GroupCount>, |acc, g| match acc {
            Some(a) if a.count <= g.count => Some(a),
            _ => Some(g),
        });
    let max = profile
        .groups
        .iter()
        .fold(None::<&GroupCount>, |acc, g| match acc {
            Some(a) if a.count >= g.count => Some(a),
            _ => Some(g),
        });
    let ratio = match (min, max) {
        (Some(lo), Some(hi)) if hi.count > 0 => lo.count as f64 / hi.count as f64,
        _ => 1.0,
    };
    DisparityReport {
        attribute: profile.attribute.clone(),
        min_group: min.cloned(),
        max_group: max.cloned(),
        ratio,
        flagged: profile.groups.len() >= 2 && ratio < threshold,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMetric {
    CramersV,
    CorrelationRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationScore {
    pub column_a: String,
    pub column_b: String,
    pub metric: AssociationMetric,
    pub value: f64,
}

/// Whether a column behaves categorically for association purposes.
pub fn is_categorical(table: &Table, index: usize) -> bool {
    match table.schema.column(index).ty {
        ColumnType::Text | ColumnType::Boolean | ColumnType::Date => true,
        ColumnType::Integer | ColumnType::Decimal => {
            let mut distinct: Vec<&Value> = Vec::new();
            for v in table.column_values(index).filter(|v| !v.is_null()) {
                if !distinct.iter().any(|d| d.sql_eq(v)) {
                    distinct.push(v);
                    if distinct.len() > CATEGORICAL_MAX_DISTINCT {
                        return false;
                    }
                }
            }
            true
        }
    }
}

/// Bias-uncorrected Cramér's V of two categorical columns (null is a
/// category). Zero when either side has a single category.
pub fn cramers_v(a: &[Value], b: &[Value]) -> f64 {
    assert_eq!(a.len(), b.len(), "columns must have equal length");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let (a_idx, rows) = categorize(a);
    let (b_idx, cols) = categorize(b);
    if rows < 2 || cols < 2 {
        return 0.0;
    }
    let mut observed = vec![vec![0usize; cols]; rows];
    let mut row_tot = vec![0usize; rows];
    let mut col_tot = vec![0usize; cols];
    for (&i, &j) in a_idx.iter().zip(&b_idx) {
        observed[i][j] += 1;
        row_tot[i] += 1;
        col_tot[j] += 1;
    }
    let n_f = n as f64;
    let mut chi2 = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let expected = row_tot[i] as f64 * col_tot[j] as f64 / n_f;
            let diff = observed[i][j] as f64 - expected;
            chi2 += diff * diff / expected;
        }
    }
    let k = (rows.min(cols) - 1) as f64;
    (chi2 / (n_f * k)).sqrt().clamp(0.0, 1.0)
}

/// Correlation ratio η of a numeric column against a categorical one.
/// Rows with a null measurement are skipped.
pub fn correlation_ratio(categories: &[Value], measurements: &[Option<f64>]) -> f64 {
    assert_eq!(
        categories.len(),
        measurements.len(),
        "columns must have equal length"
    );
    let pairs: Vec<(&Value, f64)> = categories
        .iter()
        .zip(measurements)
        .filter_map(|(c, m)| m.map(|m| (c, m)))
        .collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let mean = pairs.iter().map(|(_, m)| m).sum::<f64>() / pairs.len() as f64;
    let mut groups: HashMap<&Value, (f64, usize)> = HashMap::new();
    for (c, m) in &pairs {
        let g = groups.entry(c).or_default();
        g.0 += m;
        g.1 += 1;
    }
    let ss_total: f64 = pairs.iter().map(|(_, m)| (m - mean).powi(2)).sum();
    if ss_total == 0.0 {
        return 0.0;
    }
    let ss_between: f64 = groups
        .values()
        .map(|(sum, n)| *n as f64 * (sum / *n as f64 - mean).powi(2))
        .sum();
    (ss_between / ss_total).sqrt().clamp(0.0, 1.0)
}

fn categorize(values: &[Value]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&Value, usize> = HashMap::new();
    let idx = values
        .iter()
        .map(|v| {
            let next = ids.len();
            *ids.entry(v).or_insert(next)
        })
        .collect();
    (idx, ids.len())
}

/// Association of every other column with `protected`, in column order.
pub fn association_scores(table: &Table, protected: &str) -> Result<Vec<AssociationScore>> {
    let p = table.column_index(protected)?;
    let protected_name = table.schema.column(p).name.clone();
    if table.len() < 2 {
        return Err(Error::Analysis(format!(
            "association with `{protected_name}` needs at least 2 rows, found {}",
            table.len()
        )));
    }
    if !is_categorical(table, p) {
        return Err(Error::Analysis(format!(
            "protected column `{protected_name}` is not categorical"
        )));
    }
    let protected_values: Vec<Value> = table.column_values(p).cloned().collect();
    let mut scores = Vec::new();
    for (i, column) in table.schema.columns().iter().enumerate() {
        if i == p {
            continue;
        }
        let (metric, value) = if is_categorical(table, i) {
            let other: Vec<Value> = table.column_values(i).cloned().collect();
            (AssociationMetric::CramersV, cramers_v(&protected_values, &other))
        } else {
            let measurements: Vec<Option<f64>> = table.column_values(i).map(Value::as_f64).collect();
            (
                AssociationMetric::CorrelationRatio,
                correlation_ratio(&protected_values, &measurements),
            )
        };
        scores.push(AssociationScore {
            column_a: protected_name.clone(),
            column_b: column.name.clone(),
            metric,
            value,
        });
    }
    Ok(scores)
}

/// Columns whose association with `protected` reaches `threshold`,
/// strongest first.
pub fn correlated_columns(table: &Table, protected: &str, threshold: f64) -> Result<Vec<AssociationScore>> {
    let mut hits: Vec<AssociationScore> = association_scores(table, protected)?
        .into_iter()
        .filter(|s| s.value >= threshold)
        .collect();
    hits.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(hits)
}
