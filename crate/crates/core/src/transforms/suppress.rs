use crate::analysis::{association_scores, AssociationScore};
use crate::error::{Error, Result};
use crate::relation::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressOutcome {
    pub table: Table,
    /// Protected column first, then associated columns by decreasing strength.
    pub removed: Vec<String>,
    /// Association of every other column with the protected one.
    pub scores: Vec<AssociationScore>,
}

/// Drops the protected column and every column whose association with it
/// reaches `threshold`. Rows are untouched.
pub fn suppress(table: &Table, protected: &str, threshold: f64) -> Result<SuppressOutcome> {
    let p = table.column_index(protected)?;
    let protected_name = table.schema.column(p).name.clone();
    let scores = association_scores(table, &protected_name)?;
    let mut hits: Vec<&AssociationScore> = scores.iter().filter(|s| s.value >= threshold).collect();
    hits.sort_by(|a, b| b.value.total_cmp(&a.value));

    let mut removed = vec![protected_name];
    removed.extend(hits.iter().map(|s| s.column_b.clone()));
    let keep: Vec<usize> = table
        .schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| !removed.contains(&c.name))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Transform(format!(
            "suppressing {} would leave no columns",
            removed.join(", ")
        )));
    }
    Ok(SuppressOutcome {
        table: table.select_columns(&keep)?,
        removed,
        scores,
    })
}
