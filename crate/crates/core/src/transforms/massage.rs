//! Label massaging: promote the best-ranked negatives of the disadvantaged
//! group and demote the worst-ranked positives of the advantaged group.

use std::collections::HashMap;

use super::require_numeric;
use crate::analysis::is_categorical;
use crate::error::{Error, Result};
use crate::relation::{ColumnType, Table, Value};

/// Orders rows by their likelihood of deserving a positive label.
pub trait Ranker {
    fn name(&self) -> &str;

    /// One score per row of `table`; higher is more deserving.
    fn scores(&self, table: &Table, class: usize, protected: usize) -> Result<Vec<f64>>;
}

/// Ranks by a numeric column; null scores rank lowest.
#[derive(Debug, Clone)]
pub struct ScoreRanker {
    pub column: String,
}

impl ScoreRanker {
    pub fn new(column: &str) -> Self {
        ScoreRanker {
            column: column.to_string(),
        }
    }
}

impl Ranker for ScoreRanker {
    fn name(&self) -> &str {
        "score"
    }

    fn scores(&self, table: &Table, _class: usize, _protected: usize) -> Result<Vec<f64>> {
        let s = require_numeric(table, &self.column)?;
        Ok(table
            .column_values(s)
            .map(|v| v.as_f64().unwrap_or(f64::NEG_INFINITY))
            .collect())
    }
}

/// Per feature value: (positives, negatives).
type LabelCounts<'a> = HashMap<&'a Value, (f64, f64)>;

/// Log-odds of a positive label under a naive Bayes model fitted on the
/// categorical columns other than the class and the protected attribute,
/// with add-one smoothing.
#[derive(Debug, Clone, Default)]
pub struct NaiveBayesRanker;

impl Ranker for NaiveBayesRanker {
    fn name(&self) -> &str {
        "naive_bayes"
    }

    fn scores(&self, table: &Table, class: usize, protected: usize) -> Result<Vec<f64>> {
        let features: Vec<usize> = (0..table.schema.len())
            .filter(|&i| i != class && i != protected && is_categorical(table, i))
            .collect();
        let labels: Vec<Option<bool>> = table
            .column_values(class)
            .map(|v| match v {
                Value::Boolean(b) => Some(*b),
                _ => None,
            })
            .collect();
        let n_pos = labels.iter().filter(|l| **l == Some(true)).count() as f64;
        let n_neg = labels.iter().filter(|l| **l == Some(false)).count() as f64;

        let mut tables: Vec<(LabelCounts, f64)> = Vec::with_capacity(features.len());
        for &f in &features {
            let mut counts: LabelCounts = HashMap::new();
            for (value, label) in table.column_values(f).zip(&labels) {
                let slot = counts.entry(value).or_default();
                match label {
                    Some(true) => slot.0 += 1.0,
                    Some(false) => slot.1 += 1.0,
                    None => {}
                }
            }
            let distinct = counts.len() as f64;
            tables.push((counts, distinct));
        }

        let prior = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
        Ok(table
            .rows
            .iter()
            .map(|row| {
                features
                    .iter()
                    .zip(&tables)
                    .fold(prior, |acc, (&f, (counts, distinct))| {
                        let (pos, neg) = counts.get(&row[f]).copied().unwrap_or_default();
                        acc + ((pos + 1.0) / (n_pos + distinct)).ln()
                            - ((neg + 1.0) / (n_neg + distinct)).ln()
                    })
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassageOutcome {
    pub table: Table,
    pub k: usize,
    /// Rows relabeled from negative to positive.
    pub promoted: Vec<usize>,
    /// Rows relabeled from positive to negative.
    pub demoted: Vec<usize>,
    /// Positive rates (disadvantaged, advantaged) before relabeling.
    pub rates_before: (f64, f64),
    pub rates_after: (f64, f64),
}

/// Flips `k` labels in each group, `k` being the smallest count that
/// minimises the gap between the two groups' positive rates. Rows with a
/// null class or protected value are left alone and not counted.
pub fn massage(
    table: &Table,
    class_col: &str,
    protected: &str,
    disadvantaged: &Value,
    ranker: &dyn Ranker,
) -> Result<MassageOutcome> {
    let c = table.column_index(class_col)?;
    if table.schema.column(c).ty != ColumnType::Boolean {
        return Err(Error::TypeMismatch(format!(
            "class column `{}` is {}, expected boolean",
            table.schema.column(c).name,
            table.schema.column(c).ty
        )));
    }
    let p = table.column_index(protected)?;
    let scores = ranker.scores(table, c, p)?;

    let (mut promote_pool, mut demote_pool) = (Vec::new(), Vec::new());
    let (mut n_d, mut pos_d, mut n_a, mut pos_a) = (0i64, 0i64, 0i64, 0i64);
    for (i, row) in table.rows.iter().enumerate() {
        let Value::Boolean(label) = row[c] else { continue };
        if row[p].is_null() {
            continue;
        }
        if row[p].sql_eq(disadvantaged) {
            n_d += 1;
            if label {
                pos_d += 1;
            } else {
                promote_pool.push(i);
            }
        } else {
            n_a += 1;
            if label {
                pos_a += 1;
                demote_pool.push(i);
            }
        }
    }
    if n_d == 0 || n_a == 0 {
        return Err(Error::Transform(format!(
            "massaging needs both groups; found {n_d} disadvantaged and {n_a} advantaged rows"
        )));
    }

    // Best candidates first; stable sorts keep input order among ties.
    promote_pool.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    demote_pool.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // |(pos_d + k)/n_d − (pos_a − k)/n_a| scaled by n_d·n_a, exact.
    let gap = |k: i64| ((pos_d + k) * n_a - (pos_a - k) * n_d).abs();
    let limit = promote_pool.len().min(demote_pool.len());
    let k = (0..=limit).min_by_key(|&k| (gap(k as i64), k)).unwrap_or(0);

    let promoted: Vec<usize> = promote_pool[..k].to_vec();
    let demoted: Vec<usize> = demote_pool[..k].to_vec();
    let mut rows = table.rows.clone();
    for &i in &promoted {
        rows[i][c] = Value::Boolean(true);
    }
    for &i in &demoted {
        rows[i][c] = Value::Boolean(false);
    }
    let rate = |pos: i64, n: i64| pos as f64 / n as f64;
    let k_i = k as i64;
    Ok(MassageOutcome {
        table: table.with_rows(rows),
        k,
        promoted,
        demoted,
        rates_before: (rate(pos_d, n_d), rate(pos_a, n_a)),
        rates_after: (rate(pos_d + k_i, n_d), rate(pos_a - k_i, n_a)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{Column, Schema};

    /// Rows of (group, label, score).
    fn labeled(rows: &[(&str, bool, i64)]) -> Table {
        let schema = Schema::unkeyed(vec![
            Column::new("Gender", ColumnType::Text),
            Column::new("Promoted", ColumnType::Boolean),
            Column::new("Performance", ColumnType::Integer),
            Column::new("Dept", ColumnType::Text),
        ])
        .unwrap();
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, (g, l, s))| {
                vec![
                    Value::Text(g.to_string()),
                    Value::Boolean(*l),
                    Value::Integer(*s),
                    Value::Text(if i % 2 == 0 { "a" } else { "b" }.into()),
                ]
            })
            .collect();
        Table::new("T", schema, rows).unwrap()
    }

    fn group(g: &'static str, positives: usize, total: usize) -> Vec<(&'static str, bool, i64)> {
        (0..total).map(|i| (g, i < positives, i as i64)).collect()
    }

    fn f() -> Value {
        Value::Text("f".into())
    }

    fn changed(a: &Table, b: &Table) -> usize {
        a.rows.iter().zip(&b.rows).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn two_of_ten_against_six_of_ten() {
        let mut rows = group("f", 2, 10);
        rows.extend(group("m", 6, 10));
        let t = labeled(&rows);
        let out = massage(&t, "Promoted", "Gender", &f(), &ScoreRanker::new("Performance")).unwrap();
        assert_eq!(out.k, 2);
        assert_eq!(out.rates_after, (0.4, 0.4));
        assert_eq!(changed(&t, &out.table), 4);
        // Highest-scoring female negatives are promoted, lowest-scoring male positives demoted.
        assert_eq!(out.promoted, vec![9, 8]);
        assert_eq!(out.demoted, vec![10, 11]);
    }

    #[test]
    fn equal_rates_untouched() {
        let mut rows = group("f", 3, 6);
        rows.extend(group("m", 3, 6));
        let t = labeled(&rows);
        let out = massage(&t, "Promoted", "Gender", &f(), &ScoreRanker::new("Performance")).unwrap();
        assert_eq!(out.k, 0);
        assert_eq!(out.table, t);
    }

    #[test]
    fn none_of_four_against_all_of_four() {
        let mut rows = group("f", 0, 4);
        rows.extend(group("m", 4, 4));
        let t = labeled(&rows);
        let out = massage(&t, "Promoted", "Gender", &f(), &ScoreRanker::new("Performance")).unwrap();
        assert_eq!(out.k, 2);
        assert_eq!(out.rates_after, (0.5, 0.5));
    }

    #[test]
    fn errors() {
        let t = labeled(&group("m", 2, 4));
        assert!(massage(&t, "Promoted", "Gender", &f(), &ScoreRanker::new("Performance")).is_err());
        let mut rows = group("f", 0, 4);
        rows.extend(group("m", 4, 4));
        let t = labeled(&rows);
        assert!(matches!(
            massage(&t, "Gender", "Gender", &f(), &ScoreRanker::new("Performance")),
            Err(Error::TypeMismatch(_))
        ));
        assert!(massage(&t, "Promoted", "Gender", &f(), &ScoreRanker::new("Dept")).is_err());
    }

    #[test]
    fn naive_bayes_ranker() {
        let mut rows = group("f", 1, 8);
        rows.extend(group("m", 6, 8));
        let t = labeled(&rows);
        let out = massage(&t, "Promoted", "Gender", &f(), &NaiveBayesRanker).unwrap();
        assert_eq!(changed(&t, &out.table), 2 * out.k);
        assert_eq!(out.k, 2);
        assert_eq!(out.table.len(), t.len());
    }
}
