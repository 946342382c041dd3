//! Rebalancing by replicating the qualifying rows of the disadvantaged group.

use std::str::FromStr;

use rust_decimal::Decimal;
use serde::Serialize;

use super::require_numeric;
use crate::error::{Error, Result};
use crate::relation::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairOutcome {
    pub table: Table,
    /// Qualifying rows outside the disadvantaged group.
    pub advantaged: usize,
    /// Qualifying rows inside the disadvantaged group.
    pub disadvantaged: usize,
    /// Extra copies appended of every qualifying disadvantaged row.
    pub replicas: usize,
}

/// `⌈(advantaged − disadvantaged) / disadvantaged⌉`, or zero when the
/// disadvantaged group is already at least as large.
pub fn replication_factor(advantaged: usize, disadvantaged: usize) -> Result<usize> {
    if disadvantaged == 0 {
        return Err(Error::Transform(
            "no qualifying rows in the disadvantaged group; replication cannot rebalance".into(),
        ));
    }
    Ok(advantaged.saturating_sub(disadvantaged).div_ceil(disadvantaged))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManagerFormula {
    /// `⌈(MM − FM) / (MM + FM)⌉`, clamped at zero.
    #[default]
    Literal,
    /// `⌈(MM − FM) / FM⌉`, clamped at zero.
    Proportional,
}

impl FromStr for ManagerFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ManagerFormula::Literal),
            "proportional" => Ok(ManagerFormula::Proportional),
            other => Err(Error::Param(format!(
                "unknown manager formula `{other}` (expected literal or proportional)"
            ))),
        }
    }
}

/// Replication factor derived from the manager group counts.
pub fn manager_ratio_factor(majority: usize, minority: usize, formula: ManagerFormula) -> Result<usize> {
    let excess = majority.saturating_sub(minority);
    match formula {
        ManagerFormula::Literal => {
            let total = majority + minority;
            if total == 0 {
                return Err(Error::Transform("the managers table is empty".into()));
            }
            Ok(excess.div_ceil(total))
        }
        ManagerFormula::Proportional => {
            if minority == 0 {
                return Err(Error::Transform(
                    "no managers in the disadvantaged group; the proportional formula is undefined".into(),
                ));
            }
            Ok(excess.div_ceil(minority))
        }
    }
}

struct Split {
    qualifying: Vec<usize>,
    disadvantaged: Vec<usize>,
    advantaged: usize,
}

/// Rows with `score > pmin`, partitioned by membership in the
/// disadvantaged group. Nulls in either column never qualify.
fn split_qualifying(
    table: &Table,
    protected: &str,
    disadvantaged: &Value,
    score: &str,
    pmin: Decimal,
) -> Result<Split> {
    let p = table.column_index(protected)?;
    let s = require_numeric(table, score)?;
    let mut split = Split {
        qualifying: Vec::new(),
        disadvantaged: Vec::new(),
        advantaged: 0,
    };
    for (i, row) in table.rows.iter().enumerate() {
        let passes = row[s].as_decimal().is_some_and(|v| v > pmin);
        if !passes || row[p].is_null() {
            continue;
        }
        split.qualifying.push(i);
        if row[p].sql_eq(disadvantaged) {
            split.disadvantaged.push(i);
        } else {
            split.advantaged += 1;
        }
    }
    Ok(split)
}

fn assemble(table: &Table, split: &Split, replicas: usize) -> Table {
    let mut rows: Vec<_> = split.qualifying.iter().map(|&i| table.rows[i].clone()).collect();
    for _ in 0..replicas {
        rows.extend(split.disadvantaged.iter().map(|&i| table.rows[i].clone()));
    }
    table.with_rows(rows)
}

/// Keeps the rows scoring above `pmin` and appends `p` copies of the
/// qualifying disadvantaged rows, `p` being [`replication_factor`].
pub fn repair_oversample(
    table: &Table,
    protected: &str,
    disadvantaged: &Value,
    score: &str,
    pmin: Decimal,
) -> Result<RepairOutcome> {
    let split = split_qualifying(table, protected, disadvantaged, score, pmin)?;
    let replicas = replication_factor(split.advantaged, split.disadvantaged.len())?;
    Ok(RepairOutcome {
        table: assemble(table, &split, replicas),
        advantaged: split.advantaged,
        disadvantaged: split.disadvantaged.len(),
        replicas,
    })
}

/// Like [`repair_oversample`], but the number of copies comes from the
/// current manager group counts.
pub fn repair_manager_ratio(
    clerks: &Table,
    managers: &Table,
    protected: &str,
    disadvantaged: &Value,
    score: &str,
    pmin: Decimal,
    formula: ManagerFormula,
) -> Result<RepairOutcome> {
    if managers.is_empty() {
        return Err(Error::Transform("the managers table is empty".into()));
    }
    let mp = managers.column_index(protected)?;
    let (mut majority, mut minority) = (0, 0);
    for value in managers.column_values(mp).filter(|v| !v.is_null()) {
        if value.sql_eq(disadvantaged) {
            minority += 1;
        } else {
            majority += 1;
        }
    }
    let replicas = manager_ratio_factor(majority, minority, formula)?;
    let split = split_qualifying(clerks, protected, disadvantaged, score, pmin)?;
    if replicas > 0 && split.disadvantaged.is_empty() {
        return Err(Error::Transform(
            "no qualifying rows in the disadvantaged group to replicate".into(),
        ));
    }
    Ok(RepairOutcome {
        table: assemble(clerks, &split, replicas),
        advantaged: split.advantaged,
        disadvantaged: split.disadvantaged.len(),
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{Column, ColumnType, Schema};

    fn candidates(groups: &[(&str, &str, usize)]) -> Table {
        let schema = Schema::unkeyed(vec![
            Column::new("Gender", ColumnType::Text),
            Column::new("Performance", ColumnType::Decimal),
        ])
        .unwrap();
        let rows = groups
            .iter()
            .flat_map(|(g, score, n)| {
                (0..*n).map(move |_| vec![Value::Text(g.to_string()), Value::Decimal(score.parse().unwrap())])
            })
            .collect();
        Table::new("E1", schema, rows).unwrap()
    }

    fn f() -> Value {
        Value::Text("f".into())
    }

    fn pmin() -> Decimal {
        "3.5".parse().unwrap()
    }

    fn count(t: &Table, g: &str) -> usize {
        t.rows.iter().filter(|r| r[0] == Value::Text(g.into())).count()
    }

    #[test]
    fn twelve_against_four() {
        let t = candidates(&[
            ("m", "4.0", 12),
            ("m", "2.0", 18),
            ("f", "4.5", 4),
            ("f", "3.5", 6),
        ]);
        let out = repair_oversample(&t, "Gender", &f(), "Performance", pmin()).unwrap();
        assert_eq!((out.advantaged, out.disadvantaged, out.replicas), (12, 4, 2));
        assert_eq!(out.table.len(), 24);
        assert_eq!(count(&out.table, "m"), count(&out.table, "f"));
    }

    #[test]
    fn ten_against_three() {
        let t = candidates(&[("m", "5", 10), ("f", "5", 3)]);
        let out = repair_oversample(&t, "Gender", &f(), "Performance", pmin()).unwrap();
        assert_eq!(out.replicas, 3);
        let females = count(&out.table, "f");
        assert_eq!(females, 12);
        assert!((10..13).contains(&females));
    }

    #[test]
    fn already_balanced() {
        let t = candidates(&[("m", "5", 5), ("f", "5", 5)]);
        let out = repair_oversample(&t, "Gender", &f(), "Performance", pmin()).unwrap();
        assert_eq!(out.replicas, 0);
        assert_eq!(out.table, t);
    }

    #[test]
    fn minority_majority_clamps() {
        assert_eq!(replication_factor(2, 10).unwrap(), 0);
    }

    #[test]
    fn no_qualifying_disadvantaged() {
        let t = candidates(&[("m", "5", 5), ("f", "3.5", 5)]);
        let err = repair_oversample(&t, "Gender", &f(), "Performance", pmin()).unwrap_err();
        assert!(matches!(err, Error::Transform(_)), "{err}");
        assert!(repair_oversample(&t, "Race", &f(), "Performance", pmin()).is_err());
        assert!(matches!(
            repair_oversample(&t, "Gender", &f(), "Gender", pmin()),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn manager_formula_literal() {
        assert_eq!(manager_ratio_factor(10, 2, ManagerFormula::Literal).unwrap(), 1);
        assert_eq!(manager_ratio_factor(6, 6, ManagerFormula::Literal).unwrap(), 0);
        assert_eq!(manager_ratio_factor(2, 10, ManagerFormula::Literal).unwrap(), 0);
        assert!(manager_ratio_factor(0, 0, ManagerFormula::Literal).is_err());
        assert_eq!(
            manager_ratio_factor(10, 2, ManagerFormula::Proportional).unwrap(),
            4
        );
        assert!(manager_ratio_factor(10, 0, ManagerFormula::Proportional).is_err());
    }

    #[test]
    fn manager_ratio_appends_one_copy() {
        let clerks = candidates(&[("m", "4", 12), ("f", "4", 4)]);
        let managers = candidates(&[("m", "3", 10), ("f", "3", 2)]);
        let out = repair_manager_ratio(
            &clerks,
            &managers,
            "Gender",
            &f(),
            "Performance",
            pmin(),
            ManagerFormula::Literal,
        )
        .unwrap();
        assert_eq!(out.replicas, 1);
        assert_eq!(out.table.len(), 20);

        let parity = candidates(&[("m", "3", 6), ("f", "3", 6)]);
        let out = repair_manager_ratio(
            &clerks,
            &parity,
            "Gender",
            &f(),
            "Performance",
            pmin(),
            ManagerFormula::Literal,
        )
        .unwrap();
        assert_eq!(out.table, clerks);

        let empty = clerks.with_rows(vec![]);
        assert!(repair_manager_ratio(
            &clerks,
            &empty,
            "Gender",
            &f(),
            "Performance",
            pmin(),
            ManagerFormula::Literal
        )
        .is_err());
        let no_women = candidates(&[("m", "4", 3)]);
        assert!(repair_manager_ratio(
            &no_women,
            &managers,
            "Gender",
            &f(),
            "Performance",
            pmin(),
            ManagerFormula::Literal
        )
        .is_err());
    }
}
