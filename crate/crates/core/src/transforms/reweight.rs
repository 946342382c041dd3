use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::Serialize;

use super::value_for;
use crate::error::{Error, Result};
use crate::relation::{Column, ColumnType, Schema, Table, Value};

pub const WEIGHT_COLUMN: &str = "__weight";

/// Weight attached to rows whose `column` equals `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueWeight {
    pub column: String,
    pub value: String,
    pub weight: Decimal,
}

impl ValueWeight {
    pub fn new(column: &str, value: &str, weight: Decimal) -> Self {
        ValueWeight {
            column: column.to_string(),
            value: value.to_string(),
            weight,
        }
    }
}

/// Appends `__weight`: the product of the weights of every matching
/// (column, value) pair, 1 when none match.
pub fn reweight(table: &Table, weights: &[ValueWeight]) -> Result<Table> {
    if table.schema.names().any(|n| n == WEIGHT_COLUMN) {
        return Err(Error::Schema(format!(
            "table already has a `{WEIGHT_COLUMN}` column"
        )));
    }
    let mut compiled: Vec<(usize, Value, Decimal)> = Vec::with_capacity(weights.len());
    for w in weights {
        if w.weight <= Decimal::ZERO {
            return Err(Error::Param(format!(
                "weight for {}={} must be positive, got {}",
                w.column, w.value, w.weight
            )));
        }
        let index = table.column_index(&w.column)?;
        let value = value_for(table, &w.column, &w.value)?;
        if compiled.iter().any(|(i, v, _)| *i == index && *v == value) {
            return Err(Error::Param(format!(
                "weight for {}={} given twice",
                w.column, w.value
            )));
        }
        compiled.push((index, value, w.weight));
    }

    let mut columns = table.schema.columns().to_vec();
    columns.push(Column::new(WEIGHT_COLUMN, ColumnType::Decimal));
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let weight = compiled
                .iter()
                .filter(|(i, v, _)| row[*i].sql_eq(v))
                .fold(Decimal::ONE, |acc, (_, _, w)| acc * w);
            let mut out = row.clone();
            out.push(Value::Decimal(weight.normalize()));
            out
        })
        .collect();
    Ok(Table {
        name: table.name.clone(),
        schema: Schema::unkeyed(columns)?,
        rows,
    })
}

/// Replaces each row by `round(weight)` copies (half rounds up) and drops
/// the weight column. Returns a warning for every row rounded away.
pub fn materialize_weights(table: &Table) -> Result<(Table, Vec<String>)> {
    let w = table
        .schema
        .names()
        .position(|n| n == WEIGHT_COLUMN)
        .ok_or_else(|| Error::UnknownColumn(WEIGHT_COLUMN.into()))?;
    let keep: Vec<usize> = (0..table.schema.len()).filter(|&i| i != w).collect();
    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for row in &table.rows {
        let weight = row[w]
            .as_decimal()
            .ok_or_else(|| Error::TypeMismatch(format!("`{WEIGHT_COLUMN}` holds {:?}", row[w])))?;
        let copies = weight
            .round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero)
            .to_usize()
            .ok_or_else(|| Error::Param(format!("weight {weight} cannot be materialized")))?;
        if copies == 0 {
            dropped += 1;
        }
        let stripped: Vec<Value> = keep.iter().map(|&i| row[i].clone()).collect();
        rows.extend(std::iter::repeat_n(stripped, copies));
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!(
            "{dropped} row(s) with weight below 0.5 rounded to zero copies and were dropped"
        ));
    }
    let columns = keep.iter().map(|&i| table.schema.column(i).clone()).collect();
    Ok((
        Table {
            name: table.name.clone(),
            schema: Schema::unkeyed(columns)?,
            rows,
        },
        warnings,
    ))
}
