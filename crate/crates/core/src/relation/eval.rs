use std::collections::HashMap;

use super::expr::{CmpOp, Literal, Predicate, RelExpr};
use super::table::{Column, Database, Row, Schema, Table};
use super::value::{ColumnType, Value};
use crate::error::{Error, Result};

pub const COUNT_COLUMN: &str = "count";

/// Evaluates `expr` over `db`. Results are row multisets in a
/// deterministic order.
pub fn evaluate(db: &Database, expr: &RelExpr) -> Result<Table> {
    let mut table = eval(db, expr)?;
    if !matches!(expr, RelExpr::Base(_)) {
        table.name = expr.to_string();
    }
    Ok(table)
}

fn eval(db: &Database, expr: &RelExpr) -> Result<Table> {
    match expr {
        RelExpr::Base(name) => db.get(name).cloned(),
        RelExpr::Select(child, pred) => {
            let input = eval(db, child)?;
            let compiled = compile(pred, &input.schema)?;
            let rows = input.rows.iter().filter(|r| compiled.eval(r)).cloned().collect();
            Ok(derived(&input, input.schema.columns().to_vec(), rows)?)
        }
        RelExpr::NaturalJoin(left, right) => natural_join(&eval(db, left)?, &eval(db, right)?),
        RelExpr::Project(child, columns) => {
            let input = eval(db, child)?;
            let idx: Vec<usize> = columns
                .iter()
                .map(|c| input.column_index(c))
                .collect::<Result<_>>()?;
            let cols = idx.iter().map(|&i| input.schema.column(i).clone()).collect();
            let rows = input
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect();
            derived(&input, cols, rows)
        }
        RelExpr::GroupCount(child, columns) => group_count(&eval(db, child)?, columns),
    }
}

fn derived(input: &Table, columns: Vec<Column>, rows: Vec<Row>) -> Result<Table> {
    Ok(Table {
        name: input.name.clone(),
        schema: Schema::unkeyed(columns)?,
        rows,
    })
}

/// Equi-join on every shared column name. Output columns: shared (left
/// order), then left-only, then right-only. Row order follows the left
/// input, then the right input.
pub fn natural_join(left: &Table, right: &Table) -> Result<Table> {
    let shared: Vec<(usize, usize)> = left
        .schema
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(li, lc)| {
            right
                .schema
                .columns()
                .iter()
                .position(|rc| rc.name == lc.name)
                .map(|ri| (li, ri))
        })
        .collect();
    if shared.is_empty() {
        return Err(Error::NoSharedColumns {
            left: left.schema.names().collect::<Vec<_>>().join(", "),
            right: right.schema.names().collect::<Vec<_>>().join(", "),
        });
    }
    for &(li, ri) in &shared {
        let (lt, rt) = (left.schema.column(li).ty, right.schema.column(ri).ty);
        let compatible = lt == rt
            || (lt.is_numeric() && rt.is_numeric())
            || matches!(
                (lt, rt),
                (
                    ColumnType::Text | ColumnType::Date,
                    ColumnType::Text | ColumnType::Date
                )
            );
        if !compatible {
            return Err(Error::TypeMismatch(format!(
                "join column `{}` is {lt} on the left and {rt} on the right",
                left.schema.column(li).name
            )));
        }
    }
    let left_only: Vec<usize> = (0..left.schema.len())
        .filter(|i| !shared.iter().any(|&(li, _)| li == *i))
        .collect();
    let right_only: Vec<usize> = (0..right.schema.len())
        .filter(|i| !shared.iter().any(|&(_, ri)| ri == *i))
        .collect();

    let mut columns: Vec<Column> = shared
        .iter()
        .map(|&(li, _)| left.schema.column(li).clone())
        .collect();
    columns.extend(left_only.iter().map(|&i| left.schema.column(i).clone()));
    columns.extend(right_only.iter().map(|&i| right.schema.column(i).clone()));

    let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
    for (r, row) in right.rows.iter().enumerate() {
        if let Some(key) = shared
            .iter()
            .map(|&(_, ri)| row[ri].join_key())
            .collect::<Option<Vec<_>>>()
        {
            index.entry(key).or_default().push(r);
        }
    }

    let mut rows = Vec::new();
    for lrow in &left.rows {
        let Some(key) = shared
            .iter()
            .map(|&(li, _)| lrow[li].join_key())
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        for &r in index.get(&key).map(Vec::as_slice).unwrap_or_default() {
            let rrow = &right.rows[r];
            let mut out = Vec::with_capacity(columns.len());
            out.extend(shared.iter().map(|&(li, _)| lrow[li].clone()));
            out.extend(left_only.iter().map(|&i| lrow[i].clone()));
            out.extend(right_only.iter().map(|&i| rrow[i].clone()));
            rows.push(out);
        }
    }
    Ok(Table {
        name: format!("{} ⋈ {}", left.name, right.name),
        schema: Schema::unkeyed(columns)?,
        rows,
    })
}

/// One row per distinct combination of `columns` (null is a value), in
/// order of first appearance, plus a trailing `count`.
pub fn group_count(input: &Table, columns: &[String]) -> Result<Table> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| input.column_index(c))
        .collect::<Result<_>>()?;
    let mut out_cols: Vec<Column> = idx.iter().map(|&i| input.schema.column(i).clone()).collect();
    if out_cols.iter().any(|c| c.name == COUNT_COLUMN) {
        return Err(Error::Schema(format!(
            "cannot group by a column named `{COUNT_COLUMN}`"
        )));
    }
    out_cols.push(Column::new(COUNT_COLUMN, ColumnType::Integer));

    let mut order: Vec<Vec<Value>> = Vec::new();
    let mut counts: HashMap<Vec<Value>, i64> = HashMap::new();
    for row in &input.rows {
        let key: Vec<Value> = idx.iter().map(|&i| row[i].clone()).collect();
        let slot = counts.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            0
        });
        *slot += 1;
    }
    let rows = order
        .into_iter()
        .map(|mut key| {
            let n = counts[&key];
            key.push(Value::Integer(n));
            key
        })
        .collect();
    derived(input, out_cols, rows)
}

/// A predicate bound to column positions and type-checked against a schema.
#[derive(Debug, Clone)]
pub enum Compiled {
    Compare { index: usize, op: CmpOp, literal: Value },
    And(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
    Not(Box<Compiled>),
}

impl Compiled {
    /// Comparisons involving null are false.
    pub fn eval(&self, row: &[Value]) -> bool {
        match self {
            Compiled::Compare { index, op, literal } => {
                row[*index].sql_cmp(literal).is_some_and(|ord| op.holds(ord))
            }
            Compiled::And(a, b) => a.eval(row) && b.eval(row),
            Compiled::Or(a, b) => a.eval(row) || b.eval(row),
            Compiled::Not(a) => !a.eval(row),
        }
    }
}

pub fn compile(pred: &Predicate, schema: &Schema) -> Result<Compiled> {
    Ok(match pred {
        Predicate::Compare { column, op, literal } => {
            let index = schema.index_of(column)?;
            let ty = schema.column(index).ty;
            let literal = match (ty, literal) {
                (ColumnType::Text | ColumnType::Date, Literal::Text(s)) => Value::Text(s.clone()),
                (ColumnType::Integer | ColumnType::Decimal, Literal::Number(n)) => Value::Decimal(*n),
                (ColumnType::Boolean, Literal::Boolean(b)) => Value::Boolean(*b),
                (ty, lit) => {
                    return Err(Error::TypeMismatch(format!(
                        "column `{column}` is {ty} but is compared with {lit}"
                    )))
                }
            };
            Compiled::Compare {
                index,
                op: *op,
                literal,
            }
        }
        Predicate::And(a, b) => Compiled::And(Box::new(compile(a, schema)?), Box::new(compile(b, schema)?)),
        Predicate::Or(a, b) => Compiled::Or(Box::new(compile(a, schema)?), Box::new(compile(b, schema)?)),
        Predicate::Not(a) => Compiled::Not(Box::new(compile(a, schema)?)),
    })
}
