use std::cmp::Ordering;

use super::require_numeric;
use crate::error::{Error, Result};
use crate::relation::{Table, Value};

/// Descending by score, nulls last; ties keep their input order.
fn descending(a: &Value, b: &Value) -> Ordering {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => b.sql_cmp(a).unwrap_or(Ordering::Equal),
    }
}

fn ranked_indices(table: &Table, score: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&a, &b| descending(&table.rows[a][score], &table.rows[b][score]));
    order
}

/// Row indices in [`equality_rank`] order.
pub fn equality_order(table: &Table, score: &str) -> Result<Vec<usize>> {
    let s = require_numeric(table, score)?;
    Ok(ranked_indices(table, s))
}

pub fn equality_rank(table: &Table, score: &str) -> Result<Table> {
    Ok(pick(table, &equality_order(table, score)?))
}

fn pick(table: &Table, order: &[usize]) -> Table {
    table.with_rows(order.iter().map(|&i| table.rows[i].clone()).collect())
}

/// The first `min(k, |t|)` rows.
pub fn top_k(table: &Table, k: usize) -> Table {
    table.with_rows(table.rows.iter().take(k).cloned().collect())
}

/// Picks `k` rows by descending score. Within a block of tied scores the
/// next pick comes from the group with the most rows still unpicked in
/// the whole table; equal groups defer to whichever appears first in the
/// block.
pub fn diversity_select(table: &Table, score: &str, k: usize, protected: &str) -> Result<Table> {
    Ok(pick(table, &diversity_order(table, score, k, protected)?))
}

/// Row indices picked by [`diversity_select`], in pick order.
pub fn diversity_order(table: &Table, score: &str, k: usize, protected: &str) -> Result<Vec<usize>> {
    let s = require_numeric(table, score)?;
    let p = table.column_index(protected)?;
    if k > table.len() {
        return Err(Error::Param(format!(
            "cannot select {k} rows from a table of {}",
            table.len()
        )));
    }
    let order = ranked_indices(table, s);
    let group_of = |i: usize| &table.rows[i][p];
    let mut remaining: Vec<(&Value, usize)> = Vec::new();
    for i in 0..table.len() {
        match remaining.iter_mut().find(|(g, _)| *g == group_of(i)) {
            Some((_, n)) => *n += 1,
            None => remaining.push((group_of(i), 1)),
        }
    }
    let left = |remaining: &[(&Value, usize)], g: &Value| {
        remaining.iter().find(|(v, _)| *v == g).map_or(0, |(_, n)| *n)
    };

    let mut picked = Vec::with_capacity(k);
    let mut start = 0;
    while picked.len() < k {
        let head = &table.rows[order[start]][s];
        let end = order[start..]
            .iter()
            .position(|&i| descending(&table.rows[i][s], head) != Ordering::Equal)
            .map_or(order.len(), |off| start + off);
        let mut block: Vec<usize> = order[start..end].to_vec();
        while !block.is_empty() && picked.len() < k {
            // `block` is in input order, so the first maximum is the earliest row.
            let (pos, _) = block
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    left(&remaining, group_of(**a))
                        .cmp(&left(&remaining, group_of(**b)))
                        .then(ib.cmp(ia))
                })
                .expect("block is non-empty");
            let row = block.remove(pos);
            if let Some((_, n)) = remaining.iter_mut().find(|(g, _)| *g == group_of(row)) {
                *n -= 1;
            }
            picked.push(row);
        }
        start = end;
    }
    Ok(picked)
}
