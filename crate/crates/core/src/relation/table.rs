use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::value::{ColumnType, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Schema {
    columns: Vec<Column>,
    key: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<Column>, key: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for column in &columns {
            if !seen.insert(column.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", column.name)));
            }
        }
        let mut key_seen = HashSet::new();
        for k in &key {
            if !seen.contains(k.as_str()) {
                return Err(Error::Schema(format!("key column `{k}` is not a column")));
            }
            if !key_seen.insert(k.as_str()) {
                return Err(Error::Schema(format!("key column `{k}` listed twice")));
            }
        }
        Ok(Schema { columns, key })
    }

    /// Schema without a key, as produced by derived expressions.
    pub fn unkeyed(columns: Vec<Column>) -> Result<Self> {
        Schema::new(columns, Vec::new())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn key(&self) -> &[String] {
        &self.key
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Column position by exact name, falling back to a unique
    /// case-insensitive match.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        if let Some(i) = self.columns.iter().position(|c| c.name == name) {
            return Ok(i);
        }
        let mut folded = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name.eq_ignore_ascii_case(name));
        match (folded.next(), folded.next()) {
            (Some((i, _)), None) => Ok(i),
            _ => Err(Error::UnknownColumn(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_ok()
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }
}

pub type Row = Vec<Value>;

/// A named row multiset. Duplicate rows are meaningful.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: String,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> Result<Self> {
        let name = name.into();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "row {} of `{name}` has {} values, expected {}",
                    r + 1,
                    row.len(),
                    schema.len()
                )));
            }
            for (value, column) in row.iter().zip(schema.columns()) {
                if !value.fits(column.ty) {
                    return Err(Error::Coercion {
                        table: name.clone(),
                        row: r + 1,
                        column: column.name.clone(),
                        message: format!("{value:?} is not a {}", column.ty),
                    });
                }
            }
        }
        Ok(Table { name, schema, rows })
    }

    pub fn empty(name: impl Into<String>, schema: Schema) -> Self {
        Table {
            name: name.into(),
            schema,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema.index_of(name)
    }

    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &Value> {
        self.rows.iter().map(move |r| &r[index])
    }

    /// Same schema, different rows.
    pub fn with_rows(&self, rows: Vec<Row>) -> Table {
        Table {
            name: self.name.clone(),
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Keeps only the columns at `keep`, in that order.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Table> {
        let columns = keep.iter().map(|&i| self.schema.column(i).clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Ok(Table {
            name: self.name.clone(),
            schema: Schema::unkeyed(columns)?,
            rows,
        })
    }

    pub fn check_key(&self) -> Result<()> {
        if self.schema.key().is_empty() {
            return Ok(());
        }
        let idx: Vec<usize> = self
            .schema
            .key()
            .iter()
            .map(|k| self.schema.index_of(k))
            .collect::<Result<_>>()?;
        let mut seen = HashSet::new();
        for row in &self.rows {
            let key: Vec<&Value> = idx.iter().map(|&i| &row[i]).collect();
            if !seen.insert(key.clone()) {
                let shown: Vec<String> = key.iter().map(ToString::to_string).collect();
                return Err(Error::DuplicateKey {
                    table: self.name.clone(),
                    key: format!("({})", shown.join(", ")),
                });
            }
        }
        Ok(())
    }

    /// RFC-4180 rendering with a header row and `\N` for nulls.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(self.schema.names())
            .expect("writing to memory");
        for row in &self.rows {
            writer
                .write_record(row.iter().map(ToString::to_string))
                .expect("writing to memory");
        }
        writer.into_inner().expect("flushing to memory")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    tables: BTreeMap<String, Table>,
    sources: BTreeMap<String, Vec<u8>>,
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    /// Adds a base table, enforcing name and key uniqueness.
    pub fn insert(&mut self, table: Table) -> Result<()> {
        if self.tables.contains_key(&table.name) {
            return Err(Error::Schema(format!("table `{}` defined twice", table.name)));
        }
        table.check_key()?;
        self.tables.insert(table.name.clone(), table);
        Ok(())
    }

    /// Adds a base table together with the bytes it was loaded from.
    pub fn insert_with_source(&mut self, table: Table, source: Vec<u8>) -> Result<()> {
        let name = table.name.clone();
        self.insert(table)?;
        self.sources.insert(name, source);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Table> {
        if let Some(t) = self.tables.get(name) {
            return Ok(t);
        }
        let mut folded = self.tables.values().filter(|t| t.name.eq_ignore_ascii_case(name));
        match (folded.next(), folded.next()) {
            (Some(t), None) => Ok(t),
            _ => Err(Error::UnknownTable(name.to_string())),
        }
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Source bytes of a base table: the original CSV when it was loaded
    /// from disk, its canonical CSV rendering otherwise.
    pub fn source_bytes(&self, name: &str) -> Result<Vec<u8>> {
        let table = self.get(name)?;
        Ok(self
            .sources
            .get(&table.name)
            .cloned()
            .unwrap_or_else(|| table.to_csv()))
    }

    /// SHA-256 over the named base tables, taken in sorted name order.
    pub fn digest<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<String> {
        let mut resolved: Vec<String> = names
            .into_iter()
            .map(|n| self.get(n).map(|t| t.name.clone()))
            .collect::<Result<_>>()?;
        resolved.sort();
        resolved.dedup();
        let mut hasher = Sha256::new();
        for name in &resolved {
            let bytes = self.source_bytes(name)?;
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}
