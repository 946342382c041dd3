use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Serialize, Serializer};

pub const NULL_MARKER: &str = "\\N";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Integer,
    Decimal,
    Boolean,
    Date,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Decimal)
    }
}

impl FromStr for ColumnType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ColumnType::Text),
            "integer" => Ok(ColumnType::Integer),
            "decimal" => Ok(ColumnType::Decimal),
            "boolean" => Ok(ColumnType::Boolean),
            "date" => Ok(ColumnType::Date),
            other => Err(format!(
                "unknown column type `{other}` (expected text, integer, decimal, boolean or date)"
            )),
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Text => "text",
            ColumnType::Integer => "integer",
            ColumnType::Decimal => "decimal",
            ColumnType::Boolean => "boolean",
            ColumnType::Date => "date",
        })
    }
}

/// A single cell. Decimals are exact; dates are kept as ISO-8601 strings
/// and compare lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Null,
    Boolean(bool),
    Integer(i64),
    Decimal(Decimal),
    Date(String),
    Text(String),
}

impl Value {
    pub fn parse(raw: &str, ty: ColumnType) -> Result<Value, String> {
        if raw == NULL_MARKER {
            return Ok(Value::Null);
        }
        match ty {
            ColumnType::Text => Ok(Value::Text(raw.to_string())),
            ColumnType::Integer => raw
                .trim()
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| format!("`{raw}` is not an integer")),
            ColumnType::Decimal => Decimal::from_str(raw.trim())
                .map(Value::Decimal)
                .map_err(|_| format!("`{raw}` is not a decimal")),
            ColumnType::Boolean => match raw.trim().to_ascii_lowercase().as_str() {
                "true" | "1" => Ok(Value::Boolean(true)),
                "false" | "0" => Ok(Value::Boolean(false)),
                _ => Err(format!("`{raw}` is not a boolean")),
            },
            ColumnType::Date => NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
                .map(|d| Value::Date(d.format("%Y-%m-%d").to_string()))
                .map_err(|_| format!("`{raw}` is not an ISO-8601 date (YYYY-MM-DD)")),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn fits(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Null, _)
                | (Value::Text(_), ColumnType::Text)
                | (Value::Integer(_), ColumnType::Integer)
                | (Value::Decimal(_), ColumnType::Decimal)
                | (Value::Boolean(_), ColumnType::Boolean)
                | (Value::Date(_), ColumnType::Date)
        )
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Integer(i) => Some(Decimal::from(*i)),
            Value::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        use rust_decimal::prelude::ToPrimitive;
        self.as_decimal().and_then(|d| d.to_f64())
    }

    /// Equality with SQL null semantics: null equals nothing, and integers
    /// compare numerically against decimals.
    pub fn sql_eq(&self, other: &Value) -> bool {
        self.sql_cmp(other) == Some(Ordering::Equal)
    }

    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => None,
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (a, b) if a.as_decimal().is_some() && b.as_decimal().is_some() => {
                Some(a.as_decimal()?.cmp(&b.as_decimal()?))
            }
            (Value::Text(a) | Value::Date(a), Value::Text(b) | Value::Date(b)) => Some(a.cmp(b)),
            (Value::Boolean(a), Value::Boolean(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// Key used for equi-joins; `None` for null. Numeric values are
    /// normalised so that `2` and `2.0` land on the same key.
    pub(crate) fn join_key(&self) -> Option<Value> {
        match self {
            Value::Null => None,
            Value::Integer(i) => Some(Value::Decimal(Decimal::from(*i).normalize())),
            Value::Decimal(d) => Some(Value::Decimal(d.normalize())),
            Value::Date(s) => Some(Value::Text(s.clone())),
            other => Some(other.clone()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str(NULL_MARKER),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Date(s) | Value::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_none(),
            Value::Boolean(b) => serializer.serialize_bool(*b),
            Value::Integer(i) => serializer.serialize_i64(*i),
            Value::Decimal(d) => serializer.serialize_str(&d.to_string()),
            Value::Date(s) | Value::Text(s) => serializer.serialize_str(s),
        }
    }
}
