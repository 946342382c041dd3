//! A small relational engine: typed tables loaded from CSV and the
//! select / natural-join / project / group-count algebra over them.

mod eval;
mod expr;
mod load;
mod table;
mod value;

pub use eval::{compile, evaluate, group_count, natural_join, Compiled, COUNT_COLUMN};
pub use expr::{parse_expr, CmpOp, Literal, Predicate, RelExpr};
pub use load::{load_database, parse_manifest, read_csv, TableDecl};
pub use table::{Column, Database, Row, Schema, Table};
pub use value::{ColumnType, Value, NULL_MARKER};
