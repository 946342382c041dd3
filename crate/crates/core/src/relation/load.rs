use std::fs;
use std::path::{Path, PathBuf};

use super::table::{Column, Database, Schema, Table};
use super::value::{ColumnType, Value};
use crate::error::{Error, Result};

/// One `table` block of a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableDecl {
    pub name: String,
    pub file: PathBuf,
    pub columns: Vec<Column>,
    pub key: Vec<String>,
}

/// Parses a manifest:
///
/// ```text
/// table EMPLOYEE file employee.csv
/// col pID text
/// col Performance decimal
/// key pID
/// ```
pub fn parse_manifest(text: &str) -> Result<Vec<TableDecl>> {
    let mut decls: Vec<TableDecl> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let syntax = |message: String| Error::Syntax { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .map(|(k, r)| (k, r.trim()))
            .unwrap_or((content, ""));
        match keyword {
            "table" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                match words.as_slice() {
                    [name, "file", file] => decls.push(TableDecl {
                        name: name.to_string(),
                        file: PathBuf::from(file),
                        columns: Vec::new(),
                        key: Vec::new(),
                    }),
                    _ => return Err(syntax("expected `table <name> file <csv>`".into())),
                }
            }
            "col" => {
                let decl = decls
                    .last_mut()
                    .ok_or_else(|| syntax("`col` before any `table`".into()))?;
                let words: Vec<&str> = rest.split_whitespace().collect();
                let [name, ty] = words.as_slice() else {
                    return Err(syntax("expected `col <name> <type>`".into()));
                };
                let ty: ColumnType = ty.parse().map_err(syntax)?;
                decl.columns.push(Column::new(*name, ty));
            }
            "key" => {
                let decl = decls
                    .last_mut()
                    .ok_or_else(|| syntax("`key` before any `table`".into()))?;
                if !decl.key.is_empty() {
                    return Err(syntax(format!("table `{}` already has a key", decl.name)));
                }
                decl.key = rest
                    .split(',')
                    .map(|k| k.trim().to_string())
                    .filter(|k| !k.is_empty())
                    .collect();
                if decl.key.is_empty() {
                    return Err(syntax("`key` needs at least one column".into()));
                }
            }
            other => return Err(syntax(format!("unknown manifest keyword `{other}`"))),
        }
    }
    for decl in &decls {
        if decl.columns.is_empty() {
            return Err(Error::Schema(format!(
                "table `{}` declares no columns",
                decl.name
            )));
        }
    }
    Ok(decls)
}

/// Reads one CSV against a declared schema. Columns may appear in any
/// order in the file; rows come back in declaration order.
pub fn read_csv(name: &str, schema: &Schema, bytes: &[u8]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| csv_error(name, e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema(format!("`{name}`: missing header row")));
    }

    let mut positions = Vec::with_capacity(schema.len());
    for column in schema.columns() {
        let pos = header
            .iter()
            .position(|h| h == column.name)
            .ok_or_else(|| Error::Schema(format!("`{name}`: header lacks column `{}`", column.name)))?;
        positions.push(pos);
    }
    if let Some(extra) = header.iter().find(|h| !schema.names().any(|n| n == *h)) {
        return Err(Error::Schema(format!(
            "`{name}`: undeclared column `{extra}` in header"
        )));
    }
    if header.len() != schema.len() {
        return Err(Error::Schema(format!("`{name}`: header repeats a column")));
    }

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(name, e))?;
        let row = schema
            .columns()
            .iter()
            .zip(&positions)
            .map(|(column, &pos)| {
                Value::parse(&record[pos], column.ty).map_err(|message| Error::Coercion {
                    table: name.to_string(),
                    row: r + 1,
                    column: column.name.clone(),
                    message,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Table::new(name, schema.clone(), rows)
}

fn csv_error(name: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Syntax {
        line,
        message: format!("`{name}`: {e}"),
    }
}

/// Loads every table declared in `manifest`, resolving CSV paths against `dir`.
pub fn load_database(dir: &Path, manifest: &Path) -> Result<Database> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let decls = parse_manifest(&text)?;
    let mut db = Database::new();
    for decl in decls {
        let schema = Schema::new(decl.columns, decl.key)?;
        let path = dir.join(&decl.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let table = read_csv(&decl.name, &schema, &bytes)?;
        db.insert_with_source(table, bytes)?;
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPLOYEE: &str = "\
table EMPLOYEE file employee.csv
col InstName text
col pID text
col Role text
col IniDate date
col Department text
col Performance decimal
key InstName, pID, Role
";

    #[test]
    fn manifest_declares_employee() {
        let decls = parse_manifest(EMPLOYEE).unwrap();
        assert_eq!(decls.len(), 1);
        assert_eq!(decls[0].columns.len(), 6);
        assert_eq!(decls[0].key, ["InstName", "pID", "Role"]);
    }

    #[test]
    fn manifest_errors() {
        assert!(parse_manifest("col a text").is_err());
        assert!(parse_manifest("table T file x.csv\ncol a float").is_err());
        assert!(parse_manifest("table T x.csv").is_err());
        assert!(parse_manifest("table T file x.csv").is_err());
        let err = parse_manifest("table T file x.csv\ncol a text\nbogus").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("manifest.txt"), EMPLOYEE).unwrap();
        fs::write(
            dir.path().join("employee.csv"),
            "pID,InstName,Role,IniDate,Department,Performance\np1,Acme,clerk,2020-01-01,hr,3.5\np2,Acme,clerk,2020-01-01,\\N,4\n",
        )
        .unwrap();
        let db = load_database(dir.path(), &dir.path().join("manifest.txt")).unwrap();
        assert_eq!(db.len(), 1);
        let t = db.get("EMPLOYEE").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows[0][0], Value::Text("Acme".into()));
        assert_eq!(t.rows[1][4], Value::Null);
    }

    #[test]
    fn header_only_is_empty_table() {
        let decls = parse_manifest(EMPLOYEE).unwrap();
        let schema = Schema::new(decls[0].columns.clone(), decls[0].key.clone()).unwrap();
        let t = read_csv(
            "EMPLOYEE",
            &schema,
            b"InstName,pID,Role,IniDate,Department,Performance\n",
        )
        .unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn coercion_error_has_location() {
        let decls = parse_manifest(EMPLOYEE).unwrap();
        let schema = Schema::new(decls[0].columns.clone(), vec![]).unwrap();
        let err = read_csv(
            "EMPLOYEE",
            &schema,
            b"InstName,pID,Role,IniDate,Department,Performance\nA,p1,c,2020-01-01,hr,3\nA,p2,c,2020-01-01,hr,high\n",
        )
        .unwrap_err();
        match err {
            Error::Coercion { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "Performance");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_person_key() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("m.txt"),
            "table PERSON file person.csv\ncol pID text\ncol Gender text\nkey pID\n",
        )
        .unwrap();
        fs::write(dir.path().join("person.csv"), "pID,Gender\np1,m\np1,f\n").unwrap();
        let err = load_database(dir.path(), &dir.path().join("m.txt")).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }), "{err}");
    }

    #[test]
    fn missing_file_is_io() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.txt"), EMPLOYEE).unwrap();
        let err = load_database(dir.path(), &dir.path().join("m.txt")).unwrap_err();
        assert!(err.is_io());
        assert!(load_database(dir.path(), &dir.path().join("nope.txt"))
            .unwrap_err()
            .is_io());
    }

    #[test]
    fn header_mismatch() {
        let schema = Schema::unkeyed(vec![Column::new("a", ColumnType::Text)]).unwrap();
        assert!(read_csv("T", &schema, b"b\nx\n").is_err());
        assert!(read_csv("T", &schema, b"a,b\nx,y\n").is_err());
        assert!(read_csv("T", &schema, b"").is_err());
    }
}
