//! Contextual views: named relational expressions bound to (partial)
//! contexts, and their materialization over a database.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::relation::{evaluate, parse_expr, Database, RelExpr, Table};
use crate::tree::{Context, Node};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewBinding {
    pub name: String,
    pub context_pattern: Context,
    /// Labeled expressions in definition order.
    pub named_exprs: Vec<(String, RelExpr)>,
}

impl ViewBinding {
    pub fn base_tables(&self) -> BTreeSet<String> {
        self.named_exprs
            .iter()
            .flat_map(|(_, e)| e.base_tables())
            .collect()
    }
}

/// Parses a registry file against the CDT its patterns refer to.
///
/// ```text
/// view promotion
/// when action=promotion; role=clerk
/// def E1 = select(join(EMPLOYEE, PERSON), Role = "clerk")
/// ```
pub fn parse_registry(text: &str, cdt: &Node) -> Result<Vec<ViewBinding>> {
    struct Pending {
        name: String,
        pattern: Option<Context>,
        exprs: Vec<(String, RelExpr)>,
        line: usize,
    }

    let mut pending: Vec<Pending> = Vec::new();
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
            "view" => {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(syntax("expected `view <name>`".into()));
                }
                if pending.iter().any(|p| p.name == rest) {
                    return Err(syntax(format!("view `{rest}` defined twice")));
                }
                pending.push(Pending {
                    name: rest.to_string(),
                    pattern: None,
                    exprs: Vec::new(),
                    line,
                });
            }
            "when" => {
                let view = pending
                    .last_mut()
                    .ok_or_else(|| syntax("`when` before any `view`".into()))?;
                if view.pattern.is_some() {
                    return Err(syntax(format!("view `{}` already has a `when`", view.name)));
                }
                let pattern = Context::parse(rest, cdt).map_err(|e| syntax(e.to_string()))?;
                view.pattern = Some(pattern);
            }
            "def" => {
                let view = pending
                    .last_mut()
                    .ok_or_else(|| syntax("`def` before any `view`".into()))?;
                let (label, source) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax("expected `def <label> = <expression>`".into()))?;
                let label = label.trim();
                if label.is_empty() || label.contains(char::is_whitespace) {
                    return Err(syntax(format!("invalid label `{label}`")));
                }
                if view.exprs.iter().any(|(l, _)| l == label) {
                    return Err(syntax(format!(
                        "label `{label}` defined twice in `{}`",
                        view.name
                    )));
                }
                let expr = parse_expr(source.trim()).map_err(|e| syntax(e.to_string()))?;
                view.exprs.push((label.to_string(), expr));
            }
            other => return Err(syntax(format!("unknown registry keyword `{other}`"))),
        }
    }

    pending
        .into_iter()
        .map(|p| {
            if p.exprs.is_empty() {
                return Err(Error::Syntax {
                    line: p.line,
                    message: format!("view `{}` has no `def` lines", p.name),
                });
            }
            Ok(ViewBinding {
                name: p.name,
                context_pattern: p.pattern.unwrap_or_default(),
                named_exprs: p.exprs,
            })
        })
        .collect()
}

/// Picks the binding with the largest pattern contained in `context`;
/// earlier registry entries win ties.
pub fn match_binding<'a>(registry: &'a [ViewBinding], context: &Context) -> Result<&'a ViewBinding> {
    let mut best: Option<&ViewBinding> = None;
    for binding in registry {
        if context.contains(&binding.context_pattern)
            && best.is_none_or(|b| binding.context_pattern.len() > b.context_pattern.len())
        {
            best = Some(binding);
        }
    }
    best.ok_or_else(|| Error::NoBinding(context.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextualView {
    pub view: String,
    pub context: Context,
    pub tables: Vec<(String, Table)>,
    /// SHA-256 over the source bytes of every referenced base table.
    pub source_hash: String,
}

impl ContextualView {
    pub fn table(&self, label: &str) -> Option<&Table> {
        self.tables
            .iter()
            .find(|(l, _)| l.eq_ignore_ascii_case(label))
            .map(|(_, t)| t)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|(l, _)| l.as_str())
    }
}

pub fn materialize(db: &Database, binding: &ViewBinding, context: &Context) -> Result<ContextualView> {
    let tables = binding
        .named_exprs
        .iter()
        .map(|(label, expr)| {
            let mut table = evaluate(db, expr)?;
            table.name = label.clone();
            Ok((label.clone(), table))
        })
        .collect::<Result<Vec<_>>>()?;
    let bases = binding.base_tables();
    let source_hash = db.digest(bases.iter().map(String::as_str))?;
    Ok(ContextualView {
        view: binding.name.clone(),
        context: context.clone(),
        tables,
        source_hash,
    })
}
