use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{Node, NodeKind};
use crate::error::{Error, Result};

/// One `dimension = value` selection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ContextElement {
    /// Names from just below the root down to the bound dimension,
    /// alternating dimension and concept names.
    pub dimension_path: Vec<String>,
    /// Concept name, or the literal for an attribute-shorthand dimension.
    pub value: String,
    pub attribute_bindings: BTreeMap<String, String>,
}

impl ContextElement {
    pub fn dimension(&self) -> &str {
        self.dimension_path.last().map(String::as_str).unwrap_or_default()
    }

    /// True when `self` (a pattern) is satisfied by `other`.
    fn matched_by(&self, other: &ContextElement) -> bool {
        self.dimension_path == other.dimension_path
            && self.value == other.value
            && self
                .attribute_bindings
                .iter()
                .all(|(k, v)| other.attribute_bindings.get(k) == Some(v))
    }
}

impl fmt::Display for ContextElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.dimension_path.join("."), self.value)?;
        if !self.attribute_bindings.is_empty() {
            let parts: Vec<_> = self
                .attribute_bindings
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}

/// A tuple of context elements, kept sorted by dimension path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Context {
    elements: Vec<ContextElement>,
}

impl Context {
    pub fn empty() -> Self {
        Context::default()
    }

    /// Parses `dim=value; other=value(attr=literal)` against a CDT.
    ///
    /// Dimensions may be named by their bare name when unambiguous or by
    /// a dotted suffix of their path (`private.sector`).
    pub fn parse(text: &str, tree: &Node) -> Result<Self> {
        let dimensions = tree.dimensions();
        let mut elements: Vec<ContextElement> = Vec::new();
        for part in split_top_level(text, ';')? {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (lhs, rhs) = part
                .split_once('=')
                .ok_or_else(|| Error::Context(format!("`{part}` is not of the form dimension=value")))?;
            let segments: Vec<String> = lhs
                .trim()
                .split('.')
                .map(|s| s.trim().to_ascii_lowercase())
                .collect();
            if segments.iter().any(String::is_empty) {
                return Err(Error::Context(format!("empty dimension name in `{part}`")));
            }
            let matches: Vec<_> = dimensions
                .iter()
                .filter(|(path, _)| path.ends_with(&segments))
                .collect();
            let (path, dim) = match matches.as_slice() {
                [] => return Err(Error::Context(format!("unknown dimension `{}`", lhs.trim()))),
                [one] => *one,
                many => {
                    let options: Vec<_> = many.iter().map(|(p, _)| p.join(".")).collect();
                    return Err(Error::Context(format!(
                        "ambiguous dimension `{}`; qualify it as one of {}",
                        lhs.trim(),
                        options.join(", ")
                    )));
                }
            };
            let element = bind_value(path.clone(), dim, rhs.trim())?;
            if elements
                .iter()
                .any(|e| e.dimension_path == element.dimension_path)
            {
                return Err(Error::Context(format!(
                    "dimension `{}` is bound more than once; sibling values are mutually exclusive",
                    element.dimension_path.join(".")
                )));
            }
            elements.push(element);
        }

        // A bound subdimension requires its enclosing concept to be bound too.
        for element in &elements {
            let path = &element.dimension_path;
            for concept_at in (1..path.len()).step_by(2) {
                let parent_dim = &path[..concept_at];
                let concept = &path[concept_at];
                let consistent = elements
                    .iter()
                    .any(|e| e.dimension_path == parent_dim && &e.value == concept);
                if !consistent {
                    return Err(Error::Context(format!(
                        "`{}` is bound but its parent `{}={}` is not",
                        path.join("."),
                        parent_dim.join("."),
                        concept
                    )));
                }
            }
        }
        elements.sort();
        Ok(Context { elements })
    }

    pub fn elements(&self) -> &[ContextElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Every element of `pattern` is present in `self`.
    pub fn contains(&self, pattern: &Context) -> bool {
        pattern
            .elements
            .iter()
            .all(|p| self.elements.iter().any(|e| p.matched_by(e)))
    }

    /// Value bound to the dimension whose own name is `dimension`.
    pub fn value_of(&self, dimension: &str) -> Option<&str> {
        let dimension = dimension.to_ascii_lowercase();
        self.elements
            .iter()
            .find(|e| e.dimension() == dimension)
            .map(|e| e.value.as_str())
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.elements.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

fn bind_value(path: Vec<String>, dim: &Node, rhs: &str) -> Result<ContextElement> {
    let dim_name = path.join(".");
    let (value, bindings) = match rhs.find('(') {
        Some(open) => {
            let inner = rhs[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Context(format!("unclosed attribute list in `{dim_name}={rhs}`")))?;
            (rhs[..open].trim(), Some(inner))
        }
        None => (rhs, None),
    };
    if value.is_empty() {
        return Err(Error::Context(format!("missing value for `{dim_name}`")));
    }

    if let Some(attr) = dim.value_shorthand() {
        if bindings.is_some() {
            return Err(Error::Context(format!(
                "`{dim_name}` takes a literal for attribute `{}`, not an attribute list",
                attr.name
            )));
        }
        return Ok(ContextElement {
            dimension_path: path,
            value: unquote(value).to_string(),
            attribute_bindings: BTreeMap::new(),
        });
    }

    let value = value.to_ascii_lowercase();
    let concept = dim
        .children_of_kind(NodeKind::Concept)
        .find(|c| c.name == value)
        .ok_or_else(|| {
            let options: Vec<_> = dim.children.iter().map(|c| c.name.as_str()).collect();
            Error::Context(format!(
                "`{value}` is not a value of `{dim_name}` (expected one of {})",
                options.join(", ")
            ))
        })?;

    let mut attribute_bindings = BTreeMap::new();
    if let Some(inner) = bindings {
        for binding in split_top_level(inner, ',')? {
            let binding = binding.trim();
            if binding.is_empty() {
                continue;
            }
            let (name, literal) = binding.split_once('=').ok_or_else(|| {
                Error::Context(format!(
                    "attribute binding `{binding}` is not of the form name=value"
                ))
            })?;
            let name = name.trim().to_ascii_lowercase();
            if concept
                .children_of_kind(NodeKind::Attribute)
                .all(|a| a.name != name)
            {
                return Err(Error::Context(format!(
                    "`{}` has no attribute `{name}`",
                    concept.name
                )));
            }
            if attribute_bindings
                .insert(name.clone(), unquote(literal.trim()).to_string())
                .is_some()
            {
                return Err(Error::Context(format!("attribute `{name}` bound twice")));
            }
        }
    }
    for attr in concept.children_of_kind(NodeKind::Attribute) {
        if !attribute_bindings.contains_key(&attr.name) {
            return Err(Error::Context(format!(
                "`{dim_name}={}` requires a binding for attribute `{}`",
                concept.name, attr.name
            )));
        }
    }
    Ok(ContextElement {
        dimension_path: path,
        value,
        attribute_bindings,
    })
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(s)
}

/// Splits on `sep` outside of parentheses and double quotes.
fn split_top_level(text: &str, sep: char) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut quoted = false;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Context(format!("unbalanced `)` in `{text}`")))?
            }
            c if c == sep && depth == 0 && !quoted => {
                parts.push(&text[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 || quoted {
        return Err(Error::Context(format!(
            "unbalanced parentheses or quotes in `{text}`"
        )));
    }
    parts.push(&text[start..]);
    Ok(parts)
}

/// A selected ethical facet plus the columns it governs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EthicalRequirement {
    /// Concept names from the facet dimension down to a leaf, e.g. `[fairness, equity]`.
    pub facet_path: Vec<String>,
    pub affected_attributes: Vec<String>,
}

impl EthicalRequirement {
    /// Resolves a facet (`fairness.equity`, `fairness/equity` or a bare
    /// unambiguous leaf such as `equity`) and affected attributes against an ERT.
    ///
    /// The facet dimension is the root dimension named `ethical_facets` (or
    /// `facets`), falling back to the first root dimension. When the ERT has
    /// an `affected_attribute` dimension, every affected column must name
    /// one of its values (case, underscores and hyphens ignored).
    pub fn resolve(facet: &str, affected: &[String], ert: &Node) -> Result<Self> {
        let facets_dim = ert
            .children_of_kind(NodeKind::Dimension)
            .find(|d| matches!(d.name.as_str(), "ethical_facets" | "facets" | "ethical_facet"))
            .or_else(|| ert.children_of_kind(NodeKind::Dimension).next())
            .ok_or_else(|| Error::Context("ERT has no facet dimension".into()))?;

        let segments: Vec<String> = facet
            .split(['.', '/'])
            .map(|s| s.trim().to_ascii_lowercase())
            .collect();
        if segments.iter().any(String::is_empty) {
            return Err(Error::Context(format!("malformed facet `{facet}`")));
        }

        let mut candidates: Vec<(Vec<String>, Vec<String>, bool)> = Vec::new();
        collect_facets(facets_dim, &mut Vec::new(), &mut Vec::new(), &mut candidates);
        let matches: Vec<_> = candidates
            .iter()
            .filter(|(concepts, full, _)| concepts.ends_with(&segments) || full.ends_with(&segments))
            .collect();
        let facet_path = match matches.as_slice() {
            [] => return Err(Error::Context(format!("unknown ethical facet `{facet}`"))),
            [(concepts, _, true)] => concepts.clone(),
            [(concepts, _, false)] => {
                return Err(Error::Context(format!(
                    "facet `{}` is not a leaf; choose one of its specializations",
                    concepts.join("/")
                )))
            }
            many => {
                let options: Vec<_> = many.iter().map(|(c, _, _)| c.join("/")).collect();
                return Err(Error::Context(format!(
                    "ambiguous facet `{facet}`: {}",
                    options.join(", ")
                )));
            }
        };

        if affected.is_empty() {
            return Err(Error::Context(format!(
                "facet `{}` requires at least one affected attribute",
                facet_path.join("/")
            )));
        }
        if let Some(attr_dim) = ert
            .children_of_kind(NodeKind::Dimension)
            .find(|d| matches!(d.name.as_str(), "affected_attribute" | "affected_attributes"))
        {
            for column in affected {
                let wanted = normalize(column);
                if attr_dim.children.iter().all(|c| normalize(&c.name) != wanted) {
                    return Err(Error::Context(format!(
                        "`{column}` is not an affected attribute of the ERT"
                    )));
                }
            }
        }
        Ok(EthicalRequirement {
            facet_path,
            affected_attributes: affected.to_vec(),
        })
    }

    pub fn facet(&self) -> String {
        self.facet_path.join("/")
    }

    pub fn primary_attribute(&self) -> &str {
        &self.affected_attributes[0]
    }
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Walks the facet dimension, recording each concept's concept-only path,
/// its full path (dimensions included) and whether it is a leaf.
fn collect_facets(
    dim: &Node,
    concepts: &mut Vec<String>,
    full: &mut Vec<String>,
    out: &mut Vec<(Vec<String>, Vec<String>, bool)>,
) {
    full.push(dim.name.clone());
    for concept in dim.children_of_kind(NodeKind::Concept) {
        concepts.push(concept.name.clone());
        full.push(concept.name.clone());
        let subdims: Vec<_> = concept.children_of_kind(NodeKind::Dimension).collect();
        out.push((concepts.clone(), full.clone(), subdims.is_empty()));
        for sub in subdims {
            collect_facets(sub, concepts, full, out);
        }
        full.pop();
        concepts.pop();
    }
    full.pop();
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EthicalContext {
    pub context: Context,
    pub requirement: EthicalRequirement,
}

impl EthicalContext {
    pub fn combine(context: Context, requirement: EthicalRequirement) -> Self {
        EthicalContext { context, requirement }
    }
}

impl fmt::Display for EthicalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] + {} on {}",
            self.context,
            self.requirement.facet(),
            self.requirement.affected_attributes.join(", ")
        )
    }
}
