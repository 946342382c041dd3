//! Context Dimension Trees and Ethical Requirements Trees.
//!
//! Both trees share one node taxonomy: a single root, dimension nodes
//! below it, concept nodes (the values a dimension can take) below
//! dimensions, and attribute leaves hanging off dimensions or concepts.
//! Trees are written in a small indentation-based format:
//!
//! ```text
//! root work
//!   dim action
//!     val promotion
//!     val recruitment
//!   dim institution
//!     val public
//!       attr name
//! ```

mod context;

pub use context::{Context, ContextElement, EthicalContext, EthicalRequirement};

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

const INDENT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Dimension,
    Concept,
    Attribute,
}

impl NodeKind {
    fn keyword(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Dimension => "dim",
            NodeKind::Concept => "val",
            NodeKind::Attribute => "attr",
        }
    }

    fn from_keyword(kw: &str) -> Option<Self> {
        match kw {
            "root" => Some(NodeKind::Root),
            "dim" => Some(NodeKind::Dimension),
            "val" => Some(NodeKind::Concept),
            "attr" => Some(NodeKind::Attribute),
            _ => None,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Dimension => "dimension",
            NodeKind::Concept => "concept",
            NodeKind::Attribute => "attribute",
        }
    }
}

/// Preorder position of a node within its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, name: &str) -> Self {
        Node {
            id: NodeId(0),
            kind,
            name: name.to_ascii_lowercase(),
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<Node>) -> Self {
        self.children = children;
        self
    }

    /// Reassigns ids in preorder, starting from zero at `self`.
    pub fn renumber(&mut self) {
        fn walk(node: &mut Node, next: &mut usize) {
            node.id = NodeId(*next);
            *next += 1;
            for child in &mut node.children {
                walk(child, next);
            }
        }
        let mut next = 0;
        walk(self, &mut next);
    }

    pub fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn children_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.children.iter().filter(move |c| c.kind == kind)
    }

    /// The single attribute child of a dimension used in place of
    /// enumerated concept values, if any.
    pub fn value_shorthand(&self) -> Option<&Node> {
        if self.kind != NodeKind::Dimension {
            return None;
        }
        match self.children.as_slice() {
            [only] if only.kind == NodeKind::Attribute => Some(only),
            _ => None,
        }
    }

    /// Every dimension node in the tree together with its path of names,
    /// starting below the root and ending at the dimension itself.
    pub fn dimensions(&self) -> Vec<(Vec<String>, &Node)> {
        fn walk<'a>(node: &'a Node, path: &mut Vec<String>, out: &mut Vec<(Vec<String>, &'a Node)>) {
            for child in &node.children {
                if child.kind == NodeKind::Attribute {
                    continue;
                }
                path.push(child.name.clone());
                if child.kind == NodeKind::Dimension {
                    out.push((path.clone(), child));
                }
                walk(child, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Resolves a path of names below this node.
    pub fn descend(&self, path: &[String]) -> Option<&Node> {
        path.iter().try_fold(self, |node, name| node.child(name))
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(Node::count).sum::<usize>()
    }

    /// Checks every structural invariant of the node taxonomy.
    pub fn validate(&self) -> Result<()> {
        if self.kind != NodeKind::Root {
            return Err(Error::Tree(format!(
                "top node `{}` is a {}, expected root",
                self.name,
                self.kind.describe()
            )));
        }
        self.validate_node()
    }

    fn validate_node(&self) -> Result<()> {
        if !is_token(&self.name) {
            return Err(Error::Tree(format!("invalid node name `{}`", self.name)));
        }
        check_child_kinds(self.kind, &self.name, self.children.iter().map(|c| c.kind))?;
        let mut seen = HashSet::new();
        for child in &self.children {
            if !seen.insert(child.name.as_str()) {
                return Err(Error::Tree(format!(
                    "duplicate sibling `{}` under `{}`",
                    child.name, self.name
                )));
            }
        }
        if self.kind == NodeKind::Dimension {
            if self.children.is_empty() {
                return Err(Error::Tree(format!("dimension `{}` has no values", self.name)));
            }
            let attrs = self.children_of_kind(NodeKind::Attribute).count();
            if attrs > 0 && (attrs > 1 || self.children.len() > 1) {
                return Err(Error::Tree(format!(
                    "dimension `{}` mixes concept values with an attribute shorthand; use either concepts or a single attribute",
                    self.name
                )));
            }
        }
        self.children.iter().try_for_each(Node::validate_node)
    }

    /// Renders the tree back into the indentation format.
    pub fn to_dsl(&self) -> String {
        fn walk(node: &Node, depth: usize, out: &mut String) {
            out.push_str(&" ".repeat(depth * INDENT));
            out.push_str(node.kind.keyword());
            out.push(' ');
            out.push_str(&node.name);
            out.push('\n');
            for child in &node.children {
                walk(child, depth + 1, out);
            }
        }
        let mut out = String::new();
        walk(self, 0, &mut out);
        out
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

fn check_child_kinds(
    parent: NodeKind,
    parent_name: &str,
    kinds: impl Iterator<Item = NodeKind>,
) -> Result<()> {
    for kind in kinds {
        if let Some(message) = child_kind_violation(parent, kind) {
            return Err(Error::Tree(format!("{message} (under `{parent_name}`)")));
        }
    }
    Ok(())
}

fn child_kind_violation(parent: NodeKind, child: NodeKind) -> Option<String> {
    let allowed = match parent {
        NodeKind::Root => child == NodeKind::Dimension,
        NodeKind::Dimension => matches!(child, NodeKind::Concept | NodeKind::Attribute),
        NodeKind::Concept => matches!(child, NodeKind::Dimension | NodeKind::Attribute),
        NodeKind::Attribute => false,
    };
    if allowed {
        return None;
    }
    Some(match (parent, child) {
        (NodeKind::Attribute, _) => "attribute nodes are leaves and cannot have children".to_string(),
        (_, NodeKind::Root) => "root may only appear once, at the top".to_string(),
        (p, c) => format!("a {} cannot be a child of a {}", c.describe(), p.describe()),
    })
}

/// Lowercase identifier: letters, digits and underscores, not starting with a digit.
pub(crate) fn is_token(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parses a tree from its indentation-based source.
pub fn parse_tree(text: &str) -> Result<Node> {
    // Open nodes from the root down to the most recent line.
    let mut stack: Vec<(Node, usize)> = Vec::new();
    let mut root: Option<Node> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |message: String| Error::Syntax {
            line: line_no,
            message,
        };
        let trimmed = raw.trim_end();
        let content = trimmed.trim_start();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let indent = &trimmed[..trimmed.len() - content.len()];
        if indent.contains('\t') {
            return Err(syntax("tabs are not allowed in indentation".into()));
        }
        if indent.len() % INDENT != 0 {
            return Err(syntax(format!(
                "indentation of {} spaces is not a multiple of {INDENT}",
                indent.len()
            )));
        }
        let depth = indent.len() / INDENT;

        let mut words = content.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        let kind = NodeKind::from_keyword(keyword)
            .ok_or_else(|| syntax(format!("unknown keyword `{keyword}`, expected root/dim/val/attr")))?;
        let name = words
            .next()
            .ok_or_else(|| syntax(format!("`{keyword}` needs a name")))?
            .to_ascii_lowercase();
        if let Some(extra) = words.next() {
            return Err(syntax(format!("unexpected `{extra}` after node name")));
        }
        if !is_token(&name) {
            return Err(syntax(format!(
                "invalid name `{name}`: use lowercase letters, digits and underscores"
            )));
        }

        if depth == 0 {
            if kind != NodeKind::Root {
                return Err(syntax(format!(
                    "top-level node must be `root`, found {} `{name}`",
                    kind.describe()
                )));
            }
            if root.is_some() || !stack.is_empty() {
                return Err(syntax("a tree has exactly one root".into()));
            }
        } else if stack.is_empty() {
            return Err(syntax("indented node before any root".into()));
        }
        if depth > stack.len() {
            return Err(syntax(format!(
                "indentation jumps to depth {depth}; expected at most {}",
                stack.len()
            )));
        }
        while stack.len() > depth {
            close_top(&mut stack, &mut root)?;
        }
        if let Some((parent, _)) = stack.last() {
            if let Some(message) = child_kind_violation(parent.kind, kind) {
                return Err(syntax(format!(
                    "{message}: {} `{name}` under {} `{}`",
                    kind.describe(),
                    parent.kind.describe(),
                    parent.name
                )));
            }
            if parent.child(&name).is_some() {
                return Err(syntax(format!(
                    "duplicate sibling `{name}` under `{}`",
                    parent.name
                )));
            }
        }
        stack.push((Node::new(kind, &name), line_no));
    }
    while !stack.is_empty() {
        close_top(&mut stack, &mut root)?;
    }
    let mut root = root.ok_or_else(|| Error::Syntax {
        line: 1,
        message: "empty tree: expected a `root` line".into(),
    })?;
    root.renumber();
    root.validate()?;
    Ok(root)
}

fn close_top(stack: &mut Vec<(Node, usize)>, root: &mut Option<Node>) -> Result<()> {
    let (node, line) = stack.pop().expect("stack is non-empty");
    if node.kind == NodeKind::Dimension {
        let attrs = node.children_of_kind(NodeKind::Attribute).count();
        let message = if node.children.is_empty() {
            Some(format!("dimension `{}` has no values", node.name))
        } else if attrs > 0 && node.children.len() > 1 {
            Some(format!(
                "dimension `{}` mixes concept values with an attribute shorthand",
                node.name
            ))
        } else {
            None
        };
        if let Some(message) = message {
            return Err(Error::Syntax { line, message });
        }
    }
    match stack.last_mut() {
        Some((parent, _)) => parent.children.push(node),
        None => *root = Some(node),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ERT: &str = "\
root ethics
  dim ethical_facets
    val privacy
    val transparency
    val diversity
    val fairness
      dim kind
        val equity
        val equality
  dim affected_attribute
    val gender
    val race
";

    #[test]
    fn minimal_tree() {
        let tree = parse_tree("root work\n  dim action\n    val promotion\n    val recruitment").unwrap();
        assert_eq!(tree.kind, NodeKind::Root);
        assert_eq!(tree.children.len(), 1);
        let action = &tree.children[0];
        assert_eq!(action.kind, NodeKind::Dimension);
        let names: Vec<_> = action.children.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["promotion", "recruitment"]);
        assert!(action.children.iter().all(|c| c.kind == NodeKind::Concept));
        assert_eq!(tree.count(), 4);
        assert_eq!(action.children[1].id, NodeId(3));
    }

    #[test]
    fn ert_facets() {
        let tree = parse_tree(ERT).unwrap();
        let facets = tree.child("ethical_facets").unwrap();
        let names: Vec<_> = facets.children.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["privacy", "transparency", "diversity", "fairness"]);
        let kinds = facets.child("fairness").unwrap().child("kind").unwrap();
        let names: Vec<_> = kinds.children.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["equity", "equality"]);
    }

    #[test]
    fn concept_under_root_rejected() {
        let err = parse_tree("root r\n  val orphan").unwrap_err();
        match err {
            Error::Syntax { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("concept"), "{message}");
                assert!(message.contains("root"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn attribute_with_children_rejected() {
        let err = parse_tree("root r\n  dim d\n    val v\n      attr a\n        val x").unwrap_err();
        assert!(err.to_string().contains("leaves"), "{err}");
    }

    #[test]
    fn structural_errors() {
        for (text, needle) in [
            ("", "empty tree"),
            ("dim a", "must be `root`"),
            ("root a\nroot b", "exactly one root"),
            ("root a\n   dim b", "multiple of 2"),
            ("root a\n\tdim b", "tabs"),
            ("root a\n    dim b", "jumps"),
            ("root a\n  dim b\n    val c\n    val c", "duplicate sibling"),
            ("root a\n  dim b", "no values"),
            ("root a\n  dim b\n    val c\n    attr d", "mixes"),
            ("root a\n  node b", "unknown keyword"),
            ("root a\n  dim", "needs a name"),
            ("root a\n  dim b-c\n    val x", "invalid name"),
            ("root a\n  dim b c\n    val x", "unexpected"),
            (
                "root a\n  dim d\n    val v\n      val w",
                "concept cannot be a child of a concept",
            ),
        ] {
            let err = parse_tree(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn comments_blank_lines_and_case() {
        let tree = parse_tree("# header\nroot Work\n\n  # dims\n  dim Action\n    val Promotion\n").unwrap();
        assert_eq!(tree.name, "work");
        assert_eq!(tree.children[0].children[0].name, "promotion");
    }

    #[test]
    fn shorthand_and_dimensions() {
        let tree = parse_tree(
            "root w\n  dim role\n    attr title\n  dim inst\n    val private\n      dim sector\n        val industry\n",
        )
        .unwrap();
        assert!(tree.child("role").unwrap().value_shorthand().is_some());
        assert!(tree.child("inst").unwrap().value_shorthand().is_none());
        let paths: Vec<_> = tree.dimensions().into_iter().map(|(p, _)| p.join(".")).collect();
        assert_eq!(paths, ["role", "inst", "inst.private.sector"]);
    }

    #[test]
    fn dsl_round_trip() {
        let tree = parse_tree(ERT).unwrap();
        assert_eq!(parse_tree(&tree.to_dsl()).unwrap(), tree);
    }

    #[test]
    fn validate_hand_built() {
        let good =
            Node::new(NodeKind::Root, "r")
                .with_children(vec![Node::new(NodeKind::Dimension, "d")
                    .with_children(vec![Node::new(NodeKind::Concept, "v")])]);
        good.validate().unwrap();
        let bad = Node::new(NodeKind::Root, "r").with_children(vec![Node::new(NodeKind::Concept, "v")]);
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("concept cannot be a child of a root"));
    }
}
