use serde::Serialize;

use super::TransformKind;
use crate::error::{Error, Result};
use crate::tree::EthicalContext;

/// `rule action=<v|*> facet=<path|*> attr=<name|*> -> <kind>`; `None`
/// stands for a wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransformRule {
    pub action: Option<String>,
    pub facet: Option<Vec<String>>,
    pub attr: Option<String>,
    pub kind: TransformKind,
}

impl TransformRule {
    pub fn new(action: &str, facet: &str, attr: &str, kind: TransformKind) -> Self {
        let wild = |s: &str| (s != "*").then(|| s.to_ascii_lowercase());
        TransformRule {
            action: wild(action),
            facet: wild(facet).map(|f| f.split(['.', '/']).map(str::to_string).collect()),
            attr: wild(attr),
            kind,
        }
    }

    pub fn specificity(&self) -> usize {
        usize::from(self.action.is_some())
            + usize::from(self.facet.is_some())
            + usize::from(self.attr.is_some())
    }

    pub fn matches(&self, ec: &EthicalContext) -> bool {
        let action_ok = match &self.action {
            None => true,
            Some(a) => ec.context.value_of("action") == Some(a.as_str()),
        };
        let facet_ok = match &self.facet {
            None => true,
            Some(f) => ec.requirement.facet_path.ends_with(f),
        };
        let attr_ok = match &self.attr {
            None => true,
            Some(a) => normalize(ec.requirement.primary_attribute()) == normalize(a),
        };
        action_ok && facet_ok && attr_ok
    }
}

impl std::fmt::Display for TransformRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rule action={} facet={} attr={} -> {}",
            self.action.as_deref().unwrap_or("*"),
            self.facet.as_ref().map_or("*".to_string(), |p| p.join(".")),
            self.attr.as_deref().unwrap_or("*"),
            self.kind
        )
    }
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn parse_rules(text: &str) -> Result<Vec<TransformRule>> {
    let mut rules: Vec<TransformRule> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let syntax = |message: String| Error::Syntax { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let body = content
            .strip_prefix("rule")
            .filter(|rest| rest.starts_with(char::is_whitespace))
            .ok_or_else(|| syntax("expected a line starting with `rule`".into()))?;
        let (lhs, kind) = body
            .split_once("->")
            .ok_or_else(|| syntax("missing `-> <kind>`".into()))?;
        let kind: TransformKind = kind.trim().parse().map_err(|e: Error| syntax(e.to_string()))?;
        let (mut action, mut facet, mut attr) = (None, None, None);
        for part in lhs.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| syntax(format!("`{part}` is not key=value")))?;
            let slot = match key {
                "action" => &mut action,
                "facet" => &mut facet,
                "attr" => &mut attr,
                other => return Err(syntax(format!("unknown rule field `{other}`"))),
            };
            if slot.replace(value.to_string()).is_some() {
                return Err(syntax(format!("`{key}` given twice")));
            }
        }
        let rule = TransformRule::new(
            action.as_deref().unwrap_or("*"),
            facet.as_deref().unwrap_or("*"),
            attr.as_deref().unwrap_or("*"),
            kind,
        );
        if rule.specificity() == 3
            && rules.iter().any(|r| {
                r.specificity() == 3
                    && r.action == rule.action
                    && r.facet == rule.facet
                    && r.attr == rule.attr
            })
        {
            return Err(syntax(format!(
                "a rule for action={} facet={} attr={} already exists",
                action.unwrap_or_default(),
                facet.unwrap_or_default(),
                attr.unwrap_or_default()
            )));
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Rules for the personnel-management ethical contexts.
pub fn default_rules() -> Vec<TransformRule> {
    use TransformKind::*;
    vec![
        TransformRule::new("promotion", "fairness.equity", "gender", RepairOversample),
        TransformRule::new("promotion", "fairness.equality", "gender", Suppression),
        TransformRule::new("promotion", "fairness.equity", "famsituation", Reweighting),
        TransformRule::new("dismissal", "diversity", "gender", DiversitySelect),
        TransformRule::new("recruitment", "privacy", "race", Suppression),
    ]
}

/// Most specific matching rule; the earlier rule wins among equals.
pub fn select_rule<'a>(ec: &EthicalContext, rules: &'a [TransformRule]) -> Result<&'a TransformRule> {
    let mut best: Option<&TransformRule> = None;
    for rule in rules.iter().filter(|r| r.matches(ec)) {
        if best.is_none_or(|b| rule.specificity() > b.specificity()) {
            best = Some(rule);
        }
    }
    best.ok_or_else(|| Error::NoRule(ec.to_string()))
}

pub fn select_transform(ec: &EthicalContext, rules: &[TransformRule]) -> Result<TransformKind> {
    select_rule(ec, rules).map(|r| r.kind)
}
