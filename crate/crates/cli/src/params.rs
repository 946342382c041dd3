//! TOML parameter files.

use std::path::Path;
use std::str::FromStr;

use ethica_core::pipeline::{read_text, Params, RankerChoice, RepairMode};
use ethica_core::transforms::{ManagerFormula, Share, ValueWeight};
use ethica_core::{Error, Result};
use rust_decimal::Decimal;
use serde::Deserialize;

/// A number written either bare or quoted.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Integer(i64),
    Float(f64),
    Text(String),
}

impl Number {
    pub fn to_decimal(&self, what: &str) -> Result<Decimal> {
        let text = match self {
            Number::Integer(i) => return Ok(Decimal::from(*i)),
            Number::Float(f) => f.to_string(),
            Number::Text(s) => s.trim().to_string(),
        };
        Decimal::from_str(&text).map_err(|e| Error::Param(format!("{what} `{text}`: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub column: String,
    pub value: String,
    pub weight: Number,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareEntry {
    pub facet: String,
    pub percent: Number,
    pub attribute: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub score: Option<String>,
    pub pmin: Option<Number>,
    pub disadvantaged: Option<String>,
    pub target: Option<String>,
    pub reference: Option<String>,
    pub disparity_threshold: Option<f64>,
    pub assoc_threshold: Option<f64>,
    pub materialize: Option<bool>,
    pub class: Option<String>,
    pub ranker: Option<String>,
    pub k: Option<usize>,
    pub n: Option<u64>,
    pub repair: Option<String>,
    pub formula: Option<String>,
    #[serde(default)]
    pub weights: Vec<WeightEntry>,
    #[serde(default)]
    pub shares: Vec<ShareEntry>,
}

impl ParamFile {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::Param(msg) => Error::Param(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Param(e.to_string()))
    }

    pub fn into_params(self) -> Result<Params> {
        let defaults = Params::default();
        let repair = parse_repair(self.repair.as_deref(), self.formula.as_deref())?;
        Ok(Params {
            score: self.score,
            pmin: self.pmin.map(|p| p.to_decimal("pmin")).transpose()?,
            disadvantaged: self.disadvantaged,
            target: self.target,
            reference: self.reference,
            disparity_threshold: self.disparity_threshold.unwrap_or(defaults.disparity_threshold),
            assoc_threshold: self.assoc_threshold.unwrap_or(defaults.assoc_threshold),
            weights: self
                .weights
                .iter()
                .map(|w| {
                    Ok(ValueWeight::new(
                        &w.column,
                        &w.value,
                        w.weight.to_decimal("weight")?,
                    ))
                })
                .collect::<Result<_>>()?,
            materialize: self.materialize.unwrap_or(false),
            class: self.class,
            ranker: self
                .ranker
                .as_deref()
                .map(RankerChoice::from_str)
                .transpose()?
                .unwrap_or_default(),
            k: self.k,
            n: self.n,
            shares: self
                .shares
                .iter()
                .map(|s| {
                    let share = Share::new(&s.facet, s.percent.to_decimal("share percent")?);
                    Ok(match &s.attribute {
                        Some(a) => share.on(a),
                        None => share,
                    })
                })
                .collect::<Result<_>>()?,
            repair,
        })
    }
}

pub fn parse_repair(mode: Option<&str>, formula: Option<&str>) -> Result<RepairMode> {
    let formula = formula.map(ManagerFormula::from_str).transpose()?;
    match mode {
        None | Some("oversample") if formula.is_none() => Ok(RepairMode::Oversample),
        None | Some("manager_ratio") => Ok(RepairMode::ManagerRatio(formula.unwrap_or_default())),
        Some("oversample") => Err(Error::Param(
            "`formula` applies only to manager_ratio repair".into(),
        )),
        Some(other) => Err(Error::Param(format!(
            "unknown repair mode `{other}` (oversample, manager_ratio)"
        ))),
    }
}

/// `facet=percent` or `facet=percent:attribute`.
pub fn parse_share(text: &str) -> Result<Share> {
    let (facet, rest) = text
        .split_once('=')
        .ok_or_else(|| Error::Param(format!("share `{text}` must look like facet=percent[:attribute]")))?;
    let (percent, attribute) = match rest.split_once(':') {
        Some((p, a)) => (p, Some(a.trim())),
        None => (rest, None),
    };
    let percent =
        Decimal::from_str(percent.trim()).map_err(|e| Error::Param(format!("share `{text}`: {e}")))?;
    let share = Share::new(facet.trim(), percent);
    Ok(match attribute {
        Some(a) => share.on(a),
        None => share,
    })
}

/// `column=value:weight`.
pub fn parse_weight(text: &str) -> Result<ValueWeight> {
    let bad = || Error::Param(format!("weight `{text}` must look like column=value:weight"));
    let (column, rest) = text.split_once('=').ok_or_else(bad)?;
    let (value, weight) = rest.rsplit_once(':').ok_or_else(bad)?;
    let weight = Decimal::from_str(weight.trim()).map_err(|_| bad())?;
    Ok(ValueWeight::new(column.trim(), value.trim(), weight))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_params_file() {
        let text = r#"
score = "Performance"
pmin = 3.5
disadvantaged = "f"
[[weights]]
column = "FamSituation"
value = "widowed"
weight = 2.0
[[shares]]
facet = "fairness/equity"
percent = 60
[[shares]]
facet = "diversity"
percent = "40"
attribute = "department"
"#;
        let p = ParamFile::parse(text).unwrap().into_params().unwrap();
        assert_eq!(p.pmin, Some(Decimal::new(35, 1)));
        assert_eq!(p.weights[0].weight, Decimal::new(2, 0));
        assert_eq!(p.shares[1].percent, Decimal::new(40, 0));
        assert_eq!(p.shares[1].attribute.as_deref(), Some("department"));
        assert_eq!(p.repair, RepairMode::Oversample);
        assert_eq!(p.disparity_threshold, 0.8);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_numbers() {
        assert!(ParamFile::parse("pmn = 3").is_err());
        assert!(ParamFile::parse("pmin = \"high\"")
            .unwrap()
            .into_params()
            .is_err());
        assert!(ParamFile::parse("ranker = \"svm\"")
            .unwrap()
            .into_params()
            .is_err());
    }

    #[test]
    fn repair_modes() {
        assert_eq!(parse_repair(None, None).unwrap(), RepairMode::Oversample);
        assert_eq!(
            parse_repair(Some("manager_ratio"), None).unwrap(),
            RepairMode::ManagerRatio(ManagerFormula::Literal)
        );
        assert_eq!(
            parse_repair(None, Some("proportional")).unwrap(),
            RepairMode::ManagerRatio(ManagerFormula::Proportional)
        );
        assert!(parse_repair(Some("oversample"), Some("literal")).is_err());
        assert!(parse_repair(Some("smote"), None).is_err());
    }

    #[test]
    fn flag_syntax() {
        let s = parse_share("fairness/equity=60").unwrap();
        assert_eq!(
            (s.facet.as_str(), s.percent),
            ("fairness/equity", Decimal::new(60, 0))
        );
        let s = parse_share("diversity=40:department").unwrap();
        assert_eq!(s.attribute.as_deref(), Some("department"));
        assert!(parse_share("diversity").is_err());
        let w = parse_weight("FamSituation=widowed:2.0").unwrap();
        assert_eq!((w.column.as_str(), w.value.as_str()), ("FamSituation", "widowed"));
        assert!(parse_weight("FamSituation=widowed").is_err());
    }
}
