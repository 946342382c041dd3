//! Browser playground for the rebalancing arithmetic of ethica.
//!
//! Each exported function takes plain strings or numbers and returns a JSON
//! document, so the page needs no bundler. The `*_json` functions hold the
//! logic and are tested natively; the exports only map errors to exceptions.

use ethica_core::analysis::{disparity, GroupCount, GroupProfile};
use ethica_core::relation::Value;
use ethica_core::transforms::{
    manager_ratio_factor, priority_split, replication_factor, ManagerFormula, Share,
};
use rust_decimal::Decimal;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Replication factor for the clerk counts plus both manager-ratio variants.
pub fn repair_plan_json(bmc: u32, bfc: u32, mm: u32, fm: u32) -> Result<String, String> {
    let (bmc, bfc) = (bmc as usize, bfc as usize);
    let p = replication_factor(bmc, bfc).map_err(|e| e.to_string())?;
    let factor = |formula| manager_ratio_factor(mm as usize, fm as usize, formula).ok();
    Ok(json!({
        "p": p,
        "disadvantaged_after": bfc * (1 + p),
        "advantaged": bmc,
        "total_after": bmc + bfc * (1 + p),
        "manager_literal": factor(ManagerFormula::Literal),
        "manager_proportional": factor(ManagerFormula::Proportional),
    })
    .to_string())
}

/// Parses `facet=percent` entries separated by commas or newlines.
fn parse_shares(text: &str) -> Result<Vec<Share>, String> {
    text.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (facet, pct) = entry
                .split_once('=')
                .ok_or_else(|| format!("`{entry}` is not of the form facet=percent"))?;
            let pct: Decimal = pct
                .trim()
                .trim_end_matches('%')
                .parse()
                .map_err(|_| format!("`{}` is not a percentage", pct.trim()))?;
            Ok(Share::new(facet.trim(), pct))
        })
        .collect()
}

/// Largest-remainder allocation of `n` positions across facet shares.
pub fn split_json(n: u32, shares: &str) -> Result<String, String> {
    let shares = parse_shares(shares)?;
    let alloc = priority_split(u64::from(n), &shares).map_err(|e| e.to_string())?;
    let rows: Vec<_> = alloc
        .shares
        .iter()
        .zip(&alloc.counts)
        .map(|(s, c)| {
            json!({
                "facet": s.facet,
                "percent": s.percent.normalize().to_string(),
                "quota": (Decimal::from(n) * s.percent / Decimal::ONE_HUNDRED).normalize().to_string(),
                "count": c,
            })
        })
        .collect();
    Ok(json!({ "n": n, "allocation": rows }).to_string())
}

/// Four-fifths check over `group=count` entries.
pub fn disparity_json(groups: &str, threshold: f64) -> Result<String, String> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(format!("threshold {threshold} is outside (0, 1]"));
    }
    let groups = groups
        .split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (value, count) = entry
                .split_once('=')
                .ok_or_else(|| format!("`{entry}` is not of the form group=count"))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| format!("`{}` is not a count", count.trim()))?;
            Ok(GroupCount {
                value: Value::Text(value.trim().to_string()),
                count,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let report = disparity(
        &GroupProfile {
            attribute: "group".into(),
            groups,
        },
        threshold,
    );
    let name = |g: &Option<GroupCount>| g.as_ref().map(|g| g.value.to_string());
    Ok(json!({
        "ratio": report.ratio,
        "flagged": report.flagged,
        "threshold": report.threshold,
        "smallest": name(&report.min_group),
        "largest": name(&report.max_group),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn repair_plan(bmc: u32, bfc: u32, mm: u32, fm: u32) -> Result<String, JsError> {
    repair_plan_json(bmc, bfc, mm, fm).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn split(n: u32, shares: &str) -> Result<String, JsError> {
    split_json(n, shares).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn disparity_check(groups: &str, threshold: f64) -> Result<String, JsError> {
    disparity_json(groups, threshold).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value as Json;

    fn parse(s: String) -> Json {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn desk_repair_plan() {
        let plan = parse(repair_plan_json(12, 4, 10, 2).unwrap());
        assert_eq!(plan["p"], 2);
        assert_eq!(plan["disadvantaged_after"], 12);
        assert_eq!(plan["total_after"], 24);
        assert_eq!(plan["manager_literal"], 1);
        assert_eq!(plan["manager_proportional"], 4);
    }

    #[test]
    fn repair_without_disadvantaged_rows_fails() {
        assert!(repair_plan_json(5, 0, 1, 1).is_err());
        let plan = parse(repair_plan_json(5, 1, 3, 0).unwrap());
        assert_eq!(plan["manager_proportional"], Json::Null);
    }

    #[test]
    fn split_sixty_forty() {
        let out = parse(split_json(10, "fairness/equity=60, diversity=40%").unwrap());
        let counts: Vec<_> = out["allocation"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["count"].clone())
            .collect();
        assert_eq!(counts, [6, 4]);
        let out = parse(split_json(5, "a=60\nb=40").unwrap());
        assert_eq!(out["allocation"][0]["count"], 3);
        assert_eq!(out["allocation"][0]["quota"], "3");
    }

    #[test]
    fn split_rejects_bad_totals() {
        assert!(split_json(10, "a=60, b=30").is_err());
        assert!(split_json(10, "a=sixty").is_err());
    }

    #[test]
    fn disparity_of_managers() {
        let out = parse(disparity_json("m=10, f=2", 0.8).unwrap());
        assert_eq!(out["ratio"], 0.2);
        assert_eq!(out["flagged"], true);
        assert_eq!(out["smallest"], "f");
        let out = parse(disparity_json("m=5, f=4", 0.8).unwrap());
        assert_eq!(out["flagged"], false);
        assert!(disparity_json("m=5", 1.5).is_err());
        assert!(disparity_json("m", 0.8).is_err());
    }
}
