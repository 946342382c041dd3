//! Append-only audit records of analysis and transformation runs.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{AssociationScore, DisparityReport, GroupCount};
use crate::error::{Error, Result};
use crate::tree::EthicalContext;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSummary {
    /// Canonical `dim=value; ...` rendering.
    pub context: String,
    pub facet: String,
    pub affected: Vec<String>,
}

impl From<&EthicalContext> for ContextSummary {
    fn from(ec: &EthicalContext) -> Self {
        ContextSummary {
            context: ec.context.to_string(),
            facet: ec.requirement.facet(),
            affected: ec.requirement.affected_attributes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub value: String,
    pub count: usize,
}

impl From<&GroupCount> for GroupSummary {
    fn from(g: &GroupCount) -> Self {
        GroupSummary {
            value: g.value.to_string(),
            count: g.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparitySummary {
    pub table: String,
    pub attribute: String,
    pub groups: Vec<GroupSummary>,
    pub min_group: Option<GroupSummary>,
    pub max_group: Option<GroupSummary>,
    pub ratio: f64,
    pub threshold: f64,
    pub flagged: bool,
}

impl DisparitySummary {
    pub fn new(table: &str, groups: &[GroupCount], report: &DisparityReport) -> Self {
        DisparitySummary {
            table: table.to_string(),
            attribute: report.attribute.clone(),
            groups: groups.iter().map(GroupSummary::from).collect(),
            min_group: report.min_group.as_ref().map(GroupSummary::from),
            max_group: report.max_group.as_ref().map(GroupSummary::from),
            ratio: report.ratio,
            threshold: report.threshold,
            flagged: report.flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationSummary {
    pub table: String,
    pub protected: String,
    pub column: String,
    pub metric: String,
    pub value: f64,
}

impl AssociationSummary {
    pub fn new(table: &str, score: &AssociationScore) -> Self {
        let metric = serde_json::to_value(score.metric)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        AssociationSummary {
            table: table.to_string(),
            protected: score.column_a.clone(),
            column: score.column_b.clone(),
            metric,
            value: score.value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub disparities: Vec<DisparitySummary>,
    pub associations: Vec<AssociationSummary>,
}

/// One transformation decision: the rule that fired, the kind it selected
/// and every parameter that influenced the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub facet: String,
    pub attribute: String,
    pub kind: String,
    pub rule: Option<String>,
    /// Positions allotted to this step under a priority split.
    pub positions: Option<u64>,
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub before: BTreeMap<String, usize>,
    pub after: BTreeMap<String, usize>,
}

/// Everything a pipeline run reports before it is stamped into a record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ethical_context: Option<ContextSummary>,
    pub view: Option<String>,
    pub input_tables: Vec<String>,
    pub input_hash: Option<String>,
    pub analysis: AnalysisSummary,
    /// Run-level parameters (thresholds, shares, N).
    pub params: BTreeMap<String, serde_json::Value>,
    pub transforms: Vec<TransformSummary>,
    pub row_counts: RowCounts,
    pub columns_removed: Vec<String>,
    pub warnings: Vec<String>,
    /// SHA-256 of the emitted CSV bytes.
    pub output_hash: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub id: String,
    pub timestamp: String,
    #[serde(flatten)]
    pub run: RunSummary,
    pub explanation: Vec<String>,
}

impl ProvenanceRecord {
    /// Sequence number encoded in the id.
    pub fn sequence(&self) -> Option<u64> {
        self.id.rsplit_once('-').and_then(|(_, s)| s.parse().ok())
    }
}

/// Digest of a run's inputs and decisions, independent of time and sequence.
pub fn run_digest(run: &RunSummary) -> String {
    let bytes = serde_json::to_vec(run).expect("run summary serializes");
    hex::encode(&Sha256::digest(&bytes)[..6])
}

/// Stamps a run into a record. Infallible so that recording never fails a run.
pub fn record(run: RunSummary, sequence: u64, at: DateTime<Utc>) -> ProvenanceRecord {
    let id = format!("{}-{sequence:06}", run_digest(&run));
    let explanation = sentences(&run);
    ProvenanceRecord {
        id,
        timestamp: at.to_rfc3339_opts(SecondsFormat::Secs, true),
        run,
        explanation,
    }
}

/// Reads every record of a JSON-Lines log; a missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Syntax {
                line: i + 1,
                message: format!("provenance log {}: {e}", path.display()),
            })
        })
        .collect()
}

/// Records `run` as the next entry of the log at `path`.
pub fn append(path: &Path, run: RunSummary, at: DateTime<Utc>) -> Result<ProvenanceRecord> {
    let sequence = read_log(path)?
        .iter()
        .filter_map(ProvenanceRecord::sequence)
        .max()
        .unwrap_or(0)
        + 1;
    let rec = record(run, sequence, at);
    let mut line = serde_json::to_string(&rec).expect("record serializes");
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(rec)
}

/// [`append`] stamped with the current time.
pub fn append_now(path: &Path, run: RunSummary) -> Result<ProvenanceRecord> {
    append(path, run, Utc::now())
}

/// Looks a record up by full id, then sequence number, then unambiguous id prefix.
pub fn find<'a>(records: &'a [ProvenanceRecord], id: &str) -> Option<&'a ProvenanceRecord> {
    if id.is_empty() {
        return None;
    }
    if let Some(r) = records.iter().find(|r| r.id == id) {
        return Some(r);
    }
    if let Ok(seq) = id.parse::<u64>() {
        if let Some(r) = records.iter().find(|r| r.sequence() == Some(seq)) {
            return Some(r);
        }
    }
    let mut hits = records.iter().filter(|r| r.id.starts_with(id));
    match (hits.next(), hits.next()) {
        (Some(r), None) => Some(r),
        _ => None,
    }
}

/// Deterministic English rendering of a record.
pub fn explain(rec: &ProvenanceRecord) -> String {
    let mut out = format!("Record {} ({}).\n", rec.id, rec.timestamp);
    for line in sentences(&rec.run) {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn sentences(run: &RunSummary) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(ec) = &run.ethical_context {
        let context = if ec.context.is_empty() {
            "(empty)"
        } else {
            &ec.context
        };
        out.push(format!("Context: {context}."));
        out.push(format!(
            "Ethical requirement: {} on {}.",
            ec.facet,
            ec.affected.join(", ")
        ));
    }
    if let Some(view) = &run.view {
        let counts: Vec<String> = run
            .row_counts
            .before
            .iter()
            .map(|(label, n)| format!("{label} has {n} rows"))
            .collect();
        let mut line = format!("View {view} was evaluated");
        if let Some(hash) = &run.input_hash {
            line.push_str(&format!(
                " over inputs {} (sha256 {hash})",
                run.input_tables.join(", ")
            ));
        }
        if !counts.is_empty() {
            line.push_str(&format!("; {}", counts.join(", ")));
        }
        line.push('.');
        out.push(line);
    }
    for d in &run.analysis.disparities {
        let groups: Vec<String> = d
            .groups
            .iter()
            .map(|g| format!("{}={}", g.value, g.count))
            .collect();
        let verdict = if d.flagged {
            format!("below the threshold {}, flagged", number(d.threshold))
        } else {
            format!("not below the threshold {}", number(d.threshold))
        };
        out.push(format!(
            "Disparity of {} in {}: groups {}, ratio {} ({verdict}).",
            d.attribute,
            d.table,
            groups.join(", "),
            number(d.ratio)
        ));
    }
    for a in &run.analysis.associations {
        out.push(format!(
            "Column {} in {} is associated with {} ({} {}).",
            a.column,
            a.table,
            a.protected,
            a.metric,
            number(a.value)
        ));
    }
    if !run.params.is_empty() {
        out.push(format!("Run parameters: {}.", render_params(&run.params)));
    }
    for t in &run.transforms {
        let mut line = match &t.rule {
            Some(rule) => format!(
                "Rule `{rule}` selected {} for {} on {}",
                t.kind, t.facet, t.attribute
            ),
            None => format!(
                "Transformation {} was applied for {} on {}",
                t.kind, t.facet, t.attribute
            ),
        };
        if let Some(n) = t.positions {
            line.push_str(&format!(" over {n} positions"));
        }
        if !t.params.is_empty() {
            line.push_str(&format!(" with {}", render_params(&t.params)));
        }
        line.push('.');
        out.push(line);
    }
    if !run.columns_removed.is_empty() {
        out.push(format!("Columns removed: {}.", run.columns_removed.join(", ")));
    }
    for w in &run.warnings {
        out.push(format!("Warning: {w}."));
    }
    if let Some(err) = &run.error {
        out.push(format!("The run failed: {err}. No Ethical View was produced."));
    } else if !run.row_counts.after.is_empty() {
        let counts: Vec<String> = run
            .row_counts
            .after
            .iter()
            .map(|(label, n)| format!("{label} has {n} rows"))
            .collect();
        out.push(format!("Output: {}.", counts.join(", ")));
    }
    out
}

fn render_params(params: &BTreeMap<String, serde_json::Value>) -> String {
    params
        .iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => format!("{k}={s}"),
            serde_json::Value::Number(n) => match n.as_f64() {
                Some(f) if !n.is_i64() && !n.is_u64() => format!("{k}={}", number(f)),
                _ => format!("{k}={n}"),
            },
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Fixed four-decimal rendering with trailing zeros trimmed.
fn number(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use serde_json::json;

    fn repair_run() -> RunSummary {
        let mut params = BTreeMap::new();
        params.insert("p".to_string(), json!(2));
        params.insert("pmin".to_string(), json!("3.5"));
        RunSummary {
            ethical_context: Some(ContextSummary {
                context: "action=promotion; role=clerk".into(),
                facet: "fairness/equity".into(),
                affected: vec!["gender".into()],
            }),
            view: Some("promotion".into()),
            input_tables: vec!["EMPLOYEE".into(), "PERSON".into()],
            input_hash: Some("ab".repeat(32)),
            analysis: AnalysisSummary {
                disparities: vec![DisparitySummary {
                    table: "E2".into(),
                    attribute: "Gender".into(),
                    groups: vec![
                        GroupSummary {
                            value: "m".into(),
                            count: 10,
                        },
                        GroupSummary {
                            value: "f".into(),
                            count: 2,
                        },
                    ],
                    min_group: Some(GroupSummary {
                        value: "f".into(),
                        count: 2,
                    }),
                    max_group: Some(GroupSummary {
                        value: "m".into(),
                        count: 10,
                    }),
                    ratio: 0.2,
                    threshold: 0.8,
                    flagged: true,
                }],
                associations: vec![],
            },
            params: BTreeMap::new(),
            transforms: vec![TransformSummary {
                facet: "fairness/equity".into(),
                attribute: "gender".into(),
                kind: "repair_oversample".into(),
                rule: Some(
                    "rule action=promotion facet=fairness.equity attr=gender -> repair_oversample".into(),
                ),
                positions: None,
                params,
            }],
            row_counts: RowCounts {
                before: [("E1".to_string(), 40), ("E2".to_string(), 12)].into(),
                after: [("EV".to_string(), 24)].into(),
            },
            columns_removed: vec![],
            warnings: vec![],
            output_hash: None,
            error: None,
        }
    }

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
    }

    #[test]
    fn repair_explanation_names_ratio_rule_and_p() {
        let text = explain(&record(repair_run(), 1, at()));
        assert!(text.contains("ratio 0.2 "), "{text}");
        assert!(
            text.contains("facet=fairness.equity attr=gender -> repair_oversample"),
            "{text}"
        );
        assert!(text.contains("p=2"), "{text}");
        assert!(text.contains("Output: EV has 24 rows."), "{text}");
    }

    #[test]
    fn identical_records_identical_text() {
        let a = record(repair_run(), 3, at());
        let b = record(repair_run(), 3, at());
        assert_eq!(a, b);
        assert_eq!(explain(&a), explain(&b));
        assert_eq!(a.timestamp, "2024-05-01T12:00:00Z");
        assert_eq!(a.sequence(), Some(3));
    }

    #[test]
    fn failure_is_explained() {
        let mut run = repair_run();
        run.error = Some("no qualifying rows in the disadvantaged group".into());
        run.row_counts.after.clear();
        let text = explain(&record(run, 1, at()));
        assert!(text.contains("The run failed: no qualifying rows"), "{text}");
        assert!(!text.contains("Output:"));
    }

    #[test]
    fn log_round_trip_with_increasing_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let first = append(&path, repair_run(), at()).unwrap();
        let second = append(&path, repair_run(), at()).unwrap();
        assert!(second.sequence() > first.sequence());
        assert_ne!(first.id, second.id);
        let log = read_log(&path).unwrap();
        assert_eq!(log, vec![first.clone(), second]);
        assert_eq!(find(&log, &first.id), Some(&first));
        assert_eq!(find(&log, "nope"), None);
        assert_eq!(find(&log, "1"), Some(&first));
        assert_eq!(find(&log, "000001"), Some(&first));
        assert_eq!(find(&log, ""), None);
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn numbers_render_compactly() {
        assert_eq!(number(0.2), "0.2");
        assert_eq!(number(1.0), "1");
        assert_eq!(number(0.816496580927726), "0.8165");
        assert_eq!(number(-0.00001), "0");
    }
}
