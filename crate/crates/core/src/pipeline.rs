//! Orchestration: resolve a context, analyze its view, and produce an
//! Ethical View together with the run summary that provenance records.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{disparity, group_cardinalities, DisparityReport, GroupProfile};
use crate::error::{Error, Result};
use crate::provenance::{AssociationSummary, DisparitySummary, RunSummary, TransformSummary};
use crate::relation::{load_database, Database, Table, Value};
use crate::transforms::{
    apportion, diversity_order, equality_order, massage, materialize_weights, parse_rules, priority_split,
    repair_manager_ratio, repair_oversample, reweight, select_rule, suppress, top_k, value_for, EthicalView,
    ManagerFormula, MassageOutcome, NaiveBayesRanker, Ranker, RepairOutcome, ScoreRanker, Share,
    TransformKind, TransformRule, ValueWeight, WEIGHT_COLUMN,
};
use crate::tree::{parse_tree, Context, EthicalContext, EthicalRequirement, Node};
use crate::views::{match_binding, materialize, parse_registry, ContextualView, ViewBinding};

/// Name given to the emitted Ethical View table.
pub const EV_NAME: &str = "EV";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_tree(path: &Path) -> Result<Node> {
    let tree = parse_tree(&read_text(path)?)?;
    tree.validate()?;
    Ok(tree)
}

pub fn load_registry(path: &Path, cdt: &Node) -> Result<Vec<ViewBinding>> {
    parse_registry(&read_text(path)?, cdt)
}

pub fn load_rules(path: &Path) -> Result<Vec<TransformRule>> {
    parse_rules(&read_text(path)?)
}

/// Everything a transformation run reads.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cdt: Node,
    pub ert: Node,
    pub db: Database,
    pub registry: Vec<ViewBinding>,
    pub rules: Vec<TransformRule>,
}

impl Workspace {
    pub fn load(
        cdt: &Path,
        ert: &Path,
        data: &Path,
        manifest: &Path,
        views: &Path,
        rules: &Path,
    ) -> Result<Self> {
        let cdt = load_tree(cdt)?;
        let ert = load_tree(ert)?;
        let db = load_database(data, manifest)?;
        let registry = load_registry(views, &cdt)?;
        let rules = load_rules(rules)?;
        Ok(Workspace {
            cdt,
            ert,
            db,
            registry,
            rules,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerChoice {
    #[default]
    Score,
    NaiveBayes,
}

impl FromStr for RankerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(RankerChoice::Score),
            "naive_bayes" => Ok(RankerChoice::NaiveBayes),
            other => Err(Error::Param(format!(
                "unknown ranker `{other}` (score, naive_bayes)"
            ))),
        }
    }
}

impl fmt::Display for RankerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankerChoice::Score => "score",
            RankerChoice::NaiveBayes => "naive_bayes",
        })
    }
}

/// How `repair_oversample` rules compute the number of copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepairMode {
    #[default]
    Oversample,
    ManagerRatio(ManagerFormula),
}

/// Runtime parameters of a transformation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Numeric column used for qualification and ranking.
    pub score: Option<String>,
    /// Qualification threshold: rows need `score > pmin`.
    pub pmin: Option<Decimal>,
    /// Disadvantaged group value; defaults to the smallest group of the reference table.
    pub disadvantaged: Option<String>,
    /// Label of the table to transform; defaults to the view's first label.
    pub target: Option<String>,
    /// Label of the table whose imbalance motivates the repair.
    pub reference: Option<String>,
    pub disparity_threshold: f64,
    pub assoc_threshold: f64,
    pub weights: Vec<ValueWeight>,
    /// Replicate rows by weight instead of emitting a weight column.
    pub materialize: bool,
    /// Boolean label column for massaging.
    pub class: Option<String>,
    pub ranker: RankerChoice,
    pub k: Option<usize>,
    /// Number of positions to fill.
    pub n: Option<u64>,
    /// Facet priorities; non-empty switches to priority-split mode.
    pub shares: Vec<Share>,
    pub repair: RepairMode,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            score: None,
            pmin: None,
            disadvantaged: None,
            target: None,
            reference: None,
            disparity_threshold: crate::analysis::DEFAULT_DISPARITY_THRESHOLD,
            assoc_threshold: crate::analysis::DEFAULT_ASSOC_THRESHOLD,
            weights: Vec::new(),
            materialize: false,
            class: None,
            ranker: RankerChoice::Score,
            k: None,
            n: None,
            shares: Vec::new(),
            repair: RepairMode::Oversample,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.disparity_threshold > 0.0 && self.disparity_threshold <= 1.0) {
            return Err(Error::Param(format!(
                "disparity threshold {} outside (0, 1]",
                self.disparity_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.assoc_threshold) {
            return Err(Error::Param(format!(
                "association threshold {} outside [0, 1]",
                self.assoc_threshold
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| w.weight <= Decimal::ZERO) {
            return Err(Error::Param(format!(
                "weight for {}={} must be positive",
                w.column, w.value
            )));
        }
        Ok(())
    }

    fn score(&self, kind: TransformKind) -> Result<&str> {
        self.score
            .as_deref()
            .ok_or_else(|| Error::Param(format!("{kind} needs a score column")))
    }

    fn pmin(&self) -> Result<Decimal> {
        self.pmin
            .ok_or_else(|| Error::Param("repair needs a qualification threshold pmin".into()))
    }
}

/// Parses a context and finds the view binding that serves it.
pub fn resolve<'a>(
    cdt: &Node,
    registry: &'a [ViewBinding],
    context: &str,
) -> Result<(Context, &'a ViewBinding)> {
    let context = Context::parse(context, cdt)?;
    let binding = match_binding(registry, &context)?;
    Ok((context, binding))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableAnalysis {
    pub label: String,
    pub rows: usize,
    pub profiles: Vec<GroupProfile>,
    pub disparities: Vec<DisparityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub context: String,
    pub view: String,
    pub input_hash: String,
    pub threshold: f64,
    pub tables: Vec<TableAnalysis>,
}

impl AnalysisReport {
    pub fn flagged(&self) -> bool {
        self.tables.iter().flat_map(|t| &t.disparities).any(|d| d.flagged)
    }
}

/// Group profiles and disparity checks of every affected attribute in
/// every labeled table that has it.
pub fn analyze(view: &ContextualView, affected: &[String], threshold: f64) -> Result<AnalysisReport> {
    if affected.is_empty() {
        return Err(Error::Param("at least one affected attribute is required".into()));
    }
    let mut tables = Vec::new();
    let mut seen = vec![false; affected.len()];
    for (label, table) in &view.tables {
        let mut profiles = Vec::new();
        for (i, attr) in affected.iter().enumerate() {
            if table.schema.contains(attr) {
                seen[i] = true;
                profiles.push(group_cardinalities(table, attr)?);
            }
        }
        let disparities = profiles.iter().map(|p| disparity(p, threshold)).collect();
        tables.push(TableAnalysis {
            label: label.clone(),
            rows: table.len(),
            profiles,
            disparities,
        });
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Analysis(format!(
            "affected attribute `{}` is absent from every table of view {}",
            affected[i], view.view
        )));
    }
    Ok(AnalysisReport {
        context: view.context.to_string(),
        view: view.view.clone(),
        input_hash: view.source_hash.clone(),
        threshold,
        tables,
    })
}

#[derive(Debug, Clone)]
pub struct TransformRequest<'a> {
    pub context: &'a str,
    /// Facet path; under a priority split it defaults to the first share's facet.
    pub facet: Option<&'a str>,
    pub affected: &'a [String],
    pub params: &'a Params,
}

#[derive(Debug)]
pub struct TransformResult {
    pub view: Option<EthicalView>,
    pub run: RunSummary,
    pub error: Option<Error>,
}

/// Runs the whole pipeline. Failures are reported in both `error` and the
/// run summary so that they can be recorded.
pub fn transform(ws: &Workspace, req: &TransformRequest<'_>) -> TransformResult {
    let mut run = RunSummary::default();
    match run_pipeline(ws, req, &mut run) {
        Ok(view) => {
            let csv = view.table.to_csv();
            run.output_hash = Some(hex::encode(Sha256::digest(&csv)));
            run.row_counts.after.insert(EV_NAME.to_string(), view.table.len());
            TransformResult {
                view: Some(view),
                run,
                error: None,
            }
        }
        Err(e) => {
            run.error = Some(e.to_string());
            TransformResult {
                view: None,
                run,
                error: Some(e),
            }
        }
    }
}

fn run_pipeline(ws: &Workspace, req: &TransformRequest<'_>, run: &mut RunSummary) -> Result<EthicalView> {
    let params = req.params;
    params.validate()?;
    let context = Context::parse(req.context, &ws.cdt)?;
    let facet = req
        .facet
        .map(str::to_string)
        .or_else(|| params.shares.first().map(|s| s.facet.clone()))
        .ok_or_else(|| Error::Param("an ethical facet is required".into()))?;
    let requirement = EthicalRequirement::resolve(&facet, req.affected, &ws.ert)?;
    let ec = EthicalContext::combine(context.clone(), requirement);
    run.ethical_context = Some((&ec).into());

    let binding = match_binding(&ws.registry, &context)?;
    run.view = Some(binding.name.clone());
    run.input_tables = binding.base_tables().into_iter().collect();
    let view = materialize(&ws.db, binding, &context)?;
    run.input_hash = Some(view.source_hash.clone());
    for (label, table) in &view.tables {
        run.row_counts.before.insert(label.clone(), table.len());
    }
    run.params
        .insert("disparity_threshold".into(), json!(params.disparity_threshold));
    run.params
        .insert("assoc_threshold".into(), json!(params.assoc_threshold));

    let report = analyze(&view, req.affected, params.disparity_threshold)?;
    for t in &report.tables {
        for (profile, d) in t.profiles.iter().zip(&t.disparities) {
            run.analysis
                .disparities
                .push(DisparitySummary::new(&t.label, &profile.groups, d));
        }
    }

    let label = match &params.target {
        Some(label) => label.clone(),
        None => view.tables[0].0.clone(),
    };
    let target = view
        .table(&label)
        .ok_or_else(|| Error::Param(format!("view {} has no table labeled `{label}`", view.view)))?;
    if params.target.is_some() || view.tables.len() > 1 {
        run.params.insert("target".into(), json!(target.name));
    }

    let env = Env {
        view: &view,
        target,
        params,
    };
    let (mut table, weight_column, kind, parameters) = if params.shares.is_empty() {
        single(ws, &env, &ec, run)?
    } else {
        split(ws, &env, &context, &ec, run)?
    };
    table.name = EV_NAME.to_string();
    Ok(EthicalView {
        table,
        weight_column,
        transform: kind,
        parameters,
        provenance_id: None,
    })
}

struct Env<'a> {
    view: &'a ContextualView,
    target: &'a Table,
    params: &'a Params,
}

type Emitted = (
    Table,
    Option<String>,
    TransformKind,
    BTreeMap<String, serde_json::Value>,
);

fn step_for(ec: &EthicalContext, attribute: &str, rule: &TransformRule) -> TransformSummary {
    TransformSummary {
        facet: ec.requirement.facet(),
        attribute: attribute.to_string(),
        kind: rule.kind.to_string(),
        rule: Some(rule.to_string()),
        positions: None,
        params: BTreeMap::new(),
    }
}

fn single(ws: &Workspace, env: &Env<'_>, ec: &EthicalContext, run: &mut RunSummary) -> Result<Emitted> {
    let rule = select_rule(ec, &ws.rules)?;
    let mut step = step_for(ec, ec.requirement.primary_attribute(), rule);
    let applied = apply(
        rule.kind,
        env,
        &ec.requirement.affected_attributes,
        &mut step,
        run,
    );
    let parameters = step.params.clone();
    run.transforms.push(step);
    let (table, weight_column) = applied?;
    Ok((table, weight_column, rule.kind, parameters))
}

fn apply(
    kind: TransformKind,
    env: &Env<'_>,
    affected: &[String],
    step: &mut TransformSummary,
    run: &mut RunSummary,
) -> Result<(Table, Option<String>)> {
    let p = env.params;
    let target = env.target;
    let attr = &affected[0];
    match kind {
        TransformKind::Suppression => {
            step.params
                .insert("assoc_threshold".into(), json!(p.assoc_threshold));
            let mut table = target.clone();
            for attr in affected {
                if !table.schema.contains(attr) {
                    continue;
                }
                let removed = suppress_into(&table, attr, p.assoc_threshold, run)?;
                let keep: Vec<usize> = (0..table.schema.len())
                    .filter(|&i| !removed.contains(&table.schema.column(i).name))
                    .collect();
                table = table.select_columns(&keep)?;
            }
            step.params.insert("removed".into(), json!(run.columns_removed));
            Ok((table, None))
        }
        TransformKind::RepairOversample => {
            let out = repair(env, target, attr, step)?;
            Ok((out.table, None))
        }
        TransformKind::Reweighting => {
            step.params.insert("weights".into(), json!(p.weights));
            step.params.insert("materialize".into(), json!(p.materialize));
            let weighted = reweight(target, &p.weights)?;
            if p.materialize {
                let (table, warnings) = materialize_weights(&weighted)?;
                run.warnings.extend(warnings);
                Ok((table, None))
            } else {
                Ok((weighted, Some(WEIGHT_COLUMN.to_string())))
            }
        }
        TransformKind::Massaging => {
            let out = massage_with(env, target, attr, step)?;
            Ok((out.table, None))
        }
        TransformKind::EqualityRank => {
            let score = p.score(kind)?;
            step.params.insert("score".into(), json!(score));
            let mut ranked = crate::transforms::equality_rank(target, score)?;
            if let Some(k) = p.k.or(p.n.map(|n| n as usize)) {
                step.params.insert("k".into(), json!(k));
                ranked = top_k(&ranked, k);
            }
            Ok((ranked, None))
        }
        TransformKind::DiversitySelect => {
            let score = p.score(kind)?;
            let k = p.k.or(p.n.map(|n| n as usize)).unwrap_or(target.len());
            step.params.insert("score".into(), json!(score));
            step.params.insert("k".into(), json!(k));
            step.params
                .insert("protected".into(), json!(column_name(target, attr)?));
            let order = diversity_order(target, score, k, attr)?;
            Ok((rows_at(target, &order), None))
        }
    }
}

/// Suppresses `attr` in `table`, logging removed columns and the
/// associations behind them. Returns the removed column names.
fn suppress_into(table: &Table, attr: &str, threshold: f64, run: &mut RunSummary) -> Result<Vec<String>> {
    let out = suppress(table, attr, threshold)?;
    let mut hits: Vec<_> = out.scores.iter().filter(|s| s.value >= threshold).collect();
    hits.sort_by(|a, b| b.value.total_cmp(&a.value));
    run.analysis
        .associations
        .extend(hits.into_iter().map(|s| AssociationSummary::new(&table.name, s)));
    for name in &out.removed {
        if !run.columns_removed.contains(name) {
            run.columns_removed.push(name.clone());
        }
    }
    Ok(out.removed)
}

fn repair(env: &Env<'_>, table: &Table, attr: &str, step: &mut TransformSummary) -> Result<RepairOutcome> {
    let p = env.params;
    let score = p.score(TransformKind::RepairOversample)?;
    let pmin = p.pmin()?;
    let protected = column_name(table, attr)?;
    let dis = disadvantaged(env, table, attr)?;
    step.params.insert("score".into(), json!(score));
    step.params
        .insert("pmin".into(), json!(pmin.normalize().to_string()));
    step.params.insert("protected".into(), json!(protected));
    step.params.insert("disadvantaged".into(), json!(dis.to_string()));
    let out = match p.repair {
        RepairMode::Oversample => {
            step.params.insert("repair".into(), json!("oversample"));
            repair_oversample(table, attr, &dis, score, pmin)
        }
        RepairMode::ManagerRatio(formula) => {
            step.params.insert("repair".into(), json!("manager_ratio"));
            step.params.insert(
                "formula".into(),
                json!(match formula {
                    ManagerFormula::Literal => "literal",
                    ManagerFormula::Proportional => "proportional",
                }),
            );
            let reference = reference_table(env)?;
            step.params.insert("reference".into(), json!(reference.name));
            repair_manager_ratio(table, reference, attr, &dis, score, pmin, formula)
        }
    }?;
    step.params.insert("bmc".into(), json!(out.advantaged));
    step.params.insert("bfc".into(), json!(out.disadvantaged));
    step.params.insert("p".into(), json!(out.replicas));
    Ok(out)
}

fn massage_with(
    env: &Env<'_>,
    table: &Table,
    attr: &str,
    step: &mut TransformSummary,
) -> Result<MassageOutcome> {
    let p = env.params;
    let class = p
        .class
        .as_deref()
        .ok_or_else(|| Error::Param("massaging needs a class column".into()))?;
    let dis = disadvantaged(env, table, attr)?;
    step.params.insert("class".into(), json!(class));
    step.params.insert("ranker".into(), json!(p.ranker.to_string()));
    step.params.insert("disadvantaged".into(), json!(dis.to_string()));
    let ranker: Box<dyn Ranker> = match p.ranker {
        RankerChoice::Score => {
            let score = p.score(TransformKind::Massaging)?;
            step.params.insert("score".into(), json!(score));
            Box::new(ScoreRanker::new(score))
        }
        RankerChoice::NaiveBayes => Box::new(NaiveBayesRanker),
    };
    let out = massage(table, class, attr, &dis, ranker.as_ref())?;
    step.params.insert("k".into(), json!(out.k));
    step.params.insert(
        "rates_before".into(),
        json!([out.rates_before.0, out.rates_before.1]),
    );
    step.params.insert(
        "rates_after".into(),
        json!([out.rates_after.0, out.rates_after.1]),
    );
    Ok(out)
}

fn column_name(table: &Table, attr: &str) -> Result<String> {
    Ok(table.schema.column(table.column_index(attr)?).name.clone())
}

fn rows_at(table: &Table, order: &[usize]) -> Table {
    table.with_rows(order.iter().map(|&i| table.rows[i].clone()).collect())
}

fn reference_table<'a>(env: &Env<'a>) -> Result<&'a Table> {
    let label = env
        .params
        .reference
        .as_deref()
        .ok_or_else(|| Error::Param("manager-ratio repair needs a reference table".into()))?;
    env.view
        .table(label)
        .ok_or_else(|| Error::Param(format!("view {} has no table labeled `{label}`", env.view.view)))
}

/// The configured disadvantaged value, or else the smallest group of the
/// reference table (the target when no reference is set or it lacks the
/// attribute).
fn disadvantaged(env: &Env<'_>, table: &Table, attr: &str) -> Result<Value> {
    if let Some(raw) = &env.params.disadvantaged {
        return value_for(table, attr, raw);
    }
    let source = env
        .params
        .reference
        .as_deref()
        .and_then(|l| env.view.table(l))
        .filter(|t| t.schema.contains(attr))
        .unwrap_or(table);
    let profile = group_cardinalities(source, attr)?;
    let groups: Vec<_> = profile
        .groups
        .into_iter()
        .filter(|g| !g.value.is_null())
        .collect();
    if groups.len() < 2 {
        return Err(Error::Param(format!(
            "cannot infer a disadvantaged value of {attr} from {} group(s) in {}",
            groups.len(),
            source.name
        )));
    }
    let min = groups.iter().min_by_key(|g| g.count).expect("groups non-empty");
    Ok(min.value.clone())
}

fn split(
    ws: &Workspace,
    env: &Env<'_>,
    context: &Context,
    ec: &EthicalContext,
    run: &mut RunSummary,
) -> Result<Emitted> {
    let p = env.params;
    let n =
        p.n.ok_or_else(|| Error::Param("a priority split needs the number of positions n".into()))?;
    run.params.insert("n".into(), json!(n));
    run.params.insert("shares".into(), json!(p.shares));
    let allocation = priority_split(n, &p.shares)?;
    let target = env.target;
    let mut remaining: Vec<usize> = (0..target.len()).collect();
    let mut picked: Vec<usize> = Vec::new();
    let mut suppressed: Vec<String> = Vec::new();
    let mut first_kind = None;

    for (share, &count) in allocation.shares.iter().zip(&allocation.counts) {
        let attr = share
            .attribute
            .clone()
            .unwrap_or_else(|| ec.requirement.primary_attribute().to_string());
        let requirement = EthicalRequirement::resolve(&share.facet, std::slice::from_ref(&attr), &ws.ert)?;
        let share_ec = EthicalContext::combine(context.clone(), requirement);
        let rule = select_rule(&share_ec, &ws.rules)?;
        first_kind.get_or_insert(rule.kind);
        let mut step = step_for(&share_ec, &attr, rule);
        step.positions = Some(count);
        let pool = rows_at(target, &remaining);
        let chosen = choose(
            rule.kind,
            env,
            &pool,
            count as usize,
            &attr,
            &mut step,
            run,
            &mut suppressed,
        );
        run.transforms.push(step);
        let ids: Vec<usize> = chosen?.into_iter().map(|j| remaining[j]).collect();
        remaining.retain(|i| !ids.contains(i));
        picked.extend(ids);
    }

    let keep: Vec<usize> = (0..target.schema.len())
        .filter(|&i| !suppressed.contains(&target.schema.column(i).name))
        .collect();
    let table = rows_at(target, &picked).select_columns(&keep)?;
    let kind = first_kind.expect("shares are non-empty");
    Ok((table, None, kind, run.params.clone()))
}

/// Picks up to `count` distinct rows of `pool` for one facet of a split,
/// returning positions in `pool`.
#[allow(clippy::too_many_arguments)]
fn choose(
    kind: TransformKind,
    env: &Env<'_>,
    pool: &Table,
    count: usize,
    attr: &str,
    step: &mut TransformSummary,
    run: &mut RunSummary,
    suppressed: &mut Vec<String>,
) -> Result<Vec<usize>> {
    let p = env.params;
    let count = count.min(pool.len());
    let by_score = |t: &Table| -> Result<Vec<usize>> {
        match &p.score {
            Some(score) => equality_order(t, score),
            None => Ok((0..t.len()).collect()),
        }
    };
    let chosen = match kind {
        TransformKind::EqualityRank => {
            let score = p.score(kind)?;
            step.params.insert("score".into(), json!(score));
            equality_order(pool, score)?.into_iter().take(count).collect()
        }
        TransformKind::DiversitySelect => {
            let score = p.score(kind)?;
            step.params.insert("score".into(), json!(score));
            step.params
                .insert("protected".into(), json!(column_name(pool, attr)?));
            diversity_order(pool, score, count, attr)?
        }
        TransformKind::Suppression => {
            step.params
                .insert("assoc_threshold".into(), json!(p.assoc_threshold));
            let removed = suppress_into(env.target, attr, p.assoc_threshold, run)?;
            step.params.insert("removed".into(), json!(removed));
            for name in removed {
                if !suppressed.contains(&name) {
                    suppressed.push(name);
                }
            }
            by_score(pool)?.into_iter().take(count).collect()
        }
        TransformKind::RepairOversample => {
            let out = repair(env, pool, attr, step)?;
            let score = p.score(kind)?;
            let pmin = p.pmin()?;
            let a = pool.column_index(attr)?;
            let s = pool.column_index(score)?;
            let groups = group_cardinalities(&out.table, attr)?.groups;
            let quotas = apportion(
                count as u64,
                &groups
                    .iter()
                    .map(|g| Decimal::from(g.count as u64))
                    .collect::<Vec<_>>(),
            );
            let mut positions = BTreeMap::new();
            for (g, q) in groups.iter().zip(&quotas) {
                positions.insert(g.value.to_string(), json!(q));
            }
            step.params.insert("group_positions".into(), json!(positions));

            let ranked = equality_order(pool, score)?;
            let qualifies = |i: usize| pool.rows[i][s].as_decimal().is_some_and(|v| v > pmin);
            let mut chosen: Vec<usize> = Vec::new();
            for (g, &q) in groups.iter().zip(&quotas) {
                let members = ranked
                    .iter()
                    .copied()
                    .filter(|&i| qualifies(i) && pool.rows[i][a] == g.value)
                    .take(q as usize);
                chosen.extend(members);
            }
            // Groups short of qualifying rows cede their positions by score.
            let fill: Vec<usize> = ranked
                .iter()
                .copied()
                .filter(|&i| qualifies(i))
                .chain(ranked.iter().copied())
                .collect();
            for i in fill {
                if chosen.len() >= count {
                    break;
                }
                if !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
            let rank_of = |i: usize| ranked.iter().position(|&r| r == i);
            chosen.sort_by_key(|&i| rank_of(i));
            chosen
        }
        TransformKind::Reweighting => {
            step.params.insert("weights".into(), json!(p.weights));
            let weighted = reweight(pool, &p.weights)?;
            let w = weighted.column_index(WEIGHT_COLUMN)?;
            let mut order = by_score(pool)?;
            order.sort_by(|&x, &y| {
                let wx = weighted.rows[x][w].as_decimal().unwrap_or_default();
                let wy = weighted.rows[y][w].as_decimal().unwrap_or_default();
                wy.cmp(&wx)
            });
            order.into_iter().take(count).collect()
        }
        TransformKind::Massaging => {
            let out = massage_with(env, pool, attr, step)?;
            let c = out.table.column_index(p.class.as_deref().unwrap_or_default())?;
            let mut order = by_score(pool)?;
            order.sort_by_key(|&i| out.table.rows[i][c] != Value::Boolean(true));
            order.into_iter().take(count).collect()
        }
    };
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{Column, ColumnType, Schema};
    use crate::transforms::parse_rules;

    const CDT: &str = "root work\n  dim action\n    val promotion\n    val dismissal\n  dim role\n    val clerk\n    val manager\n";
    const ERT: &str = "root ethics\n  dim ethical_facets\n    val privacy\n    val diversity\n    val fairness\n      dim kind\n        val equity\n        val equality\n  dim affected_attribute\n    val gender\n    val department\n";
    const VIEWS: &str = "view promotion\nwhen action=promotion; role=clerk\ndef E1 = select(STAFF, Role = \"clerk\")\ndef E2 = select(STAFF, Role = \"manager\")\n";
    const RULES: &str = "\
rule action=promotion facet=fairness.equity attr=gender -> repair_oversample
rule action=promotion facet=fairness.equality attr=gender -> suppression
rule action=* facet=diversity attr=* -> diversity_select
rule action=* facet=privacy attr=* -> suppression
";

    /// Clerks: 6 m and 3 f above 3.5; managers 4 m, 1 f.
    fn workspace() -> Workspace {
        let schema = Schema::new(
            vec![
                Column::new("pID", ColumnType::Text),
                Column::new("Role", ColumnType::Text),
                Column::new("Gender", ColumnType::Text),
                Column::new("Department", ColumnType::Text),
                Column::new("Performance", ColumnType::Decimal),
            ],
            vec!["pID".into()],
        )
        .unwrap();
        let mut rows = Vec::new();
        let mut add = |role: &str, gender: &str, dept: &str, perf: &str| {
            let id = format!("p{:02}", rows.len());
            rows.push(vec![
                Value::Text(id),
                Value::Text(role.into()),
                Value::Text(gender.into()),
                Value::Text(dept.into()),
                Value::Decimal(perf.parse().unwrap()),
            ]);
        };
        for (i, perf) in ["4.9", "4.5", "4.1", "3.9", "3.7", "3.6", "2.0", "3.5"]
            .iter()
            .enumerate()
        {
            add("clerk", "m", if i % 2 == 0 { "hr" } else { "it" }, perf);
        }
        for (i, perf) in ["4.8", "4.0", "3.8", "1.5"].iter().enumerate() {
            add("clerk", "f", if i % 2 == 0 { "hr" } else { "it" }, perf);
        }
        for _ in 0..4 {
            add("manager", "m", "hr", "4.0");
        }
        add("manager", "f", "it", "4.0");
        let mut db = Database::new();
        db.insert(Table::new("STAFF", schema, rows).unwrap()).unwrap();
        let cdt = parse_tree(CDT).unwrap();
        Workspace {
            registry: parse_registry(VIEWS, &cdt).unwrap(),
            ert: parse_tree(ERT).unwrap(),
            cdt,
            db,
            rules: parse_rules(RULES).unwrap(),
        }
    }

    fn params() -> Params {
        Params {
            score: Some("Performance".into()),
            pmin: Some(Decimal::new(35, 1)),
            reference: Some("E2".into()),
            ..Params::default()
        }
    }

    fn gender() -> Vec<String> {
        vec!["gender".into()]
    }

    fn count(t: &Table, col: usize, v: &str) -> usize {
        t.rows.iter().filter(|r| r[col] == Value::Text(v.into())).count()
    }

    #[test]
    fn analysis_flags_managers() {
        let ws = workspace();
        let (ctx, binding) = resolve(&ws.cdt, &ws.registry, "action=promotion; role=clerk").unwrap();
        let view = materialize(&ws.db, binding, &ctx).unwrap();
        let report = analyze(&view, &gender(), 0.8).unwrap();
        assert!(report.flagged());
        let e2 = &report.tables[1].disparities[0];
        assert_eq!(e2.ratio, 0.25);
        assert!(analyze(&view, &["race".to_string()], 0.8).is_err());
    }

    #[test]
    fn equity_repairs_by_replication() {
        let ws = workspace();
        let p = params();
        let aff = gender();
        let req = TransformRequest {
            context: "action=promotion; role=clerk",
            facet: Some("fairness/equity"),
            affected: &aff,
            params: &p,
        };
        let out = transform(&ws, &req);
        let ev = out.view.expect("transform succeeds");
        // BMC = 6, BFC = 3, p = 1.
        assert_eq!(ev.table.len(), 12);
        assert_eq!(count(&ev.table, 2, "f"), 6);
        assert_eq!(ev.transform, TransformKind::RepairOversample);
        let step = &out.run.transforms[0];
        assert_eq!(step.params["p"], json!(1));
        assert_eq!(step.params["disadvantaged"], json!("f"));
        assert_eq!(out.run.row_counts.after["EV"], 12);
        assert_eq!(out.run.row_counts.before["E1"], 12);
    }

    #[test]
    fn failure_is_summarized() {
        let ws = workspace();
        let p = Params {
            pmin: Some(Decimal::new(49, 1)),
            ..params()
        };
        let aff = gender();
        let req = TransformRequest {
            context: "action=promotion; role=clerk",
            facet: Some("equity"),
            affected: &aff,
            params: &p,
        };
        let out = transform(&ws, &req);
        assert!(out.view.is_none());
        assert!(matches!(out.error, Some(Error::Transform(_))));
        assert!(out.run.error.as_deref().unwrap().contains("disadvantaged"));
        assert_eq!(out.run.transforms.len(), 1);
        assert_eq!(out.run.transforms[0].params["pmin"], json!("4.9"));
    }

    #[test]
    fn priority_split_fills_n_positions() {
        let ws = workspace();
        let p = Params {
            n: Some(5),
            shares: vec![Share::new("fairness/equity", 60), Share::new("diversity", 40)],
            ..params()
        };
        let aff = gender();
        let req = TransformRequest {
            context: "action=promotion; role=clerk",
            facet: None,
            affected: &aff,
            params: &p,
        };
        let out = transform(&ws, &req);
        let ev = out.view.expect("split succeeds");
        assert_eq!(ev.table.len(), 5);
        let ids: Vec<_> = ev.table.rows.iter().map(|r| r[0].clone()).collect();
        let mut unique = ids.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 5);
        // Equity: 3 positions over the balanced pool, 2 m and 1 f or vice versa.
        assert_eq!(out.run.transforms[0].positions, Some(3));
        assert_eq!(out.run.transforms[1].positions, Some(2));
        assert_eq!(out.run.transforms[1].kind, "diversity_select");
    }

    #[test]
    fn privacy_share_suppresses_in_the_emitted_view() {
        let ws = workspace();
        let p = Params {
            n: Some(4),
            shares: vec![
                Share::new("fairness/equity", 50),
                Share::new("privacy", 50).on("gender"),
            ],
            ..params()
        };
        let aff = gender();
        let req = TransformRequest {
            context: "action=promotion; role=clerk",
            facet: None,
            affected: &aff,
            params: &p,
        };
        let out = transform(&ws, &req);
        let ev = out.view.expect("split succeeds");
        assert_eq!(ev.table.len(), 4);
        assert!(!ev.table.schema.contains("Gender"));
        assert!(out.run.columns_removed.contains(&"Gender".to_string()));
    }

    #[test]
    fn params_validate_ranges() {
        assert!(Params {
            disparity_threshold: 0.0,
            ..Params::default()
        }
        .validate()
        .is_err());
        assert!(Params {
            assoc_threshold: 1.5,
            ..Params::default()
        }
        .validate()
        .is_err());
        assert!(Params::default().validate().is_ok());
        assert_eq!(
            "naive_bayes".parse::<RankerChoice>().unwrap(),
            RankerChoice::NaiveBayes
        );
        assert!("svm".parse::<RankerChoice>().is_err());
    }
}
