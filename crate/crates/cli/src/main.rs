//! `ethica`: validate trees, resolve contexts, analyze views and produce
//! Ethical Views with provenance.

mod params;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ethica_core::pipeline::{
    self, analyze, load_registry, load_rules, load_tree, resolve, Params, TransformRequest, Workspace,
};
use ethica_core::provenance::{self, RunSummary};
use ethica_core::relation::load_database;
use ethica_core::views::materialize;
use ethica_core::{Error, Result};
use rust_decimal::Decimal;
use serde_json::json;

use crate::params::{parse_repair, parse_share, parse_weight, ParamFile};

#[derive(Debug, Parser)]
#[command(
    name = "ethica",
    version,
    about = "Context-aware ethical views over relational data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that the context and ethical requirement trees are well formed.
    Validate(ValidateArgs),
    /// Show which view a context selects and what it evaluates to.
    Resolve(ResolveArgs),
    /// Report group cardinalities and disparities for affected attributes.
    Analyze(AnalyzeArgs),
    /// Apply the transformation an ethical context calls for and log it.
    Transform(Box<TransformArgs>),
    /// Render a provenance record as text.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Context Dimension Tree.
    #[arg(long)]
    cdt: PathBuf,
    /// Ethical Requirements Tree.
    #[arg(long)]
    ert: Option<PathBuf>,
    /// Also check a view registry against the CDT.
    #[arg(long)]
    views: Option<PathBuf>,
    /// Also check a rule table.
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Context Dimension Tree.
    #[arg(long)]
    cdt: PathBuf,
    /// Directory holding the CSV files.
    #[arg(long)]
    data: PathBuf,
    /// Table declarations; defaults to `manifest.txt` inside the data directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// View registry binding contexts to view definitions.
    #[arg(long)]
    views: PathBuf,
    /// Context such as `action=promotion; role=clerk`.
    #[arg(long)]
    context: String,
}

impl DataArgs {
    fn manifest(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.data.join("manifest.txt"))
    }
}

#[derive(Debug, Args)]
struct ResolveArgs {
    /// Context Dimension Tree.
    #[arg(long)]
    cdt: PathBuf,
    /// View registry binding contexts to view definitions.
    #[arg(long)]
    views: PathBuf,
    /// Context such as `action=promotion; role=clerk`.
    #[arg(long)]
    context: String,
    /// Evaluate the view against this data directory and report row counts.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Table declarations; defaults to `manifest.txt` inside the data directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Affected attributes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    affected: Vec<String>,
    /// Ratio below which a disparity is flagged; 0.8 by default.
    #[arg(long)]
    disparity_threshold: Option<f64>,
    /// Parameter file; only its disparity threshold is used here.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Ethical Requirements Tree.
    #[arg(long)]
    ert: PathBuf,
    /// Rule table mapping ethical contexts to transformations.
    #[arg(long)]
    rules: PathBuf,
    /// Ethical facet, e.g. `fairness/equity`; defaults to the first share.
    #[arg(long)]
    facet: Option<String>,
    /// Affected attributes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    affected: Vec<String>,
    /// TOML parameter file; flags override its values.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output CSV; standard output when absent or `-`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Provenance log (JSON Lines).
    #[arg(long, env = "ETHICA_LOG")]
    log: PathBuf,
    /// Score column used for ranking and the repair threshold.
    #[arg(long)]
    score: Option<String>,
    /// Rows must score above this to qualify for repair.
    #[arg(long)]
    pmin: Option<Decimal>,
    /// Disadvantaged value of the protected attribute.
    #[arg(long)]
    disadvantaged: Option<String>,
    /// View table the Ethical View is built from; the first by default.
    #[arg(long)]
    target: Option<String>,
    /// View table whose group counts drive the repair.
    #[arg(long)]
    reference: Option<String>,
    /// Ratio below which a disparity is flagged; 0.8 by default.
    #[arg(long)]
    disparity_threshold: Option<f64>,
    /// Association at or above which suppression removes a column; 0.5 by default.
    #[arg(long)]
    assoc_threshold: Option<f64>,
    /// Value weight `column=value:weight`; repeatable.
    #[arg(long = "weight")]
    weights: Vec<String>,
    /// Replicate rows by weight instead of emitting a `__weight` column.
    #[arg(long)]
    materialize: bool,
    /// Boolean label column for massaging.
    #[arg(long)]
    class: Option<String>,
    /// Massaging ranker: score or naive_bayes.
    #[arg(long)]
    ranker: Option<String>,
    /// Number of rows to keep for ranking and selection.
    #[arg(long)]
    k: Option<usize>,
    /// Number of positions to fill.
    #[arg(long)]
    n: Option<u64>,
    /// Facet share `facet=percent[:attribute]` in priority order; repeatable.
    #[arg(long = "share")]
    shares: Vec<String>,
    /// Repair mode: oversample or manager_ratio.
    #[arg(long)]
    repair: Option<String>,
    /// Manager-ratio formula: literal or proportional.
    #[arg(long)]
    formula: Option<String>,
}

impl TransformArgs {
    fn params(&self) -> Result<Params> {
        let mut p = match &self.params {
            Some(path) => ParamFile::load(path)?.into_params()?,
            None => Params::default(),
        };
        override_opt(&mut p.score, &self.score);
        override_opt(&mut p.pmin, &self.pmin);
        override_opt(&mut p.disadvantaged, &self.disadvantaged);
        override_opt(&mut p.target, &self.target);
        override_opt(&mut p.reference, &self.reference);
        override_opt(&mut p.class, &self.class);
        override_opt(&mut p.k, &self.k);
        override_opt(&mut p.n, &self.n);
        if let Some(t) = self.disparity_threshold {
            p.disparity_threshold = t;
        }
        if let Some(t) = self.assoc_threshold {
            p.assoc_threshold = t;
        }
        if !self.weights.is_empty() {
            p.weights = self
                .weights
                .iter()
                .map(|w| parse_weight(w))
                .collect::<Result<_>>()?;
        }
        if !self.shares.is_empty() {
            p.shares = self
                .shares
                .iter()
                .map(|s| parse_share(s))
                .collect::<Result<_>>()?;
        }
        p.materialize |= self.materialize;
        if let Some(r) = &self.ranker {
            p.ranker = r.parse()?;
        }
        if self.repair.is_some() || self.formula.is_some() {
            p.repair = parse_repair(self.repair.as_deref(), self.formula.as_deref())?;
        }
        p.validate()?;
        Ok(p)
    }
}

fn override_opt<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long, env = "ETHICA_LOG")]
    log: PathBuf,
    /// Record id, or an unambiguous prefix of one.
    #[arg(long)]
    id: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate(args) => validate(&args),
        Command::Resolve(args) => resolve_cmd(&args),
        Command::Analyze(args) => analyze_cmd(&args),
        Command::Transform(args) => transform_cmd(&args),
        Command::Explain(args) => explain_cmd(&args),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let cdt = load_tree(&args.cdt)?;
    println!("cdt {}: ok ({} nodes)", args.cdt.display(), cdt.count());
    if let Some(path) = &args.ert {
        let ert = load_tree(path)?;
        println!("ert {}: ok ({} nodes)", path.display(), ert.count());
    }
    if let Some(path) = &args.views {
        let registry = load_registry(path, &cdt)?;
        println!("views {}: ok ({} bindings)", path.display(), registry.len());
    }
    if let Some(path) = &args.rules {
        let rules = load_rules(path)?;
        println!("rules {}: ok ({} rules)", path.display(), rules.len());
    }
    Ok(())
}

fn resolve_cmd(args: &ResolveArgs) -> Result<()> {
    let cdt = load_tree(&args.cdt)?;
    let registry = load_registry(&args.views, &cdt)?;
    let (context, binding) = resolve(&cdt, &registry, &args.context)?;
    let mut tables: Vec<serde_json::Value> = binding
        .named_exprs
        .iter()
        .map(|(label, expr)| json!({ "label": label, "expr": expr.to_string() }))
        .collect();
    let mut report = json!({
        "context": context.to_string(),
        "view": binding.name,
        "pattern": binding.context_pattern.to_string(),
    });
    if let Some(data) = &args.data {
        let manifest = args.manifest.clone().unwrap_or_else(|| data.join("manifest.txt"));
        let db = load_database(data, &manifest)?;
        let view = materialize(&db, binding, &context)?;
        for (entry, (_, table)) in tables.iter_mut().zip(&view.tables) {
            entry["rows"] = json!(table.len());
        }
        report["input_hash"] = json!(view.source_hash);
    }
    report["tables"] = json!(tables);
    print_json(&report)
}

fn analyze_cmd(args: &AnalyzeArgs) -> Result<()> {
    let mut threshold = match &args.params {
        Some(path) => ParamFile::load(path)?.into_params()?.disparity_threshold,
        None => Params::default().disparity_threshold,
    };
    if let Some(t) = args.disparity_threshold {
        threshold = t;
    }
    Params {
        disparity_threshold: threshold,
        ..Params::default()
    }
    .validate()?;
    let d = &args.data;
    let cdt = load_tree(&d.cdt)?;
    let registry = load_registry(&d.views, &cdt)?;
    let db = load_database(&d.data, &d.manifest())?;
    let (context, binding) = resolve(&cdt, &registry, &d.context)?;
    let view = materialize(&db, binding, &context)?;
    let report = analyze(&view, &args.affected, threshold)?;
    print_json(&report)
}

fn transform_cmd(args: &TransformArgs) -> Result<()> {
    let d = &args.data;
    let params = args.params()?;
    let ws = Workspace::load(&d.cdt, &args.ert, &d.data, &d.manifest(), &d.views, &args.rules)?;
    let request = TransformRequest {
        context: &d.context,
        facet: args.facet.as_deref(),
        affected: &args.affected,
        params: &params,
    };
    let result = pipeline::transform(&ws, &request);
    let Some(view) = result.view else {
        let record = provenance::append_now(&args.log, result.run)?;
        eprintln!("recorded failure as {}", record.id);
        return Err(result.error.expect("failed runs carry an error"));
    };
    let csv = view.table.to_csv();
    let out = args.out.as_deref().filter(|p| *p != Path::new("-"));
    if let Err(e) = write_output(out, &csv) {
        let mut run: RunSummary = result.run;
        run.error = Some(e.to_string());
        run.row_counts.after.clear();
        run.output_hash = None;
        let record = provenance::append_now(&args.log, run)?;
        eprintln!("recorded failure as {}", record.id);
        return Err(e);
    }
    let record = provenance::append_now(&args.log, result.run)?;
    if out.is_some() {
        println!("{}", record.id);
    } else {
        eprintln!("{}", record.id);
    }
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn explain_cmd(args: &ExplainArgs) -> Result<()> {
    let records = provenance::read_log(&args.log)?;
    let record = provenance::find(&records, &args.id)
        .ok_or_else(|| Error::Param(format!("no record `{}` in {}", args.id, args.log.display())))?;
    print!("{}", provenance::explain(record));
    Ok(())
}
