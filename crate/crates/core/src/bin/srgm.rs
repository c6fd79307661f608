use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use srgm_core::data::DefectFilter;
use srgm_core::fetch::{self, FetchOptions};
use srgm_core::fit::FitConfig;
use srgm_core::gof::Metric;
use srgm_core::models::ModelId;
use srgm_core::report::{self, CliError, Formats, GroupBy, Project};
use srgm_core::stats;

#[derive(Parser)]
#[command(name = "srgm", version, about = "Software reliability growth model fitting and comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter issue exports (or a live repository) down to defect reports.
    Ingest(IngestArgs),
    /// Laplace trend test per project and per release window.
    Trend(TrendArgs),
    /// Fit every selected model to every series.
    Fit(FitArgs),
    /// Kruskal-Wallis and Dunn comparison of models from fit outputs.
    Compare(CompareArgs),
    /// Rank models per segment and compute inter-rater agreement.
    Rank(RankArgs),
}

#[derive(Args)]
struct Output {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated output formats.
    #[arg(long, default_value = "csv,json")]
    format: Formats,
}

#[derive(Args)]
struct IngestArgs {
    /// Issue export (JSON array or NDJSON) or a directory of them; repeatable.
    #[arg(long)]
    issues: Vec<PathBuf>,
    /// Download issues of `owner/name` instead of reading files.
    #[arg(long, conflicts_with = "issues")]
    repo: Option<String>,
    #[arg(long, env = fetch::TOKEN_ENV, hide_env_values = true)]
    token: Option<String>,
    #[arg(long, default_value = fetch::DEFAULT_API_BASE)]
    api_base: String,
    /// Also match defect keywords against titles.
    #[arg(long)]
    title_match: bool,
    /// Out directory for the filtered NDJSON files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrendArgs {
    #[arg(long, required = true)]
    issues: Vec<PathBuf>,
    /// CSV of release windows (name,start,end).
    #[arg(long)]
    releases: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, required = true)]
    issues: Vec<PathBuf>,
    #[arg(long)]
    releases: Option<PathBuf>,
    /// CSV of project attributes (project,category,loc,noc,noi,nofa).
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// whole | releases | domain | attribute:LOC|NOC|NOI|NOFA
    #[arg(long, default_value = "whole")]
    group_by: GroupBy,
    /// Comma-separated model codes, or `all`.
    #[arg(long, default_value = "all")]
    models: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Initial search candidates per model.
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Release windows with fewer defects are not fitted.
    #[arg(long, default_value_t = srgm_core::data::DEFAULT_MIN_FAULTS)]
    min_faults: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory written by `srgm fit`; repeatable.
    #[arg(long = "fit", required = true)]
    fit_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "r2")]
    metric: Metric,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long = "fit", required = true)]
    fit_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "r2")]
    metric: Metric,
    /// Models that every segment must cover (default: all present).
    #[arg(long)]
    models: Option<String>,
    #[command(flatten)]
    output: Output,
}

fn parse_models(s: &str) -> Result<Vec<ModelId>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelId::ALL.to_vec());
    }
    ModelId::parse_list(s).map_err(|e| CliError::Input(e.to_string()))
}

fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let filter = DefectFilter {
        match_titles: args.title_match,
        ..DefectFilter::default()
    };
    let projects = match &args.repo {
        Some(slug) => {
            let opts = FetchOptions {
                api_base: args.api_base.clone(),
                token: args.token.clone(),
                ..FetchOptions::default()
            };
            let fetched = fetch::fetch_issues_live(slug, &opts)?;
            vec![Project {
                name: slug.rsplit('/').next().unwrap_or(slug).to_string(),
                issues: fetched.records,
                skipped: fetched.skipped,
            }]
        }
        None => report::load_projects(&args.issues)?,
    };
    for s in report::run_ingest(&projects, &filter, &args.out)? {
        println!(
            "{}: {} records, {} parsed, {} skipped, {} defects kept",
            s.project,
            s.total,
            s.parsed,
            s.skipped.len(),
            s.kept
        );
    }
    Ok(())
}

fn trend(args: TrendArgs) -> Result<(), CliError> {
    let projects = report::load_projects(&args.issues)?;
    let releases = args.releases.as_deref().map(report::load_releases).transpose()?;
    let rows = report::run_trend(&projects, releases.as_deref())?;
    for r in &rows {
        match &r.trend {
            Some(t) => println!(
                "{}: n={} u={:.4}{}",
                r.series,
                t.n,
                t.u,
                if t.growth_significant { " (reliability growth)" } else { "" }
            ),
            None => println!("{}: {}", r.series, r.note.as_deref().unwrap_or("")),
        }
    }
    report::write_trend(&rows, &args.output.out, args.output.format)
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let projects = report::load_projects(&args.issues)?;
    let releases = args.releases.as_deref().map(report::load_releases).transpose()?;
    let attributes = args.attributes.as_deref().map(report::load_attributes).transpose()?;
    let plan = report::plan_series(
        &projects,
        args.group_by,
        releases.as_deref(),
        attributes.as_ref(),
        args.min_faults,
    )?;
    let run = report::FitRun {
        group_by: args.group_by,
        models: parse_models(&args.models)?,
        fit: FitConfig {
            search_budget: args.budget,
            rng_seed: args.seed,
            max_refine_iterations: args.max_iterations,
            ..FitConfig::default()
        },
        min_faults: args.min_faults,
    };
    let bundle = report::run_fit(plan, &run)?;
    report::write_fit_report(&bundle, &args.output.out, args.output.format)?;
    println!(
        "{} series, {} fits, {} skipped -> {}",
        bundle.series.len(),
        bundle.fits.len(),
        bundle.skipped.len(),
        args.output.out.display()
    );
    for s in &bundle.skipped {
        match s.model {
            Some(m) => println!("  skipped {} [{m}]: {}", s.series, s.reason),
            None => println!("  skipped {}: {}", s.series, s.reason),
        }
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let rows = report::load_fit_outputs(&args.fit_dirs)?;
    let rep = report::compare_rows(&rows, args.metric)?;
    for c in &rep.comparisons {
        let g = &c.comparison;
        println!(
            "{}: H={:.4} df={} p={:.4e} effect={}",
            c.segment,
            g.h,
            g.df,
            g.p_value,
            g.effect.map(|e| e.as_str()).unwrap_or("undefined")
        );
    }
    for (segment, why) in &rep.not_compared {
        println!("{segment}: not compared ({why})");
    }
    println!("effect size: {}", rep.legend);
    report::write_compare(&rep, &args.output.out, args.output.format)
}

fn rank(args: RankArgs) -> Result<(), CliError> {
    let rows = report::load_fit_outputs(&args.fit_dirs)?;
    let models = args.models.as_deref().map(parse_models).transpose()?;
    let table = report::rank_rows(&rows, args.metric, models.as_deref())?;
    for seg in &table.segments {
        let order: Vec<String> = table
            .ordered_models(seg)
            .unwrap_or_default()
            .iter()
            .map(|m| m.to_string())
            .collect();
        println!("{seg}: {}", order.join(" > "));
    }
    match table.ira_percent {
        Some(p) => println!("IRA = {p:.1}% ({})", stats::IRA_VARIANT),
        None => println!("IRA undefined for a single segment"),
    }
    report::write_rank(&table, &args.output.out, args.output.format)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Trend(a) => trend(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => compare(a),
        Command::Rank(a) => rank(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("srgm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
