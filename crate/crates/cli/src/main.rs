use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use stpm_core::ingest::{
    self, attribute_candidates, parse_events_csv, parse_regions_geojson, IngestReport,
};
use stpm_core::mining::Granularity;
use stpm_core::{run_pipeline, Event, Region, RunConfig, Stage};
use stpm_service::gemini::GeminiProvider;
use stpm_service::{AppState, Store};

#[derive(Parser)]
#[command(
    name = "stpm",
    version,
    about = "Mine, cluster and explore association rules in spatiotemporal event data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine rules, cluster them and write the run artifact as JSON.
    Run(RunArgs),
    /// Check an events file (and optional regions) and print the ingest report.
    Validate(InputArgs),
    /// Host the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Events CSV with DATE and PLACE columns.
    #[arg(long)]
    events: PathBuf,
    /// GeoJSON FeatureCollection of region boundaries.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Comma-separated attribute columns [default: every column except DATE and PLACE].
    #[arg(long, value_delimiter = ',')]
    attributes: Vec<String>,
    /// Feature property holding the region id.
    #[arg(long, default_value = "name")]
    region_id_property: String,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    ingest::parse_date_strict(s).ok_or_else(|| format!("{s:?} is not a YYYY-mm-dd date"))
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// First day mined [default: earliest event date].
    #[arg(long, value_parser = parse_date)]
    start: Option<NaiveDate>,
    /// Last day mined [default: latest event date].
    #[arg(long, value_parser = parse_date)]
    end: Option<NaiveDate>,
    /// month, week or year.
    #[arg(long, default_value = "month")]
    granularity: Granularity,
    #[arg(long, default_value_t = 0.05)]
    min_support: f64,
    #[arg(long, default_value_t = 1.05)]
    min_lift: f64,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Longest rule mined, counting both sides.
    #[arg(long, default_value_t = 5)]
    max_rule_len: usize,
    /// Artifact path [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory for persisted datasets and runs [default: memory only].
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

struct Loaded {
    events: Vec<Event>,
    regions: Vec<Region>,
    report: IngestReport,
    attributes: Vec<String>,
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let csv = read(&input.events)?;
    let attributes = if input.attributes.is_empty() {
        let (_, descriptor, _) = parse_events_csv(&csv, &[])?;
        attribute_candidates(&descriptor.columns)
    } else {
        input.attributes.clone()
    };
    let (events, _, mut report) = parse_events_csv(&csv, &attributes)?;
    let regions = match &input.regions {
        Some(path) => {
            let regions = parse_regions_geojson(&read(path)?, &input.region_id_property)?;
            report.unmatched_places = ingest::validate_region_coverage(&events, &regions);
            regions
        }
        None => Vec::new(),
    };
    Ok(Loaded {
        events,
        regions,
        report,
        attributes,
    })
}

fn warn_unmatched(report: &IngestReport) {
    for place in &report.unmatched_places {
        eprintln!("warning: place {place:?} has no matching region");
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let data = load(&args.input)?;
    warn_unmatched(&data.report);
    let first = data.events.iter().map(|e| e.date).min();
    let last = data.events.iter().map(|e| e.date).max();
    let (Some(start), Some(end)) = (args.start.or(first), args.end.or(last)) else {
        bail!("no events to mine");
    };
    let config = RunConfig {
        attribute_columns: data.attributes,
        start_date: start,
        end_date: end,
        granularity: args.granularity,
        min_support: args.min_support,
        min_lift: args.min_lift,
        resolution: args.resolution,
        seed: args.seed,
        region_id_property: args.input.region_id_property.clone(),
        max_rule_len: args.max_rule_len,
    };
    let mut progress = |stage: Stage| {
        let name = match stage {
            Stage::Mining => "mining",
            Stage::Clustering => "clustering",
        };
        eprintln!("{name}...");
    };
    let artifact = run_pipeline(
        &data.events,
        &data.regions,
        data.report,
        &config,
        &mut progress,
    )?;
    eprintln!(
        "{} rules in {} clusters",
        artifact.rules.len(),
        artifact.clusters.len()
    );

    let mut json = artifact.to_json();
    json.push('\n');
    match &args.out {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().lock().write_all(json.as_bytes())?,
    }
    Ok(())
}

fn cmd_validate(args: InputArgs) -> Result<()> {
    let data = load(&args)?;
    warn_unmatched(&data.report);
    println!("{}", serde_json::to_string_pretty(&data.report)?);
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let store = match &args.data_dir {
        Some(dir) => Store::open(dir).with_context(|| format!("opening {}", dir.display()))?,
        None => Store::in_memory(),
    };
    let state = AppState::new(store, Arc::new(GeminiProvider::from_env()));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid host")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        stpm_service::serve(listener, state).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Serve(args) => cmd_serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
