use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

use anyhow::Context;
use chrono::Utc;
use clap::{Parser, Subcommand};
use serde_json::json;

use webextractor_core::config::Config;
use webextractor_core::estimator::{aggregate, group_thousands, read_stats_csv, write_totals};
use webextractor_core::kg::PropertyId;
use webextractor_core::{linker, pipeline, server, Error};

#[derive(Parser)]
#[command(name = "webextractor", version, about = "Extract missing knowledge-graph facts from linked web pages")]
struct Cli {
    /// Pipeline configuration.
    #[arg(long, global = true, default_value = "webextractor.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample entities per domain and rank their properties.
    Select,
    /// Fetch and cache the selected pages.
    Crawl,
    /// Generate distantly supervised QA examples and splits.
    BuildDataset,
    /// Ask the extractor for missing values on incomplete entities.
    Extract,
    /// Train one candidate ranker per item-valued property.
    TrainLinker,
    /// Link extractions and submit proposals, or rank candidates for one mention.
    Link {
        /// Rank candidates for this mention instead of processing extractions.
        #[arg(long, requires = "property")]
        text: Option<String>,
        #[arg(long)]
        property: Option<String>,
    },
    /// Aggregate per (domain, property) statistics into fact estimates.
    Estimate {
        /// Stats CSV; overrides the configured one.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Serve the proposals API.
    Serve {
        /// Address to bind; overrides the configured one.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Evaluate the extractor on every test set for each budget.
    Experiment {
        /// Comma separated budgets, e.g. `0,8,16`.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::UpstreamMissing { .. }) => 3,
        Some(Error::Transport(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::load(&cli.config)?;
    let started = Utc::now();
    match cli.command {
        Command::Select => {
            let kg = pipeline::open_kg(&cfg)?;
            let sel = pipeline::select(&cfg, &kg)?;
            for d in &sel.domains {
                println!(
                    "{}: {} entities, {} sampled, {} properties",
                    d.domain,
                    d.population,
                    d.sampled,
                    d.properties.len()
                );
                for p in d.properties.iter().take(cfg.selection.top_properties) {
                    println!(
                        "  {:<8} {:<40} present {:>6}  missing {:>6}",
                        p.property.as_str(),
                        p.label.as_deref().unwrap_or("?"),
                        p.count,
                        p.incomplete
                    );
                }
            }
            let summary = json!({ "domains": sel.domains.len(), "targets": sel.targets.len() });
            pipeline::write_report(&cfg, "select", started, &summary)?;
        }
        Command::Crawl => {
            let result = pipeline::crawl(&cfg);
            let summary = match &result {
                Ok(s) => s.clone(),
                Err(_) => pipeline::read_artifact(&cfg.crawl_path(), "crawl").unwrap_or_default(),
            };
            pipeline::write_report(&cfg, "crawl", started, &summary)?;
            result?;
            println!(
                "fetched {}, skipped {}, failed {}",
                summary.fetched, summary.skipped, summary.failed
            );
        }
        Command::BuildDataset => {
            let kg = pipeline::open_kg(&cfg)?;
            let manifest = pipeline::build_dataset(&cfg, &kg)?;
            for g in &manifest.groups {
                match &g.excluded {
                    None => println!(
                        "{}/{}: {} examples, train {}, test {}",
                        g.domain, g.property, g.examples, g.train, g.test
                    ),
                    Some(why) => println!("{}/{}: excluded ({why})", g.domain, g.property),
                }
            }
            pipeline::write_report(&cfg, "build-dataset", started, &manifest)?;
        }
        Command::Extract => {
            let kg = pipeline::open_kg(&cfg)?;
            let (_, summary) = pipeline::extract(&cfg, &kg)?;
            println!(
                "queried {}, extracted {}, no answer {}, no page {}, not projectable {}",
                summary.queried, summary.extracted, summary.no_answer, summary.no_page, summary.not_projectable
            );
            pipeline::write_report(&cfg, "extract", started, &summary)?;
        }
        Command::TrainLinker => {
            let kg = pipeline::open_kg(&cfg)?;
            let index = pipeline::train_linker(&cfg, &kg)?;
            for m in &index.models {
                if m.trained {
                    println!(
                        "{}: trained on {} instances, Hit@1 {:.3}",
                        m.property,
                        m.instances,
                        m.hit1_train.unwrap_or(f64::NAN)
                    );
                } else {
                    println!("{}: not trained ({})", m.property, m.reason.as_deref().unwrap_or("-"));
                }
            }
            pipeline::write_report(&cfg, "train-linker", started, &index)?;
        }
        Command::Link { text: Some(text), property } => {
            let kg = pipeline::open_kg(&cfg)?;
            let p = PropertyId::new(property.context("--property is required with --text")?)?;
            let model = pipeline::load_model(&cfg, &p)?;
            let ranked = linker::link(&text, &model, &kg)?;
            if ranked.is_empty() {
                println!("no candidates for {text:?}");
            }
            for (id, score) in &ranked {
                let label = kg
                    .entity(id)
                    .ok()
                    .and_then(|r| r.label(kg.languages()).map(str::to_string))
                    .unwrap_or_default();
                println!("{id}\t{score:.6}\t{label}");
            }
        }
        Command::Link { text: None, .. } => {
            let kg = pipeline::open_kg(&cfg)?;
            let summary = pipeline::link_extractions(&cfg, &kg)?;
            println!(
                "{} extractions: {} linked, {} unlinked, {} literal; {} proposals accepted, {} duplicates, {} rejected",
                summary.extractions,
                summary.linked,
                summary.unlinked,
                summary.literal,
                summary.submit.accepted,
                summary.submit.duplicates,
                summary.submit.rejected.len()
            );
            pipeline::write_report(&cfg, "link", started, &summary)?;
        }
        Command::Estimate { stats } => {
            let path = stats.unwrap_or_else(|| cfg.stats_path());
            if !path.exists() {
                return Err(Error::UpstreamMissing {
                    path,
                    producer: "a stats export".into(),
                }
                .into());
            }
            let rows = read_stats_csv(&path)?;
            let totals = aggregate(&rows);
            write_totals(&cfg.estimate_dir(), &totals)?;
            for r in &totals.rows {
                println!(
                    "{:<8} {:<8} {:>12}",
                    r.domain_pid.as_str(),
                    r.property_pid.as_str(),
                    group_thousands(r.estimate.unwrap_or(0))
                );
            }
            println!("total {}", group_thousands(totals.total));
            pipeline::write_report(&cfg, "estimate", started, &totals)?;
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                cfg.proposals.bind = b;
            }
            let addr: SocketAddr = cfg
                .proposals
                .bind
                .parse()
                .map_err(|e| Error::Config(format!("proposals.bind {:?}: {e}", cfg.proposals.bind)))?;
            let store = pipeline::open_store(&cfg)?;
            println!("serving {} proposals on http://{addr}", store.state().len());
            let shared = Arc::new(RwLock::new(store));
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .context("starting runtime")?;
            rt.block_on(server::serve(shared, addr))?;
        }
        Command::Experiment { budgets } => {
            let summary = pipeline::experiment(&cfg, budgets)?;
            for (b, f1) in &summary.mean_f1 {
                println!("budget {b:>4}: mean F1 {f1:.2}");
            }
            pipeline::write_report(&cfg, "experiment", started, &summary)?;
        }
    }
    Ok(())
}
