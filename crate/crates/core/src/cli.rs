//! The `cybokclaw` command line.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::credits::{aggregate_credits, BroadCategoryMap, ModulesFile};
use crate::engine::{Engine, ResourcePaths};
use crate::error::{Error, Result};
use crate::eval::{run_benchmark, Dataset, LabelSet};
use crate::json::{self, Strictness};
use crate::ranking::ConfidenceThresholds;
use crate::review::{self, ServiceConfig};
use crate::selection::{MappingView, SelectionConfig, DEFAULT_CAP, DEFAULT_TOP_K};
use crate::table;
use crate::tree::Listing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "cybokclaw",
    version,
    about = "Map cybersecurity keywords to CyBOK knowledge-tree rows"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Knowledge tree JSON.
    #[arg(long, global = true)]
    pub tree: Option<PathBuf>,
    /// Directory holding the four curation files.
    #[arg(long, global = true)]
    pub curation_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Directory with stopwords.txt, cues/ and categories/.
    #[arg(long, global = true)]
    pub lexicon_dir: Option<PathBuf>,
    /// Default resource root.
    #[arg(long, global = true, env = "CYBOKCLAW_HOME")]
    pub home: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Per-(KA, topic) limit in the first selection pass.
    #[arg(long, global = true, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
    /// Overrides the strong threshold from the weights file.
    #[arg(long, global = true)]
    pub strong: Option<f64>,
    #[arg(long, global = true)]
    pub moderate: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Include score components, query analysis and annotation.
    #[arg(long, global = true)]
    pub explain: bool,
    /// Reject unknown fields and malformed records instead of skipping them.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map one query to its top-k rows.
    Map { query: String },
    /// Map every record of a dataset; writes JSON Lines.
    Batch {
        dataset: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Evaluate one or more datasets.
    Bench {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Expert label file (JSON Lines).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// List KAs, the topics of a KA, or the material of a topic.
    Browse {
        #[arg(long)]
        ka: Option<String>,
        #[arg(long)]
        topic: Option<String>,
    },
    /// Aggregate module credits into a coverage profile.
    Credits {
        #[arg(long)]
        config: PathBuf,
        /// KA to broad-category map.
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Run the review HTTP service.
    Serve {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Append-only event log; replayed on start.
        #[arg(long)]
        event_log: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        split: String,
        /// Initial module credits.
        #[arg(long)]
        credits: Option<PathBuf>,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
}

impl GlobalOpts {
    pub fn mode(&self) -> Strictness {
        Strictness::from_flag(self.strict)
    }

    pub fn paths(&self) -> ResourcePaths {
        ResourcePaths {
            home: self.home.clone(),
            tree: self.tree.clone(),
            curation_dir: self.curation_dir.clone(),
            weights: self.weights.clone(),
            lexicon_dir: self.lexicon_dir.clone(),
        }
    }

    pub fn selection(&self, engine: &Engine) -> Result<SelectionConfig> {
        let base = engine.weights().confidence;
        let cfg = SelectionConfig {
            top_k: self.top_k,
            cap: self.cap,
            thresholds: ConfidenceThresholds {
                strong: self.strong.unwrap_or(base.strong),
                moderate: self.moderate.unwrap_or(base.moderate),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn categories(&self, explicit: &Option<PathBuf>) -> Result<BroadCategoryMap> {
        let path = explicit.clone().or_else(|| self.paths().categories_path());
        match path {
            Some(p) => BroadCategoryMap::from_slice(&json::read_file(&p)?, self.mode()),
            None => Ok(BroadCategoryMap::builtin()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Map { query } => {
            let engine = g.paths().load_engine(g.mode())?;
            let result = engine.map_query(query, &g.selection(&engine)?)?;
            let text = match g.format.unwrap_or(Format::Table) {
                Format::Json => result.to_json(g.explain) + "\n",
                Format::Table => result.to_table(g.explain),
                Format::Csv => return Err(Error::InvalidArgument("map does not support csv".into())),
            };
            out.write_all(text.as_bytes()).map_err(io_err)
        }
        Command::Batch { dataset, output } => {
            let engine = g.paths().load_engine(g.mode())?;
            let cfg = g.selection(&engine)?;
            let ds = load_dataset(dataset, g.mode(), err)?;
            let lines = batch_lines(&engine, &ds, &cfg, g.explain)?;
            match output {
                Some(p) => std::fs::write(p, lines).map_err(|e| Error::io(p, e)),
                None => out.write_all(lines.as_bytes()).map_err(io_err),
            }
        }
        Command::Bench {
            datasets,
            labels,
            split,
        } => {
            let engine = g.paths().load_engine(g.mode())?;
            let cfg = g.selection(&engine)?;
            let sets = datasets
                .iter()
                .map(|p| load_dataset(p, g.mode(), err))
                .collect::<Result<Vec<_>>>()?;
            let labels = match labels {
                Some(p) => Some(LabelSet::parse(&read_text(p)?, g.mode())?),
                None => None,
            };
            let report = run_benchmark(&engine, &sets, labels.as_ref(), split, &cfg)?;
            let text = match g.format.unwrap_or(Format::Table) {
                Format::Json => report.to_json() + "\n",
                _ => report.to_table(),
            };
            out.write_all(text.as_bytes()).map_err(io_err)
        }
        Command::Browse { ka, topic } => {
            let tree = match g.paths().tree_path() {
                Some(p) => crate::engine::load_tree(&p, g.mode())?,
                None => crate::tree::KnowledgeTree::builtin(),
            };
            let listing = tree.browse(ka.as_deref(), topic.as_deref())?;
            let text = match g.format.unwrap_or(Format::Table) {
                Format::Json => serde_json::to_string(&listing).expect("listing serializes") + "\n",
                _ => listing_table(&listing),
            };
            out.write_all(text.as_bytes()).map_err(io_err)
        }
        Command::Credits { config, categories } => {
            let tree = match g.paths().tree_path() {
                Some(p) => crate::engine::load_tree(&p, g.mode())?,
                None => crate::tree::KnowledgeTree::builtin(),
            };
            let modules = ModulesFile::from_slice(&json::read_file(config)?, g.mode())?;
            let cats = g.categories(categories)?;
            let profile = aggregate_credits(&modules.modules, &cats, &tree)?;
            let text = match g.format.unwrap_or(Format::Csv) {
                Format::Json => serde_json::to_string_pretty(&profile).expect("profile serializes") + "\n",
                Format::Csv => profile.to_csv(),
                Format::Table => profile.to_table(),
            };
            out.write_all(text.as_bytes()).map_err(io_err)
        }
        Command::Serve {
            datasets,
            addr,
            event_log,
            split,
            credits,
            categories,
        } => {
            let engine = g.paths().load_engine(g.mode())?;
            let cfg = g.selection(&engine)?;
            let sets = datasets
                .iter()
                .map(|p| load_dataset(p, g.mode(), err))
                .collect::<Result<Vec<_>>>()?;
            let seed = match credits {
                Some(p) => ModulesFile::from_slice(&json::read_file(p)?, g.mode())?.modules,
                None => Vec::new(),
            };
            let config = ServiceConfig {
                datasets: sets,
                split: split.clone(),
                selection: cfg,
                event_log: event_log.clone(),
                categories: g.categories(categories)?,
                modules: seed,
            };
            let state = review::ReviewState::new(&engine, config)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|e| Error::io(addr.to_string(), e))?;
                let bound = listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?;
                let _ = writeln!(err, "listening on http://{bound}");
                review::serve(listener, state)
                    .await
                    .map_err(|e| Error::io(bound.to_string(), e))
            })
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Dataset name is the file stem.
pub fn load_dataset(path: &Path, mode: Strictness, err: &mut dyn Write) -> Result<Dataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let (ds, warnings) = Dataset::parse(&name, &read_text(path)?, mode)?;
    for w in warnings {
        let _ = writeln!(err, "warning: skipped record: {w}");
    }
    Ok(ds)
}

#[derive(Serialize)]
struct BatchLine<'a> {
    query_id: &'a str,
    #[serde(flatten)]
    result: MappingView,
}

/// One JSON line per record, in input order.
pub fn batch_lines(engine: &Engine, ds: &Dataset, cfg: &SelectionConfig, explain: bool) -> Result<String> {
    let lines = ds
        .records
        .par_iter()
        .map(|r| {
            let m = engine.map_query(&r.kwop, cfg)?;
            let line = BatchLine {
                query_id: &r.query_id,
                result: m.view(explain),
            };
            Ok(serde_json::to_string(&line).expect("batch line serializes"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    Ok(text)
}

fn listing_table(listing: &Listing) -> String {
    match listing {
        Listing::KnowledgeAreas { entries } => table::render(
            &["id", "name", "topics"],
            &entries
                .iter()
                .map(|e| vec![e.id.clone(), e.name.clone(), e.topics.to_string()])
                .collect::<Vec<_>>(),
        ),
        Listing::Topics { ka, entries } => table::render(
            &[&format!("{ka} topics")],
            &entries.iter().map(|t| vec![t.clone()]).collect::<Vec<_>>(),
        ),
        Listing::IndicativeMaterial { ka, topic, entries } => table::render(
            &[&format!("{ka} / {topic}")],
            &entries.iter().map(|t| vec![t.clone()]).collect::<Vec<_>>(),
        ),
    }
}
