use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use structex::corpus::{self, estimate_cost, BatchOptions, CorpusReport, Usd};
use structex::intake::{self, IssueStore};
use structex::pipeline::{convert, ConversionResult, ConvertOptions, SourceBundle, EXIT_BUNDLE_INVALID};
use structex::registry::PackageRegistry;
use structex::CONVERTER_VERSION;

#[derive(Parser)]
#[command(name = "structex", version, about = "Convert LaTeX bundles to accessible HTML")]
struct Cli {
    /// Extra package handler files (`*.toml`) to load.
    #[arg(long, global = true)]
    packages: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert one bundle (a directory or a single .tex file).
    Convert {
        bundle: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        paper_id: Option<String>,
        /// Main file, relative to the bundle directory.
        #[arg(long)]
        main: Option<String>,
        /// Also write `<paper-id>.ast.json`.
        #[arg(long)]
        dump_ast: bool,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        #[arg(long)]
        fuel: Option<u64>,
        /// Print the result (without the page) as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Convert every bundle directory under a corpus directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long, default_value = "0.015")]
        cost_per_article: Usd,
        /// Report path; a `.txt` summary is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip writing `<paper-id>.html` into the bundle directories.
        #[arg(long)]
        no_html: bool,
    },
    /// List papers that need reconversion given a previous batch report.
    Plan {
        #[arg(long)]
        previous: PathBuf,
        #[arg(long, value_delimiter = ',')]
        changed_packages: Vec<String>,
        #[arg(long, default_value = CONVERTER_VERSION)]
        current_version: String,
        #[arg(long)]
        cost_per_article: Option<Usd>,
    },
    /// Run the issue report service.
    Serve {
        #[arg(long, default_value = "reports.ndjson")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: SocketAddr,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("structex: {message}");
            ExitCode::from(EXIT_BUNDLE_INVALID as u8)
        }
    }
}

fn registry(extra: Option<&Path>) -> Result<PackageRegistry, String> {
    let mut registry = PackageRegistry::with_defaults();
    if let Some(dir) = extra {
        for d in registry.load_dir(dir).map_err(|e| e.to_string())? {
            eprintln!("{d}");
        }
    }
    Ok(registry)
}

fn run(cli: Cli) -> Result<u8, String> {
    let registry = registry(cli.packages.as_deref())?;
    match cli.command {
        Command::Convert {
            bundle,
            out_dir,
            paper_id,
            main,
            dump_ast,
            timeout_secs,
            fuel,
            json,
        } => {
            let mut options = ConvertOptions {
                timeout: Duration::from_secs(timeout_secs),
                keep_document: dump_ast,
                ..ConvertOptions::default()
            };
            if let Some(fuel) = fuel {
                options.fuel = fuel;
            }
            Ok(convert_command(&bundle, out_dir, paper_id, main, &registry, &options, json))
        }
        Command::Batch {
            dir,
            jobs,
            cost_per_article,
            out,
            no_html,
        } => {
            let options = BatchOptions {
                jobs,
                cost_per_article,
                write_html: !no_html,
                report_path: Some(out.unwrap_or_else(|| dir.join("report.json"))),
                ..BatchOptions::default()
            };
            let report = corpus::run_batch(&dir, &registry, &options).map_err(|e| e.to_string())?;
            print!("{}", report.to_text());
            Ok(0)
        }
        Command::Plan {
            previous,
            changed_packages,
            current_version,
            cost_per_article,
        } => {
            let text = std::fs::read_to_string(&previous).map_err(|e| format!("{}: {e}", previous.display()))?;
            let report = CorpusReport::from_json(&text).map_err(|e| format!("{}: {e}", previous.display()))?;
            let changed: BTreeSet<String> = changed_packages.into_iter().filter(|s| !s.is_empty()).collect();
            let plan = corpus::plan_reconversion(&report, &current_version, &changed);
            for id in &plan {
                println!("{id}");
            }
            let rate = cost_per_article.unwrap_or(report.cost_per_article);
            eprintln!("{} of {} papers, estimated cost {}", plan.len(), report.total, estimate_cost(plan.len() as u64, rate));
            Ok(0)
        }
        Command::Serve { store, addr } => {
            let store = Arc::new(IssueStore::open(&store).map_err(|e| e.to_string())?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            eprintln!("listening on http://{addr}");
            runtime.block_on(intake::serve(store, addr)).map_err(|e| e.to_string())?;
            Ok(0)
        }
    }
}

fn convert_command(
    input: &Path,
    out_dir: Option<PathBuf>,
    paper_id: Option<String>,
    main: Option<String>,
    registry: &PackageRegistry,
    options: &ConvertOptions,
    json: bool,
) -> u8 {
    let (dir, main) = if input.is_file() {
        let name = input.file_name().map(|n| n.to_string_lossy().into_owned());
        (input.parent().unwrap_or(Path::new(".")).to_path_buf(), main.or(name))
    } else {
        (input.to_path_buf(), main)
    };
    let paper_id = paper_id.or_else(|| {
        let base = if input.is_file() { input.file_stem() } else { input.file_name() };
        base.map(|n| n.to_string_lossy().into_owned())
    });
    let mut options = options.clone();
    let result = match SourceBundle::from_dir_with_main(&dir, paper_id.as_deref(), main.as_deref()) {
        Ok(bundle) => {
            options.emit.paper_id = bundle.paper_id.clone();
            let result = convert(&bundle, registry, &options);
            let out_dir = out_dir.unwrap_or_else(|| dir.clone());
            if let Err(e) = write_outputs(&result, &dir, &out_dir) {
                eprintln!("structex: {e}");
                return EXIT_BUNDLE_INVALID as u8;
            }
            result
        }
        Err(e) => ConversionResult::bundle_invalid(paper_id.unwrap_or_else(|| "paper".into()), &e),
    };
    for d in &result.diagnostics {
        eprintln!("{d}");
    }
    if json {
        let mut shown = serde_json::to_value(&result).unwrap_or_default();
        if let Some(html) = shown.get_mut("html").and_then(|h| h.as_object_mut()) {
            html.remove("html");
        }
        println!("{}", serde_json::to_string_pretty(&shown).unwrap_or_default());
    } else {
        println!("{}: {}", result.paper_id, result.status);
    }
    if result.html.is_none() && result.diagnostics.iter().any(|d| d.stage == structex::diag::Stage::Bundle) {
        EXIT_BUNDLE_INVALID as u8
    } else {
        result.status.exit_code() as u8
    }
}

fn write_outputs(result: &ConversionResult, bundle_dir: &Path, out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    if let Some(artifact) = &result.html {
        std::fs::write(out_dir.join(format!("{}.html", result.paper_id)), &artifact.html)?;
        for asset in &artifact.assets {
            let from = bundle_dir.join(&asset.path);
            let to = out_dir.join(&asset.path);
            if from == to || !from.is_file() {
                continue;
            }
            if let Some(parent) = to.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::copy(&from, &to)?;
        }
    }
    if let Some(doc) = &result.document {
        let ast = serde_json::to_string_pretty(doc).map_err(std::io::Error::other)?;
        std::fs::write(out_dir.join(format!("{}.ast.json", result.paper_id)), ast)?;
    }
    Ok(())
}
