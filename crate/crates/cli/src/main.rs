use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pathpref_core::experiments::{
    read_batch_csv, run_batch, summarize, write_batch_csv, ExperimentConfig,
};
use pathpref_core::regions::{sample_regions, DEFAULT_SAMPLE_COUNT};
use pathpref_core::scenario::Scenario;
use pathpref_core::scenarios::{preset, preset_names};
use pathpref_service::Store;

#[derive(Parser)]
#[command(
    name = "pathpref",
    version,
    about = "Active preference learning for constrained path planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment batch and write one CSV row per trial and iteration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Omit the timestamp header line.
        #[arg(long)]
        no_header: bool,
    },
    /// Summarize a batch CSV into a JSON report.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Write a bundled scenario to a document, or list the presets.
    Scenario {
        /// Preset name; lists presets when omitted.
        name: Option<String>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Sample the equivalence regions of one task and dump them as JSON.
    Regions {
        /// Preset name or scenario file.
        scenario: String,
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Journal directory; sessions are kept in memory only when omitted.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    Ok(if path == Path::new("-") {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ))
    })
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if preset_names().contains(&arg) {
        return Ok(preset(arg)?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(
            "`{arg}` is neither a preset ({}) nor a file",
            preset_names().join(", ")
        );
    }
    Scenario::load(path).with_context(|| format!("loading {arg}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
            no_header,
        } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if jobs == Some(0) {
                bail!("--jobs must be at least 1");
            }
            let header = format!(
                "pathpref {} config={} master_seed={} generated_at={}",
                env!("CARGO_PKG_VERSION"),
                if cfg.name.is_empty() {
                    "unnamed"
                } else {
                    &cfg.name
                },
                cfg.master_seed,
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            );
            let rows = run_batch(cfg, jobs)?;
            let errors = rows.iter().filter(|r| r.status == "error").count();
            let mut w = output(&out)?;
            write_batch_csv(&rows, (!no_header).then_some(header.as_str()), &mut w)?;
            w.flush()?;
            eprintln!("{} rows written, {errors} error rows", rows.len());
        }
        Command::Summarize { input, out } => {
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let rows = read_batch_csv(file)?;
            let report = summarize(&rows)?;
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Scenario { name, out } => match name {
            None => {
                for n in preset_names() {
                    println!("{n}");
                }
            }
            Some(n) => {
                let s = preset(&n)?;
                let mut w = output(&out)?;
                writeln!(w, "{}", s.to_json_string())?;
                w.flush()?;
            }
        },
        Command::Regions {
            scenario,
            task,
            samples,
            seed,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let regions = sample_regions(&s.graph, &s.constraints, s.task(task)?, samples, seed)?;
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &regions.export())?;
            writeln!(w)?;
            w.flush()?;
            eprintln!("{} regions from {samples} samples", regions.len());
        }
        Command::Serve { addr, journal } => {
            let store = match journal {
                Some(dir) => Store::open(&dir)
                    .with_context(|| format!("opening journal {}", dir.display()))?,
                None => Store::in_memory(),
            };
            eprintln!("{} sessions restored; listening on {addr}", store.len());
            tokio::runtime::Runtime::new()?
                .block_on(pathpref_service::serve(addr, Arc::new(store)))?;
        }
    }
    Ok(())
}
