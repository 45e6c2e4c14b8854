//! Command-line driver: TOML configuration, content-addressed cache, JSON and CSV output.

pub mod cache;
pub mod commands;
pub mod config;
pub mod selftest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cache::Cache;
use commands::{Output, Table};
use config::{Format, RunConfig, SCHEMA};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    WeldTorus,
    WeldCylinder,
    Fcs,
    Moments,
    Ldf,
    Converge,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::WeldTorus => "weld-torus",
            Command::WeldCylinder => "weld-cylinder",
            Command::Fcs => "fcs",
            Command::Moments => "moments",
            Command::Ldf => "ldf",
            Command::Converge => "converge",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "weldfcs", version, about = "Heat-flow cumulant generating functions from conformal welding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Cache directory; falls back to $WELDFCS_CACHE, then io.cache_dir.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Print the full JSON document on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Finite-volume torus welding at one flow time.
    WeldTorus(Common),
    /// Infinite-volume cylinder welding at one flow time.
    WeldCylinder(Common),
    /// lnPsi_t(lambda) in infinite and/or finite volume.
    Fcs(Common),
    /// Mean and variance: closed form against the welding pipeline.
    Moments(Common),
    /// Long-time rates, rate function and symmetry checks.
    Ldf(Common),
    /// Box-size and resolution sweeps.
    Converge(Common),
    /// Quick built-in consistency checks.
    Selftest(Common),
}

impl Sub {
    fn split(&self) -> (Command, &Common) {
        match self {
            Sub::WeldTorus(c) => (Command::WeldTorus, c),
            Sub::WeldCylinder(c) => (Command::WeldCylinder, c),
            Sub::Fcs(c) => (Command::Fcs, c),
            Sub::Moments(c) => (Command::Moments, c),
            Sub::Ldf(c) => (Command::Ldf, c),
            Sub::Converge(c) => (Command::Converge, c),
            Sub::Selftest(c) => (Command::Selftest, c),
        }
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Output> {
    match cmd {
        Command::WeldTorus => commands::weld_torus(cfg),
        Command::WeldCylinder => commands::weld_cylinder(cfg),
        Command::Fcs => commands::fcs(cfg),
        Command::Moments => commands::moments(cfg),
        Command::Ldf => commands::ldf(cfg),
        Command::Converge => commands::converge(cfg),
        Command::Selftest => Err(Error::InvalidArgument("selftest has no configured output".into())),
    }
}

/// Cache key over the command, crate version and every computational input (the io block excluded).
pub fn cache_key(cmd: Command, cfg: &RunConfig) -> String {
    let payload = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "schema": cfg.schema,
        "profile": cfg.profile,
        "theory": cfg.theory,
        "numerics": cfg.numerics,
        "experiment": cfg.experiment,
    });
    Cache::key(&payload.to_string())
}

pub fn document(cmd: Command, cfg: &RunConfig, key: &str, out: &Output) -> Value {
    json!({
        "schema": SCHEMA,
        "command": cmd.name(),
        "metadata": {
            "version": env!("CARGO_PKG_VERSION"),
            "cache_key": key,
            "config": cfg,
        },
        "result": out.result,
    })
}

fn write_csv(path: &Path, t: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(&t.header).map_err(|e| Error::Io(e.to_string()))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outputs(cmd: Command, cfg: &RunConfig, doc: &Value, out: &Output) -> Result<Vec<PathBuf>> {
    let dir = PathBuf::from(&cfg.io.output_dir);
    std::fs::create_dir_all(&dir)?;
    let mut written = vec![];
    if cfg.io.formats.contains(&Format::Json) {
        let p = dir.join(format!("{}.json", cmd.name()));
        std::fs::write(&p, pretty(doc) + "\n")?;
        written.push(p);
    }
    if cfg.io.formats.contains(&Format::Csv) {
        for t in &out.tables {
            let p = dir.join(&t.name);
            write_csv(&p, t)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Writes a line to stdout, ignoring a closed pipe.
fn out(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn set_threads(n: Option<usize>) -> Result<()> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Error::config("--threads", "must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn selftest(json_out: bool) -> i32 {
    let checks = selftest::run_all();
    let failed = checks.iter().filter(|c| c.status != selftest::Status::Pass).count();
    if json_out {
        let doc = json!({
            "schema": SCHEMA,
            "command": "selftest",
            "metadata": { "version": env!("CARGO_PKG_VERSION") },
            "result": { "checks": checks, "total": checks.len(), "failed": failed },
        });
        out(&pretty(&doc));
    } else {
        for c in &checks {
            let d = c.defect.map(|d| format!("{d:.3e}")).unwrap_or_else(|| "-".into());
            let status = match c.status {
                selftest::Status::Pass => "PASS",
                selftest::Status::Fail => "FAIL",
                selftest::Status::Error => "ERROR",
            };
            out(&format!("{status:5} {:48} defect {d:>10}  tol {:.1e}{}", c.name, c.tolerance, c.message.as_deref().map(|m| format!("  {m}")).unwrap_or_default()));
        }
        out(&format!("{} checks, {} failed", checks.len(), failed));
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn dump(cmd: Command, cfg: &RunConfig, err: &Error) {
    let doc = json!({
        "schema": SCHEMA,
        "command": cmd.name(),
        "error": { "kind": format!("{err:?}"), "message": err.to_string() },
        "metadata": { "version": env!("CARGO_PKG_VERSION"), "config": cfg },
    });
    let text = pretty(&doc);
    let _ = writeln!(std::io::stderr(), "{text}");
    let dir = PathBuf::from(&cfg.io.output_dir);
    if std::fs::create_dir_all(&dir).is_ok() {
        let _ = std::fs::write(dir.join(format!("{}.error.json", cmd.name())), text + "\n");
    }
}

fn run_command(cmd: Command, common: &Common) -> i32 {
    let Some(path) = common.config.as_deref() else {
        eprintln!("error: {} requires --config <file>", cmd.name());
        return EXIT_CONFIG;
    };
    let cfg = match RunConfig::load(path).and_then(|c| set_threads(common.threads).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let key = cache_key(cmd, &cfg);
    let cache = Cache::resolve(common.cache_dir.as_deref(), cfg.io.cache_dir.as_deref());
    let cached: Option<Output> = cache.as_ref().and_then(|c| c.get(&key)).and_then(|s| serde_json::from_str(&s).ok());
    let output = match cached {
        Some(o) => {
            eprintln!("cache hit {key}");
            o
        }
        None => match execute(cmd, &cfg) {
            Ok(o) => {
                if let Some(c) = &cache {
                    if let Err(e) = c.put(&key, &serde_json::to_string(&o).expect("outputs serialize")) {
                        eprintln!("warning: cache write failed: {e}");
                    }
                }
                o
            }
            Err(e) if e.is_config() => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
            Err(e) => {
                eprintln!("numerical failure: {e}");
                dump(cmd, &cfg, &e);
                return EXIT_NUMERICAL;
            }
        },
    };
    let doc = document(cmd, &cfg, &key, &output);
    if let Err(e) = write_outputs(cmd, &cfg, &doc, &output) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    if common.json {
        out(&pretty(&doc));
    } else {
        for line in &output.summary {
            out(line);
        }
    }
    EXIT_OK
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (cmd, common) = cli.command.split();
    if cmd == Command::Selftest {
        if let Err(e) = set_threads(common.threads) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        return selftest(common.json);
    }
    run_command(cmd, common)
}
