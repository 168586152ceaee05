//! `barrier`: command-line front end of the boom-barrier control toolkit.
//!
//! Exit status is 0 on success, 1 for configuration, input or domain
//! errors and 2 when a solver fails to converge. Errors are reported on
//! stderr as a JSON object.

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barrier_core::io::to_json_string;
use barrier_core::Error;
use clap::{Arg, ArgAction, ArgMatches};
use serde_json::json;
use sha2::{Digest, Sha256};

use commands::{Command, Context, Outcome};
use config::ProjectConfig;

fn cli(registry: &[Box<dyn Command>]) -> clap::Command {
    let mut app = clap::Command::new("barrier")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Modeling, planning, tuning and closed-loop validation for a boom-barrier drive")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").short('c').global(true).value_name("PATH").help("project configuration JSON"))
        .arg(
            Arg::new("set")
                .long("set")
                .global(true)
                .action(ArgAction::Append)
                .value_name("KEY=VALUE")
                .help("override a configuration field by dotted path"),
        )
        .arg(Arg::new("out").long("out").global(true).value_name("DIR").help("output directory (same as --set output_dir=DIR)"))
        .arg(
            Arg::new("jobs")
                .long("jobs")
                .short('j')
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .value_name("N")
                .help("worker threads for sweeps (default: all cores)"),
        );
    for c in registry {
        let mut sub = clap::Command::new(c.name()).about(c.about());
        for f in c.flags() {
            sub = sub.arg(Arg::new(f.long).long(f.long).value_name("VALUE").help(format!("{} (= --set {})", f.help, f.key)));
        }
        app = app.subcommand(sub);
    }
    app
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Geometry(_) => "geometry",
        Error::Config(_) => "config",
        Error::BlowUp { .. } => "blow_up",
        Error::Identifiability(_) => "identifiability",
        Error::NonPhysical(_) => "non_physical",
        Error::Infeasible(_) => "infeasible",
        Error::NotConverged(_) => "not_converged",
        Error::Numerical(_) => "numerical",
        Error::Inconclusive { .. } => "inconclusive",
        Error::UndefinedMetric(_) => "undefined_metric",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_convergence_failure() {
        2
    } else {
        1
    }
}

fn report_error(command: Option<&str>, e: &Error) -> ExitCode {
    let code = exit_code(e);
    let doc = json!({ "error": { "kind": error_kind(e), "message": e.to_string(), "command": command, "exit_code": code } });
    eprintln!("{}", serde_json::to_string(&doc).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(code)
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_outputs(dir: &Path, command: &str, cfg: &ProjectConfig, hash: &str, out: &Outcome) -> Result<(), Error> {
    let io = |e: std::io::Error, p: &Path| Error::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let mut listed = Vec::new();
    for a in &out.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| io(e, &path))?;
        listed.push(json!({ "file": a.name, "sha256": hex(&a.bytes) }));
    }
    let manifest = json!({
        "command": command,
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.tree,
        "artifacts": listed,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, to_json_string(&manifest)?).map_err(|e| io(e, &path))
}

fn execute(cmd: &dyn Command, sub: &ArgMatches) -> Result<Option<Error>, Error> {
    let mut cfg = ProjectConfig::load(sub.get_one::<String>("config").map(PathBuf::from).as_deref())?;
    for f in cmd.flags() {
        if let Some(v) = sub.get_one::<String>(f.long) {
            cfg.set(&format!("{}={v}", f.key))?;
        }
    }
    if let Some(dir) = sub.get_one::<String>("out") {
        cfg.set(&format!("output_dir={}", serde_json::to_string(dir).unwrap_or_default()))?;
    }
    for spec in sub.get_many::<String>("set").into_iter().flatten() {
        cfg.set(spec)?;
    }
    let settings = cfg.settings()?;
    let hash = cfg.hash(cmd.name());
    let jobs = sub.get_one::<usize>("jobs").copied().unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let dir = settings.output_dir.join(format!("{}-{}", cmd.name(), &hash[..12]));
    let ctx = Context { settings, config_hash: hash.clone(), pool };
    let outcome = cmd.run(&ctx)?;
    write_outputs(&dir, cmd.name(), &cfg, &hash, &outcome)?;
    let mut summary = outcome.summary.clone();
    if let Some(obj) = summary.as_object_mut() {
        obj.insert("output_dir".into(), json!(dir));
        obj.insert("config_hash".into(), json!(hash));
    }
    let _ = writeln!(std::io::stdout(), "{}", to_json_string(&summary)?.trim_end());
    Ok(outcome.failure)
}

fn main() -> ExitCode {
    let registry = commands::registry();
    let matches = match cli(&registry).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cmd = registry.iter().find(|c| c.name() == name).expect("registered subcommand");
    match execute(cmd.as_ref(), sub) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) | Err(e) => report_error(Some(name), &e),
    }
}
