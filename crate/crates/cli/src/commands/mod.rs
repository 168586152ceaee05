//! Subcommand registry. Every subcommand is a [`Command`] trait object; its
//! flags are shorthands for configuration overrides so that they enter the
//! config hash like any other setting.

mod closedloop;
mod drive_verify;
mod identify;
mod pipeline;
mod plan;
mod simulate;
mod tune;

use std::path::PathBuf;

use barrier_core::io::to_json_string;
use barrier_core::Error;
use serde::Serialize;
use serde_json::Value;

use crate::config::Settings;

/// A `--flag value` that is rewritten to `--set key=value`.
pub struct Flag {
    pub long: &'static str,
    pub key: &'static str,
    pub help: &'static str,
}

pub struct Context {
    pub settings: Settings,
    pub config_hash: String,
    pub pool: rayon::ThreadPool,
}

/// A file produced by a command, written under the run directory.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize + ?Sized>(name: &str, value: &T) -> Result<Self, Error> {
        Ok(Artifact { name: name.to_string(), bytes: to_json_string(value)?.into_bytes() })
    }

    pub fn csv(name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<Self, Error> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        Ok(Artifact { name: name.to_string(), bytes })
    }
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Printed on stdout.
    pub summary: Value,
    /// Error to report after the artifacts are written (e.g. an unconverged plan).
    pub failure: Option<Error>,
}

impl Outcome {
    pub fn ok(artifacts: Vec<Artifact>, summary: Value) -> Self {
        Outcome { artifacts, summary, failure: None }
    }
}

pub trait Command: Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn flags(&self) -> &'static [Flag] {
        &[]
    }
    fn run(&self, ctx: &Context) -> Result<Outcome, Error>;
}

pub fn registry() -> Vec<Box<dyn Command>> {
    vec![
        Box::new(simulate::Simulate),
        Box::new(identify::Identify),
        Box::new(drive_verify::DriveVerify),
        Box::new(plan::Plan),
        Box::new(tune::Tune),
        Box::new(closedloop::ClosedLoop),
        Box::new(pipeline::Pipeline),
    ]
}

pub fn require_path(p: &Option<PathBuf>, key: &str) -> Result<PathBuf, Error> {
    p.clone().ok_or_else(|| Error::Config(format!("{key} is required (set it in the project file or with --set {key}=PATH)")))
}

pub fn open(path: &std::path::Path) -> Result<std::fs::File, Error> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
