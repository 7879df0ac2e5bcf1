//! Config parsing and command dispatch for the `jumpsde` binary.

pub mod config;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use jumpsde_core::lab::ExperimentVerdict;

pub use config::RunConfig;
pub use run::{dispatch, Command, Outcome};

pub const EXIT_CONSISTENT: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

pub fn exit_code(verdict: ExperimentVerdict) -> i32 {
    match verdict {
        ExperimentVerdict::Consistent => EXIT_CONSISTENT,
        ExperimentVerdict::Violated => EXIT_VIOLATED,
        ExperimentVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

/// Load a config file (or the defaults when `path` is `None`) and apply
/// `key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    Ok(RunConfig::from_toml(&text, overrides)?)
}

/// Run `command` and write `<command>.json` plus artifacts into `dir`.
/// Returns the report path and the exit code of the verdict.
pub fn execute(command: Command, config: &RunConfig, dir: &Path) -> anyhow::Result<(PathBuf, i32)> {
    let mut out = dispatch(command, config).with_context(|| format!("{command} failed"))?;
    out.report.config_hash = config.hash();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in &out.files {
        let p = dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let path = dir.join(format!("{command}.json"));
    if config.wants(config::Format::Json) {
        let mut json = serde_json::to_vec_pretty(&out.report)?;
        json.push(b'\n');
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok((path, exit_code(out.report.verdict)))
}
