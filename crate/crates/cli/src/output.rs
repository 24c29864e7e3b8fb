use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use vesselcomm::SimulationScenario;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO_COPY: &str = "scenario.toml";

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub scenario_digest: String,
    pub seed: u64,
    pub workers: usize,
    pub duration_s: f64,
    pub files: Vec<String>,
}

/// Collects the files of one command run and finishes with a manifest.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("record serializes");
        text.push('\n');
        self.write(name, &text)
    }

    /// Store the scenario as run, then the manifest describing every file written.
    pub fn finish(mut self, command: &str, scenario: &SimulationScenario, workers: usize) -> Result<(), CliError> {
        self.write(SCENARIO_COPY, &scenario.to_toml())?;
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario_digest: scenario.digest(),
            seed: scenario.seed,
            workers,
            duration_s: self.started.elapsed().as_secs_f64(),
            files: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Print one JSON record on stdout.
pub fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("record serializes"));
}
