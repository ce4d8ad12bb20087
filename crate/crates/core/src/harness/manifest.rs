//! Run manifests: which files a run wrote, with which seeds and configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Seeds of one run inside an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeed {
    pub label: String,
    pub seeds: Vec<(String, u64)>,
}

/// Written as `manifest.json` in the output directory. `artifacts` lists every
/// other file the run wrote, relative to that directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub library_version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub artifacts: Vec<PathBuf>,
    pub run_seeds: Vec<RunSeed>,
    pub wall_clock_seconds: f64,
    pub created_unix_seconds: u64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!(
                "{} has no {MANIFEST_FILE}; refusing to compare unmanifested outputs",
                dir.display()
            )));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Registers output files of a run so that each is written, and listed, once.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: BTreeSet<PathBuf>,
    run_seeds: Vec<RunSeed>,
    started: Instant,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeSet::new(),
            run_seeds: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, with parent directories created.
    pub fn path(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let rel = rel.as_ref().to_path_buf();
        if rel == Path::new(MANIFEST_FILE) || !self.files.insert(rel.clone()) {
            return Err(Error::InvalidArgument(format!(
                "artifact {} registered twice",
                rel.display()
            )));
        }
        let full = self.root.join(&rel);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(full)
    }

    pub fn add_seeds(&mut self, label: impl Into<String>, seeds: Vec<(String, u64)>) {
        self.run_seeds.push(RunSeed {
            label: label.into(),
            seeds,
        });
    }

    pub fn files(&self) -> impl Iterator<Item = &PathBuf> {
        self.files.iter()
    }

    /// Writes the manifest; files registered but never created are dropped from it.
    pub fn finish(self, config: &ExperimentConfig) -> Result<RunManifest> {
        let artifacts = self
            .files
            .iter()
            .filter(|f| self.root.join(f).is_file())
            .cloned()
            .collect();
        let manifest = RunManifest {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: config.experiment,
            config: config.clone(),
            artifacts,
            run_seeds: self.run_seeds,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            created_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        std::fs::write(
            self.root.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }
}

/// Files that differ between two manifested output directories (by artifact list
/// and byte content). Errors when either directory lacks a manifest.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<Vec<PathBuf>> {
    let (ma, mb) = (RunManifest::read(a)?, RunManifest::read(b)?);
    let sa: BTreeSet<&PathBuf> = ma.artifacts.iter().collect();
    let sb: BTreeSet<&PathBuf> = mb.artifacts.iter().collect();
    let mut differing: Vec<PathBuf> = sa.symmetric_difference(&sb).map(|p| (*p).clone()).collect();
    for rel in sa.intersection(&sb) {
        if std::fs::read(a.join(rel))? != std::fs::read(b.join(rel))? {
            differing.push((*rel).clone());
        }
    }
    differing.sort();
    Ok(differing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_artifacts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut arts = Artifacts::create(dir.path()).unwrap();
        let p = arts.path("a/b.csv").unwrap();
        std::fs::write(&p, "x\n").unwrap();
        assert!(arts.path("a/b.csv").is_err());
        assert!(arts.path(MANIFEST_FILE).is_err());
        let m = arts
            .finish(&ExperimentConfig::preset(ExperimentKind::Bounds))
            .unwrap();
        assert_eq!(m.artifacts, vec![PathBuf::from("a/b.csv")]);
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn comparison_needs_manifests() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(compare_outputs(a.path(), b.path()).is_err());
        for d in [&a, &b] {
            let mut arts = Artifacts::create(d.path()).unwrap();
            std::fs::write(arts.path("x.csv").unwrap(), "1\n").unwrap();
            arts.finish(&ExperimentConfig::preset(ExperimentKind::Bounds))
                .unwrap();
        }
        assert!(compare_outputs(a.path(), b.path()).unwrap().is_empty());
        std::fs::write(b.path().join("x.csv"), "2\n").unwrap();
        assert_eq!(
            compare_outputs(a.path(), b.path()).unwrap(),
            vec![PathBuf::from("x.csv")]
        );
    }
}
