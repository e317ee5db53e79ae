//! Campaign manifest: which images to score, how, and where outputs go.
//!
//! Relative paths are resolved against the manifest's own directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendConfig, Campaign, CampaignImage, LevelOrder, DEFAULT_REASKS};
use crate::prompt::ExpertiseLevel;
use crate::registry::Criterion;
use crate::report::StreetAssignment;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {id:?}: file {path} does not exist")]
    MissingImage { id: String, path: PathBuf },
    #[error("levels must be strictly ascending, got {0:?}")]
    OrderingViolation(Vec<u8>),
    #[error("manifest lists no images")]
    EmptyCampaign,
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestImage {
    pub id: String,
    pub path: PathBuf,
    pub street: String,
}

/// Inline backend settings, or a path to a JSON file holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackendRef {
    Inline(BackendConfig),
    Path(PathBuf),
}

fn one() -> u32 {
    1
}

fn one_worker() -> usize {
    1
}

fn reasks() -> u32 {
    DEFAULT_REASKS
}

fn both_criteria() -> Vec<Criterion> {
    vec![Criterion::safety(), Criterion::attractiveness()]
}

fn all_levels() -> Vec<ExpertiseLevel> {
    ExpertiseLevel::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    pub images: Vec<ManifestImage>,
    #[serde(default = "all_levels")]
    pub levels: Vec<ExpertiseLevel>,
    #[serde(default = "one")]
    pub replicates: u32,
    #[serde(default = "both_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub split_criteria: bool,
    #[serde(default)]
    pub level_order: LevelOrder,
    #[serde(default = "one_worker")]
    pub workers: usize,
    #[serde(default = "reasks")]
    pub reasks: u32,
    pub backend: BackendRef,
    /// Registry document; the shipped registry when absent.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl CampaignManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| match e {
            ManifestError::Parse { message, .. } => ManifestError::Parse {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates; relative paths are joined onto `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut m: CampaignManifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for img in &mut m.images {
            resolve(&mut img.path);
        }
        resolve(&mut m.output_dir);
        if let Some(r) = &mut m.registry {
            resolve(r);
        }
        match &mut m.backend {
            BackendRef::Path(p) => {
                resolve(p);
                let text = std::fs::read_to_string(&*p).map_err(|source| ManifestError::Io {
                    path: p.clone(),
                    source,
                })?;
                let cfg: BackendConfig = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
                    path: p.clone(),
                    message: e.to_string(),
                })?;
                let cfg_base = p.parent().unwrap_or(Path::new(".")).to_owned();
                m.backend = BackendRef::Inline(cfg);
                m.resolve_script(&cfg_base);
            }
            BackendRef::Inline(_) => m.resolve_script(base),
        }
        m.validate()?;
        Ok(m)
    }

    fn resolve_script(&mut self, base: &Path) {
        if let BackendRef::Inline(cfg) = &mut self.backend {
            if let Some(s) = &mut cfg.script {
                if s.is_relative() {
                    *s = base.join(&*s);
                }
            }
        }
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.images.is_empty() {
            return Err(ManifestError::EmptyCampaign);
        }
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if img.id.is_empty() {
                return Err(ManifestError::Invalid("empty image id".into()));
            }
            if !ids.insert(&img.id) {
                return Err(ManifestError::DuplicateImage(img.id.clone()));
            }
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ManifestError::OrderingViolation(
                self.levels.iter().map(|l| l.get()).collect(),
            ));
        }
        if self.replicates == 0 {
            return Err(ManifestError::Invalid("replicates must be >= 1".into()));
        }
        if self.criteria.is_empty() {
            return Err(ManifestError::Invalid("no criteria".into()));
        }
        self.backend_config()
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))
    }

    pub fn backend_config(&self) -> &BackendConfig {
        match &self.backend {
            BackendRef::Inline(cfg) => cfg,
            BackendRef::Path(_) => unreachable!("resolved at load time"),
        }
    }

    /// Fails on the first image path that does not exist.
    pub fn check_files(&self) -> Result<(), ManifestError> {
        match self.images.iter().find(|img| !img.path.is_file()) {
            Some(img) => Err(ManifestError::MissingImage {
                id: img.id.clone(),
                path: img.path.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn load_images(&self) -> Result<Vec<CampaignImage>, ManifestError> {
        self.check_files()?;
        self.images
            .iter()
            .map(|img| {
                let bytes = std::fs::read(&img.path).map_err(|source| ManifestError::Io {
                    path: img.path.clone(),
                    source,
                })?;
                Ok(CampaignImage {
                    id: img.id.clone(),
                    street: img.street.clone(),
                    bytes,
                })
            })
            .collect()
    }

    pub fn campaign(&self) -> Campaign {
        Campaign {
            levels: self.levels.clone(),
            criteria: self.criteria.clone(),
            split_criteria: self.split_criteria,
            replicates: self.replicates,
            workers: self.workers,
            order: self.level_order,
            reasks: self.reasks,
        }
    }

    pub fn assignment(&self) -> StreetAssignment {
        self.images
            .iter()
            .map(|img| (img.id.clone(), img.street.clone()))
            .collect()
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.output_dir.join("ledger.jsonl")
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join("records.jsonl")
    }

    pub fn prompts_dir(&self) -> PathBuf {
        self.output_dir.join("prompts")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("report")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": "a", "path": "img/a.jpg", "street": "North Road"}],
        "backend": {"kind": "mock", "script": "script.json"},
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_and_relative_paths() {
        let m = CampaignManifest::from_json(MINIMAL, Path::new("/data/run")).unwrap();
        assert_eq!(m.levels, ExpertiseLevel::ALL.to_vec());
        assert_eq!(m.replicates, 1);
        assert_eq!(m.criteria, both_criteria());
        assert_eq!(m.images[0].path, PathBuf::from("/data/run/img/a.jpg"));
        assert_eq!(m.output_dir, PathBuf::from("/data/run/out"));
        assert_eq!(m.backend_config().script, Some(PathBuf::from("/data/run/script.json")));
        assert_eq!(m.assignment()["a"], "North Road");
    }

    #[test]
    fn rejects_unsorted_levels_and_duplicates() {
        let unsorted = MINIMAL.replace("\"output_dir\"", "\"levels\": [4, 1], \"output_dir\"");
        assert!(matches!(
            CampaignManifest::from_json(&unsorted, Path::new(".")),
            Err(ManifestError::OrderingViolation(l)) if l == vec![4, 1]
        ));
        let dup = MINIMAL.replace(
            "\"street\": \"North Road\"}",
            "\"street\": \"North Road\"}, {\"id\": \"a\", \"path\": \"b.jpg\", \"street\": \"X\"}",
        );
        assert!(matches!(
            CampaignManifest::from_json(&dup, Path::new(".")),
            Err(ManifestError::DuplicateImage(_))
        ));
        let bad_level = MINIMAL.replace("\"output_dir\"", "\"levels\": [5], \"output_dir\"");
        assert!(matches!(
            CampaignManifest::from_json(&bad_level, Path::new(".")),
            Err(ManifestError::Parse { .. })
        ));
    }

    #[test]
    fn missing_image_file() {
        let m = CampaignManifest::from_json(MINIMAL, Path::new("/nonexistent")).unwrap();
        assert!(matches!(m.check_files(), Err(ManifestError::MissingImage { .. })));
    }

    #[test]
    fn backend_by_reference() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("conf")).unwrap();
        std::fs::write(
            dir.path().join("conf/backend.json"),
            r#"{"kind": "mock", "script": "s.json"}"#,
        )
        .unwrap();
        let text = MINIMAL.replace(
            r#"{"kind": "mock", "script": "script.json"}"#,
            r#""conf/backend.json""#,
        );
        let m = CampaignManifest::from_json(&text, dir.path()).unwrap();
        assert_eq!(m.backend_config().script, Some(dir.path().join("conf/s.json")));
    }
}
