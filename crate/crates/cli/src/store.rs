//! File-backed store rooted at the data directory: patients are read from
//! cohort folders, sessions and simulated states are written under
//! `sessions/` and `states/`.

use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use mewm_core::explorer::{ExplorationConfig, Plan};
use mewm_core::voxel::io;
use mewm_core::{ComboNames, Mask3, Volume3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    pub fn is_active(self) -> bool {
        matches!(self, JobStatus::Queued | JobStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedProtocol {
    pub combo: ComboNames,
    pub mean_risk: f64,
    pub replica_risks: Vec<f64>,
    #[serde(rename = "T")]
    pub replicas: usize,
    pub seed: u64,
    pub state_id: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRecord {
    pub job_id: String,
    pub status: JobStatus,
    pub config: ExplorationConfig,
    pub goal: String,
    #[serde(default)]
    pub plan: Option<Plan>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub patient_id: String,
    /// `planted` or a model file relative to the data root.
    pub model: String,
    pub pre_state_id: String,
    pub evaluated: Vec<EvaluatedProtocol>,
    #[serde(default)]
    pub exploration: Option<ExplorationRecord>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        bail!("malformed id {id:?}");
    }
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["sessions", "states"] {
            std::fs::create_dir_all(root.join(sub))
                .with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves a root-relative reference, refusing anything that escapes the root.
    pub fn resolve(&self, relative: &str) -> Result<PathBuf> {
        let p = Path::new(relative);
        if relative.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
            bail!("path {relative:?} must be relative to the data root without '..'");
        }
        Ok(self.root.join(p))
    }

    fn session_path(&self, id: &str) -> Result<PathBuf> {
        check_id(id)?;
        Ok(self.root.join("sessions").join(format!("{id}.json")))
    }

    fn state_dir(&self, id: &str) -> Result<PathBuf> {
        check_id(id)?;
        Ok(self.root.join("states").join(id))
    }

    pub fn save_session(&self, s: &SessionState) -> Result<()> {
        let path = self.session_path(&s.id)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(s)?)?;
        std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load_sessions(&self) -> Result<Vec<SessionState>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(self.root.join("sessions"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path)?;
                out.push(
                    serde_json::from_str(&text)
                        .with_context(|| format!("reading {}", path.display()))?,
                );
            }
        }
        out.sort_by(|a: &SessionState, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn write_state(&self, id: &str, volume: &Volume3, mask: &Mask3) -> Result<()> {
        let dir = self.state_dir(id)?;
        std::fs::create_dir_all(&dir)?;
        io::write_volume(&dir.join("volume"), volume)?;
        io::write_mask(&dir.join("mask"), mask)?;
        Ok(())
    }

    pub fn has_state(&self, id: &str) -> bool {
        self.state_dir(id)
            .is_ok_and(|d| io::header_path(&d.join("volume")).exists())
    }

    pub fn read_state_volume(&self, id: &str) -> Result<Volume3> {
        Ok(io::read_volume(&self.state_dir(id)?.join("volume"))?)
    }

    pub fn read_state_mask(&self, id: &str) -> Result<Mask3> {
        Ok(io::read_mask(&self.state_dir(id)?.join("mask"))?)
    }
}
