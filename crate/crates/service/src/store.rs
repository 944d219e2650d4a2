use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use gptree_core::harness::campaign::SPEC_FILE;
use gptree_core::harness::{Campaign, CampaignSpec};

use crate::error::ApiError;

/// One campaign: an immutable snapshot for readers plus a lock that
/// serializes writers.
struct Slot {
    writer: tokio::sync::Mutex<()>,
    snapshot: RwLock<Arc<Campaign>>,
}

/// Campaign directories under one root, opened lazily and cached.
pub struct CampaignStore {
    root: PathBuf,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
    create: tokio::sync::Mutex<()>,
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl CampaignStore {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            slots: Mutex::new(HashMap::new()),
            create: tokio::sync::Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Ids of every campaign directory in the store, sorted.
    pub fn list(&self) -> std::io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join(SPEC_FILE).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found(format!("unknown campaign '{id}'")));
        }
        let mut slots = self.slots.lock().expect("store lock");
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        let dir = self.root.join(id);
        if !dir.join(SPEC_FILE).is_file() {
            return Err(ApiError::not_found(format!("unknown campaign '{id}'")));
        }
        let campaign = Campaign::open(&dir)?;
        let slot = Arc::new(Slot {
            writer: tokio::sync::Mutex::new(()),
            snapshot: RwLock::new(Arc::new(campaign)),
        });
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// The current state of a campaign; later writes do not affect it.
    pub fn snapshot(&self, id: &str) -> Result<Arc<Campaign>, ApiError> {
        let slot = self.slot(id)?;
        let snap = slot.snapshot.read().expect("snapshot lock").clone();
        Ok(snap)
    }

    pub async fn create(
        &self,
        id: Option<String>,
        spec: CampaignSpec,
        csv: String,
    ) -> Result<(String, Arc<Campaign>), ApiError> {
        let _guard = self.create.lock().await;
        let id = match id {
            Some(id) if valid_id(&id) => id,
            Some(id) => {
                return Err(ApiError::invalid(format!(
                    "campaign id '{id}' must be 1-64 characters of [A-Za-z0-9_-]"
                )))
            }
            None => self.next_id()?,
        };
        let dir = self.root.join(&id);
        let campaign = tokio::task::spawn_blocking(move || Campaign::create(dir, spec, &csv))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let snap = Arc::new(campaign);
        let slot = Arc::new(Slot {
            writer: tokio::sync::Mutex::new(()),
            snapshot: RwLock::new(snap.clone()),
        });
        self.slots.lock().expect("store lock").insert(id.clone(), slot);
        Ok((id, snap))
    }

    fn next_id(&self) -> Result<String, ApiError> {
        let taken = self.list().map_err(|e| ApiError::internal(e.to_string()))?;
        let n = (1..)
            .find(|n| !taken.contains(&format!("campaign-{n}")) && !self.root.join(format!("campaign-{n}")).exists());
        Ok(format!("campaign-{}", n.expect("unbounded range")))
    }

    /// Applies `f` to a private copy and publishes it on success. Writers on
    /// one campaign run one at a time.
    pub async fn update<F>(&self, id: &str, f: F) -> Result<Arc<Campaign>, ApiError>
    where
        F: FnOnce(&mut Campaign) -> gptree_core::Result<()> + Send + 'static,
    {
        let slot = self.slot(id)?;
        let _guard = slot.writer.lock().await;
        let current = slot.snapshot.read().expect("snapshot lock").clone();
        let next = tokio::task::spawn_blocking(move || {
            let mut next = (*current).clone();
            f(&mut next).map(|_| next)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        let next = Arc::new(next);
        *slot.snapshot.write().expect("snapshot lock") = next.clone();
        Ok(next)
    }
}
