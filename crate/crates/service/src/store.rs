use std::collections::BTreeMap;
use std::sync::Arc;

use refcurve::io::ModelDocument;
use refcurve::{Dataset, FitReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub dataset: Dataset,
    /// Incremented by every include/exclude change.
    pub revision: u64,
    pub label: Option<String>,
}

/// A stored fit; never mutated after insertion.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelEntry {
    pub document: ModelDocument,
    pub report: FitReport,
    pub dataset_id: Option<String>,
    pub revision: Option<u64>,
}

/// Datasets and models of one session, serializable as a snapshot.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SessionStore {
    pub datasets: BTreeMap<String, DatasetEntry>,
    pub models: BTreeMap<String, Arc<ModelEntry>>,
    next_dataset: u64,
    next_model: u64,
}

impl SessionStore {
    pub fn insert_dataset(&mut self, dataset: Dataset, label: Option<String>) -> String {
        self.next_dataset += 1;
        let id = format!("d{}", self.next_dataset);
        self.datasets.insert(id.clone(), DatasetEntry { dataset, revision: 0, label });
        id
    }

    pub fn insert_model(&mut self, entry: ModelEntry) -> String {
        self.next_model += 1;
        let id = format!("m{}", self.next_model);
        self.models.insert(id.clone(), Arc::new(entry));
        id
    }
}
