//! Datasets available to sessions.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use jedi_core::data::{split_examples, DEFAULT_SPLIT};
use jedi_core::harmonic::Sparsity;
use jedi_core::model::{Concept, EtaSchedule, Example, Label, TeachingPool, DEFAULT_ETA0};
use jedi_core::target::{default_target_eta, train_target_concept, DEFAULT_L2, DEFAULT_TARGET_ITERS};
use jedi_core::teacher::TeachingEnv;

use crate::csvio::read_examples;
use crate::error::{Error, Result};
use crate::experiment::Bandwidth;

/// Teaching pool, held-out evaluation examples and the fitted target.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub name: String,
    pub teach: TeachingPool,
    pub eval: Vec<Example>,
    pub target: Concept,
    pub sigma: Vec<f64>,
    pub schedule: EtaSchedule,
}

impl DatasetEntry {
    pub fn new(name: impl Into<String>, teach: TeachingPool, eval: Vec<Example>, bandwidth: Bandwidth) -> Result<Self> {
        let name = name.into();
        let ids: HashSet<&str> = teach.examples().iter().map(|e| e.id.as_str()).collect();
        if let Some(e) = eval.iter().find(|e| ids.contains(e.id.as_str())) {
            return Err(Error::Validation(format!("dataset `{name}`: `{}` is in both teach and eval sets", e.id)));
        }
        if eval.iter().any(|e| e.x.len() != teach.dimension()) {
            return Err(Error::Validation(format!("dataset `{name}`: eval dimension differs from teach")));
        }
        let target = train_target_concept(&teach, default_target_eta(&teach, DEFAULT_L2), DEFAULT_TARGET_ITERS, DEFAULT_L2)?;
        let sigma = bandwidth.sigma(&teach)?;
        TeachingEnv::new(&teach, &target, &sigma)?;
        Ok(DatasetEntry {
            name,
            teach,
            eval,
            target,
            sigma,
            schedule: EtaSchedule::Decay { eta0: DEFAULT_ETA0, c: 200.0 },
        })
    }

    pub fn env(&self) -> TeachingEnv<'_> {
        TeachingEnv {
            pool: &self.teach,
            target: &self.target,
            sigma: &self.sigma,
            sparsity: Sparsity::Auto,
        }
    }

    pub fn eval_labels(&self) -> Vec<Label> {
        self.eval.iter().map(|e| e.y).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    datasets: BTreeMap<String, Arc<DatasetEntry>>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn insert(&mut self, entry: DatasetEntry) {
        self.datasets.insert(entry.name.clone(), Arc::new(entry));
    }

    pub fn get(&self, name: &str) -> Option<Arc<DatasetEntry>> {
        self.datasets.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// Register every dataset under `dir`: subdirectories holding
    /// `teach.csv` and `eval.csv`, and single `NAME.csv` files, which are
    /// split into teach and eval sets with seed 0.
    pub fn load_dir(dir: &Path, bandwidth: Bandwidth) -> Result<Self> {
        let mut reg = Registry::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            let Some(name) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            if path.is_dir() {
                let (t, v) = (path.join("teach.csv"), path.join("eval.csv"));
                if t.is_file() && v.is_file() {
                    let teach = TeachingPool::new(read_examples(&t)?)?;
                    reg.insert(DatasetEntry::new(name, teach, read_examples(&v)?, bandwidth)?);
                }
            } else if path.extension().is_some_and(|x| x == "csv") {
                let (teach, eval) = split_examples(read_examples(&path)?, DEFAULT_SPLIT, 0)?;
                reg.insert(DatasetEntry::new(name, TeachingPool::new(teach)?, eval, bandwidth)?);
            }
        }
        if reg.is_empty() {
            return Err(Error::Validation(format!("no datasets found in {}", dir.display())));
        }
        Ok(reg)
    }
}
