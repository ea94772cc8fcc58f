use std::collections::HashMap;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered, named parameter tensors. Registration order defines checkpoint
/// layout, so construction must be deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id.0);
        self.entries.push((name, tensor.with_requires_grad(true)));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Put a parameter on a tape as a leaf, tracking gradients unless frozen.
    pub fn leaf(&self, tape: &mut Tape, id: ParamId) -> NodeId {
        tape.leaf(self.get(id).clone())
    }

    /// Freeze or unfreeze every parameter whose name starts with `prefix`.
    /// Returns how many parameters matched.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut hits = 0;
        for (name, tensor) in &mut self.entries {
            if name.starts_with(prefix) {
                tensor.requires_grad = trainable;
                hits += 1;
            }
        }
        hits
    }

    /// Overwrite values of every parameter whose name exists in `source`
    /// (shape-checked). Returns the transferred names.
    pub fn adopt_values(&mut self, source: &ParamSet) -> Result<Vec<String>> {
        let mut moved = Vec::new();
        for (name, tensor) in &mut self.entries {
            if let Some(src_id) = source.lookup(name) {
                let src = source.get(src_id);
                if src.shape() != tensor.shape() {
                    return Err(Error::Dimension {
                        op: "adopt_values",
                        detail: format!("{name}: {:?} vs {:?}", src.shape(), tensor.shape()),
                    });
                }
                let rg = tensor.requires_grad;
                *tensor = src.clone().with_requires_grad(rg);
                moved.push(name.clone());
            }
        }
        Ok(moved)
    }

    /// Bitwise snapshot of parameters under a name prefix, for freeze checks.
    pub fn snapshot_prefix(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect()
    }
}
