use std::collections::HashSet;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::ArapError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub vertex: usize,
    pub target: Point3<f64>,
}

/// Positional constraints. Serialized as `{"version": 1, "handles": [...]}`; a bare array of
/// handles is also accepted on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "HandleDoc")]
pub struct HandleSet {
    pub version: u32,
    pub handles: Vec<Handle>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HandleDoc {
    List(Vec<Handle>),
    Versioned {
        #[serde(default = "one")]
        version: u32,
        handles: Vec<Handle>,
    },
}

fn one() -> u32 {
    1
}

impl From<HandleDoc> for HandleSet {
    fn from(doc: HandleDoc) -> Self {
        match doc {
            HandleDoc::List(handles) => Self { version: 1, handles },
            HandleDoc::Versioned { version, handles } => Self { version, handles },
        }
    }
}

impl HandleSet {
    pub fn new(handles: Vec<Handle>) -> Self {
        Self { version: 1, handles }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Point3<f64>)>) -> Self {
        Self::new(pairs.into_iter().map(|(vertex, target)| Handle { vertex, target }).collect())
    }

    /// Pins the given vertices at their current positions.
    pub fn pinned(vertices: &[Point3<f64>], indices: impl IntoIterator<Item = usize>) -> Self {
        Self::from_pairs(indices.into_iter().map(|i| (i, vertices[i])))
    }

    pub fn from_json(text: &str) -> Result<Self, ArapError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ArapError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("handle set serializes")
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.handles.iter().map(|h| h.vertex).collect()
    }

    pub fn validate(&self, num_vertices: usize) -> Result<(), ArapError> {
        if self.handles.is_empty() {
            return Err(ArapError::NoHandles);
        }
        let mut seen = HashSet::new();
        for h in &self.handles {
            if h.vertex >= num_vertices {
                return Err(ArapError::HandleOutOfRange { index: h.vertex, num_vertices });
            }
            if !seen.insert(h.vertex) {
                return Err(ArapError::DuplicateHandle(h.vertex));
            }
        }
        Ok(())
    }
}
