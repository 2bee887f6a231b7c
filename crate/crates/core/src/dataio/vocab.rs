use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered room names; a room's id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomVocabulary {
    names: Vec<String>,
}

pub const KITCHEN: &str = "kitchen";
pub const LIVING_ROOM: &str = "living_room";
pub const DINING_ROOM: &str = "dining_room";
pub const HALLWAY: &str = "hallway";
pub const STAIRS: &str = "stairs";
pub const PORCH: &str = "porch";

impl Default for RoomVocabulary {
    /// The six ground-floor rooms with camera coverage.
    fn default() -> Self {
        Self {
            names: [KITCHEN, LIVING_ROOM, DINING_ROOM, HALLWAY, STAIRS, PORCH]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RoomVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("room vocabulary must not be empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || names[..i].contains(n) {
                return Err(Error::Config(format!("invalid or duplicate room name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::Vocabulary {
            name: name.to_string(),
            vocabulary: self.names.join(", "),
        })
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn describe(&self) -> String {
        self.names.join(", ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ids_are_dense() {
        let v = RoomVocabulary::default();
        assert_eq!(v.len(), 6);
        for (i, n) in v.names().iter().enumerate() {
            assert_eq!(v.id(n).unwrap(), i);
        }
        assert!(matches!(v.id("attic"), Err(Error::Vocabulary { .. })));
    }

    #[test]
    fn rejects_duplicates() {
        assert!(RoomVocabulary::new(vec!["a".into(), "a".into()]).is_err());
    }
}
