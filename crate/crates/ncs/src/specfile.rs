//! Specification files.
//!
//! ```toml
//! units = "physical"          # or "working"
//! initial = ["HOME"]
//! transitions = [["HOME", "B1"]]
//!
//! [[state]]
//! name = "HOME"
//! x = [-0.6]
//! next = ["HOME"]             # optional, merged with `transitions`
//!
//! [[unsafe]]                  # optional forbidden boxes, physical units
//! lo = [0.9]
//! hi = [1.0]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ncs_core::plant::AffineMap;
use ncs_core::synthesis::Specification;
use serde::Deserialize;

use crate::config::{toml_error, BoxSpec, ConfigError};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default = "default_units")]
    pub units: String,
    pub initial: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<[String; 2]>,
    /// Forbidden boxes (physical units); no state may lie inside one.
    #[serde(default, rename = "unsafe")]
    pub unsafe_boxes: Vec<BoxSpec>,
    pub state: Vec<SpecState>,
}

fn default_units() -> String {
    "physical".into()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecState {
    pub name: String,
    pub x: Vec<f64>,
    #[serde(default)]
    pub next: Vec<String>,
}

pub fn parse_spec_file(text: &str) -> Result<SpecFile, ConfigError> {
    toml::from_str(text).map_err(|e| toml_error(text, &e))
}

impl SpecFile {
    /// Resolves names and maps points into working coordinates.
    pub fn build(&self, state_map: &AffineMap) -> Result<Specification, ConfigError> {
        let mut index = BTreeMap::new();
        for (i, s) in self.state.iter().enumerate() {
            if index.insert(s.name.as_str(), i as u32).is_some() {
                return Err(ConfigError::new(
                    format!("spec.state[{}].name", i),
                    format!("duplicate name {:?}", s.name),
                ));
            }
        }
        let look = |field: &str, n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| ConfigError::new(field, format!("unknown state {:?}", n)))
        };
        let mut transitions = BTreeSet::new();
        for (i, s) in self.state.iter().enumerate() {
            for n in &s.next {
                transitions.insert((i as u32, look(&format!("spec.state[{}].next", i), n)?));
            }
        }
        for [a, b] in &self.transitions {
            transitions.insert((look("spec.transitions", a)?, look("spec.transitions", b)?));
        }
        let initial = self
            .initial
            .iter()
            .map(|n| look("spec.initial", n))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let states = match self.units.as_str() {
            "physical" => self.state.iter().map(|s| state_map.to_normalized(&s.x)).collect(),
            "working" => self.state.iter().map(|s| s.x.clone()).collect(),
            other => {
                return Err(ConfigError::new(
                    "spec.units",
                    format!("unknown units {:?} (expected physical or working)", other),
                ))
            }
        };
        if let Some(s) = self.state.iter().find(|s| s.x.len() != state_map.scale.len()) {
            return Err(ConfigError::new(
                "spec.state",
                format!("{} has dimension {}, plant has {}", s.name, s.x.len(), state_map.scale.len()),
            ));
        }
        for s in &self.state {
            let inside = self.unsafe_boxes.iter().any(|b| {
                s.x.iter()
                    .zip(b.lo.iter().zip(&b.hi))
                    .all(|(v, (lo, hi))| lo <= v && v <= hi)
            });
            if inside {
                return Err(ConfigError::new(
                    "spec.state",
                    format!("{} lies in the unsafe set", s.name),
                ));
            }
        }
        Specification::new(
            self.state.iter().map(|s| s.name.clone()).collect(),
            states,
            transitions,
            initial,
        )
        .map_err(|e| ConfigError::new("spec", e.to_string()))
    }
}

pub fn load_spec(path: &Path, state_map: &AffineMap) -> Result<Specification, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    parse_spec_file(&text)?.build(state_map)
}
