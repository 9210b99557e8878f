//! Hyperparameter profiles: named lambda/k presets per model family, shipped
//! as JSON files and loadable from arbitrary paths.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    /// Preset lambda per combination score name.
    #[serde(default)]
    pub lambda: BTreeMap<String, f64>,
    /// Preset neighbor count per score name.
    #[serde(default)]
    pub k: BTreeMap<String, usize>,
}

const VISION_CLIP: &str = include_str!("../profiles/vision-clip.json");
const VISION_SUPERVISED: &str = include_str!("../profiles/vision-supervised.json");

/// Resolve a `--profile` argument: a shipped profile name or a JSON path.
pub fn load_profile(arg: &str) -> Result<Profile> {
    let embedded = match arg {
        "vision-clip" => Some(VISION_CLIP),
        "vision-supervised" => Some(VISION_SUPERVISED),
        _ => None,
    };
    if let Some(text) = embedded {
        return serde_json::from_str(text).context("parsing embedded profile");
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(
            "unknown profile `{arg}`; expected vision-clip, vision-supervised, or a JSON path"
        );
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading profile {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing profile {}", path.display()))
}

/// Built-in defaults used when neither a flag nor a profile sets k.
pub fn default_k(score: &str) -> usize {
    match score {
        "knn" => 50,
        _ => 25,
    }
}
