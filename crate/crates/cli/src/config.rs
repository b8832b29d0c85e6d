//! JSON experiment configuration.
//!
//! A config file is a partial [`McConfig`]: every key it sets overrides the
//! default, and any key the schema does not know is an error. Two shorthands
//! are expanded before validation:
//!
//! - a numeric key ending in `_g` is read in units of standard gravity, so
//!   `"a_m_max_g": 45` sets `a_m_max` to 45·g;
//! - a warhead may be given as a preset name (`"medium"`), and
//!   `guidance.kind` may be a bare variant name (`"kpm"`). A bare `"kpm"`
//!   plans against the scoring warhead.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kpm_core::dynamics::STANDARD_GRAVITY;
use kpm_core::{McConfig, WarheadPreset};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Keys left out of the digest because they cannot change any result.
const NON_SEMANTIC_KEYS: [&str; 1] = ["parallelism"];

pub fn load(path: &Path) -> Result<McConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json_str(&text).with_context(|| format!("in {}", path.display()))
}

pub fn from_json_str(text: &str) -> Result<McConfig> {
    let user: Value = serde_json::from_str(text).context("config is not valid JSON")?;
    from_value(user)
}

pub fn from_value(mut user: Value) -> Result<McConfig> {
    if !user.is_object() {
        bail!("config must be a JSON object");
    }
    expand_g_units(&mut user)?;
    expand_warheads(&mut user)?;
    let mut merged = serde_json::to_value(McConfig::default())?;
    merge(&mut merged, user);
    let config: McConfig = serde_json::from_value(merged).context("config does not match the schema")?;
    config.validate()?;
    Ok(config)
}

/// Pretty JSON with every field spelled out.
pub fn canonical_json(config: &McConfig) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&serde_json::to_value(config)?)?;
    text.push('\n');
    Ok(text)
}

pub fn save(config: &McConfig, path: &Path) -> Result<()> {
    fs::write(path, canonical_json(config)?).with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of the compact, key-sorted config without non-semantic keys.
pub fn digest(config: &McConfig) -> Result<String> {
    let mut value = serde_json::to_value(config)?;
    if let Value::Object(map) = &mut value {
        for key in NON_SEMANTIC_KEYS {
            map.remove(key);
        }
    }
    let bytes = serde_json::to_vec(&value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn expand_g_units(value: &mut Value) -> Result<()> {
    match value {
        Value::Object(map) => {
            let keys: Vec<String> = map.keys().filter(|k| k.ends_with("_g")).cloned().collect();
            for key in keys {
                let base = key.trim_end_matches("_g").to_string();
                if map.contains_key(&base) {
                    bail!("both {base:?} and {key:?} are set");
                }
                let Some(g) = map.remove(&key).and_then(|v| v.as_f64()) else {
                    bail!("{key:?} must be a number");
                };
                map.insert(base, Value::from(g * STANDARD_GRAVITY));
            }
            for child in map.values_mut() {
                expand_g_units(child)?;
            }
        }
        Value::Array(items) => {
            for item in items {
                expand_g_units(item)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn preset_value(name: &str) -> Result<Value> {
    let preset: WarheadPreset = name.parse()?;
    Ok(serde_json::to_value(preset.model())?)
}

fn expand_warheads(root: &mut Value) -> Result<()> {
    let map = root.as_object_mut().expect("checked by caller");
    if let Some(Value::String(name)) = map.get("warhead") {
        let model = preset_value(name)?;
        map.insert("warhead".into(), model);
    }
    let scoring = match map.get("warhead") {
        Some(w) => w.clone(),
        None => serde_json::to_value(McConfig::default().warhead)?,
    };
    let Some(Value::Object(guidance)) = map.get_mut("guidance") else {
        return Ok(());
    };
    match guidance.get_mut("kind") {
        Some(Value::String(name)) => {
            let mut kind = Map::new();
            kind.insert("kind".into(), Value::String(name.clone()));
            if name == "kpm" {
                kind.insert("warhead".into(), scoring);
            }
            guidance.insert("kind".into(), Value::Object(kind));
        }
        Some(Value::Object(kind)) => {
            if let Some(Value::String(name)) = kind.get("warhead") {
                let model = preset_value(name)?;
                kind.insert("warhead".into(), model);
            }
        }
        _ => {}
    }
    Ok(())
}

/// Overlay `user` on `base`. Tagged objects (a string `kind` key) are
/// replaced whole.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(base), Value::Object(user)) if !matches!(user.get("kind"), Some(Value::String(_))) => {
            for (key, value) in user {
                match base.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base.insert(key, value);
                    }
                }
            }
        }
        (slot, user) => *slot = user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kpm_core::{GuidanceKind, WarheadModel};

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(from_json_str("{}").unwrap(), McConfig::default());
    }

    #[test]
    fn g_suffix_converts() {
        let c = from_json_str(r#"{"scenario": {"a_t_max_g": 10}}"#).unwrap();
        assert_eq!(c.scenario.a_t_max, 10.0 * STANDARD_GRAVITY);
        assert!(from_json_str(r#"{"scenario": {"a_t_max_g": 10, "a_t_max": 3}}"#).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(from_json_str(r#"{"scenario": {"v_mm": 1}}"#).is_err());
        assert!(from_json_str(r#"{"colour": 1}"#).is_err());
        assert!(from_json_str(r#"{"warhead": {"kind": "cookie_cutter", "r_sk": 1, "x": 2}}"#).is_err());
    }

    #[test]
    fn shorthand_kpm_uses_scoring_warhead() {
        let c = from_json_str(r#"{"warhead": "large", "guidance": {"kind": "kpm"}}"#).unwrap();
        assert_eq!(c.warhead, WarheadPreset::Large.model());
        assert_eq!(
            c.guidance.kind,
            GuidanceKind::Kpm {
                warhead: WarheadPreset::Large.model()
            }
        );
    }

    #[test]
    fn tagged_objects_replace_defaults() {
        let c = from_json_str(r#"{"warhead": {"kind": "cookie_cutter", "r_sk": 2.5}}"#).unwrap();
        assert_eq!(c.warhead, WarheadModel::CookieCutter { r_sk: 2.5 });
    }

    #[test]
    fn digest_ignores_parallelism_only() {
        let a = McConfig::default();
        let b = McConfig { parallelism: 8, ..a };
        let c = McConfig { base_seed: 2, ..a };
        assert_eq!(digest(&a).unwrap(), digest(&b).unwrap());
        assert_ne!(digest(&a).unwrap(), digest(&c).unwrap());
        assert_eq!(digest(&a).unwrap().len(), 64);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(from_json_str(r#"{"n_runs": 0}"#).is_err());
        assert!(from_json_str(r#"{"p_switch": 1.5}"#).is_err());
    }
}
