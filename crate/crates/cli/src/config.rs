use std::fmt;

use anyhow::{anyhow, bail, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Preset {
    Kloeden,
    #[value(name = "switching2d")]
    #[serde(rename = "switching2d")]
    Switching2d,
    ScalarSweep,
    FoldBisect,
    SpliceDemo,
    ContextTask,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("override {s:?} is not key=value"))?;
    if k.is_empty() {
        bail!("override {s:?} has an empty key");
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Applies dotted-key overrides to a settings struct. Values are read as
/// JSON when they parse, as strings otherwise. Keys that do not already
/// exist are rejected.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(base: &T, overrides: &[(String, String)]) -> Result<T> {
    let mut doc = serde_json::to_value(base)?;
    for (key, raw) in overrides {
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| anyhow!("unknown setting {key:?}"))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
    }
    serde_json::from_value(doc).map_err(|e| anyhow!("invalid settings: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        n: usize,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct S {
        a: f64,
        name: String,
        inner: Inner,
        list: Vec<f64>,
    }

    fn base() -> S {
        S { a: 1.0, name: "x".into(), inner: Inner { n: 3 }, list: vec![1.0] }
    }

    #[test]
    fn overrides_apply() {
        let o = vec![
            parse_override("a=2.5").unwrap(),
            parse_override("name=hello").unwrap(),
            parse_override("inner.n=7").unwrap(),
            parse_override("list=[0.5,2]").unwrap(),
        ];
        let s = apply_overrides(&base(), &o).unwrap();
        assert_eq!(s, S { a: 2.5, name: "hello".into(), inner: Inner { n: 7 }, list: vec![0.5, 2.0] });
    }

    #[test]
    fn unknown_and_bad_values_rejected() {
        assert!(apply_overrides(&base(), &[parse_override("b=1").unwrap()]).is_err());
        assert!(apply_overrides(&base(), &[parse_override("inner.m=1").unwrap()]).is_err());
        assert!(apply_overrides(&base(), &[parse_override("a=abc").unwrap()]).is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn preset_names() {
        assert_eq!(Preset::Switching2d.to_string(), "switching2d");
        assert_eq!(Preset::ScalarSweep.to_string(), "scalar_sweep");
    }
}
