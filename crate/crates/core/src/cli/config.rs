//! Flat `key = value` settings files. Keys mirror the long flag names;
//! `_` and `-` are interchangeable. A JSON run manifest is also accepted, in
//! which case its `settings` object is used.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('_', "-");
    match k.as_str() {
        "reg-kernel" => "kernel".into(),
        "tau-list" => "tau".into(),
        "grid-size" => "grid".into(),
        _ => k,
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            return Self::from_manifest(text);
        }
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            values.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self { values })
    }

    fn from_manifest(text: &str) -> Result<Self, CliError> {
        let json: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
        let obj = json
            .get("settings")
            .and_then(|s| s.as_object())
            .ok_or_else(|| CliError::Usage("manifest has no `settings` object".into()))?;
        let values = obj
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (normalize(k), s)
            })
            .collect();
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.values.insert(normalize(key), value.to_string());
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Flag value if given, else the file value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match (flag, self.get(key)) {
            (Some(v), _) => Ok(v),
            (None, Some(s)) => s
                .parse()
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
            (None, None) => Ok(default),
        }
    }
}
