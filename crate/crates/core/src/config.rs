//! Flat configuration maps read from `key = value` files or JSON trees.
//!
//! JSON objects may nest to group keys; only leaf names are significant,
//! so `{"model": {"base_channels": 8}}` sets `base_channels`. Overrides
//! replace file values. Consumers take the keys they understand and call
//! [`ConfigMap::finish`], which rejects anything left over.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: IndexMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses either format; text starting with `{` is read as JSON.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_key_values(text)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `key = value` lines; blank lines and `#` comments are ignored.
    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", number + 1)))?;
            map.insert_new(key.trim(), value.trim())?;
        }
        Ok(map)
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let mut map = Self::new();
        map.flatten(&value, "")?;
        Ok(map)
    }

    fn flatten(&mut self, value: &serde_json::Value, key: &str) -> Result<()> {
        use serde_json::Value;
        match value {
            Value::Object(fields) => fields.iter().try_for_each(|(k, v)| self.flatten(v, k)),
            _ if key.is_empty() => Err(Error::Config("the JSON root must be an object".into())),
            Value::String(s) => self.insert_new(key, s),
            Value::Number(n) => self.insert_new(key, &n.to_string()),
            Value::Bool(b) => self.insert_new(key, &b.to_string()),
            Value::Null | Value::Array(_) => Err(Error::Config(format!("`{key}` must be a scalar"))),
        }
    }

    fn insert_new(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() {
            return Err(Error::Config("empty key".into()));
        }
        if self.entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("`{key}` is set twice")));
        }
        Ok(())
    }

    /// Sets or replaces a value.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Applies a `key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Removes and returns a value.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.shift_remove(key)
    }

    /// Removes and parses a value.
    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("`{key}` has an invalid value `{v}`")))
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors on keys nobody consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<_> = self.entries.keys().map(String::as_str).collect();
        Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_with_comments() {
        let m = ConfigMap::parse("# model\nbase_channels = 8\n\nseed=3 # trailing\n").unwrap();
        assert_eq!(m.get("base_channels"), Some("8"));
        assert_eq!(m.get("seed"), Some("3"));
        assert!(ConfigMap::parse("novalue\n").is_err());
        assert!(ConfigMap::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn json_tree_is_flattened() {
        let m = ConfigMap::parse(r#"{"model": {"base_channels": 8, "variant": "full"}, "flip": true}"#).unwrap();
        assert_eq!(m.get("base_channels"), Some("8"));
        assert_eq!(m.get("variant"), Some("full"));
        assert_eq!(m.get("flip"), Some("true"));
        assert!(ConfigMap::parse(r#"{"a": [1]}"#).is_err());
    }

    #[test]
    fn overrides_win_and_leftovers_fail() {
        let mut m = ConfigMap::parse("seed = 1\nextra = 2\n").unwrap();
        m.set_override("seed=9").unwrap();
        assert_eq!(m.take_parsed::<u64>("seed").unwrap(), Some(9));
        assert!(matches!(m.finish(), Err(Error::Config(_))));
    }
}
