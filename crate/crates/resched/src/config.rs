//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored; keys may use `-` or `_`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::files::read_text;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            entries.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read_text(path)?)
    }

    /// Typed lookup; a value that does not parse is a usage error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => {
                v.parse().map(Some).map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{v}`")))
            }
        }
    }

    /// Keys not in `known`, for warnings.
    pub fn unknown_keys<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.entries.keys().map(String::as_str).filter(|k| !known.contains(k)).collect()
    }
}

/// Command-line value if given, else the config value, else `default`.
pub fn merge<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T, CliError> {
    Ok(match flag {
        Some(v) => v,
        None => file.get(key)?.unwrap_or(default),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges() {
        let c = ConfigFile::parse("# run\nepisodes = 20\nentropy-coef=0.02 # note\n\nkind = fjsp\n").unwrap();
        assert_eq!(c.get::<usize>("episodes").unwrap(), Some(20));
        assert_eq!(c.get::<f64>("entropy_coef").unwrap(), Some(0.02));
        assert_eq!(merge(Some(5usize), &c, "episodes", 1).unwrap(), 5);
        assert_eq!(merge(None, &c, "episodes", 1usize).unwrap(), 20);
        assert_eq!(merge(None, &c, "seed", 7u64).unwrap(), 7);
        assert!(c.get::<usize>("kind").is_err());
        assert_eq!(c.unknown_keys(&["episodes", "entropy_coef"]), vec!["kind"]);
        assert!(ConfigFile::parse("episodes 20").is_err());
    }
}
