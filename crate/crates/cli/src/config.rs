//! Flat `key = value` run configuration. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub const KEYS: &[&str] = &[
    "corpus",
    "splits_dir",
    "checkpoints_dir",
    "reports_dir",
    "task",
    "repr",
    "model",
    "seed",
    "min_freq",
    "max_len",
    "train_ratio",
    "valid_ratio",
    "test_ratio",
    "learning_rate",
    "epochs",
    "batch_size",
    "dropout",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "d_model",
    "n_heads",
    "n_layers",
    "d_ff",
    "d_head_hidden",
    "threshold",
];

const PATH_KEYS: &[&str] = &["corpus", "splits_dir", "checkpoints_dir", "reports_dir"];

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
    /// Directory that relative paths in the file are resolved against.
    base: PathBuf,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        config.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value", i + 1);
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("line {}: unknown key {key:?}", i + 1);
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                bail!("line {}: duplicate key {key:?}", i + 1);
            }
        }
        Ok(FileConfig { values, base: PathBuf::new() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
        }
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Like [`FileConfig::pick_or`] for paths; file values are taken relative
    /// to the config file.
    pub fn path(&self, flag: Option<PathBuf>, key: &str, default: &str) -> PathBuf {
        debug_assert!(PATH_KEYS.contains(&key));
        match (flag, self.raw(key)) {
            (Some(p), _) => p,
            (None, Some(v)) => self.base.join(v),
            (None, None) => PathBuf::from(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let c = FileConfig::parse("# run\nseed = 5\nrepr=ast  # trailing\n\nepochs = 3\n").unwrap();
        assert_eq!(c.pick::<u64>(None, "seed").unwrap(), Some(5));
        assert_eq!(c.pick(Some(9u64), "seed").unwrap(), Some(9));
        assert_eq!(c.pick_or::<usize>(None, "batch_size", 32).unwrap(), 32);
        assert_eq!(c.pick::<String>(None, "repr").unwrap().as_deref(), Some("ast"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(FileConfig::parse("seed 5").is_err());
        assert!(FileConfig::parse("colour = red").is_err());
        assert!(FileConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(FileConfig::parse("seed = x").unwrap().pick::<u64>(None, "seed").is_err());
    }

    #[test]
    fn file_paths_are_relative_to_the_file() {
        let mut c = FileConfig::parse("corpus = data/c.jsonl").unwrap();
        c.base = PathBuf::from("/runs/a");
        assert_eq!(c.path(None, "corpus", "corpus.jsonl"), PathBuf::from("/runs/a/data/c.jsonl"));
        assert_eq!(c.path(None, "reports_dir", "reports"), PathBuf::from("reports"));
    }
}
