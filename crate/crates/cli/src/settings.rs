//! Resolution of run parameters: command-line flag, then config file, then
//! the built-in default. Every resolved value is recorded for `config.echo`.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use deepvio::kv::KvFile;

pub const ECHO_FILE: &str = "config.echo";

pub struct Settings {
    file: KvFile,
    used: BTreeSet<String>,
    echo: KvFile,
}

impl Settings {
    pub fn new(config: Option<&Path>, command: &str) -> Result<Self> {
        let file = match config {
            Some(p) => KvFile::read(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KvFile::new(),
        };
        if let Some(c) = file.get("command") {
            if c != command {
                bail!("config was written for `{c}`, not `{command}`");
            }
        }
        let mut echo = KvFile::new();
        echo.set("command", command);
        let mut used = BTreeSet::new();
        used.insert("command".to_string());
        Ok(Settings { file, used, echo })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        Ok(self.file.parsed(key)?)
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let from_file = self.from_file(key)?;
        let v = flag.or(from_file).unwrap_or(default);
        self.echo.set(key, &v);
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let from_file = self.from_file(key)?;
        let v = flag.or(from_file);
        if let Some(v) = &v {
            self.echo.set(key, v);
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let flag = flag.map(|p| p.display().to_string());
        Ok(self.optional::<String>(key, flag)?.map(PathBuf::from))
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        match self.path(key, flag)? {
            Some(p) => Ok(p),
            None => bail!("`--{}` is required", key.replace('_', "-")),
        }
    }

    /// A switch: on when the flag is given or the file says `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let from_file: Option<bool> = self.from_file(key)?;
        let v = flag || from_file.unwrap_or(false);
        self.echo.set(key, v);
        Ok(v)
    }

    /// Repeatable value: flags replace the file's list.
    pub fn list(&mut self, key: &str, flags: Vec<String>) -> Vec<String> {
        self.used.insert(key.to_string());
        let v = if flags.is_empty() {
            self.file.all(key).map(str::to_string).collect()
        } else {
            flags
        };
        for item in &v {
            self.echo.push(key, item);
        }
        v
    }

    /// Entries of the file whose key starts with `prefix`, marked as used.
    /// Their resolved values must be recorded with [`Self::record`].
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let found: Vec<(String, String)> = self
            .file
            .entries()
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .cloned()
            .collect();
        for (k, _) in &found {
            self.used.insert(k.clone());
        }
        found
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.echo.set(key, value);
    }

    /// Rejects unknown config keys and writes `config.echo` into `out`.
    pub fn finish(self, out: &Path) -> Result<()> {
        let unknown: Vec<&str> = self
            .file
            .entries()
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        self.echo.write(&out.join(ECHO_FILE))?;
        Ok(())
    }
}
