//! Paths, upstream checks and the run summary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fdimit::config::RunConfig;
use fdimit::io::{read_comment_header, write_comment_header};
use fdimit::metrics::write_summary;

use crate::steps::Step;
use crate::ConfigError;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "reports/summary.txt";

pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn create(&self, rel: &str) -> Result<BufWriter<File>> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    /// Create `rel`, hand it to a core writer and flush.
    pub fn write_with(&self, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> fdimit::Result<()>) -> Result<()> {
        use std::io::Write;
        let mut w = self.create(rel)?;
        f(&mut w).with_context(|| format!("writing {rel}"))?;
        w.flush()?;
        Ok(())
    }

    pub fn open(&self, rel: &str) -> Result<BufReader<File>> {
        let p = self.path(rel);
        Ok(BufReader::new(File::open(&p).with_context(|| format!("opening {}", p.display()))?))
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        self.write_with(rel, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))
    }

    /// Check that every upstream artifact of `step` exists and was written
    /// under the same configuration.
    pub fn require(&self, step: Step, cfg: &RunConfig) -> Result<()> {
        let mut seen = Vec::new();
        let mut stack = step.needs().to_vec();
        while let Some(s) = stack.pop() {
            if seen.contains(&s) {
                continue;
            }
            seen.push(s);
            stack.extend_from_slice(s.needs());
        }
        seen.sort();
        for s in seen {
            let files = s.artifacts();
            for f in &files {
                if !self.path(f).is_file() {
                    bail!("{step} needs {f}, which is missing; run `fdimit {s}` first");
                }
            }
            if let Some(stamped) = files.first() {
                let found = stamp_hash(&self.path(stamped))?;
                if let Some(h) = found.filter(|h| *h != cfg.hash()) {
                    return Err(ConfigError(format!(
                        "{stamped} was written with config_hash={h} but the current config hashes to {}; rerun `fdimit {s}`",
                        cfg.hash()
                    ))
                    .into());
                }
            }
        }
        Ok(())
    }

    /// Merge entries into the key-value run summary.
    pub fn summarize(&self, cfg: &RunConfig, entries: &[(String, String)]) -> Result<()> {
        let mut all = BTreeMap::new();
        if let Ok(text) = fs::read_to_string(self.path(SUMMARY_FILE)) {
            for line in text.lines().filter(|l| !l.starts_with('#')) {
                if let Some((k, v)) = line.split_once('=') {
                    all.insert(k.to_string(), v.to_string());
                }
            }
        }
        for (k, v) in entries {
            all.insert(k.clone(), v.clone());
        }
        let mut w = self.create(SUMMARY_FILE)?;
        write_comment_header(&mut w, &cfg.stamp())?;
        let flat: Vec<(&str, String)> = all.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        write_summary(&mut w, &flat)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

fn stamp_hash(path: &Path) -> Result<Option<String>> {
    let mut head = String::new();
    File::open(path)?.take(4096).read_to_string(&mut head).ok();
    Ok(read_comment_header(&head).remove("config_hash"))
}
