use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use frosketch::Result;
use serde::Serialize;
use serde_json::Value;

/// Everything needed to reproduce an output file: the command, its full
/// parameter set, the seeds actually used, timings and memory readings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub params: Value,
    pub seeds: BTreeMap<String, u64>,
    pub timings_ms: BTreeMap<String, f64>,
    pub memory_kb: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, params: &impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            seeds: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            memory_kb: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, name: impl Into<String>, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    /// Runs `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings_ms.entry(phase.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn extra(&mut self, key: &str, value: impl Serialize) {
        self.extra
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Writes the manifest next to `output` as `<output>.manifest.json`.
    pub fn write_for(mut self, output: &Path) -> Result<()> {
        if let Some(kb) = peak_rss_kb() {
            self.memory_kb.insert("peak_rss".into(), kb);
        }
        let path = manifest_path(output);
        fs::write(path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(())
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Peak resident set size of this process, from `/proc/self/status`.
fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}
