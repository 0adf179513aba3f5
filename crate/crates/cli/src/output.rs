//! Output writers. Every artifact carries a provenance record: tool
//! version, command, resolved configuration and SHA-256 digests of inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use neurite_recon::swc::{write_swc, SwcForest};
use neurite_recon::volume::{write_volume, Volume};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct Provenance {
    command: &'static str,
    config: Value,
    inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        Provenance {
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: BTreeMap::new(),
        }
    }

    /// Records the digest of an input file. Volume sidecars also record
    /// their payload.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs
            .insert(path.display().to_string(), format!("sha256:{}", hex(&Sha256::digest(&bytes))));
        if path.extension().is_some_and(|e| e == "json") {
            if let Ok(sc) = neurite_recon::volume::read_sidecar(path) {
                let raw = path.parent().unwrap_or(Path::new("")).join(&sc.data);
                if raw.exists() {
                    self.input(&raw)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        json!({
            "tool": "neurite-recon",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes `report` with a `provenance` member added.
pub fn report_value<T: Serialize>(report: &T, prov: &Provenance) -> Value {
    let mut v = serde_json::to_value(report).expect("reports serialize");
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("provenance".into(), prov.to_value());
            v
        }
        None => json!({ "result": v, "provenance": prov.to_value() }),
    }
}

/// Writes a JSON report to `out`, or to stdout when `out` is `None`.
pub fn write_report<T: Serialize>(report: &T, prov: &Provenance, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(&report_value(report, prov))?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_forest(forest: &SwcForest, prov: &Provenance, out: &Path) -> anyhow::Result<()> {
    let mut f = forest.clone();
    f.header.push(format!("provenance: {}", prov.to_value()));
    std::fs::write(out, write_swc(&f)).with_context(|| format!("writing {}", out.display()))
}

pub fn write_vol(volume: Volume, prov: &Provenance, out: &Path) -> anyhow::Result<()> {
    write_volume(&volume, out, Some(prov.to_value())).with_context(|| format!("writing {}", out.display()))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
