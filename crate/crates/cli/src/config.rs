//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::Path;

use anyhow::Context;
use neurite_recon::conn_eval::EvalParams;
use neurite_recon::loss::{LossWeights, Margins};
use neurite_recon::phantom::PhantomSpec;
use neurite_recon::postprocess::ReconParams;
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchConfig {
    /// `[d, h, w]` voxels.
    pub size: [usize; 3],
    pub stride: [usize; 3],
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            size: [32; 3],
            stride: [16; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub separation: f64,
    /// Noise seed; the phantom seed when absent.
    pub seed: Option<u64>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 8,
            separation: 3.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub margins: Margins,
    pub weights: LossWeights,
    pub patch: PatchConfig,
    pub recon: ReconParams,
    pub phantom: PhantomSpec,
    pub embedding: EmbeddingConfig,
    pub eval: EvalParams,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
    }

    /// Fills derived values and checks every section.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        if self.embedding.seed.is_none() {
            self.embedding.seed = Some(self.phantom.seed);
        }
        let bad = |what: &str, e: &dyn std::fmt::Display| Invalid(format!("{what}: {e}"));
        self.margins.validate().map_err(|e| bad("margins", &e))?;
        self.weights.validate().map_err(|e| bad("weights", &e))?;
        self.recon.validate().map_err(|e| bad("recon", &e))?;
        self.phantom.validate().map_err(|e| bad("phantom", &e))?;
        self.eval.validate().map_err(|e| bad("eval", &e))?;
        if self.patch.size.contains(&0) || self.patch.stride.contains(&0) {
            return Err(Invalid("patch size and stride must be >= 1".into()).into());
        }
        if self.embedding.dim < 2 {
            return Err(Invalid(format!("embedding dim must be >= 2, got {}", self.embedding.dim)).into());
        }
        if !(self.embedding.separation > 0.0 && self.embedding.separation.is_finite()) {
            return Err(Invalid(format!(
                "embedding separation must be > 0, got {}",
                self.embedding.separation
            ))
            .into());
        }
        Ok(self)
    }

    pub fn embedding_seed(&self) -> u64 {
        self.embedding.seed.unwrap_or(self.phantom.seed)
    }
}
