//! Turns a foreground mask and an embedding field into SWC trees:
//! embedding-gated splitting, per-segment thinning, jump reconnection and
//! breadth-first tree extraction.

mod forest;
mod reconnect;
mod split;
mod thin;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{build_forest, ForestReport};
pub use reconnect::reconnect;
pub use split::{label_groups, split_by_embedding};
pub use thin::{is_simple, thin_mask, thin_voxels};

use crate::scalar::Scalar;
use crate::swc::SwcForest;
use crate::volume::{
    check_same_shape, edt, EmbeddingField, GridDims, LabelVolume, VolumeError, VoxelMask, FORWARD_13,
};

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconParams {
    /// Embedding-distance threshold for splitting and jump edges.
    pub epsilon: f64,
    /// Chebyshev search radius for jump edges, in voxels.
    pub jump_radius: usize,
    /// Skeleton components with fewer voxels are dropped; 0 keeps all.
    pub min_component_voxels: usize,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            epsilon: 1.0,
            jump_radius: 2,
            min_component_voxels: 5,
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<(), ReconError> {
        if !(self.epsilon > 0.0) {
            return Err(ReconError::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.jump_radius < 1 {
            return Err(ReconError::InvalidParameter("jump_radius must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkeletonEdge {
    pub a: usize,
    pub b: usize,
    /// Embedding distance for jump edges, `None` for plain adjacency.
    pub jump: Option<f64>,
}

/// One-voxel-wide curves plus their adjacency graph. `voxels` is ascending;
/// edges satisfy `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub dims: GridDims,
    pub voxels: Vec<usize>,
    pub edges: Vec<SkeletonEdge>,
}

impl Skeleton {
    /// Skeleton over `voxels` with all 26-adjacency edges.
    pub fn from_voxels(dims: GridDims, mut voxels: Vec<usize>) -> Self {
        voxels.sort_unstable();
        voxels.dedup();
        let mut member = vec![false; dims.len()];
        for &v in &voxels {
            member[v] = true;
        }
        let mut edges = Vec::new();
        for &i in &voxels {
            for &(dz, dy, dx) in &FORWARD_13 {
                if let Some(j) = dims.offset(i, dz, dy, dx) {
                    if member[j] {
                        edges.push(SkeletonEdge { a: i, b: j, jump: None });
                    }
                }
            }
        }
        edges.sort_unstable_by_key(|e| (e.a, e.b));
        Skeleton { dims, voxels, edges }
    }

    pub fn jump_count(&self) -> usize {
        self.edges.iter().filter(|e| e.jump.is_some()).count()
    }

    pub fn to_mask(&self) -> VoxelMask {
        VoxelMask::from_indices(self.dims, self.voxels.iter().copied())
    }

    /// Number of connected components of the skeleton graph.
    pub fn component_count(&self) -> usize {
        let pos: std::collections::HashMap<usize, usize> =
            self.voxels.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut ds = crate::union_find::DisjointSet::new(self.voxels.len());
        let mut count = self.voxels.len();
        for e in &self.edges {
            if ds.union(pos[&e.a], pos[&e.b]) {
                count -= 1;
            }
        }
        count
    }
}

/// Thins a binary volume to a skeleton with 26-adjacency edges.
pub fn thin(mask: &VoxelMask) -> Skeleton {
    Skeleton::from_voxels(mask.dims, thin_voxels(&mask.dims, &mask.indices()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReconReport {
    pub segments: usize,
    pub skeleton_voxels: usize,
    pub jump_edges: usize,
    pub dropped_cycle_edges: usize,
    pub components_kept: usize,
    pub components_dropped: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub forest: SwcForest,
    pub segments: LabelVolume,
    pub skeleton: Skeleton,
    pub report: ReconReport,
}

/// Full mask-to-SWC pipeline. The forest header records the parameters.
pub fn reconstruct<T: Scalar>(
    mask: &VoxelMask,
    field: &EmbeddingField<T>,
    params: &ReconParams,
) -> Result<Reconstruction, ReconError> {
    params.validate()?;
    check_same_shape(&mask.dims, &field.dims, "mask vs field")?;
    let dims = mask.dims;
    let header = vec![
        format!("neurite-recon {}", env!("CARGO_PKG_VERSION")),
        format!("epsilon = {:?}", params.epsilon),
        format!("jump_radius = {}", params.jump_radius),
        format!("min_component_voxels = {}", params.min_component_voxels),
        format!(
            "dims = [{}, {}, {}], voxel_size = {:?}",
            dims.d, dims.h, dims.w, dims.voxel_size
        ),
    ];

    let segments = split_by_embedding(mask, field, params.epsilon)?;
    let groups = label_groups(&segments);
    let thinned: Vec<Vec<usize>> = groups.par_iter().map(|g| thin_voxels(&dims, g)).collect();
    let mut skel_labels = LabelVolume::zeros(dims);
    for (k, vox) in thinned.iter().enumerate() {
        for &v in vox {
            skel_labels.labels[v] = k as u32 + 1;
        }
    }
    let skeleton = reconnect(&skel_labels, field, params);
    let mut report = ReconReport {
        segments: groups.len(),
        skeleton_voxels: skeleton.voxels.len(),
        jump_edges: skeleton.jump_count(),
        ..Default::default()
    };
    let forest = if skeleton.voxels.is_empty() {
        SwcForest::empty()
    } else {
        let dt = edt(mask);
        let (forest, fr) =
            forest::build_forest_with_edt(&skeleton, mask, &dt, params.min_component_voxels)?;
        report.dropped_cycle_edges = fr.dropped_cycle_edges;
        report.components_kept = fr.components;
        report.components_dropped = fr.dropped_components;
        report.nodes = fr.nodes;
        forest
    };
    Ok(Reconstruction {
        forest: forest.with_header(header),
        segments,
        skeleton,
        report,
    })
}
