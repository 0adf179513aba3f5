use std::collections::VecDeque;

use serde::Serialize;

use super::{ReconError, Skeleton};
use crate::swc::{SwcForest, SwcNode};
use crate::volume::{edt, VoxelMask};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ForestReport {
    pub components: usize,
    pub dropped_components: usize,
    /// Non-tree edges discarded by the BFS (cycles in the skeleton graph).
    pub dropped_cycle_edges: usize,
    pub nodes: usize,
}

/// Turns a skeleton graph into SWC trees, one per connected component with
/// at least `min_component_voxels` voxels. Each tree is rooted at the voxel
/// with the largest distance-transform value (ties: smallest index) and
/// grown breadth-first, visiting neighbors by ascending voxel index. Radii
/// are distance-transform values of `mask` in micrometers.
pub fn build_forest(
    skeleton: &Skeleton,
    mask: &VoxelMask,
    min_component_voxels: usize,
) -> Result<(SwcForest, ForestReport), ReconError> {
    let dt = edt(mask);
    build_forest_with_edt(skeleton, mask, &dt, min_component_voxels)
}

pub(crate) fn build_forest_with_edt(
    skeleton: &Skeleton,
    mask: &VoxelMask,
    dt: &[f64],
    min_component_voxels: usize,
) -> Result<(SwcForest, ForestReport), ReconError> {
    if skeleton.voxels.is_empty() {
        return Err(ReconError::EmptySkeleton);
    }
    crate::volume::check_same_shape(&skeleton.dims, &mask.dims, "skeleton vs mask")?;
    let dims = skeleton.dims;
    let n = skeleton.voxels.len();
    let local: std::collections::HashMap<usize, usize> = skeleton
        .voxels
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, k))
        .collect();
    let mut adj = vec![Vec::new(); n];
    for e in &skeleton.edges {
        let (a, b) = (local[&e.a], local[&e.b]);
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let max_extent = (dims.d.max(dims.h).max(dims.w)) as f64
        * dims.voxel_size.iter().cloned().fold(0.0, f64::max);
    let radius = |v: usize| {
        let r = dt[v];
        if r.is_finite() {
            r
        } else {
            max_extent
        }
    };

    // components in order of their smallest voxel (voxels are ascending)
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut k = 0;
        while k < members.len() {
            let a = members[k];
            k += 1;
            for &b in &adj[a] {
                if comp[b] == usize::MAX {
                    comp[b] = id;
                    members.push(b);
                }
            }
        }
        comps.push(members);
    }

    let mut report = ForestReport::default();
    let mut nodes = Vec::new();
    let mut node_id = vec![0u64; n];
    let mut next_id = 1u64;
    let mut queue = VecDeque::new();
    for members in &comps {
        if members.len() < min_component_voxels {
            report.dropped_components += 1;
            continue;
        }
        report.components += 1;
        let edges: usize = members.iter().map(|&a| adj[a].len()).sum::<usize>() / 2;
        report.dropped_cycle_edges += edges + 1 - members.len();

        let root = *members
            .iter()
            .min_by(|&&a, &&b| {
                radius(skeleton.voxels[b])
                    .total_cmp(&radius(skeleton.voxels[a]))
                    .then(a.cmp(&b))
            })
            .expect("component is nonempty");
        let mut seen = std::collections::HashSet::new();
        seen.insert(root);
        queue.push_back((root, None));
        while let Some((a, parent)) = queue.pop_front() {
            let v = skeleton.voxels[a];
            node_id[a] = next_id;
            next_id += 1;
            nodes.push(SwcNode::new(node_id[a], dims.to_um(v), radius(v), parent));
            for &b in &adj[a] {
                if seen.insert(b) {
                    queue.push_back((b, Some(node_id[a])));
                }
            }
        }
    }
    report.nodes = nodes.len();
    let forest = SwcForest::new(nodes).expect("BFS produces a valid forest");
    Ok((forest, report))
}
