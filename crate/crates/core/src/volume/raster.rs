//! Rasterizes SWC skeletons into label volumes by sweeping spheres along
//! every edge.

use serde::Serialize;

use super::{GridDims, LabelVolume};
use crate::swc::{forest_components, SwcForest, SwcNode};

/// Maximum distance between consecutive sphere centers, in voxels.
pub const SWEEP_STEP: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RasterReport {
    /// Voxels claimed by more than one component, ascending.
    pub overlap_voxels: Vec<usize>,
    /// Nodes whose position falls outside the grid.
    pub clipped_nodes: Vec<u64>,
    pub components: usize,
    pub empty_forest: bool,
}

/// Voxels covered by a sphere of `radius` µm at `center` (`[x, y, z]` µm).
/// The voxel containing the center is always included when in bounds.
pub fn sphere_voxels(dims: &GridDims, center: [f64; 3], radius: f64, out: &mut Vec<usize>) {
    let vc = dims.um_to_voxel(center);
    let ext = [dims.d, dims.h, dims.w];
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for k in 0..3 {
        let r = radius / dims.voxel_size[k];
        let a = (vc[k] - r).floor().max(0.0);
        let b = (vc[k] + r).ceil().min(ext[k] as f64 - 1.0);
        if b < a {
            lo[k] = 1;
            hi[k] = 0;
        } else {
            lo[k] = a as usize;
            hi[k] = b as usize;
        }
    }
    let r2 = radius * radius;
    for z in lo[0]..=hi[0] {
        let dz = (z as f64 - vc[0]) * dims.voxel_size[0];
        for y in lo[1]..=hi[1] {
            let dy = (y as f64 - vc[1]) * dims.voxel_size[1];
            for x in lo[2]..=hi[2] {
                let dx = (x as f64 - vc[2]) * dims.voxel_size[2];
                if dz * dz + dy * dy + dx * dx <= r2 {
                    out.push(dims.index(z, y, x));
                }
            }
        }
    }
    if let Some(i) = containing_voxel(dims, vc) {
        out.push(i);
    }
}

fn containing_voxel(dims: &GridDims, vc: [f64; 3]) -> Option<usize> {
    let ext = [dims.d, dims.h, dims.w];
    let mut c = [0usize; 3];
    for k in 0..3 {
        let r = vc[k].round();
        if r < 0.0 || r >= ext[k] as f64 {
            return None;
        }
        c[k] = r as usize;
    }
    Some(dims.index(c[0], c[1], c[2]))
}

/// Voxels covered by the swept edge `a -> b` with linearly interpolated
/// radius. May contain duplicates.
pub fn edge_voxels(dims: &GridDims, a: &SwcNode, b: &SwcNode, out: &mut Vec<usize>) {
    let pa = a.pos();
    let pb = b.pos();
    let va = dims.um_to_voxel(pa);
    let vb = dims.um_to_voxel(pb);
    let len = ((va[0] - vb[0]).powi(2) + (va[1] - vb[1]).powi(2) + (va[2] - vb[2]).powi(2)).sqrt();
    let steps = ((len / SWEEP_STEP).ceil() as usize).max(1);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let p = [
            pa[0] + t * (pb[0] - pa[0]),
            pa[1] + t * (pb[1] - pa[1]),
            pa[2] + t * (pb[2] - pa[2]),
        ];
        let r = a.radius + t * (b.radius - a.radius);
        sphere_voxels(dims, p, r, out);
    }
}

fn outside(dims: &GridDims, n: &SwcNode) -> bool {
    let vc = dims.um_to_voxel(n.pos());
    let ext = [dims.d, dims.h, dims.w];
    (0..3).any(|k| vc[k] < -0.5 || vc[k] >= ext[k] as f64 - 0.5)
}

/// Rasterizes every tree of the forest. Component `k` (1-based, in
/// [`forest_components`] order) paints label `k`, or 1 when
/// `per_component_ids` is false. Voxels painted by several components keep
/// the lowest id and are listed in the report.
pub fn rasterize(
    forest: &SwcForest,
    dims: &GridDims,
    per_component_ids: bool,
) -> (LabelVolume, RasterReport) {
    let mut labels = LabelVolume::zeros(*dims);
    let mut report = RasterReport {
        empty_forest: forest.is_empty(),
        ..Default::default()
    };
    let comps = forest_components(forest);
    report.components = comps.len();
    let mut overlap = vec![false; dims.len()];
    let mut buf = Vec::new();
    for (c, group) in comps.iter().enumerate() {
        let id = c as u32 + 1;
        buf.clear();
        for &nid in group {
            let node = forest.get(nid).expect("component ids come from the forest");
            if outside(dims, node) {
                report.clipped_nodes.push(nid);
            }
            match node.parent {
                Some(p) => edge_voxels(dims, forest.get(p).expect("validated parent"), node, &mut buf),
                None if forest.children(nid).is_empty() => {
                    sphere_voxels(dims, node.pos(), node.radius, &mut buf)
                }
                None => {}
            }
        }
        for &v in &buf {
            let cur = labels.labels[v];
            if cur == 0 {
                labels.labels[v] = id;
            } else if cur != id {
                overlap[v] = true;
            }
        }
    }
    if !per_component_ids {
        for l in labels.labels.iter_mut().filter(|l| **l != 0) {
            *l = 1;
        }
    }
    report.overlap_voxels = overlap
        .iter()
        .enumerate()
        .filter_map(|(i, &o)| o.then_some(i))
        .collect();
    report.clipped_nodes.sort_unstable();
    (labels, report)
}
