use std::collections::BTreeMap;

use super::{ReconParams, Skeleton, SkeletonEdge};
use crate::scalar::Scalar;
use crate::volume::{EmbeddingField, LabelVolume, FORWARD_13};

/// Links the skeletons of the micro-segments. Voxels of one segment are
/// joined by 26-adjacency. Across segments every skeleton voxel keeps its
/// single closest candidate (by embedding distance, ties by voxel index)
/// among voxels of other segments within Chebyshev distance `jump_radius`
/// whose embedding distance is below `epsilon`; those links become jump
/// edges.
pub fn reconnect<T: Scalar>(
    segments: &LabelVolume,
    field: &EmbeddingField<T>,
    params: &ReconParams,
) -> Skeleton {
    let dims = segments.dims;
    let voxels: Vec<usize> = (0..dims.len()).filter(|&i| segments.labels[i] != 0).collect();
    let mut edges: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for &i in &voxels {
        let li = segments.labels[i];
        for &(dz, dy, dx) in &FORWARD_13 {
            if let Some(j) = dims.offset(i, dz, dy, dx) {
                if segments.labels[j] == li {
                    edges.insert((i, j), None);
                }
            }
        }
    }

    let r = params.jump_radius as isize;
    for &i in &voxels {
        let li = segments.labels[i];
        let mut best: Option<(f64, usize)> = None;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let Some(j) = dims.offset(i, dz, dy, dx) else {
                        continue;
                    };
                    let lj = segments.labels[j];
                    if lj == 0 || lj == li {
                        continue;
                    }
                    let d = field.distance(i, j).as_f64();
                    if !(d < params.epsilon) {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bj)) => d < bd || (d == bd && j < bj),
                    };
                    if better {
                        best = Some((d, j));
                    }
                }
            }
        }
        if let Some((d, j)) = best {
            edges.insert((i.min(j), i.max(j)), Some(d));
        }
    }

    Skeleton {
        dims,
        voxels,
        edges: edges
            .into_iter()
            .map(|((a, b), jump)| SkeletonEdge { a, b, jump })
            .collect(),
    }
}
