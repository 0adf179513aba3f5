use crate::scalar::Scalar;
use crate::union_find::DisjointSet;
use crate::volume::{check_same_shape, EmbeddingField, LabelVolume, VolumeError, VoxelMask, FORWARD_13};

/// Splits the foreground into micro-segments: connected components of the
/// graph of 26-adjacent foreground voxels whose embeddings are within
/// `epsilon` of each other. Labels run 1..=K by decreasing size, ties by
/// smallest voxel index.
pub fn split_by_embedding<T: Scalar>(
    mask: &VoxelMask,
    field: &EmbeddingField<T>,
    epsilon: f64,
) -> Result<LabelVolume, VolumeError> {
    check_same_shape(&mask.dims, &field.dims, "mask vs field")?;
    let dims = mask.dims;
    let fg = mask.indices();
    let mut rank = vec![u32::MAX; dims.len()];
    for (r, &i) in fg.iter().enumerate() {
        rank[i] = r as u32;
    }
    let eps2 = if epsilon.is_infinite() {
        None
    } else {
        Some(T::lit(epsilon * epsilon))
    };
    let mut ds = DisjointSet::new(fg.len());
    for (r, &i) in fg.iter().enumerate() {
        for &(dz, dy, dx) in &FORWARD_13 {
            let Some(j) = dims.offset(i, dz, dy, dx) else {
                continue;
            };
            let rj = rank[j];
            if rj == u32::MAX {
                continue;
            }
            let close = match eps2 {
                None => true,
                Some(e2) => T::dist2(field.vector(i), field.vector(j)) <= e2,
            };
            if close {
                ds.union(r, rj as usize);
            }
        }
    }
    Ok(relabel_by_size(mask, &fg, &mut ds))
}

fn relabel_by_size(mask: &VoxelMask, fg: &[usize], ds: &mut DisjointSet) -> LabelVolume {
    // (size, first voxel) per root; fg is ascending so the first visit is the smallest index
    let mut info: std::collections::HashMap<usize, (usize, usize)> = Default::default();
    let roots: Vec<usize> = (0..fg.len()).map(|r| ds.find(r)).collect();
    for (r, &root) in roots.iter().enumerate() {
        info.entry(root).or_insert((0, fg[r])).0 += 1;
    }
    let mut order: Vec<(usize, usize, usize)> = info
        .into_iter()
        .map(|(root, (size, first))| (size, first, root))
        .collect();
    order.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let label_of: std::collections::HashMap<usize, u32> = order
        .iter()
        .enumerate()
        .map(|(k, &(_, _, root))| (root, k as u32 + 1))
        .collect();
    let mut out = LabelVolume::zeros(mask.dims);
    for (r, &i) in fg.iter().enumerate() {
        out.labels[i] = label_of[&roots[r]];
    }
    out
}

/// Voxels of each label 1..=K, ascending.
pub fn label_groups(labels: &LabelVolume) -> Vec<Vec<usize>> {
    let k = labels.max_label() as usize;
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l != 0 {
            groups[l as usize - 1].push(i);
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridDims;

    #[test]
    fn infinite_epsilon_gives_plain_components() {
        let dims = GridDims::isotropic(1, 3, 7);
        // two blobs: sizes 2 and 4, plus a diagonal-touching voxel joining the second
        let on = [0usize, 1, 4, 5, 6, 13];
        let m = VoxelMask::from_indices(dims, on);
        let f = EmbeddingField::<f64>::from_voxel_major(
            dims,
            1,
            (0..dims.len()).map(|i| i as f64 * 10.0).collect(),
        )
        .unwrap();
        let l = split_by_embedding(&m, &f, f64::INFINITY).unwrap();
        assert_eq!(l.max_label(), 2);
        assert_eq!(l.labels[4], 1);
        assert_eq!(l.labels[13], 1);
        assert_eq!(l.labels[0], 2);
    }

    #[test]
    fn zero_epsilon_isolates_differing_voxels() {
        let dims = GridDims::isotropic(1, 1, 4);
        let m = VoxelMask::new(dims, vec![true; 4]).unwrap();
        let f = EmbeddingField::<f64>::from_voxel_major(dims, 1, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let l = split_by_embedding(&m, &f, 0.0).unwrap();
        // {1,2} share an embedding; the other two are singletons ordered by index
        assert_eq!(l.labels, vec![2, 1, 1, 3]);
    }

    #[test]
    fn shape_mismatch() {
        let m = VoxelMask::zeros(GridDims::isotropic(2, 2, 2));
        let f = EmbeddingField::<f64>::zeros(GridDims::isotropic(2, 2, 3), 2);
        assert!(matches!(
            split_by_embedding(&m, &f, 1.0),
            Err(VolumeError::ShapeMismatch(_))
        ));
    }
}
