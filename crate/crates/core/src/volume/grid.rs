use serde::{Deserialize, Serialize};

use super::VolumeError;
use crate::scalar::Scalar;

/// Grid extents in voxels plus the physical voxel size in micrometers.
/// Storage is C order with z slowest: `index = (z * h + y) * w + x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDims {
    pub d: usize,
    pub h: usize,
    pub w: usize,
    /// `[sz, sy, sx]`, micrometers per voxel.
    pub voxel_size: [f64; 3],
}

impl GridDims {
    pub fn new(d: usize, h: usize, w: usize, voxel_size: [f64; 3]) -> Result<Self, VolumeError> {
        let dims = Self { d, h, w, voxel_size };
        dims.validate()?;
        Ok(dims)
    }

    /// Unit voxel size.
    pub fn isotropic(d: usize, h: usize, w: usize) -> Self {
        Self {
            d,
            h,
            w,
            voxel_size: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.d == 0 || self.h == 0 || self.w == 0 {
            return Err(VolumeError::InvalidDims(format!(
                "extents must be >= 1, got {}x{}x{}",
                self.d, self.h, self.w
            )));
        }
        if self.voxel_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(VolumeError::InvalidDims(format!(
                "voxel size must be positive, got {:?}",
                self.voxel_size
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.h + y) * self.w + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.w;
        let r = idx / self.w;
        [r / self.h, r % self.h, x]
    }

    /// Index of `(z, y, x) + offset` when it stays inside the grid.
    #[inline]
    pub fn offset(&self, idx: usize, dz: isize, dy: isize, dx: isize) -> Option<usize> {
        let [z, y, x] = self.coords(idx);
        let z = z.checked_add_signed(dz).filter(|&v| v < self.d)?;
        let y = y.checked_add_signed(dy).filter(|&v| v < self.h)?;
        let x = x.checked_add_signed(dx).filter(|&v| v < self.w)?;
        Some(self.index(z, y, x))
    }

    /// Voxel center in micrometers, `[x, y, z]` (SWC axis order).
    pub fn to_um(&self, idx: usize) -> [f64; 3] {
        let [z, y, x] = self.coords(idx);
        [
            x as f64 * self.voxel_size[2],
            y as f64 * self.voxel_size[1],
            z as f64 * self.voxel_size[0],
        ]
    }

    /// Continuous voxel coordinates `[z, y, x]` of a micrometer position `[x, y, z]`.
    pub fn um_to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        [
            p[2] / self.voxel_size[0],
            p[1] / self.voxel_size[1],
            p[0] / self.voxel_size[2],
        ]
    }

    /// Box spanned by the voxel centers, `[x, y, z]` micrometers.
    pub fn bbox_um(&self) -> crate::swc::Aabb {
        crate::swc::Aabb::new(
            [0.0; 3],
            [
                (self.w - 1) as f64 * self.voxel_size[2],
                (self.h - 1) as f64 * self.voxel_size[1],
                (self.d - 1) as f64 * self.voxel_size[0],
            ],
        )
    }

    pub fn same_shape(&self, other: &GridDims) -> bool {
        self.d == other.d && self.h == other.h && self.w == other.w
    }
}

/// The 26 offsets in z, y, x lexicographic order.
pub const OFFSETS_26: [(isize, isize, isize); 26] = {
    let mut out = [(0, 0, 0); 26];
    let mut k = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dz == 0 && dy == 0 && dx == 0) {
                    out[k] = (dz, dy, dx);
                    k += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// The 13 offsets of [`OFFSETS_26`] that come after the center in scan order.
pub const FORWARD_13: [(isize, isize, isize); 13] = {
    let mut out = [(0, 0, 0); 13];
    let mut k = 0;
    while k < 13 {
        out[k] = OFFSETS_26[13 + k];
        k += 1;
    }
    out
};

/// In-bounds 26-neighbors of `idx`, ordered by offset.
pub fn neighbors26(dims: &GridDims, idx: usize) -> Vec<usize> {
    OFFSETS_26
        .iter()
        .filter_map(|&(dz, dy, dx)| dims.offset(idx, dz, dy, dx))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub dims: GridDims,
    pub bits: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: GridDims, bits: Vec<bool>) -> Result<Self, VolumeError> {
        if bits.len() != dims.len() {
            return Err(VolumeError::HeaderMismatch(format!(
                "mask has {} voxels, dims promise {}",
                bits.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn from_indices(dims: GridDims, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(dims);
        for i in idx {
            m.bits[i] = true;
        }
        m
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Integer instance labels, 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub dims: GridDims,
    pub labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(dims: GridDims, labels: Vec<u32>) -> Result<Self, VolumeError> {
        if labels.len() != dims.len() {
            return Err(VolumeError::HeaderMismatch(format!(
                "label volume has {} voxels, dims promise {}",
                labels.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, labels })
    }

    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            labels: vec![0; dims.len()],
        }
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn foreground(&self) -> VoxelMask {
        VoxelMask {
            dims: self.dims,
            bits: self.labels.iter().map(|&l| l != 0).collect(),
        }
    }
}

/// `n` real channels per voxel. Stored voxel-major (`values[i * n + c]`);
/// files are channel-major, the I/O layer transposes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField<T> {
    pub dims: GridDims,
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingField<T> {
    pub fn zeros(dims: GridDims, n: usize) -> Self {
        Self {
            dims,
            n,
            values: vec![T::zero(); dims.len() * n],
        }
    }

    /// Builds a field from voxel-major values.
    pub fn from_voxel_major(dims: GridDims, n: usize, values: Vec<T>) -> Result<Self, VolumeError> {
        if n == 0 {
            return Err(VolumeError::InvalidDims("field needs at least one channel".into()));
        }
        if values.len() != n * dims.len() {
            return Err(VolumeError::HeaderMismatch(format!(
                "field has {} values, expected {}",
                values.len(),
                n * dims.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(pos));
        }
        Ok(Self { dims, n, values })
    }

    pub fn from_channel_major(dims: GridDims, n: usize, values: &[T]) -> Result<Self, VolumeError> {
        let nv = dims.len();
        if values.len() != n * nv {
            return Err(VolumeError::HeaderMismatch(format!(
                "field has {} values, expected {}",
                values.len(),
                n * nv
            )));
        }
        let mut vm = vec![T::zero(); values.len()];
        for c in 0..n {
            for i in 0..nv {
                vm[i * n + c] = values[c * nv + i];
            }
        }
        Self::from_voxel_major(dims, n, vm)
    }

    pub fn to_channel_major(&self) -> Vec<T> {
        let nv = self.dims.len();
        let mut out = vec![T::zero(); self.values.len()];
        for i in 0..nv {
            for c in 0..self.n {
                out[c * nv + i] = self.values[i * self.n + c];
            }
        }
        out
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn vector(&self, idx: usize) -> &[T] {
        &self.values[idx * self.n..(idx + 1) * self.n]
    }

    #[inline]
    pub fn vector_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.values[idx * self.n..(idx + 1) * self.n]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Euclidean distance between the embeddings of two voxels.
    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> T {
        T::dist2(self.vector(a), self.vector(b)).sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingField<U> {
        EmbeddingField {
            dims: self.dims,
            n: self.n,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Single-channel view as plain values (probability volumes).
    pub fn scalar_values(&self) -> Option<&[T]> {
        (self.n == 1).then_some(&self.values[..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_counts() {
        let dims = GridDims::isotropic(5, 5, 5);
        assert_eq!(neighbors26(&dims, dims.index(2, 2, 2)).len(), 26);
        assert_eq!(neighbors26(&dims, dims.index(0, 0, 0)).len(), 7);
        assert_eq!(neighbors26(&dims, dims.index(4, 4, 4)).len(), 7);
    }

    #[test]
    fn face_voxel_has_17_neighbors() {
        // Enumerate offsets: one axis at the boundary removes the 9 offsets on that side.
        let dims = GridDims::isotropic(5, 5, 5);
        let idx = dims.index(0, 2, 2);
        let expected = OFFSETS_26.iter().filter(|o| o.0 >= 0).count();
        assert_eq!(expected, 17);
        assert_eq!(neighbors26(&dims, idx).len(), expected);
    }

    #[test]
    fn neighbor_order_is_lexicographic() {
        let dims = GridDims::isotropic(3, 3, 3);
        let n = neighbors26(&dims, 13);
        let mut sorted = n.clone();
        sorted.sort_unstable();
        assert_eq!(n, sorted);
        assert_eq!(n.len(), 26);
    }

    #[test]
    fn neighbors_are_symmetric() {
        let dims = GridDims::isotropic(3, 4, 5);
        for i in 0..dims.len() {
            for j in neighbors26(&dims, i) {
                assert!(neighbors26(&dims, j).contains(&i));
            }
        }
    }

    #[test]
    fn field_layout_round_trip() {
        let dims = GridDims::isotropic(2, 2, 3);
        let cm: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let f = EmbeddingField::from_channel_major(dims, 2, &cm).unwrap();
        assert_eq!(f.vector(1), &[1.0, 13.0]);
        assert_eq!(f.to_channel_major(), cm);
    }

    #[test]
    fn rejects_non_finite() {
        let dims = GridDims::isotropic(1, 1, 2);
        assert!(matches!(
            EmbeddingField::from_voxel_major(dims, 1, vec![0.0, f64::NAN]),
            Err(VolumeError::NonFinite(1))
        ));
    }

    #[test]
    fn coordinate_conversion() {
        let dims = GridDims::new(4, 5, 6, [1.0, 0.35, 0.35]).unwrap();
        let i = dims.index(3, 2, 1);
        assert_eq!(dims.coords(i), [3, 2, 1]);
        let p = dims.to_um(i);
        assert_eq!(p, [0.35, 0.7, 3.0]);
        let v = dims.um_to_voxel(p);
        assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12);
        assert!(GridDims::new(0, 1, 1, [1.0; 3]).is_err());
        assert!(GridDims::new(1, 1, 1, [1.0, 0.0, 1.0]).is_err());
    }
}
