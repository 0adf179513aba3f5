//! Discriminative embedding loss with analytic gradients.
//!
//! Four embedding terms plus the segmentation cross-entropy:
//!
//! * variance: pulls each voxel to within `delta_v` of its instance centroid,
//!   evaluated per overlap patch;
//! * distance: pushes centroids of different instances in a patch at least
//!   `2 * delta_d` apart;
//! * continuity: penalizes 26-neighbor embedding jumps larger than `delta_v`
//!   over the foreground;
//! * regularization: mean squared embedding norm over the foreground.
//!
//! The total averages the patch terms over all patches and adds the global
//! terms with their weights.

mod check;
mod grad;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{check_gradient, GradCheckParams, GradCheckReport};
pub use grad::{grad_total_loss, LossGradient};

use crate::scalar::{hinge, Scalar};
use crate::volume::{check_same_shape, EmbeddingField, GridDims, LabelVolume, VolumeError, VoxelMask, OFFSETS_26};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("patch {0} has no instances")]
    NoInstances(usize),
    #[error("empty domain")]
    EmptyDomain,
    #[error("patch {origin:?}+{size:?} does not fit in {dims:?}")]
    PatchOutOfBounds {
        origin: [usize; 3],
        size: [usize; 3],
        dims: [usize; 3],
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Margins {
    pub delta_v: f64,
    pub delta_d: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            delta_v: 0.5,
            delta_d: 1.5,
        }
    }
}

impl Margins {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.delta_v > 0.0 && self.delta_d > 0.0) {
            return Err(LossError::InvalidParameter(format!(
                "margins must be positive, got delta_v = {}, delta_d = {}",
                self.delta_v, self.delta_d
            )));
        }
        if self.delta_d < self.delta_v {
            return Err(LossError::InvalidParameter(format!(
                "delta_d ({}) must be >= delta_v ({})",
                self.delta_d, self.delta_v
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub xi: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            eta: 0.001,
            xi: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let w = [self.alpha, self.beta, self.gamma, self.eta, self.xi];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LossError::InvalidParameter(format!(
                "weights must be finite and >= 0, got {w:?}"
            )));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(LossError::InvalidParameter("weights are all zero".into()));
        }
        Ok(())
    }
}

/// A box of voxels: `origin` and `size` in `[z, y, x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

impl PatchSpec {
    pub fn check(&self, dims: &GridDims) -> Result<(), LossError> {
        let ext = [dims.d, dims.h, dims.w];
        if (0..3).any(|k| self.size[k] == 0 || self.origin[k] + self.size[k] > ext[k]) {
            return Err(LossError::PatchOutOfBounds {
                origin: self.origin,
                size: self.size,
                dims: ext,
            });
        }
        Ok(())
    }

    /// Voxel indices in scan order.
    pub fn voxels<'a>(&'a self, dims: &'a GridDims) -> impl Iterator<Item = usize> + 'a {
        let [oz, oy, ox] = self.origin;
        let [sz, sy, sx] = self.size;
        (oz..oz + sz).flat_map(move |z| {
            (oy..oy + sy).flat_map(move |y| (ox..ox + sx).map(move |x| dims.index(z, y, x)))
        })
    }
}

/// Voxels of one instance inside a patch, with their embedding centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCluster<T> {
    pub instance_id: u32,
    pub voxels: Vec<usize>,
    pub centroid: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    /// Patch-averaged variance term.
    pub l_var: T,
    /// Patch-averaged distance term.
    pub l_dist: T,
    pub l_con: T,
    /// Part of `l_con` from neighbor pairs whose labels are different nonzero ids.
    pub l_con_cross_instance: T,
    pub l_reg: T,
    pub l_bce: T,
    pub total: T,
    pub n_patches: usize,
    pub per_patch_var: Vec<T>,
    pub per_patch_dist: Vec<T>,
}

/// Everything the total loss reads.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a, T> {
    pub field: &'a EmbeddingField<T>,
    pub labels: &'a LabelVolume,
    /// Single-channel foreground probabilities.
    pub probabilities: &'a EmbeddingField<T>,
    /// Foreground truth; also the domain of the continuity and regularization terms.
    pub truth: &'a VoxelMask,
}

impl<T: Scalar> LossInputs<'_, T> {
    pub fn check(&self) -> Result<(), LossError> {
        let d = &self.field.dims;
        check_same_shape(d, &self.labels.dims, "field vs labels")?;
        check_same_shape(d, &self.probabilities.dims, "field vs probabilities")?;
        check_same_shape(d, &self.truth.dims, "field vs truth mask")?;
        if self.probabilities.channels() != 1 {
            return Err(VolumeError::ShapeMismatch(format!(
                "probabilities must have 1 channel, found {}",
                self.probabilities.channels()
            ))
            .into());
        }
        Ok(())
    }
}

/// Sliding windows (scan order z, y, x) that contain at least two distinct
/// nonzero labels.
pub fn find_overlap_patches(
    labels: &LabelVolume,
    patch_size: [usize; 3],
    stride: [usize; 3],
) -> Result<Vec<PatchSpec>, LossError> {
    let dims = labels.dims;
    let ext = [dims.d, dims.h, dims.w];
    if (0..3).any(|k| patch_size[k] == 0 || patch_size[k] > ext[k]) {
        return Err(LossError::PatchOutOfBounds {
            origin: [0; 3],
            size: patch_size,
            dims: ext,
        });
    }
    if stride.contains(&0) {
        return Err(LossError::InvalidParameter("stride must be >= 1".into()));
    }
    let starts = |k: usize| (0..=ext[k] - patch_size[k]).step_by(stride[k]);
    let mut out = Vec::new();
    for z in starts(0) {
        for y in starts(1) {
            for x in starts(2) {
                let p = PatchSpec {
                    origin: [z, y, x],
                    size: patch_size,
                };
                let mut first = 0u32;
                let two = p.voxels(&dims).any(|i| {
                    let l = labels.labels[i];
                    if l == 0 {
                        return false;
                    }
                    if first == 0 {
                        first = l;
                    }
                    l != first
                });
                if two {
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}

/// One cluster per distinct nonzero label inside the patch, ascending by id.
pub fn patch_clusters<T: Scalar>(
    field: &EmbeddingField<T>,
    labels: &LabelVolume,
    patch: &PatchSpec,
) -> Vec<InstanceCluster<T>> {
    let mut by_label: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for i in patch.voxels(&labels.dims) {
        let l = labels.labels[i];
        if l != 0 {
            by_label.entry(l).or_default().push(i);
        }
    }
    by_label
        .into_iter()
        .map(|(instance_id, voxels)| {
            let centroid = centroid(field, &voxels);
            InstanceCluster {
                instance_id,
                voxels,
                centroid,
            }
        })
        .collect()
}

fn centroid<T: Scalar>(field: &EmbeddingField<T>, voxels: &[usize]) -> Vec<T> {
    let mut c = vec![T::zero(); field.channels()];
    for &i in voxels {
        for (a, &v) in c.iter_mut().zip(field.vector(i)) {
            *a += v;
        }
    }
    let inv = T::one() / T::lit(voxels.len() as f64);
    c.iter_mut().for_each(|a| *a *= inv);
    c
}

/// Intra-cluster compactness of one patch.
pub fn variance_term<T: Scalar>(
    field: &EmbeddingField<T>,
    clusters: &[InstanceCluster<T>],
    margins: &Margins,
) -> Result<T, LossError> {
    if clusters.is_empty() {
        return Err(LossError::NoInstances(0));
    }
    let dv = T::lit(margins.delta_v);
    let mut sum = T::zero();
    for c in clusters {
        let mut s = T::zero();
        for &i in &c.voxels {
            let h = hinge(T::dist2(field.vector(i), &c.centroid).sqrt() - dv);
            s += h * h;
        }
        sum += s / T::lit(c.voxels.len() as f64);
    }
    Ok(sum / T::lit(clusters.len() as f64))
}

/// Inter-cluster separation of one patch over ordered centroid pairs; zero
/// for fewer than two clusters.
pub fn distance_term<T: Scalar>(clusters: &[InstanceCluster<T>], margins: &Margins) -> T {
    let c = clusters.len();
    if c < 2 {
        return T::zero();
    }
    let two_dd = T::lit(2.0 * margins.delta_d);
    let mut sum = T::zero();
    for a in 0..c {
        for b in a + 1..c {
            let h = hinge(two_dd - T::dist2(&clusters[a].centroid, &clusters[b].centroid).sqrt());
            // (a, b) and (b, a) contribute equally
            sum += T::lit(2.0) * h * h;
        }
    }
    sum / T::lit((c * (c - 1)) as f64)
}

pub(crate) struct Continuity<T> {
    pub total: T,
    pub cross: T,
}

pub(crate) fn continuity_parts<T: Scalar>(
    field: &EmbeddingField<T>,
    domain: &VoxelMask,
    labels: Option<&LabelVolume>,
    delta_v: f64,
) -> Result<Continuity<T>, LossError> {
    check_same_shape(&field.dims, &domain.dims, "field vs domain")?;
    let dims = field.dims;
    let dv = T::lit(delta_v);
    let members = domain.indices();
    if members.is_empty() {
        return Err(LossError::EmptyDomain);
    }
    let mut total = T::zero();
    let mut cross = T::zero();
    let mut nb = Vec::with_capacity(26);
    for &i in &members {
        nb.clear();
        nb.extend(
            OFFSETS_26
                .iter()
                .filter_map(|&(dz, dy, dx)| dims.offset(i, dz, dy, dx))
                .filter(|&j| domain.bits[j]),
        );
        if nb.is_empty() {
            continue;
        }
        let inv = T::one() / T::lit(nb.len() as f64);
        let xi = field.vector(i);
        for &j in &nb {
            let h = hinge(T::dist2(field.vector(j), xi).sqrt() - dv);
            let t = h * h * inv;
            total += t;
            if let Some(l) = labels {
                let (a, b) = (l.labels[i], l.labels[j]);
                if a != 0 && b != 0 && a != b {
                    cross += t;
                }
            }
        }
    }
    let norm = T::one() / (T::lit(2.0) * T::lit(members.len() as f64));
    Ok(Continuity {
        total: total * norm,
        cross: cross * norm,
    })
}

/// Neighbor smoothness over `domain`; neighbors are the in-domain 26-neighbors.
pub fn continuity_term<T: Scalar>(
    field: &EmbeddingField<T>,
    domain: &VoxelMask,
    delta_v: f64,
) -> Result<T, LossError> {
    continuity_parts(field, domain, None, delta_v).map(|c| c.total)
}

/// Mean squared embedding norm over `domain`.
pub fn regularization_term<T: Scalar>(
    field: &EmbeddingField<T>,
    domain: &VoxelMask,
) -> Result<T, LossError> {
    check_same_shape(&field.dims, &domain.dims, "field vs domain")?;
    let mut n = 0usize;
    let mut s = T::zero();
    for i in domain.indices() {
        s += T::norm2(field.vector(i));
        n += 1;
    }
    if n == 0 {
        return Err(LossError::EmptyDomain);
    }
    Ok(s / T::lit(n as f64))
}

/// Mean binary cross-entropy over all voxels, probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_term<T: Scalar>(probabilities: &EmbeddingField<T>, truth: &VoxelMask) -> Result<T, LossError> {
    check_same_shape(&probabilities.dims, &truth.dims, "probabilities vs truth")?;
    let p = probabilities.scalar_values().ok_or_else(|| {
        VolumeError::ShapeMismatch(format!(
            "probabilities must have 1 channel, found {}",
            probabilities.channels()
        ))
    })?;
    let lo = T::lit(BCE_EPS);
    let hi = T::one() - lo;
    let mut s = T::zero();
    for (&pi, &y) in p.iter().zip(&truth.bits) {
        let pc = pi.max(lo).min(hi);
        s -= if y { pc.ln() } else { (T::one() - pc).ln() };
    }
    Ok(s / T::lit(p.len() as f64))
}

/// Per-patch `(l_var, l_dist)`, computed in parallel and returned in patch order.
pub(crate) fn patch_terms<T: Scalar>(
    inputs: &LossInputs<'_, T>,
    patches: &[PatchSpec],
    margins: &Margins,
) -> Result<Vec<(T, T)>, LossError> {
    for p in patches {
        p.check(&inputs.field.dims)?;
    }
    patches
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let clusters = patch_clusters(inputs.field, inputs.labels, p);
            let v = variance_term(inputs.field, &clusters, margins).map_err(|e| match e {
                LossError::NoInstances(_) => LossError::NoInstances(k),
                e => e,
            })?;
            Ok((v, distance_term(&clusters, margins)))
        })
        .collect()
}

/// The weighted total and its parts. With no patches the patch-averaged
/// terms are 0; with an empty foreground the continuity and regularization
/// terms are 0.
pub fn total_loss<T: Scalar>(
    inputs: &LossInputs<'_, T>,
    patches: &[PatchSpec],
    margins: &Margins,
    weights: &LossWeights,
) -> Result<LossBreakdown<T>, LossError> {
    inputs.check()?;
    let per_patch = patch_terms(inputs, patches, margins)?;
    let np = per_patch.len();
    let (l_var, l_dist) = if np == 0 {
        (T::zero(), T::zero())
    } else {
        let inv = T::one() / T::lit(np as f64);
        let (sv, sd) = per_patch
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), &(v, d)| (a + v, b + d));
        (sv * inv, sd * inv)
    };
    let (l_con, l_con_cross_instance, l_reg) = match continuity_parts(
        inputs.field,
        inputs.truth,
        Some(inputs.labels),
        margins.delta_v,
    ) {
        Ok(c) => (c.total, c.cross, regularization_term(inputs.field, inputs.truth)?),
        Err(LossError::EmptyDomain) => (T::zero(), T::zero(), T::zero()),
        Err(e) => return Err(e),
    };
    let l_bce = bce_term(inputs.probabilities, inputs.truth)?;
    let w = |v: f64| T::lit(v);
    let total = w(weights.alpha) * l_var
        + w(weights.beta) * l_dist
        + w(weights.gamma) * l_con
        + w(weights.eta) * l_reg
        + w(weights.xi) * l_bce;
    Ok(LossBreakdown {
        l_var,
        l_dist,
        l_con,
        l_con_cross_instance,
        l_reg,
        l_bce,
        total,
        n_patches: np,
        per_patch_var: per_patch.iter().map(|p| p.0).collect(),
        per_patch_dist: per_patch.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_field(vals: &[f64]) -> EmbeddingField<f64> {
        let dims = GridDims::isotropic(1, 1, vals.len());
        EmbeddingField::from_voxel_major(dims, 1, vals.to_vec()).unwrap()
    }

    fn cluster(field: &EmbeddingField<f64>, id: u32, voxels: Vec<usize>) -> InstanceCluster<f64> {
        let centroid = centroid(field, &voxels);
        InstanceCluster {
            instance_id: id,
            voxels,
            centroid,
        }
    }

    #[test]
    fn variance_hand_value() {
        let f = line_field(&[0.0, 2.0]);
        let c = cluster(&f, 1, vec![0, 1]);
        assert_eq!(c.centroid, vec![1.0]);
        let m = Margins {
            delta_v: 0.5,
            delta_d: 1.5,
        };
        assert_eq!(variance_term(&f, &[c], &m).unwrap(), 0.25);
    }

    #[test]
    fn variance_zero_when_equal_and_error_when_empty() {
        let f = line_field(&[0.7, 0.7, 0.7]);
        let c = cluster(&f, 1, vec![0, 1, 2]);
        assert_eq!(variance_term(&f, &[c], &Margins::default()).unwrap(), 0.0);
        assert!(matches!(
            variance_term::<f64>(&f, &[], &Margins::default()),
            Err(LossError::NoInstances(_))
        ));
    }

    #[test]
    fn distance_hand_values() {
        let f = line_field(&[0.0, 1.0]);
        let m = Margins {
            delta_v: 0.5,
            delta_d: 1.5,
        };
        let a = cluster(&f, 1, vec![0]);
        let b = cluster(&f, 2, vec![1]);
        assert_eq!(distance_term(std::slice::from_ref(&a), &m), 0.0);
        assert_eq!(distance_term(&[a.clone(), b], &m), 4.0);
        // exactly 2 * delta_d apart
        let far = line_field(&[0.0, 3.0]);
        let a = cluster(&far, 1, vec![0]);
        let b = cluster(&far, 2, vec![1]);
        assert_eq!(distance_term(&[a, b], &m), 0.0);
    }

    #[test]
    fn continuity_hand_value() {
        let f = line_field(&[0.0, 1.0]);
        let domain = VoxelMask::new(f.dims, vec![true, true]).unwrap();
        assert_eq!(continuity_term(&f, &domain, 0.5).unwrap(), 0.125);
        let empty = VoxelMask::zeros(f.dims);
        assert!(matches!(
            continuity_term(&f, &empty, 0.5),
            Err(LossError::EmptyDomain)
        ));
    }

    #[test]
    fn regularization_values() {
        let dims = GridDims::isotropic(2, 2, 2);
        let z = EmbeddingField::<f64>::zeros(dims, 3);
        let all = VoxelMask::new(dims, vec![true; 8]).unwrap();
        assert_eq!(regularization_term(&z, &all).unwrap(), 0.0);
        let mut u = z.clone();
        for i in 0..8 {
            u.vector_mut(i)[i % 3] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        assert_eq!(regularization_term(&u, &all).unwrap(), 1.0);
    }

    #[test]
    fn bce_values() {
        let dims = GridDims::isotropic(1, 2, 2);
        let truth = VoxelMask::new(dims, vec![true, false, true, false]).unwrap();
        let exact = EmbeddingField::from_voxel_major(dims, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(bce_term(&exact, &truth).unwrap() <= 1e-6);
        let half = EmbeddingField::from_voxel_major(dims, 1, vec![0.5; 4]).unwrap();
        assert!((bce_term(&half, &truth).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let other = VoxelMask::zeros(GridDims::isotropic(1, 1, 4));
        assert!(matches!(
            bce_term(&half, &other),
            Err(LossError::Volume(VolumeError::ShapeMismatch(_)))
        ));
    }

    #[test]
    fn single_instance_has_no_patches() {
        let dims = GridDims::isotropic(8, 8, 8);
        let mut l = LabelVolume::zeros(dims);
        for i in 0..100 {
            l.labels[i] = 3;
        }
        assert!(find_overlap_patches(&l, [4, 4, 4], [2, 2, 2]).unwrap().is_empty());
    }

    #[test]
    fn patch_count_bound() {
        let dims = GridDims::isotropic(128, 128, 128);
        let mut l = LabelVolume::zeros(dims);
        for (k, v) in l.labels.iter_mut().enumerate() {
            *v = (k % 7 == 0) as u32 + (k % 11 == 0) as u32 * 2;
        }
        let p = find_overlap_patches(&l, [32; 3], [32; 3]).unwrap();
        assert!(p.len() <= 64);
        assert_eq!(p.len(), 64);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Margins {
            delta_v: 1.0,
            delta_d: 0.5
        }
        .validate()
        .is_err());
        assert!(Margins::default().validate().is_ok());
        let negative = LossWeights {
            gamma: -0.1,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
        let zero = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            eta: 0.0,
            xi: 0.0,
        };
        assert!(zero.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }
}
