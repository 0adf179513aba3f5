//! Naive loss evaluation used as an oracle: direct window scans and
//! explicit neighbor loops, no shared code with the library.

use neurite_recon::loss::{LossInputs, PatchSpec};
use neurite_recon::volume::{EmbeddingField, GridDims, LabelVolume, VoxelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub field: EmbeddingField<f64>,
    pub labels: LabelVolume,
    pub probs: EmbeddingField<f64>,
    pub truth: VoxelMask,
}

impl Instance {
    pub fn inputs(&self) -> LossInputs<'_, f64> {
        LossInputs {
            field: &self.field,
            labels: &self.labels,
            probabilities: &self.probs,
            truth: &self.truth,
        }
    }
}

pub fn random_instance(seed: u64, e: usize, n: usize, k: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = GridDims::isotropic(e, e, e);
    let len = dims.len();
    let labels = LabelVolume::new(dims, (0..len).map(|_| rng.random_range(0..=k)).collect()).unwrap();
    let field =
        EmbeddingField::from_voxel_major(dims, n, (0..len * n).map(|_| rng.random_range(-1.5..1.5)).collect())
            .unwrap();
    let probs =
        EmbeddingField::from_voxel_major(dims, 1, (0..len).map(|_| rng.random_range(0.2..0.8)).collect()).unwrap();
    let truth = labels.foreground();
    Instance {
        field,
        labels,
        probs,
        truth,
    }
}

pub fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

pub fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Members of each label inside a patch, ascending label id.
pub fn naive_clusters(inst: &Instance, p: &PatchSpec) -> Vec<Vec<usize>> {
    let dims = inst.labels.dims;
    let mut ids: Vec<u32> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for z in p.origin[0]..p.origin[0] + p.size[0] {
        for y in p.origin[1]..p.origin[1] + p.size[1] {
            for x in p.origin[2]..p.origin[2] + p.size[2] {
                let i = (z * dims.h + y) * dims.w + x;
                let l = inst.labels.labels[i];
                if l == 0 {
                    continue;
                }
                match ids.iter().position(|&v| v == l) {
                    Some(k) => members[k].push(i),
                    None => {
                        ids.push(l);
                        members.push(vec![i]);
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&k| ids[k]);
    order.into_iter().map(|k| members[k].clone()).collect()
}

pub fn naive_mean(f: &EmbeddingField<f64>, s: &[usize]) -> Vec<f64> {
    let n = f.channels();
    let mut m = vec![0.0; n];
    for &i in s {
        for q in 0..n {
            m[q] += f.vector(i)[q];
        }
    }
    m.iter().map(|v| v / s.len() as f64).collect()
}

pub fn naive_var(f: &EmbeddingField<f64>, clusters: &[Vec<usize>], dv: f64) -> f64 {
    let mut total = 0.0;
    for s in clusters {
        let mu = naive_mean(f, s);
        let mut inner = 0.0;
        for &i in s {
            inner += hinge(norm_diff(f.vector(i), &mu) - dv).powi(2);
        }
        total += inner / s.len() as f64;
    }
    total / clusters.len() as f64
}

pub fn naive_dist(f: &EmbeddingField<f64>, clusters: &[Vec<usize>], dd: f64) -> f64 {
    let c = clusters.len();
    if c < 2 {
        return 0.0;
    }
    let mus: Vec<Vec<f64>> = clusters.iter().map(|s| naive_mean(f, s)).collect();
    let mut total = 0.0;
    for a in 0..c {
        for b in 0..c {
            if a != b {
                total += hinge(2.0 * dd - norm_diff(&mus[a], &mus[b])).powi(2);
            }
        }
    }
    total / (c * (c - 1)) as f64
}

pub fn naive_con(f: &EmbeddingField<f64>, domain: &VoxelMask, dv: f64) -> f64 {
    let d = f.dims;
    let mut total = 0.0;
    let mut count = 0usize;
    for z in 0..d.d as isize {
        for y in 0..d.h as isize {
            for x in 0..d.w as isize {
                let i = ((z as usize) * d.h + y as usize) * d.w + x as usize;
                if !domain.bits[i] {
                    continue;
                }
                count += 1;
                let mut nb = Vec::new();
                for dz in -1..=1isize {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            if (dz, dy, dx) == (0, 0, 0) {
                                continue;
                            }
                            let (zz, yy, xx) = (z + dz, y + dy, x + dx);
                            if zz < 0 || yy < 0 || xx < 0 || zz >= d.d as isize || yy >= d.h as isize || xx >= d.w as isize {
                                continue;
                            }
                            let j = ((zz as usize) * d.h + yy as usize) * d.w + xx as usize;
                            if domain.bits[j] {
                                nb.push(j);
                            }
                        }
                    }
                }
                if nb.is_empty() {
                    continue;
                }
                let s: f64 = nb
                    .iter()
                    .map(|&j| hinge(norm_diff(f.vector(j), f.vector(i)) - dv).powi(2))
                    .sum();
                total += s / nb.len() as f64;
            }
        }
    }
    total / (2.0 * count as f64)
}

pub fn naive_reg(f: &EmbeddingField<f64>, domain: &VoxelMask) -> f64 {
    let idx: Vec<usize> = (0..f.dims.len()).filter(|&i| domain.bits[i]).collect();
    idx.iter().map(|&i| f.vector(i).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / idx.len() as f64
}

pub fn naive_bce(p: &EmbeddingField<f64>, truth: &VoxelMask) -> f64 {
    let len = p.dims.len();
    (0..len)
        .map(|i| {
            let q = p.vector(i)[0].clamp(1e-7, 1.0 - 1e-7);
            if truth.bits[i] {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum::<f64>()
        / len as f64
}

pub fn naive_patches(labels: &LabelVolume, size: usize, stride: usize) -> Vec<[usize; 3]> {
    let d = labels.dims;
    let mut out = Vec::new();
    let mut z = 0;
    while z + size <= d.d {
        let mut y = 0;
        while y + size <= d.h {
            let mut x = 0;
            while x + size <= d.w {
                let mut seen = std::collections::BTreeSet::new();
                for zz in z..z + size {
                    for yy in y..y + size {
                        for xx in x..x + size {
                            let l = labels.labels[(zz * d.h + yy) * d.w + xx];
                            if l != 0 {
                                seen.insert(l);
                            }
                        }
                    }
                }
                if seen.len() >= 2 {
                    out.push([z, y, x]);
                }
                x += stride;
            }
            y += stride;
        }
        z += stride;
    }
    out
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

