//! Voxel test shapes and topology helpers shared by thinning tests.

use std::collections::{BTreeSet, HashMap};

use neurite_recon::union_find::DisjointSet;
use neurite_recon::volume::{GridDims, VoxelMask, OFFSETS_26};

type P = [f64; 3];

fn seg_dist2(p: P, a: P, b: P) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let l2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = if l2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / l2).clamp(0.0, 1.0)
    };
    (0..3).map(|k| (ap[k] - t * ab[k]).powi(2)).sum()
}

fn paint(dims: GridDims, inside: impl Fn(P) -> bool) -> VoxelMask {
    let bits = (0..dims.len())
        .map(|i| {
            let [z, y, x] = dims.coords(i);
            inside([z as f64, y as f64, x as f64])
        })
        .collect();
    VoxelMask::new(dims, bits).unwrap()
}

/// Union of capsules (segment, radius) in `[z, y, x]` voxel coordinates.
pub fn capsules(dims: GridDims, segs: &[(P, P, f64)]) -> VoxelMask {
    paint(dims, |p| segs.iter().any(|&(a, b, r)| seg_dist2(p, a, b) <= r * r))
}

pub fn torus(n: usize, major: f64, minor: f64) -> VoxelMask {
    let c = (n as f64 - 1.0) / 2.0;
    paint(GridDims::isotropic(n, n, n), |[z, y, x]| {
        let rho = ((y - c).powi(2) + (x - c).powi(2)).sqrt();
        (rho - major).powi(2) + (z - c).powi(2) <= minor * minor
    })
}

pub fn plate(n: usize, thick: usize) -> VoxelMask {
    let lo = (n - thick) / 2;
    paint(GridDims::isotropic(n, n, n), |[z, y, x]| {
        let z = z as usize;
        z >= lo && z < lo + thick && (2.0..n as f64 - 2.0).contains(&y) && (2.0..n as f64 - 2.0).contains(&x)
    })
}

/// Name, mask, and whether the shape is a single straight tube.
pub fn suite() -> Vec<(&'static str, VoxelMask, bool)> {
    let g = |d, h, w| GridDims::isotropic(d, h, w);
    vec![
        ("tube x r1", capsules(g(9, 9, 30), &[([4.0, 4.0, 3.0], [4.0, 4.0, 26.0], 1.0)]), true),
        ("tube x r2", capsules(g(11, 11, 30), &[([5.0, 5.0, 4.0], [5.0, 5.0, 25.0], 2.0)]), true),
        ("tube x r3", capsules(g(13, 13, 34), &[([6.0, 6.0, 5.0], [6.0, 6.0, 28.0], 3.0)]), true),
        ("tube y r2", capsules(g(11, 30, 11), &[([5.0, 4.0, 5.0], [5.0, 25.0, 5.0], 2.0)]), true),
        ("tube z r2.5", capsules(g(30, 13, 13), &[([4.0, 6.0, 6.0], [25.0, 6.0, 6.0], 2.5)]), true),
        ("tube diagonal", capsules(g(24, 24, 24), &[([4.0, 4.0, 4.0], [19.0, 19.0, 19.0], 2.0)]), true),
        ("tube oblique", capsules(g(16, 24, 32), &[([4.0, 5.0, 4.0], [11.0, 18.0, 27.0], 1.5)]), true),
        (
            "y junction",
            capsules(
                g(13, 30, 30),
                &[
                    ([6.0, 15.0, 3.0], [6.0, 15.0, 15.0], 2.0),
                    ([6.0, 15.0, 15.0], [6.0, 4.0, 26.0], 2.0),
                    ([6.0, 15.0, 15.0], [6.0, 26.0, 26.0], 2.0),
                ],
            ),
            false,
        ),
        (
            "y junction 3d",
            capsules(
                g(28, 28, 28),
                &[
                    ([14.0, 14.0, 3.0], [14.0, 14.0, 14.0], 2.5),
                    ([14.0, 14.0, 14.0], [4.0, 24.0, 22.0], 2.0),
                    ([14.0, 14.0, 14.0], [24.0, 4.0, 22.0], 2.0),
                ],
            ),
            false,
        ),
        (
            "t junction",
            capsules(
                g(11, 28, 28),
                &[([5.0, 4.0, 14.0], [5.0, 24.0, 14.0], 2.0), ([5.0, 14.0, 14.0], [5.0, 14.0, 25.0], 2.0)],
            ),
            false,
        ),
        (
            "cross",
            capsules(
                g(11, 28, 28),
                &[([5.0, 14.0, 3.0], [5.0, 14.0, 24.0], 2.0), ([5.0, 3.0, 14.0], [5.0, 24.0, 14.0], 2.0)],
            ),
            false,
        ),
        (
            "l bend",
            capsules(
                g(11, 26, 26),
                &[([5.0, 4.0, 4.0], [5.0, 4.0, 21.0], 1.5), ([5.0, 4.0, 21.0], [5.0, 21.0, 21.0], 1.5)],
            ),
            false,
        ),
        (
            "two tubes",
            capsules(
                g(20, 12, 30),
                &[([4.0, 6.0, 3.0], [4.0, 6.0, 26.0], 1.5), ([15.0, 6.0, 3.0], [15.0, 6.0, 26.0], 1.5)],
            ),
            false,
        ),
        (
            "zigzag",
            capsules(
                g(11, 20, 40),
                &[
                    ([5.0, 4.0, 3.0], [5.0, 15.0, 12.0], 1.5),
                    ([5.0, 15.0, 12.0], [5.0, 4.0, 22.0], 1.5),
                    ([5.0, 4.0, 22.0], [5.0, 15.0, 33.0], 1.5),
                ],
            ),
            false,
        ),
        ("torus small", torus(24, 7.0, 2.0), false),
        ("torus large", torus(36, 11.0, 3.0), false),
        ("torus thin", torus(20, 6.0, 1.0), false),
        ("plate thin", plate(20, 1), false),
        ("plate thick", plate(20, 4), false),
        ("block", paint(g(10, 12, 14), |[z, y, x]| (2.0..8.0).contains(&z) && (2.0..10.0).contains(&y) && (2.0..12.0).contains(&x)), false),
    ]
}

/// 26-connected components of a mask.
pub fn components26(m: &VoxelMask) -> usize {
    let idx = m.indices();
    let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut ds = DisjointSet::new(idx.len());
    for (k, &i) in idx.iter().enumerate() {
        for &(dz, dy, dx) in &OFFSETS_26 {
            if let Some(j) = m.dims.offset(i, dz, dy, dx) {
                if let Some(&kj) = pos.get(&j) {
                    ds.union(k, kj);
                }
            }
        }
    }
    (0..idx.len()).map(|k| ds.find(k)).collect::<BTreeSet<_>>().len()
}

/// Voxels with exactly one 26-neighbor in the mask.
pub fn endpoints(m: &VoxelMask) -> usize {
    m.indices()
        .into_iter()
        .filter(|&i| {
            OFFSETS_26
                .iter()
                .filter_map(|&(dz, dy, dx)| m.dims.offset(i, dz, dy, dx))
                .filter(|&j| m.bits[j])
                .count()
                == 1
        })
        .count()
}

/// Euler characteristic of the union of closed unit cubes, one per voxel.
pub fn euler(m: &VoxelMask) -> i64 {
    let mut cells = BTreeSet::new();
    for i in m.indices() {
        let [z, y, x] = m.dims.coords(i);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    cells.insert((2 * z + a, 2 * y + b, 2 * x + c));
                }
            }
        }
    }
    cells
        .iter()
        .map(|&(a, b, c)| if (a % 2 + b % 2 + c % 2) % 2 == 0 { 1 } else { -1 })
        .sum()
}
