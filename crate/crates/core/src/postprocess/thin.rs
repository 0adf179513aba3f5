//! Directional 3D thinning to one-voxel-wide curves.
//!
//! Six subiterations per pass peel border points facing up, down, north,
//! south, east and west. In each subiteration the deletable points are
//! collected against the frozen image, then removed in scan order with a
//! re-check, so every single removal deletes a simple point. Curve
//! endpoints (exactly one 26-neighbor) are never removed. Topology
//! (26-connected objects, 6-connected background, tunnels and cavities) is
//! therefore preserved, and the loop stops at a fixed point.

use std::sync::OnceLock;

use crate::volume::{GridDims, VoxelMask};

const CENTER: usize = 13;

#[inline]
fn cell(dz: isize, dy: isize, dx: isize) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

#[inline]
fn cell_offset(k: usize) -> (isize, isize, isize) {
    (k as isize / 9 - 1, (k as isize / 3) % 3 - 1, k as isize % 3 - 1)
}

struct Adjacency {
    /// 26-adjacency between the 26 non-center cells.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacency between non-center cells of the 18-neighborhood.
    adj6: Vec<Vec<usize>>,
    n18: u32,
}

fn adjacency() -> &'static Adjacency {
    static ADJ: OnceLock<Adjacency> = OnceLock::new();
    ADJ.get_or_init(|| {
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        let mut n18 = 0u32;
        for a in 0..27 {
            if a == CENTER {
                continue;
            }
            let (az, ay, ax) = cell_offset(a);
            if az.abs() + ay.abs() + ax.abs() <= 2 {
                n18 |= 1 << a;
            }
            for b in 0..27 {
                if b == CENTER || b == a {
                    continue;
                }
                let (bz, by, bx) = cell_offset(b);
                let d = [(az - bz).abs(), (ay - by).abs(), (ax - bx).abs()];
                if d.iter().all(|&v| v <= 1) {
                    adj26[a].push(b);
                    if d.iter().sum::<isize>() == 1 {
                        adj6[a].push(b);
                    }
                }
            }
        }
        Adjacency { adj26, adj6, n18 }
    })
}

/// Number of connected components of the cells in `set`.
fn components(set: u32, adj: &[Vec<usize>], stop_after: usize) -> usize {
    let mut left = set;
    let mut count = 0;
    let mut stack = [0usize; 27];
    while left != 0 {
        count += 1;
        if count > stop_after {
            return count;
        }
        let s = left.trailing_zeros() as usize;
        left &= !(1 << s);
        let mut top = 1;
        stack[0] = s;
        while top > 0 {
            top -= 1;
            let a = stack[top];
            for &b in &adj[a] {
                if left & (1 << b) != 0 {
                    left &= !(1 << b);
                    stack[top] = b;
                    top += 1;
                }
            }
        }
    }
    count
}

/// Whether the center of a 3x3x3 configuration (bit `k` set = foreground
/// at cell `k`) is a simple point for (26, 6) connectivity.
pub fn is_simple(nbhd: u32) -> bool {
    let adj = adjacency();
    let fg = nbhd & !(1 << CENTER) & ((1 << 27) - 1);
    if fg == 0 || components(fg, &adj.adj26, 1) != 1 {
        return false;
    }
    // background components in N18 that touch a face neighbor
    let bg = !nbhd & adj.n18;
    let faces = [cell(-1, 0, 0), cell(1, 0, 0), cell(0, -1, 0), cell(0, 1, 0), cell(0, 0, -1), cell(0, 0, 1)];
    let mut left = bg;
    let mut touching = 0;
    let mut stack = [0usize; 27];
    for &f in &faces {
        if left & (1 << f) == 0 {
            continue;
        }
        touching += 1;
        if touching > 1 {
            return false;
        }
        left &= !(1 << f);
        let mut top = 1;
        stack[0] = f;
        while top > 0 {
            top -= 1;
            let a = stack[top];
            for &b in &adj.adj6[a] {
                if left & (1 << b) != 0 {
                    left &= !(1 << b);
                    stack[top] = b;
                    top += 1;
                }
            }
        }
    }
    touching == 1
}

/// Padded local grid holding one object.
struct Local {
    d: usize,
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl Local {
    #[inline]
    fn nbhd(&self, i: usize) -> u32 {
        let mut m = 0u32;
        let (sz, sy) = ((self.h * self.w) as isize, self.w as isize);
        let mut k = 0;
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let j = (i as isize + dz * sz + dy * sy + dx) as usize;
                    if self.bits[j] {
                        m |= 1 << k;
                    }
                    k += 1;
                }
            }
        }
        m
    }
}

const DIRECTIONS: [(isize, isize, isize); 6] = [
    (-1, 0, 0), // up
    (1, 0, 0),  // down
    (0, -1, 0), // north
    (0, 1, 0),  // south
    (0, 0, 1),  // east
    (0, 0, -1), // west
];

#[inline]
fn deletable(nbhd: u32) -> bool {
    (nbhd & !(1 << CENTER)).count_ones() != 1 && is_simple(nbhd)
}

/// Thins the given voxels (indices into `dims`) and returns the surviving
/// voxels in ascending order.
pub fn thin_voxels(dims: &GridDims, voxels: &[usize]) -> Vec<usize> {
    if voxels.is_empty() {
        return Vec::new();
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &v in voxels {
        let c = dims.coords(v);
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let (d, h, w) = (hi[0] - lo[0] + 3, hi[1] - lo[1] + 3, hi[2] - lo[2] + 3);
    let mut local = Local {
        d,
        h,
        w,
        bits: vec![false; d * h * w],
    };
    let to_local = |v: usize| {
        let c = dims.coords(v);
        ((c[0] - lo[0] + 1) * h + (c[1] - lo[1] + 1)) * w + (c[2] - lo[2] + 1)
    };
    let mut points: Vec<usize> = voxels.iter().map(|&v| to_local(v)).collect();
    points.sort_unstable();
    points.dedup();
    for &p in &points {
        local.bits[p] = true;
    }

    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for &(dz, dy, dx) in &DIRECTIONS {
            let step = dz * (h * w) as isize + dy * w as isize + dx;
            candidates.clear();
            candidates.extend(points.iter().copied().filter(|&p| {
                !local.bits[(p as isize + step) as usize] && deletable(local.nbhd(p))
            }));
            let mut removed = false;
            for &p in &candidates {
                if deletable(local.nbhd(p)) {
                    local.bits[p] = false;
                    removed = true;
                }
            }
            if removed {
                points.retain(|&p| local.bits[p]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    debug_assert!(local.d >= 3);

    let mut out: Vec<usize> = points
        .iter()
        .map(|&p| {
            let x = p % w;
            let r = p / w;
            let (z, y) = (r / h, r % h);
            dims.index(z - 1 + lo[0], y - 1 + lo[1], x - 1 + lo[2])
        })
        .collect();
    out.sort_unstable();
    out
}

/// Thins a whole mask.
pub fn thin_mask(mask: &VoxelMask) -> VoxelMask {
    VoxelMask::from_indices(mask.dims, thin_voxels(&mask.dims, &mask.indices()))
}
