//! Exact Euclidean distance transform on anisotropic grids
//! (separable lower-envelope-of-parabolas method).

use super::VoxelMask;

/// Squared distance in µm² from every voxel to the nearest background voxel
/// center. Background voxels get 0; when the grid has no background at all
/// every value is `f64::INFINITY`. Space outside the grid is not background.
pub fn squared_edt(mask: &VoxelMask) -> Vec<f64> {
    let dims = mask.dims;
    let mut f: Vec<f64> = mask
        .bits
        .iter()
        .map(|&b| if b { f64::INFINITY } else { 0.0 })
        .collect();
    let [sz, sy, sx] = dims.voxel_size;
    let (d, h, w) = (dims.d, dims.h, dims.w);

    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut scratch = Scratch::default();
    // x lines
    for z in 0..d {
        for y in 0..h {
            let base = dims.index(z, y, 0);
            line.clear();
            line.extend_from_slice(&f[base..base + w]);
            transform_1d(&line, sx, &mut out, &mut scratch);
            f[base..base + w].copy_from_slice(&out);
        }
    }
    // y lines
    for z in 0..d {
        for x in 0..w {
            line.clear();
            line.extend((0..h).map(|y| f[dims.index(z, y, x)]));
            transform_1d(&line, sy, &mut out, &mut scratch);
            for y in 0..h {
                f[dims.index(z, y, x)] = out[y];
            }
        }
    }
    // z lines
    for y in 0..h {
        for x in 0..w {
            line.clear();
            line.extend((0..d).map(|z| f[dims.index(z, y, x)]));
            transform_1d(&line, sz, &mut out, &mut scratch);
            for z in 0..d {
                f[dims.index(z, y, x)] = out[z];
            }
        }
    }
    f
}

/// Distance in µm (square root of [`squared_edt`]).
pub fn edt(mask: &VoxelMask) -> Vec<f64> {
    squared_edt(mask).into_iter().map(f64::sqrt).collect()
}

#[derive(Default)]
struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

fn transform_1d(f: &[f64], spacing: f64, out: &mut Vec<f64>, s: &mut Scratch) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    s.v.clear();
    s.z.clear();
    let pos = |q: usize| q as f64 * spacing;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match s.v.last() {
                None => {
                    s.v.push(q);
                    s.z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let (pq, pp) = (pos(q), pos(p));
                    let inter = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
                    if inter <= *s.z.last().unwrap() {
                        s.v.pop();
                        s.z.pop();
                    } else {
                        s.v.push(q);
                        s.z.push(inter);
                        break;
                    }
                }
            }
        }
    }
    if s.v.is_empty() {
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = pos(q);
        while k + 1 < s.v.len() && s.z[k + 1] < x {
            k += 1;
        }
        let p = s.v[k];
        let dx = x - pos(p);
        *o = dx * dx + f[p];
    }
}
