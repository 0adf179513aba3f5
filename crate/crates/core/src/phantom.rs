//! Synthetic volumes of smooth tubes that touch at controlled crossings,
//! with their SWC ground truth, instance labels and oracle embeddings.
//!
//! Each tube centerline is `anchor + t * dir + P(t)`, where `P` is a
//! Catmull-Rom spline through random offsets perpendicular to `dir`,
//! multiplied by a window that vanishes (with zero slope) at every crossing
//! station. Around a crossing both tubes are therefore straight. A crossing
//! tube is anchored at a station of an earlier tube, offset along the
//! common perpendicular so the centerlines pass at `r_a + r_b - 1`: the
//! walls overlap by one micrometer and the mask becomes connected there.
//! Configurations where any other pair of tubes comes closer than
//! `r_a + r_b + 2` are redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::swc::{SwcForest, SwcNode};
use crate::volume::{edge_voxels, rasterize, EmbeddingField, GridDims, LabelVolume, VolumeError, VoxelMask};

/// Smallest accepted extent along every axis.
pub const MIN_EXTENT: usize = 16;
/// Configurations drawn per crossing target before lowering it.
pub const MAX_ATTEMPTS: usize = 300;
/// Sampling step along centerlines, µm.
const STEP: f64 = 0.25;
/// Minimum crossing angle between tube directions.
const MIN_ANGLE_DEG: f64 = 50.0;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("cannot place {instances} instances at separation {separation} in {n} dimensions")]
    TooManyInstances {
        instances: usize,
        n: usize,
        separation: f64,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    /// `[d, h, w]` voxels.
    pub dims: [usize; 3],
    /// `[sz, sy, sx]` µm.
    pub voxel_size: [f64; 3],
    pub n_tubes: usize,
    /// Tube radius range in µm; each tube draws one radius uniformly.
    pub radius_range: [f64; 2],
    /// Largest perpendicular offset of the centerline waypoints, µm.
    pub curvature: f64,
    /// Requested number of crossings (at most `n_tubes - 1`).
    pub crossings: usize,
    /// Standard deviation of the oracle embedding noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [128, 128, 128],
            voxel_size: [1.0; 3],
            n_tubes: 3,
            radius_range: [2.0, 3.0],
            curvature: 6.0,
            crossings: 2,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn grid(&self) -> Result<GridDims, PhantomError> {
        let [d, h, w] = self.dims;
        Ok(GridDims::new(d, h, w, self.voxel_size)?)
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        self.grid()?;
        if self.dims.iter().any(|&e| e < MIN_EXTENT) {
            return bad(format!("dims must be >= {MIN_EXTENT} per axis, got {:?}", self.dims));
        }
        if self.n_tubes < 1 {
            return bad("n_tubes must be >= 1".into());
        }
        let [lo, hi] = self.radius_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("radius range must satisfy 0 < min <= max, got {:?}", self.radius_range));
        }
        if !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return bad(format!("curvature must be finite and >= 0, got {}", self.curvature));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhantomReport {
    pub n_tubes: usize,
    /// Crossings actually built, as (earlier tube, later tube) label pairs.
    pub crossing_pairs: Vec<(u32, u32)>,
    /// Voxels covered by more than one tube.
    pub crossing_voxels: usize,
    pub radii: Vec<f64>,
    /// The requested tubes or crossings could not all be placed.
    pub placement_failure: bool,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub dims: GridDims,
    pub forest: SwcForest,
    pub labels: LabelVolume,
    pub mask: VoxelMask,
    pub report: PhantomReport,
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}
fn unit(a: V3) -> V3 {
    scale(a, 1.0 / norm(a))
}
fn dist(a: V3, b: V3) -> f64 {
    norm(add(a, scale(b, -1.0)))
}

fn random_unit(rng: &mut ChaCha8Rng) -> V3 {
    loop {
        let v: V3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = norm(v);
        if n > 1e-9 {
            return scale(v, 1.0 / n);
        }
    }
}

/// Two unit vectors completing `u` to an orthonormal frame.
fn frame(u: V3) -> (V3, V3) {
    let helper = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = unit(cross(u, helper));
    (e1, cross(u, e1))
}

/// `0` at `x = 0`, `1` for `|x| >= 1`, with zero first and second
/// derivatives at both ends.
fn window(x: f64) -> f64 {
    let x = x.abs().min(1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

#[derive(Debug, Clone)]
struct Tube {
    radius: f64,
    /// Centerline samples with their parameter `t`.
    samples: Vec<(f64, V3)>,
}

struct Bounds {
    max: V3,
}

impl Bounds {
    fn inside(&self, p: V3, pad: f64) -> bool {
        (0..3).all(|k| p[k] >= -pad && p[k] <= self.max[k] + pad)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_tube(
    rng: &mut ChaCha8Rng,
    anchor: V3,
    dir: V3,
    radius: f64,
    stations: Vec<f64>,
    curvature: f64,
    half_len: f64,
    ramp: f64,
) -> Tube {
    let (e1, e2) = frame(dir);
    let spacing = 24.0;
    let n_way = (2.0 * half_len / spacing).ceil() as usize + 4;
    let t0 = -half_len - spacing;
    let way: Vec<[f64; 2]> = (0..n_way)
        .map(|_| {
            [
                rng.random_range(-1.0..=1.0) * curvature,
                rng.random_range(-1.0..=1.0) * curvature,
            ]
        })
        .collect();
    let spline = |t: f64| -> [f64; 2] {
        let s = ((t - t0) / spacing).clamp(1.0, (n_way - 3) as f64 - 1e-9);
        let i = s.floor() as usize;
        let u = s - i as f64;
        let (p0, p1, p2, p3) = (way[i - 1], way[i], way[i + 1], way[i + 2]);
        let mut out = [0.0; 2];
        for k in 0..2 {
            out[k] = 0.5
                * (2.0 * p1[k]
                    + (-p0[k] + p2[k]) * u
                    + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * u * u
                    + (-p0[k] + 3.0 * p1[k] - 3.0 * p2[k] + p3[k]) * u * u * u);
        }
        out
    };
    let n = (2.0 * half_len / STEP).ceil() as usize;
    let samples = (0..=n)
        .map(|k| {
            let t = -half_len + k as f64 * STEP;
            let w: f64 = stations.iter().map(|&s| window((t - s) / ramp)).product();
            let q = spline(t);
            let p = add(add(anchor, scale(dir, t)), add(scale(e1, w * q[0]), scale(e2, w * q[1])));
            (t, p)
        })
        .collect();
    Tube { radius, samples }
}

impl Tube {
    fn at(&self, t: f64) -> V3 {
        let t0 = self.samples[0].0;
        let k = (((t - t0) / STEP).round() as usize).min(self.samples.len() - 1);
        self.samples[k].1
    }

    fn tangent(&self, t: f64) -> V3 {
        unit(add(self.at(t + STEP), scale(self.at(t - STEP), -1.0)))
    }

    /// Samples near or inside the volume.
    fn near(&self, b: &Bounds, pad: f64) -> Vec<(f64, V3)> {
        self.samples.iter().copied().filter(|s| b.inside(s.1, pad)).collect()
    }

    /// The inside portion as one parameter interval, or `None` if the tube
    /// enters the volume more than once or not at all.
    fn inside_run(&self, b: &Bounds) -> Option<(usize, usize)> {
        let mut run: Option<(usize, usize)> = None;
        let mut closed = false;
        for (k, s) in self.samples.iter().enumerate() {
            if b.inside(s.1, 0.0) {
                match run {
                    None => run = Some((k, k)),
                    Some((a, e)) if e + 1 == k && !closed => run = Some((a, k)),
                    Some(_) => return None,
                }
            } else if run.is_some() {
                closed = true;
            }
        }
        run
    }
}

/// Minimum distance between two sampled curves, optionally excluding pairs
/// where either point is within `window` of its crossing parameter.
fn min_distance(a: &[(f64, V3)], b: &[(f64, V3)], exclude: Option<(f64, f64, f64)>) -> f64 {
    let mut best = f64::INFINITY;
    for &(ta, pa) in a {
        if let Some((ca, _, w)) = exclude {
            if (ta - ca).abs() <= w {
                continue;
            }
        }
        for &(tb, pb) in b {
            if let Some((_, cb, w)) = exclude {
                if (tb - cb).abs() <= w {
                    continue;
                }
            }
            let d = dist(pa, pb);
            if d < best {
                best = d;
            }
        }
    }
    best
}

struct Layout {
    tubes: Vec<Tube>,
    /// (parent, child, parent station) for each crossing.
    crossings: Vec<(usize, usize, f64)>,
}

fn try_layout(
    rng: &mut ChaCha8Rng,
    spec: &PhantomSpec,
    bounds: &Bounds,
    n_tubes: usize,
    n_cross: usize,
) -> Option<Layout> {
    let [rlo, rhi] = spec.radius_range;
    let radii: Vec<f64> = (0..n_tubes)
        .map(|_| if rhi > rlo { rng.random_range(rlo..=rhi) } else { rlo })
        .collect();
    let parents: Vec<usize> = (1..=n_cross).map(|k| rng.random_range(0..k)).collect();
    let ramp = (8.0 * rhi).max(16.0);
    let gap = (4.0 * rhi + 4.0).max(12.0);
    let half_len = norm(bounds.max) + 4.0 * rhi + 4.0;
    let diag = bounds.max;

    // stations: t = 0 for the crossing with the parent, then +-gap, +-2 gap
    let mut stations: Vec<Vec<f64>> = vec![Vec::new(); n_tubes];
    for (k, st) in stations.iter_mut().enumerate().take(n_cross + 1) {
        if k > 0 {
            st.push(0.0);
        }
    }
    let mut child_station = vec![0.0; n_tubes];
    for (c, &p) in parents.iter().enumerate() {
        let s = (0..)
            .map(|m: i32| gap * if m % 2 == 1 { (m / 2 + 1) as f64 } else { -(m / 2) as f64 })
            .find(|s| !stations[p].contains(s))
            .expect("unbounded sequence");
        stations[p].push(s);
        child_station[c + 1] = s;
    }

    let cos_max = MIN_ANGLE_DEG.to_radians().cos();
    let mut tubes: Vec<Tube> = Vec::with_capacity(n_tubes);
    for k in 0..n_tubes {
        let r = radii[k];
        let (anchor, dir) = if k >= 1 && k <= n_cross {
            let p = parents[k - 1];
            let s = child_station[k];
            let parent = &tubes[p];
            let c = parent.at(s);
            let margin = r + parent.radius + 2.0;
            if !bounds.inside(c, -margin) {
                return None;
            }
            let tau = parent.tangent(s);
            let dir = loop {
                let d = random_unit(rng);
                if dot(d, tau).abs() <= cos_max {
                    break d;
                }
            };
            let normal = unit(cross(tau, dir));
            (add(c, scale(normal, r + parent.radius - 1.0)), dir)
        } else {
            let anchor = [
                rng.random_range(0.25..=0.75) * diag[0],
                rng.random_range(0.25..=0.75) * diag[1],
                rng.random_range(0.25..=0.75) * diag[2],
            ];
            (anchor, random_unit(rng))
        };
        tubes.push(build_tube(
            rng,
            anchor,
            dir,
            r,
            stations[k].clone(),
            spec.curvature,
            half_len,
            ramp,
        ));
    }

    let min_len = (0.5 * diag.iter().cloned().fold(f64::INFINITY, f64::min)).min(20.0);
    for t in &tubes {
        let (a, e) = t.inside_run(bounds)?;
        if ((e - a) as f64) * STEP < min_len {
            return None;
        }
    }

    let pad = 2.0 * rhi + 2.0;
    let near: Vec<Vec<(f64, V3)>> = tubes.iter().map(|t| t.near(bounds, pad)).collect();
    let crossings: Vec<(usize, usize, f64)> = parents
        .iter()
        .enumerate()
        .map(|(c, &p)| (p, c + 1, child_station[c + 1]))
        .collect();
    for i in 0..n_tubes {
        for j in i + 1..n_tubes {
            let rr = tubes[i].radius + tubes[j].radius;
            match crossings.iter().find(|&&(p, c, _)| p == i && c == j) {
                Some(&(_, _, s)) => {
                    let all = min_distance(&near[i], &near[j], None);
                    let outside = min_distance(&near[i], &near[j], Some((s, 0.0, ramp)));
                    if all < rr - 1.5 || outside < rr + 2.0 {
                        return None;
                    }
                }
                None => {
                    if min_distance(&near[i], &near[j], None) < rr + 2.0 {
                        return None;
                    }
                }
            }
        }
    }
    Some(Layout { tubes, crossings })
}

/// SWC of the inside portion of every tube, nodes about 1 µm apart.
fn tubes_to_forest(tubes: &[Tube], bounds: &Bounds) -> SwcForest {
    let mut nodes = Vec::new();
    let mut next = 1u64;
    for t in tubes {
        let (a, e) = t.inside_run(bounds).expect("layout checked contiguity");
        let mut last: Option<(u64, V3)> = None;
        for k in a..=e {
            let p = t.samples[k].1;
            let take = match last {
                None => true,
                Some((_, q)) => dist(p, q) >= 1.0 || k == e,
            };
            if take {
                nodes.push(SwcNode::new(next, p, t.radius, last.map(|l| l.0)));
                last = Some((next, p));
                next += 1;
            }
        }
    }
    SwcForest::new(nodes).expect("sequential ids form a valid forest")
}

fn tube_voxels(forest: &SwcForest, dims: &GridDims, ids: &[u64]) -> Vec<usize> {
    let mut out = Vec::new();
    for &id in ids {
        let n = forest.get(id).expect("component ids come from the forest");
        if let Some(p) = n.parent {
            edge_voxels(dims, forest.get(p).expect("validated parent"), n, &mut out);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn overlaps(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Generates a phantom. Identical specs give identical outputs. When the
/// requested crossings (or tubes) cannot be placed, fewer are built and
/// `placement_failure` is set.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let dims = spec.grid()?;
    let bounds = Bounds {
        max: [
            (dims.w - 1) as f64 * dims.voxel_size[2],
            (dims.h - 1) as f64 * dims.voxel_size[1],
            (dims.d - 1) as f64 * dims.voxel_size[0],
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut n_tubes = spec.n_tubes;
    let mut n_cross = spec.crossings.min(n_tubes - 1);
    let mut failure = n_cross < spec.crossings;
    let mut attempts = 0;
    loop {
        for _ in 0..MAX_ATTEMPTS {
            attempts += 1;
            let Some(layout) = try_layout(&mut rng, spec, &bounds, n_tubes, n_cross) else {
                continue;
            };
            let forest = tubes_to_forest(&layout.tubes, &bounds);
            let groups = crate::swc::forest_components(&forest);
            let vox: Vec<Vec<usize>> = groups.iter().map(|g| tube_voxels(&forest, &dims, g)).collect();
            if layout
                .crossings
                .iter()
                .any(|&(p, c, _)| !overlaps(&vox[p], &vox[c]))
            {
                continue;
            }
            let (labels, raster) = rasterize(&forest, &dims, true);
            let mask = labels.foreground();
            let report = PhantomReport {
                n_tubes,
                crossing_pairs: layout
                    .crossings
                    .iter()
                    .map(|&(p, c, _)| (p as u32 + 1, c as u32 + 1))
                    .collect(),
                crossing_voxels: raster.overlap_voxels.len(),
                radii: layout.tubes.iter().map(|t| t.radius).collect(),
                placement_failure: failure,
                attempts,
            };
            return Ok(Phantom {
                dims,
                forest,
                labels,
                mask,
                report,
            });
        }
        failure = true;
        if n_cross > 0 {
            n_cross -= 1;
        } else if n_tubes > 1 {
            n_tubes -= 1;
        } else {
            return Err(PhantomError::InvalidSpec(
                "a single tube could not be placed in this volume".into(),
            ));
        }
    }
}

/// Embedding field where every voxel of instance `k` holds a fixed vector
/// plus Gaussian noise of standard deviation `noise_sigma` per component;
/// background voxels hold noise around zero. Instance vectors sit on
/// distinct coordinate axes at distance `separation` from each other
/// (a shuffled axis per instance with a random sign; once the axes run
/// out, the opposite sign of an axis is reused).
pub fn oracle_embedding<T: Scalar>(
    labels: &LabelVolume,
    n: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<EmbeddingField<T>, PhantomError> {
    if n < 2 {
        return Err(PhantomError::InvalidSpec(format!("embedding dimension must be >= 2, got {n}")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(PhantomError::InvalidSpec(format!("separation must be > 0, got {separation}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(PhantomError::InvalidSpec(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let k = labels.max_label() as usize;
    if k > 2 * n {
        return Err(PhantomError::TooManyInstances {
            instances: k,
            n,
            separation,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        axes.swap(i, j);
    }
    let a = separation / std::f64::consts::SQRT_2;
    let signs: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut centers = vec![vec![0.0; n]; k + 1];
    for inst in 0..k {
        let slot = inst % n;
        let sign = if inst < n { signs[slot] } else { -signs[slot] };
        centers[inst + 1][axes[slot]] = sign * a;
    }
    let dims = labels.dims;
    let mut field = EmbeddingField::<T>::zeros(dims, n);
    let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
    for (i, &l) in labels.labels.iter().enumerate() {
        let c = &centers[l as usize];
        let v = field.vector_mut(i);
        for q in 0..n {
            let e = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            v[q] = T::lit(c[q] + e);
        }
    }
    Ok(field)
}
