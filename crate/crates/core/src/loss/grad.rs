//! Analytic (sub)gradient of the total loss. Where a hinge argument is
//! exactly zero, or a norm whose direction is needed vanishes, the
//! subgradient 0 is used.

use rayon::prelude::*;

use super::{
    patch_clusters, total_loss, LossBreakdown, LossError, LossInputs, LossWeights, Margins,
    PatchSpec, BCE_EPS,
};
use crate::scalar::{hinge, Scalar};
use crate::volume::{EmbeddingField, OFFSETS_26};

#[derive(Debug, Clone)]
pub struct LossGradient<T> {
    pub breakdown: LossBreakdown<T>,
    /// d total / d embedding.
    pub field: EmbeddingField<T>,
    /// d total / d probability (single channel).
    pub probabilities: EmbeddingField<T>,
}

/// Gradient of `alpha * l_var + beta * l_dist` of one patch, before the
/// `1 / n_patches` average. Returns voxel ids and their gradient rows.
fn patch_gradient<T: Scalar>(
    inputs: &LossInputs<'_, T>,
    patch: &PatchSpec,
    margins: &Margins,
    weights: &LossWeights,
) -> Result<(Vec<usize>, Vec<T>), LossError> {
    let field = inputs.field;
    let n = field.channels();
    let clusters = patch_clusters(field, inputs.labels, patch);
    let c = clusters.len();
    if c == 0 {
        return Err(LossError::NoInstances(0));
    }
    let dv = T::lit(margins.delta_v);
    let two = T::lit(2.0);
    let alpha = T::lit(weights.alpha);
    let beta = T::lit(weights.beta);

    // distance term: d l_dist / d centroid
    let mut dmu = vec![T::zero(); c * n];
    if c >= 2 {
        let two_dd = T::lit(2.0 * margins.delta_d);
        let scale = T::one() / T::lit((c * (c - 1)) as f64);
        for a in 0..c {
            for b in a + 1..c {
                let (ma, mb) = (&clusters[a].centroid, &clusters[b].centroid);
                let dist = T::dist2(ma, mb).sqrt();
                let h = hinge(two_dd - dist);
                if h == T::zero() || dist == T::zero() {
                    continue;
                }
                // both ordered pairs: 2 * (-2 h) * (ma - mb) / dist
                let k = -T::lit(4.0) * h / dist * scale;
                for q in 0..n {
                    let g = k * (ma[q] - mb[q]);
                    dmu[a * n + q] += g;
                    dmu[b * n + q] -= g;
                }
            }
        }
    }

    let total: usize = clusters.iter().map(|cl| cl.voxels.len()).sum();
    let mut ids = Vec::with_capacity(total);
    let mut rows = Vec::with_capacity(total * n);
    let inv_c = T::one() / T::lit(c as f64);
    let mut g = Vec::new();
    for (ci, cl) in clusters.iter().enumerate() {
        let s = cl.voxels.len();
        let inv_s = T::one() / T::lit(s as f64);
        g.clear();
        g.resize(s * n, T::zero());
        let mut mean = vec![T::zero(); n];
        for (k, &i) in cl.voxels.iter().enumerate() {
            let x = field.vector(i);
            let dist = T::dist2(x, &cl.centroid).sqrt();
            let h = hinge(dist - dv);
            if h == T::zero() || dist == T::zero() {
                continue;
            }
            let f = two * h / dist;
            for q in 0..n {
                let v = f * (x[q] - cl.centroid[q]);
                g[k * n + q] = v;
                mean[q] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_s);
        let var_scale = alpha * inv_c * inv_s;
        for (k, &i) in cl.voxels.iter().enumerate() {
            ids.push(i);
            for q in 0..n {
                rows.push(var_scale * (g[k * n + q] - mean[q]) + beta * dmu[ci * n + q] * inv_s);
            }
        }
    }
    Ok((ids, rows))
}

/// Total loss and its gradient with respect to the embeddings and the
/// foreground probabilities.
pub fn grad_total_loss<T: Scalar>(
    inputs: &LossInputs<'_, T>,
    patches: &[PatchSpec],
    margins: &Margins,
    weights: &LossWeights,
) -> Result<LossGradient<T>, LossError> {
    let breakdown = total_loss(inputs, patches, margins, weights)?;
    let field = inputs.field;
    let dims = field.dims;
    let n = field.channels();
    let mut grad = EmbeddingField::zeros(dims, n);

    let per_patch: Vec<(Vec<usize>, Vec<T>)> = patches
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            patch_gradient(inputs, p, margins, weights).map_err(|e| match e {
                LossError::NoInstances(_) => LossError::NoInstances(k),
                e => e,
            })
        })
        .collect::<Result<_, _>>()?;
    if !per_patch.is_empty() {
        let inv_np = T::one() / T::lit(per_patch.len() as f64);
        for (ids, rows) in &per_patch {
            for (k, &i) in ids.iter().enumerate() {
                let dst = grad.vector_mut(i);
                for q in 0..n {
                    dst[q] += rows[k * n + q] * inv_np;
                }
            }
        }
    }

    let domain = inputs.truth;
    let members = domain.indices();
    if !members.is_empty() {
        let two = T::lit(2.0);
        let dv = T::lit(margins.delta_v);
        let gamma = T::lit(weights.gamma);
        let eta = T::lit(weights.eta);
        let inv_n = T::one() / T::lit(members.len() as f64);
        let mut nb = Vec::with_capacity(26);
        let mut step = vec![T::zero(); n];
        for &i in &members {
            nb.clear();
            nb.extend(
                OFFSETS_26
                    .iter()
                    .filter_map(|&(dz, dy, dx)| dims.offset(i, dz, dy, dx))
                    .filter(|&j| domain.bits[j]),
            );
            if !nb.is_empty() && gamma != T::zero() {
                let w = gamma * inv_n / (two * T::lit(nb.len() as f64));
                for &j in &nb {
                    let (xi, xj) = (field.vector(i), field.vector(j));
                    let dist = T::dist2(xj, xi).sqrt();
                    let h = hinge(dist - dv);
                    if h == T::zero() || dist == T::zero() {
                        continue;
                    }
                    let f = w * two * h / dist;
                    for q in 0..n {
                        step[q] = f * (xj[q] - xi[q]);
                    }
                    for q in 0..n {
                        grad.vector_mut(j)[q] += step[q];
                        grad.vector_mut(i)[q] -= step[q];
                    }
                }
            }
            if eta != T::zero() {
                let f = eta * two * inv_n;
                for q in 0..n {
                    let x = field.vector(i)[q];
                    grad.vector_mut(i)[q] += f * x;
                }
            }
        }
    }

    let mut gp = EmbeddingField::zeros(dims, 1);
    let xi = T::lit(weights.xi);
    if xi != T::zero() {
        let lo = T::lit(BCE_EPS);
        let hi = T::one() - lo;
        let inv = xi / T::lit(dims.len() as f64);
        let p = inputs
            .probabilities
            .scalar_values()
            .expect("checked by total_loss");
        for (k, (&pi, &y)) in p.iter().zip(&inputs.truth.bits).enumerate() {
            if pi < lo || pi > hi {
                continue;
            }
            gp.vector_mut(k)[0] = inv
                * if y {
                    -T::one() / pi
                } else {
                    T::one() / (T::one() - pi)
                };
        }
    }

    Ok(LossGradient {
        breakdown,
        field: grad,
        probabilities: gp,
    })
}
