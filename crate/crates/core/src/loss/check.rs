//! Central finite-difference check of [`grad_total_loss`].

use serde::Serialize;

use super::{
    grad_total_loss, patch_clusters, total_loss, LossError, LossInputs, LossWeights, Margins, PatchSpec,
    BCE_EPS,
};
use crate::scalar::Scalar;
use crate::volume::{EmbeddingField, OFFSETS_26};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckParams {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates feeding a hinge (or clamp) whose argument is this close
    /// to its kink are skipped.
    pub kink_tolerance: f64,
    /// Lower bound of the relative-error denominator, so that near-zero
    /// components are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckParams {
    fn default() -> Self {
        GradCheckParams {
            step: 1e-4,
            kink_tolerance: 1e-3,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Voxels (and probability entries) whose coordinates influence a hinge
/// argument or clamp bound within `tol` of its kink.
fn near_kinks(
    inputs: &LossInputs<'_, f64>,
    patches: &[PatchSpec],
    margins: &Margins,
    tol: f64,
) -> (Vec<bool>, Vec<bool>) {
    let field = inputs.field;
    let dims = field.dims;
    let mut emb = vec![false; dims.len()];
    for p in patches {
        let clusters = patch_clusters(field, inputs.labels, p);
        let mut hot = vec![false; clusters.len()];
        for (c, cl) in clusters.iter().enumerate() {
            hot[c] = cl.voxels.iter().any(|&i| {
                let d = f64::dist2(field.vector(i), &cl.centroid).sqrt();
                (d - margins.delta_v).abs() < tol
            });
        }
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = f64::dist2(&clusters[a].centroid, &clusters[b].centroid).sqrt();
                if (2.0 * margins.delta_d - d).abs() < tol {
                    hot[a] = true;
                    hot[b] = true;
                }
            }
        }
        for (c, cl) in clusters.iter().enumerate() {
            if hot[c] {
                for &i in &cl.voxels {
                    emb[i] = true;
                }
            }
        }
    }
    let domain = inputs.truth;
    for i in domain.indices() {
        for &(dz, dy, dx) in &OFFSETS_26 {
            if let Some(j) = dims.offset(i, dz, dy, dx) {
                if domain.bits[j] && (field.distance(i, j) - margins.delta_v).abs() < tol {
                    emb[i] = true;
                    emb[j] = true;
                }
            }
        }
    }
    let probs = inputs
        .probabilities
        .values()
        .iter()
        .map(|&p| (p - BCE_EPS).abs() < tol || (p - (1.0 - BCE_EPS)).abs() < tol)
        .collect();
    (emb, probs)
}

/// Compares the analytic gradient with central differences of the total
/// loss, coordinate by coordinate.
pub fn check_gradient(
    inputs: &LossInputs<'_, f64>,
    patches: &[PatchSpec],
    margins: &Margins,
    weights: &LossWeights,
    params: &GradCheckParams,
) -> Result<GradCheckReport, LossError> {
    let analytic = grad_total_loss(inputs, patches, margins, weights)?;
    let (hot_emb, hot_prob) = near_kinks(inputs, patches, margins, params.kink_tolerance);
    let h = params.step;
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
    };
    let mut record = |a: f64, f: f64| {
        let abs = (a - f).abs();
        let rel = abs / a.abs().max(f.abs()).max(params.floor);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
    };

    let n = inputs.field.channels();
    let mut field: EmbeddingField<f64> = inputs.field.clone();
    let mut skipped = 0;
    for i in 0..field.dims.len() {
        if hot_emb[i] {
            skipped += n;
            continue;
        }
        for q in 0..n {
            let orig = field.vector(i)[q];
            field.vector_mut(i)[q] = orig + h;
            let up = total_loss(&LossInputs { field: &field, ..*inputs }, patches, margins, weights)?.total;
            field.vector_mut(i)[q] = orig - h;
            let down = total_loss(&LossInputs { field: &field, ..*inputs }, patches, margins, weights)?.total;
            field.vector_mut(i)[q] = orig;
            record(analytic.field.vector(i)[q], (up - down) / (2.0 * h));
        }
    }

    let mut probs = inputs.probabilities.clone();
    for i in 0..probs.dims.len() {
        if hot_prob[i] {
            skipped += 1;
            continue;
        }
        let orig = probs.vector(i)[0];
        probs.vector_mut(i)[0] = orig + h;
        let up = total_loss(&LossInputs { probabilities: &probs, ..*inputs }, patches, margins, weights)?.total;
        probs.vector_mut(i)[0] = orig - h;
        let down =
            total_loss(&LossInputs { probabilities: &probs, ..*inputs }, patches, margins, weights)?.total;
        probs.vector_mut(i)[0] = orig;
        record(analytic.probabilities.vector(i)[0], (up - down) / (2.0 * h));
    }
    report.skipped = skipped;
    Ok(report)
}
