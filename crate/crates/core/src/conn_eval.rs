//! Connectivity errors between a reference and a reconstructed SWC forest,
//! measured on matched terminals, plus voxel segmentation metrics.
//!
//! Terminals of both forests are paired one-to-one within `d_max`. A
//! reference tree whose matched terminals land in `p` predicted trees
//! contributes `p - 1` disconnections (type I); a predicted tree whose
//! matched terminals come from `r` reference trees contributes `r - 1`
//! false merges (type II). A reference tree counts as correct when its
//! matched terminals all land in one predicted tree that matches no other
//! reference tree.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::swc::{component_of, forest_components, terminals, Aabb, SwcError, SwcForest};
use crate::volume::{check_same_shape, VolumeError, VoxelMask};

#[derive(Debug, Error)]
pub enum ConnEvalError {
    #[error(transparent)]
    Swc(#[from] SwcError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node {0} is not in the forest")]
    UnknownNode(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalPair {
    pub gt: u64,
    pub pred: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalPairing {
    pub pairs: Vec<TerminalPair>,
    pub unmatched_gt: Vec<u64>,
    pub unmatched_pred: Vec<u64>,
    pub d_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// All candidate pairs sorted by distance, accepted while both ends are free.
    #[default]
    Greedy,
    /// Maximum number of pairs, then minimum total distance. Cubic cost.
    Optimal,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn finish(
    gt: &[(u64, [f64; 3])],
    pred: &[(u64, [f64; 3])],
    mut pairs: Vec<TerminalPair>,
    d_max: f64,
) -> TerminalPairing {
    pairs.sort_by(|a, b| a.gt.cmp(&b.gt).then(a.pred.cmp(&b.pred)));
    let used_g: BTreeSet<u64> = pairs.iter().map(|p| p.gt).collect();
    let used_p: BTreeSet<u64> = pairs.iter().map(|p| p.pred).collect();
    let mut unmatched_gt: Vec<u64> = gt.iter().map(|g| g.0).filter(|id| !used_g.contains(id)).collect();
    let mut unmatched_pred: Vec<u64> =
        pred.iter().map(|p| p.0).filter(|id| !used_p.contains(id)).collect();
    unmatched_gt.sort_unstable();
    unmatched_pred.sort_unstable();
    TerminalPairing {
        pairs,
        unmatched_gt,
        unmatched_pred,
        d_max,
    }
}

/// Greedy one-to-one pairing of terminal points (`(id, [x, y, z] µm)`).
/// Candidates with distance ≤ `d_max` are taken in ascending distance,
/// ties by (gt id, pred id). Pairs are returned sorted by (gt id, pred id).
pub fn pair_terminals(
    gt: &[(u64, [f64; 3])],
    pred: &[(u64, [f64; 3])],
    d_max: f64,
) -> TerminalPairing {
    let mut cand = Vec::new();
    for &(g, pg) in gt {
        for &(p, pp) in pred {
            let d = dist(pg, pp);
            if d <= d_max {
                cand.push(TerminalPair { gt: g, pred: p, distance: d });
            }
        }
    }
    cand.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.gt.cmp(&b.gt))
            .then(a.pred.cmp(&b.pred))
    });
    let mut used_g = BTreeSet::new();
    let mut used_p = BTreeSet::new();
    let pairs = cand
        .into_iter()
        .filter(|c| {
            if used_g.contains(&c.gt) || used_p.contains(&c.pred) {
                return false;
            }
            used_g.insert(c.gt);
            used_p.insert(c.pred);
            true
        })
        .collect();
    finish(gt, pred, pairs, d_max)
}

/// Optimal pairing: the largest number of pairs within `d_max`, and among
/// those the smallest total distance.
pub fn pair_terminals_optimal(
    gt: &[(u64, [f64; 3])],
    pred: &[(u64, [f64; 3])],
    d_max: f64,
) -> TerminalPairing {
    let n = gt.len().max(pred.len());
    if gt.is_empty() || pred.is_empty() {
        return finish(gt, pred, Vec::new(), d_max);
    }
    // Any admissible pair costs at most d_max, so a forbidden entry costing
    // more than all admissible pairs together forces maximum cardinality.
    let forbidden = d_max * (n as f64 + 1.0) + 1.0;
    let mut cost = vec![forbidden; n * n];
    for (i, &(_, pg)) in gt.iter().enumerate() {
        for (j, &(_, pp)) in pred.iter().enumerate() {
            let d = dist(pg, pp);
            if d <= d_max {
                cost[i * n + j] = d;
            }
        }
    }
    let assign = hungarian(&cost, n);
    let pairs = assign
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < gt.len() && j < pred.len() && cost[i * n + j] < forbidden)
        .map(|(i, &j)| TerminalPair {
            gt: gt[i].0,
            pred: pred[j].0,
            distance: cost[i * n + j],
        })
        .collect();
    finish(gt, pred, pairs, d_max)
}

/// Minimum-cost perfect assignment on an `n x n` row-major matrix.
/// Returns the column assigned to each row.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row[p[j] - 1] = j - 1;
        }
    }
    row
}

/// How the matched terminals of one tree spread over the other forest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSpan {
    /// Index in [`forest_components`] order.
    pub component: usize,
    pub root_id: u64,
    pub matched_terminals: usize,
    /// Components of the other forest reached by the matched terminals.
    pub spans: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub correct: usize,
    pub type1: usize,
    pub type2: usize,
    /// `type1 / correct`, absent when `correct` is 0.
    pub ratio1: Option<f64>,
    /// `type2 / correct`, absent when `correct` is 0.
    pub ratio2: Option<f64>,
    pub gt_components: usize,
    pub pred_components: usize,
    pub matched_pairs: usize,
    pub unmatched_gt: usize,
    pub unmatched_pred: usize,
    /// No terminal could be paired; every count is zero.
    pub empty_pairing: bool,
    pub gt_detail: Vec<ComponentSpan>,
    pub pred_detail: Vec<ComponentSpan>,
}

/// Counts disconnections and false merges given a terminal pairing.
pub fn classify_connectivity(
    gt: &SwcForest,
    pred: &SwcForest,
    pairing: &TerminalPairing,
) -> Result<ConnectivityReport, ConnEvalError> {
    let gt_groups = forest_components(gt);
    let pred_groups = forest_components(pred);
    let gt_comp = component_of(gt);
    let pred_comp = component_of(pred);
    let mut g_spans: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); gt_groups.len()];
    let mut p_spans: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); pred_groups.len()];
    let mut g_matched = vec![0usize; gt_groups.len()];
    let mut p_matched = vec![0usize; pred_groups.len()];
    for pair in &pairing.pairs {
        let g = *gt_comp.get(&pair.gt).ok_or(ConnEvalError::UnknownNode(pair.gt))?;
        let p = *pred_comp.get(&pair.pred).ok_or(ConnEvalError::UnknownNode(pair.pred))?;
        g_spans[g].insert(p);
        p_spans[p].insert(g);
        g_matched[g] += 1;
        p_matched[p] += 1;
    }

    let type1 = g_spans.iter().map(|s| s.len().saturating_sub(1)).sum();
    let type2 = p_spans.iter().map(|s| s.len().saturating_sub(1)).sum();
    let correct = g_spans
        .iter()
        .filter(|s| s.len() == 1 && p_spans[*s.iter().next().unwrap()].len() == 1)
        .count();
    let ratio = |t: usize| (correct > 0).then(|| t as f64 / correct as f64);
    let detail = |groups: &[Vec<u64>], forest: &SwcForest, spans: &[BTreeSet<usize>], matched: &[usize]| {
        groups
            .iter()
            .enumerate()
            .map(|(c, g)| ComponentSpan {
                component: c,
                root_id: g
                    .iter()
                    .copied()
                    .find(|&id| forest.get(id).is_some_and(|n| n.parent.is_none()))
                    .unwrap_or(g[0]),
                matched_terminals: matched[c],
                spans: spans[c].iter().copied().collect(),
            })
            .collect::<Vec<_>>()
    };
    Ok(ConnectivityReport {
        correct,
        type1,
        type2,
        ratio1: ratio(type1),
        ratio2: ratio(type2),
        gt_components: gt_groups.len(),
        pred_components: pred_groups.len(),
        matched_pairs: pairing.pairs.len(),
        unmatched_gt: pairing.unmatched_gt.len(),
        unmatched_pred: pairing.unmatched_pred.len(),
        empty_pairing: pairing.pairs.is_empty(),
        gt_detail: detail(&gt_groups, gt, &g_spans, &g_matched),
        pred_detail: detail(&pred_groups, pred, &p_spans, &p_matched),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// Pairing cutoff in µm.
    pub d_max: f64,
    /// Nodes this close to a face of the evaluation box are terminals (µm).
    pub margin: f64,
    pub matching: Matching,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            d_max: 5.0,
            margin: 2.0,
            matching: Matching::Greedy,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), ConnEvalError> {
        if !(self.d_max >= 0.0 && self.d_max.is_finite()) {
            return Err(ConnEvalError::InvalidParameter(format!(
                "d_max must be finite and >= 0, got {}",
                self.d_max
            )));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(ConnEvalError::InvalidParameter(format!(
                "margin must be finite and >= 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

fn terminal_points(
    forest: &SwcForest,
    bbox: &Aabb,
    margin: f64,
) -> Result<Vec<(u64, [f64; 3])>, ConnEvalError> {
    Ok(terminals(forest, bbox, margin)?
        .into_iter()
        .map(|id| (id, forest.get(id).expect("terminal ids come from the forest").pos()))
        .collect())
}

/// Terminal extraction, pairing and classification in one call. `bbox`
/// defaults to the box enclosing both forests, padded along flat axes.
pub fn evaluate_connectivity(
    gt: &SwcForest,
    pred: &SwcForest,
    bbox: Option<Aabb>,
    params: &EvalParams,
) -> Result<ConnectivityReport, ConnEvalError> {
    params.validate()?;
    let bbox = match bbox.or_else(|| Aabb::enclosing([gt, pred]).map(pad_flat_axes)) {
        Some(b) => b,
        None => return classify_connectivity(gt, pred, &pair_terminals(&[], &[], params.d_max)),
    };
    let gt_t = terminal_points(gt, &bbox, params.margin)?;
    let pred_t = terminal_points(pred, &bbox, params.margin)?;
    let pairing = match params.matching {
        Matching::Greedy => pair_terminals(&gt_t, &pred_t, params.d_max),
        Matching::Optimal => pair_terminals_optimal(&gt_t, &pred_t, params.d_max),
    };
    classify_connectivity(gt, pred, &pairing)
}

/// Widens zero-extent axes by 1 µm on each side so flat forests can be
/// evaluated against their own box.
fn pad_flat_axes(mut b: Aabb) -> Aabb {
    for k in 0..3 {
        if b.max[k] <= b.min[k] {
            b.min[k] -= 1.0;
            b.max[k] += 1.0;
        }
    }
    b
}

/// Summary over many blocks. Means are per block; ratios are mean error
/// count over mean correct count, absent when nothing was correct.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub blocks: usize,
    pub mean_correct: f64,
    pub mean_type1: f64,
    pub mean_type2: f64,
    pub ratio1: Option<f64>,
    pub ratio2: Option<f64>,
    pub total_correct: usize,
    pub total_type1: usize,
    pub total_type2: usize,
    pub empty_pairings: usize,
}

pub fn aggregate(reports: &[ConnectivityReport]) -> AggregateReport {
    let total_correct: usize = reports.iter().map(|r| r.correct).sum();
    let total_type1: usize = reports.iter().map(|r| r.type1).sum();
    let total_type2: usize = reports.iter().map(|r| r.type2).sum();
    let n = reports.len();
    let mean = |t: usize| if n == 0 { 0.0 } else { t as f64 / n as f64 };
    let ratio = |t: usize| (total_correct > 0).then(|| t as f64 / total_correct as f64);
    AggregateReport {
        blocks: n,
        mean_correct: mean(total_correct),
        mean_type1: mean(total_type1),
        mean_type2: mean(total_type2),
        ratio1: ratio(total_type1),
        ratio2: ratio(total_type2),
        total_correct,
        total_type1,
        total_type2,
        empty_pairings: reports.iter().filter(|r| r.empty_pairing).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub dice: f64,
    pub iou: f64,
}

impl Confusion {
    pub fn of(pred: &VoxelMask, truth: &VoxelMask) -> Result<Self, VolumeError> {
        check_same_shape(&pred.dims, &truth.dims, "prediction vs truth")?;
        let mut c = Confusion { tp: 0, fp: 0, fn_: 0, tn: 0 };
        for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// Metrics from the counts. When both masks are empty every overlap
    /// score is 1; when exactly one is empty they are 0.
    pub fn metrics(&self) -> SegMetrics {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let total = tp + fp + fn_ + tn;
        let accuracy = if total > 0.0 { (tp + tn) / total } else { 1.0 };
        let pred_empty = self.tp + self.fp == 0;
        let truth_empty = self.tp + self.fn_ == 0;
        if pred_empty || truth_empty {
            let v = if pred_empty && truth_empty { 1.0 } else { 0.0 };
            return SegMetrics {
                accuracy,
                precision: v,
                recall: v,
                f1: v,
                dice: v,
                iou: v,
            };
        }
        let dice = 2.0 * tp / (2.0 * tp + fp + fn_);
        SegMetrics {
            accuracy,
            precision: tp / (tp + fp),
            recall: tp / (tp + fn_),
            f1: dice,
            dice,
            iou: tp / (tp + fp + fn_),
        }
    }
}

pub fn seg_metrics(pred: &VoxelMask, truth: &VoxelMask) -> Result<SegMetrics, VolumeError> {
    Ok(Confusion::of(pred, truth)?.metrics())
}

/// Node positions of the given ids, for building pairings by hand.
pub fn positions(forest: &SwcForest, ids: &[u64]) -> Result<Vec<(u64, [f64; 3])>, ConnEvalError> {
    let by_id: HashMap<u64, [f64; 3]> = forest.nodes().iter().map(|n| (n.id, n.pos())).collect();
    ids.iter()
        .map(|&id| by_id.get(&id).map(|&p| (id, p)).ok_or(ConnEvalError::UnknownNode(id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swc::SwcNode;
    use crate::volume::GridDims;

    fn path(first: u64, from: [f64; 3], step: [f64; 3], n: u64) -> Vec<SwcNode> {
        (0..n)
            .map(|k| {
                let t = k as f64;
                SwcNode::new(
                    first + k,
                    [from[0] + t * step[0], from[1] + t * step[1], from[2] + t * step[2]],
                    1.0,
                    (k > 0).then(|| first + k - 1),
                )
            })
            .collect()
    }

    #[test]
    fn pairing_examples() {
        let g = vec![(1, [0.0, 0.0, 0.0])];
        let p = vec![(10, [0.0, 0.0, 0.4]), (11, [5.0, 5.0, 5.0])];
        let r = pair_terminals(&g, &p, 1.0);
        assert_eq!(r.pairs.len(), 1);
        assert_eq!((r.pairs[0].gt, r.pairs[0].pred), (1, 10));
        assert!((r.pairs[0].distance - 0.4).abs() < 1e-15);
        assert_eq!(r.unmatched_pred, vec![11]);
        assert!(r.unmatched_gt.is_empty());

        let r = pair_terminals(&g, &[], 1.0);
        assert_eq!(r.unmatched_gt, vec![1]);

        let same = vec![(1, [0.0, 1.0, 2.0]), (2, [3.0, 4.0, 5.0])];
        let r = pair_terminals(&same, &same, 0.5);
        assert!(r.pairs.iter().all(|p| p.gt == p.pred && p.distance == 0.0));
        assert_eq!(r.pairs.len(), 2);
    }

    #[test]
    fn optimal_beats_greedy_on_cardinality() {
        // greedy takes the 0.9 pair and strands both others
        let g = vec![(1, [0.0, 0.0, 0.0]), (2, [1.8, 0.0, 0.0])];
        let p = vec![(10, [0.9, 0.0, 0.0]), (11, [-0.95, 0.0, 0.0])];
        let greedy = pair_terminals(&g, &p, 1.0);
        let opt = pair_terminals_optimal(&g, &p, 1.0);
        assert_eq!(greedy.pairs.len(), 1);
        assert_eq!(opt.pairs.len(), 2);
        // with one pair possible the cheaper one wins
        let p2 = vec![(10, [0.85, 0.0, 0.0])];
        assert_eq!(pair_terminals_optimal(&g, &p2, 1.0).pairs[0].gt, 1);
        let g3 = vec![(1, [0.0, 0.0, 0.0]), (2, [2.0, 0.0, 0.0])];
        let p3 = vec![(10, [1.0, 0.0, 0.0]), (11, [-1.0, 0.0, 0.0])];
        // greedy: tie at 1.0 broken by gt id -> (1,10), then 2 and 11 are 3 apart
        assert_eq!(pair_terminals(&g3, &p3, 1.0).pairs.len(), 1);
        assert_eq!(pair_terminals_optimal(&g3, &p3, 1.0).pairs.len(), 2);
    }

    fn eval(gt: &SwcForest, pred: &SwcForest) -> ConnectivityReport {
        evaluate_connectivity(gt, pred, Some(Aabb::new([-1.0; 3], [20.0; 3])), &EvalParams::default())
            .unwrap()
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let mut nodes = path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 10);
        nodes.extend(path(20, [5.0, 15.0, 5.0], [0.0, 0.0, 1.0], 8));
        let f = SwcForest::new(nodes).unwrap();
        let r = eval(&f, &f);
        assert_eq!((r.correct, r.type1, r.type2), (2, 0, 0));
        assert_eq!(r.ratio1, Some(0.0));
    }

    #[test]
    fn cut_path_is_one_disconnection() {
        let gt = SwcForest::new(path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 13)).unwrap();
        let mut cut = path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 6);
        cut.extend(path(7, [9.0, 5.0, 5.0], [1.0, 0.0, 0.0], 6));
        let pred = SwcForest::new(cut).unwrap();
        let r = eval(&gt, &pred);
        assert_eq!((r.type1, r.type2, r.correct), (1, 0, 0));
    }

    #[test]
    fn merged_paths_are_one_false_merge() {
        let mut nodes = path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 10);
        nodes.extend(path(20, [2.0, 12.0, 5.0], [1.0, 0.0, 0.0], 10));
        let gt = SwcForest::new(nodes).unwrap();
        // same geometry, second path attached to the middle of the first
        let mut merged = path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 10);
        let mut second = path(20, [2.0, 12.0, 5.0], [1.0, 0.0, 0.0], 10);
        second[0].parent = Some(5);
        merged.extend(second);
        let pred = SwcForest::new(merged).unwrap();
        let r = eval(&gt, &pred);
        assert_eq!((r.type1, r.type2, r.correct), (0, 1, 0));
    }

    #[test]
    fn empty_pairing_is_flagged() {
        let f = SwcForest::new(path(1, [2.0, 5.0, 5.0], [1.0, 0.0, 0.0], 5)).unwrap();
        let r = eval(&f, &SwcForest::empty());
        assert!(r.empty_pairing);
        assert_eq!((r.correct, r.type1, r.type2), (0, 0, 0));
        assert_eq!(r.ratio1, None);
    }

    #[test]
    fn seg_metric_examples() {
        let dims = GridDims::isotropic(1, 1, 2);
        let t = VoxelMask::new(dims, vec![true, true]).unwrap();
        let p = VoxelMask::new(dims, vec![true, false]).unwrap();
        let m = seg_metrics(&p, &t).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 0.5);
        assert!((m.dice - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.iou, 0.5);
        let m = seg_metrics(&t, &t).unwrap();
        assert_eq!([m.accuracy, m.precision, m.recall, m.f1, m.dice, m.iou], [1.0; 6]);
        let empty = VoxelMask::zeros(dims);
        let m = seg_metrics(&empty, &p).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!([m.precision, m.recall, m.f1, m.dice, m.iou], [0.0; 5]);
        let m = seg_metrics(&empty, &empty).unwrap();
        assert_eq!([m.accuracy, m.precision, m.recall, m.f1, m.dice, m.iou], [1.0; 6]);
    }

    #[test]
    fn aggregate_is_ratio_of_totals() {
        let mk = |c, t1, t2| ConnectivityReport {
            correct: c,
            type1: t1,
            type2: t2,
            ratio1: None,
            ratio2: None,
            gt_components: c,
            pred_components: c,
            matched_pairs: 1,
            unmatched_gt: 0,
            unmatched_pred: 0,
            empty_pairing: false,
            gt_detail: vec![],
            pred_detail: vec![],
        };
        let a = aggregate(&[mk(3, 1, 0), mk(1, 0, 2)]);
        assert_eq!(a.mean_correct, 2.0);
        assert_eq!(a.ratio1, Some(0.25));
        assert_eq!(a.ratio2, Some(0.5));
        assert_eq!(aggregate(&[mk(0, 1, 1)]).ratio1, None);
    }
}
