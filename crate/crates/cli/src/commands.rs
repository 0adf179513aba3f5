use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use neurite_recon::conn_eval::{aggregate, evaluate_connectivity, seg_metrics, ConnectivityReport};
use neurite_recon::loss::{
    check_gradient, find_overlap_patches, grad_total_loss, total_loss, GradCheckParams, GradCheckReport,
    LossInputs,
};
use neurite_recon::phantom::{gen_phantom, oracle_embedding};
use neurite_recon::postprocess::reconstruct;
use neurite_recon::swc::{parse_swc, Aabb, SwcForest};
use neurite_recon::volume::{
    rasterize, read_sidecar, read_volume, EmbeddingField, GridDims, LabelVolume, Volume, VoxelMask,
};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{ensure_dir, report_value, write_forest, write_report, write_vol, Provenance};
use crate::{Cli, Command, Invalid};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Invalid("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker threads")?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Phantom { phantom, embedding, out } => {
            phantom.apply(&mut cfg)?;
            embedding.apply(&mut cfg);
            cmd_phantom(&cfg.resolve()?, &out)
        }
        Command::Rasterize {
            swc,
            like,
            dims,
            voxel_size,
            per_component,
            out,
            report,
        } => {
            let cfg = cfg.resolve()?;
            let grid = match like {
                Some(p) => {
                    let sc = read_sidecar(&p)?;
                    GridDims::new(sc.dims[0], sc.dims[1], sc.dims[2], sc.voxel_size)?
                }
                None => {
                    let d = three(dims.as_deref().expect("required by clap"), "--dims")?;
                    let v = match voxel_size {
                        Some(v) => three(&v, "--voxel-size")?,
                        None => [1.0; 3],
                    };
                    GridDims::new(d[0], d[1], d[2], v).map_err(|e| Invalid(e.to_string()))?
                }
            };
            cmd_rasterize(&cfg, &swc, grid, per_component, &out, report.as_deref())
        }
        Command::Loss {
            field,
            labels,
            probs,
            mask,
            loss,
            patch,
            out,
            grad_out,
            prob_grad_out,
        } => {
            loss.apply(&mut cfg);
            patch.apply(&mut cfg)?;
            let cfg = cfg.resolve()?;
            let files = LossFiles {
                field,
                labels,
                probs,
                mask,
            };
            cmd_loss(&cfg, &files, out.as_deref(), grad_out.as_deref(), prob_grad_out.as_deref())
        }
        Command::GradCheck {
            instances,
            seed,
            size,
            embedding_dim,
            max_instances,
            patch,
            stride,
            step,
            tolerance,
            loss,
            out,
        } => {
            loss.apply(&mut cfg);
            let cfg = cfg.resolve()?;
            if size < 2 || patch == 0 || patch > size || stride == 0 || embedding_dim == 0 || max_instances < 1 {
                bail!(Invalid(
                    "grad-check needs size >= 2, 1 <= patch <= size, stride >= 1, embedding-dim >= 1, max-instances >= 1"
                        .into()
                ));
            }
            let opts = GradCheckOpts {
                instances,
                seed,
                size,
                embedding_dim,
                max_instances,
                patch,
                stride,
                step,
                tolerance,
            };
            cmd_grad_check(&cfg, &opts, out.as_deref())
        }
        Command::Reconstruct {
            mask,
            field,
            recon,
            out,
            report,
            segments_out,
        } => {
            recon.apply(&mut cfg);
            let cfg = cfg.resolve()?;
            cmd_reconstruct(&cfg, &mask, &field, &out, report.as_deref(), segments_out.as_deref())
        }
        Command::EvalConnectivity {
            gt,
            pred,
            gt_dir,
            pred_dir,
            volume,
            eval,
            out,
        } => {
            eval.apply(&mut cfg);
            let cfg = cfg.resolve()?;
            match (gt, pred, gt_dir, pred_dir) {
                (Some(g), Some(p), None, None) => cmd_eval_one(&cfg, &g, &p, volume.as_deref(), out.as_deref()),
                (None, None, Some(gd), Some(pd)) => cmd_eval_batch(&cfg, &gd, &pd, volume.as_deref(), out.as_deref()),
                _ => bail!(Invalid("give either --gt and --pred or --gt-dir and --pred-dir".into())),
            }
        }
        Command::EvalSeg { pred, gt, out } => cmd_eval_seg(&cfg.resolve()?, &pred, &gt, out.as_deref()),
        Command::Pipeline {
            phantom,
            embedding,
            recon,
            eval,
            write_volumes,
            out,
        } => {
            phantom.apply(&mut cfg)?;
            embedding.apply(&mut cfg);
            recon.apply(&mut cfg);
            eval.apply(&mut cfg);
            cmd_pipeline(&cfg.resolve()?, write_volumes, &out)
        }
    }
}

fn three<T: Copy>(v: &[T], flag: &str) -> anyhow::Result<[T; 3]> {
    match v {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!(Invalid(format!("{flag} takes 1 or 3 values"))),
    }
}

fn read_swc_file(path: &Path) -> anyhow::Result<SwcForest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_swc(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> anyhow::Result<Volume> {
    read_volume(path).with_context(|| format!("reading {}", path.display()))
}

fn load_mask(path: &Path) -> anyhow::Result<VoxelMask> {
    load(path)?
        .into_mask()
        .with_context(|| format!("{} as a mask", path.display()))
}

fn load_labels(path: &Path) -> anyhow::Result<LabelVolume> {
    load(path)?
        .into_labels()
        .with_context(|| format!("{} as labels", path.display()))
}

fn load_field(path: &Path) -> anyhow::Result<EmbeddingField<f32>> {
    load(path)?
        .into_field()
        .with_context(|| format!("{} as a field", path.display()))
}

/// Fails with a validation error naming both files unless the grids agree.
fn same_grid(a: &GridDims, pa: &Path, b: &GridDims, pb: &Path) -> anyhow::Result<()> {
    if a.same_shape(b) {
        return Ok(());
    }
    bail!(Invalid(format!(
        "shape mismatch: {} is {}x{}x{} but {} is {}x{}x{}",
        pa.display(),
        a.d,
        a.h,
        a.w,
        pb.display(),
        b.d,
        b.h,
        b.w
    )))
}

fn cmd_phantom(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let dir = ensure_dir(out)?;
    let prov = Provenance::new("phantom", cfg);
    let ph = gen_phantom(&cfg.phantom)?;
    let field = oracle_embedding::<f32>(
        &ph.labels,
        cfg.embedding.dim,
        cfg.embedding.separation,
        cfg.phantom.noise_sigma,
        cfg.embedding_seed(),
    )?;
    write_forest(&ph.forest, &prov, &dir.join("gt.swc"))?;
    write_vol(Volume::Labels(ph.labels), &prov, &dir.join("labels.json"))?;
    write_vol(Volume::Mask(ph.mask), &prov, &dir.join("mask.json"))?;
    write_vol(Volume::Field(field), &prov, &dir.join("field.json"))?;
    let echo = json!({ "spec": cfg.phantom, "embedding": cfg.embedding, "report": ph.report });
    write_report(&echo, &prov, Some(&dir.join("spec.json")))
}

fn cmd_rasterize(
    cfg: &RunConfig,
    swc: &Path,
    grid: GridDims,
    per_component: bool,
    out: &Path,
    report: Option<&Path>,
) -> anyhow::Result<()> {
    let mut prov = Provenance::new("rasterize", cfg);
    prov.input(swc)?;
    let forest = read_swc_file(swc)?;
    let (labels, rep) = rasterize(&forest, &grid, per_component);
    write_vol(Volume::Labels(labels), &prov, out)?;
    if let Some(r) = report {
        write_report(&rep, &prov, Some(r))?;
    }
    Ok(())
}

struct LossFiles {
    field: PathBuf,
    labels: PathBuf,
    probs: PathBuf,
    mask: PathBuf,
}

fn cmd_loss(
    cfg: &RunConfig,
    files: &LossFiles,
    out: Option<&Path>,
    grad_out: Option<&Path>,
    prob_grad_out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut prov = Provenance::new("loss", cfg);
    for p in [&files.field, &files.labels, &files.probs, &files.mask] {
        prov.input(p)?;
    }
    let field = load_field(&files.field)?.cast::<f64>();
    let labels = load_labels(&files.labels)?;
    let probs = load_field(&files.probs)?.cast::<f64>();
    let mask = load_mask(&files.mask)?;
    same_grid(&field.dims, &files.field, &labels.dims, &files.labels)?;
    same_grid(&field.dims, &files.field, &probs.dims, &files.probs)?;
    same_grid(&field.dims, &files.field, &mask.dims, &files.mask)?;
    if probs.channels() != 1 {
        bail!(Invalid(format!(
            "{} must have 1 channel, found {}",
            files.probs.display(),
            probs.channels()
        )));
    }
    let inputs = LossInputs {
        field: &field,
        labels: &labels,
        probabilities: &probs,
        truth: &mask,
    };
    let patches = find_overlap_patches(&labels, cfg.patch.size, cfg.patch.stride)
        .map_err(|e| Invalid(format!("patches: {e}")))?;
    if grad_out.is_none() && prob_grad_out.is_none() {
        let b = total_loss(&inputs, &patches, &cfg.margins, &cfg.weights)?;
        return write_report(&b, &prov, out);
    }
    let g = grad_total_loss(&inputs, &patches, &cfg.margins, &cfg.weights)?;
    if let Some(p) = grad_out {
        write_vol(Volume::Field(g.field.cast::<f32>()), &prov, p)?;
    }
    if let Some(p) = prob_grad_out {
        write_vol(Volume::Field(g.probabilities.cast::<f32>()), &prov, p)?;
    }
    write_report(&g.breakdown, &prov, out)
}

struct GradCheckOpts {
    instances: usize,
    seed: u64,
    size: usize,
    embedding_dim: usize,
    max_instances: u32,
    patch: usize,
    stride: usize,
    step: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct GradCheckSummary {
    passed: bool,
    tolerance: f64,
    max_rel_error: f64,
    max_abs_error: f64,
    checked: usize,
    skipped: usize,
    instances: Vec<GradCheckReport>,
}

fn cmd_grad_check(cfg: &RunConfig, o: &GradCheckOpts, out: Option<&Path>) -> anyhow::Result<()> {
    let prov = Provenance::new("grad-check", cfg);
    let params = GradCheckParams {
        step: o.step,
        ..Default::default()
    };
    let reports = (0..o.instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(o.seed.wrapping_add(k as u64));
            let dims = GridDims::isotropic(o.size, o.size, o.size);
            let len = dims.len();
            let top = rng.random_range(1..=o.max_instances);
            let labels = LabelVolume::new(dims, (0..len).map(|_| rng.random_range(0..=top)).collect())?;
            let n = o.embedding_dim;
            let field = EmbeddingField::from_voxel_major(
                dims,
                n,
                (0..len * n).map(|_| rng.random_range(-1.5..1.5)).collect(),
            )?;
            // Away from 0 and 1 so the difference quotient of log(p) stays accurate.
            let probs =
                EmbeddingField::from_voxel_major(dims, 1, (0..len).map(|_| rng.random_range(0.2..0.8)).collect())?;
            let truth = labels.foreground();
            let inputs = LossInputs {
                field: &field,
                labels: &labels,
                probabilities: &probs,
                truth: &truth,
            };
            let patches = find_overlap_patches(&labels, [o.patch; 3], [o.stride; 3])?;
            Ok(check_gradient(&inputs, &patches, &cfg.margins, &cfg.weights, &params)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let max_rel = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let summary = GradCheckSummary {
        passed: max_rel <= o.tolerance,
        tolerance: o.tolerance,
        max_rel_error: max_rel,
        max_abs_error: reports.iter().map(|r| r.max_abs_error).fold(0.0, f64::max),
        checked: reports.iter().map(|r| r.checked).sum(),
        skipped: reports.iter().map(|r| r.skipped).sum(),
        instances: reports,
    };
    write_report(&summary, &prov, out)?;
    if !summary.passed {
        bail!("gradient check failed: max relative error {max_rel:e} > {:e}", o.tolerance);
    }
    Ok(())
}

fn cmd_reconstruct(
    cfg: &RunConfig,
    mask_path: &Path,
    field_path: &Path,
    out: &Path,
    report: Option<&Path>,
    segments_out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut prov = Provenance::new("reconstruct", cfg);
    prov.input(mask_path)?;
    prov.input(field_path)?;
    let mask = load_mask(mask_path)?;
    let field = load_field(field_path)?;
    same_grid(&mask.dims, mask_path, &field.dims, field_path)?;
    let rec = reconstruct(&mask, &field, &cfg.recon)?;
    write_forest(&rec.forest, &prov, out)?;
    if let Some(p) = segments_out {
        write_vol(Volume::Labels(rec.segments), &prov, p)?;
    }
    if let Some(p) = report {
        write_report(&rec.report, &prov, Some(p))?;
    }
    Ok(())
}

fn eval_box(volume: Option<&Path>) -> anyhow::Result<Option<Aabb>> {
    volume
        .map(|p| {
            let sc = read_sidecar(p)?;
            Ok(GridDims::new(sc.dims[0], sc.dims[1], sc.dims[2], sc.voxel_size)?.bbox_um())
        })
        .transpose()
}

fn evaluate_files(cfg: &RunConfig, gt: &Path, pred: &Path, bbox: Option<Aabb>) -> anyhow::Result<ConnectivityReport> {
    let g = read_swc_file(gt)?;
    let p = read_swc_file(pred)?;
    evaluate_connectivity(&g, &p, bbox, &cfg.eval)
        .with_context(|| format!("evaluating {} against {}", pred.display(), gt.display()))
}

fn cmd_eval_one(cfg: &RunConfig, gt: &Path, pred: &Path, volume: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let mut prov = Provenance::new("eval-connectivity", cfg);
    prov.input(gt)?;
    prov.input(pred)?;
    if let Some(v) = volume {
        prov.input(v)?;
    }
    let report = evaluate_files(cfg, gt, pred, eval_box(volume)?)?;
    if report.empty_pairing {
        eprintln!("warning: no terminals could be paired");
    }
    write_report(&report, &prov, out)
}

#[derive(Serialize)]
struct BatchEntry {
    name: String,
    report: ConnectivityReport,
}

fn cmd_eval_batch(
    cfg: &RunConfig,
    gt_dir: &Path,
    pred_dir: &Path,
    volume: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut prov = Provenance::new("eval-connectivity", cfg);
    let mut names: Vec<String> = std::fs::read_dir(gt_dir)
        .with_context(|| format!("listing {}", gt_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".swc"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!(Invalid(format!("no .swc files in {}", gt_dir.display())));
    }
    for n in &names {
        let p = pred_dir.join(n);
        if !p.exists() {
            bail!(Invalid(format!("{} has no counterpart {}", gt_dir.join(n).display(), p.display())));
        }
        prov.input(&gt_dir.join(n))?;
        prov.input(&p)?;
    }
    if let Some(v) = volume {
        prov.input(v)?;
    }
    let bbox = eval_box(volume)?;
    let entries = names
        .par_iter()
        .map(|n| {
            Ok(BatchEntry {
                name: n.clone(),
                report: evaluate_files(cfg, &gt_dir.join(n), &pred_dir.join(n), bbox)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reports: Vec<ConnectivityReport> = entries.iter().map(|e| e.report.clone()).collect();
    let body = json!({ "aggregate": aggregate(&reports), "blocks": entries });
    write_report(&body, &prov, out)
}

fn cmd_eval_seg(cfg: &RunConfig, pred: &Path, gt: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let mut prov = Provenance::new("eval-seg", cfg);
    prov.input(pred)?;
    prov.input(gt)?;
    let p = load_mask(pred)?;
    let g = load_mask(gt)?;
    same_grid(&p.dims, pred, &g.dims, gt)?;
    write_report(&seg_metrics(&p, &g)?, &prov, out)
}

fn cmd_pipeline(cfg: &RunConfig, write_volumes: bool, out: &Path) -> anyhow::Result<()> {
    let dir = ensure_dir(out)?;
    let prov = Provenance::new("pipeline", cfg);
    let ph = gen_phantom(&cfg.phantom)?;
    let field = oracle_embedding::<f32>(
        &ph.labels,
        cfg.embedding.dim,
        cfg.embedding.separation,
        cfg.phantom.noise_sigma,
        cfg.embedding_seed(),
    )?;
    let rec = reconstruct(&ph.mask, &field, &cfg.recon)?;
    let conn = evaluate_connectivity(&ph.forest, &rec.forest, Some(ph.dims.bbox_um()), &cfg.eval)?;
    write_forest(&ph.forest, &prov, &dir.join("gt.swc"))?;
    write_forest(&rec.forest, &prov, &dir.join("pred.swc"))?;
    if write_volumes {
        write_vol(Volume::Labels(ph.labels), &prov, &dir.join("labels.json"))?;
        write_vol(Volume::Mask(ph.mask), &prov, &dir.join("mask.json"))?;
        write_vol(Volume::Field(field), &prov, &dir.join("field.json"))?;
        write_vol(Volume::Labels(rec.segments), &prov, &dir.join("segments.json"))?;
    }
    let body = json!({
        "phantom": ph.report,
        "reconstruction": rec.report,
        "connectivity": conn,
    });
    let mut text = serde_json::to_string_pretty(&report_value(&body, &prov))?;
    text.push('\n');
    let path = dir.join("report.json");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
