//! Flag groups shared between subcommands. Every flag is optional and,
//! when present, overrides the configuration file.

use clap::Args;
use neurite_recon::conn_eval::Matching;

use crate::config::RunConfig;

fn triple<T: Copy>(v: &[T]) -> [T; 3] {
    match v {
        [a] => [*a; 3],
        [a, b, c] => [*a, *b, *c],
        _ => unreachable!("clap enforces 1 or 3 values"),
    }
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    /// Grid extents `D` or `D,H,W` in voxels.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub dims: Option<Vec<usize>>,
    /// Voxel size `S` or `SZ,SY,SX` in micrometers.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub voxel_size: Option<Vec<f64>>,
    #[arg(long)]
    pub tubes: Option<usize>,
    #[arg(long)]
    pub crossings: Option<usize>,
    /// Embedding noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, visible_alias = "phantom-seed")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius_min: Option<f64>,
    #[arg(long)]
    pub radius_max: Option<f64>,
    /// Largest centerline waypoint offset in micrometers.
    #[arg(long)]
    pub curvature: Option<f64>,
}

impl PhantomArgs {
    pub fn apply(&self, c: &mut RunConfig) -> Result<(), crate::Invalid> {
        let p = &mut c.phantom;
        if let Some(d) = &self.dims {
            if d.len() == 2 {
                return Err(crate::Invalid("--dims takes 1 or 3 values".into()));
            }
            p.dims = triple(d);
        }
        if let Some(v) = &self.voxel_size {
            if v.len() == 2 {
                return Err(crate::Invalid("--voxel-size takes 1 or 3 values".into()));
            }
            p.voxel_size = triple(v);
        }
        set(&mut p.n_tubes, self.tubes);
        set(&mut p.crossings, self.crossings);
        set(&mut p.noise_sigma, self.noise);
        set(&mut p.seed, self.seed);
        set(&mut p.radius_range[0], self.radius_min);
        set(&mut p.radius_range[1], self.radius_max);
        set(&mut p.curvature, self.curvature);
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmbeddingArgs {
    /// Embedding dimension of the oracle field.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Distance between instance embeddings.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub embedding_seed: Option<u64>,
}

impl EmbeddingArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.embedding.dim, self.embedding_dim);
        set(&mut c.embedding.separation, self.separation);
        if self.embedding_seed.is_some() {
            c.embedding.seed = self.embedding_seed;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReconArgs {
    /// Embedding-distance threshold (`inf` disables the gate).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub jump_radius: Option<usize>,
    /// Drop skeleton components with fewer voxels (0 keeps all).
    #[arg(long)]
    pub min_size: Option<usize>,
}

impl ReconArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.recon.epsilon, self.epsilon);
        set(&mut c.recon.jump_radius, self.jump_radius);
        set(&mut c.recon.min_component_voxels, self.min_size);
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Terminal pairing cutoff in micrometers.
    #[arg(long)]
    pub dmax: Option<f64>,
    /// Distance to the box faces under which nodes count as terminals.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, value_enum)]
    pub matching: Option<MatchingArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MatchingArg {
    Greedy,
    Optimal,
}

impl EvalArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.eval.d_max, self.dmax);
        set(&mut c.eval.margin, self.margin);
        if let Some(m) = self.matching {
            c.eval.matching = match m {
                MatchingArg::Greedy => Matching::Greedy,
                MatchingArg::Optimal => Matching::Optimal,
            };
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub delta_v: Option<f64>,
    #[arg(long)]
    pub delta_d: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
}

impl LossArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.margins.delta_v, self.delta_v);
        set(&mut c.margins.delta_d, self.delta_d);
        set(&mut c.weights.alpha, self.alpha);
        set(&mut c.weights.beta, self.beta);
        set(&mut c.weights.gamma, self.gamma);
        set(&mut c.weights.eta, self.eta);
        set(&mut c.weights.xi, self.xi);
    }
}

#[derive(Debug, Clone, Args)]
pub struct PatchArgs {
    /// Overlap patch size `P` or `PD,PH,PW`.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub patch_size: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub stride: Option<Vec<usize>>,
}

impl PatchArgs {
    pub fn apply(&self, c: &mut RunConfig) -> Result<(), crate::Invalid> {
        for (v, dst, name) in [
            (&self.patch_size, &mut c.patch.size, "--patch-size"),
            (&self.stride, &mut c.patch.stride, "--stride"),
        ] {
            if let Some(v) = v {
                if v.len() == 2 {
                    return Err(crate::Invalid(format!("{name} takes 1 or 3 values")));
                }
                *dst = triple(v);
            }
        }
        Ok(())
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}
