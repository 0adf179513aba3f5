//! Dense 3D grids (masks, labels, embedding fields), their file format, SWC
//! rasterization and the distance transform.

mod edt;
mod grid;
mod io;
mod raster;

use std::path::Path;

use thiserror::Error;

pub use edt::{edt, squared_edt};
pub use grid::{neighbors26, EmbeddingField, GridDims, LabelVolume, VoxelMask, FORWARD_13, OFFSETS_26};
pub use io::{read_sidecar, read_volume, write_volume, Sidecar, Volume};
pub use raster::{edge_voxels, rasterize, sphere_voxels, RasterReport, SWEEP_STEP};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid grid: {0}")]
    InvalidDims(String),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("expected a {expected} volume, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0}")]
    Json(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl VolumeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        VolumeError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Errors with `ShapeMismatch` unless both grids have the same extents.
pub fn check_same_shape(a: &GridDims, b: &GridDims, what: &str) -> Result<(), VolumeError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(VolumeError::ShapeMismatch(format!(
            "{what}: {}x{}x{} vs {}x{}x{}",
            a.d, a.h, a.w, b.d, b.h, b.w
        )))
    }
}
