//! Volume files: a JSON sidecar describing the grid plus a raw little-endian
//! payload next to it.
//!
//! ```json
//! {"schema":"vol1","dtype":"f32","dims":[d,h,w],"channels":n,
//!  "voxel_size":[sz,sy,sx],"order":"c_zyx","data":"field.raw"}
//! ```
//!
//! Payload order is C order with z slowest; multi-channel fields are
//! channel-major (channel slowest).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EmbeddingField, GridDims, LabelVolume, VolumeError, VoxelMask};

pub const SCHEMA: &str = "vol1";
pub const ORDER: &str = "c_zyx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    pub dtype: String,
    pub dims: [usize; 3],
    pub channels: usize,
    pub voxel_size: [f64; 3],
    pub order: String,
    /// Payload path, relative to the sidecar's directory.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

impl Sidecar {
    pub fn grid(&self) -> Result<GridDims, VolumeError> {
        GridDims::new(self.dims[0], self.dims[1], self.dims[2], self.voxel_size)
    }

    fn element_size(&self) -> Result<usize, VolumeError> {
        match self.dtype.as_str() {
            "u8" => Ok(1),
            "u32" | "f32" => Ok(4),
            other => Err(VolumeError::UnsupportedDtype(other.to_string())),
        }
    }
}

/// Any of the three stored volume kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Mask(VoxelMask),
    Labels(LabelVolume),
    Field(EmbeddingField<f32>),
}

impl Volume {
    pub fn dims(&self) -> &GridDims {
        match self {
            Volume::Mask(m) => &m.dims,
            Volume::Labels(l) => &l.dims,
            Volume::Field(f) => &f.dims,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Volume::Mask(_) => "mask",
            Volume::Labels(_) => "labels",
            Volume::Field(_) => "field",
        }
    }

    fn dtype_channels(&self) -> (&'static str, usize) {
        match self {
            Volume::Mask(_) => ("u8", 1),
            Volume::Labels(_) => ("u32", 1),
            Volume::Field(f) => ("f32", f.channels()),
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Volume::Mask(m) => m.bits.iter().map(|&b| b as u8).collect(),
            Volume::Labels(l) => l.labels.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Volume::Field(f) => f
                .to_channel_major()
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect(),
        }
    }

    /// Reads a mask, accepting a label volume (nonzero = foreground).
    pub fn into_mask(self) -> Result<VoxelMask, VolumeError> {
        match self {
            Volume::Mask(m) => Ok(m),
            Volume::Labels(l) => Ok(l.foreground()),
            other => Err(VolumeError::WrongKind {
                expected: "mask",
                found: other.kind(),
            }),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume, VolumeError> {
        match self {
            Volume::Labels(l) => Ok(l),
            Volume::Mask(m) => Ok(LabelVolume {
                dims: m.dims,
                labels: m.bits.iter().map(|&b| b as u32).collect(),
            }),
            other => Err(VolumeError::WrongKind {
                expected: "labels",
                found: other.kind(),
            }),
        }
    }

    pub fn into_field(self) -> Result<EmbeddingField<f32>, VolumeError> {
        match self {
            Volume::Field(f) => Ok(f),
            other => Err(VolumeError::WrongKind {
                expected: "field",
                found: other.kind(),
            }),
        }
    }
}

impl From<VoxelMask> for Volume {
    fn from(m: VoxelMask) -> Self {
        Volume::Mask(m)
    }
}

impl From<LabelVolume> for Volume {
    fn from(l: LabelVolume) -> Self {
        Volume::Labels(l)
    }
}

impl From<EmbeddingField<f32>> for Volume {
    fn from(f: EmbeddingField<f32>) -> Self {
        Volume::Field(f)
    }
}

fn payload_path(sidecar_path: &Path, data: &str) -> PathBuf {
    let dir = sidecar_path.parent().unwrap_or_else(|| Path::new(""));
    dir.join(data)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, VolumeError> {
    let text = fs::read(path).map_err(|e| VolumeError::io(path, e))?;
    let sc: Sidecar = serde_json::from_slice(&text)
        .map_err(|e| VolumeError::Json(format!("{}: {e}", path.display())))?;
    if sc.schema != SCHEMA {
        return Err(VolumeError::HeaderMismatch(format!(
            "unknown schema {:?}",
            sc.schema
        )));
    }
    if sc.order != ORDER {
        return Err(VolumeError::HeaderMismatch(format!(
            "unsupported order {:?}",
            sc.order
        )));
    }
    Ok(sc)
}

/// Reads a volume through its JSON sidecar.
pub fn read_volume(path: &Path) -> Result<Volume, VolumeError> {
    let sc = read_sidecar(path)?;
    let esize = sc.element_size()?;
    let dims = sc.grid()?;
    if sc.channels == 0 {
        return Err(VolumeError::HeaderMismatch("channels must be >= 1".into()));
    }
    if sc.dtype != "f32" && sc.channels != 1 {
        return Err(VolumeError::HeaderMismatch(format!(
            "dtype {} requires channels = 1, found {}",
            sc.dtype, sc.channels
        )));
    }
    let ppath = payload_path(path, &sc.data);
    let bytes = fs::read(&ppath).map_err(|e| VolumeError::io(&ppath, e))?;
    let expected = dims.len() * sc.channels * esize;
    if bytes.len() < expected {
        return Err(VolumeError::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(VolumeError::HeaderMismatch(format!(
            "payload has {} bytes, header promises {expected}",
            bytes.len()
        )));
    }
    Ok(match sc.dtype.as_str() {
        "u8" => Volume::Mask(VoxelMask::new(dims, bytes.iter().map(|&b| b != 0).collect())?),
        "u32" => Volume::Labels(LabelVolume::new(
            dims,
            bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )?),
        _ => {
            let vals: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Volume::Field(EmbeddingField::from_channel_major(dims, sc.channels, &vals)?)
        }
    })
}

/// Writes `path` (the sidecar) and a payload named after it with a `.raw`
/// extension in the same directory.
pub fn write_volume(
    volume: &Volume,
    path: &Path,
    provenance: Option<Value>,
) -> Result<(), VolumeError> {
    let dims = volume.dims();
    let (dtype, channels) = volume.dtype_channels();
    let data_name = path
        .with_extension("raw")
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| VolumeError::Json(format!("bad output path {}", path.display())))?;
    let sc = Sidecar {
        schema: SCHEMA.into(),
        dtype: dtype.into(),
        dims: [dims.d, dims.h, dims.w],
        channels,
        voxel_size: dims.voxel_size,
        order: ORDER.into(),
        data: data_name.clone(),
        provenance,
    };
    let ppath = payload_path(path, &data_name);
    fs::write(&ppath, volume.payload()).map_err(|e| VolumeError::io(&ppath, e))?;
    let mut json = serde_json::to_string_pretty(&sc).map_err(|e| VolumeError::Json(e.to_string()))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| VolumeError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dims = GridDims::isotropic(4, 4, 4);
        let m = VoxelMask::from_indices(dims, [0, 5, 17, 63]);
        let p = dir.path().join("m.json");
        write_volume(&m.clone().into(), &p, None).unwrap();
        assert_eq!(read_volume(&p).unwrap(), Volume::Mask(m));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let dims = GridDims::isotropic(2, 2, 2);
        let p = dir.path().join("l.json");
        write_volume(&LabelVolume::zeros(dims).into(), &p, None).unwrap();
        let raw = dir.path().join("l.raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            read_volume(&p),
            Err(VolumeError::TruncatedPayload { expected: 32, found: 31 })
        ));
        fs::write(&raw, [bytes.clone(), vec![0]].concat()).unwrap();
        assert!(matches!(read_volume(&p), Err(VolumeError::HeaderMismatch(_))));
    }

    #[test]
    fn unsupported_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_volume(
            &VoxelMask::zeros(GridDims::isotropic(1, 1, 1)).into(),
            &p,
            None,
        )
        .unwrap();
        let text = fs::read_to_string(&p).unwrap().replace("\"u8\"", "\"f64\"");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_volume(&p), Err(VolumeError::UnsupportedDtype(d)) if d == "f64"));
    }
}
