use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mesh_io::{read_mesh_frame, write_mesh_frame, MeshFormat};
use super::IoError;
use crate::geometry::{GeometryError, MeshSequence};

/// Frame spacing used when a manifest lists no times: one image stack every
/// four seconds.
pub const DEFAULT_FRAME_INTERVAL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

/// TOML description of a frame sequence:
///
/// ```toml
/// format = "off"
/// unit_scale = 1.0
/// [[frames]]
/// path = "frame_0000.off"
/// time = 0.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    /// Frame file format; inferred from each file's extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<MeshFormat>,
    /// Micrometres per mesh length unit.
    #[serde(default = "one")]
    pub unit_scale: f64,
    /// Spacing for frames without an explicit time.
    #[serde(default = "default_interval")]
    pub frame_interval: f64,
    pub frames: Vec<FrameEntry>,
}

fn one() -> f64 {
    1.0
}

fn default_interval() -> f64 {
    DEFAULT_FRAME_INTERVAL
}

impl SequenceManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        let manifest: Self = toml::from_str(text).map_err(|e| IoError::invalid(path, e.to_string()))?;
        if manifest.frames.is_empty() {
            return Err(IoError::invalid(path, "manifest lists no frames"));
        }
        if !(manifest.unit_scale > 0.0) || !manifest.unit_scale.is_finite() {
            return Err(IoError::invalid(path, format!("unit_scale must be positive, got {}", manifest.unit_scale)));
        }
        if !(manifest.frame_interval > 0.0) || !manifest.frame_interval.is_finite() {
            return Err(IoError::invalid(
                path,
                format!("frame_interval must be positive, got {}", manifest.frame_interval),
            ));
        }
        Ok(manifest)
    }

    /// Time of frame `i`: the listed time, or `i * frame_interval`.
    pub fn frame_time(&self, i: usize) -> f64 {
        self.frames[i].time.unwrap_or(i as f64 * self.frame_interval)
    }
}

/// Reads a manifest and every frame it lists.
pub fn load_sequence(manifest_path: &Path) -> Result<(MeshSequence, SequenceManifest), IoError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| IoError::io(manifest_path, e))?;
    let manifest = SequenceManifest::parse(&text, manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let paths: Vec<PathBuf> = manifest.frames.iter().map(|f| dir.join(&f.path)).collect();
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(IoError::invalid(manifest_path, format!("frame file {} does not exist", missing.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    let mut expected = None;
    for (i, path) in paths.iter().enumerate() {
        let format = manifest.format.unwrap_or_else(|| MeshFormat::from_path(path));
        let mut mesh = read_mesh_frame(path, format)?;
        let count = *expected.get_or_insert(mesh.vertex_count());
        if mesh.vertex_count() != count {
            return Err(IoError::Geometry {
                path: path.clone(),
                source: GeometryError::VertexCountMismatch {
                    frame: i,
                    expected: count,
                    found: mesh.vertex_count(),
                },
            });
        }
        mesh.set_frame_time(manifest.frame_time(i));
        frames.push(mesh);
    }
    let seq = MeshSequence::new(frames).map_err(|source| IoError::Geometry {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    Ok((seq, manifest))
}

/// Writes every frame as `frame_NNNN.<ext>` plus `manifest.toml` into `dir`
/// and returns the manifest path.
pub fn write_sequence(
    dir: &Path,
    seq: &MeshSequence,
    format: MeshFormat,
    unit_scale: f64,
) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut frames = Vec::with_capacity(seq.len());
    for (i, frame) in seq.frames().iter().enumerate() {
        let name = PathBuf::from(format!("frame_{i:04}.{}", format.extension()));
        write_mesh_frame(&dir.join(&name), frame, format)?;
        frames.push(FrameEntry {
            path: name,
            time: Some(frame.frame_time()),
        });
    }
    let manifest = SequenceManifest {
        format: Some(format),
        unit_scale,
        frame_interval: DEFAULT_FRAME_INTERVAL,
        frames,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| IoError::invalid(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(path)
}
