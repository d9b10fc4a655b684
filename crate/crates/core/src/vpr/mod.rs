//! Visual place recognition: image descriptors, the anchor database of
//! pre-rendered map views, and exact top-M retrieval by cosine distance.

mod descriptor;

pub use descriptor::{encode, Descriptor, DIM};

use crate::geometry::{exp_map, GeometryError, Pose, Twist};
use crate::image::{CameraIntrinsics, ImageError};
use crate::scene::{ArtifactSpec, Renderer, SceneError, SceneModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"NLVPRDB1";

#[derive(Debug, Error)]
pub enum VprError {
    #[error("invalid anchor grid: {0}")]
    BadGrid(String),
    #[error("anchor {index} at {position:?} lies outside the room")]
    AnchorOutsideRoom { index: usize, position: [f64; 3] },
    #[error("anchor database is empty")]
    EmptyDatabase,
    #[error("retrieval needs m >= 1")]
    ZeroM,
    #[error("descriptor dimension {got} does not match database dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed database file: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform sampling of planar position and yaw.
///
/// Positions form an `x_count` by `y_count` lattice over the ranges, visited
/// row by row (x fastest) and optionally truncated to `position_limit`
/// points. Yaws are `-π + 2π (k + ½) / yaw_count`, which never hits the
/// branch cut at ±π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_count: usize,
    pub y_count: usize,
    pub yaw_count: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Camera height of every anchor (m).
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub position_limit: Option<usize>,
}

fn default_height() -> f64 {
    0.9
}

impl GridSpec {
    /// 7 x 6 positions x 12 yaws = 504 anchors.
    pub fn anchors_504() -> Self {
        Self {
            x_count: 7,
            y_count: 6,
            yaw_count: 12,
            x_range: [-1.8, 1.8],
            y_range: [-1.3, 1.3],
            height: default_height(),
            position_limit: None,
        }
    }

    /// 12 x 12 lattice cut to 139 positions, x 18 yaws = 2502 anchors.
    pub fn anchors_2502() -> Self {
        Self {
            x_count: 12,
            y_count: 12,
            yaw_count: 18,
            x_range: [-1.8, 1.8],
            y_range: [-1.3, 1.3],
            height: default_height(),
            position_limit: Some(139),
        }
    }

    pub fn position_count(&self) -> usize {
        let n = self.x_count * self.y_count;
        self.position_limit.map_or(n, |l| l.min(n))
    }

    /// Number of anchors the grid produces.
    pub fn cardinality(&self) -> usize {
        self.position_count() * self.yaw_count
    }

    /// Lattice spacing along x and y (0 for a single sample).
    pub fn spacing(&self) -> (f64, f64) {
        let step = |r: [f64; 2], n: usize| {
            if n > 1 {
                (r[1] - r[0]) / (n - 1) as f64
            } else {
                0.0
            }
        };
        (
            step(self.x_range, self.x_count),
            step(self.y_range, self.y_count),
        )
    }

    pub fn validate(&self) -> Result<(), VprError> {
        if self.x_count == 0 || self.y_count == 0 || self.yaw_count == 0 {
            return Err(VprError::BadGrid("counts must be at least 1".into()));
        }
        if self.position_limit == Some(0) {
            return Err(VprError::BadGrid(
                "position limit must be at least 1".into(),
            ));
        }
        for r in [self.x_range, self.y_range] {
            if !(r[0] <= r[1]) || !r.iter().all(|v| v.is_finite()) {
                return Err(VprError::BadGrid(format!("bad range {r:?}")));
            }
        }
        if !self.height.is_finite() {
            return Err(VprError::BadGrid("non-finite height".into()));
        }
        Ok(())
    }

    /// Twists `[x, y, height, ω, 0, 0]` in database order (yaw fastest).
    pub fn twists(&self) -> Result<Vec<Twist>, VprError> {
        self.validate()?;
        let lerp = |r: [f64; 2], n: usize, i: usize| {
            if n > 1 {
                r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
            } else {
                r[0]
            }
        };
        let mut out = Vec::with_capacity(self.cardinality());
        for p in 0..self.position_count() {
            let (ix, iy) = (p % self.x_count, p / self.x_count);
            let x = lerp(self.x_range, self.x_count, ix);
            let y = lerp(self.y_range, self.y_count, iy);
            for k in 0..self.yaw_count {
                let yaw = -PI + 2.0 * PI * (k as f64 + 0.5) / self.yaw_count as f64;
                out.push(Twist::from_array([x, y, self.height, yaw, 0.0, 0.0])?);
            }
        }
        Ok(out)
    }

    /// Anchor poses through the exponential map.
    pub fn poses(&self) -> Result<Vec<Pose>, VprError> {
        Ok(self.twists()?.iter().map(exp_map).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub descriptor: Descriptor,
    pub pose: Pose,
}

/// Database header, stored as JSON in the binary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseInfo {
    pub dim: usize,
    pub count: usize,
    pub grid: GridSpec,
    pub intrinsics: CameraIntrinsics,
    pub artifacts: Option<ArtifactSpec>,
    pub scene_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDatabase {
    info: DatabaseInfo,
    entries: Vec<Anchor>,
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub index: usize,
    pub pose: Pose,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub hits: Vec<RetrievalHit>,
    /// Set when more results were requested than the database holds.
    pub truncated: bool,
}

/// Renders and encodes one anchor per grid sample.
pub fn build_anchor_db(
    scene: &SceneModel,
    grid: &GridSpec,
    k: &CameraIntrinsics,
    artifacts: Option<&ArtifactSpec>,
) -> Result<AnchorDatabase, VprError> {
    k.validate()?;
    scene.validate()?;
    let poses = grid.poses()?;
    for (index, p) in poses.iter().enumerate() {
        if !scene.contains(&p.translation) {
            return Err(VprError::AnchorOutsideRoom {
                index,
                position: p.translation.into(),
            });
        }
    }
    let renderer = Renderer::new(scene, artifacts);
    let entries = poses
        .par_iter()
        .map(|pose| {
            let img = renderer.render(pose, k);
            Ok(Anchor {
                descriptor: encode(&img)?,
                pose: *pose,
            })
        })
        .collect::<Result<Vec<_>, VprError>>()?;
    Ok(AnchorDatabase {
        info: DatabaseInfo {
            dim: DIM,
            count: entries.len(),
            grid: grid.clone(),
            intrinsics: *k,
            artifacts: artifacts.cloned(),
            scene_seed: scene.seed,
        },
        entries,
    })
}

impl AnchorDatabase {
    pub fn info(&self) -> &DatabaseInfo {
        &self.info
    }

    pub fn entries(&self) -> &[Anchor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Render intrinsics of the stored views.
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.info.intrinsics
    }

    /// The `m` nearest anchors by cosine distance, ascending, ties broken
    /// by database index.
    pub fn retrieve_top_m(&self, query: &Descriptor, m: usize) -> Result<Retrieval, VprError> {
        if m == 0 {
            return Err(VprError::ZeroM);
        }
        if self.entries.is_empty() {
            return Err(VprError::EmptyDatabase);
        }
        if query.dim() != self.info.dim {
            return Err(VprError::DimensionMismatch {
                expected: self.info.dim,
                got: query.dim(),
            });
        }
        let mut ranked: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, a)| (query.cosine_distance(&a.descriptor), i))
            .collect();
        let keep = m.min(ranked.len());
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if keep < ranked.len() {
            ranked.select_nth_unstable_by(keep - 1, order);
            ranked.truncate(keep);
        }
        ranked.sort_unstable_by(order);
        Ok(Retrieval {
            hits: ranked
                .into_iter()
                .map(|(distance, index)| RetrievalHit {
                    index,
                    pose: self.entries[index].pose,
                    distance,
                })
                .collect(),
            truncated: m > self.entries.len(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.info).expect("header serializes");
        let mut out = Vec::with_capacity(
            16 + header.len() + self.entries.len() * (1 + 8 * (self.info.dim + 12)),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for a in &self.entries {
            out.push(a.descriptor.is_null() as u8);
            for v in a.descriptor.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in a.pose.to_row_major() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VprError> {
        let bad = |m: &str| VprError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        let header = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
        let info: DatabaseInfo =
            serde_json::from_slice(header).map_err(|e| VprError::Format(e.to_string()))?;
        let rec = 1 + 8 * (info.dim + 12);
        let rest = &body[hlen..];
        if rest.len() != info.count * rec {
            return Err(bad("entry block size does not match header"));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
        let entries = rest
            .chunks_exact(rec)
            .map(|r| {
                let null = match r[0] {
                    0 => false,
                    1 => true,
                    _ => return Err(bad("bad null flag")),
                };
                let v: Vec<f64> = r[1..1 + 8 * info.dim].chunks_exact(8).map(f).collect();
                let mut pose = [0.0; 12];
                for (p, c) in pose.iter_mut().zip(r[1 + 8 * info.dim..].chunks_exact(8)) {
                    *p = f(c);
                }
                Ok(Anchor {
                    descriptor: Descriptor::from_parts(v, null),
                    pose: Pose::from_row_major(&pose),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { info, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), VprError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VprError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
