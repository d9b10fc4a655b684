//! Synthetic renderable room standing in for a radiance field.
//!
//! The room is the box `[-x/2, x/2] × [-y/2, y/2] × [0, z]` built from the
//! configured extents. Rendering casts one ray per pixel, shades the nearest
//! hit from its procedural texture with ambient plus inverse-distance
//! attenuation, and optionally composites semi-transparent floater blobs
//! that exist only on the map side.

mod artifacts;
mod texture;

pub use artifacts::{ArtifactSpec, Blob};
pub use texture::{Pattern, Texture};

use crate::geometry::Pose;
use crate::image::{CameraIntrinsics, Image, ImageError};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const EPS: f64 = 1e-9;

/// Renders at or above this many pixels split rows across threads.
const PARALLEL_PIXELS: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("prop {0} is not strictly inside the room")]
    PropOutsideRoom(usize),
    #[error("room extents must be positive, got {0:?}")]
    BadExtents([f64; 3]),
    #[error("invalid artifact spec: {0}")]
    BadArtifacts(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("scene config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Room faces in texture order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Floor = 0,
    Ceiling = 1,
    WallNegX = 2,
    WallPosX = 3,
    WallNegY = 4,
    WallPosY = 5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Prop {
    Box {
        min: [f64; 3],
        max: [f64; 3],
        texture: Texture,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        texture: Texture,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shading {
    pub ambient: f64,
    pub falloff: f64,
}

impl Default for Shading {
    fn default() -> Self {
        Self {
            ambient: 0.35,
            falloff: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    /// Room size along x, y, z in meters.
    pub extents: [f64; 3],
    /// Floor, ceiling, -x, +x, -y, +y.
    pub walls: [Texture; 6],
    #[serde(default)]
    pub props: Vec<Prop>,
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default)]
    pub shading: Shading,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SceneModel {
    fn default() -> Self {
        Self::default_room(7)
    }
}

impl SceneModel {
    /// The 5 m × 4 m × 1.8 m reference room. `seed` perturbs texture phases
    /// and colors slightly; layout is fixed.
    pub fn default_room(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jit = |c: [f64; 3]| -> [f64; 3] {
            let mut o = c;
            for v in &mut o {
                *v = (*v + rng.gen_range(-0.04..0.04)).clamp(0.02, 0.95);
            }
            o
        };
        let floor = Texture {
            base: jit([0.42, 0.36, 0.30]),
            tint: [0.10, 0.06, 0.0],
            tint_period: 9.0,
            phase: 0.3,
            pattern: Pattern::Checker {
                period: [0.7, 0.7],
                contrast: 0.22,
            },
        };
        let ceiling = Texture {
            base: jit([0.78, 0.78, 0.74]),
            tint: [0.0, 0.0, 0.08],
            tint_period: 10.0,
            phase: 1.0,
            pattern: Pattern::Stripes {
                period: 1.0,
                angle: 0.0,
                contrast: 0.08,
            },
        };
        let wall_nx = Texture {
            base: jit([0.18, 0.30, 0.62]),
            tint: [0.30, 0.10, -0.10],
            tint_period: 8.0,
            phase: 0.0,
            pattern: Pattern::Stripes {
                period: 0.55,
                angle: 0.0,
                contrast: 0.28,
            },
        };
        let wall_px = Texture {
            base: jit([0.70, 0.30, 0.20]),
            tint: [-0.20, 0.25, 0.10],
            tint_period: 8.0,
            phase: 2.0,
            pattern: Pattern::Checker {
                period: [0.6, 0.45],
                contrast: 0.25,
            },
        };
        let wall_ny = Texture {
            base: jit([0.25, 0.55, 0.30]),
            tint: [0.25, -0.10, 0.25],
            tint_period: 10.0,
            phase: 4.0,
            pattern: Pattern::Stripes {
                period: 0.7,
                angle: 0.8,
                contrast: 0.3,
            },
        };
        let wall_py = Texture {
            base: jit([0.80, 0.72, 0.28]),
            tint: [-0.30, -0.30, 0.35],
            tint_period: 10.0,
            phase: 5.0,
            pattern: Pattern::Dots {
                period: 0.5,
                radius: 0.14,
                contrast: 0.55,
            },
        };
        let props = vec![
            Prop::Box {
                min: [-2.45, -1.95, 0.0],
                max: [-1.95, -1.0, 1.25],
                texture: Texture {
                    base: [0.55, 0.45, 0.70],
                    tint: [0.0; 3],
                    tint_period: 8.0,
                    phase: 0.0,
                    pattern: Pattern::Stripes {
                        period: 0.3,
                        angle: std::f64::consts::FRAC_PI_2,
                        contrast: 0.3,
                    },
                },
            },
            Prop::Box {
                min: [0.5, 1.25, 0.0],
                max: [1.6, 1.95, 0.55],
                texture: Texture::solid([0.30, 0.20, 0.12]),
            },
            Prop::Box {
                min: [1.75, -1.95, 0.0],
                max: [2.45, -1.35, 0.5],
                texture: Texture {
                    base: [0.85, 0.60, 0.15],
                    tint: [0.0; 3],
                    tint_period: 8.0,
                    phase: 0.0,
                    pattern: Pattern::Checker {
                        period: [0.2, 0.2],
                        contrast: 0.2,
                    },
                },
            },
            Prop::Box {
                min: [-0.35, -1.95, 0.0],
                max: [-0.05, -1.7, 1.79],
                texture: Texture::solid([0.92, 0.92, 0.92]),
            },
            Prop::Box {
                min: [2.2, 0.3, 0.6],
                max: [2.45, 1.4, 1.5],
                texture: Texture::solid([0.08, 0.08, 0.10]),
            },
            Prop::Sphere {
                center: [-1.3, 1.55, 0.3],
                radius: 0.28,
                texture: Texture::solid([0.85, 0.15, 0.15]),
            },
            Prop::Sphere {
                center: [0.9, -0.6, 1.62],
                radius: 0.15,
                texture: Texture::solid([0.95, 0.95, 0.55]),
            },
        ];
        Self {
            extents: [5.0, 4.0, 1.8],
            walls: [floor, ceiling, wall_nx, wall_px, wall_ny, wall_py],
            props,
            background: [0.0; 3],
            shading: Shading::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.extents.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(SceneError::BadExtents(self.extents));
        }
        let (lo, hi) = self.bounds();
        let inside = |p: [f64; 3]| (0..3).all(|i| p[i] > lo[i] && p[i] < hi[i]);
        for (i, prop) in self.props.iter().enumerate() {
            let ok = match prop {
                Prop::Box { min, max, .. } => {
                    // boxes may rest on the floor
                    let m = [min[0], min[1], min[2].max(lo[2] + EPS)];
                    inside(m) && inside(*max) && (0..3).all(|k| min[k] < max[k])
                }
                Prop::Sphere { center, radius, .. } => {
                    *radius > 0.0
                        && (0..3).all(|k| center[k] - radius > lo[k] && center[k] + radius < hi[k])
                }
            };
            if !ok {
                return Err(SceneError::PropOutsideRoom(i));
            }
        }
        Ok(())
    }

    /// Room corners `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let [x, y, z] = self.extents;
        ([-0.5 * x, -0.5 * y, 0.0], [0.5 * x, 0.5 * y, z])
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = self.bounds();
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let s: SceneModel =
            serde_json::from_str(text).map_err(|e| SceneError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Scene plus realized floaters, ready for repeated rendering.
#[derive(Debug, Clone)]
pub struct Renderer<'a> {
    scene: &'a SceneModel,
    blobs: Vec<Blob>,
}

struct Hit {
    t: f64,
    color: [f64; 3],
}

#[derive(Clone, Copy)]
struct Ray {
    o: Vector3<f64>,
    d: Vector3<f64>,
    inv: Vector3<f64>,
}

impl Ray {
    #[inline]
    fn new(o: Vector3<f64>, d: Vector3<f64>) -> Self {
        let inv = Vector3::new(safe_inv(d.x), safe_inv(d.y), safe_inv(d.z));
        Self { o, d, inv }
    }
}

#[inline]
fn safe_inv(x: f64) -> f64 {
    if x.abs() < EPS {
        if x.is_sign_negative() {
            -1.0 / EPS
        } else {
            1.0 / EPS
        }
    } else {
        1.0 / x
    }
}

/// Per-render view state: camera origin and the props and blobs that can
/// appear in front of it, each with its conservative pixel footprint.
struct View<'s> {
    scene: &'s SceneModel,
    lo: [f64; 3],
    hi: [f64; 3],
    inside: bool,
    props: Vec<(&'s Prop, Rect)>,
    blobs: Vec<(&'s Blob, Rect)>,
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug)]
struct Rect {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
}

impl Rect {
    #[inline]
    fn has_row(&self, r: usize) -> bool {
        self.r0 <= r && r <= self.r1
    }

    #[inline]
    fn has_col(&self, c: usize) -> bool {
        self.c0 <= c && c <= self.c1
    }
}

/// Pixel footprint of the convex hull of `corners`, or `None` when it is
/// entirely off screen. Anything reaching behind the camera covers the
/// whole image.
fn screen_rect(corners: &[Vector3<f64>], pose: &Pose, k: &CameraIntrinsics) -> Option<Rect> {
    let full = Rect {
        c0: 0,
        c1: k.width - 1,
        r0: 0,
        r1: k.height - 1,
    };
    let f = k.focal();
    let (hw, hh) = (0.5 * k.width as f64, 0.5 * k.height as f64);
    let (mut u0, mut u1, mut v0, mut v1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in corners {
        let q = pose.rotation.transpose() * (p - pose.translation);
        if q.x <= 1e-6 {
            return Some(full);
        }
        let u = hw - f * q.y / q.x;
        let v = hh - f * q.z / q.x;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    // one pixel of slack on every side
    let (w, h) = (k.width as f64, k.height as f64);
    if u1 < -1.0 || v1 < -1.0 || u0 > w + 1.0 || v0 > h + 1.0 {
        return None;
    }
    let clamp = |x: f64, n: usize| (x.max(0.0) as usize).min(n - 1);
    Some(Rect {
        c0: clamp((u0 - 1.5).floor(), k.width),
        c1: clamp((u1 + 0.5).ceil(), k.width),
        r0: clamp((v0 - 1.5).floor(), k.height),
        r1: clamp((v1 + 0.5).ceil(), k.height),
    })
}

fn box_corners(min: [f64; 3], max: [f64; 3]) -> [Vector3<f64>; 8] {
    std::array::from_fn(|i| {
        Vector3::new(
            if i & 1 == 0 { min[0] } else { max[0] },
            if i & 2 == 0 { min[1] } else { max[1] },
            if i & 4 == 0 { min[2] } else { max[2] },
        )
    })
}

fn sphere_corners(c: &Vector3<f64>, r: f64) -> [Vector3<f64>; 8] {
    box_corners([c.x - r, c.y - r, c.z - r], [c.x + r, c.y + r, c.z + r])
}

impl<'a> Renderer<'a> {
    pub fn new(scene: &'a SceneModel, artifacts: Option<&ArtifactSpec>) -> Self {
        let blobs = artifacts.map(|a| a.realize(scene)).unwrap_or_default();
        Self { scene, blobs }
    }

    pub fn scene(&self) -> &SceneModel {
        self.scene
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    fn view(&self, pose: &Pose, k: &CameraIntrinsics) -> View<'_> {
        let o = pose.translation;
        let (lo, hi) = self.scene.bounds();
        let props = self
            .scene
            .props
            .iter()
            // a camera inside a prop sees through it
            .filter(|p| !prop_contains(p, &o))
            .filter_map(|p| {
                let corners = match p {
                    Prop::Box { min, max, .. } => box_corners(*min, *max),
                    Prop::Sphere { center, radius, .. } => {
                        sphere_corners(&Vector3::from(*center), *radius)
                    }
                };
                screen_rect(&corners, pose, k).map(|r| (p, r))
            })
            .collect();
        let blobs = self
            .blobs
            .iter()
            .filter_map(|b| {
                screen_rect(&sphere_corners(&b.center, b.radius), pose, k).map(|r| (b, r))
            })
            .collect();
        View {
            scene: self.scene,
            lo,
            hi,
            inside: self.scene.contains(&o),
            props,
            blobs,
        }
    }

    pub fn render(&self, pose: &Pose, k: &CameraIntrinsics) -> Image {
        let view = self.view(pose, k);
        let f = k.focal();
        let o = pose.translation;
        let fwd = pose.rotation.column(0).into_owned();
        let left = pose.rotation.column(1).into_owned();
        let up = pose.rotation.column(2).into_owned();
        let half_w = 0.5 * k.width as f64;
        let half_h = 0.5 * k.height as f64;
        let mut img = Image::new(k.width, k.height);
        let row_len = k.width * 3;
        let fill_row = |row: usize, out: &mut [f32]| {
            let props: Vec<_> = view
                .props
                .iter()
                .filter(|(_, r)| r.has_row(row))
                .copied()
                .collect();
            let blobs: Vec<_> = view
                .blobs
                .iter()
                .filter(|(_, r)| r.has_row(row))
                .copied()
                .collect();
            let b = -((row as f64 + 0.5) - half_h) / f;
            let base = fwd + up * b;
            for col in 0..k.width {
                let a = -((col as f64 + 0.5) - half_w) / f;
                let d = (base + left * a).normalize();
                let c = view.trace(&Ray::new(o, d), col, &props, &blobs);
                let i = 3 * col;
                out[i] = c[0] as f32;
                out[i + 1] = c[1] as f32;
                out[i + 2] = c[2] as f32;
            }
        };
        if k.pixel_count() >= PARALLEL_PIXELS {
            img.data_mut()
                .par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(row, out)| fill_row(row, out));
        } else {
            for (row, out) in img.data_mut().chunks_mut(row_len).enumerate() {
                fill_row(row, out);
            }
        }
        img
    }
}

impl View<'_> {
    /// Radiance along a unit ray.
    #[inline]
    fn trace(
        &self,
        ray: &Ray,
        col: usize,
        props: &[(&Prop, Rect)],
        blobs: &[(&Blob, Rect)],
    ) -> [f64; 3] {
        let surface = self.nearest_hit(ray, col, props);
        let (t_max, base) = match surface {
            Some(h) => {
                let s = &self.scene.shading;
                let f = s.ambient + (1.0 - s.ambient) / (1.0 + s.falloff * h.t);
                (h.t, [h.color[0] * f, h.color[1] * f, h.color[2] * f])
            }
            None => (f64::INFINITY, self.scene.background),
        };
        let mut c = if blobs.is_empty() {
            base
        } else {
            composite_blobs(ray, col, blobs, t_max, base)
        };
        for v in &mut c {
            *v = fmin(fmax(*v, 0.0), 1.0);
        }
        c
    }
}

fn composite_blobs(
    ray: &Ray,
    col: usize,
    blobs: &[(&Blob, Rect)],
    t_max: f64,
    base: [f64; 3],
) -> [f64; 3] {
    // most rays miss every blob; only then pay for the hit list
    let first = blobs
        .iter()
        .position(|(b, rect)| rect.has_col(col) && blob_hit(b, ray, t_max).is_some());
    let Some(first) = first else {
        return base;
    };
    // few blobs overlap on one ray; keep them on the stack
    let mut hits = [(0.0f64, 0.0f64, 0usize); 8];
    let mut n = 0;
    for (i, (b, rect)) in blobs.iter().enumerate().skip(first) {
        if !rect.has_col(col) {
            continue;
        }
        if let Some((tc, alpha)) = blob_hit(b, ray, t_max) {
            if n < hits.len() {
                hits[n] = (tc, alpha, i);
                n += 1;
            }
        }
    }
    let hits = &mut hits[..n];
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = [0.0; 3];
    let mut transmit = 1.0;
    for &(_, a, i) in hits.iter() {
        let col = blobs[i].0.color;
        for c in 0..3 {
            acc[c] += transmit * a * col[c];
        }
        transmit *= 1.0 - a;
    }
    [
        acc[0] + transmit * base[0],
        acc[1] + transmit * base[1],
        acc[2] + transmit * base[2],
    ]
}

/// Depth along the ray and opacity of a blob crossing, if any.
#[inline]
fn blob_hit(b: &Blob, ray: &Ray, t_max: f64) -> Option<(f64, f64)> {
    let oc = b.center - ray.o;
    let tc = oc.dot(&ray.d);
    if tc <= 0.0 || tc >= t_max {
        return None;
    }
    let perp2 = oc.norm_squared() - tc * tc;
    let r2 = b.radius * b.radius;
    if perp2 >= r2 {
        return None;
    }
    Some((tc, b.opacity * (1.0 - perp2 / r2)))
}

#[inline]
fn fmin(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}

#[inline]
fn fmax(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

impl View<'_> {
    #[inline]
    fn nearest_hit(&self, ray: &Ray, col: usize, props: &[(&Prop, Rect)]) -> Option<Hit> {
        let mut limit = f64::INFINITY;
        let mut best: Option<(f64, &Prop)> = None;
        for (prop, rect) in props {
            if !rect.has_col(col) {
                continue;
            }
            if let Some(t) = prop_distance(prop, ray, limit) {
                limit = t;
                best = Some((t, prop));
            }
        }
        if let Some(room) = self.room_hit(ray, limit) {
            return Some(room);
        }
        best.map(|(t, prop)| Hit {
            t,
            color: prop_color(prop, ray, t),
        })
    }

    /// Nearest wall hit closer than `limit`.
    #[inline]
    fn room_hit(&self, ray: &Ray, limit: f64) -> Option<Hit> {
        let (lo, hi) = (&self.lo, &self.hi);
        let (o, inv) = (&ray.o, &ray.inv);
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut near_face = (0usize, false);
        let mut far_face = (0usize, false);
        for a in 0..3 {
            let (t0, t1, pos_first) = if inv[a] > 0.0 {
                ((lo[a] - o[a]) * inv[a], (hi[a] - o[a]) * inv[a], false)
            } else {
                ((hi[a] - o[a]) * inv[a], (lo[a] - o[a]) * inv[a], true)
            };
            if t0 > t_near {
                t_near = t0;
                near_face = (a, pos_first);
            }
            if t1 < t_far {
                t_far = t1;
                far_face = (a, !pos_first);
            }
        }
        let (t, (axis, positive)) = if self.inside {
            (t_far, far_face)
        } else if t_near <= t_far && t_near > EPS {
            (t_near, near_face)
        } else {
            return None;
        };
        if t >= limit {
            return None;
        }
        let p = ray.o + ray.d * t;
        let (face, a, b) = match (axis, positive) {
            (2, false) => (Face::Floor, p.x, p.y),
            (2, true) => (Face::Ceiling, p.x, p.y),
            (0, false) => (Face::WallNegX, p.y, p.z),
            (0, true) => (Face::WallPosX, -p.y, p.z),
            (1, false) => (Face::WallNegY, -p.x, p.z),
            _ => (Face::WallPosY, p.x, p.z),
        };
        Some(Hit {
            t,
            color: self.scene.walls[face as usize].color(a, b),
        })
    }
}

fn prop_contains(prop: &Prop, o: &Vector3<f64>) -> bool {
    match prop {
        Prop::Box { min, max, .. } => (0..3).all(|i| o[i] >= min[i] && o[i] <= max[i]),
        Prop::Sphere { center, radius, .. } => (o - Vector3::from(*center)).norm() <= *radius,
    }
}

#[inline]
fn prop_distance(prop: &Prop, ray: &Ray, limit: f64) -> Option<f64> {
    match prop {
        Prop::Box { min, max, .. } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for a in 0..3 {
                let t0 = (min[a] - ray.o[a]) * ray.inv[a];
                let t1 = (max[a] - ray.o[a]) * ray.inv[a];
                t_near = fmax(t_near, fmin(t0, t1));
                t_far = fmin(t_far, fmax(t0, t1));
            }
            (t_near <= t_far && t_near > EPS && t_near < limit).then_some(t_near)
        }
        Prop::Sphere { center, radius, .. } => {
            let oc = ray.o - Vector3::from(*center);
            let b = oc.dot(&ray.d);
            let cc = oc.norm_squared() - radius * radius;
            let disc = b * b - cc;
            if disc < 0.0 {
                return None;
            }
            let t = -b - disc.sqrt();
            (t > EPS && t < limit).then_some(t)
        }
    }
}

fn prop_color(prop: &Prop, ray: &Ray, t: f64) -> [f64; 3] {
    let p = ray.o + ray.d * t;
    match prop {
        Prop::Box { min, max, texture } => {
            // the hit face is the one whose plane the point lies on
            let mut axis = 0;
            let mut best = f64::INFINITY;
            for a in 0..3 {
                let d = (p[a] - min[a]).abs().min((p[a] - max[a]).abs());
                if d < best {
                    best = d;
                    axis = a;
                }
            }
            let (a, b) = match axis {
                0 => (p.y, p.z),
                1 => (p.x, p.z),
                _ => (p.x, p.y),
            };
            texture.color(a, b)
        }
        Prop::Sphere {
            center,
            radius,
            texture,
        } => {
            let n = (p - Vector3::from(*center)) / *radius;
            texture.color(n.y.atan2(n.x) * radius, n.z * radius)
        }
    }
}

/// Renders `scene` from `pose`. Floaters are composited when `artifacts` is set.
pub fn render(
    scene: &SceneModel,
    pose: &Pose,
    k: &CameraIntrinsics,
    artifacts: Option<&ArtifactSpec>,
) -> Result<Image, SceneError> {
    k.validate()?;
    Ok(Renderer::new(scene, artifacts).render(pose, k))
}

/// Clean render plus i.i.d. Gaussian pixel noise, clamped to `[0, 1]`.
pub fn observe<R: Rng + ?Sized>(
    scene: &SceneModel,
    pose: &Pose,
    k: &CameraIntrinsics,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Image, SceneError> {
    let mut img = render(scene, pose, k, None)?;
    if noise_sigma > 0.0 {
        for v in img.data_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v as f64 + noise_sigma * n).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_z;
    use crate::image::resample_area;
    use nalgebra::Matrix3;

    fn cam(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(w, h, 1.4).unwrap()
    }

    fn pose(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
        Pose::from_ypr(Vector3::new(x, y, z), yaw, 0.0, 0.0)
    }

    #[test]
    fn default_room_is_valid() {
        let s = SceneModel::default();
        s.validate().unwrap();
        assert_eq!(s.extents, [5.0, 4.0, 1.8]);
    }

    #[test]
    fn prop_outside_is_rejected() {
        let mut s = SceneModel::default();
        s.props.push(Prop::Sphere {
            center: [2.4, 0.0, 1.0],
            radius: 0.2,
            texture: Texture::solid([1.0; 3]),
        });
        assert!(matches!(s.validate(), Err(SceneError::PropOutsideRoom(_))));
    }

    #[test]
    fn render_is_deterministic() {
        let s = SceneModel::default();
        let p = pose(0.3, -0.2, 0.9, 0.7);
        let spec = ArtifactSpec::default();
        let a = render(&s, &p, &cam(80, 64), Some(&spec)).unwrap();
        let b = render(&s, &p, &cam(80, 64), Some(&spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn solid_red_wall_renders_red() {
        let mut s = SceneModel::default();
        s.walls[Face::WallPosX as usize] = Texture::solid([1.0, 0.0, 0.0]);
        s.props.clear();
        let p = Pose::new(Matrix3::identity(), Vector3::new(2.2, 0.0, 0.9));
        let img = render(&s, &p, &CameraIntrinsics::new(32, 24, 0.6).unwrap(), None).unwrap();
        for px in img.data().chunks(3) {
            assert!(px[0] > 0.5 && px[1] == 0.0 && px[2] == 0.0, "{px:?}");
        }
    }

    #[test]
    fn camera_sees_room_from_every_heading() {
        let s = SceneModel::default();
        for i in 0..8 {
            let img = render(
                &s,
                &pose(0.0, 0.0, 0.9, i as f64 * 0.785),
                &cam(40, 32),
                None,
            )
            .unwrap();
            assert!(img.data().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn resolution_consistency_single_pose() {
        let s = SceneModel::default();
        let p = pose(-0.5, 0.4, 1.0, 2.0);
        let hi = render(&s, &p, &cam(800, 680), None).unwrap();
        let lo = render(&s, &p, &cam(80, 64), None).unwrap();
        let down = resample_area(&hi, &cam(800, 680), &cam(80, 64)).unwrap();
        let mad = lo.mean_abs_diff(&down).unwrap();
        assert!(mad < 0.1, "mad {mad}");
    }

    #[test]
    fn artifacts_change_render() {
        let s = SceneModel::default();
        let p = pose(0.0, 0.0, 0.9, 0.3);
        let clean = render(&s, &p, &cam(80, 64), None).unwrap();
        let dirty = render(&s, &p, &cam(80, 64), Some(&ArtifactSpec::default())).unwrap();
        assert!(clean.mean_abs_diff(&dirty).unwrap() > 0.0);
    }

    #[test]
    fn observe_noise_levels() {
        use rand_chacha::ChaCha8Rng;
        let s = SceneModel::default();
        let p = pose(0.2, 0.1, 0.8, -1.0);
        let k = cam(160, 128);
        let clean = render(&s, &p, &k, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(observe(&s, &p, &k, 0.0, &mut rng).unwrap(), clean);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noisy = observe(&s, &p, &k, 0.05, &mut rng).unwrap();
        let n = clean.data().len() as f64;
        let rms = (clean
            .data()
            .iter()
            .zip(noisy.data())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        assert!((0.04..=0.06).contains(&rms), "rms {rms}");

        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            observe(&s, &p, &k, 0.05, &mut r1).unwrap(),
            observe(&s, &p, &k, 0.05, &mut r2).unwrap()
        );
    }

    #[test]
    fn scene_json_round_trip() {
        let s = SceneModel::default_room(3);
        let back = SceneModel::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn outside_camera_sees_outer_wall() {
        let s = SceneModel::default();
        let p = Pose::new(rot_z(std::f64::consts::PI), Vector3::new(3.5, 0.0, 0.9));
        let img = render(&s, &p, &CameraIntrinsics::new(16, 16, 0.3).unwrap(), None).unwrap();
        assert!(img.data().iter().any(|v| *v > 0.0));
    }
}
