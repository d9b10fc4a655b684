use crate::image::{area_average_plane, Image, ImageError};
use std::f64::consts::PI;

pub const THUMB_W: usize = 20;
pub const THUMB_H: usize = 16;
const GRAD_W: usize = 2 * THUMB_W;
const GRAD_H: usize = 2 * THUMB_H;
pub const BINS: usize = 8;
pub const GRID_ROWS: usize = 2;
pub const GRID_COLS: usize = 3;
/// Descriptor length: thumbnail plus gridded orientation histogram.
pub const DIM: usize = THUMB_W * THUMB_H + BINS * GRID_ROWS * GRID_COLS;
/// Weight of the histogram block relative to the thumbnail block.
const HIST_WEIGHT: f64 = 2.0;

/// Global image embedding with unit norm, or a flagged null vector for
/// images without any structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    v: Vec<f64>,
    null: bool,
}

impl Descriptor {
    /// Wraps a raw vector, normalizing it; an all-zero vector becomes null.
    pub fn from_vec(mut v: Vec<f64>) -> Self {
        let n = norm(&v);
        if n > 0.0 && n.is_finite() {
            v.iter_mut().for_each(|x| *x /= n);
            Self { v, null: false }
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
            Self { v, null: true }
        }
    }

    /// Reassembles a stored descriptor without renormalizing.
    pub(crate) fn from_parts(v: Vec<f64>, null: bool) -> Self {
        Self { v, null }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn is_null(&self) -> bool {
        self.null
    }

    /// `1 - cos`, in `[0, 2]`. Anything involving a null descriptor is 1.
    pub fn cosine_distance(&self, other: &Descriptor) -> f64 {
        if self.null || other.null {
            return 1.0;
        }
        // for unit vectors ½‖a − b‖² = 1 − a·b, and it is exactly 0 for a == b
        let d2: f64 = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (0.5 * d2).clamp(0.0, 2.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize_block(v: &mut [f64], weight: f64) {
    let n = norm(v);
    // below this a block is only rounding noise
    if n > 1e-12 {
        v.iter_mut().for_each(|x| *x *= weight / n);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Encodes an image (at least 20 wide and 16 high).
pub fn encode(img: &Image) -> Result<Descriptor, ImageError> {
    if img.width() < THUMB_W || img.height() < THUMB_H {
        return Err(ImageError::TooSmall(
            img.width(),
            img.height(),
            THUMB_W,
            THUMB_H,
        ));
    }
    let luma = img.luma();
    let g = area_average_plane(&luma, img.width(), img.height(), GRAD_W, GRAD_H);

    let mut v = Vec::with_capacity(DIM);
    for r in 0..THUMB_H {
        for c in 0..THUMB_W {
            let at = |dr: usize, dc: usize| g[(2 * r + dr) * GRAD_W + 2 * c + dc];
            v.push(0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)));
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    normalize_block(&mut v, 1.0);

    let mut hist = vec![0.0; BINS * GRID_ROWS * GRID_COLS];
    for r in 1..GRAD_H - 1 {
        for c in 1..GRAD_W - 1 {
            let gx = g[r * GRAD_W + c + 1] - g[r * GRAD_W + c - 1];
            // rows grow downward; flip so angles are counterclockwise
            let gy = g[(r - 1) * GRAD_W + c] - g[(r + 1) * GRAD_W + c];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ang = gy.atan2(gx) + PI;
            let bin = ((ang / (2.0 * PI) * BINS as f64) as usize).min(BINS - 1);
            let cell = (r * GRID_ROWS / GRAD_H) * GRID_COLS + c * GRID_COLS / GRAD_W;
            hist[cell * BINS + bin] += mag;
        }
    }
    normalize_block(&mut hist, HIST_WEIGHT);
    v.extend_from_slice(&hist);
    Ok(Descriptor::from_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, offset: f32, gain: f32) -> Image {
        let mut img = Image::new(w, h);
        for r in 0..h {
            for c in 0..w {
                let x = c as f32 / w as f32;
                let y = r as f32 / h as f32;
                let v = 0.3 + 0.2 * (6.0 * x).sin() * (4.0 * y + 1.0).cos() + 0.1 * x;
                img.set(
                    c,
                    r,
                    [
                        offset + gain * v,
                        offset + gain * 0.8 * v,
                        offset + gain * 0.5,
                    ],
                );
            }
        }
        img
    }

    #[test]
    fn dimension_and_norm() {
        assert_eq!(DIM, 368);
        let d = encode(&pattern(80, 64, 0.0, 1.0)).unwrap();
        assert_eq!(d.dim(), DIM);
        assert!((norm(d.as_slice()) - 1.0).abs() < 1e-9);
        assert!(!d.is_null());
    }

    #[test]
    fn deterministic() {
        let img = pattern(80, 64, 0.0, 1.0);
        assert_eq!(encode(&img).unwrap(), encode(&img).unwrap());
    }

    #[test]
    fn brightness_and_contrast_invariance() {
        let d0 = encode(&pattern(80, 64, 0.0, 1.0)).unwrap();
        let d1 = encode(&pattern(80, 64, 0.1, 1.0)).unwrap();
        let d2 = encode(&pattern(80, 64, 0.0, 0.6)).unwrap();
        assert!(d0.cosine_distance(&d1) < 1e-6);
        assert!(d0.cosine_distance(&d2) < 1e-6);
    }

    #[test]
    fn constant_image_is_null() {
        let d = encode(&Image::filled(40, 32, [0.4, 0.4, 0.4])).unwrap();
        assert!(d.is_null());
        assert_eq!(d.cosine_distance(&d), 1.0);
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            encode(&Image::new(19, 16)),
            Err(ImageError::TooSmall(..))
        ));
        assert!(encode(&Image::new(20, 16)).is_ok());
    }

    #[test]
    fn distance_range() {
        let a = Descriptor::from_vec(vec![1.0, 0.0]);
        let b = Descriptor::from_vec(vec![-2.0, 0.0]);
        assert_eq!(a.cosine_distance(&b), 2.0);
        assert_eq!(a.cosine_distance(&a), 0.0);
    }
}
