//! Windowed structural similarity on luma.

use crate::image::{Image, ImageError};

pub const WINDOW: usize = 8;
pub const STRIDE: usize = 4;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Luma plane with per-window statistics cached, for comparing one
/// reference against many candidates.
#[derive(Debug, Clone)]
pub struct SsimReference {
    width: usize,
    height: usize,
    luma: Vec<f64>,
    /// (mean, population variance) per window, row-major.
    stats: Vec<(f64, f64)>,
}

impl SsimReference {
    pub fn new(img: &Image) -> Result<Self, ImageError> {
        check_size(img)?;
        let luma = img.luma();
        let (w, h) = (img.width(), img.height());
        let stats = window_origins(w, h)
            .map(|(x, y)| mean_var(&luma, w, x, y))
            .collect();
        Ok(Self {
            width: w,
            height: h,
            luma,
            stats,
        })
    }

    pub fn compare(&self, other: &Image) -> Result<f64, ImageError> {
        if other.width() != self.width || other.height() != self.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width(),
                other.height(),
            ));
        }
        let lb = other.luma();
        let w = self.width;
        let mut total = 0.0;
        for ((x, y), &(ma, va)) in window_origins(w, self.height).zip(&self.stats) {
            let (mb, vb) = mean_var(&lb, w, x, y);
            let mut cov = 0.0;
            for r in y..y + WINDOW {
                let ra = &self.luma[r * w + x..r * w + x + WINDOW];
                let rb = &lb[r * w + x..r * w + x + WINDOW];
                for (a, b) in ra.iter().zip(rb) {
                    cov += (a - ma) * (b - mb);
                }
            }
            cov /= (WINDOW * WINDOW) as f64;
            total += index(ma, mb, va, vb, cov);
        }
        Ok(total / self.stats.len() as f64)
    }
}

/// SSIM of two equally sized images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.check_same_size(b)?;
    SsimReference::new(a)?.compare(b)
}

fn check_size(img: &Image) -> Result<(), ImageError> {
    if img.width() < WINDOW || img.height() < WINDOW {
        return Err(ImageError::TooSmall(
            img.width(),
            img.height(),
            WINDOW,
            WINDOW,
        ));
    }
    Ok(())
}

fn window_origins(w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=(h - WINDOW))
        .step_by(STRIDE)
        .flat_map(move |y| (0..=(w - WINDOW)).step_by(STRIDE).map(move |x| (x, y)))
}

fn mean_var(plane: &[f64], w: usize, x: usize, y: usize) -> (f64, f64) {
    let n = (WINDOW * WINDOW) as f64;
    let mut s = 0.0;
    for r in y..y + WINDOW {
        s += plane[r * w + x..r * w + x + WINDOW].iter().sum::<f64>();
    }
    let m = s / n;
    let mut v = 0.0;
    for r in y..y + WINDOW {
        v += plane[r * w + x..r * w + x + WINDOW]
            .iter()
            .map(|p| (p - m) * (p - m))
            .sum::<f64>();
    }
    (m, v / n)
}

#[inline]
fn index(ma: f64, mb: f64, va: f64, vb: f64, cov: f64) -> f64 {
    ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f32) -> Image {
        let mut img = Image::new(w, h);
        for r in 0..h {
            for c in 0..w {
                let v = f(c, r);
                img.set(c, r, [v, v, v]);
            }
        }
        img
    }

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gray(w, h, |_, _| rng.gen::<f32>())
    }

    #[test]
    fn identical_images_score_one() {
        let a = noise(40, 24, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let a = gray(32, 32, |c, r| ((c + r) % 2) as f32);
        let b = gray(32, 32, |c, r| 1.0 - ((c + r) % 2) as f32);
        // every window: means 1/2, variances 1/4, covariance -1/4
        let expect = ((0.5 + C1) * (-0.5 + C2)) / ((0.5 + C1) * (0.5 + C2));
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0);
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn symmetric() {
        let a = noise(37, 29, 2);
        let b = noise(37, 29, 3);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_formula() {
        // independent evaluation with one-pass moments
        let a = noise(20, 12, 4);
        let b = noise(20, 12, 5);
        let (la, lb) = (a.luma(), b.luma());
        let mut total = 0.0;
        let mut n = 0;
        for y in [0, 4] {
            for x in [0, 4, 8, 12] {
                let mut s = [0.0f64; 5];
                for r in y..y + 8 {
                    for c in x..x + 8 {
                        let (p, q) = (la[r * 20 + c], lb[r * 20 + c]);
                        s[0] += p;
                        s[1] += q;
                        s[2] += p * p;
                        s[3] += q * q;
                        s[4] += p * q;
                    }
                }
                let [sa, sb, saa, sbb, sab] = s.map(|v| v / 64.0);
                let (va, vb, cab) = (saa - sa * sa, sbb - sb * sb, sab - sa * sb);
                total += ((2.0 * sa * sb + C1) * (2.0 * cab + C2))
                    / ((sa * sa + sb * sb + C1) * (va + vb + C2));
                n += 1;
            }
        }
        let s = ssim(&a, &b).unwrap();
        assert!((s - total / n as f64).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch_and_tiny() {
        assert!(matches!(
            ssim(&noise(16, 16, 0), &noise(16, 8, 0)),
            Err(ImageError::DimensionMismatch(..))
        ));
        let tiny = Image::new(4, 4);
        assert!(matches!(ssim(&tiny, &tiny), Err(ImageError::TooSmall(..))));
    }
}
