//! RGB images and pinhole camera intrinsics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image dimensions {0}x{1} do not match {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("downscale factor {factor} does not divide {width}x{height}")]
    NotDivisible {
        factor: usize,
        width: usize,
        height: usize,
    },
    #[error("image {0}x{1} is below the {2}x{3} minimum")]
    TooSmall(usize, usize, usize, usize),
    #[error("target field of view extends beyond the source image")]
    FootprintOutsideSource,
    #[error("image export failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

/// Pinhole intrinsics with square pixels and a centered principal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub horizontal_fov: f64,
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, horizontal_fov: f64) -> Result<Self, ImageError> {
        let k = Self {
            width,
            height,
            horizontal_fov,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if self.width < 8 || self.height < 8 {
            return Err(ImageError::InvalidIntrinsics(format!(
                "{}x{} is smaller than 8x8",
                self.width, self.height
            )));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < PI) {
            return Err(ImageError::InvalidIntrinsics(format!(
                "horizontal fov {} outside (0, pi)",
                self.horizontal_fov
            )));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.horizontal_fov).tan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Same field of view at `1/factor` the resolution.
    pub fn downscale(&self, factor: usize) -> Result<Self, ImageError> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(ImageError::NotDivisible {
                factor,
                width: self.width,
                height: self.height,
            });
        }
        Self::new(
            self.width / factor,
            self.height / factor,
            self.horizontal_fov,
        )
    }

    /// Unnormalized camera-frame ray through the center of pixel `(col, row)`.
    /// The camera looks along +x with +y to the left and +z up.
    #[inline]
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vector3<f64> {
        let f = self.focal();
        Vector3::new(
            1.0,
            -((col as f64 + 0.5) - 0.5 * self.width as f64) / f,
            -((row as f64 + 0.5) - 0.5 * self.height as f64) / f,
        )
    }
}

/// Interleaved RGB image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::DimensionMismatch(
                data.len() / 3,
                1,
                width,
                height,
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> [f32; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, rgb: [f32; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn matches(&self, k: &CameraIntrinsics) -> bool {
        self.width == k.width && self.height == k.height
    }

    /// Rec. 601 luma, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64, ImageError> {
        self.check_same_size(other)?;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        Ok(s / self.data.len() as f64)
    }

    pub fn check_same_size(&self, other: &Image) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<(), ImageError> {
        let file = std::fs::File::create(path)?;
        let mut enc = png::Encoder::new(
            std::io::BufWriter::new(file),
            self.width as u32,
            self.height as u32,
        );
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.to_rgb8())?;
        Ok(())
    }

    /// Binary PPM (P6).
    pub fn write_ppm(&self, path: &Path) -> Result<(), ImageError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P6\n{} {}\n255\n", self.width, self.height)?;
        f.write_all(&self.to_rgb8())?;
        Ok(())
    }

    /// Writes PNG or PPM depending on the extension (`.ppm` means PPM).
    pub fn save(&self, path: &Path) -> Result<(), ImageError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ppm") => self.write_ppm(path),
            _ => self.write_png(path),
        }
    }
}

/// For each target index along one axis, the source indices and coverage
/// weights of its footprint.
fn axis_footprints(
    dst_len: usize,
    dst_focal: f64,
    src_len: usize,
    src_focal: f64,
) -> Result<Vec<Vec<(usize, f64)>>, ImageError> {
    let scale = src_focal / dst_focal;
    let dst_c = 0.5 * dst_len as f64;
    let src_c = 0.5 * src_len as f64;
    let mut out = Vec::with_capacity(dst_len);
    for j in 0..dst_len {
        let a = (j as f64 - dst_c) * scale + src_c;
        let b = (j as f64 + 1.0 - dst_c) * scale + src_c;
        if a < -1e-9 || b > src_len as f64 + 1e-9 {
            return Err(ImageError::FootprintOutsideSource);
        }
        let a = a.max(0.0);
        let b = b.min(src_len as f64);
        let mut taps = Vec::new();
        let first = a.floor() as usize;
        let last = (b.ceil() as usize).min(src_len);
        for s in first..last {
            let lo = a.max(s as f64);
            let hi = b.min(s as f64 + 1.0);
            if hi > lo {
                taps.push((s, (hi - lo) / (b - a)));
            }
        }
        out.push(taps);
    }
    Ok(out)
}

/// Area-averages `img` (taken with `src`) into the pixel grid of `dst`.
///
/// Each target pixel averages the source pixels under its footprint on the
/// image plane, so a target with a narrower vertical field of view is a
/// centered crop of the source. Fails when the target sees beyond the source.
pub fn resample_area(
    img: &Image,
    src: &CameraIntrinsics,
    dst: &CameraIntrinsics,
) -> Result<Image, ImageError> {
    if !img.matches(src) {
        return Err(ImageError::DimensionMismatch(
            img.width, img.height, src.width, src.height,
        ));
    }
    if src == dst {
        return Ok(img.clone());
    }
    let cols = axis_footprints(dst.width, dst.focal(), src.width, src.focal())?;
    let rows = axis_footprints(dst.height, dst.focal(), src.height, src.focal())?;

    // horizontal pass into a (src.height x dst.width) buffer
    let mut tmp = vec![0.0f64; src.height * dst.width * 3];
    for r in 0..src.height {
        let row = &img.data[r * src.width * 3..(r + 1) * src.width * 3];
        for (j, taps) in cols.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(s, w) in taps {
                acc[0] += w * row[3 * s] as f64;
                acc[1] += w * row[3 * s + 1] as f64;
                acc[2] += w * row[3 * s + 2] as f64;
            }
            let o = 3 * (r * dst.width + j);
            tmp[o..o + 3].copy_from_slice(&acc);
        }
    }
    let mut out = Image::new(dst.width, dst.height);
    for (i, taps) in rows.iter().enumerate() {
        for j in 0..dst.width {
            let mut acc = [0.0f64; 3];
            for &(s, w) in taps {
                let o = 3 * (s * dst.width + j);
                acc[0] += w * tmp[o];
                acc[1] += w * tmp[o + 1];
                acc[2] += w * tmp[o + 2];
            }
            out.set(j, i, [acc[0] as f32, acc[1] as f32, acc[2] as f32]);
        }
    }
    Ok(out)
}

/// Area-averages a single-channel row-major plane onto a `dw` x `dh` grid
/// stretched over the whole source.
pub fn area_average_plane(plane: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(plane.len(), sw * sh, "plane size");
    // equal focal ratios make both footprints span the full source axis
    let cols = axis_footprints(dw, dw as f64, sw, sw as f64).expect("full-width footprints");
    let rows = axis_footprints(dh, dh as f64, sh, sh as f64).expect("full-height footprints");
    let mut tmp = vec![0.0; sh * dw];
    for r in 0..sh {
        let row = &plane[r * sw..(r + 1) * sw];
        for (j, taps) in cols.iter().enumerate() {
            tmp[r * dw + j] = taps.iter().map(|&(s, w)| w * row[s]).sum();
        }
    }
    let mut out = vec![0.0; dw * dh];
    for (i, taps) in rows.iter().enumerate() {
        for j in 0..dw {
            out[i * dw + j] = taps.iter().map(|&(s, w)| w * tmp[s * dw + j]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(w, h, 1.4).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(7, 8, 1.0).is_err());
        assert!(CameraIntrinsics::new(8, 8, PI).is_err());
        assert!(CameraIntrinsics::new(8, 8, 0.0).is_err());
        assert!(CameraIntrinsics::new(8, 8, 1.0).is_ok());
    }

    #[test]
    fn downscale_keeps_aspect_and_fov() {
        let big = k(800, 680);
        let small = big.downscale(5).unwrap();
        assert_eq!((small.width, small.height), (160, 136));
        assert_eq!(small.horizontal_fov, big.horizontal_fov);
        assert_eq!(small.width * big.height, small.height * big.width);
        assert!(big.downscale(3).is_err());
    }

    #[test]
    fn integer_downsample_is_block_mean() {
        let src = k(16, 16);
        let mut img = Image::new(16, 16);
        for r in 0..16 {
            for c in 0..16 {
                let v = (r * 16 + c) as f32 / 256.0;
                img.set(c, r, [v, v, v]);
            }
        }
        let out = resample_area(&img, &src, &src.downscale(2).unwrap()).unwrap();
        let expect =
            (img.get(0, 0)[0] + img.get(1, 0)[0] + img.get(0, 1)[0] + img.get(1, 1)[0]) / 4.0;
        assert!((out.get(0, 0)[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn narrower_target_is_center_crop() {
        // 80x64 inside 800x680 at equal hfov: rows 20..660 then 10x10 blocks
        let src = k(800, 680);
        let dst = k(80, 64);
        let mut img = Image::new(800, 680);
        for r in 0..680 {
            let v = if !(20..660).contains(&r) { 1.0 } else { 0.25 };
            for c in 0..800 {
                img.set(c, r, [v, v, v]);
            }
        }
        let out = resample_area(&img, &src, &dst).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn wider_target_is_rejected() {
        let src = k(80, 64);
        let dst = k(80, 80);
        let img = Image::new(80, 64);
        assert!(matches!(
            resample_area(&img, &src, &dst),
            Err(ImageError::FootprintOutsideSource)
        ));
    }

    #[test]
    fn resample_preserves_constant() {
        let src = k(100, 85);
        let dst = k(80, 64);
        let img = Image::filled(100, 85, [0.3, 0.6, 0.9]);
        let out = resample_area(&img, &src, &dst).unwrap();
        for p in out.data().chunks(3) {
            assert!((p[0] - 0.3).abs() < 1e-5 && (p[2] - 0.9).abs() < 1e-5);
        }
    }

    #[test]
    fn export_formats() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(8, 8, [1.0, 0.5, 0.0]);
        img.save(&dir.path().join("a.png")).unwrap();
        img.save(&dir.path().join("a.ppm")).unwrap();
        let ppm = std::fs::read(dir.path().join("a.ppm")).unwrap();
        assert!(ppm.starts_with(b"P6\n8 8\n255\n"));
        assert_eq!(ppm.len(), 11 + 8 * 8 * 3);
    }

    #[test]
    fn plane_average_blocks_and_mean() {
        let plane: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let out = area_average_plane(&plane, 4, 4, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
        // fractional footprints still preserve the mean
        let plane: Vec<f64> = (0..35).map(|i| ((i * 7) % 11) as f64).collect();
        let out = area_average_plane(&plane, 7, 5, 3, 2);
        let m0 = plane.iter().sum::<f64>() / 35.0;
        let m1 = out.iter().sum::<f64>() / 6.0;
        assert!((m0 - m1).abs() < 1e-12);
    }
}
