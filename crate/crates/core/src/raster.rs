//! Raster containers and the scalar filters shared by every pipeline stage.
//!
//! Three grids are used throughout: [`RasterImage`] for 8-bit input pixels,
//! [`ScalarMap`] for floating point per-pixel quantities (luminance, smoothed
//! flatness, gradients) and [`BinaryMask`] for flatness indicators,
//! segmentations and ground truths. All are row-major.

use std::path::Path;

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// ITU weights for R, G and B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// 8-bit pixel grid with one or three interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("empty raster {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "raster must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels as usize {
            return Err(Error::Size(format!(
                "raster {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels as usize,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a 3-channel image from a per-pixel closure.
    pub fn from_fn_rgb(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let c = self.channels as usize;
        let i = (y * self.width + x) * c;
        &self.data[i..i + c]
    }

    /// Loads a PNG or BMP file as 8-bit RGB. Gray and alpha inputs are
    /// expanded or flattened by the decoder.
    pub fn open_rgb(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_dynamic(img)
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let rgb = img.into_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, 3, rgb.into_raw())
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            if self.channels == 3 {
                Rgb([p[0], p[1], p[2]])
            } else {
                Rgb([p[0], p[0], p[0]])
            }
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb_image()
            .save(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Per-pixel floating point samples. Every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("empty map {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Size(format!(
                "map {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the grid (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn same_dims(&self, other: &ScalarMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Rescales to [0,255] and rounds to an 8-bit grayscale image.
    pub fn to_gray_image(&self) -> GrayImage {
        let scaled = rescale_minmax(self);
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([scaled.get(x as usize, y as usize).round() as u8])
        })
    }

    /// Writes the min-max rescaled map as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Per-pixel {0,1} grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("empty mask {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(Error::Size(format!(
                "mask {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Foreground pixels with at least one 4-neighbor in the background.
    /// Pixels on the image edge are not boundary pixels by virtue of the edge
    /// alone.
    pub fn boundary(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let bg = (x > 0 && !self.get(x - 1, y))
                    || (x + 1 < self.width && !self.get(x + 1, y))
                    || (y > 0 && !self.get(x, y - 1))
                    || (y + 1 < self.height && !self.get(x, y + 1));
                if bg {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Loads a mask image; samples of 128 and above are foreground.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        Self::new(
            w as usize,
            h as usize,
            gray.into_raw().into_iter().map(|v| v >= 128).collect(),
        )
    }

    /// 0 = background, 255 = foreground.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn to_scalar(&self) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Luminance `0.2989 R + 0.5870 G + 0.1140 B`, unquantized.
pub fn to_luminance(img: &RasterImage) -> Result<ScalarMap> {
    if img.channels != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: img.channels,
        });
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| wr * p[0] as f64 + wg * p[1] as f64 + wb * p[2] as f64)
        .collect();
    ScalarMap::new(img.width, img.height, data)
}

/// Normalized 1D Gaussian taps over `[-r, r]` with `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with replicate padding. `sigma == 0` is the
/// identity.
pub fn gaussian_smooth(map: &ScalarMap, sigma: f64) -> Result<ScalarMap> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (map.width, map.height);

    let mut horiz = vec![0.0; w * h];
    horiz
        .par_chunks_mut(w)
        .zip(map.data.par_chunks(w))
        .for_each(|(out, row)| {
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1);
                    acc += t * row[sx as usize];
                }
                *o = acc;
            }
        });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, t) in taps.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            let src = &horiz[sy * w..(sy + 1) * w];
            for (o, s) in row.iter_mut().zip(src) {
                *o += t * s;
            }
        }
    });

    ScalarMap::new(w, h, out)
}

/// Affine stretch of `[min, max]` onto `[0, 255]`; a flat map becomes all
/// zeros.
pub fn rescale_minmax(map: &ScalarMap) -> ScalarMap {
    let (lo, hi) = map.min_max();
    let data = if hi > lo {
        let span = hi - lo;
        map.data
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).clamp(0.0, 255.0))
            .collect()
    } else {
        vec![0.0; map.data.len()]
    };
    ScalarMap {
        width: map.width,
        height: map.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb1(r: u8, g: u8, b: u8) -> RasterImage {
        RasterImage::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    /// Dense 2D convolution with an independently built 2D kernel.
    fn dense_gaussian(map: &ScalarMap, sigma: f64) -> ScalarMap {
        let r = (3.0 * sigma).ceil() as isize;
        let mut kernel = Vec::new();
        for j in -r..=r {
            for i in -r..=r {
                kernel.push((i, j, (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp()));
            }
        }
        let norm: f64 = kernel.iter().map(|k| k.2).sum();
        ScalarMap::from_fn(map.width(), map.height(), |x, y| {
            kernel
                .iter()
                .map(|&(i, j, k)| k / norm * map.get_clamped(x as isize + i, y as isize + j))
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn luminance_examples() {
        assert_eq!(to_luminance(&rgb1(0, 0, 0)).unwrap().get(0, 0), 0.0);
        assert_abs_diff_eq!(
            to_luminance(&rgb1(255, 255, 255)).unwrap().get(0, 0),
            254.9745,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            to_luminance(&rgb1(255, 0, 0)).unwrap().get(0, 0),
            76.2195,
            epsilon = 1e-9
        );
    }

    #[test]
    fn luminance_rejects_gray() {
        let img = RasterImage::new(2, 2, 1, vec![0; 4]).unwrap();
        assert!(matches!(
            to_luminance(&img),
            Err(Error::ChannelMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn raster_rejects_bad_lengths() {
        assert!(RasterImage::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(RasterImage::new(0, 2, 3, vec![]).is_err());
        assert!(ScalarMap::new(2, 1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn smoothing_constant_and_identity() {
        let c = ScalarMap::filled(17, 11, 42.5).unwrap();
        let s = gaussian_smooth(&c, 2.3).unwrap();
        for &v in s.data() {
            assert_abs_diff_eq!(v, 42.5, epsilon = 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ScalarMap::from_fn(9, 7, |_, _| rng.random_range(0.0..10.0)).unwrap();
        assert_eq!(gaussian_smooth(&m, 0.0).unwrap(), m);
    }

    #[test]
    fn smoothing_rejects_negative_sigma() {
        let m = ScalarMap::filled(3, 3, 1.0).unwrap();
        assert!(matches!(gaussian_smooth(&m, -0.5), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn impulse_response_is_kernel() {
        let n = 15;
        let c = n / 2;
        let m = ScalarMap::from_fn(n, n, |x, y| if x == c && y == c { 1.0 } else { 0.0 }).unwrap();
        let s = gaussian_smooth(&m, 1.0).unwrap();
        let oracle = dense_gaussian(&m, 1.0);
        for (a, b) in s.data().iter().zip(oracle.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // Center tap of the normalized 7-tap kernel, squared.
        let taps = gaussian_kernel(1.0);
        assert_eq!(taps.len(), 7);
        assert_abs_diff_eq!(s.get(c, c), taps[3] * taps[3], epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(c + 2, c - 1), taps[5] * taps[2], epsilon = 1e-15);
    }

    #[test]
    fn separable_matches_dense_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &sigma in &[0.6, 1.0, 2.5, 4.0] {
            let m = ScalarMap::from_fn(32, 32, |_, _| rng.random_range(-50.0..200.0)).unwrap();
            let fast = gaussian_smooth(&m, sigma).unwrap();
            let slow = dense_gaussian(&m, sigma);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-9, "sigma {sigma}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn smoothing_preserves_mass_away_from_borders() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = 3.0;
        let pad = 10;
        let m = ScalarMap::from_fn(96, 80, |x, y| {
            if x >= pad && x < 96 - pad && y >= pad && y < 80 - pad {
                rng.random_range(0.0..255.0)
            } else {
                0.0
            }
        })
        .unwrap();
        let s = gaussian_smooth(&m, sigma).unwrap();
        let before: f64 = m.data().iter().sum();
        let after: f64 = s.data().iter().sum();
        assert!(((after - before) / before).abs() < 1e-6);
    }

    #[test]
    fn rescale_examples() {
        let m = ScalarMap::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(rescale_minmax(&m).data(), &[0.0, 127.5, 255.0]);
        let m = ScalarMap::new(3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(rescale_minmax(&m).data(), &[0.0, 127.5, 255.0]);
        let m = ScalarMap::filled(4, 2, 9.0).unwrap();
        assert!(rescale_minmax(&m).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_of_square() {
        let m = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y)).unwrap();
        let b = m.boundary();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(2, 2)));
        // Foreground touching only the image edge has no boundary.
        let full = BinaryMask::from_fn(4, 4, |_, _| true).unwrap();
        assert!(full.boundary().is_empty());
    }

    proptest! {
        #[test]
        fn luminance_is_monotone(r in 0u8..255, g in 0u8..255, b in 0u8..255, ch in 0usize..3) {
            let mut px = [r, g, b];
            let base = to_luminance(&rgb1(px[0], px[1], px[2])).unwrap().get(0, 0);
            px[ch] += 1;
            let raised = to_luminance(&rgb1(px[0], px[1], px[2])).unwrap().get(0, 0);
            prop_assert!(raised > base);
            prop_assert!((0.0..=254.9745 + 1e-9).contains(&raised));
        }

        #[test]
        fn rescale_hits_both_ends(data in proptest::collection::vec(-1e6f64..1e6, 2..64)) {
            let n = data.len();
            let m = ScalarMap::new(n, 1, data).unwrap();
            let (lo, hi) = m.min_max();
            let r = rescale_minmax(&m);
            prop_assert!(r.data().iter().all(|v| (0.0..=255.0).contains(v)));
            if hi > lo {
                let (rlo, rhi) = r.min_max();
                prop_assert_eq!(rlo, 0.0);
                prop_assert_eq!(rhi, 255.0);
            }
        }
    }
}
