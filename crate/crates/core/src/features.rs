//! Two-dimensional feature space built from luminance and smoothed
//! flatness.
//!
//! The default `ab` variant paints every pixel with the RGB color
//! `(L, Y, L)` and keeps the a*b* chroma of that color: textured dark lesion
//! pixels (high L, low Y) turn magenta while flat bright skin (low L, high Y)
//! turns green. The `zn` variant clusters z-scored (Y, L) pairs directly.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{rescale_minmax, ScalarMap};

/// Linear sRGB to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// D65 reference white, 2 degree observer.
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

/// A point of the clustering space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeaturePoint {
    pub a: f64,
    pub b: f64,
}

impl FeaturePoint {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    #[inline]
    pub fn dist2(&self, other: &FeaturePoint) -> f64 {
        let da = self.a - other.a;
        let db = self.b - other.b;
        da * da + db * db
    }
}

/// Which feature space to cluster in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// a*b* chroma of the (L, Y, L) color.
    #[default]
    Ab,
    /// z-scored (Y, L).
    Zn,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ab => "ab",
            Variant::Zn => "zn",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ab" => Ok(Variant::Ab),
            "zn" => Ok(Variant::Zn),
            other => Err(Error::InvalidParameter(format!(
                "unknown feature variant {other:?} (expected ab or zn)"
            ))),
        }
    }
}

/// `(v - mean) / std` with population statistics.
pub fn znormalize(map: &ScalarMap) -> Result<ScalarMap> {
    let n = map.data().len() as f64;
    let mean = map.data().iter().sum::<f64>() / n;
    let var = map.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    ScalarMap::new(
        map.width(),
        map.height(),
        map.data().iter().map(|v| (v - mean) / std).collect(),
    )
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE 1976 L*a*b* of an sRGB color given on a [0,255] scale.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c / 255.0));
    let xyz: Vec<f64> = RGB_TO_XYZ
        .iter()
        .map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2])
        .collect();
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn check_range(map: &ScalarMap) -> Result<()> {
    match map.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        Some(&value) => Err(Error::Range {
            value,
            min: 0.0,
            max: 255.0,
        }),
        None => Ok(()),
    }
}

/// a*b* of the color (L, Y, L) per pixel. Both maps must lie in [0,255].
pub fn yl_to_ab(y: &ScalarMap, l: &ScalarMap) -> Result<Vec<FeaturePoint>> {
    if !y.same_dims(l) {
        return Err(Error::Size(format!(
            "luminance {}x{} vs flatness {}x{}",
            y.width(),
            y.height(),
            l.width(),
            l.height()
        )));
    }
    check_range(y)?;
    check_range(l)?;
    Ok(y
        .data()
        .par_iter()
        .zip(l.data().par_iter())
        .map(|(&yv, &lv)| {
            let [_, a, b] = srgb_to_lab([lv, yv, lv]);
            FeaturePoint { a, b }
        })
        .collect())
}

/// One feature point per pixel in row-major order; point `i` belongs to
/// pixel `(i % width, i / width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    width: usize,
    height: usize,
    points: Vec<FeaturePoint>,
}

impl FeatureCloud {
    pub fn new(width: usize, height: usize, points: Vec<FeaturePoint>) -> Result<Self> {
        if points.len() != width * height {
            return Err(Error::Size(format!(
                "{} points for a {width}x{height} image",
                points.len()
            )));
        }
        Ok(Self {
            width,
            height,
            points,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    pub fn pixel_of(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn index_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Dumps `pixel_x,pixel_y,a,b` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["pixel_x", "pixel_y", "a", "b"])?;
        for (i, p) in self.points.iter().enumerate() {
            let (x, y) = self.pixel_of(i);
            wtr.write_record([
                x.to_string(),
                y.to_string(),
                format!("{:.6}", p.a),
                format!("{:.6}", p.b),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Builds the clustering space from luminance and smoothed flatness.
pub fn build_features(y: &ScalarMap, l_smooth: &ScalarMap, variant: Variant) -> Result<FeatureCloud> {
    if !y.same_dims(l_smooth) {
        return Err(Error::Size(format!(
            "luminance {}x{} vs flatness {}x{}",
            y.width(),
            y.height(),
            l_smooth.width(),
            l_smooth.height()
        )));
    }
    let points = match variant {
        Variant::Ab => yl_to_ab(&rescale_minmax(y), &rescale_minmax(l_smooth))?,
        Variant::Zn => {
            let yn = znormalize(y)?;
            let ln = znormalize(l_smooth)?;
            yn.data()
                .iter()
                .zip(ln.data())
                .map(|(&a, &b)| FeaturePoint { a, b })
                .collect()
        }
    };
    FeatureCloud::new(y.width(), y.height(), points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(v: f64) -> ScalarMap {
        ScalarMap::new(1, 1, vec![v]).unwrap()
    }

    fn ab(y: f64, l: f64) -> FeaturePoint {
        yl_to_ab(&one(y), &one(l)).unwrap()[0]
    }

    #[test]
    fn znormalize_examples() {
        let m = ScalarMap::new(2, 1, vec![0.0, 10.0]).unwrap();
        assert_eq!(znormalize(&m).unwrap().data(), &[-1.0, 1.0]);
        assert!(matches!(
            znormalize(&ScalarMap::filled(3, 3, 2.0).unwrap()),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn znormalize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ScalarMap::from_fn(40, 30, |_, _| rng.random_range(0.0..255.0)).unwrap();
        let z = znormalize(&m).unwrap();
        let n = z.data().len() as f64;
        let mean = z.data().iter().sum::<f64>() / n;
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ab_reference_colors() {
        let white = ab(255.0, 255.0);
        assert!(white.a.abs() < 0.05 && white.b.abs() < 0.05, "{white:?}");
        assert_eq!(ab(0.0, 0.0), FeaturePoint::new(0.0, 0.0));
        let green = ab(255.0, 0.0);
        assert_abs_diff_eq!(green.a, -86.18, epsilon = 0.01);
        assert_abs_diff_eq!(green.b, 83.18, epsilon = 0.01);
        let lab = srgb_to_lab([0.0, 255.0, 0.0]);
        assert_abs_diff_eq!(lab[0], 87.735, epsilon = 0.01);
    }

    #[test]
    fn gray_is_achromatic() {
        for v in [0.0, 64.0, 128.0, 255.0] {
            let p = ab(v, v);
            assert!(p.a.abs() < 0.05 && p.b.abs() < 0.05, "{v}: {p:?}");
        }
    }

    #[test]
    fn flatness_pushes_toward_magenta() {
        for y in [64.0, 128.0, 192.0] {
            let a: Vec<f64> = [0.0, 64.0, 128.0, 192.0, 255.0].iter().map(|&l| ab(y, l).a).collect();
            assert!(a.windows(2).all(|w| w[1] > w[0]), "Y={y}: {a:?}");
        }
    }

    #[test]
    fn ab_rejects_bad_input() {
        assert!(matches!(yl_to_ab(&one(256.0), &one(0.0)), Err(Error::Range { .. })));
        assert!(matches!(yl_to_ab(&one(10.0), &one(-1.0)), Err(Error::Range { .. })));
        let wide = ScalarMap::filled(2, 1, 0.0).unwrap();
        assert!(matches!(yl_to_ab(&one(0.0), &wide), Err(Error::Size(_))));
    }

    #[test]
    fn features_cover_every_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = ScalarMap::from_fn(13, 7, |_, _| rng.random_range(0.0..255.0)).unwrap();
        let l = ScalarMap::from_fn(13, 7, |x, _| x as f64).unwrap();
        for variant in [Variant::Ab, Variant::Zn] {
            let cloud = build_features(&y, &l, variant).unwrap();
            assert_eq!(cloud.points().len(), 13 * 7);
            assert_eq!(cloud.pixel_of(cloud.index_of(5, 4)), (5, 4));
        }
        let zn = build_features(&y, &l, Variant::Zn).unwrap();
        let n = zn.points().len() as f64;
        let ca = zn.points().iter().map(|p| p.a).sum::<f64>() / n;
        let cb = zn.points().iter().map(|p| p.b).sum::<f64>() / n;
        assert!(ca.abs() < 1e-9 && cb.abs() < 1e-9);
    }

    #[test]
    fn ab_ignores_affine_prescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = ScalarMap::from_fn(16, 16, |_, _| rng.random_range(10.0..200.0)).unwrap();
        let l = ScalarMap::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let base = build_features(&y, &l, Variant::Ab).unwrap();
        let y2 = ScalarMap::new(16, 16, y.data().iter().map(|v| 0.5 * v + 3.0).collect()).unwrap();
        let l2 = ScalarMap::new(16, 16, l.data().iter().map(|v| 40.0 * v + 7.0).collect()).unwrap();
        let scaled = build_features(&y2, &l2, Variant::Ab).unwrap();
        for (p, q) in base.points().iter().zip(scaled.points()) {
            assert_abs_diff_eq!(p.a, q.a, epsilon = 1e-9);
            assert_abs_diff_eq!(p.b, q.b, epsilon = 1e-9);
        }
    }

    #[test]
    fn ab_separates_two_region_phantom() {
        // Left half flat and bright, right half dark and textured.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h) = (64, 32);
        let y = ScalarMap::from_fn(w, h, |x, _| if x < w / 2 { 200.0 } else { rng.random_range(40.0..120.0) }).unwrap();
        let l = ScalarMap::from_fn(w, h, |x, _| if x < w / 2 { 0.0 } else { rng.random_range(0.6..0.9) }).unwrap();
        let cloud = build_features(&y, &l, Variant::Ab).unwrap();
        let split = |left: bool| -> Vec<FeaturePoint> {
            cloud
                .points()
                .iter()
                .enumerate()
                .filter(|(i, _)| (cloud.pixel_of(*i).0 < w / 2) == left)
                .map(|(_, p)| *p)
                .collect()
        };
        let centroid = |pts: &[FeaturePoint]| {
            let n = pts.len() as f64;
            FeaturePoint::new(pts.iter().map(|p| p.a).sum::<f64>() / n, pts.iter().map(|p| p.b).sum::<f64>() / n)
        };
        let spread = |pts: &[FeaturePoint], c: FeaturePoint| {
            pts.iter().map(|p| p.dist2(&c).sqrt()).sum::<f64>() / pts.len() as f64
        };
        let (skin, lesion) = (split(true), split(false));
        let (cs, cl) = (centroid(&skin), centroid(&lesion));
        let inter = cs.dist2(&cl).sqrt();
        let intra = 0.5 * (spread(&skin, cs) + spread(&lesion, cl));
        assert!(inter > 4.0 * intra, "inter {inter} intra {intra}");
        // Skin sits on the green side, lesion on the magenta side.
        assert!(cs.a < 0.0 && cl.a > 0.0);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("ab".parse::<Variant>().unwrap(), Variant::Ab);
        assert_eq!("zn".parse::<Variant>().unwrap(), Variant::Zn);
        assert!("lab".parse::<Variant>().is_err());
        assert_eq!(Variant::default().to_string(), "ab");
    }
}
