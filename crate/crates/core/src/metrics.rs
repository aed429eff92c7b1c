//! Pixel agreement metrics between a segmentation and a ground truth, the
//! contour gradient metric, and dataset statistics.
//!
//! All pixel metrics are percentages.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{gaussian_smooth, BinaryMask, ScalarMap};

/// Gaussian sigma (pixels) applied to a mask before its gradient is used as
/// the contour normal.
pub const NORMAL_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LesionClass {
    /// Atypical nevus.
    AN,
    /// Common nevus.
    CN,
    /// Melanoma.
    M,
}

impl LesionClass {
    pub const ALL: [LesionClass; 3] = [LesionClass::AN, LesionClass::CN, LesionClass::M];
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LesionClass::AN => "AN",
            LesionClass::CN => "CN",
            LesionClass::M => "M",
        })
    }
}

impl FromStr for LesionClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "AN" => Ok(LesionClass::AN),
            "CN" => Ok(LesionClass::CN),
            "M" => Ok(LesionClass::M),
            other => Err(format!("unknown lesion class {other:?} (expected CN, AN or M)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Be,
    Tdr,
    Fpr,
    GPerp,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Be, Metric::Tdr, Metric::Fpr, Metric::GPerp];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Be => "be",
            Metric::Tdr => "tdr",
            Metric::Fpr => "fpr",
            Metric::GPerp => "g_perp",
        })
    }
}

/// Metrics of one segmented image.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub image_id: String,
    pub lesion_class: LesionClass,
    pub be: f64,
    pub tdr: f64,
    pub fpr: f64,
    /// `None` when the segmentation has no contour (it covers the image).
    pub g_perp: Option<f64>,
}

impl MetricsRecord {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Be => Some(self.be),
            Metric::Tdr => Some(self.tdr),
            Metric::Fpr => Some(self.fpr),
            Metric::GPerp => self.g_perp,
        }
    }
}

struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
    gt: usize,
    not_gt: usize,
}

fn confusion(sm: &BinaryMask, gt: &BinaryMask) -> Result<Confusion> {
    if !sm.same_dims(gt) {
        return Err(Error::Size(format!(
            "segmentation {}x{} vs ground truth {}x{}",
            sm.width(),
            sm.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        gt: 0,
        not_gt: 0,
    };
    for (&s, &g) in sm.bits().iter().zip(gt.bits()) {
        match (s, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
        if g {
            c.gt += 1;
        } else {
            c.not_gt += 1;
        }
    }
    Ok(c)
}

/// `area(SM xor GT) / area(GT) * 100`.
pub fn border_error(sm: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(sm, gt)?;
    if c.gt == 0 {
        return Err(Error::DegenerateGt("ground truth is empty"));
    }
    Ok((c.fp + c.fn_) as f64 / c.gt as f64 * 100.0)
}

/// True detection rate: share of ground-truth lesion pixels segmented.
pub fn tdr(sm: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(sm, gt)?;
    if c.gt == 0 {
        return Err(Error::DegenerateGt("ground truth is empty"));
    }
    Ok(c.tp as f64 / c.gt as f64 * 100.0)
}

/// False positive rate: share of ground-truth skin pixels segmented.
pub fn fpr(sm: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(sm, gt)?;
    if c.not_gt == 0 {
        return Err(Error::DegenerateGt("ground truth covers the whole image"));
    }
    Ok(c.fp as f64 / c.not_gt as f64 * 100.0)
}

/// Sobel derivatives divided by 8, replicate padding.
#[inline]
pub fn sobel(map: &ScalarMap, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as isize, y as isize);
    let v = |dx: isize, dy: isize| map.get_clamped(x + dx, y + dy);
    let gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
    let gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
    (gx / 8.0, gy / 8.0)
}

/// Mean luminance gradient across the mask contour.
///
/// At each contour pixel (foreground with a 4-neighbor in the background) the
/// luminance gradient is projected onto the contour normal, taken from the
/// gradient of the Gaussian-smoothed mask. Contour pixels where the smoothed
/// mask is locally flat have no normal and are skipped.
pub fn g_perp(mask: &BinaryMask, y: &ScalarMap) -> Result<f64> {
    if mask.width() != y.width() || mask.height() != y.height() {
        return Err(Error::Size(format!(
            "mask {}x{} vs luminance {}x{}",
            mask.width(),
            mask.height(),
            y.width(),
            y.height()
        )));
    }
    let boundary = mask.boundary();
    if boundary.is_empty() {
        return Err(Error::DegenerateMask);
    }
    let smooth = gaussian_smooth(&mask.to_scalar(), NORMAL_SIGMA)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(x, yy) in &boundary {
        let (mx, my) = sobel(&smooth, x, yy);
        let norm = mx.hypot(my);
        if norm < 1e-12 {
            continue;
        }
        // The mask falls off outward, so the outward normal is -grad.
        let (nx, ny) = (-mx / norm, -my / norm);
        let (gx, gy) = sobel(y, x, yy);
        sum += (gx * nx + gy * ny).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::DegenerateMask);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample (n - 1) standard deviation.
    pub std: f64,
    /// Coefficient of variation, `std / mean`.
    pub cv: f64,
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if mean == 0.0 {
        return Err(Error::UndefinedCv);
    }
    Ok(SummaryStats {
        mean,
        std,
        cv: std / mean,
    })
}

fn sorted_by_id(records: &[MetricsRecord]) -> Vec<&MetricsRecord> {
    let mut v: Vec<_> = records.iter().collect();
    v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    v
}

/// Statistics of one metric over all records, independent of input order.
pub fn summarize_metric(records: &[MetricsRecord], metric: Metric) -> Result<SummaryStats> {
    let values: Vec<f64> = sorted_by_id(records)
        .into_iter()
        .filter_map(|r| r.get(metric))
        .collect();
    summarize(&values)
}

pub type ClassTable = BTreeMap<(LesionClass, Metric), Result<SummaryStats>>;

/// Per (class, metric) statistics for every class present in `records`.
pub fn group_by_class(records: &[MetricsRecord]) -> ClassTable {
    let mut by_class: BTreeMap<LesionClass, Vec<MetricsRecord>> = BTreeMap::new();
    for r in records {
        by_class.entry(r.lesion_class).or_default().push(r.clone());
    }
    let mut out = BTreeMap::new();
    for (class, recs) in by_class {
        for metric in Metric::ALL {
            out.insert((class, metric), summarize_metric(&recs, metric));
        }
    }
    out
}
