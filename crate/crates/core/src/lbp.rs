//! 3x3 local binary patterns, their rotation-invariant classes, and the
//! per-class lesion/skin presence analysis.
//!
//! Neighbors are visited circularly starting east and turning
//! counter-clockwise, with image rows growing downward:
//!
//! ```text
//!   p3 p2 p1
//!   p4 c  p0
//!   p5 p6 p7
//! ```
//!
//! Bit `p` of a code is set iff neighbor `p` is strictly greater than the
//! center.

use std::io::Write;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ScalarMap};

/// (dx, dy) of neighbor p = 0..8.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// LBP code of a center sample against its 8 circularly ordered neighbors.
#[inline]
pub fn lbp_code(center: f64, neighbors: &[f64; 8]) -> u8 {
    neighbors
        .iter()
        .enumerate()
        .fold(0u8, |code, (p, &v)| if v > center { code | (1 << p) } else { code })
}

fn class_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u8; 256];
        for (code, slot) in t.iter_mut().enumerate() {
            *slot = (0..8).map(|k| (code as u8).rotate_right(k)).min().unwrap();
        }
        t
    })
}

/// Rotation-invariant representative: the smallest of the 8 circular
/// rotations of `code`.
#[inline]
pub fn ri_class(code: u8) -> u8 {
    class_table()[code as usize]
}

/// Number of circular 0/1 transitions in the 8-bit sequence.
#[inline]
pub fn transition_count(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Uniform patterns have at most two circular transitions.
#[inline]
pub fn is_uniform(code: u8) -> bool {
    transition_count(code) <= 2
}

/// Per-pixel LBP codes and their rotation-invariant classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LbpMap {
    width: usize,
    height: usize,
    codes: Vec<u8>,
    class_ids: Vec<u8>,
}

impl LbpMap {
    pub fn from_codes(width: usize, height: usize, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::Size(format!(
                "lbp map {width}x{height} needs {} codes, got {}",
                width * height,
                codes.len()
            )));
        }
        let class_ids = codes.iter().map(|&c| ri_class(c)).collect();
        Ok(Self {
            width,
            height,
            codes,
            class_ids,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn class_ids(&self) -> &[u8] {
        &self.class_ids
    }

    pub fn code(&self, x: usize, y: usize) -> u8 {
        self.codes[y * self.width + x]
    }
}

/// LBP code of every pixel, with replicate padding at the borders.
pub fn lbp_map(y: &ScalarMap) -> Result<LbpMap> {
    let (w, h) = (y.width(), y.height());
    if w < 3 || h < 3 {
        return Err(Error::Size(format!("lbp needs at least 3x3, got {w}x{h}")));
    }
    let mut codes = Vec::with_capacity(w * h);
    let mut nb = [0.0; 8];
    for row in 0..h {
        let interior_row = row > 0 && row + 1 < h;
        for col in 0..w {
            let c = y.get(col, row);
            if interior_row && col > 0 && col + 1 < w {
                for (slot, &(dx, dy)) in nb.iter_mut().zip(&NEIGHBOR_OFFSETS) {
                    *slot = y.get((col as isize + dx) as usize, (row as isize + dy) as usize);
                }
            } else {
                for (slot, &(dx, dy)) in nb.iter_mut().zip(&NEIGHBOR_OFFSETS) {
                    *slot = y.get_clamped(col as isize + dx, row as isize + dy);
                }
            }
            codes.push(lbp_code(c, &nb));
        }
    }
    LbpMap::from_codes(w, h, codes)
}

/// L = 0 where the pixel's class is 0 or 1 (flat patch or a single brighter
/// neighbor), L = 1 elsewhere.
pub fn flatness_map(lbp: &LbpMap) -> BinaryMask {
    let bits = lbp.class_ids.iter().map(|&c| c > 1).collect();
    BinaryMask::new(lbp.width, lbp.height, bits).expect("lbp map dimensions are valid")
}

/// Share of the image taken by one rotation-invariant class inside and
/// outside the ground-truth lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPresence {
    pub class_id: u8,
    /// Class pixels inside the lesion over all image pixels.
    pub frac_inside: f64,
    /// Class pixels outside the lesion over all image pixels.
    pub frac_outside: f64,
    /// Perpendicular distance to the area-proportional reference line;
    /// positive means skin-dominant.
    pub signed_distance: f64,
}

/// Presence of every class observed in the image, sorted by class id.
///
/// The reference line passes through the origin of the
/// (inside, outside) plane with slope `area(skin) / area(lesion)`, so a
/// class spread over the image in proportion to area lies on it.
pub fn presence_analysis(lbp: &LbpMap, gt: &BinaryMask) -> Result<Vec<ClassPresence>> {
    if lbp.width != gt.width() || lbp.height != gt.height() {
        return Err(Error::Size(format!(
            "lbp map {}x{} vs ground truth {}x{}",
            lbp.width,
            lbp.height,
            gt.width(),
            gt.height()
        )));
    }
    let total = lbp.class_ids.len();
    let lesion = gt.area();
    if lesion == 0 || lesion == total {
        return Err(Error::DegenerateReference);
    }

    let mut inside = [0usize; 256];
    let mut outside = [0usize; 256];
    for (&class, &in_gt) in lbp.class_ids.iter().zip(gt.bits()) {
        if in_gt {
            inside[class as usize] += 1;
        } else {
            outside[class as usize] += 1;
        }
    }

    let slope = (total - lesion) as f64 / lesion as f64;
    let norm = (1.0 + slope * slope).sqrt();
    let n = total as f64;
    Ok((0..256)
        .filter(|&c| inside[c] + outside[c] > 0)
        .map(|c| {
            let frac_inside = inside[c] as f64 / n;
            let frac_outside = outside[c] as f64 / n;
            ClassPresence {
                class_id: c as u8,
                frac_inside,
                frac_outside,
                signed_distance: (frac_outside - slope * frac_inside) / norm,
            }
        })
        .collect())
}

/// Writes presence rows as `class_id,frac_inside,frac_outside,signed_distance`.
pub fn write_presence_csv<W: Write>(rows: &[ClassPresence], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["class_id", "frac_inside", "frac_outside", "signed_distance"])?;
    for r in rows {
        wtr.write_record([
            r.class_id.to_string(),
            format!("{:.9}", r.frac_inside),
            format!("{:.9}", r.frac_outside),
            format!("{:.9}", r.signed_distance),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
