//! Synthetic lesion phantoms with known ground truth: a flat bright
//! background with a dark, noise-textured blob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{BinaryMask, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phantom {
    pub width: usize,
    pub height: usize,
    /// Mean lesion radius in pixels.
    pub radius: f64,
    /// Radial modulation amplitude in pixels; 0 gives a disk.
    pub ragged_amplitude: f64,
    /// Lobes of the radial modulation.
    pub ragged_lobes: u32,
    /// Gray level of the background.
    pub background: u8,
    /// Inclusive range of the i.i.d. uniform lesion noise.
    pub lesion_range: (u8, u8),
}

impl Default for Phantom {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            radius: 64.0,
            ragged_amplitude: 0.0,
            ragged_lobes: 7,
            background: 200,
            lesion_range: (40, 120),
        }
    }
}

impl Phantom {
    fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Lesion radius along the direction of `(dx, dy)`.
    fn radius_at(&self, dx: f64, dy: f64) -> f64 {
        self.radius + self.ragged_amplitude * (self.ragged_lobes as f64 * dy.atan2(dx)).sin()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = self.center();
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (dx * dx + dy * dy).sqrt() <= self.radius_at(dx, dy)
    }

    /// The exact lesion support.
    pub fn truth(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.contains(x, y)).expect("non-empty phantom")
    }

    /// A smooth disk of the mean radius, the way a hand-drawn outline
    /// glosses over a ragged border.
    pub fn smooth_outline(&self) -> BinaryMask {
        let (cx, cy) = self.center();
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= self.radius * self.radius
        })
        .expect("non-empty phantom")
    }

    /// Gray RGB rendering with lesion noise drawn from `seed`.
    pub fn render(&self, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.lesion_range;
        RasterImage::from_fn_rgb(self.width, self.height, |x, y| {
            let v = if self.contains(x, y) {
                rng.random_range(lo..=hi)
            } else {
                self.background
            };
            [v, v, v]
        })
        .expect("non-empty phantom")
    }
}
