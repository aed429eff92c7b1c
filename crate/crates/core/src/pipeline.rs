//! The end-to-end segmentation pipeline.
//!
//! luminance → LBP → flatness map → Gaussian smoothing → [0,255] stretch →
//! feature space → 2-means → darker cluster → largest component → hole fill.

use crate::clustering::{kmeans2, lesion_cluster_select, ClusterResult, KMeansConfig};
use crate::error::{Error, Result};
use crate::features::{build_features, FeatureCloud, Variant};
use crate::lbp::{flatness_map, lbp_map, LbpMap};
use crate::morphology::postprocess;
use crate::raster::{gaussian_smooth, rescale_minmax, to_luminance, BinaryMask, RasterImage, ScalarMap};

pub const DEFAULT_SIGMA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Gaussian sigma in pixels for the flatness map.
    pub sigma: f64,
    pub variant: Variant,
    pub kmeans: KMeansConfig,
    /// Largest-component selection and hole filling.
    pub postprocess: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            variant: Variant::Ab,
            kmeans: KMeansConfig::default(),
            postprocess: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        self.kmeans.validate()
    }
}

/// Every intermediate product of one pipeline run.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub luminance: ScalarMap,
    pub lbp: LbpMap,
    pub flatness: BinaryMask,
    /// Smoothed flatness stretched to [0,255].
    pub flatness_smooth: ScalarMap,
    pub features: FeatureCloud,
    pub clusters: ClusterResult,
    /// Darker cluster before cleanup.
    pub raw_mask: BinaryMask,
    pub mask: BinaryMask,
}

pub fn segment_image_detailed(img: &RasterImage, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let luminance = to_luminance(img)?;
    let lbp = lbp_map(&luminance)?;
    let flatness = flatness_map(&lbp);
    let flatness_smooth = rescale_minmax(&gaussian_smooth(&flatness.to_scalar(), cfg.sigma)?);
    let features = build_features(&luminance, &flatness_smooth, cfg.variant)?;
    let clusters = kmeans2(features.points(), &cfg.kmeans)?;
    let raw_mask = lesion_cluster_select(&clusters, &luminance, &flatness_smooth)?;
    let mask = if cfg.postprocess {
        postprocess(&raw_mask)?
    } else {
        raw_mask.clone()
    };
    Ok(Segmentation {
        luminance,
        lbp,
        flatness,
        flatness_smooth,
        features,
        clusters,
        raw_mask,
        mask,
    })
}

/// Lesion mask of an RGB image. Images without usable structure fail with an
/// error for which [`Error::is_unsegmentable`] holds.
pub fn segment_image(img: &RasterImage, cfg: &PipelineConfig) -> Result<BinaryMask> {
    segment_image_detailed(img, cfg).map(|s| s.mask)
}

/// The input image with the mask contour drawn in red.
pub fn overlay(img: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::Size(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut rgb = img.to_rgb_image();
    for (x, y) in mask.boundary() {
        rgb.put_pixel(x as u32, y as u32, image::Rgb([255, 0, 0]));
    }
    let (w, h) = rgb.dimensions();
    RasterImage::new(w as usize, h as usize, 3, rgb.into_raw())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{border_error, fpr, tdr};
    use crate::synthetic::Phantom;

    fn phantom(seed: u64) -> (RasterImage, BinaryMask) {
        let p = Phantom {
            width: 128,
            height: 128,
            radius: 32.0,
            ..Default::default()
        };
        (p.render(seed), p.truth())
    }

    #[test]
    fn small_phantom_recovers_disk() {
        let (img, gt) = phantom(1);
        let cfg = PipelineConfig {
            sigma: 4.0,
            ..Default::default()
        };
        let mask = segment_image(&img, &cfg).unwrap();
        assert!(border_error(&mask, &gt).unwrap() <= 10.0);
        assert!(tdr(&mask, &gt).unwrap() >= 90.0);
        assert!(fpr(&mask, &gt).unwrap() <= 5.0);
    }

    #[test]
    fn zn_variant_runs() {
        let (img, gt) = phantom(2);
        let cfg = PipelineConfig {
            sigma: 4.0,
            variant: Variant::Zn,
            ..Default::default()
        };
        let mask = segment_image(&img, &cfg).unwrap();
        assert!(tdr(&mask, &gt).unwrap() >= 80.0);
    }

    #[test]
    fn constant_image_is_unsegmentable() {
        let img = RasterImage::from_fn_rgb(32, 32, |_, _| [90, 120, 30]).unwrap();
        for variant in [Variant::Ab, Variant::Zn] {
            let cfg = PipelineConfig {
                variant,
                ..Default::default()
            };
            let err = segment_image(&img, &cfg).unwrap_err();
            assert!(err.is_unsegmentable(), "{err}");
        }
    }

    #[test]
    fn segmentation_is_deterministic() {
        let (img, _) = phantom(3);
        let cfg = PipelineConfig::default();
        assert_eq!(segment_image(&img, &cfg).unwrap(), segment_image(&img, &cfg).unwrap());
    }

    #[test]
    fn no_postprocess_returns_raw_cluster() {
        let (img, _) = phantom(4);
        let cfg = PipelineConfig {
            postprocess: false,
            ..Default::default()
        };
        let s = segment_image_detailed(&img, &cfg).unwrap();
        assert_eq!(s.mask, s.raw_mask);
    }

    #[test]
    fn overlay_marks_contour() {
        let (img, gt) = phantom(5);
        let o = overlay(&img, &gt).unwrap();
        let (x, y) = gt.boundary()[0];
        assert_eq!(o.pixel(x, y), &[255, 0, 0]);
        assert_eq!(o.pixel(0, 0), img.pixel(0, 0));
    }

    #[test]
    fn rejects_bad_config() {
        let (img, _) = phantom(6);
        let cfg = PipelineConfig {
            sigma: -1.0,
            ..Default::default()
        };
        assert!(matches!(segment_image(&img, &cfg), Err(Error::InvalidParameter(_))));
    }
}
