//! Lesion segmentation for dermoscopic images by clustering local binary
//! pattern texture together with luminance.
//!
//! Flat skin produces LBP codes with at most one brighter neighbor; lesions
//! do not. The density of the remaining "textured" pixels, paired with
//! luminance and mapped into a*b* chroma, separates into two clusters with
//! 2-means, and the darker cluster is taken as the lesion.
//!
//! ```no_run
//! use lbpseg::{segment_image, PipelineConfig, RasterImage};
//!
//! let img = RasterImage::open_rgb("IMD002.bmp")?;
//! let mask = segment_image(&img, &PipelineConfig::default())?;
//! mask.save_png("IMD002_mask.png")?;
//! # Ok::<(), lbpseg::Error>(())
//! ```

pub mod clustering;
pub mod error;
pub mod features;
pub mod harness;
pub mod lbp;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod synthetic;

pub use clustering::{kmeans2, lesion_cluster_select, ClusterResult, KMeansConfig};
pub use error::{Error, Result};
pub use features::{build_features, yl_to_ab, znormalize, FeatureCloud, FeaturePoint, Variant};
pub use harness::{apply_exclusions, evaluate_dataset, load_manifest, DatasetRecord, Evaluation};
pub use lbp::{flatness_map, lbp_code, lbp_map, presence_analysis, ri_class, transition_count, ClassPresence, LbpMap};
pub use metrics::{border_error, fpr, g_perp, group_by_class, summarize, tdr, LesionClass, MetricsRecord, SummaryStats};
pub use morphology::{fill_holes, keep_principal_component};
pub use pipeline::{overlay, segment_image, segment_image_detailed, PipelineConfig, Segmentation};
pub use raster::{gaussian_smooth, rescale_minmax, to_luminance, BinaryMask, RasterImage, ScalarMap};
