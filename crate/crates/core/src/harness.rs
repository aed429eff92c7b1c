//! Dataset ingestion, batch evaluation and CSV reports.
//!
//! A manifest is a CSV file with the header
//! `image_id,image_path,mask_path,class`; paths are relative to the manifest.
//! Exclusion files list one image id per line (blank lines and `#` comments
//! are ignored).

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{
    border_error, fpr, g_perp, group_by_class, summarize_metric, tdr, LesionClass, Metric, MetricsRecord,
};
use crate::pipeline::{segment_image, PipelineConfig};
use crate::raster::{to_luminance, BinaryMask, RasterImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub lesion_class: LesionClass,
}

const MANIFEST_COLUMNS: [&str; 4] = ["image_id", "image_path", "mask_path", "class"];

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let manifest_err = |row: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        row,
        message,
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| manifest_err(0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| manifest_err(0, e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(manifest_err(0, "missing header row".into()));
    }
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| manifest_err(0, format!("missing column {name:?}")))?;
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| manifest_err(row_no, e.to_string()))?;
        let field = |k: usize| -> Result<&str> {
            match row.get(idx[k]) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(manifest_err(row_no, format!("empty {}", MANIFEST_COLUMNS[k]))),
            }
        };
        let image_id = field(0)?.to_string();
        if !seen.insert(image_id.clone()) {
            return Err(manifest_err(row_no, format!("duplicate image_id {image_id:?}")));
        }
        let image_path = base.join(field(1)?);
        let mask_path = base.join(field(2)?);
        let lesion_class = field(3)?
            .parse::<LesionClass>()
            .map_err(|e| manifest_err(row_no, e))?;
        for p in [&image_path, &mask_path] {
            if !p.is_file() {
                return Err(manifest_err(row_no, format!("unreadable file {}", p.display())));
            }
        }
        records.push(DatasetRecord {
            image_id,
            image_path,
            mask_path,
            lesion_class,
        });
    }
    if records.is_empty() {
        return Err(manifest_err(0, "no records".into()));
    }
    Ok(records)
}

/// Records left after exclusion plus the listed ids that matched nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusions {
    pub kept: Vec<DatasetRecord>,
    pub unknown_ids: Vec<String>,
}

pub fn read_exclusion_ids(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn exclude_ids(records: &[DatasetRecord], ids: &[String]) -> Exclusions {
    let drop: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let known: HashSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    Exclusions {
        kept: records
            .iter()
            .filter(|r| !drop.contains(r.image_id.as_str()))
            .cloned()
            .collect(),
        unknown_ids: ids
            .iter()
            .filter(|id| !known.contains(id.as_str()))
            .cloned()
            .collect(),
    }
}

pub fn apply_exclusions(records: &[DatasetRecord], exclusion_file: impl AsRef<Path>) -> Result<Exclusions> {
    Ok(exclude_ids(records, &read_exclusion_ids(exclusion_file)?))
}

/// An image that produced no metrics, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Where to write `<image_id>.png` masks, if anywhere.
    pub masks_dir: Option<PathBuf>,
}

/// Metrics for every segmented image and the failures, both sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<Failure>,
}

fn evaluate_one(rec: &DatasetRecord, cfg: &PipelineConfig, opts: &EvaluateOptions) -> Result<MetricsRecord> {
    let img = RasterImage::open_rgb(&rec.image_path)?;
    let gt = BinaryMask::open(&rec.mask_path)?;
    if img.width() != gt.width() || img.height() != gt.height() {
        return Err(Error::Size(format!(
            "image {}x{} vs ground truth {}x{}",
            img.width(),
            img.height(),
            gt.width(),
            gt.height()
        )));
    }
    let sm = segment_image(&img, cfg)?;
    if let Some(dir) = &opts.masks_dir {
        sm.save_png(dir.join(format!("{}.png", rec.image_id)))?;
    }
    let y = to_luminance(&img)?;
    Ok(MetricsRecord {
        image_id: rec.image_id.clone(),
        lesion_class: rec.lesion_class,
        be: border_error(&sm, &gt)?,
        tdr: tdr(&sm, &gt)?,
        fpr: fpr(&sm, &gt)?,
        g_perp: g_perp(&sm, &y).ok(),
    })
}

/// Segments and scores every record on the current rayon pool. A failing
/// image is listed in [`Evaluation::failures`] and does not stop the run;
/// the run fails only when no image could be scored.
pub fn evaluate_dataset(records: &[DatasetRecord], cfg: &PipelineConfig, opts: &EvaluateOptions) -> Result<Evaluation> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::InsufficientData(0));
    }
    if let Some(dir) = &opts.masks_dir {
        fs::create_dir_all(dir)?;
    }
    let outcomes: Vec<_> = records
        .par_iter()
        .map(|r| (r.image_id.clone(), evaluate_one(r, cfg, opts)))
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (image_id, outcome) in outcomes {
        match outcome {
            Ok(m) => ok.push(m),
            Err(e) => failures.push(Failure {
                image_id,
                reason: e.to_string(),
            }),
        }
    }
    if ok.is_empty() {
        return Err(Error::NothingSegmented(records.len()));
    }
    ok.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(Evaluation { records: ok, failures })
}

#[inline]
fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Per-image rows: `image_id,class,be,tdr,fpr,g_perp`.
pub fn write_report<W: Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["image_id", "class", "be", "tdr", "fpr", "g_perp"])?;
    for r in records {
        wtr.write_record([
            r.image_id.clone(),
            r.lesion_class.to_string(),
            num(r.be),
            num(r.tdr),
            num(r.fpr),
            r.g_perp.map(num).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One statistic of one metric over a group of images.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `complete` or `filtered`.
    pub subset: String,
    /// `ALL` or a lesion class.
    pub group: String,
    pub metric: Metric,
    /// `mean`, `std` or `cv`.
    pub statistic: &'static str,
    /// `Err` carries the reason the statistic is unavailable.
    pub value: std::result::Result<f64, String>,
}

type StatGetter = fn(&crate::metrics::SummaryStats) -> f64;

/// Overall and per-class statistics of `records` labelled with `subset`.
pub fn summary_rows(records: &[MetricsRecord], subset: &str) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut push = |group: String, metric: Metric, stats: &Result<crate::metrics::SummaryStats>| {
        let cells: [(&'static str, StatGetter); 3] = [("mean", |s| s.mean), ("std", |s| s.std), ("cv", |s| s.cv)];
        for (statistic, get) in cells {
            rows.push(SummaryRow {
                subset: subset.to_string(),
                group: group.clone(),
                metric,
                statistic,
                value: stats.as_ref().map(get).map_err(|e| e.to_string()),
            });
        }
    };
    for metric in Metric::ALL {
        push("ALL".into(), metric, &summarize_metric(records, metric));
    }
    for ((class, metric), stats) in &group_by_class(records) {
        push(class.to_string(), *metric, stats);
    }
    rows
}

/// Summary rows: `subset,class,metric,statistic,value,note`.
pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["subset", "class", "metric", "statistic", "value", "note"])?;
    for r in rows {
        let (value, note) = match &r.value {
            Ok(v) => (num(*v), String::new()),
            Err(e) => (String::new(), e.clone()),
        };
        wtr.write_record([
            r.subset.as_str(),
            r.group.as_str(),
            &r.metric.to_string(),
            r.statistic,
            &value,
            &note,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Failure rows: `image_id,reason`.
pub fn write_failures<W: Write>(failures: &[Failure], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["image_id", "reason"])?;
    for f in failures {
        wtr.write_record([&f.image_id, &f.reason])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `report.csv` → `report_<suffix>.csv` next to it.
pub fn sibling_path(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Files written by [`write_evaluation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub summary: PathBuf,
    pub unsegmentable: PathBuf,
}

/// Writes the per-image report, the summary (complete set, plus the
/// filtered subset when `excluded` is given) and the failure list.
pub fn write_evaluation(eval: &Evaluation, excluded: Option<&BTreeSet<String>>, report: &Path) -> Result<ReportFiles> {
    let files = ReportFiles {
        report: report.to_path_buf(),
        summary: sibling_path(report, "summary"),
        unsegmentable: sibling_path(report, "unsegmentable"),
    };
    write_report(&eval.records, fs::File::create(&files.report)?)?;
    let mut rows = summary_rows(&eval.records, "complete");
    if let Some(ids) = excluded {
        let filtered: Vec<MetricsRecord> = eval
            .records
            .iter()
            .filter(|r| !ids.contains(&r.image_id))
            .cloned()
            .collect();
        rows.extend(summary_rows(&filtered, "filtered"));
    }
    write_summary(&rows, fs::File::create(&files.summary)?)?;
    write_failures(&eval.failures, fs::File::create(&files.unsegmentable)?)?;
    Ok(files)
}
