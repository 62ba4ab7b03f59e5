//! Writing and re-checking a fine-tuning set on disk.
//!
//! Layout under the output directory:
//! - `manifest.json`: COCO-format, one image entry per record;
//! - `index.txt`: one line per record,
//!   `record_id image_id patch_id kind x1 y1 x2 y2 width height file`;
//! - `patches/`: one P6 PPM per record.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asahi_core::saf::{build_records, check_annotations, SafError, SafRecord, SafSource, ViolationKind};
use asahi_core::slicing::{extract_patch, SlicingError};
use asahi_core::{Raster, SliceWindow, Slicer};

use crate::coco::{CocoAnnotation, CocoDataset, CocoError, CocoImage};
use crate::ppm;

pub const MANIFEST: &str = "manifest.json";
pub const INDEX: &str = "index.txt";
pub const PATCH_DIR: &str = "patches";

#[derive(Debug, thiserror::Error)]
pub enum SafIoError {
    #[error(transparent)]
    Coco(#[from] CocoError),
    #[error(transparent)]
    Saf(#[from] SafError),
    #[error(transparent)]
    Slicing(#[from] SlicingError),
    #[error("image {image_id}: {message}")]
    Image { image_id: u64, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SafIoError + '_ {
    move |source| SafIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafOptions {
    pub slicer: Slicer,
    pub min_visibility: f64,
    pub target: u32,
}

/// One written record: the in-memory record plus where its raster went.
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenRecord {
    pub record_id: u64,
    pub raster_path: String,
    pub record: SafRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SafSummary {
    pub images: usize,
    pub records: Vec<WrittenRecord>,
    pub annotations: usize,
}

/// Builds the set for every image in `dataset`, in ascending image id order.
/// `load` supplies each source raster.
pub fn build_saf<F>(
    dataset: &CocoDataset,
    load: F,
    out_dir: &Path,
    opts: &SafOptions,
) -> Result<SafSummary, SafIoError>
where
    F: Fn(&CocoImage) -> Result<Raster, SafIoError>,
{
    let dims = dataset.dims()?;
    let gts = dataset.ground_truth()?;
    let patch_dir = out_dir.join(PATCH_DIR);
    fs::create_dir_all(&patch_dir).map_err(io_err(&patch_dir))?;

    let mut images: Vec<&CocoImage> = dataset.images.iter().collect();
    images.sort_by_key(|i| i.id);

    let mut manifest = CocoDataset {
        categories: dataset.categories.clone(),
        ..CocoDataset::default()
    };
    let mut summary = SafSummary::default();
    let mut index = String::new();
    let mut next_ann = 1u64;

    for img in images {
        let d = dims[&img.id];
        let empty = Vec::new();
        let image_gts = gts.get(&img.id).unwrap_or(&empty);
        let records = build_records(img.id, d, image_gts, &opts.slicer, opts.min_visibility, opts.target)?;
        let raster = load(img)?;
        if raster.width() != d.width || raster.height() != d.height {
            return Err(SafIoError::Image {
                image_id: img.id,
                message: format!("raster is {}x{}, manifest says {d}", raster.width(), raster.height()),
            });
        }
        let full = SliceWindow {
            rect: d.frame(),
            designed: d.frame(),
            row: 0,
            col: 0,
        };
        for rec in records {
            let record_id = summary.records.len() as u64 + 1;
            let window = match rec.source {
                SafSource::Full => full,
                SafSource::Window(w) => w,
            };
            let patch = extract_patch(&raster, &window, opts.target)?;
            let rel = format!("{PATCH_DIR}/{:06}_{:03}.ppm", img.id, rec.patch_id);
            let path = out_dir.join(&rel);
            ppm::save_ppm(&patch.raster, &path).map_err(io_err(&path))?;

            let mut entry = CocoImage::new(record_id, rel.clone(), rec.width, rec.height);
            entry.source_image_id = Some(img.id);
            entry.patch_id = Some(rec.patch_id);
            entry.window = match rec.source {
                SafSource::Full => None,
                SafSource::Window(w) => Some(w.rect.corners()),
            };
            entry.scale = Some([rec.scale_x, rec.scale_y]);
            manifest.images.push(entry);
            for a in &rec.annotations {
                let mut ca = CocoAnnotation::from_box(next_ann, record_id, a.class_id, &a.bbox);
                ca.visibility = Some(a.visibility);
                manifest.annotations.push(ca);
                next_ann += 1;
            }
            summary.annotations += rec.annotations.len();

            let [x1, y1, x2, y2] = window.rect.corners();
            let kind = match rec.source {
                SafSource::Full => "full",
                SafSource::Window(_) => "slice",
            };
            index.push_str(&format!(
                "{record_id} {} {} {kind} {x1} {y1} {x2} {y2} {} {} {rel}\n",
                img.id, rec.patch_id, rec.width, rec.height
            ));
            summary.records.push(WrittenRecord {
                record_id,
                raster_path: rel,
                record: rec,
            });
        }
        summary.images += 1;
    }

    manifest.save(&out_dir.join(MANIFEST))?;
    let index_path = out_dir.join(INDEX);
    let mut f = fs::File::create(&index_path).map_err(io_err(&index_path))?;
    f.write_all(index.as_bytes()).map_err(io_err(&index_path))?;
    Ok(summary)
}

/// A raster loader reading `file_name` relative to `dir`.
pub fn dir_loader(dir: PathBuf) -> impl Fn(&CocoImage) -> Result<Raster, SafIoError> {
    move |img| {
        let path = dir.join(&img.file_name);
        ppm::load_ppm(&path).map_err(|e| SafIoError::Image {
            image_id: img.id,
            message: format!("{}: {e}", path.display()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub record_id: u64,
    pub file_name: String,
    /// Absent for record-level problems.
    pub annotation_id: Option<u64>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} record {} ({})", self.kind, self.record_id, self.file_name)?;
        if let Some(a) = self.annotation_id {
            write!(f, " annotation {a}")?;
        }
        Ok(())
    }
}

/// Re-checks a written set: every raster present with the recorded size,
/// every box valid and inside its patch, every visibility in range.
pub fn verify_saf(out_dir: &Path, min_visibility: f64) -> Result<Vec<Violation>, SafIoError> {
    let manifest = CocoDataset::load(&out_dir.join(MANIFEST))?;
    let mut violations = Vec::new();
    for img in &manifest.images {
        let path = out_dir.join(&img.file_name);
        let present = match ppm::load_ppm(&path) {
            Ok(r) => r.width() == img.width && r.height() == img.height,
            Err(_) => false,
        };
        if !present {
            violations.push(Violation {
                record_id: img.id,
                file_name: img.file_name.clone(),
                annotation_id: None,
                kind: ViolationKind::MissingRaster,
            });
        }
        let anns: Vec<&CocoAnnotation> = manifest.annotations.iter().filter(|a| a.image_id == img.id).collect();
        let raw: Vec<([f64; 4], f64)> = anns
            .iter()
            .map(|a| {
                let [x, y, w, h] = a.bbox;
                ([x, y, x + w, y + h], a.visibility.unwrap_or(f64::NAN))
            })
            .collect();
        for (i, kind) in check_annotations(img.width, img.height, &raw, min_visibility) {
            violations.push(Violation {
                record_id: img.id,
                file_name: img.file_name.clone(),
                annotation_id: Some(anns[i].id),
                kind,
            });
        }
    }
    Ok(violations)
}
