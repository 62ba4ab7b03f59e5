//! COCO-format annotation files: `images`, `annotations` with `[x, y, w, h]`
//! boxes, and `categories`. Category ids are used directly as class ids.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use asahi_core::{Annotation, BBox, ImageDims};

#[derive(Debug, thiserror::Error)]
pub enum CocoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("annotation {annotation} references missing image {image}")]
    MissingImage { annotation: u64, image: u64 },
    #[error("annotation {annotation} has an invalid box {bbox:?}")]
    BadBox { annotation: u64, bbox: [f64; 4] },
    #[error("image {0} has zero width or height")]
    BadImage(u64),
    #[error("duplicate image id {0}")]
    DuplicateImage(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    /// Set on records of a sliced dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_id: Option<u32>,
    /// Source-frame window `[x1, y1, x2, y2]`; absent for full-image records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<[f64; 2]>,
}

impl CocoImage {
    pub fn new(id: u64, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id,
            file_name: file_name.into(),
            width,
            height,
            source_image_id: None,
            patch_id: None,
            window: None,
            scale: None,
        }
    }

    pub fn dims(&self) -> Option<ImageDims> {
        ImageDims::new(self.width, self.height).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, width, height]`.
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<f64>,
}

impl CocoAnnotation {
    pub fn from_box(id: u64, image_id: u64, category_id: u32, b: &BBox) -> Self {
        Self {
            id,
            image_id,
            category_id,
            bbox: [b.x1(), b.y1(), b.width(), b.height()],
            area: b.area(),
            iscrowd: 0,
            visibility: None,
        }
    }

    pub fn to_box(&self) -> Option<BBox> {
        let [x, y, w, h] = self.bbox;
        BBox::from_xywh(x, y, w, h).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

impl CocoDataset {
    pub fn load(path: &Path) -> Result<Self, CocoError> {
        let text = fs::read_to_string(path).map_err(|source| CocoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CocoError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CocoError> {
        let text = serde_json::to_string_pretty(self).expect("dataset serializes");
        fs::write(path, text + "\n").map_err(|source| CocoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn categories_for(class_count: u32) -> Vec<CocoCategory> {
        (0..class_count)
            .map(|id| CocoCategory {
                id,
                name: format!("class{id}"),
            })
            .collect()
    }

    /// Image dimensions by id.
    pub fn dims(&self) -> Result<BTreeMap<u64, ImageDims>, CocoError> {
        let mut out = BTreeMap::new();
        for im in &self.images {
            let d = im.dims().ok_or(CocoError::BadImage(im.id))?;
            if out.insert(im.id, d).is_some() {
                return Err(CocoError::DuplicateImage(im.id));
            }
        }
        Ok(out)
    }

    /// Annotations grouped by image, with an entry (possibly empty) for
    /// every image.
    pub fn ground_truth(&self) -> Result<BTreeMap<u64, Vec<Annotation>>, CocoError> {
        let mut out: BTreeMap<u64, Vec<Annotation>> =
            self.dims()?.keys().map(|&id| (id, Vec::new())).collect();
        for a in &self.annotations {
            let bbox = a.to_box().ok_or(CocoError::BadBox {
                annotation: a.id,
                bbox: a.bbox,
            })?;
            out.get_mut(&a.image_id)
                .ok_or(CocoError::MissingImage {
                    annotation: a.id,
                    image: a.image_id,
                })?
                .push(Annotation {
                    class_id: a.category_id,
                    bbox,
                });
        }
        Ok(out)
    }
}
