//! Dataset manifest: slides, annotation regions, and patch records.
//!
//! The manifest is a JSON file with a small header (patch size,
//! magnification), a `slides` array and a `patches` array. Patches carry only
//! their top-left corner; the square extent comes from the header. Geometry
//! lives in level-0 integer pixel space; any magnification reconciliation is
//! the manifest producer's job.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATCH_SIZE: u32 = 256;

/// Axis-aligned rectangle with exclusive upper corner, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl Rect {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Rect {
        Rect { x1, y1, x2, y2 }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn area(&self) -> i64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({},{}),({},{}))", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Patch partition per the three-way decomposition: tumor patches of
/// cancerous slides (A), benign patches of cancerous slides (B), patches of
/// benign slides (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    A,
    B,
    C,
    Unlabeled,
}

impl Partition {
    /// Instance-level label y_p: A maps to 1, B and C to 0.
    pub fn patch_label(self) -> Option<u8> {
        match self {
            Partition::A => Some(1),
            Partition::B | Partition::C => Some(0),
            Partition::Unlabeled => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::A => "A",
            Partition::B => "B",
            Partition::C => "C",
            Partition::Unlabeled => "Unlabeled",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Partition> {
        match s {
            "A" => Ok(Partition::A),
            "B" => Ok(Partition::B),
            "C" => Ok(Partition::C),
            "Unlabeled" => Ok(Partition::Unlabeled),
            other => Err(Error::Data(format!("unknown partition {other:?}"))),
        }
    }
}

/// Tumor region annotation. The polygon is stored verbatim; labeling uses
/// only its tight axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRegion {
    pub polygon: Vec<(i64, i64)>,
    pub bbox: Rect,
}

impl AnnotationRegion {
    pub fn from_polygon(polygon: Vec<(i64, i64)>) -> Result<AnnotationRegion> {
        let bbox = bbox_of_polygon(&polygon)?;
        if !bbox.is_well_formed() {
            return Err(Error::Geometry(format!(
                "degenerate polygon: bounding box {bbox} has no area"
            )));
        }
        Ok(AnnotationRegion { polygon, bbox })
    }
}

/// Tight min/max envelope of a polygon. Requires at least 3 vertices.
pub fn bbox_of_polygon(polygon: &[(i64, i64)]) -> Result<Rect> {
    if polygon.len() < 3 {
        return Err(Error::Geometry(format!(
            "degenerate polygon: {} vertices, need at least 3",
            polygon.len()
        )));
    }
    let mut x1 = i64::MAX;
    let mut y1 = i64::MAX;
    let mut x2 = i64::MIN;
    let mut y2 = i64::MIN;
    for &(x, y) in polygon {
        x1 = x1.min(x);
        y1 = y1.min(y);
        x2 = x2.max(x);
        y2 = y2.max(y);
    }
    Ok(Rect::new(x1, y1, x2, y2))
}

/// One whole-slide image: binary label plus annotated tumor regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRecord {
    pub slide_id: String,
    /// 0 = benign, 1 = cancerous.
    pub image_label: u8,
    pub width_px: i64,
    pub height_px: i64,
    pub annotations: Vec<AnnotationRegion>,
}

/// One image tile. `rect` is derived from the manifest header's patch size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    pub patch_id: u64,
    pub slide_id: String,
    pub rect: Rect,
    pub partition: Partition,
}

impl PatchRecord {
    pub fn patch_label(&self) -> Option<u8> {
        self.partition.patch_label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub patch_size: u32,
    pub magnification: f64,
    pub slides: Vec<SlideRecord>,
    pub patches: Vec<PatchRecord>,
}

impl Manifest {
    pub fn slide_map(&self) -> BTreeMap<&str, &SlideRecord> {
        self.slides.iter().map(|s| (s.slide_id.as_str(), s)).collect()
    }

    /// Structural validation shared by the loader and the synthetic
    /// generator: unique ids, label/annotation consistency, slide extents,
    /// referential integrity, and patch-in-bounds.
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Data("patch_size must be positive".into()));
        }
        let ps = i64::from(self.patch_size);

        let mut slide_ids = BTreeSet::new();
        for slide in &self.slides {
            if !slide_ids.insert(slide.slide_id.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate slide_id {:?}",
                    slide.slide_id
                )));
            }
            if slide.image_label > 1 {
                return Err(Error::Data(format!(
                    "slide {:?}: image_label must be 0 or 1, got {}",
                    slide.slide_id, slide.image_label
                )));
            }
            if slide.width_px < ps || slide.height_px < ps {
                return Err(Error::Data(format!(
                    "slide {:?}: extent {}x{} smaller than patch size {}",
                    slide.slide_id, slide.width_px, slide.height_px, self.patch_size
                )));
            }
            if slide.image_label == 0 && !slide.annotations.is_empty() {
                return Err(Error::Data(format!(
                    "slide {:?}: benign slide carries {} annotations",
                    slide.slide_id,
                    slide.annotations.len()
                )));
            }
            for region in &slide.annotations {
                let bbox = bbox_of_polygon(&region.polygon)?;
                if bbox != region.bbox || !bbox.is_well_formed() {
                    return Err(Error::Geometry(format!(
                        "slide {:?}: annotation bbox {} is not the tight envelope of its polygon",
                        slide.slide_id, region.bbox
                    )));
                }
            }
        }

        let extents: BTreeMap<&str, (i64, i64)> = self
            .slides
            .iter()
            .map(|s| (s.slide_id.as_str(), (s.width_px, s.height_px)))
            .collect();

        let mut patch_ids = BTreeSet::new();
        for patch in &self.patches {
            if !patch_ids.insert(patch.patch_id) {
                return Err(Error::Data(format!("duplicate patch_id {}", patch.patch_id)));
            }
            let Some(&(w, h)) = extents.get(patch.slide_id.as_str()) else {
                return Err(Error::ReferentialIntegrity(format!(
                    "patch {} references unknown slide {:?}",
                    patch.patch_id, patch.slide_id
                )));
            };
            let r = patch.rect;
            if r.x2 - r.x1 != ps || r.y2 - r.y1 != ps {
                return Err(Error::Geometry(format!(
                    "patch {}: rect {} is not a {}px square",
                    patch.patch_id, r, self.patch_size
                )));
            }
            if r.x1 < 0 || r.y1 < 0 || r.x2 > w || r.y2 > h {
                return Err(Error::Geometry(format!(
                    "patch {}: rect {} lies outside slide {:?} bounds {}x{}",
                    patch.patch_id, r, patch.slide_id, w, h
                )));
            }
        }
        Ok(())
    }
}

// On-disk schema. Kept separate from the domain types so derived fields
// (annotation bbox, patch rect) never appear in the file.

#[derive(Serialize, Deserialize)]
struct RawManifest {
    patch_size: u32,
    magnification: f64,
    slides: Vec<RawSlide>,
    patches: Vec<RawPatch>,
}

#[derive(Serialize, Deserialize)]
struct RawSlide {
    slide_id: String,
    label: u8,
    width: i64,
    height: i64,
    #[serde(default)]
    annotations: Vec<Vec<(i64, i64)>>,
}

#[derive(Serialize, Deserialize)]
struct RawPatch {
    patch_id: u64,
    slide_id: String,
    p1: i64,
    q1: i64,
}

/// Parse and validate a manifest file. All patches come back `Unlabeled`;
/// partition assignment is a separate labeling pass.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, format!("line {}", e.line()), e.to_string()))?;

    let ps = i64::from(raw.patch_size);
    let mut slides = Vec::with_capacity(raw.slides.len());
    for (idx, rs) in raw.slides.into_iter().enumerate() {
        let mut annotations = Vec::with_capacity(rs.annotations.len());
        for polygon in rs.annotations {
            let region = AnnotationRegion::from_polygon(polygon)
                .map_err(|e| Error::parse(path, format!("slides[{idx}]"), e.to_string()))?;
            annotations.push(region);
        }
        slides.push(SlideRecord {
            slide_id: rs.slide_id,
            image_label: rs.label,
            width_px: rs.width,
            height_px: rs.height,
            annotations,
        });
    }

    let patches = raw
        .patches
        .into_iter()
        .map(|rp| PatchRecord {
            patch_id: rp.patch_id,
            slide_id: rp.slide_id,
            rect: Rect::new(rp.p1, rp.q1, rp.p1 + ps, rp.q1 + ps),
            partition: Partition::Unlabeled,
        })
        .collect();

    let manifest = Manifest {
        patch_size: raw.patch_size,
        magnification: raw.magnification,
        slides,
        patches,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let raw = RawManifest {
        patch_size: manifest.patch_size,
        magnification: manifest.magnification,
        slides: manifest
            .slides
            .iter()
            .map(|s| RawSlide {
                slide_id: s.slide_id.clone(),
                label: s.image_label,
                width: s.width_px,
                height: s.height_px,
                annotations: s.annotations.iter().map(|a| a.polygon.clone()).collect(),
            })
            .collect(),
        patches: manifest
            .patches
            .iter()
            .map(|p| RawPatch {
                patch_id: p.patch_id,
                slide_id: p.slide_id.clone(),
                p1: p.rect.x1,
                q1: p.rect.y1,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&raw)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
