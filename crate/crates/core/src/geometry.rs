//! Partition assignment from rectangle overlap.
//!
//! A patch of a cancerous slide goes to set A when the largest fraction of
//! its area covered by any annotation bounding box reaches the policy
//! threshold, otherwise to set B; every patch of a benign slide goes to C.
//!
//! The printed overlap formula `(min(x2,p2)-max(x1,p1))*(min(y2,q2)-max(y1,q1))`
//! turns positive for disjoint rectangles when both factors are negative, so
//! the clamped variant declares overlap only when both factors are strictly
//! positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Partition, PatchRecord, Rect, SlideRecord};

/// Fraction of patch area that must be tumor-overlapped for set A.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverlapPolicy {
    pub threshold: f64,
}

impl OverlapPolicy {
    pub fn new(threshold: f64) -> Result<OverlapPolicy> {
        if !(0.0..=1.0).contains(&threshold) || !threshold.is_finite() {
            return Err(Error::Config(format!(
                "overlap threshold must lie in [0,1], got {threshold}"
            )));
        }
        Ok(OverlapPolicy { threshold })
    }
}

impl Default for OverlapPolicy {
    // The source method names a threshold but not its value; 0.25 is this
    // artifact's default and is configurable everywhere it is used.
    fn default() -> Self {
        OverlapPolicy { threshold: 0.25 }
    }
}

fn check_well_formed(r: &Rect, role: &str) -> Result<()> {
    if !r.is_well_formed() {
        return Err(Error::Geometry(format!("malformed {role} rectangle {r}")));
    }
    Ok(())
}

/// Signed overlap area exactly as printed: the product of both axis factors,
/// which can be positive for disjoint rectangles. Callers that want geometric
/// truth use [`clamped_overlap_area`].
pub fn overlap_area(bbox: &Rect, patch: &Rect) -> Result<i64> {
    check_well_formed(bbox, "bbox")?;
    check_well_formed(patch, "patch")?;
    let fx = bbox.x2.min(patch.x2) - bbox.x1.max(patch.x1);
    let fy = bbox.y2.min(patch.y2) - bbox.y1.max(patch.y1);
    Ok(fx * fy)
}

/// Pixel-true intersection area: zero unless both axis factors are strictly
/// positive.
pub fn clamped_overlap_area(bbox: &Rect, patch: &Rect) -> Result<i64> {
    check_well_formed(bbox, "bbox")?;
    check_well_formed(patch, "patch")?;
    let fx = bbox.x2.min(patch.x2) - bbox.x1.max(patch.x1);
    let fy = bbox.y2.min(patch.y2) - bbox.y1.max(patch.y1);
    if fx > 0 && fy > 0 {
        Ok(fx * fy)
    } else {
        Ok(0)
    }
}

/// Largest overlapped-area fraction of `patch` over all annotation regions.
pub fn max_overlap_fraction(slide: &SlideRecord, patch: &Rect) -> Result<f64> {
    let area = patch.area();
    let mut best: i64 = 0;
    for region in &slide.annotations {
        best = best.max(clamped_overlap_area(&region.bbox, patch)?);
    }
    Ok(best as f64 / area as f64)
}

/// Assign every patch to A, B, or C in place. Requires all patches to be
/// unlabeled and every patch to lie inside its slide.
pub fn label_partitions(
    slides: &[SlideRecord],
    patches: &mut [PatchRecord],
    policy: &OverlapPolicy,
) -> Result<()> {
    let slide_map: std::collections::BTreeMap<&str, &SlideRecord> =
        slides.iter().map(|s| (s.slide_id.as_str(), s)).collect();

    for patch in patches.iter() {
        if patch.partition != Partition::Unlabeled {
            return Err(Error::State(format!(
                "patch {} already labeled {}",
                patch.patch_id,
                patch.partition.as_str()
            )));
        }
    }

    let labels: Vec<Result<Partition>> = patches
        .par_iter()
        .map(|patch| {
            let slide = slide_map.get(patch.slide_id.as_str()).ok_or_else(|| {
                Error::ReferentialIntegrity(format!(
                    "patch {} references unknown slide {:?}",
                    patch.patch_id, patch.slide_id
                ))
            })?;
            let r = patch.rect;
            if r.x1 < 0 || r.y1 < 0 || r.x2 > slide.width_px || r.y2 > slide.height_px {
                return Err(Error::Geometry(format!(
                    "patch {}: rect {} lies outside slide {:?} bounds",
                    patch.patch_id, r, patch.slide_id
                )));
            }
            if slide.image_label == 0 {
                return Ok(Partition::C);
            }
            let fraction = max_overlap_fraction(slide, &r)?;
            Ok(if fraction >= policy.threshold {
                Partition::A
            } else {
                Partition::B
            })
        })
        .collect();

    // Surface the first error in patch order so failures are deterministic.
    let mut resolved = Vec::with_capacity(labels.len());
    for label in labels {
        resolved.push(label?);
    }
    for (patch, partition) in patches.iter_mut().zip(resolved) {
        patch.partition = partition;
    }
    Ok(())
}

/// Partition counts with percentage shares rounded to one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub total: u64,
    /// Percent shares of the total, rounded to one decimal place.
    pub ratio_a: f64,
    pub ratio_b: f64,
    pub ratio_c: f64,
    /// Set when A is empty: no positive patches anywhere.
    pub empty_a_warning: bool,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl Census {
    pub fn from_counts(a: u64, b: u64, c: u64) -> Census {
        let total = a + b + c;
        let pct = |n: u64| {
            if total == 0 {
                0.0
            } else {
                round1(n as f64 * 100.0 / total as f64)
            }
        };
        Census {
            a,
            b,
            c,
            total,
            ratio_a: pct(a),
            ratio_b: pct(b),
            ratio_c: pct(c),
            empty_a_warning: a == 0,
        }
    }
}

impl std::fmt::Display for Census {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "A={} ({:.1}%) B={} ({:.1}%) C={} ({:.1}%) total={}",
            self.a, self.ratio_a, self.b, self.ratio_b, self.c, self.ratio_c, self.total
        )?;
        if self.empty_a_warning {
            write!(f, " [warning: no A patches]")?;
        }
        Ok(())
    }
}

/// Count partition members. Errors if any patch is still unlabeled.
pub fn partition_census(patches: &[PatchRecord]) -> Result<Census> {
    let mut a = 0u64;
    let mut b = 0u64;
    let mut c = 0u64;
    for patch in patches {
        match patch.partition {
            Partition::A => a += 1,
            Partition::B => b += 1,
            Partition::C => c += 1,
            Partition::Unlabeled => {
                return Err(Error::State(format!(
                    "patch {} is unlabeled; run labeling first",
                    patch.patch_id
                )))
            }
        }
    }
    Ok(Census::from_counts(a, b, c))
}
