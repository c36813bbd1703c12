//! Desk-scale synthetic datasets.
//!
//! The generator stands in for an external deep feature extractor: it lays
//! patches on per-slide grids, marks a tumor subset on each cancerous slide,
//! emits one annotation rectangle per tumor patch (so bounding-box labeling
//! reproduces the ground truth at any threshold ≤ 1), and draws features from
//! latent Gaussian clusters.
//!
//! Both classes share the same latent cluster offsets; the tumor class is
//! shifted by `class_separation` along component 0 while the offsets only
//! occupy the remaining components. Unit component noise therefore makes
//! `class_separation` the exact distance between class means in units of the
//! component standard deviation, and `class_separation = 0` makes the two
//! classes statistically identical.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::manifest::{
    AnnotationRegion, Manifest, Partition, PatchRecord, Rect, SlideRecord, DEFAULT_PATCH_SIZE,
};
use crate::rng::RngSeed;

fn default_patch_size() -> u32 {
    DEFAULT_PATCH_SIZE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_slides: usize,
    pub patches_per_slide: usize,
    pub d: usize,
    /// Fraction of patches in a cancerous slide that are tumor.
    pub tumor_fraction: f64,
    pub n_latent_clusters: usize,
    /// Distance between class means in units of component standard deviation.
    pub class_separation: f64,
    #[serde(default = "default_patch_size")]
    pub patch_size: u32,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_slides == 0 {
            return Err(Error::Config("n_slides must be positive".into()));
        }
        if self.patches_per_slide < 2 {
            return Err(Error::Config(
                "patches_per_slide must be at least 2 so cancerous slides keep benign patches"
                    .into(),
            ));
        }
        if self.d == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if !(self.tumor_fraction > 0.0 && self.tumor_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tumor_fraction must lie strictly between 0 and 1, got {}",
                self.tumor_fraction
            )));
        }
        if self.n_latent_clusters == 0 {
            return Err(Error::Config("n_latent_clusters must be positive".into()));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::Config(format!(
                "class_separation must be a nonnegative real, got {}",
                self.class_separation
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        Ok(())
    }

    /// Cancerous slides come first; half of the slides, rounded up.
    pub fn n_cancerous(&self) -> usize {
        self.n_slides.div_ceil(2)
    }

    /// Tumor patches per cancerous slide, at least one, never the whole slide.
    pub fn tumor_patches_per_slide(&self) -> usize {
        let raw = (self.patches_per_slide as f64 * self.tumor_fraction).round() as usize;
        raw.clamp(1, self.patches_per_slide - 1)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub manifest: Manifest,
    pub features: FeatureStore,
    /// Generator's intended partition per patch, sorted by patch id.
    pub ground_truth: Vec<(u64, Partition)>,
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: RngSeed) -> Result<SyntheticData> {
    spec.validate()?;

    let ps = i64::from(spec.patch_size);
    let cols = (spec.patches_per_slide as f64).sqrt().ceil() as usize;
    let rows = spec.patches_per_slide.div_ceil(cols);
    let width = cols as i64 * ps;
    let height = rows as i64 * ps;
    let n_cancerous = spec.n_cancerous();
    let n_tumor = spec.tumor_patches_per_slide();

    // Latent cluster offsets shared by both classes; component 0 is reserved
    // for the class separation axis.
    let mut offset_rng = seed.child("synthetic.offsets", 0).rng();
    let offsets: Vec<Vec<f64>> = (0..spec.n_latent_clusters)
        .map(|_| {
            (0..spec.d)
                .map(|c| {
                    if c == 0 {
                        0.0
                    } else {
                        offset_rng.sample::<f64, _>(StandardNormal)
                    }
                })
                .collect()
        })
        .collect();

    let mut slides = Vec::with_capacity(spec.n_slides);
    let mut patches = Vec::new();
    let mut rows_out: Vec<(u64, Vec<f32>)> = Vec::new();
    let mut ground_truth = Vec::new();
    let mut next_patch_id: u64 = 0;

    for s in 0..spec.n_slides {
        let cancerous = s < n_cancerous;
        let slide_id = format!("slide_{s:04}");
        let mut rng = seed.child("synthetic.slide", s as u64).rng();

        let tumor_positions: Vec<usize> = if cancerous {
            let mut sampled =
                rand::seq::index::sample(&mut rng, spec.patches_per_slide, n_tumor).into_vec();
            sampled.sort_unstable();
            sampled
        } else {
            Vec::new()
        };

        let mut annotations = Vec::with_capacity(tumor_positions.len());
        for p in 0..spec.patches_per_slide {
            let col = (p % cols) as i64;
            let row = (p / cols) as i64;
            let rect = Rect::new(col * ps, row * ps, (col + 1) * ps, (row + 1) * ps);
            let tumor = cancerous && tumor_positions.binary_search(&p).is_ok();
            if tumor {
                annotations.push(AnnotationRegion::from_polygon(vec![
                    (rect.x1, rect.y1),
                    (rect.x2, rect.y1),
                    (rect.x2, rect.y2),
                    (rect.x1, rect.y2),
                ])?);
            }

            let partition = if tumor {
                Partition::A
            } else if cancerous {
                Partition::B
            } else {
                Partition::C
            };
            let cluster = rng.random_range(0..spec.n_latent_clusters);
            let mut values = Vec::with_capacity(spec.d);
            for c in 0..spec.d {
                let class_shift = if tumor && c == 0 {
                    spec.class_separation
                } else {
                    0.0
                };
                let noise: f64 = rng.sample(StandardNormal);
                values.push((class_shift + offsets[cluster][c] + noise) as f32);
            }

            patches.push(PatchRecord {
                patch_id: next_patch_id,
                slide_id: slide_id.clone(),
                rect,
                partition: Partition::Unlabeled,
            });
            rows_out.push((next_patch_id, values));
            ground_truth.push((next_patch_id, partition));
            next_patch_id += 1;
        }

        slides.push(SlideRecord {
            slide_id,
            image_label: u8::from(cancerous),
            width_px: width,
            height_px: height,
            annotations,
        });
    }

    let manifest = Manifest {
        patch_size: spec.patch_size,
        magnification: 10.0,
        slides,
        patches,
    };
    manifest.validate()?;
    let features = FeatureStore::from_rows(rows_out)?;
    Ok(SyntheticData {
        manifest,
        features,
        ground_truth,
    })
}

/// Columnar ground-truth table: `patch_id<TAB>partition` per line.
pub fn ground_truth_tsv(truth: &[(u64, Partition)]) -> String {
    let mut out = String::from("patch_id\tpartition\n");
    for (id, partition) in truth {
        out.push_str(&format!("{id}\t{}\n", partition.as_str()));
    }
    out
}
