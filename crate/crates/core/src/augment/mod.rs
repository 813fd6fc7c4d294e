//! Training-set augmentation: horizontal flip with label swap, HSV jitter,
//! and the offline geometric expansion (rotations, scales, 8-way shifts).

mod color;
mod geometry;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::EyeState;
use crate::strip::EyeStrip;

pub use color::{apply_hsv_shift, hsv_jitter, hsv_to_rgb, rgb_to_hsv, HsvAmplitudes, HsvShift};
pub use geometry::{geometric_expand, rotate, scale_about_center, shift, SHIFT_DIRECTIONS};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid augmentation config: {0}")]
pub struct AugmentConfigError(String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip_probability: f64,
    pub hsv: HsvAmplitudes,
    /// Geometric expansion on/off; the lists below apply when on.
    pub expand: bool,
    pub rotations_deg: Vec<f32>,
    pub scales: Vec<f32>,
    pub shift_px: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            hsv: HsvAmplitudes::default(),
            expand: true,
            rotations_deg: vec![2.5, -2.5],
            scales: vec![1.2, 1.5],
            shift_px: 5,
        }
    }
}

impl AugmentConfig {
    /// Every augmentation switched off.
    pub fn none() -> Self {
        Self {
            flip_probability: 0.0,
            hsv: HsvAmplitudes::zero(),
            expand: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentConfigError> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(AugmentConfigError(format!(
                "flip probability {} outside [0, 1]",
                self.flip_probability
            )));
        }
        if let Some(s) = self.scales.iter().find(|s| s.is_nan() || **s < 1.0) {
            return Err(AugmentConfigError(format!("scale factor {s} is below 1")));
        }
        if self.shift_px < 1 {
            return Err(AugmentConfigError("shift magnitude must be at least 1 pixel".into()));
        }
        let h = &self.hsv;
        if [h.hue_deg, h.saturation, h.value].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AugmentConfigError("HSV amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// Variants produced per source image by the geometric expansion.
    pub fn geometric_count(&self) -> usize {
        if self.expand {
            self.rotations_deg.len() + self.scales.len() + SHIFT_DIRECTIONS.len()
        } else {
            0
        }
    }
}

/// Mirrors the strip and maps the label to the opposite horizontal direction.
pub fn hflip_with_label_swap(strip: &EyeStrip, label: EyeState) -> (EyeStrip, EyeState) {
    (strip.hflip(), label.mirror())
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The training pool: each source image followed by its geometric variants.
///
/// Variants are computed on access rather than stored; they are pure
/// functions of the source image, so this is equivalent to materializing
/// the expanded set up front.
#[derive(Clone, Debug)]
pub struct TrainingStream {
    samples: Vec<(EyeStrip, EyeState)>,
    config: AugmentConfig,
    seed: u64,
}

impl TrainingStream {
    pub fn new(
        samples: Vec<(EyeStrip, EyeState)>,
        config: AugmentConfig,
        seed: u64,
    ) -> Result<Self, AugmentConfigError> {
        config.validate()?;
        Ok(Self { samples, config, seed })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    fn per_source(&self) -> usize {
        1 + self.config.geometric_count()
    }

    /// Size of the expanded pool.
    pub fn len(&self) -> usize {
        self.samples.len() * self.per_source()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pool entry `index` before the online flip/HSV step.
    pub fn pool_item(&self, index: usize) -> (EyeStrip, EyeState) {
        let (src, variant) = (index / self.per_source(), index % self.per_source());
        let (strip, label) = &self.samples[src];
        if variant == 0 {
            (strip.clone(), *label)
        } else {
            (geometry::variant(strip, &self.config, variant - 1), *label)
        }
    }

    /// One epoch: the pool in a freshly shuffled order, each item randomly
    /// flipped and colour-jittered. Deterministic in (seed, epoch).
    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = (EyeStrip, EyeState)> + '_ {
        let epoch_seed = derive_seed(self.seed, epoch as u64);
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        order.shuffle(&mut rng);
        order.into_iter().enumerate().map(move |(k, idx)| {
            let item_seed = derive_seed(epoch_seed, k as u64);
            self.augment_online(self.pool_item(idx), item_seed)
        })
    }

    fn augment_online(&self, (strip, label): (EyeStrip, EyeState), seed: u64) -> (EyeStrip, EyeState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip = rng.gen_bool(self.config.flip_probability);
        let (strip, label) = if flip {
            hflip_with_label_swap(&strip, label)
        } else {
            (strip, label)
        };
        let strip = if self.config.hsv.is_zero() {
            strip
        } else {
            hsv_jitter(&strip, &self.config.hsv, rng.gen())
        };
        (strip, label)
    }
}
