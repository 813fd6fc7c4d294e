//! Procedural eye-strip renderer and the on-disk dataset format.
//!
//! Each eye is an ellipse of sclera with an iris/pupil disc displaced by
//! the gaze direction. The upper lid follows vertical gaze, closed eyes
//! are skin with a lash arc. All random draws happen in a fixed order
//! that does not depend on the eye state, so two states rendered with the
//! same seed share their appearance.

pub mod dataset;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::EyeState;
use crate::strip::{EyeStrip, DOUBLE_EYE_WIDTH, SINGLE_EYE_WIDTH, STRIP_HEIGHT};

pub use dataset::{
    generate_dataset, iterate, load_manifest, load_split, write_manifest, DatasetError,
    DatasetManifest, ManifestRecord, RecordIssue, Split, SplitCounts,
};

/// A channel brighter than this in every channel is not pupil-colored.
pub const PUPIL_THRESHOLD: f32 = 0.15;

const PUPIL_RGB: [f32; 3] = [0.04, 0.04, 0.05];
const LASH_RGB: [f32; 3] = [0.32, 0.14, 0.11];
const SKIN_LIGHT: [f32; 3] = [0.94, 0.78, 0.68];
const SKIN_DARK: [f32; 3] = [0.46, 0.31, 0.23];
const IRIS_PALETTE: [[f32; 3]; 5] = [
    [0.45, 0.28, 0.15],
    [0.52, 0.42, 0.22],
    [0.34, 0.52, 0.33],
    [0.33, 0.46, 0.68],
    [0.52, 0.56, 0.62],
];

/// Upper-lid height as a fraction of the eye's half-height, by vertical gaze.
fn lid_fraction(dy: i32) -> f32 {
    match dy {
        -1 => 1.0,
        0 => 0.85,
        _ => 0.6,
    }
}

/// Asynchronous eye moves this fraction of the full offset.
const ASYNC_SCALE: f32 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f32,
    pub max: f32,
}

impl Range {
    pub const fn new(min: f32, max: f32) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> f32 {
        // Always consumes one draw so the sequence stays aligned.
        let u: f32 = rng.gen();
        self.min + (self.max - self.min) * u
    }

    fn check(&self, name: &str) -> Result<(), SynthError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(SynthError::InvalidParams(format!(
                "{name} range [{}, {}] is empty or not finite",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &Range) -> bool {
        self.min <= other.max && other.min <= self.max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripLayout {
    /// Both eyes, 32×128.
    Double,
    /// One eye, 32×64.
    Single,
}

impl StripLayout {
    pub fn width(self) -> usize {
        match self {
            StripLayout::Double => DOUBLE_EYE_WIDTH,
            StripLayout::Single => SINGLE_EYE_WIDTH,
        }
    }

    pub fn eye_count(self) -> usize {
        match self {
            StripLayout::Double => 2,
            StripLayout::Single => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub layout: StripLayout,
    /// 0 = lightest skin palette entry, 1 = darkest.
    pub skin_tone: Range,
    /// Position along the iris palette, 0..1.
    pub iris_hue: Range,
    pub sclera: [f32; 3],
    pub iris_radius: Range,
    pub pupil_ratio: f32,
    pub eye_half_width: Range,
    pub eye_half_height: Range,
    /// Pupil displacement magnitudes for a full horizontal / vertical step.
    pub offset_x: Range,
    pub offset_y: Range,
    /// Framing jitter of the eye pair in pixels (vertical uses half).
    pub center_jitter: f32,
    pub brightness: Range,
    pub color_jitter: f32,
    /// Maximum left-to-right illumination slope across the strip.
    pub light_gradient: f32,
    pub pixel_noise: f32,
    pub eyelid_thickness: f32,
    pub asynchrony_probability: f32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            layout: StripLayout::Double,
            skin_tone: Range::new(0.0, 0.7),
            iris_hue: Range::new(0.0, 0.5),
            sclera: [0.93, 0.92, 0.9],
            iris_radius: Range::new(6.0, 7.2),
            pupil_ratio: 0.45,
            eye_half_width: Range::new(22.0, 25.0),
            eye_half_height: Range::new(10.0, 11.0),
            offset_x: Range::new(9.0, 12.0),
            offset_y: Range::new(2.5, 3.2),
            center_jitter: 2.0,
            brightness: Range::new(0.9, 1.1),
            color_jitter: 0.04,
            light_gradient: 0.1,
            pixel_noise: 0.03,
            eyelid_thickness: 1.5,
            asynchrony_probability: 0.1,
        }
    }
}

impl SynthParams {
    pub fn single_eye() -> Self {
        Self {
            layout: StripLayout::Single,
            ..Self::default()
        }
    }

    /// Appearance of people absent from training: disjoint skin tone, iris
    /// size and iris color ranges, captured under wider lighting and
    /// framing variation.
    pub fn unknown_users(&self) -> Self {
        Self {
            skin_tone: Range::new(0.75, 1.0),
            iris_hue: Range::new(0.55, 1.0),
            iris_radius: Range::new(7.4, 8.2),
            brightness: Range::new(0.8, 1.2),
            center_jitter: 4.0,
            color_jitter: 0.07,
            light_gradient: 0.25,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, r) in [
            ("skin_tone", &self.skin_tone),
            ("iris_hue", &self.iris_hue),
            ("iris_radius", &self.iris_radius),
            ("eye_half_width", &self.eye_half_width),
            ("eye_half_height", &self.eye_half_height),
            ("offset_x", &self.offset_x),
            ("offset_y", &self.offset_y),
            ("brightness", &self.brightness),
        ] {
            r.check(name)?;
        }
        let unit = |name: &str, v: f32| -> Result<(), SynthError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidParams(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("skin_tone.min", self.skin_tone.min)?;
        unit("skin_tone.max", self.skin_tone.max)?;
        unit("iris_hue.min", self.iris_hue.min)?;
        unit("iris_hue.max", self.iris_hue.max)?;
        unit("pupil_ratio", self.pupil_ratio)?;
        unit("asynchrony_probability", self.asynchrony_probability)?;
        if self.iris_radius.min <= 0.0 || self.offset_x.min <= 0.0 || self.offset_y.min <= 0.0 {
            return Err(SynthError::InvalidParams(
                "iris radius and pupil offsets must be positive".into(),
            ));
        }
        for v in [self.center_jitter, self.color_jitter, self.light_gradient, self.pixel_noise, self.eyelid_thickness] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidParams(format!("amplitude {v} must be a non-negative number")));
            }
        }

        // The pupil's bounding box at the largest offsets must fit inside the
        // smallest eye ellipse; the ellipse norm is monotone in |x| and |y|,
        // so the far corner decides.
        let pupil = self.iris_radius.max * self.pupil_ratio;
        let (a, b) = (self.eye_half_width.min, self.eye_half_height.min);
        let corner = ((self.offset_x.max + pupil) / a).powi(2) + ((self.offset_y.max + pupil) / b).powi(2);
        if corner > 1.0 {
            return Err(SynthError::InvalidParams(format!(
                "pupil at maximum offset leaves the eye ellipse (normalized radius² {corner:.3})"
            )));
        }
        // Level gaze keeps the pupil below the partly lowered upper lid.
        if pupil > lid_fraction(0) * b {
            return Err(SynthError::InvalidParams("pupil reaches under the upper lid".into()));
        }

        let half_w = (self.layout.width() / self.layout.eye_count()) as f32 / 2.0;
        if self.eye_half_width.max + self.center_jitter > half_w * 1.2 {
            return Err(SynthError::InvalidParams("eye ellipse too wide for the strip".into()));
        }
        if self.eye_half_height.max + self.center_jitter / 2.0 > STRIP_HEIGHT as f32 / 2.0 {
            return Err(SynthError::InvalidParams("eye ellipse too tall for the strip".into()));
        }
        Ok(())
    }
}

/// Geometry of one rendered eye, in pixel coordinates where pixel (x, y)
/// covers [x, x+1) × [y, y+1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyeGeometry {
    pub center: (f32, f32),
    pub half_width: f32,
    pub half_height: f32,
    pub iris_radius: f32,
    pub pupil_radius: f32,
    /// Pupil centre relative to `center`; zero when closed.
    pub pupil_offset: (f32, f32),
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub strip: EyeStrip,
    pub eyes: Vec<EyeGeometry>,
}

/// Renderer bound to validated parameters.
#[derive(Clone, Debug)]
pub struct Renderer {
    params: SynthParams,
}

fn lerp3(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn palette(colors: &[[f32; 3]], t: f32) -> [f32; 3] {
    let pos = t.clamp(0.0, 1.0) * (colors.len() - 1) as f32;
    let i = (pos.floor() as usize).min(colors.len() - 2);
    lerp3(colors[i], colors[i + 1], pos - i as f32)
}

impl Renderer {
    pub fn new(params: SynthParams) -> Result<Self, SynthError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    pub fn render(&self, state: EyeState, seed: u64) -> EyeStrip {
        self.render_with_geometry(state, seed).strip
    }

    pub fn render_with_geometry(&self, state: EyeState, seed: u64) -> Rendered {
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let skin = lerp3(SKIN_LIGHT, SKIN_DARK, p.skin_tone.sample(&mut rng));
        let iris = palette(&IRIS_PALETTE, p.iris_hue.sample(&mut rng));
        let iris_r = p.iris_radius.sample(&mut rng);
        let a = p.eye_half_width.sample(&mut rng);
        let b = p.eye_half_height.sample(&mut rng);
        let off_x = p.offset_x.sample(&mut rng);
        let off_y = p.offset_y.sample(&mut rng);
        let jx = Range::new(-p.center_jitter, p.center_jitter).sample(&mut rng);
        let jy = Range::new(-p.center_jitter / 2.0, p.center_jitter / 2.0).sample(&mut rng);
        let brightness = p.brightness.sample(&mut rng);
        let tint: [f32; 3] = std::array::from_fn(|_| {
            Range::new(1.0 - p.color_jitter, 1.0 + p.color_jitter).sample(&mut rng)
        });
        let gradient = Range::new(-p.light_gradient, p.light_gradient).sample(&mut rng);
        let asynchronous = rng.gen::<f32>() < p.asynchrony_probability;
        let lagging_eye = rng.gen_range(0..2usize);

        let width = p.layout.width();
        let eye_count = p.layout.eye_count();
        let slot = width as f32 / eye_count as f32;
        let (dx, dy) = state.direction().unwrap_or((0, 0));
        let eyes: Vec<EyeGeometry> = (0..eye_count)
            .map(|i| {
                let scale = if asynchronous && i == lagging_eye { ASYNC_SCALE } else { 1.0 };
                EyeGeometry {
                    center: (slot * (i as f32 + 0.5) + jx, STRIP_HEIGHT as f32 / 2.0 + jy),
                    half_width: a,
                    half_height: b,
                    iris_radius: iris_r,
                    pupil_radius: iris_r * p.pupil_ratio,
                    pupil_offset: (dx as f32 * off_x * scale, dy as f32 * off_y * scale),
                }
            })
            .collect();

        let lid = lid_fraction(dy);
        let eyelid_skin = [skin[0] * 0.9, skin[1] * 0.88, skin[2] * 0.88];
        let mut strip = EyeStrip::filled(width, STRIP_HEIGHT, [0.0; 3]);
        for y in 0..STRIP_HEIGHT {
            for x in 0..width {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let eye = &eyes[((px / slot) as usize).min(eye_count - 1)];
                let (ex, ey) = (px - eye.center.0, py - eye.center.1);
                let norm = (ex / eye.half_width).powi(2) + (ey / eye.half_height).powi(2);

                let base = if state.is_closed() {
                    let arc = eye.half_height * 0.3 * (1.0 - (ex / eye.half_width).powi(2));
                    if ex.abs() <= eye.half_width && (ey - arc).abs() <= p.eyelid_thickness / 2.0 {
                        LASH_RGB
                    } else if norm <= 1.0 {
                        eyelid_skin
                    } else {
                        skin
                    }
                } else if norm <= 1.0 {
                    let lid_top = -eye.half_height * lid;
                    if ey < lid_top - 1.2 {
                        eyelid_skin
                    } else if ey < lid_top {
                        LASH_RGB
                    } else {
                        let d = ((ex - eye.pupil_offset.0).powi(2) + (ey - eye.pupil_offset.1).powi(2)).sqrt();
                        if d <= eye.pupil_radius {
                            PUPIL_RGB
                        } else if d <= eye.iris_radius {
                            let shade = 1.0 - 0.15 * d / eye.iris_radius;
                            [iris[0] * shade, iris[1] * shade, iris[2] * shade]
                        } else {
                            p.sclera
                        }
                    }
                } else {
                    skin
                };

                let light = brightness * (1.0 + gradient * (px / width as f32 - 0.5));
                let mut rgb = [0.0f32; 3];
                for c in 0..3 {
                    let noise = if p.pixel_noise > 0.0 {
                        rng.gen_range(-p.pixel_noise..=p.pixel_noise)
                    } else {
                        0.0
                    };
                    rgb[c] = base[c] * light * tint[c] + noise;
                }
                strip.set_pixel(x, y, rgb);
            }
        }
        let eyes = if state.is_closed() {
            eyes.into_iter()
                .map(|e| EyeGeometry { pupil_offset: (0.0, 0.0), ..e })
                .collect()
        } else {
            eyes
        };
        Rendered { strip, eyes }
    }
}

/// Renders one labeled strip.
pub fn render_eye_strip(state: EyeState, renderer: &Renderer, seed: u64) -> EyeStrip {
    renderer.render(state, seed)
}

pub fn is_pupil_colored(rgb: [f32; 3]) -> bool {
    rgb.iter().all(|&c| c < PUPIL_THRESHOLD)
}

/// Centroid of pupil-colored pixels whose centre lies in `[x0, x1)`, in
/// pixel-centre coordinates. `None` when there are none.
pub fn dark_centroid(strip: &EyeStrip, x0: usize, x1: usize) -> Option<(f32, f32)> {
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
    for y in 0..strip.height() {
        for x in x0..x1.min(strip.width()) {
            if is_pupil_colored(strip.pixel(x, y)) {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1;
            }
        }
    }
    (n > 0).then(|| ((sx / n as f64) as f32, (sy / n as f64) as f32))
}
