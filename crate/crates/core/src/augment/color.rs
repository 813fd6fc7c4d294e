use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::strip::EyeStrip;

/// Half-widths of the uniform HSV jitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsvAmplitudes {
    pub hue_deg: f64,
    pub saturation: f64,
    pub value: f64,
}

impl Default for HsvAmplitudes {
    fn default() -> Self {
        Self {
            hue_deg: 10.0,
            saturation: 0.1,
            value: 0.1,
        }
    }
}

impl HsvAmplitudes {
    pub fn zero() -> Self {
        Self {
            hue_deg: 0.0,
            saturation: 0.0,
            value: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.hue_deg == 0.0 && self.saturation == 0.0 && self.value == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsvShift {
    pub hue_deg: f64,
    pub saturation: f64,
    pub value: f64,
}

/// Hexcone RGB → (hue degrees in [0, 360), saturation, value). Gray pixels
/// get hue 0.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, max];
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = (sector * 60.0).rem_euclid(360.0);
    [h, s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Applies one shift to every pixel: hue wraps, saturation and value clamp.
pub fn apply_hsv_shift(strip: &EyeStrip, shift: &HsvShift) -> EyeStrip {
    EyeStrip::from_fn(strip.width(), strip.height(), |x, y| {
        let p = strip.pixel(x, y);
        let [h, s, v] = rgb_to_hsv([p[0] as f64, p[1] as f64, p[2] as f64]);
        let rgb = hsv_to_rgb([
            (h + shift.hue_deg).rem_euclid(360.0),
            (s + shift.saturation).clamp(0.0, 1.0),
            (v + shift.value).clamp(0.0, 1.0),
        ]);
        [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]
    })
}

/// Draws one (Δh, Δs, Δv) uniformly within the amplitudes and applies it.
pub fn hsv_jitter(strip: &EyeStrip, amplitudes: &HsvAmplitudes, seed: u64) -> EyeStrip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
    let shift = HsvShift {
        hue_deg: draw(amplitudes.hue_deg),
        saturation: draw(amplitudes.saturation),
        value: draw(amplitudes.value),
    };
    if amplitudes.is_zero() {
        return strip.clone();
    }
    apply_hsv_shift(strip, &shift)
}
