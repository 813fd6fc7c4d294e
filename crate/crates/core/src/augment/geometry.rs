use crate::state::EyeState;
use crate::strip::EyeStrip;

use super::AugmentConfig;

/// Unit steps of the 8 compass shifts, clockwise from north.
pub const SHIFT_DIRECTIONS: [(i32, i32); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Bilinear sample at continuous pixel-index coordinates, clamping to the
/// border (replicate).
fn sample(strip: &EyeStrip, u: f32, v: f32) -> [f32; 3] {
    let (w, h) = (strip.width() as f32, strip.height() as f32);
    let u = u.clamp(0.0, w - 1.0);
    let v = v.clamp(0.0, h - 1.0);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(strip.width() - 1), (y0 + 1).min(strip.height() - 1));
    let (fx, fy) = (u - x0 as f32, v - y0 as f32);
    let (p00, p10, p01, p11) = (strip.pixel(x0, y0), strip.pixel(x1, y0), strip.pixel(x0, y1), strip.pixel(x1, y1));
    std::array::from_fn(|c| {
        let top = p00[c] + (p10[c] - p00[c]) * fx;
        let bottom = p01[c] + (p11[c] - p01[c]) * fx;
        top + (bottom - top) * fy
    })
}

/// Inverse-maps every output pixel centre through `source_of` (in
/// continuous coordinates, pixel centres at i + 0.5).
fn resample(strip: &EyeStrip, source_of: impl Fn(f32, f32) -> (f32, f32)) -> EyeStrip {
    EyeStrip::from_fn(strip.width(), strip.height(), |x, y| {
        let (sx, sy) = source_of(x as f32 + 0.5, y as f32 + 0.5);
        sample(strip, sx - 0.5, sy - 0.5)
    })
}

fn center(strip: &EyeStrip) -> (f32, f32) {
    (strip.width() as f32 / 2.0, strip.height() as f32 / 2.0)
}

/// Rotation about the strip centre, positive angles counter-clockwise on screen.
pub fn rotate(strip: &EyeStrip, degrees: f32) -> EyeStrip {
    let (cx, cy) = center(strip);
    let (sin, cos) = degrees.to_radians().sin_cos();
    resample(strip, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        // Inverse rotation; y points down.
        (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
    })
}

/// Enlarges by `factor` about the centre and crops back to the original size.
pub fn scale_about_center(strip: &EyeStrip, factor: f32) -> EyeStrip {
    let (cx, cy) = center(strip);
    resample(strip, |x, y| (cx + (x - cx) / factor, cy + (y - cy) / factor))
}

/// Moves content by whole pixels, replicating the border into the gap.
pub fn shift(strip: &EyeStrip, dx: i32, dy: i32) -> EyeStrip {
    let (w, h) = (strip.width() as i32, strip.height() as i32);
    EyeStrip::from_fn(strip.width(), strip.height(), |x, y| {
        let sx = (x as i32 - dx).clamp(0, w - 1);
        let sy = (y as i32 - dy).clamp(0, h - 1);
        strip.pixel(sx as usize, sy as usize)
    })
}

/// The `index`-th geometric variant: rotations, then scales, then shifts.
pub(super) fn variant(strip: &EyeStrip, config: &AugmentConfig, index: usize) -> EyeStrip {
    let rotations = config.rotations_deg.len();
    let scales = config.scales.len();
    if index < rotations {
        rotate(strip, config.rotations_deg[index])
    } else if index < rotations + scales {
        scale_about_center(strip, config.scales[index - rotations])
    } else {
        let (ux, uy) = SHIFT_DIRECTIONS[index - rotations - scales];
        let m = config.shift_px as i32;
        shift(strip, ux * m, uy * m)
    }
}

/// Every geometric variant of one labeled strip; labels are unchanged.
/// Yields `rotations + scales + 8` items when expansion is enabled.
pub fn geometric_expand(strip: &EyeStrip, label: EyeState, config: &AugmentConfig) -> Vec<(EyeStrip, EyeState)> {
    (0..config.geometric_count())
        .map(|i| (variant(strip, config, i), label))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Renderer, SynthParams};

    fn eye() -> EyeStrip {
        Renderer::new(SynthParams::default()).unwrap().render(EyeState::RIGHT_UP, 11)
    }

    #[test]
    fn default_config_gives_twelve_variants() {
        let out = geometric_expand(&eye(), EyeState::LEFT, &AugmentConfig::default());
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|(s, l)| *l == EyeState::LEFT && s.width() == 128 && s.height() == 32));
        assert!(geometric_expand(&eye(), EyeState::LEFT, &AugmentConfig::none()).is_empty());
    }

    #[test]
    fn zero_rotation_and_unit_scale_are_identity() {
        let s = eye();
        assert_eq!(rotate(&s, 0.0), s);
        assert_eq!(scale_about_center(&s, 1.0), s);
    }

    #[test]
    fn shift_round_trip_restores_interior() {
        let s = eye();
        for &(ux, uy) in &SHIFT_DIRECTIONS {
            let (dx, dy) = (5 * ux, 5 * uy);
            let back = shift(&shift(&s, dx, dy), -dx, -dy);
            for y in 5..s.height() - 5 {
                for x in 5..s.width() - 5 {
                    assert_eq!(back.pixel(x, y), s.pixel(x, y), "({x},{y}) after {dx},{dy}");
                }
            }
        }
    }

    #[test]
    fn shift_moves_content() {
        let s = EyeStrip::from_fn(10, 4, |x, _| [x as f32 / 9.0, 0.0, 0.0]);
        let out = shift(&s, 3, 0);
        assert_eq!(out.pixel(5, 1), s.pixel(2, 1));
        // Border replicated into the gap.
        assert_eq!(out.pixel(0, 1), s.pixel(0, 1));
    }

    #[test]
    fn rotation_by_quarter_turn_on_square() {
        // A 4×4 image rotated by 90°, compared against index arithmetic.
        let s = EyeStrip::from_fn(4, 4, |x, y| [x as f32 / 3.0, y as f32 / 3.0, 0.0]);
        let r = rotate(&s, 90.0);
        for y in 0..4 {
            for x in 0..4 {
                let p = r.pixel(x, y);
                let q = s.pixel(3 - y, x);
                assert!((p[0] - q[0]).abs() < 1e-5 && (p[1] - q[1]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn scale_enlarges_about_centre() {
        // Horizontal ramp: doubling the scale halves the slope around the centre.
        let s = EyeStrip::from_fn(64, 4, |x, _| [x as f32 / 63.0, 0.0, 0.0]);
        let out = scale_about_center(&s, 2.0);
        let slope_in = s.pixel(40, 1)[0] - s.pixel(30, 1)[0];
        let slope_out = out.pixel(40, 1)[0] - out.pixel(30, 1)[0];
        assert!((slope_out - slope_in / 2.0).abs() < 1e-5);
    }
}
