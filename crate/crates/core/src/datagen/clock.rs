use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AffineMap, CameraState, Frame};

/// Frames per revolution of the long hand.
pub const LONG_HAND_PERIOD: f64 = 400.0;
/// Frames per revolution of the short hand (one fifth of the long hand's pace).
pub const SHORT_HAND_PERIOD: f64 = 2000.0;

const LONG_HAND_LENGTH: f64 = 0.45;
const SHORT_HAND_LENGTH: f64 = 0.28;
const LONG_HAND_WIDTH: f64 = 1.5;
const SHORT_HAND_WIDTH: f64 = 2.5;

/// Hand angles in radians, measured counter-clockwise from the +x (right)
/// direction on screen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClockState {
    pub long_angle: f64,
    pub short_angle: f64,
    pub frame_index: u64,
}

impl ClockState {
    pub fn new(long_angle: f64, short_angle: f64) -> Self {
        Self {
            long_angle,
            short_angle,
            frame_index: 0,
        }
    }

    /// Angle between the hands, `long − short`.
    pub fn inter_hand_angle(&self) -> f64 {
        self.long_angle - self.short_angle
    }
}

/// Both hands turn clockwise: the long hand once per 400 frames, the short
/// hand once per 2000.
pub fn advance_clock(state: &ClockState) -> ClockState {
    ClockState {
        long_angle: state.long_angle - TAU / LONG_HAND_PERIOD,
        short_angle: state.short_angle - TAU / SHORT_HAND_PERIOD,
        frame_index: state.frame_index + 1,
    }
}

/// Distance from `p` to the segment from `origin` along `dir` of `length`.
#[inline]
fn segment_distance(p: (f64, f64), origin: (f64, f64), dir: (f64, f64), length: f64) -> f64 {
    let (dx, dy) = (p.0 - origin.0, p.1 - origin.1);
    let along = (dx * dir.0 + dy * dir.1).clamp(0.0, length);
    let (ex, ey) = (dx - along * dir.0, dy - along * dir.1);
    (ex * ex + ey * ey).sqrt()
}

/// Coverage-style anti-aliasing: full intensity within half a width of the
/// centre line, falling off linearly over one pixel.
#[inline]
fn line_coverage(distance: f64, width: f64) -> f64 {
    (0.5 * width + 0.5 - distance).clamp(0.0, 1.0)
}

/// Renders both hands (bright on dark) as seen through `camera`, adds
/// Gaussian pixel noise and clamps to `[0, 1]`.
///
/// The scene is evaluated analytically at each output pixel's source
/// position under the same mapping as [`super::warp_affine`], so no
/// intermediate resampling blur is introduced.
pub fn render_clock<R: Rng + ?Sized>(
    state: &ClockState,
    camera: &CameraState,
    height: usize,
    width: usize,
    noise_std: f64,
    rng: &mut R,
) -> Frame {
    assert!(
        height >= 8 && width >= 8,
        "clock frames must be at least 8x8"
    );
    let map = AffineMap::new(camera, height, width);
    let size = height.min(width) as f64;
    let centre = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let hands = [
        (state.long_angle, LONG_HAND_LENGTH * size, LONG_HAND_WIDTH),
        (
            state.short_angle,
            SHORT_HAND_LENGTH * size,
            SHORT_HAND_WIDTH,
        ),
    ]
    .map(|(angle, len, w)| ((angle.cos(), -angle.sin()), len, w));

    let mut frame = Frame::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let p = map.source_of(r, c);
            let mut v = hands
                .iter()
                .map(|&(dir, len, w)| line_coverage(segment_distance(p, centre, dir, len), w))
                .fold(0.0, f64::max);
            if noise_std > 0.0 {
                let eta: f64 = rng.sample(StandardNormal);
                v += noise_std * eta;
            }
            frame.set(r, c, v.clamp(0.0, 1.0));
        }
    }
    frame
}
