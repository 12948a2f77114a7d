//! Synthetic movie generation: a clock face seen through a shaky noisy
//! camera, and MNIST digits seen through the same kind of camera.

mod camera;
mod clock;
mod image;
mod mnist;
mod movie;
mod warp;

pub use camera::{camera_walk_step, CameraState, CameraWalkParams, WalkCoordinate};
pub use clock::{advance_clock, render_clock, ClockState, LONG_HAND_PERIOD, SHORT_HAND_PERIOD};
pub use image::{downsample_4x4, downsample_blocks, downsample_rows, write_pgm, Frame};
pub use mnist::{load_mnist, parse_idx_images, parse_idx_labels, MnistDataset};
pub use movie::{make_clock_clip, make_mnist_clip, stack_clips, Annotation, ClockMovie, MovieClip};
pub use warp::{bilinear_sample, warp_affine, AffineMap};

/// Mixes `index` into `base` (splitmix64 finaliser), giving independent
/// per-clip / per-frame / per-iteration seeds that do not depend on
/// scheduling order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(base) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
