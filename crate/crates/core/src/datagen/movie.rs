use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    advance_clock, camera_walk_step, derive_seed, render_clock, warp_affine, CameraState,
    CameraWalkParams, ClockState, Frame,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Annotation {
    /// Inter-hand angle `α = long − short` (radians, unwrapped).
    ClockAngle(f64),
    /// Class of the source image.
    Label(u8),
}

/// A fixed-length grayscale movie with per-frame ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieClip {
    pub height: usize,
    pub width: usize,
    /// `T × (height·width)`, one frame per row.
    pub frames: Matrix,
    pub annotations: Vec<Annotation>,
    pub seed: u64,
    pub source_id: Option<usize>,
}

impl MovieClip {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn frame(&self, t: usize) -> Frame {
        Frame::new(self.height, self.width, self.frames.row(t).to_vec()).expect("frame size")
    }

    /// Inter-hand angles of a clock clip.
    pub fn angles(&self) -> Option<Vec<f64>> {
        self.annotations
            .iter()
            .map(|a| match a {
                Annotation::ClockAngle(x) => Some(*x),
                Annotation::Label(_) => None,
            })
            .collect()
    }
}

/// Concatenates clips into one batch, returning the frames and the index
/// at which each clip starts.
pub fn stack_clips(clips: &[MovieClip]) -> Result<(Matrix, Vec<usize>)> {
    let mut boundaries = Vec::with_capacity(clips.len());
    let mut start = 0;
    for c in clips {
        boundaries.push(start);
        start += c.len();
    }
    let frames: Vec<Matrix> = clips.iter().map(|c| c.frames.clone()).collect();
    Ok((Matrix::vstack(&frames)?, boundaries))
}

/// A continuing clock movie: the hands and camera carry over from one
/// segment to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockMovie {
    pub clock: ClockState,
    pub camera: CameraState,
    pub params: CameraWalkParams,
    pub height: usize,
    pub width: usize,
}

impl ClockMovie {
    /// Starts with the camera drawn from the walk's stationary distribution.
    pub fn new(
        start: ClockState,
        params: CameraWalkParams,
        height: usize,
        width: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        let camera = params.sample_stationary(&mut rng);
        Self {
            clock: start,
            camera,
            params,
            height,
            width,
        }
    }

    /// Generator state as plain numbers: clock angles, frame index, camera.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut v = vec![
            self.clock.long_angle,
            self.clock.short_angle,
            self.clock.frame_index as f64,
        ];
        v.extend(self.camera.to_array());
        v
    }

    pub fn restore_state(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != 9 {
            return Err(Error::Checkpoint(format!(
                "clock generator state has {} values, expected 9",
                v.len()
            )));
        }
        self.clock = ClockState {
            long_angle: v[0],
            short_angle: v[1],
            frame_index: v[2] as u64,
        };
        let mut cam = [0.0; 6];
        cam.copy_from_slice(&v[3..9]);
        self.camera = CameraState::from_array(cam);
        Ok(())
    }

    /// Renders the next `frames` frames. The camera walk runs sequentially;
    /// the frames are then rendered independently with per-frame noise seeds.
    pub fn next_segment(&mut self, frames: usize, seed: u64) -> MovieClip {
        let mut walk_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let mut poses = Vec::with_capacity(frames);
        for _ in 0..frames {
            poses.push((self.clock, self.camera));
            self.clock = advance_clock(&self.clock);
            self.camera = camera_walk_step(&self.camera, &self.params, &mut walk_rng);
        }
        let (h, w, noise) = (self.height, self.width, self.params.pixel_noise_std);
        let rendered = exec::map_indices(frames, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64 + 1));
            render_clock(&poses[t].0, &poses[t].1, h, w, noise, &mut rng).pixels
        });
        let data = rendered.into_iter().flatten().collect();
        MovieClip {
            height: h,
            width: w,
            frames: Matrix::from_vec(frames, h * w, data).expect("frame sizes"),
            annotations: poses
                .iter()
                .map(|(c, _)| Annotation::ClockAngle(c.inter_hand_angle()))
                .collect(),
            seed,
            source_id: None,
        }
    }
}

/// A standalone clock clip of `frames` frames.
pub fn make_clock_clip(
    start: ClockState,
    params: &CameraWalkParams,
    frames: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<MovieClip> {
    if frames < 2 {
        return Err(Error::InvalidArgument(
            "a clip needs at least 2 frames".into(),
        ));
    }
    params.validate()?;
    Ok(ClockMovie::new(start, *params, height, width, seed).next_segment(frames, seed))
}

/// A shaky-camera movie of one still image. The camera starts at the walk
/// mean, so the first frame is the undistorted image plus pixel noise.
pub fn make_mnist_clip(
    source: &Frame,
    label: u8,
    params: &CameraWalkParams,
    frames: usize,
    seed: u64,
    source_id: Option<usize>,
) -> Result<MovieClip> {
    if frames < 2 {
        return Err(Error::InvalidArgument(
            "a clip needs at least 2 frames".into(),
        ));
    }
    params.validate()?;
    let mut walk_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let (h, w) = (source.height, source.width);
    let mut data = Vec::with_capacity(frames * h * w);
    let mut camera = params.mean;
    for _ in 0..frames {
        let mut f = warp_affine(source, &camera);
        if params.pixel_noise_std > 0.0 {
            for v in &mut f.pixels {
                let eta: f64 = StandardNormal.sample(&mut noise_rng);
                *v += params.pixel_noise_std * eta;
            }
        }
        data.extend(f.pixels.iter().map(|v| v.clamp(0.0, 1.0)));
        camera = camera_walk_step(&camera, params, &mut walk_rng);
    }
    Ok(MovieClip {
        height: h,
        width: w,
        frames: Matrix::from_vec(frames, h * w, data)?,
        annotations: vec![Annotation::Label(label); frames],
        seed,
        source_id,
    })
}
