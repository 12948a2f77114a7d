use rand::Rng;
use rand_distr::StandardNormal;

/// Affine camera pose relative to the undistorted view.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraState {
    /// Pixels, positive moves the scene right.
    pub x_offset: f64,
    /// Pixels, positive moves the scene down.
    pub y_offset: f64,
    pub log_scale: f64,
    /// Radians, positive turns the scene counter-clockwise on screen.
    pub rotation: f64,
    pub shear: f64,
    pub log_aspect: f64,
}

impl CameraState {
    pub const COORDINATES: usize = 6;

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.x_offset,
            self.y_offset,
            self.log_scale,
            self.rotation,
            self.shear,
            self.log_aspect,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x_offset: a[0],
            y_offset: a[1],
            log_scale: a[2],
            rotation: a[3],
            shear: a[4],
            log_aspect: a[5],
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

/// Stationary spread and reversion time of one camera coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkCoordinate {
    pub stationary_std: f64,
    /// Frames; must be ≥ 1.
    pub time_constant: f64,
}

impl WalkCoordinate {
    pub fn new(stationary_std: f64, time_constant: f64) -> Self {
        Self {
            stationary_std,
            time_constant,
        }
    }

    pub fn still(time_constant: f64) -> Self {
        Self::new(0.0, time_constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraWalkParams {
    /// Shared by the x and y offsets.
    pub position: WalkCoordinate,
    pub log_scale: WalkCoordinate,
    pub rotation: WalkCoordinate,
    pub shear: WalkCoordinate,
    pub log_aspect: WalkCoordinate,
    pub pixel_noise_std: f64,
    pub mean: CameraState,
}

impl CameraWalkParams {
    /// Shake in position, scale and rotation.
    pub fn clock_default() -> Self {
        Self {
            position: WalkCoordinate::new(1.5, 24.0),
            log_scale: WalkCoordinate::new(0.06, 24.0),
            rotation: WalkCoordinate::new(0.12, 24.0),
            shear: WalkCoordinate::still(24.0),
            log_aspect: WalkCoordinate::still(24.0),
            pixel_noise_std: 0.08,
            mean: CameraState::identity(),
        }
    }

    /// Clock shake plus shear and aspect-ratio changes.
    pub fn mnist_default() -> Self {
        Self {
            shear: WalkCoordinate::new(0.08, 24.0),
            log_aspect: WalkCoordinate::new(0.05, 24.0),
            ..Self::clock_default()
        }
    }

    /// No shake, no noise.
    pub fn still() -> Self {
        let c = WalkCoordinate::still(24.0);
        Self {
            position: c,
            log_scale: c,
            rotation: c,
            shear: c,
            log_aspect: c,
            pixel_noise_std: 0.0,
            mean: CameraState::identity(),
        }
    }

    /// Per-coordinate walk parameters in [`CameraState::to_array`] order.
    pub fn coordinates(&self) -> [WalkCoordinate; 6] {
        [
            self.position,
            self.position,
            self.log_scale,
            self.rotation,
            self.shear,
            self.log_aspect,
        ]
    }

    pub fn validate(&self) -> crate::Result<()> {
        for c in self.coordinates() {
            if !(c.time_constant >= 1.0) || !(c.stationary_std >= 0.0) {
                return Err(crate::Error::InvalidArgument(format!(
                    "camera walk coordinate {c:?}: need time constant ≥ 1 and std ≥ 0"
                )));
            }
        }
        if !(self.pixel_noise_std >= 0.0) {
            return Err(crate::Error::InvalidArgument(
                "pixel noise std must be ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// A draw from the walk's stationary distribution.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> CameraState {
        let mean = self.mean.to_array();
        let coords = self.coordinates();
        let mut out = [0.0; 6];
        for i in 0..6 {
            let eta: f64 = rng.sample(StandardNormal);
            out[i] = mean[i] + coords[i].stationary_std * eta;
        }
        CameraState::from_array(out)
    }
}

/// One step of a discrete Ornstein–Uhlenbeck walk per coordinate:
/// `p ← p + (μ − p)/τ + σ·√(1 − (1 − 1/τ)²)·η`, whose stationary standard
/// deviation is exactly `σ`.
pub fn camera_walk_step<R: Rng + ?Sized>(
    state: &CameraState,
    params: &CameraWalkParams,
    rng: &mut R,
) -> CameraState {
    let p = state.to_array();
    let mean = params.mean.to_array();
    let coords = params.coordinates();
    let mut out = [0.0; 6];
    for i in 0..6 {
        let a = 1.0 / coords[i].time_constant;
        let keep = 1.0 - a;
        let eta: f64 = rng.sample(StandardNormal);
        let noise = coords[i].stationary_std * (1.0 - keep * keep).sqrt();
        out[i] = p[i] + (mean[i] - p[i]) * a + noise * eta;
    }
    CameraState::from_array(out)
}
