use super::{CameraState, Frame};

/// Output-to-source pixel mapping for a camera pose.
///
/// In screen coordinates (x = column, y = row, y pointing down) the camera
/// applies `A = R(rotation) · Shear(shear) · diag(s·k, s/k)` about the image
/// centre and then translates by the offsets, with `s = e^{log_scale}`,
/// `k = e^{log_aspect}`. Output pixel `q` therefore samples the source at
/// `A⁻¹ (q − centre) + centre − offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    /// Row-major `A⁻¹` acting on `(x, y)`.
    inverse: [[f64; 2]; 2],
    centre: (f64, f64),
    offset: (f64, f64),
}

impl AffineMap {
    pub fn new(camera: &CameraState, height: usize, width: usize) -> Self {
        let s = camera.log_scale.exp();
        let k = camera.log_aspect.exp();
        let (sx, sy) = (s * k, s / k);
        let (sin, cos) = camera.rotation.sin_cos();
        let h = camera.shear;
        // R·Sh·D with R = [[cos, sin], [−sin, cos]] so that +x turns towards −y.
        let a = [
            [cos * sx, (cos * h + sin) * sy],
            [-sin * sx, (-sin * h + cos) * sy],
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inverse = [
            [a[1][1] / det, -a[0][1] / det],
            [-a[1][0] / det, a[0][0] / det],
        ];
        Self {
            inverse,
            centre: ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0),
            offset: (camera.x_offset, camera.y_offset),
        }
    }

    /// Source `(x, y)` sampled by output pixel `(row, col)`.
    #[inline]
    pub fn source_of(&self, row: usize, col: usize) -> (f64, f64) {
        let vx = col as f64 - self.centre.0;
        let vy = row as f64 - self.centre.1;
        let m = &self.inverse;
        (
            m[0][0] * vx + m[0][1] * vy + self.centre.0 - self.offset.0,
            m[1][0] * vx + m[1][1] * vy + self.centre.1 - self.offset.1,
        )
    }
}

/// Bilinear sample at `(x, y)`, zero outside the frame.
#[inline]
pub fn bilinear_sample(src: &Frame, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let px = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= src.height as i64 || c >= src.width as i64 {
            0.0
        } else {
            src.pixels[r as usize * src.width + c as usize]
        }
    };
    let top = px(yi, xi) * (1.0 - fx) + if fx > 0.0 { px(yi, xi + 1) * fx } else { 0.0 };
    if fy > 0.0 {
        let bottom = px(yi + 1, xi) * (1.0 - fx)
            + if fx > 0.0 {
                px(yi + 1, xi + 1) * fx
            } else {
                0.0
            };
        top * (1.0 - fy) + bottom * fy
    } else {
        top
    }
}

/// Resamples `src` as seen through `camera`.
pub fn warp_affine(src: &Frame, camera: &CameraState) -> Frame {
    let map = AffineMap::new(camera, src.height, src.width);
    let mut out = Frame::zeros(src.height, src.width);
    for r in 0..src.height {
        for c in 0..src.width {
            let (x, y) = map.source_of(r, c);
            out.pixels[r * src.width + c] = bilinear_sample(src, x, y);
        }
    }
    out
}
