use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::dims(format!(
                "{height}x{width} frame needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }
}

/// Means of `block × block` tiles in raster order.
pub fn downsample_blocks(frame: &Frame, block: usize) -> Result<Vec<f64>> {
    if block == 0 || !frame.height.is_multiple_of(block) || !frame.width.is_multiple_of(block) {
        return Err(Error::dims(format!(
            "{}x{} frame is not divisible into {block}x{block} blocks",
            frame.height, frame.width
        )));
    }
    let (bh, bw) = (frame.height / block, frame.width / block);
    let mut out = vec![0.0; bh * bw];
    for r in 0..frame.height {
        for c in 0..frame.width {
            out[(r / block) * bw + c / block] += frame.get(r, c);
        }
    }
    let n = (block * block) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

pub fn downsample_4x4(frame: &Frame) -> Result<Vec<f64>> {
    downsample_blocks(frame, 4)
}

/// 4×4 block means of every row of `frames`, each row an `height × width` image.
pub fn downsample_rows(frames: &Matrix, height: usize, width: usize) -> Result<Matrix> {
    if frames.cols() != height * width {
        return Err(Error::dims("downsample: row width differs from frame size"));
    }
    let rows = frames
        .row_iter()
        .map(|r| downsample_4x4(&Frame::new(height, width, r.to_vec())?))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Binary PGM (P5, maxval 255), pixel = round(clamp(v, 0, 1)·255).
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(
        frame
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image() {
        let f = Frame::new(28, 28, vec![0.37; 784]).unwrap();
        let d = downsample_4x4(&f).unwrap();
        assert_eq!(d.len(), 49);
        assert!(d.iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn single_block() {
        let mut f = Frame::zeros(28, 28);
        for r in 8..12 {
            for c in 4..8 {
                f.set(r, c, 1.0);
            }
        }
        let d = downsample_4x4(&f).unwrap();
        assert_eq!(d.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(d[2 * 7 + 1], 1.0);
        assert_eq!(d.iter().filter(|&&v| v == 0.0).count(), 48);
    }

    #[test]
    fn matches_naive_block_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Frame::new(
            28,
            28,
            (0..784).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let d = downsample_4x4(&f).unwrap();
        for br in 0..7 {
            for bc in 0..7 {
                let mut s = 0.0;
                for r in 0..28 {
                    for c in 0..28 {
                        if r / 4 == br && c / 4 == bc {
                            s += f.get(r, c);
                        }
                    }
                }
                assert_eq!(d[br * 7 + bc], s / 16.0);
            }
        }
    }

    #[test]
    fn indivisible_is_an_error() {
        assert!(downsample_4x4(&Frame::zeros(10, 12)).is_err());
    }

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pgm");
        let f = Frame::new(2, 3, vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.2]).unwrap();
        write_pgm(&p, &f).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 255, 255, 0, 51]);
    }
}
