//! Real-valued image planes and the border/sampling helpers the flow
//! estimator shares.

use crate::exec::Exec;
use crate::GrayFrame;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_frame(frame: &GrayFrame) -> Self {
        Plane {
            width: frame.width(),
            height: frame.height(),
            data: frame.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn resized(&self, width: usize, height: usize) -> Plane {
        Plane {
            width,
            height,
            data: crate::frame::resample(&self.data, self.width, self.height, width, height),
        }
    }

    /// Separable 5-tap binomial low-pass, reflect-101 borders.
    pub fn binomial_smooth(&self, exec: Exec) -> Plane {
        const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        exec.for_each_row(&mut tmp, w, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = TAPS
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let yy = reflect101(y as isize + k as isize - 2, h);
                        t * self.data[yy * w + x]
                    })
                    .sum();
            }
        });
        let mut data = vec![0.0; w * h];
        exec.for_each_row(&mut data, w, |y, row| {
            let src = &tmp[y * w..(y + 1) * w];
            for (x, out) in row.iter_mut().enumerate() {
                *out = TAPS
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * src[reflect101(x as isize + k as isize - 2, w)])
                    .sum();
            }
        });
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// Mirror an index about the edge pixels without repeating them
/// (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Bilinear sample at `(x, y)` with coordinates clamped into the image.
#[inline]
pub(crate) fn sample_clamped(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = data[y0 * w + x0] + (data[y0 * w + x1] - data[y0 * w + x0]) * fx;
    let bot = data[y1 * w + x0] + (data[y1 * w + x1] - data[y1 * w + x0]) * fx;
    top + (bot - top) * fy
}
