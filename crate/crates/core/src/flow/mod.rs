//! Dense optical flow after Farnebäck: both frames are described by local
//! quadratic expansions, and the displacement relating the two expansions
//! is solved per pixel from window-aggregated normal equations, refined
//! coarse-to-fine over a Gaussian pyramid.
//!
//! The returned field maps pixels of the first frame to the second:
//! `b(p + flow(p)) ≈ a(p)`.

mod plane;
mod poly;

use serde::{Deserialize, Serialize};

pub use poly::{poly_expansion, PolyExpansion, Quadratic};

use crate::exec::Exec;
use crate::{Error, GrayFrame, Result};
use plane::{sample_clamped, Plane};
use poly::Expander;

/// Relative determinant below which the aggregated system is treated as
/// singular and the prior displacement is kept.
const SINGULAR_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyr_scale: f64,
    pub levels: usize,
    pub winsize: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyr_scale: 0.5,
            levels: 3,
            winsize: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.2,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.pyr_scale > 0.0 && self.pyr_scale < 1.0) {
            return fail(format!("pyr_scale must be in (0, 1), got {}", self.pyr_scale));
        }
        if self.levels == 0 {
            return fail("levels must be >= 1".into());
        }
        if self.winsize < 3 || self.winsize.is_multiple_of(2) {
            return fail(format!("winsize must be odd and >= 3, got {}", self.winsize));
        }
        if self.iterations == 0 {
            return fail("iterations must be >= 1".into());
        }
        if self.poly_n != 5 && self.poly_n != 7 {
            return fail(format!("poly_n must be 5 or 7, got {}", self.poly_n));
        }
        if self.poly_sigma.is_nan() || self.poly_sigma <= 0.0 {
            return fail("poly_sigma must be positive".into());
        }
        Ok(())
    }
}

/// Per-pixel displacement in pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            fx: vec![0.0; width * height],
            fy: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        FlowField {
            width,
            height,
            fx: vec![dx; width * height],
            fy: vec![dy; width * height],
        }
    }

    pub fn new(width: usize, height: usize, fx: Vec<f64>, fy: Vec<f64>) -> Result<Self> {
        if fx.len() != width * height || fy.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: fx.len().min(fy.len()),
            });
        }
        if fx.iter().chain(&fy).any(|v| !v.is_finite()) {
            return Err(Error::Frame("flow contains non-finite values".into()));
        }
        Ok(FlowField {
            width,
            height,
            fx,
            fy,
        })
    }

    fn from_vectors(width: usize, height: usize, v: Vec<[f64; 2]>) -> Self {
        let (fx, fy) = v.into_iter().map(|[a, b]| (a, b)).unzip();
        FlowField {
            width,
            height,
            fx,
            fy,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fx(&self) -> &[f64] {
        &self.fx
    }

    pub fn fy(&self) -> &[f64] {
        &self.fy
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.width + x;
        [self.fx[i], self.fy[i]]
    }

    /// Bilinear resize with components rescaled to the new pixel units.
    fn upsampled(&self, width: usize, height: usize) -> FlowField {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let fx = crate::frame::resample(&self.fx, self.width, self.height, width, height);
        let fy = crate::frame::resample(&self.fy, self.width, self.height, width, height);
        FlowField {
            width,
            height,
            fx: fx.into_iter().map(|v| v * sx).collect(),
            fy: fy.into_iter().map(|v| v * sy).collect(),
        }
    }
}

/// Per-pixel `sqrt(fx² + fy²)`.
pub fn flow_magnitude(flow: &FlowField) -> Vec<f64> {
    flow.fx.iter().zip(&flow.fy).map(|(x, y)| x.hypot(*y)).collect()
}

/// Samples `frame` at `p + flow(p)` with bilinear interpolation, clamping
/// coordinates to the image.
pub fn warp_frame(frame: &GrayFrame, flow: &FlowField) -> Result<GrayFrame> {
    if frame.width() != flow.width || frame.height() != flow.height {
        return Err(Error::DimensionMismatch {
            expected: frame.width() * frame.height(),
            actual: flow.width * flow.height,
        });
    }
    let src = Plane::from_frame(frame);
    let (w, h) = (src.width, src.height);
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            sample_clamped(&src.data, w, h, x + flow.fx[i], y + flow.fy[i]) as f32
        })
        .collect();
    Ok(GrayFrame::from_clamped(w, h, data))
}

/// Refines `prior` from a pair of expansions with `iterations` passes of the
/// displacement update, aggregating the normal equations over a
/// `winsize × winsize` box.
pub fn flow_level(
    exp_a: &PolyExpansion,
    exp_b: &PolyExpansion,
    prior: &FlowField,
    winsize: usize,
    iterations: usize,
) -> Result<FlowField> {
    flow_level_with(exp_a, exp_b, prior, winsize, iterations, Exec::default())
}

pub(crate) fn flow_level_with(
    exp_a: &PolyExpansion,
    exp_b: &PolyExpansion,
    prior: &FlowField,
    winsize: usize,
    iterations: usize,
    exec: Exec,
) -> Result<FlowField> {
    let (w, h) = (exp_a.width, exp_a.height);
    if (exp_b.width, exp_b.height) != (w, h) || (prior.width, prior.height) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: w * h,
            actual: exp_b.width * exp_b.height,
        });
    }
    let radius = winsize / 2;
    let mut flow = prior.clone();
    // Coefficient planes of the second expansion, sampled at displaced points.
    let b_planes: [Vec<f64>; 5] = [
        exp_b.coeffs.iter().map(|q| q.bx).collect(),
        exp_b.coeffs.iter().map(|q| q.by).collect(),
        exp_b.coeffs.iter().map(|q| q.axx).collect(),
        exp_b.coeffs.iter().map(|q| q.axy).collect(),
        exp_b.coeffs.iter().map(|q| q.ayy).collect(),
    ];

    for _ in 0..iterations {
        // Per-pixel normal-equation terms [g11, g12, g22, h1, h2].
        let mut terms = vec![[0.0f64; 5]; w * h];
        exec.for_each_row(&mut terms, w, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let i = y * w + x;
                let qa = &exp_a.coeffs[i];
                let (dx, dy) = (flow.fx[i], flow.fy[i]);
                let (sx, sy) = (x as f64 + dx, y as f64 + dy);
                let s = |p: &Vec<f64>| sample_clamped(p, w, h, sx, sy);
                let (bx2, by2) = (s(&b_planes[0]), s(&b_planes[1]));
                let a11 = 0.5 * (qa.axx + s(&b_planes[2]));
                let a12 = 0.5 * (qa.axy + s(&b_planes[3]));
                let a22 = 0.5 * (qa.ayy + s(&b_planes[4]));
                let db1 = -0.5 * (bx2 - qa.bx) + a11 * dx + a12 * dy;
                let db2 = -0.5 * (by2 - qa.by) + a12 * dx + a22 * dy;
                *out = [
                    a11 * a11 + a12 * a12,
                    a12 * (a11 + a22),
                    a12 * a12 + a22 * a22,
                    a11 * db1 + a12 * db2,
                    a12 * db1 + a22 * db2,
                ];
            }
        });
        let sums = box_sum(&terms, w, h, radius, exec);

        let mut next = vec![[0.0f64; 2]; w * h];
        exec.for_each_row(&mut next, w, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let i = y * w + x;
                let [g11, g12, g22, h1, h2] = sums[i];
                let det = g11 * g22 - g12 * g12;
                let tr = g11 + g22;
                *out = if det > SINGULAR_RATIO * tr * tr {
                    [(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det]
                } else {
                    [flow.fx[i], flow.fy[i]]
                };
            }
        });
        flow = FlowField::from_vectors(w, h, next);
    }
    Ok(flow)
}

/// Box sums over windows truncated at the image border.
fn box_sum(src: &[[f64; 5]], w: usize, h: usize, r: usize, exec: Exec) -> Vec<[f64; 5]> {
    let add = |a: &mut [f64; 5], b: &[f64; 5]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    let sub = |a: &mut [f64; 5], b: &[f64; 5]| a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);

    // running sum along each row
    let mut horiz = vec![[0.0f64; 5]; w * h];
    exec.for_each_row(&mut horiz, w, |y, row| {
        let s = &src[y * w..(y + 1) * w];
        let mut acc = [0.0f64; 5];
        for v in &s[..r.min(w - 1) + 1] {
            add(&mut acc, v);
        }
        for x in 0..w {
            row[x] = acc;
            if x + r + 1 < w {
                add(&mut acc, &s[x + r + 1]);
            }
            if x >= r {
                sub(&mut acc, &s[x - r]);
            }
        }
    });

    // running sum down the columns, one full row at a time
    let mut out = vec![[0.0f64; 5]; w * h];
    let mut acc = vec![[0.0f64; 5]; w];
    for y in 0..=r.min(h - 1) {
        for (a, v) in acc.iter_mut().zip(&horiz[y * w..(y + 1) * w]) {
            add(a, v);
        }
    }
    for y in 0..h {
        out[y * w..(y + 1) * w].copy_from_slice(&acc);
        if y + r + 1 < h {
            let row = &horiz[(y + r + 1) * w..(y + r + 2) * w];
            acc.iter_mut().zip(row).for_each(|(a, v)| add(a, v));
        }
        if y >= r {
            let row = &horiz[(y - r) * w..(y - r + 1) * w];
            acc.iter_mut().zip(row).for_each(|(a, v)| sub(a, v));
        }
    }
    out
}

/// Pyramid level sizes, finest first: each level is `ceil(prev * scale)`
/// and the pyramid stops before a level would be smaller than `min_side`.
pub fn pyramid_sizes(
    width: usize,
    height: usize,
    scale: f64,
    levels: usize,
    min_side: usize,
) -> Vec<(usize, usize)> {
    let mut sizes = vec![(width, height)];
    while sizes.len() < levels {
        let (pw, ph) = *sizes.last().unwrap();
        let (nw, nh) = (
            (pw as f64 * scale).ceil() as usize,
            (ph as f64 * scale).ceil() as usize,
        );
        if nw < min_side || nh < min_side || (nw, nh) == (pw, ph) {
            break;
        }
        sizes.push((nw, nh));
    }
    sizes
}

/// A frame's polynomial expansions at every pyramid level, finest first.
/// Preparing once lets a frame take part in two consecutive pairs without
/// being expanded twice.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    levels: Vec<PolyExpansion>,
}

impl PreparedFrame {
    pub fn new(frame: &GrayFrame, params: &FlowParams) -> Result<Self> {
        Self::new_with(frame, params, Exec::default())
    }

    pub fn new_with(frame: &GrayFrame, params: &FlowParams, exec: Exec) -> Result<Self> {
        params.validate()?;
        let expander = Expander::new(params.poly_n, params.poly_sigma)?;
        let sizes = pyramid_sizes(
            frame.width(),
            frame.height(),
            params.pyr_scale,
            params.levels,
            expander.neighborhood(),
        );
        let mut plane = Plane::from_frame(frame);
        let mut levels = Vec::with_capacity(sizes.len());
        for (k, &(w, h)) in sizes.iter().enumerate() {
            if k > 0 {
                plane = plane.binomial_smooth(exec).resized(w, h);
            }
            levels.push(expander.expand(&plane, exec)?);
        }
        Ok(PreparedFrame { levels })
    }

    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn height(&self) -> usize {
        self.levels[0].height
    }
}

/// Coarse-to-fine flow between two prepared frames.
pub fn flow_between(
    a: &PreparedFrame,
    b: &PreparedFrame,
    params: &FlowParams,
    exec: Exec,
) -> Result<FlowField> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::DimensionMismatch {
            expected: a.width() * a.height(),
            actual: b.width() * b.height(),
        });
    }
    let levels = a.levels.len().min(b.levels.len());
    let mut flow: Option<FlowField> = None;
    for k in (0..levels).rev() {
        let (ea, eb) = (&a.levels[k], &b.levels[k]);
        let prior = match flow {
            None => FlowField::zeros(ea.width, ea.height),
            Some(f) => f.upsampled(ea.width, ea.height),
        };
        flow = Some(flow_level_with(ea, eb, &prior, params.winsize, params.iterations, exec)?);
    }
    Ok(flow.expect("at least one pyramid level"))
}

pub fn estimate_flow(a: &GrayFrame, b: &GrayFrame, params: &FlowParams) -> Result<FlowField> {
    estimate_flow_with(a, b, params, Exec::default())
}

pub fn estimate_flow_with(
    a: &GrayFrame,
    b: &GrayFrame,
    params: &FlowParams,
    exec: Exec,
) -> Result<FlowField> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch {
            expected: a.width() * a.height(),
            actual: b.width() * b.height(),
        });
    }
    let pa = PreparedFrame::new_with(a, params, exec)?;
    let pb = PreparedFrame::new_with(b, params, exec)?;
    flow_between(&pa, &pb, params, exec)
}
