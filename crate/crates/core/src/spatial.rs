//! Impact localization: accumulate dense-flow magnitude over a frame window
//! around the collision, keep the top percentile, and take the
//! magnitude-weighted centroid.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::flow::{flow_between, flow_magnitude, FlowParams, PreparedFrame};
use crate::temporal::{WORK_HEIGHT, WORK_WIDTH};
use crate::{Clip, Error, GrayFrame, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    /// Frames of evidence accumulated around the peak.
    pub window_frames: usize,
    pub percentile: f64,
    pub flow: FlowParams,
    /// Total mass below which the frame center is returned.
    pub mass_eps: f64,
    pub work_width: usize,
    pub work_height: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            window_frames: 30,
            percentile: 90.0,
            flow: FlowParams::default(),
            mass_eps: 1e-6,
            work_width: WORK_WIDTH,
            work_height: WORK_HEIGHT,
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_frames < 2 {
            return Err(Error::Config("window_frames must be >= 2".into()));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::Config(format!(
                "percentile must be in (0, 100), got {}",
                self.percentile
            )));
        }
        if self.work_width == 0 || self.work_height == 0 {
            return Err(Error::Config("working resolution must be positive".into()));
        }
        self.flow.validate()
    }
}

/// Per-pixel accumulated flow magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMap {
    pub width: usize,
    pub height: usize,
    pub m: Vec<f64>,
}

impl MagnitudeMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        MagnitudeMap {
            width,
            height,
            m: vec![0.0; width * height],
        }
    }

    pub fn total(&self) -> f64 {
        self.m.iter().sum()
    }

    /// Min-max scaled to 0..=255 for inspection; a flat map becomes black.
    pub fn to_frame(&self) -> GrayFrame {
        let lo = self.m.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let data = self
            .m
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    (255.0 * (v - lo) / span).round() as f32
                } else {
                    0.0
                }
            })
            .collect();
        GrayFrame::from_clamped(self.width, self.height, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactPoint {
    pub cx: f64,
    pub cy: f64,
    /// True when the map carried no mass and the frame center was returned.
    pub fallback: bool,
}

impl ImpactPoint {
    pub const CENTER: ImpactPoint = ImpactPoint {
        cx: 0.5,
        cy: 0.5,
        fallback: true,
    };
}

/// Frames of evidence: `T` frames centered on the peak (shifted inward at
/// the clip ends), or starting at `N / 3` when no peak is known.
pub fn select_window(n_frames: usize, peak: Option<usize>, window: usize) -> RangeInclusive<usize> {
    assert!(n_frames >= 2 && window >= 2);
    let last = n_frames - 1;
    match peak {
        Some(p) => {
            let len = window.min(n_frames);
            let start = p.saturating_sub(window / 2).min(n_frames - len);
            start..=start + len - 1
        }
        None => {
            let start = (n_frames / 3).min(last - 1);
            start..=(start + window - 1).min(last)
        }
    }
}

pub fn accumulate_magnitude(
    clip: &Clip,
    range: RangeInclusive<usize>,
    cfg: &SpatialConfig,
) -> Result<MagnitudeMap> {
    accumulate_magnitude_with(clip, range, cfg, Exec::default())
}

/// Sums flow magnitude over every consecutive pair in `range`. Pair flows
/// may be computed concurrently; the sum is always taken in pair order.
pub fn accumulate_magnitude_with(
    clip: &Clip,
    range: RangeInclusive<usize>,
    cfg: &SpatialConfig,
    exec: Exec,
) -> Result<MagnitudeMap> {
    cfg.validate()?;
    if range.is_empty() || *range.end() >= clip.len() {
        return Err(Error::Config(format!(
            "frame range {range:?} outside clip of {} frames",
            clip.len()
        )));
    }
    let (w, h) = (cfg.work_width, cfg.work_height);
    let mut map = MagnitudeMap::zeros(w, h);
    if range.start() == range.end() {
        return Ok(map);
    }
    let frames = clip.working_frames(range, w, h, exec);
    let prepared = exec
        .map(&frames, |f| PreparedFrame::new_with(f, &cfg.flow, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let magnitudes = exec
        .map_range(0..prepared.len() - 1, |i| {
            flow_between(&prepared[i], &prepared[i + 1], &cfg.flow, exec).map(|f| flow_magnitude(&f))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for mag in magnitudes {
        map.m.iter_mut().zip(mag).for_each(|(acc, v)| *acc += v);
    }
    Ok(map)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p / 100 * n)`
/// of the ascending order.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let rank = ((p * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as usize;
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// Zeroes every entry strictly below the `p`-th nearest-rank percentile.
pub fn percentile_threshold(map: &MagnitudeMap, p: f64) -> MagnitudeMap {
    let theta = nearest_rank(&map.m, p);
    MagnitudeMap {
        width: map.width,
        height: map.height,
        m: map.m.iter().map(|&v| if v < theta { 0.0 } else { v }).collect(),
    }
}

/// Magnitude-weighted mean of the column (`cx`) and row (`cy`) index,
/// normalized by width and height.
pub fn weighted_centroid(map: &MagnitudeMap, mass_eps: f64) -> ImpactPoint {
    let mut mass = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (u, row) in map.m.chunks_exact(map.width).enumerate() {
        for (v, &m) in row.iter().enumerate() {
            mass += m;
            sx += v as f64 * m;
            sy += u as f64 * m;
        }
    }
    if mass.is_nan() || mass < mass_eps {
        return ImpactPoint::CENTER;
    }
    ImpactPoint {
        cx: (sx / (map.width as f64 * mass)).clamp(0.0, 1.0),
        cy: (sy / (map.height as f64 * mass)).clamp(0.0, 1.0),
        fallback: false,
    }
}

/// Intermediate products of [`localize_impact`], kept for tracing.
#[derive(Debug, Clone)]
pub struct SpatialTrace {
    pub window: RangeInclusive<usize>,
    pub accumulated: MagnitudeMap,
    pub thresholded: MagnitudeMap,
    pub impact: ImpactPoint,
}

pub fn localize_impact(clip: &Clip, peak: Option<usize>, cfg: &SpatialConfig) -> Result<ImpactPoint> {
    Ok(trace_impact(clip, peak, cfg, Exec::default())?.impact)
}

pub fn trace_impact(
    clip: &Clip,
    peak: Option<usize>,
    cfg: &SpatialConfig,
    exec: Exec,
) -> Result<SpatialTrace> {
    cfg.validate()?;
    let window = select_window(clip.len(), peak, cfg.window_frames);
    let accumulated = accumulate_magnitude_with(clip, window.clone(), cfg, exec)?;
    let thresholded = percentile_threshold(&accumulated, cfg.percentile);
    let impact = weighted_centroid(&thresholded, cfg.mass_eps);
    Ok(SpatialTrace {
        window,
        accumulated,
        thresholded,
        impact,
    })
}
