//! Collision-time detection from the frame-difference signal.
//!
//! The mean absolute difference between consecutive frames is smoothed with
//! a centered rolling mean, standardized against the whole series, and the
//! strongest sample above the threshold (or the global maximum when none
//! crosses) is taken as the collision frame.

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::{Clip, Error, Result};

/// Working resolution shared by the temporal and spatial stages.
pub const WORK_WIDTH: usize = 320;
pub const WORK_HEIGHT: usize = 180;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Rolling-mean width, odd.
    pub window: usize,
    /// Z-score a sample must exceed to count as an anomaly candidate.
    pub threshold: f64,
    pub eps: f64,
    pub work_width: usize,
    pub work_height: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 5,
            threshold: 1.5,
            eps: 1e-8,
            work_width: WORK_WIDTH,
            work_height: WORK_HEIGHT,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smoothing window must be odd and positive, got {}",
                self.window
            )));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("threshold must be a number".into()));
        }
        if self.work_width == 0 || self.work_height == 0 {
            return Err(Error::Config("working resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Mean absolute difference of each consecutive frame pair; length `N - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreSeries {
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemporalResult {
    pub peak_frame: usize,
    pub time_sec: f64,
    /// True when some sample exceeded the threshold.
    pub thresholded: bool,
}

/// Everything computed on the way to a [`TemporalResult`], kept for tracing.
#[derive(Debug, Clone)]
pub struct TemporalTrace {
    pub diffs: DiffSeries,
    pub smoothed: Vec<f64>,
    pub z: ZScoreSeries,
    pub result: TemporalResult,
}

pub fn frame_diff_series(clip: &Clip, cfg: &DetectorConfig) -> DiffSeries {
    frame_diff_series_with(clip, cfg, Exec::default())
}

pub fn frame_diff_series_with(clip: &Clip, cfg: &DetectorConfig, exec: Exec) -> DiffSeries {
    let frames = clip.working_frames(0..=clip.len() - 1, cfg.work_width, cfg.work_height, exec);
    let values = exec.map_range(0..frames.len() - 1, |t| {
        let (a, b) = (frames[t].data(), frames[t + 1].data());
        let sum: f64 = a
            .iter()
            .zip(b)
            .map(|(&p, &q)| (q as f64 - p as f64).abs())
            .sum();
        sum / a.len() as f64
    });
    DiffSeries { values }
}

/// Centered rolling mean over `|s - t| <= window / 2`, truncated at the ends
/// and normalized by the number of samples actually in the window.
pub fn rolling_mean(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "window must be odd");
    let n = series.len();
    let half = window / 2;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Standardizes with the series mean and population standard deviation.
pub fn zscore(smoothed: &[f64], eps: f64) -> ZScoreSeries {
    assert!(!smoothed.is_empty(), "z-score of an empty series");
    let n = smoothed.len() as f64;
    let mu = smoothed.iter().sum::<f64>() / n;
    let var = smoothed.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let values = smoothed.iter().map(|x| (x - mu) / (sigma + eps)).collect();
    ZScoreSeries {
        values,
        mu,
        sigma,
        eps,
    }
}

/// Index of the largest z-score among those above `tau`, or of the global
/// maximum when none is. Ties go to the smallest index.
pub fn detect_peak(z: &[f64], tau: f64) -> (usize, bool) {
    assert!(!z.is_empty(), "peak of an empty series");
    let argmax = |pred: &dyn Fn(f64) -> bool| {
        z.iter()
            .enumerate()
            .filter(|(_, &v)| pred(v))
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, b)) if v <= b => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| i)
    };
    match argmax(&|v| v > tau) {
        Some(i) => (i, true),
        None => (argmax(&|_| true).unwrap_or(0), false),
    }
}

pub fn locate_accident(clip: &Clip, cfg: &DetectorConfig) -> Result<TemporalResult> {
    Ok(trace_accident(clip, cfg, Exec::default())?.result)
}

pub fn trace_accident(clip: &Clip, cfg: &DetectorConfig, exec: Exec) -> Result<TemporalTrace> {
    cfg.validate()?;
    let diffs = frame_diff_series_with(clip, cfg, exec);
    let smoothed = rolling_mean(&diffs.values, cfg.window);
    let z = zscore(&smoothed, cfg.eps);
    let (peak_frame, thresholded) = detect_peak(&z.values, cfg.threshold);
    let result = TemporalResult {
        peak_frame,
        time_sec: peak_frame as f64 / clip.fps(),
        thresholded,
    };
    Ok(TemporalTrace {
        diffs,
        smoothed,
        z,
        result,
    })
}
