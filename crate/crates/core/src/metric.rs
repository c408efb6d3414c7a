//! Challenge scoring: Gaussian similarity in time and image space, top-1
//! class accuracy, and their harmonic mean, averaged over videos.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{CollisionClass, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Temporal Gaussian width in seconds.
    pub sigma_t: f64,
    /// Spatial Gaussian width in normalized image units.
    pub sigma_s: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            sigma_t: 2.0,
            sigma_s: 0.1,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_s > 0.0) {
            return Err(Error::Config("score sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// One row of a prediction or ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub time_sec: f64,
    pub cx: f64,
    pub cy: f64,
    pub class: CollisionClass,
}

impl Prediction {
    pub fn validate(&self) -> Result<()> {
        let ok = self.time_sec >= 0.0
            && self.time_sec.is_finite()
            && (0.0..=1.0).contains(&self.cx)
            && (0.0..=1.0).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::Evaluation(format!(
                "{}: time must be >= 0 and coordinates in [0, 1] (got t={}, cx={}, cy={})",
                self.video_id, self.time_sec, self.cx, self.cy
            )))
        }
    }
}

pub fn temporal_score(t_pred: f64, t_gt: f64, sigma_t: f64) -> f64 {
    let z = (t_pred - t_gt) / sigma_t;
    (-0.5 * z * z).exp()
}

pub fn spatial_score(pred: (f64, f64), gt: (f64, f64), sigma_s: f64) -> f64 {
    let d = (pred.0 - gt.0).hypot(pred.1 - gt.1);
    let z = d / sigma_s;
    (-0.5 * z * z).exp()
}

pub fn class_score(pred: CollisionClass, gt: CollisionClass) -> f64 {
    if pred == gt {
        1.0
    } else {
        0.0
    }
}

/// `3 / (1/T + 1/S + 1/C)`, forced to zero when any component is zero.
pub fn harmonic(t: f64, s: f64, c: f64) -> f64 {
    if t <= 0.0 || s <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    3.0 / (1.0 / t + 1.0 / s + 1.0 / c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Per-video scores sorted by video id.
    pub videos: Vec<VideoScore>,
    pub mean_t: f64,
    pub mean_s: f64,
    pub mean_c: f64,
    pub mean_h: f64,
}

impl ScoreReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for v in &self.videos {
            w.serialize(v)?;
        }
        w.serialize(VideoScore {
            video_id: "MEAN".into(),
            t: self.mean_t,
            s: self.mean_s,
            c: self.mean_c,
            h: self.mean_h,
        })?;
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn score_one(pred: &Prediction, gt: &Prediction, cfg: &ScoreConfig) -> VideoScore {
    let t = temporal_score(pred.time_sec, gt.time_sec, cfg.sigma_t);
    let s = spatial_score((pred.cx, pred.cy), (gt.cx, gt.cy), cfg.sigma_s);
    let c = class_score(pred.class, gt.class);
    VideoScore {
        video_id: gt.video_id.clone(),
        t,
        s,
        c,
        h: harmonic(t, s, c),
    }
}

fn index_unique<'a>(rows: &'a [Prediction], what: &str) -> Result<HashMap<&'a str, &'a Prediction>> {
    let mut map = HashMap::with_capacity(rows.len());
    let mut dups = Vec::new();
    for r in rows {
        if map.insert(r.video_id.as_str(), r).is_some() {
            dups.push(r.video_id.as_str());
        }
    }
    if dups.is_empty() {
        Ok(map)
    } else {
        dups.sort_unstable();
        dups.dedup();
        Err(Error::Evaluation(format!("duplicate {what} ids: {}", dups.join(", "))))
    }
}

/// Scores every ground-truth video against its prediction. Predictions for
/// ids absent from the ground truth are ignored.
pub fn evaluate(preds: &[Prediction], gts: &[Prediction], cfg: &ScoreConfig) -> Result<ScoreReport> {
    cfg.validate()?;
    if gts.is_empty() {
        return Err(Error::Evaluation("ground truth is empty".into()));
    }
    let pred_by_id = index_unique(preds, "prediction")?;
    let gt_by_id = index_unique(gts, "ground-truth")?;
    let mut missing: Vec<&str> = gt_by_id
        .keys()
        .filter(|id| !pred_by_id.contains_key(*id))
        .copied()
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(Error::Evaluation(format!("missing predictions for: {}", missing.join(", "))));
    }
    let extra = pred_by_id.keys().filter(|id| !gt_by_id.contains_key(*id)).count();
    if extra > 0 {
        log::warn!("ignoring {extra} predictions without ground truth");
    }

    let sorted: BTreeMap<&str, &Prediction> = gt_by_id.into_iter().collect();
    let videos: Vec<VideoScore> = sorted
        .into_iter()
        .map(|(id, gt)| score_one(pred_by_id[id], gt, cfg))
        .collect();
    let n = videos.len() as f64;
    let mean = |f: fn(&VideoScore) -> f64| videos.iter().map(f).sum::<f64>() / n;
    Ok(ScoreReport {
        mean_t: mean(|v| v.t),
        mean_s: mean(|v| v.s),
        mean_c: mean(|v| v.c),
        mean_h: mean(|v| v.h),
        videos,
    })
}

pub fn read_predictions<R: Read>(input: R) -> Result<Vec<Prediction>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let expected = ["video_id", "time_sec", "cx", "cy", "class"];
    let headers = r.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(Error::Evaluation(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let p: Prediction = rec?;
        p.validate()?;
        rows.push(p);
    }
    Ok(rows)
}

pub fn read_predictions_file(path: &Path) -> Result<Vec<Prediction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(f)
}

pub fn write_predictions<W: Write>(out: W, rows: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["video_id", "time_sec", "cx", "cy", "class"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}
