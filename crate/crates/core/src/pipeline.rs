//! End-to-end orchestration: configuration, per-clip prediction, batch runs
//! with per-video isolation, diagnostic traces and synthetic suite export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::EmbeddingBank;
use crate::classify::{
    aggregate_image_embedding, build_class_centroids, classify, default_prompt_sets,
    load_prompt_sets, select_peak_frames, ClassCentroids, PEAK_FRAMES,
};
use crate::frame::{load_clip, write_pgm};
use crate::metric::{write_predictions, Prediction, ScoreConfig};
use crate::spatial::{trace_impact, ImpactPoint, SpatialConfig};
use crate::synth::{suite_specs, GroundTruth};
use crate::temporal::{trace_accident, DetectorConfig, TemporalResult};
use crate::{Clip, ClipManifest, CollisionClass, Error, Exec, Result};

/// Class written when classification is disabled.
pub const PLACEHOLDER_CLASS: CollisionClass = CollisionClass::Single;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub spatial: SpatialConfig,
    pub score: ScoreConfig,
    /// Prompt-set JSON; the bundled set is used when absent.
    pub prompts: Option<PathBuf>,
    pub prompt_bank: Option<PathBuf>,
    pub frame_bank: Option<PathBuf>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            spatial: SpatialConfig::default(),
            score: ScoreConfig::default(),
            prompts: None,
            prompt_bank: None,
            frame_bank: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; missing fields keep their defaults and relative
    /// paths resolve against the config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.prompts, &mut cfg.prompt_bank, &mut cfg.frame_bank]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.detector.validate()?;
        self.spatial.validate()?;
        self.score.validate()
    }
}

/// Class centroids plus the frame embeddings they are compared against.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub centroids: ClassCentroids,
    pub frame_bank: EmbeddingBank,
}

impl Classifier {
    pub fn new(centroids: ClassCentroids, frame_bank: EmbeddingBank) -> Result<Self> {
        if frame_bank.section() != crate::bank::Section::Frames {
            return Err(Error::Bank("expected a frames bank, got a prompts bank".into()));
        }
        if frame_bank.dim() != centroids.dim() {
            return Err(Error::DimensionMismatch {
                expected: centroids.dim(),
                actual: frame_bank.dim(),
            });
        }
        Ok(Classifier {
            centroids,
            frame_bank,
        })
    }

    /// Loads the banks and prompt sets named in `cfg`.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let (Some(pb), Some(fb)) = (&cfg.prompt_bank, &cfg.frame_bank) else {
            return Err(Error::Config(
                "classification needs both a prompt bank and a frame bank".into(),
            ));
        };
        let sets = match &cfg.prompts {
            Some(p) => load_prompt_sets(p)?,
            None => default_prompt_sets(),
        };
        let centroids = build_class_centroids(&EmbeddingBank::load(pb)?, &sets)?;
        Classifier::new(centroids, EmbeddingBank::load(fb)?)
    }
}

/// Everything learned about one clip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoOutcome {
    pub prediction: Prediction,
    pub temporal: TemporalResult,
    pub impact: ImpactPoint,
    pub spatial_window: [usize; 2],
    /// Frames whose embeddings feed the classifier.
    pub class_frames: [usize; PEAK_FRAMES],
    /// Per-class scores in taxonomy order, when classified.
    pub class_scores: Option<[f64; 5]>,
}

pub fn predict_clip(
    clip: &Clip,
    cfg: &PipelineConfig,
    classifier: Option<&Classifier>,
    exec: Exec,
) -> Result<VideoOutcome> {
    Ok(trace_clip(clip, cfg, classifier, exec)?.outcome)
}

/// Per-clip intermediate signals alongside the outcome.
#[derive(Debug, Clone)]
pub struct ClipTrace {
    pub temporal: crate::temporal::TemporalTrace,
    pub spatial: crate::spatial::SpatialTrace,
    pub outcome: VideoOutcome,
}

pub fn trace_clip(
    clip: &Clip,
    cfg: &PipelineConfig,
    classifier: Option<&Classifier>,
    exec: Exec,
) -> Result<ClipTrace> {
    let temporal = trace_accident(clip, &cfg.detector, exec)?;
    let peak = temporal.result.peak_frame;
    let spatial = trace_impact(clip, Some(peak), &cfg.spatial, exec)?;
    let class_frames = select_peak_frames(clip.len(), peak);
    let (class, class_scores) = match classifier {
        Some(c) => {
            let v = aggregate_image_embedding(&c.frame_bank, clip.id(), &class_frames)?;
            let r = classify(&v, &c.centroids)?;
            (r.predicted, Some(r.scores))
        }
        None => (PLACEHOLDER_CLASS, None),
    };
    let impact = spatial.impact;
    let prediction = Prediction {
        video_id: clip.id().to_string(),
        time_sec: temporal.result.time_sec,
        cx: impact.cx,
        cy: impact.cy,
        class,
    };
    let outcome = VideoOutcome {
        prediction,
        temporal: temporal.result,
        impact,
        spatial_window: [*spatial.window.start(), *spatial.window.end()],
        class_frames,
        class_scores,
    };
    Ok(ClipTrace {
        temporal,
        spatial,
        outcome,
    })
}

pub fn predict_manifest(
    manifest: &Path,
    cfg: &PipelineConfig,
    classifier: Option<&Classifier>,
    exec: Exec,
) -> Result<VideoOutcome> {
    let clip = load_clip(&ClipManifest::from_path(manifest)?)?;
    predict_clip(&clip, cfg, classifier, exec)
}

/// Runs every manifest through the pipeline with `cfg.workers` threads.
/// Results come back in input order and a failing video never aborts the
/// others.
pub fn predict_batch(
    manifests: &[PathBuf],
    cfg: &PipelineConfig,
    classifier: Option<&Classifier>,
) -> Result<Vec<Result<VideoOutcome>>> {
    cfg.validate()?;
    let run = |exec: Exec| {
        exec.map(manifests, |m| {
            let r = predict_manifest(m, cfg, classifier, exec);
            match &r {
                Ok(o) => log::info!(
                    "{}: t={:.2}s impact=({:.3}, {:.3}) class={}",
                    o.prediction.video_id,
                    o.prediction.time_sec,
                    o.prediction.cx,
                    o.prediction.cy,
                    o.prediction.class
                ),
                Err(e) => log::error!("{}: {e}", m.display()),
            }
            r
        })
    };
    #[cfg(not(feature = "parallel"))]
    if cfg.workers > 1 {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    #[cfg(feature = "parallel")]
    if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        return Ok(pool.install(|| run(Exec::Parallel)));
    }
    Ok(run(Exec::Sequential))
}

/// Frames each video needs embedded, keyed by video id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRequest {
    pub manifest: PathBuf,
    pub frames: Vec<usize>,
}

pub fn frame_requests<'a>(
    runs: impl IntoIterator<Item = (&'a Path, &'a VideoOutcome)>,
) -> BTreeMap<String, FrameRequest> {
    runs.into_iter()
        .map(|(manifest, o)| {
            let mut frames = o.class_frames.to_vec();
            frames.dedup();
            (
                o.prediction.video_id.clone(),
                FrameRequest {
                    manifest: manifest.to_path_buf(),
                    frames,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct WindowReport<'a> {
    video_id: &'a str,
    n_frames: usize,
    fps: f64,
    peak_frame: usize,
    time_sec: f64,
    thresholded: bool,
    spatial_window: [usize; 2],
    class_frames: [usize; PEAK_FRAMES],
    impact: ImpactPoint,
}

/// Writes `signal.csv`, `magnitude.pgm` and `window.json` for one clip.
pub fn write_trace(clip: &Clip, cfg: &PipelineConfig, out_dir: &Path, exec: Exec) -> Result<ClipTrace> {
    cfg.validate()?;
    let trace = trace_clip(clip, cfg, None, exec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let signal = out_dir.join("signal.csv");
    let mut w = csv::Writer::from_path(&signal)?;
    w.write_record(["frame", "diff", "smoothed", "z"])?;
    let t = &trace.temporal;
    for i in 0..t.diffs.values.len() {
        w.serialize((i, t.diffs.values[i], t.smoothed[i], t.z.values[i]))?;
    }
    w.flush().map_err(|e| Error::io(&signal, e))?;

    write_pgm(&out_dir.join("magnitude.pgm"), &trace.spatial.thresholded.to_frame())?;

    let o = &trace.outcome;
    let report = WindowReport {
        video_id: clip.id(),
        n_frames: clip.len(),
        fps: clip.fps(),
        peak_frame: o.temporal.peak_frame,
        time_sec: o.temporal.time_sec,
        thresholded: o.temporal.thresholded,
        spatial_window: o.spatial_window,
        class_frames: o.class_frames,
        impact: o.impact,
    };
    let path = out_dir.join("window.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(trace)
}

/// Writes `clip` as PGM frames plus `manifest.json` under `dir` and returns
/// the manifest path.
pub fn export_clip(clip: &Clip, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut frame_files = Vec::with_capacity(clip.len());
    for (i, f) in clip.frames().iter().enumerate() {
        let name = PathBuf::from(format!("frame_{i:05}.pgm"));
        write_pgm(&dir.join(&name), f)?;
        frame_files.push(name);
    }
    let manifest = ClipManifest {
        id: clip.id().to_string(),
        fps: clip.fps(),
        frame_files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Renders a synthetic suite into `dir`: one sub-directory per clip,
/// `gt.csv` with the ground truth and `manifests.txt` listing the
/// manifests. Returns manifest paths and ground truth in suite order.
pub fn write_synth_suite(
    dir: &Path,
    seed: u64,
    count: usize,
    exec: Exec,
) -> Result<Vec<(PathBuf, GroundTruth)>> {
    if count == 0 {
        return Err(Error::Scene("suite needs at least one clip".into()));
    }
    let specs = suite_specs(seed, count);
    let written = exec.map(&specs, |spec| -> Result<(PathBuf, GroundTruth)> {
        let (clip, gt) = crate::synth::generate_clip(spec)?;
        Ok((export_clip(&clip, &dir.join(&spec.id))?, gt))
    });
    let written: Vec<_> = written.into_iter().collect::<Result<_>>()?;

    let gt_path = dir.join("gt.csv");
    let file = fs::File::create(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let gts: Vec<Prediction> = written.iter().map(|(_, g)| g.clone()).collect();
    write_predictions(file, &gts)?;

    let list = dir.join("manifests.txt");
    let mut text = String::new();
    for (m, _) in &written {
        text.push_str(&format!("{}\n", m.strip_prefix(dir).unwrap_or(m).display()));
    }
    fs::write(&list, text).map_err(|e| Error::io(&list, e))?;
    Ok(written)
}
