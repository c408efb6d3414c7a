//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every line is printed even when a criterion
//! fails. The process exits 0 and the summary line reports the failure
//! count; set `CRASHPIPE_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crashpipe::bank::{frame_key, EmbeddingBank, Section};
use crashpipe::classify::{classify, default_prompt_sets, ClassCentroids};
use crashpipe::flow::{estimate_flow, FlowParams};
use crashpipe::metric::{harmonic, temporal_score, write_predictions, Prediction};
use crashpipe::pipeline::{
    predict_batch, write_synth_suite, Classifier, PipelineConfig, VideoOutcome,
};
use crashpipe::spatial::{
    localize_impact, percentile_threshold, weighted_centroid, MagnitudeMap, SpatialConfig,
};
use crashpipe::synth::{generate_clip, suite_specs, texture_frame, SceneSpec};
use crashpipe::temporal::{detect_peak, locate_accident, rolling_mean, zscore, DetectorConfig};
use crashpipe::{Exec, Result};

const SUITE_SEED: u64 = 1;
const SUITE_SIZE: usize = 50;
const EMBED_DIM: usize = 64;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn main() {
    let [spatial, class, determinism] = suite_runs(argmax_rescaling_flips()).expect("suite run");
    let verdicts = [
        temporal_suite(),
        zscore_equivalence(),
        flow_translation(),
        spatial,
        micro_oracles(),
        metric_closed_forms(),
        class,
        determinism,
    ];
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }

    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        verdicts.len() - failed.len(),
        failed.len(),
        failed.iter().map(|v| format!("\n  failed {}: {}", v.name, v.detail)).collect::<String>()
    );
    if !failed.is_empty() && std::env::var("CRASHPIPE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn temporal_suite() -> Verdict {
    let cfg = DetectorConfig::default();
    let mut hits = 0;
    let mut detect = Duration::ZERO;
    for spec in suite_specs(SUITE_SEED, SUITE_SIZE) {
        let (clip, gt) = generate_clip(&spec).unwrap();
        let start = Instant::now();
        let r = locate_accident(&clip, &cfg).unwrap();
        detect += start.elapsed();
        if (r.time_sec - gt.time_sec).abs() <= 0.25 + 1e-9 {
            hits += 1;
        }
    }
    let rate = hits as f64 / SUITE_SIZE as f64;
    let secs = detect.as_secs_f64();
    verdict(
        "temporal oracle suite",
        rate >= 0.9 && secs < 60.0,
        format!("{hits}/{SUITE_SIZE} within 0.25 s (need >= 90%), detection took {secs:.2} s (need < 60 s)"),
    )
}

// Direct transcription of the smoothing, standardization and peak rules.
fn oracle_peak(d: &[f64], w: usize, eps: f64, tau: f64) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let n = d.len();
    let half = (w / 2) as i64;
    let mut smooth = vec![0.0; n];
    for t in 0..n as i64 {
        let (mut sum, mut count) = (0.0, 0.0);
        for s in 0..n as i64 {
            if (s - t).abs() <= half {
                sum += d[s as usize];
                count += 1.0;
            }
        }
        smooth[t as usize] = sum / count;
    }
    let mu = smooth.iter().sum::<f64>() / n as f64;
    let sigma = (smooth.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z: Vec<f64> = smooth.iter().map(|x| (x - mu) / (sigma + eps)).collect();
    let mut best: Option<usize> = None;
    for t in 0..n {
        if z[t] > tau && best.is_none_or(|b| z[t] > z[b]) {
            best = Some(t);
        }
    }
    match best {
        Some(t) => (smooth, z, t, true),
        None => {
            let mut g = 0;
            for t in 1..n {
                if z[t] > z[g] {
                    g = t;
                }
            }
            (smooth, z, g, false)
        }
    }
}

fn zscore_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2a);
    let cfg = DetectorConfig::default();
    let mut mismatches = Vec::new();
    for case in 0..200 {
        let n = rng.random_range(3..=500);
        // every third series is coarsely quantized to exercise ties
        let d: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..10.0);
                if case % 3 == 0 { x.floor() } else { x }
            })
            .collect();
        let (os, oz, opeak, ocross) = oracle_peak(&d, cfg.window, cfg.eps, cfg.threshold);
        let smooth = rolling_mean(&d, cfg.window);
        let z = zscore(&smooth, cfg.eps);
        let (peak, crossed) = detect_peak(&z.values, cfg.threshold);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
        if peak != opeak || crossed != ocross || !close(&smooth, &os) || !close(&z.values, &oz) {
            mismatches.push(case);
        }
    }
    verdict(
        "z-score brute-force equivalence",
        mismatches.is_empty(),
        format!("200 series, mismatching cases: {mismatches:?}"),
    )
}

fn flow_translation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf10);
    let params = FlowParams::default();
    let (w, h, margin) = (320, 180, 30);
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let dx = rng.random_range(-3..=3) as f64;
        let dy = rng.random_range(-3..=3) as f64;
        let seed = rng.random();
        let a = texture_frame(seed, w, h, 0.0, 0.0);
        let b = texture_frame(seed, w, h, dx, dy);
        let f = estimate_flow(&a, &b, &params).unwrap();
        let (mut sum, mut count) = (0.0, 0.0);
        for y in margin..h - margin {
            for x in margin..w - margin {
                let [u, v] = f.at(x, y);
                sum += (u - dx).hypot(v - dy);
                count += 1.0;
            }
        }
        let epe = sum / count;
        worst = worst.max(epe);
        if epe < 0.5 {
            good += 1;
        }
    }
    verdict(
        "flow translation recovery",
        good as f64 / 40.0 >= 0.95,
        format!("{good}/40 cases with central mean EPE < 0.5 px (need >= 95%), worst {worst:.3} px"),
    )
}

fn micro_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xce);
    let (mut pct_bad, mut cen_bad) = (0, 0);
    let mut max_dev: f64 = 0.0;
    for case in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let m: Vec<f64> = (0..w * h)
            .map(|_| match case % 4 {
                0 => rng.random_range(0..5) as f64,
                1 if rng.random_bool(0.7) => 0.0,
                _ => rng.random_range(0.0..100.0),
            })
            .collect();
        let p = if case % 2 == 0 { 90.0 } else { rng.random_range(1.0..99.0) };
        let map = MagnitudeMap { width: w, height: h, m };

        let mut sorted = map.m.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
        let theta = sorted[rank.max(1) - 1];
        let expected: Vec<f64> = map.m.iter().map(|&v| if v < theta { 0.0 } else { v }).collect();
        let thresholded = percentile_threshold(&map, p);
        if thresholded.m != expected {
            pct_bad += 1;
        }

        let (mut s, mut su, mut sv) = (0.0, 0.0, 0.0);
        for u in 0..h {
            for v in 0..w {
                let x = thresholded.m[u * w + v];
                s += x;
                su += u as f64 * x;
                sv += v as f64 * x;
            }
        }
        let c = weighted_centroid(&thresholded, 1e-6);
        let (ex, ey) = if s < 1e-6 { (0.5, 0.5) } else { (sv / (w as f64 * s), su / (h as f64 * s)) };
        let dev = (c.cx - ex).abs().max((c.cy - ey).abs());
        max_dev = max_dev.max(dev);
        if dev > 1e-12 || c.fallback != (s < 1e-6) {
            cen_bad += 1;
        }
    }
    verdict(
        "percentile/centroid micro-oracles",
        pct_bad == 0 && cen_bad == 0,
        format!(
            "100 maps: {pct_bad} threshold mismatches vs full sort, {cen_bad} centroid mismatches (max deviation {max_dev:.1e})"
        ),
    )
}

fn metric_closed_forms() -> Verdict {
    let t = temporal_score(2.0, 0.0, 2.0);
    let h = harmonic(0.606531, 1.0, 1.0);
    let t_ok = (t - 0.606531).abs() <= 1e-6;
    let h_ok = (h - 0.822201).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(0x3e7);
    let mut zero_ok = true;
    let mut min_violations = 0;
    let mut example = None;
    for i in 0..1000 {
        let mut v = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        if harmonic(v[0], v[1], v[2]) > v[0].min(v[1]).min(v[2]) {
            min_violations += 1;
            example.get_or_insert(v);
        }
        v[i % 3] = 0.0;
        zero_ok &= harmonic(v[0], v[1], v[2]) == 0.0;
    }
    verdict(
        "metric closed forms",
        t_ok && h_ok && zero_ok && min_violations == 0,
        format!(
            "temporal_score(2, 2) = {t:.7} [{}]; harmonic(0.606531, 1, 1) = {h:.7} vs 0.822201 [{}]; \
             zero component gives 0 [{}]; H <= min(T, S, C) violated on {min_violations}/1000 triples{}",
            ok(t_ok),
            ok(h_ok),
            ok(zero_ok),
            example.map_or(String::new(), |v| format!(
                " (e.g. {:.3?} gives H = {:.3})",
                v,
                harmonic(v[0], v[1], v[2])
            ))
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b { "ok" } else { "off" }
}

/// Draws where positive rescaling of `v` changed the predicted class.
fn argmax_rescaling_flips() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa5);
    let mut flips = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(2..64);
        let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let centroids = ClassCentroids::new((0..5).map(|_| vec(&mut rng)).collect()).unwrap();
        let v = vec(&mut rng);
        let c = 10f64.powf(rng.random_range(-6.0..6.0));
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        if classify(&v, &centroids).unwrap().predicted != classify(&scaled, &centroids).unwrap().predicted {
            flips += 1;
        }
    }
    flips
}

/// Oracle banks: random prompt vectors, and for a video of class `k` frame
/// embeddings alternating `t_k + e_k` and `t_k - e_k` with `e_k ⟂ t_k` and
/// `|t_k ± e_k| = 1`, so any 8 consecutive frames average to `t_k`.
fn oracle_banks(specs: &[SceneSpec]) -> (EmbeddingBank, EmbeddingBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb4);
    let mut prompts = EmbeddingBank::new(Section::Prompts, EMBED_DIM);
    let mut centroids = Vec::new();
    for set in default_prompt_sets() {
        let mut t = vec![0.0f64; EMBED_DIM];
        for p in &set.prompts {
            let raw: Vec<f32> = (0..EMBED_DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let norm = raw.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            for (ti, &x) in t.iter_mut().zip(&raw) {
                *ti += x as f64 / norm / set.prompts.len() as f64;
            }
            prompts.insert(p.clone(), raw).unwrap();
        }
        let tt: f64 = t.iter().map(|x| x * x).sum();
        let mut e: Vec<f64> = (0..EMBED_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj = e.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / tt;
        e.iter_mut().zip(&t).for_each(|(a, b)| *a -= proj * b);
        let scale = ((1.0 - tt) / e.iter().map(|x| x * x).sum::<f64>()).sqrt();
        e.iter_mut().for_each(|a| *a *= scale);
        centroids.push((t, e));
    }
    let mut frames = EmbeddingBank::new(Section::Frames, EMBED_DIM);
    for spec in specs {
        let (t, e) = &centroids[spec.class_label.index()];
        for i in 0..spec.n_frames {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v = t.iter().zip(e).map(|(a, b)| (a + sign * b) as f32).collect();
            frames.insert(frame_key(&spec.id, i), v).unwrap();
        }
    }
    (prompts, frames)
}

fn csv_bytes(outcomes: &[Result<VideoOutcome>]) -> Vec<u8> {
    let rows: Vec<Prediction> = outcomes.iter().map(|o| o.as_ref().unwrap().prediction.clone()).collect();
    let mut buf = Vec::new();
    write_predictions(&mut buf, &rows).unwrap();
    buf
}

/// Renders the suite to disk once and runs the full pipeline over it with
/// one and with eight workers.
fn suite_runs(rescale_flips: usize) -> Result<[Verdict; 3]> {
    let dir = tempfile::tempdir().expect("temp dir");
    let specs = suite_specs(SUITE_SEED, SUITE_SIZE);
    let written = write_synth_suite(dir.path(), SUITE_SEED, SUITE_SIZE, Exec::Parallel)?;
    let manifests: Vec<_> = written.iter().map(|(m, _)| m.clone()).collect();

    let (prompt_bank, frame_bank) = oracle_banks(&specs);
    let pb = dir.path().join("prompts.emb");
    let fb = dir.path().join("frames.emb");
    prompt_bank.save(&pb)?;
    frame_bank.save(&fb)?;
    let mut cfg = PipelineConfig {
        prompt_bank: Some(pb),
        frame_bank: Some(fb),
        workers: 1,
        ..PipelineConfig::default()
    };
    let classifier = Classifier::from_config(&cfg)?;

    let started = Instant::now();
    let single = predict_batch(&manifests, &cfg, Some(&classifier))?;
    let single_secs = started.elapsed().as_secs_f64();
    cfg.workers = 8;
    let started = Instant::now();
    let eight = predict_batch(&manifests, &cfg, Some(&classifier))?;
    let eight_secs = started.elapsed().as_secs_f64();

    let mut near = 0;
    let mut correct = 0;
    let mut misses = Vec::new();
    for ((_, gt), o) in written.iter().zip(&single) {
        let p = &o.as_ref().expect("suite clip failed").prediction;
        let d = (p.cx - gt.cx).hypot(p.cy - gt.cy);
        if d <= 0.08 {
            near += 1;
        } else {
            misses.push(format!("{} {} {d:.3}", gt.video_id, gt.class));
        }
        correct += usize::from(p.class == gt.class);
    }

    let mut static_ok = 0;
    for seed in 0..3 {
        let mut spec = SceneSpec::empty(format!("static-{seed}"), 60, 30, seed);
        spec.flash_amplitude = 0.0;
        let (clip, _) = generate_clip(&spec)?;
        let peak = locate_accident(&clip, &DetectorConfig::default())?.peak_frame;
        let p = localize_impact(&clip, Some(peak), &SpatialConfig::default())?;
        if p.cx == 0.5 && p.cy == 0.5 && p.fallback {
            static_ok += 1;
        }
    }
    let spatial = verdict(
        "spatial oracle suite",
        near as f64 / SUITE_SIZE as f64 >= 0.8 && static_ok == 3,
        format!(
            "{near}/{SUITE_SIZE} within 0.08 (need >= 80%), static clips exact center with fallback {static_ok}/3; misses: [{}]",
            misses.join(", ")
        ),
    );
    let class = verdict(
        "classifier oracle",
        correct == SUITE_SIZE && rescale_flips == 0,
        format!(
            "{correct}/{SUITE_SIZE} classes correct end to end with oracle banks; \
             {rescale_flips}/1000 random draws changed class under positive rescaling"
        ),
    );
    let (a, b) = (csv_bytes(&single), csv_bytes(&eight));
    let determinism = verdict(
        "end-to-end determinism",
        a == b,
        format!(
            "workers=1 ({single_secs:.1} s) and workers=8 ({eight_secs:.1} s) CSVs {} ({} bytes)",
            if a == b { "byte-identical" } else { "differ" },
            a.len()
        ),
    );
    Ok([spatial, class, determinism])
}
