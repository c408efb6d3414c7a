//! Deterministic synthetic collision clips with known ground truth.
//!
//! A scene is a static textured background (smooth random blobs plus a
//! fixed per-clip noise pattern) with textured rectangular actors. Actors
//! hold still until `move_start`, travel linearly, and freeze at the
//! collision frame, when a brightness flash is added around the impact
//! point for two frames. Every frame is a pure function of the spec, so
//! frames can be rendered in any order and re-rendered bit-identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::metric::Prediction;
use crate::temporal::{WORK_HEIGHT, WORK_WIDTH};
use crate::{Clip, CollisionClass, Error, GrayFrame, Result};

/// Ground truth rows share the prediction schema.
pub type GroundTruth = Prediction;

/// Frames the flash stays on.
const FLASH_FRAMES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    /// Block center at frame 0, pixels.
    pub start: [f64; 2],
    /// Pixels per frame while moving.
    pub velocity: [f64; 2],
    pub size: [f64; 2],
    pub intensity: f64,
    /// First frame of motion; the block is parked before it.
    pub move_start: usize,
}

impl Actor {
    pub fn center_at(&self, t: usize, collision_frame: usize) -> [f64; 2] {
        let moving = t.clamp(self.move_start, collision_frame.max(self.move_start)) - self.move_start;
        [
            self.start[0] + self.velocity[0] * moving as f64,
            self.start[1] + self.velocity[1] * moving as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub n_frames: usize,
    pub collision_frame: usize,
    /// Normalized impact point; pixel `(cx * width, cy * height)`.
    pub impact: [f64; 2],
    pub class_label: CollisionClass,
    pub actors: Vec<Actor>,
    pub flash_amplitude: f64,
    /// Flash Gaussian radius in pixels.
    pub flash_radius: f64,
    /// Standard deviation of the fixed background noise pattern.
    pub noise_sigma: f64,
    /// Standard deviation of fresh per-frame sensor noise.
    pub temporal_noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// A scene with no actors and default effect levels.
    pub fn empty(id: impl Into<String>, n_frames: usize, collision_frame: usize, seed: u64) -> Self {
        SceneSpec {
            id: id.into(),
            width: WORK_WIDTH,
            height: WORK_HEIGHT,
            fps: 20.0,
            n_frames,
            collision_frame,
            impact: [0.5, 0.5],
            class_label: CollisionClass::Single,
            actors: Vec::new(),
            flash_amplitude: 60.0,
            flash_radius: 12.0,
            noise_sigma: 2.0,
            temporal_noise_sigma: 0.0,
            seed,
        }
    }

    pub fn impact_px(&self) -> [f64; 2] {
        [self.impact[0] * self.width as f64, self.impact[1] * self.height as f64]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scene(format!("{}: {m}", self.id)));
        if self.width < 8 || self.height < 8 {
            return fail(format!("frame {}x{} too small", self.width, self.height));
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return fail("fps must be positive".into());
        }
        if self.n_frames < 3 || self.collision_frame < 1 || self.collision_frame > self.n_frames - 2 {
            return fail(format!(
                "collision frame {} must lie in [1, {}]",
                self.collision_frame,
                self.n_frames.saturating_sub(2)
            ));
        }
        if !self.impact.iter().all(|v| (0.0..=1.0).contains(v)) {
            return fail(format!("impact {:?} outside [0, 1]²", self.impact));
        }
        if self.noise_sigma < 0.0 || self.temporal_noise_sigma < 0.0 || self.flash_radius <= 0.0 {
            return fail("noise levels must be >= 0 and flash radius > 0".into());
        }
        for (i, a) in self.actors.iter().enumerate() {
            if !(0.0..=255.0).contains(&a.intensity) || a.size.iter().any(|&s| s <= 0.0) {
                return fail(format!("actor {i} has invalid size or intensity"));
            }
            // linear paths: checking both ends covers the whole trajectory
            for t in [0, self.collision_frame] {
                let [cx, cy] = a.center_at(t, self.collision_frame);
                let (hw, hh) = (a.size[0] / 2.0, a.size[1] / 2.0);
                let inside = cx - hw >= -0.5
                    && cy - hh >= -0.5
                    && cx + hw <= self.width as f64 - 0.5
                    && cy + hh <= self.height as f64 - 0.5;
                if !inside {
                    return fail(format!("actor {i} leaves the frame (center {cx:.1},{cy:.1} at frame {t})"));
                }
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        Prediction {
            video_id: self.id.clone(),
            time_sec: self.collision_frame as f64 / self.fps,
            cx: self.impact[0],
            cy: self.impact[1],
            class: self.class_label,
        }
    }

    /// Stages a collision of `class` with the contact point at `impact`.
    ///
    /// Geometry conventions (axis and direction drawn from `seed`):
    /// head-on blocks meet front to front, rear-end has a faster follower
    /// reach a slower leader, sideswipe blocks pass with laterally touching
    /// sides, single drives one block into a parked obstacle, and t-bone
    /// drives one block into the side of a crossing one.
    #[allow(clippy::too_many_arguments)]
    pub fn staged(
        id: impl Into<String>,
        class: CollisionClass,
        n_frames: usize,
        collision_frame: usize,
        impact: [f64; 2],
        seed: u64,
    ) -> Result<Self> {
        let mut spec = SceneSpec::empty(id, n_frames, collision_frame, seed);
        spec.impact = impact;
        spec.class_label = class;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fac_7025);
        let p = spec.impact_px();
        let s: f64 = rng.random_range(10.0..14.0);
        let speed: f64 = rng.random_range(1.0..1.6);
        // unit travel direction of the primary actor
        let horizontal = class == CollisionClass::TBone || rng.random_bool(0.5);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let dir = if horizontal { [sign, 0.0] } else { [0.0, sign] };
        let perp = [dir[1], dir[0]];
        let along = |c: [f64; 2], k: f64| [c[0] + dir[0] * k, c[1] + dir[1] * k];
        let across = |c: [f64; 2], k: f64| [c[0] + perp[0] * k, c[1] + perp[1] * k];
        let scale = |k: f64| [dir[0] * k, dir[1] * k];
        let block = |d: [f64; 2]| if d[0] != 0.0 { [s * 1.4, s] } else { [s, s * 1.4] };
        let len = s * 1.4;

        // (final center, velocity, size)
        let mut finals: Vec<([f64; 2], [f64; 2], [f64; 2])> = match class {
            CollisionClass::HeadOn => vec![
                (along(p, -len / 2.0), scale(speed), block(dir)),
                (along(p, len / 2.0), scale(-speed), block(dir)),
            ],
            CollisionClass::RearEnd => vec![
                (along(p, -len / 2.0), scale(speed), block(dir)),
                (along(p, len / 2.0), scale(speed * 0.4), block(dir)),
            ],
            CollisionClass::Sideswipe => vec![
                (across(along(p, -len / 4.0), -s / 2.0), scale(speed), block(dir)),
                (across(along(p, len / 4.0), s / 2.0), scale(-speed), block(dir)),
            ],
            CollisionClass::Single => vec![
                (along(p, -len / 2.0), scale(speed), block(dir)),
                (along(p, s * 0.4), [0.0, 0.0], if dir[0] != 0.0 { [s * 0.8, s * 2.0] } else { [s * 2.0, s * 0.8] }),
            ],
            CollisionClass::TBone => {
                let cross_dir = [0.0, if rng.random_bool(0.5) { 1.0 } else { -1.0 }];
                vec![
                    (along(p, -len / 2.0), scale(speed), block(dir)),
                    (along(p, s / 2.0), [0.0, cross_dir[1] * speed * 0.6], block(cross_dir)),
                ]
            }
        };

        // Motion lasts up to two seconds, shortened so no block leaves the frame.
        let mut frames_moving = ((2.0 * spec.fps) as usize).min(collision_frame);
        let (w, h) = (spec.width as f64, spec.height as f64);
        for (c, v, size) in &finals {
            for axis in 0..2 {
                if v[axis] == 0.0 {
                    continue;
                }
                let limit = if axis == 0 { w } else { h };
                let half = size[axis] / 2.0;
                let room = if v[axis] > 0.0 { c[axis] - half + 0.5 } else { limit - 0.5 - c[axis] - half };
                frames_moving = frames_moving.min((room.max(0.0) / v[axis].abs()).floor() as usize);
            }
        }
        let move_start = collision_frame - frames_moving;
        let base = rng.random_range(30.0..70.0);
        for (i, (c, v, size)) in finals.drain(..).enumerate() {
            let travel = frames_moving as f64;
            spec.actors.push(Actor {
                start: [c[0] - v[0] * travel, c[1] - v[1] * travel],
                velocity: v,
                size,
                intensity: if i == 0 { 255.0 - base } else { base },
                move_start,
            });
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Precomputes the static layers so frames can be rendered cheaply.
    pub fn renderer(&self) -> Result<SceneRenderer<'_>> {
        self.validate()?;
        let tex = BlobTexture::random(&mut self.rng_for(1), self.width, self.height, 24.0);
        let mut background = tex.render(self.width, self.height, 0.0, 0.0);
        if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).expect("valid sigma");
            let mut rng = self.rng_for(2);
            for v in &mut background {
                *v += noise.sample(&mut rng);
            }
        }
        let actor_textures = (0..self.actors.len())
            .map(|i| {
                let tex = BlobTexture::random(&mut self.rng_for(100 + i as u64), ACTOR_TEX, ACTOR_TEX, 10.0);
                tex.render(ACTOR_TEX, ACTOR_TEX, 0.0, 0.0)
            })
            .collect();
        Ok(SceneRenderer {
            spec: self,
            background,
            actor_textures,
        })
    }

    fn rng_for(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Side of the square texture tile carried by each actor.
const ACTOR_TEX: usize = 64;

pub struct SceneRenderer<'a> {
    spec: &'a SceneSpec,
    background: Vec<f64>,
    actor_textures: Vec<Vec<f64>>,
}

impl SceneRenderer<'_> {
    pub fn render_frame(&self, t: usize) -> GrayFrame {
        let spec = self.spec;
        let (w, h) = (spec.width, spec.height);
        let mut img = self.background.clone();
        for (actor, tex) in spec.actors.iter().zip(&self.actor_textures) {
            let [cx, cy] = actor.center_at(t, spec.collision_frame);
            let (hw, hh) = (actor.size[0] / 2.0, actor.size[1] / 2.0);
            let x0 = (cx - hw - 1.0).floor().max(0.0) as usize;
            let x1 = ((cx + hw + 1.0).ceil() as usize).min(w - 1);
            let y0 = (cy - hh - 1.0).floor().max(0.0) as usize;
            let y1 = ((cy + hh + 1.0).ceil() as usize).min(h - 1);
            let mid = ACTOR_TEX as f64 / 2.0;
            for y in y0..=y1 {
                let cov_y = overlap(y as f64, cy - hh, cy + hh);
                if cov_y <= 0.0 {
                    continue;
                }
                for x in x0..=x1 {
                    let cov = cov_y * overlap(x as f64, cx - hw, cx + hw);
                    if cov <= 0.0 {
                        continue;
                    }
                    // texture rides with the block
                    let local = sample_bilinear(tex, ACTOR_TEX, x as f64 - cx + mid, y as f64 - cy + mid);
                    let value = actor.intensity + 0.35 * (local - 128.0);
                    let px = &mut img[y * w + x];
                    *px = *px * (1.0 - cov) + value * cov;
                }
            }
        }
        let k = spec.collision_frame;
        if (k..k + FLASH_FRAMES).contains(&t) && spec.flash_amplitude != 0.0 {
            let [px, py] = spec.impact_px();
            let r = spec.flash_radius;
            let reach = (4.0 * r).ceil() as isize;
            for y in (py as isize - reach).max(0)..=(py as isize + reach).min(h as isize - 1) {
                for x in (px as isize - reach).max(0)..=(px as isize + reach).min(w as isize - 1) {
                    let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                    img[y as usize * w + x as usize] += spec.flash_amplitude * (-d2 / (2.0 * r * r)).exp();
                }
            }
        }
        if spec.temporal_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, spec.temporal_noise_sigma).expect("valid sigma");
            let mut rng = spec.rng_for(1_000_000 + t as u64);
            for v in &mut img {
                *v += noise.sample(&mut rng);
            }
        }
        GrayFrame::from_clamped(w, h, img.into_iter().map(|v| v.clamp(0.0, 255.0).round() as f32).collect())
    }
}

fn sample_bilinear(data: &[f64], side: usize, x: f64, y: f64) -> f64 {
    let max = (side - 1) as f64;
    let (x, y) = (x.clamp(0.0, max), y.clamp(0.0, max));
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(side - 1), (y0 + 1).min(side - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = data[y0 * side + x0] * (1.0 - fx) + data[y0 * side + x1] * fx;
    let bottom = data[y1 * side + x0] * (1.0 - fx) + data[y1 * side + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Length of `[x - 0.5, x + 0.5]` covered by `[lo, hi]`.
fn overlap(x: f64, lo: f64, hi: f64) -> f64 {
    ((x + 0.5).min(hi) - (x - 0.5).max(lo)).clamp(0.0, 1.0)
}

/// Renders the clip and its ground truth.
pub fn generate_clip(spec: &SceneSpec) -> Result<(Clip, GroundTruth)> {
    let renderer = spec.renderer()?;
    let frames = (0..spec.n_frames).map(|t| renderer.render_frame(t)).collect();
    Ok((Clip::new(spec.id.clone(), spec.fps, frames)?, spec.ground_truth()))
}

/// Scene specs for a deterministic suite cycling through the five classes,
/// with collision times in 3 to 12 s and impact points near the frame center.
pub fn suite_specs(seed: u64, count: usize) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let class = CollisionClass::ALL[i % CollisionClass::ALL.len()];
            let time: f64 = rng.random_range(3.0..12.0);
            let collision_frame = (time * 20.0).round() as usize;
            let tail = rng.random_range(30..60);
            let impact = [rng.random_range(0.25..0.75), rng.random_range(0.3..0.7)];
            let scene_seed = rng.random();
            SceneSpec::staged(
                format!("synth-{seed}-{i:03}"),
                class,
                collision_frame + tail,
                collision_frame,
                impact,
                scene_seed,
            )
            .expect("suite geometry always fits the frame")
        })
        .collect()
}

/// Materializes a whole suite. Clips are large; prefer iterating
/// [`suite_specs`] and rendering one at a time for big suites.
pub fn generate_suite(seed: u64, count: usize) -> Result<Vec<(Clip, GroundTruth)>> {
    suite_specs(seed, count).iter().map(generate_clip).collect()
}

/// Smooth random texture in `[0, 255]` built from Gaussian blobs.
#[derive(Debug, Clone)]
pub struct BlobTexture {
    blobs: Vec<[f64; 4]>, // x, y, sigma, amplitude
    margin: f64,
}

impl BlobTexture {
    /// Blobs cover the `width × height` area plus a margin, about one per
    /// `spacing²` pixels.
    pub fn random(rng: &mut impl Rng, width: usize, height: usize, spacing: f64) -> Self {
        let margin = 40.0;
        let area = (width as f64 + 2.0 * margin) * (height as f64 + 2.0 * margin);
        let n = (area / (spacing * spacing) * 4.0).ceil() as usize;
        let blobs = (0..n)
            .map(|_| {
                [
                    rng.random_range(-margin..width as f64 + margin),
                    rng.random_range(-margin..height as f64 + margin),
                    rng.random_range(0.15..0.35) * spacing,
                    rng.random_range(-70.0..70.0),
                ]
            })
            .collect();
        BlobTexture { blobs, margin }
    }

    fn squash(sum: f64) -> f64 {
        128.0 + 110.0 * (sum / 90.0).tanh()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut sum = 0.0;
        for &[bx, by, s, a] in &self.blobs {
            let d2 = (x - bx).powi(2) + (y - by).powi(2);
            if d2 < 16.0 * s * s {
                sum += a * (-d2 / (2.0 * s * s)).exp();
            }
        }
        Self::squash(sum)
    }

    /// Renders the texture displaced by `(dx, dy)`: pixel `p` shows the
    /// texture at `p - (dx, dy)`.
    pub fn render(&self, width: usize, height: usize, dx: f64, dy: f64) -> Vec<f64> {
        assert!(dx.abs() < self.margin && dy.abs() < self.margin, "shift exceeds texture margin");
        let mut sum = vec![0.0; width * height];
        for &[bx, by, s, a] in &self.blobs {
            let (cx, cy) = (bx + dx, by + dy);
            let reach = 4.0 * s;
            let x0 = (cx - reach).ceil().max(0.0) as usize;
            let y0 = (cy - reach).ceil().max(0.0) as usize;
            let x1 = (cx + reach).floor().min(width as f64 - 1.0);
            let y1 = (cy + reach).floor().min(height as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    if d2 < 16.0 * s * s {
                        sum[y * width + x] += a * (-d2 / (2.0 * s * s)).exp();
                    }
                }
            }
        }
        sum.into_iter().map(Self::squash).collect()
    }
}

/// A `width × height` blob texture from `seed`, displaced by `(dx, dy)`.
/// Two calls with different shifts form a pair related by exact translation.
pub fn texture_frame(seed: u64, width: usize, height: usize, dx: f64, dy: f64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = BlobTexture::random(&mut rng, width, height, 16.0);
    let data = tex.render(width, height, dx, dy);
    GrayFrame::from_clamped(width, height, data.into_iter().map(|v| v as f32).collect())
}
