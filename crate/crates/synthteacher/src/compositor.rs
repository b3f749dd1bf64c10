//! Synthetic scene composition.
//!
//! Scenes are layered 2D person instances: a silhouette polygon plus 14
//! keypoints, stacked by z-order. Synthetic instances are placed at uniform
//! random positions and scales, their count drawn from a Poisson
//! distribution; placements whose silhouette overlaps an already placed
//! synthetic instance too much (IoU above a threshold) are rejected and
//! re-drawn, and an instance is dropped after too many failed attempts.
//! Keypoint visibility is exact: a keypoint is visible iff it lies on the
//! canvas and no higher-z silhouette covers the center of the pixel that
//! contains it (occlusion is resolved at pixel granularity, matching
//! rendered ground truth).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::rng;

/// Number of keypoints per person.
pub const KEYPOINT_COUNT: usize = 14;

/// Keypoint names, in storage order.
pub const JOINT_NAMES: [&str; KEYPOINT_COUNT] = [
    "head_top",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
];

/// A 2D keypoint with its visibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// One person in a scene: keypoints, silhouette polygon, layering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonInstance {
    pub keypoints: Vec<Keypoint>,
    pub silhouette: Vec<Point>,
    pub is_synthetic: bool,
    /// Higher z occludes lower z.
    pub z_order: usize,
    pub reference_point: Point,
    /// Scalar used by distance-threshold keypoint scoring.
    pub head_size: f64,
}

impl PersonInstance {
    /// Head size proxy: a fixed fraction of the distance between the top
    /// keypoint pair (head_top, neck).
    pub fn head_size_from_keypoints(keypoints: &[Keypoint], factor: f64) -> f64 {
        factor * keypoints[0].position().distance(keypoints[1].position())
    }

    pub fn validate(&self) -> Result<()> {
        if self.keypoints.len() != KEYPOINT_COUNT {
            return Err(Error::invalid(format!(
                "person has {} keypoints, expected {KEYPOINT_COUNT}",
                self.keypoints.len()
            )));
        }
        for (i, kp) in self.keypoints.iter().enumerate() {
            if !kp.x.is_finite() || !kp.y.is_finite() {
                return Err(Error::invalid(format!(
                    "keypoint {} ({}) is not finite",
                    i, JOINT_NAMES[i]
                )));
            }
        }
        if !geometry::is_simple_polygon(&self.silhouette) {
            return Err(Error::invalid("silhouette is not a simple polygon"));
        }
        if !self.silhouette.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("silhouette vertices must be finite"));
        }
        for (i, kp) in self.keypoints.iter().enumerate() {
            if !geometry::contains_with_tolerance(&self.silhouette, kp.position(), 1e-6) {
                return Err(Error::invalid(format!(
                    "keypoint {} ({}) lies outside the silhouette",
                    i, JOINT_NAMES[i]
                )));
            }
        }
        if !self.head_size.is_finite() || self.head_size <= 0.0 {
            return Err(Error::invalid("head_size must be positive"));
        }
        Ok(())
    }
}

/// A composed training sample: canvas, layered persons, camera pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: u64,
    pub width: u32,
    pub height: u32,
    pub camera_pitch_deg: f64,
    pub persons: Vec<PersonInstance>,
}

impl SceneAnnotation {
    /// Empty background canvas.
    pub fn empty(scene_id: u64, width: u32, height: u32) -> Self {
        Self {
            scene_id,
            width,
            height,
            camera_pitch_deg: 0.0,
            persons: Vec::new(),
        }
    }

    /// Recompute every keypoint's visibility flag from silhouettes and
    /// z-order. A keypoint is visible iff it lies on the canvas and no
    /// higher-z silhouette contains the center of its pixel.
    pub fn recompute_visibility(&mut self) {
        let occluders: Vec<(usize, Vec<Point>)> = self
            .persons
            .iter()
            .map(|p| (p.z_order, p.silhouette.clone()))
            .collect();
        let (width, height) = (self.width as f64, self.height as f64);
        for person in self.persons.iter_mut() {
            let z = person.z_order;
            for kp in person.keypoints.iter_mut() {
                let pos = kp.position();
                if !(pos.x >= 0.0 && pos.x < width && pos.y >= 0.0 && pos.y < height) {
                    kp.visible = false;
                    continue;
                }
                let pixel_center = Point::new(pos.x.floor() + 0.5, pos.y.floor() + 0.5);
                kp.visible = !occluders
                    .iter()
                    .any(|(oz, sil)| *oz > z && geometry::polygon_contains(sil, pixel_center));
            }
        }
    }

    /// Fraction of a person's keypoints that are visible.
    pub fn visibility_ratio(&self, person_index: usize) -> Result<f64> {
        let person = self
            .persons
            .get(person_index)
            .ok_or_else(|| Error::invalid(format!("person index {person_index} out of range")))?;
        let visible = person.keypoints.iter().filter(|kp| kp.visible).count();
        Ok(visible as f64 / person.keypoints.len() as f64)
    }

    /// Per-person minimal distance to any other person's reference point.
    pub fn min_distances(&self) -> Vec<f64> {
        crate::grouping::min_distance_features(
            &self
                .persons
                .iter()
                .map(|p| p.reference_point)
                .collect::<Vec<_>>(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("zero-area canvas"));
        }
        if !self.camera_pitch_deg.is_finite() {
            return Err(Error::invalid("camera pitch must be finite"));
        }
        for person in &self.persons {
            person.validate()?;
        }
        let mut zs: Vec<usize> = self.persons.iter().map(|p| p.z_order).collect();
        zs.sort_unstable();
        zs.dedup();
        if zs.len() != self.persons.len() {
            return Err(Error::invalid("duplicate z_order values"));
        }
        Ok(())
    }
}

/// Configuration for scene composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionConfig {
    /// Poisson mean of the synthetic instance count per scene.
    pub lambda: f64,
    /// Maximum tolerated pairwise silhouette IoU between synthetic
    /// instances; candidates above it are rejected and re-placed.
    pub max_overlap_iou: f64,
    /// Camera pitch range in degrees, sampled uniformly per scene.
    pub pitch_range: (f64, f64),
    /// When set, scenes keep their background's pitch instead of resampling
    /// (mixed datasets keep the original camera).
    pub keep_background_pitch: bool,
    /// How many scenes to compose per background.
    pub renders_per_background: usize,
    /// Person height range in pixels (templates have unit height).
    pub scale_px: (f64, f64),
    /// Placement attempts per instance before it is dropped.
    pub rejection_attempts: usize,
    /// Worker threads for dataset composition.
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            lambda: 9.0,
            max_overlap_iou: 0.6,
            pitch_range: (0.0, 45.0),
            keep_background_pitch: false,
            renders_per_background: 5,
            scale_px: (120.0, 320.0),
            rejection_attempts: 100,
            parallelism: 1,
            seed: 0,
        }
    }
}

impl CompositionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&self.max_overlap_iou) {
            return Err(Error::invalid("max_overlap_iou outside [0, 1]"));
        }
        if self.pitch_range.0 > self.pitch_range.1 || !self.pitch_range.0.is_finite() {
            return Err(Error::invalid("pitch range is inverted"));
        }
        if self.renders_per_background == 0 {
            return Err(Error::invalid("renders_per_background must be positive"));
        }
        if self.scale_px.0 <= 0.0 || self.scale_px.0 > self.scale_px.1 {
            return Err(Error::invalid("scale_px range is invalid"));
        }
        if self.rejection_attempts == 0 {
            return Err(Error::invalid("rejection_attempts must be positive"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be at least 1"));
        }
        Ok(())
    }
}

/// Poisson draw of the synthetic instance count.
pub fn sample_count(config: &CompositionConfig, rng: &mut ChaCha8Rng) -> Result<u64> {
    let poisson = Poisson::new(config.lambda)
        .map_err(|e| Error::invalid(format!("bad lambda {}: {e}", config.lambda)))?;
    let draw: f64 = poisson.sample(rng);
    Ok(draw as u64)
}

/// A person template in canonical coordinates: unit height, centered on its
/// reference point, convex silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonTemplate {
    pub keypoints: Vec<Point>,
    pub silhouette: Vec<Point>,
}

impl PersonTemplate {
    /// Instantiate at pixel scale `scale_px` with the reference point at
    /// `target`.
    fn place(&self, scale_px: f64, target: Point) -> (Vec<Keypoint>, Vec<Point>, Point) {
        let keypoints: Vec<Keypoint> = self
            .keypoints
            .iter()
            .map(|p| Keypoint {
                x: target.x + p.x * scale_px,
                y: target.y + p.y * scale_px,
                visible: true,
            })
            .collect();
        let silhouette: Vec<Point> = self
            .silhouette
            .iter()
            .map(|p| Point::new(target.x + p.x * scale_px, target.y + p.y * scale_px))
            .collect();
        (keypoints, silhouette, target)
    }
}

/// Procedurally generated articulated humanoid templates: a stick-figure
/// skeleton with jittered limb angles, hulled and slightly inflated so every
/// keypoint sits strictly inside the silhouette.
pub fn template_library(count: usize, seed: u64) -> Vec<PersonTemplate> {
    let mut rng = rng::seeded(seed, rng::stream::SCENE_BASE - 1);
    (0..count).map(|_| generate_template(&mut rng)).collect()
}

fn jitter(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * spread
}

fn generate_template(rng: &mut ChaCha8Rng) -> PersonTemplate {
    // Canonical pose, y down, total height ~1. Centered later on the
    // keypoint centroid.
    let head_top = Point::new(jitter(rng, 0.04), 0.0);
    let neck = Point::new(head_top.x + jitter(rng, 0.02), 0.13);
    let shoulder_w = 0.11 + jitter(rng, 0.02);
    let r_shoulder = Point::new(neck.x - shoulder_w, 0.16 + jitter(rng, 0.01));
    let l_shoulder = Point::new(neck.x + shoulder_w, 0.16 + jitter(rng, 0.01));
    let arm = |s: Point, side: f64, rng_j: (f64, f64)| {
        let elbow_angle = side * (0.35 + rng_j.0 * 0.5);
        let elbow = Point::new(s.x + 0.17 * elbow_angle.sin(), s.y + 0.17 * elbow_angle.cos());
        let wrist_angle = side * (0.25 + rng_j.1 * 0.9);
        let wrist = Point::new(
            elbow.x + 0.18 * wrist_angle.sin(),
            elbow.y + 0.18 * wrist_angle.cos(),
        );
        (elbow, wrist)
    };
    let (r_elbow, r_wrist) = arm(r_shoulder, -1.0, (rng.random(), rng.random()));
    let (l_elbow, l_wrist) = arm(l_shoulder, 1.0, (rng.random(), rng.random()));
    let hip_w = 0.07 + jitter(rng, 0.015);
    let pelvis_x = jitter(rng, 0.02);
    let r_hip = Point::new(pelvis_x - hip_w, 0.52 + jitter(rng, 0.01));
    let l_hip = Point::new(pelvis_x + hip_w, 0.52 + jitter(rng, 0.01));
    let leg = |h: Point, side: f64, rng_j: (f64, f64)| {
        let knee_angle = side * (0.08 + rng_j.0 * 0.25);
        let knee = Point::new(h.x + 0.24 * knee_angle.sin(), h.y + 0.24 * knee_angle.cos());
        let ankle_angle = side * (0.05 + rng_j.1 * 0.3);
        let ankle = Point::new(
            knee.x + 0.25 * ankle_angle.sin(),
            knee.y + 0.25 * ankle_angle.cos(),
        );
        (knee, ankle)
    };
    let (r_knee, r_ankle) = leg(r_hip, -1.0, (rng.random(), rng.random()));
    let (l_knee, l_ankle) = leg(l_hip, 1.0, (rng.random(), rng.random()));

    let mut keypoints = vec![
        head_top, neck, r_shoulder, r_elbow, r_wrist, l_shoulder, l_elbow, l_wrist, r_hip, r_knee,
        r_ankle, l_hip, l_knee, l_ankle,
    ];

    // Recenter on the keypoint centroid: the template reference point is the
    // person center, i.e. the canonical origin.
    let n = keypoints.len() as f64;
    let cx = keypoints.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = keypoints.iter().map(|p| p.y).sum::<f64>() / n;
    for p in &mut keypoints {
        p.x -= cx;
        p.y -= cy;
    }

    // Silhouette: convex hull of the keypoints plus head/torso padding
    // points, inflated about the centroid so keypoints are strictly interior.
    let mut outline = keypoints.clone();
    outline.push(Point::new(keypoints[0].x - 0.06, keypoints[0].y - 0.045));
    outline.push(Point::new(keypoints[0].x + 0.06, keypoints[0].y - 0.045));
    let hull = geometry::convex_hull(&outline);
    let silhouette: Vec<Point> = hull
        .iter()
        .map(|p| Point::new(p.x * 1.12, p.y * 1.12))
        .collect();

    PersonTemplate {
        keypoints,
        silhouette,
    }
}

/// Composition bookkeeping for one scene.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SceneStats {
    pub instances_requested: u64,
    pub instances_placed: u64,
    pub instances_dropped: u64,
    pub failed_attempts: u64,
}

/// A composed scene plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct ComposedScene {
    pub scene: SceneAnnotation,
    pub stats: SceneStats,
}

/// Compose one scene on top of `background`.
///
/// Draws `k ~ Poisson(lambda)` synthetic instances, places each at a uniform
/// random position and scale, rejects placements that overlap an existing
/// synthetic instance with IoU above the configured bound, assigns z-order
/// by insertion, and recomputes all visibility flags. Background persons'
/// raw annotations (keypoint positions, silhouettes, reference points) are
/// never touched; only their visibility flags are re-derived.
pub fn compose_scene(
    background: &SceneAnnotation,
    library: &[PersonTemplate],
    config: &CompositionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ComposedScene> {
    config.validate()?;
    if library.is_empty() {
        return Err(Error::invalid("template library is empty"));
    }
    if background.width == 0 || background.height == 0 {
        return Err(Error::invalid("zero-area canvas"));
    }

    let mut scene = background.clone();
    if !config.keep_background_pitch {
        let (lo, hi) = config.pitch_range;
        scene.camera_pitch_deg = lo + rng.random::<f64>() * (hi - lo);
    }

    let requested = sample_count(config, rng)?;
    let mut stats = SceneStats {
        instances_requested: requested,
        ..SceneStats::default()
    };

    let mut synthetic_silhouettes: Vec<Vec<Point>> = Vec::new();
    let mut next_z = scene.persons.iter().map(|p| p.z_order + 1).max().unwrap_or(0);
    for _ in 0..requested {
        let mut placed = false;
        for _attempt in 0..config.rejection_attempts {
            let template = &library[rng.random_range(0..library.len())];
            let scale = config.scale_px.0
                + rng.random::<f64>() * (config.scale_px.1 - config.scale_px.0);
            let target = Point::new(
                rng.random::<f64>() * scene.width as f64,
                rng.random::<f64>() * scene.height as f64,
            );
            let (keypoints, silhouette, reference_point) = template.place(scale, target);
            let overlaps = synthetic_silhouettes
                .iter()
                .any(|other| geometry::iou(&silhouette, other) > config.max_overlap_iou);
            if overlaps {
                stats.failed_attempts += 1;
                continue;
            }
            let head_size = PersonInstance::head_size_from_keypoints(&keypoints, 0.6);
            synthetic_silhouettes.push(silhouette.clone());
            scene.persons.push(PersonInstance {
                keypoints,
                silhouette,
                is_synthetic: true,
                z_order: next_z,
                reference_point,
                head_size,
            });
            next_z += 1;
            stats.instances_placed += 1;
            placed = true;
            break;
        }
        if !placed {
            stats.instances_dropped += 1;
        }
    }

    scene.recompute_visibility();
    Ok(ComposedScene { scene, stats })
}

/// Aggregate statistics over a composed dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionStats {
    pub scenes: usize,
    pub instances_requested: u64,
    pub instances_placed: u64,
    pub instances_dropped: u64,
    pub failed_attempts: u64,
    pub mean_instances_requested: f64,
    /// Histogram of requested instance counts (index = count, last bucket
    /// saturates).
    pub instance_count_histogram: Vec<u64>,
    /// Ten equal-width buckets over the per-person occlusion ratio.
    pub occlusion_ratio_histogram: Vec<u64>,
}

impl CompositionStats {
    fn from_scenes(composed: &[ComposedScene]) -> Self {
        let mut instance_count_histogram = vec![0u64; 31];
        let mut occlusion_ratio_histogram = vec![0u64; 10];
        let mut requested = 0u64;
        let mut placed = 0u64;
        let mut dropped = 0u64;
        let mut failed = 0u64;
        for c in composed {
            let bucket = (c.stats.instances_requested as usize).min(30);
            instance_count_histogram[bucket] += 1;
            requested += c.stats.instances_requested;
            placed += c.stats.instances_placed;
            dropped += c.stats.instances_dropped;
            failed += c.stats.failed_attempts;
            for i in 0..c.scene.persons.len() {
                let ratio = c.scene.visibility_ratio(i).expect("valid index");
                let b = ((ratio * 10.0) as usize).min(9);
                occlusion_ratio_histogram[b] += 1;
            }
        }
        CompositionStats {
            scenes: composed.len(),
            instances_requested: requested,
            instances_placed: placed,
            instances_dropped: dropped,
            failed_attempts: failed,
            mean_instances_requested: if composed.is_empty() {
                0.0
            } else {
                requested as f64 / composed.len() as f64
            },
            instance_count_histogram,
            occlusion_ratio_histogram,
        }
    }
}

/// Compose `renders_per_background` scenes per background.
///
/// Scene `i` (in output order) uses an RNG stream derived from
/// `(config.seed, i)`, so the dataset is reproducible and composition can be
/// chunked across `config.parallelism` threads without changing any output.
pub fn compose_dataset(
    backgrounds: &[SceneAnnotation],
    library: &[PersonTemplate],
    config: &CompositionConfig,
) -> Result<(Vec<SceneAnnotation>, CompositionStats)> {
    config.validate()?;
    if backgrounds.is_empty() {
        return Err(Error::invalid("no backgrounds"));
    }
    let jobs: Vec<(usize, &SceneAnnotation)> = backgrounds
        .iter()
        .flat_map(|bg| std::iter::repeat_n(bg, config.renders_per_background))
        .enumerate()
        .collect();

    let mut composed: Vec<Option<ComposedScene>> = vec![None; jobs.len()];
    let workers = config.parallelism.min(jobs.len().max(1));
    if workers <= 1 {
        for (i, bg) in jobs {
            composed[i] = Some(compose_one_indexed(bg, library, config, i)?);
        }
    } else {
        let chunks: Vec<Vec<(usize, &SceneAnnotation)>> = (0..workers)
            .map(|w| jobs.iter().skip(w).step_by(workers).copied().collect())
            .collect();
        let results: Vec<Result<Vec<(usize, ComposedScene)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|(i, bg)| Ok((i, compose_one_indexed(bg, library, config, i)?)))
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            for (i, c) in r? {
                composed[i] = Some(c);
            }
        }
    }

    let composed: Vec<ComposedScene> = composed.into_iter().map(|c| c.expect("all jobs ran")).collect();
    let stats = CompositionStats::from_scenes(&composed);
    Ok((composed.into_iter().map(|c| c.scene).collect(), stats))
}

fn compose_one_indexed(
    background: &SceneAnnotation,
    library: &[PersonTemplate],
    config: &CompositionConfig,
    index: usize,
) -> Result<ComposedScene> {
    let mut scene_rng = rng::seeded(config.seed, rng::stream::SCENE_BASE + index as u64);
    let mut out = compose_scene(background, library, config, &mut scene_rng)?;
    out.scene.scene_id = index as u64;
    Ok(out)
}

/// Debug dump of the silhouette layers as a binary PGM (P5) image: each
/// pixel carries the gray level of the topmost person covering it.
pub fn write_pgm(scene: &SceneAnnotation, path: &Path) -> Result<()> {
    let w = scene.width as usize;
    let h = scene.height as usize;
    let mut data = vec![0u8; w * h];
    let n = scene.persons.len().max(1);
    let mut by_z: Vec<&PersonInstance> = scene.persons.iter().collect();
    by_z.sort_by_key(|p| p.z_order);
    for (rank, person) in by_z.iter().enumerate() {
        let gray = (((rank + 1) * 255) / n) as u8;
        let Some(bb) = geometry::BBox::of(&person.silhouette) else {
            continue;
        };
        let x0 = bb.min_x.floor().max(0.0) as usize;
        let y0 = bb.min_y.floor().max(0.0) as usize;
        let x1 = (bb.max_x.ceil() as usize).min(w);
        let y1 = (bb.max_y.ceil() as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                let c = Point::new(px as f64 + 0.5, py as f64 + 0.5);
                if geometry::polygon_contains(&person.silhouette, c) {
                    data[py * w + px] = gray;
                }
            }
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(file, "P5\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
    file.write_all(&data).map_err(|e| Error::io(path, e))
}
