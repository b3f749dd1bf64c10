//! Occlusion-binned keypoint evaluation.
//!
//! Persons are scored with a distance-threshold correctness criterion: a
//! predicted keypoint is correct iff it lies within
//! `pckh_threshold * head_size` of the ground truth. Predicted and ground
//! truth persons are matched greedily by descending keypoint agreement, and
//! scores are reported per occlusion bin (visible-joint ratio split into
//! linearly spaced bins over `[0, 1]`).
//!
//! This is a deliberately simplified detection metric: there is no
//! score-ranked precision/recall integration, so the numbers are comparable
//! within this framework but not to published average-precision figures.
//! The report header carries that note.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationRecord;
use crate::compositor::KEYPOINT_COUNT;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Note embedded in every report, documenting the metric simplification.
pub const METRIC_NOTE: &str =
    "keypoint correctness rate with greedy person matching; not a ranked average-precision metric";

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Number of linearly spaced occlusion bins over [0, 1].
    pub num_occlusion_bins: usize,
    /// Correctness radius as a fraction of the person's head size.
    pub pckh_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_occlusion_bins: 5,
            pckh_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_occlusion_bins == 0 {
            return Err(Error::invalid("need at least one occlusion bin"));
        }
        if !self.pckh_threshold.is_finite() || self.pckh_threshold <= 0.0 {
            return Err(Error::invalid("pckh_threshold must be positive"));
        }
        Ok(())
    }
}

/// One predicted person: 14 keypoint positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPose {
    pub keypoints: Vec<Point>,
}

/// Predictions for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene_id: u64,
    pub persons: Vec<PredictedPose>,
}

/// Per-bin slice of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_score: f64,
}

/// Evaluation result over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_note: String,
    pub pckh_threshold: f64,
    pub num_bins: usize,
    pub total_persons: usize,
    pub overall_mean: f64,
    pub bins: Vec<BinReport>,
    pub per_joint: Vec<f64>,
}

/// Map a visible-joint ratio to its occlusion bin: `floor(ratio * bins)`,
/// with `ratio == 1` landing in the last bin.
pub fn occlusion_bin(ratio: f64, num_bins: usize) -> Result<usize> {
    if num_bins == 0 {
        return Err(Error::invalid("need at least one occlusion bin"));
    }
    if !ratio.is_finite() || !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("ratio {ratio} outside [0, 1]")));
    }
    Ok(((ratio * num_bins as f64) as usize).min(num_bins - 1))
}

/// Trivial predictor: echo the ground truth keypoints. Useful as a sanity
/// baseline and for exercising the evaluation pipeline.
pub fn predictions_from_ground_truth(records: &[AnnotationRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| PredictionRecord {
            scene_id: r.scene_id,
            persons: r
                .persons
                .iter()
                .map(|p| PredictedPose {
                    keypoints: p.keypoints.iter().map(|kp| kp.position()).collect(),
                })
                .collect(),
        })
        .collect()
}

struct PairAgreement {
    pred: usize,
    gt: usize,
    correct: Vec<bool>,
    correct_count: usize,
    mean_distance: f64,
}

/// Greedy one-to-one matching and scoring.
///
/// Every ground-truth person is evaluated: matched persons score the
/// fraction of their keypoints that are correct, unmatched persons score 0.
/// Matching is global (per scene) and binning happens afterwards.
pub fn match_and_score(
    predictions: &[PredictionRecord],
    ground_truth: &[AnnotationRecord],
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;

    let mut by_scene: std::collections::BTreeMap<u64, &PredictionRecord> =
        std::collections::BTreeMap::new();
    for p in predictions {
        if by_scene.insert(p.scene_id, p).is_some() {
            return Err(Error::invalid(format!(
                "duplicate predictions for scene {}",
                p.scene_id
            )));
        }
    }
    let known: std::collections::BTreeSet<u64> = ground_truth.iter().map(|r| r.scene_id).collect();
    for p in predictions {
        if !known.contains(&p.scene_id) {
            return Err(Error::invalid(format!(
                "predictions reference unknown scene {}",
                p.scene_id
            )));
        }
    }

    let mut bin_counts = vec![0usize; config.num_occlusion_bins];
    let mut bin_scores = vec![0.0f64; config.num_occlusion_bins];
    let mut joint_correct = [0usize; KEYPOINT_COUNT];
    let mut total_persons = 0usize;
    let mut total_score = 0.0f64;

    for record in ground_truth {
        let empty = PredictionRecord {
            scene_id: record.scene_id,
            persons: Vec::new(),
        };
        let preds = by_scene.get(&record.scene_id).copied().unwrap_or(&empty);

        // Validate prediction shapes and head sizes up front.
        for (i, pose) in preds.persons.iter().enumerate() {
            if pose.keypoints.len() != KEYPOINT_COUNT {
                return Err(Error::invalid(format!(
                    "scene {} prediction {i} has {} keypoints, expected {KEYPOINT_COUNT}",
                    record.scene_id,
                    pose.keypoints.len()
                )));
            }
        }
        for (j, person) in record.persons.iter().enumerate() {
            if !person.head_size.is_finite() || person.head_size <= 0.0 {
                return Err(Error::invalid(format!(
                    "scene {} person {j} is missing a head size",
                    record.scene_id
                )));
            }
        }

        // Agreement for every (prediction, ground truth) pair.
        let mut pairs: Vec<PairAgreement> = Vec::new();
        for (pi, pose) in preds.persons.iter().enumerate() {
            for (gi, person) in record.persons.iter().enumerate() {
                let radius = config.pckh_threshold * person.head_size;
                let mut correct = vec![false; KEYPOINT_COUNT];
                let mut count = 0usize;
                let mut dist_sum = 0.0;
                for k in 0..KEYPOINT_COUNT {
                    let d = pose.keypoints[k].distance(person.keypoints[k].position());
                    dist_sum += d;
                    if d <= radius {
                        correct[k] = true;
                        count += 1;
                    }
                }
                if count > 0 {
                    pairs.push(PairAgreement {
                        pred: pi,
                        gt: gi,
                        correct,
                        correct_count: count,
                        mean_distance: dist_sum / KEYPOINT_COUNT as f64,
                    });
                }
            }
        }
        // Greedy: best agreement first, ties by distance then indices.
        pairs.sort_by(|a, b| {
            b.correct_count
                .cmp(&a.correct_count)
                .then(a.mean_distance.partial_cmp(&b.mean_distance).unwrap())
                .then(a.pred.cmp(&b.pred))
                .then(a.gt.cmp(&b.gt))
        });
        let mut pred_used = vec![false; preds.persons.len()];
        let mut gt_matched: Vec<Option<&PairAgreement>> = vec![None; record.persons.len()];
        for pair in &pairs {
            if !pred_used[pair.pred] && gt_matched[pair.gt].is_none() {
                pred_used[pair.pred] = true;
                gt_matched[pair.gt] = Some(pair);
            }
        }

        for (gi, person) in record.persons.iter().enumerate() {
            let bin = occlusion_bin(person.occlusion_ratio, config.num_occlusion_bins)?;
            let score = match gt_matched[gi] {
                Some(pair) => {
                    for k in 0..KEYPOINT_COUNT {
                        if pair.correct[k] {
                            joint_correct[k] += 1;
                        }
                    }
                    pair.correct_count as f64 / KEYPOINT_COUNT as f64
                }
                None => 0.0,
            };
            bin_counts[bin] += 1;
            bin_scores[bin] += score;
            total_persons += 1;
            total_score += score;
        }
    }

    let bins = (0..config.num_occlusion_bins)
        .map(|b| BinReport {
            bin: b,
            lo: b as f64 / config.num_occlusion_bins as f64,
            hi: (b + 1) as f64 / config.num_occlusion_bins as f64,
            count: bin_counts[b],
            mean_score: if bin_counts[b] == 0 {
                0.0
            } else {
                bin_scores[b] / bin_counts[b] as f64
            },
        })
        .collect();

    Ok(EvalReport {
        metric_note: METRIC_NOTE.to_string(),
        pckh_threshold: config.pckh_threshold,
        num_bins: config.num_occlusion_bins,
        total_persons,
        overall_mean: if total_persons == 0 {
            0.0
        } else {
            total_score / total_persons as f64
        },
        bins,
        per_joint: joint_correct
            .iter()
            .map(|&c| {
                if total_persons == 0 {
                    0.0
                } else {
                    c as f64 / total_persons as f64
                }
            })
            .collect(),
    })
}

impl EvalReport {
    /// CSV rendering: a note line, then `bin, count, score` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n", self.metric_note);
        out.push_str("bin,lo,hi,count,mean_score\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.bin, b.lo, b.hi, b.count, b.mean_score
            ));
        }
        out
    }
}

/// Read predictions from line-delimited JSON.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

/// Write predictions as line-delimited JSON.
pub fn write_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::AnnotationRecord;
    use crate::compositor::{compose_scene, template_library, CompositionConfig, SceneAnnotation};
    use crate::rng;
    use rand::Rng;

    fn sample_dataset(scenes: usize, seed: u64) -> Vec<AnnotationRecord> {
        let lib = template_library(6, seed);
        let config = CompositionConfig {
            lambda: 4.0,
            seed,
            ..CompositionConfig::default()
        };
        (0..scenes)
            .map(|i| {
                let bg = SceneAnnotation::empty(i as u64, 640, 640);
                let mut r = rng::seeded(seed, 20 + i as u64);
                let c = compose_scene(&bg, &lib, &config, &mut r).unwrap();
                let mut scene = c.scene;
                scene.scene_id = i as u64;
                AnnotationRecord::from_scene(&scene)
            })
            .collect()
    }

    #[test]
    fn occlusion_bin_examples() {
        assert_eq!(occlusion_bin(0.0, 5).unwrap(), 0);
        assert_eq!(occlusion_bin(1.0, 5).unwrap(), 4);
        assert_eq!(occlusion_bin(0.55, 5).unwrap(), 2);
        assert!(occlusion_bin(-0.1, 5).is_err());
        assert!(occlusion_bin(1.1, 5).is_err());
        assert!(occlusion_bin(f64::NAN, 5).is_err());
        // Edge-scan oracle over the bin edges.
        for bins in [1usize, 2, 5, 7] {
            for i in 0..200 {
                let r = i as f64 / 199.0;
                let edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
                let mut expected = 0;
                for k in 0..bins {
                    if r >= edges[k] {
                        expected = k;
                    }
                }
                assert_eq!(occlusion_bin(r, bins).unwrap(), expected, "r={r} bins={bins}");
            }
        }
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let gt = sample_dataset(10, 3);
        let preds = predictions_from_ground_truth(&gt);
        let report = match_and_score(&preds, &gt, &EvalConfig::default()).unwrap();
        assert!(report.total_persons > 0);
        assert_eq!(report.overall_mean, 1.0);
        for bin in &report.bins {
            if bin.count > 0 {
                assert_eq!(bin.mean_score, 1.0, "bin {}", bin.bin);
            }
        }
        assert!(report.per_joint.iter().all(|&s| s == 1.0));
        let total: usize = report.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, report.total_persons);
    }

    #[test]
    fn no_predictions_scores_zero_with_unchanged_counts() {
        let gt = sample_dataset(6, 5);
        let with_preds = match_and_score(
            &predictions_from_ground_truth(&gt),
            &gt,
            &EvalConfig::default(),
        )
        .unwrap();
        let report = match_and_score(&[], &gt, &EvalConfig::default()).unwrap();
        assert_eq!(report.overall_mean, 0.0);
        assert!(report.bins.iter().all(|b| b.mean_score == 0.0));
        assert!(report.per_joint.iter().all(|&s| s == 0.0));
        for (a, b) in report.bins.iter().zip(with_preds.bins.iter()) {
            assert_eq!(a.count, b.count);
        }
    }

    // Hand-constructed 3-person scene with one swapped pair and partial
    // corruption; the expected greedy assignment and score table are worked
    // out in the comments.
    #[test]
    fn hand_worked_three_person_instance() {
        let lib = template_library(1, 7);
        let mut scene = SceneAnnotation::empty(0, 640, 640);
        let spots = [
            crate::geometry::Point::new(120.0, 320.0),
            crate::geometry::Point::new(320.0, 320.0),
            crate::geometry::Point::new(520.0, 320.0),
        ];
        for (z, spot) in spots.iter().enumerate() {
            let keypoints: Vec<crate::compositor::Keypoint> = lib[0]
                .keypoints
                .iter()
                .map(|p| crate::compositor::Keypoint {
                    x: spot.x + p.x * 150.0,
                    y: spot.y + p.y * 150.0,
                    visible: true,
                })
                .collect();
            let silhouette: Vec<Point> = lib[0]
                .silhouette
                .iter()
                .map(|p| Point::new(spot.x + p.x * 150.0, spot.y + p.y * 150.0))
                .collect();
            let head_size =
                crate::compositor::PersonInstance::head_size_from_keypoints(&keypoints, 0.6);
            scene.persons.push(crate::compositor::PersonInstance {
                keypoints,
                silhouette,
                is_synthetic: false,
                z_order: z,
                reference_point: *spot,
                head_size,
            });
        }
        scene.recompute_visibility();
        let gt = vec![AnnotationRecord::from_scene(&scene)];

        let exact = |gi: usize| -> Vec<Point> {
            gt[0].persons[gi]
                .keypoints
                .iter()
                .map(|kp| kp.position())
                .collect()
        };
        // pred0 sits exactly on gt1 (a "swap"): agreement 14.
        let pred0 = exact(1);
        // pred1 is gt0 with joints 0..7 pushed far away: agreement 7.
        let mut pred1 = exact(0);
        for kp in pred1.iter_mut().take(7) {
            kp.x += 10_000.0;
        }
        // pred2 is gt2 with joints {2, 5, 9} pushed far away: agreement 11.
        let mut pred2 = exact(2);
        for k in [2, 5, 9] {
            pred2[k].y += 10_000.0;
        }
        let preds = vec![PredictionRecord {
            scene_id: 0,
            persons: vec![
                PredictedPose { keypoints: pred0 },
                PredictedPose { keypoints: pred1 },
                PredictedPose { keypoints: pred2 },
            ],
        }];

        let report = match_and_score(&preds, &gt, &EvalConfig::default()).unwrap();
        // Greedy matches (pred0, gt1, 14), (pred2, gt2, 11), (pred1, gt0, 7):
        // scores 1.0, 11/14, 7/14; overall (14 + 11 + 7) / 42.
        assert!((report.overall_mean - 32.0 / 42.0).abs() < 1e-12);
        // All three persons are fully visible, so they share the last bin.
        let last = report.bins.last().unwrap();
        assert_eq!(last.count, 3);
        assert!((last.mean_score - 32.0 / 42.0).abs() < 1e-12);
        // Per-joint table: gt1 correct everywhere; gt0 correct on 7..14;
        // gt2 correct except joints {2, 5, 9}.
        for k in 0..KEYPOINT_COUNT {
            let gt0 = usize::from(k >= 7);
            let gt2 = usize::from(!matches!(k, 2 | 5 | 9));
            let expected = (gt0 + 1 + gt2) as f64 / 3.0;
            assert!(
                (report.per_joint[k] - expected).abs() < 1e-12,
                "joint {k}: {} vs {expected}",
                report.per_joint[k]
            );
        }
    }

    #[test]
    fn duplicate_and_unknown_scene_ids_rejected() {
        let gt = sample_dataset(2, 9);
        let mut preds = predictions_from_ground_truth(&gt);
        preds.push(preds[0].clone());
        assert!(match_and_score(&preds, &gt, &EvalConfig::default()).is_err());

        let mut preds = predictions_from_ground_truth(&gt);
        preds[0].scene_id = 999;
        assert!(match_and_score(&preds, &gt, &EvalConfig::default()).is_err());
    }

    #[test]
    fn missing_head_size_rejected() {
        let mut gt = sample_dataset(1, 11);
        if gt[0].persons.is_empty() {
            return;
        }
        gt[0].persons[0].head_size = 0.0;
        let preds = predictions_from_ground_truth(&gt);
        let err = match_and_score(&preds, &gt, &EvalConfig::default()).unwrap_err();
        assert!(err.to_string().contains("head size"));
    }

    #[test]
    fn noisier_predictions_never_score_better() {
        let gt = sample_dataset(12, 13);
        let noisy = |sigma: f64, seed: u64| {
            let mut rng = rng::seeded(seed, 999);
            let mut preds = predictions_from_ground_truth(&gt);
            for p in &mut preds {
                for pose in &mut p.persons {
                    for kp in &mut pose.keypoints {
                        kp.x += (rng.random::<f64>() * 2.0 - 1.0) * sigma;
                        kp.y += (rng.random::<f64>() * 2.0 - 1.0) * sigma;
                    }
                }
            }
            match_and_score(&preds, &gt, &EvalConfig::default())
                .unwrap()
                .overall_mean
        };
        for seed in 0..5 {
            let clean = noisy(0.0, seed);
            let mild = noisy(8.0, seed);
            let heavy = noisy(32.0, seed);
            assert_eq!(clean, 1.0);
            assert!(mild <= clean);
            assert!(heavy <= mild, "seed {seed}: heavy {heavy} > mild {mild}");
        }
    }

    #[test]
    fn every_person_lands_in_exactly_one_bin() {
        for seed in [1u64, 2, 3] {
            let gt = sample_dataset(8, seed);
            let report = match_and_score(&[], &gt, &EvalConfig::default()).unwrap();
            let persons: usize = gt.iter().map(|r| r.persons.len()).sum();
            let binned: usize = report.bins.iter().map(|b| b.count).sum();
            assert_eq!(persons, binned);
            assert_eq!(persons, report.total_persons);
        }
    }

    #[test]
    fn csv_has_note_and_rows() {
        let gt = sample_dataset(2, 15);
        let report =
            match_and_score(&predictions_from_ground_truth(&gt), &gt, &EvalConfig::default())
                .unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# "));
        assert_eq!(lines.next().unwrap(), "bin,lo,hi,count,mean_score");
        assert_eq!(csv.lines().count(), 2 + report.bins.len());
    }

    #[test]
    fn predictions_round_trip() {
        let gt = sample_dataset(3, 17);
        let preds = predictions_from_ground_truth(&gt);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        write_predictions(&preds, &path).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
    }
}
