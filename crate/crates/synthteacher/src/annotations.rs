//! Dataset ingestion and emission.
//!
//! Datasets are line-delimited JSON: one scene record per line, canonical
//! field order, shortest round-trip float formatting, newline-terminated.
//! Derived fields (per-person minimal distance and occlusion ratio) are
//! stored alongside the raw annotation and re-verified on read.
//!
//! Record schema (version 1), fields in serialized order:
//!
//! | field              | type                | notes                              |
//! |--------------------|---------------------|------------------------------------|
//! | `schema_version`   | integer             | currently 1                        |
//! | `scene_id`         | integer             | unique per dataset                 |
//! | `width`, `height`  | integers            | canvas size in px                  |
//! | `camera_pitch_deg` | float               | per-scene camera pitch             |
//! | `persons`          | array of person     | listed in ascending z order        |
//!
//! Person fields: `keypoints` (14 of `{x, y, visible}`), `is_synthetic`,
//! `z_order`, `reference_point` (`[x, y]`), `silhouette` (array of
//! `[x, y]`), `head_size`, `min_distance_px`, `occlusion_ratio`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compositor::{Keypoint, PersonInstance, SceneAnnotation, KEYPOINT_COUNT};
use crate::error::{Error, Result};
use crate::geometry::Point;

pub const SCHEMA_VERSION: u32 = 1;

/// One person as stored on disk: raw annotation plus derived features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub keypoints: Vec<Keypoint>,
    pub is_synthetic: bool,
    pub z_order: usize,
    pub reference_point: Point,
    pub silhouette: Vec<Point>,
    pub head_size: f64,
    /// Derived: distance to the nearest other person's reference point.
    pub min_distance_px: f64,
    /// Derived: visible keypoints / total keypoints.
    pub occlusion_ratio: f64,
}

/// One scene as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema_version: u32,
    pub scene_id: u64,
    pub width: u32,
    pub height: u32,
    pub camera_pitch_deg: f64,
    pub persons: Vec<PersonRecord>,
}

impl AnnotationRecord {
    /// Build a record from a scene, computing the derived fields.
    pub fn from_scene(scene: &SceneAnnotation) -> Self {
        let min_distances = scene.min_distances();
        let persons = scene
            .persons
            .iter()
            .enumerate()
            .map(|(i, p)| PersonRecord {
                keypoints: p.keypoints.clone(),
                is_synthetic: p.is_synthetic,
                z_order: p.z_order,
                reference_point: p.reference_point,
                silhouette: p.silhouette.clone(),
                head_size: p.head_size,
                min_distance_px: min_distances[i],
                occlusion_ratio: scene.visibility_ratio(i).expect("valid index"),
            })
            .collect();
        AnnotationRecord {
            schema_version: SCHEMA_VERSION,
            scene_id: scene.scene_id,
            width: scene.width,
            height: scene.height,
            camera_pitch_deg: scene.camera_pitch_deg,
            persons,
        }
    }

    /// Reconstruct the in-memory scene (derived fields dropped).
    pub fn to_scene(&self) -> SceneAnnotation {
        SceneAnnotation {
            scene_id: self.scene_id,
            width: self.width,
            height: self.height,
            camera_pitch_deg: self.camera_pitch_deg,
            persons: self
                .persons
                .iter()
                .map(|p| PersonInstance {
                    keypoints: p.keypoints.clone(),
                    silhouette: p.silhouette.clone(),
                    is_synthetic: p.is_synthetic,
                    z_order: p.z_order,
                    reference_point: p.reference_point,
                    head_size: p.head_size,
                })
                .collect(),
        }
    }

    /// Validate schema version, raw invariants, and the consistency of the
    /// derived fields with the raw ones.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unknown schema version {}",
                self.schema_version
            )));
        }
        let scene = self.to_scene();
        scene.validate()?;
        let min_distances = scene.min_distances();
        for (i, p) in self.persons.iter().enumerate() {
            if (p.min_distance_px - min_distances[i]).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "persons[{i}].min_distance_px is {} but recomputes to {}",
                    p.min_distance_px, min_distances[i]
                )));
            }
            let visible = p.keypoints.iter().filter(|kp| kp.visible).count();
            let ratio = visible as f64 / KEYPOINT_COUNT as f64;
            if (p.occlusion_ratio - ratio).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "persons[{i}].occlusion_ratio is {} but the visibility flags give {}",
                    p.occlusion_ratio, ratio
                )));
            }
        }
        Ok(())
    }

    /// Reject non-finite values before serialization, naming the field.
    fn check_writable(&self) -> Result<()> {
        if !self.camera_pitch_deg.is_finite() {
            return Err(Error::invalid("camera_pitch_deg is not finite"));
        }
        for (i, p) in self.persons.iter().enumerate() {
            for (k, kp) in p.keypoints.iter().enumerate() {
                if !kp.x.is_finite() {
                    return Err(Error::invalid(format!(
                        "persons[{i}].keypoints[{k}].x is not finite"
                    )));
                }
                if !kp.y.is_finite() {
                    return Err(Error::invalid(format!(
                        "persons[{i}].keypoints[{k}].y is not finite"
                    )));
                }
            }
            if !p.silhouette.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "persons[{i}].silhouette has a non-finite vertex"
                )));
            }
            for (name, v) in [
                ("head_size", p.head_size),
                ("min_distance_px", p.min_distance_px),
                ("occlusion_ratio", p.occlusion_ratio),
            ] {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("persons[{i}].{name} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Iterate over the records of a line-delimited dataset without loading the
/// whole file. Each item carries its validation result.
pub fn read_iter(path: &Path) -> Result<impl Iterator<Item = Result<AnnotationRecord>> + '_> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    Ok(reader.lines().enumerate().filter_map(move |(idx, line)| {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(path, e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        let record: AnnotationRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                return Some(Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                }))
            }
        };
        if let Err(e) = record.validate() {
            return Some(Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            }));
        }
        Some(Ok(record))
    }))
}

/// Read and validate a whole dataset.
pub fn read_dataset(path: &Path) -> Result<Vec<AnnotationRecord>> {
    read_iter(path)?.collect()
}

/// Write records as line-delimited JSON, one record at a time (the input
/// iterator is never collected).
pub fn write_dataset<'a, I>(records: I, path: &Path) -> Result<()>
where
    I: IntoIterator<Item = &'a AnnotationRecord>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        record.check_writable()?;
        let line = serde_json::to_string(record)
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
