//! Compose a purely synthetic dataset and a mixed dataset, and dump one
//! scene as a PGM raster for eyeballing the z-ordering.
//!
//! ```bash
//! cargo run --example compose_dataset
//! ```

use synthteacher::annotations::{write_dataset, AnnotationRecord};
use synthteacher::compositor::{
    compose_dataset, template_library, write_pgm, CompositionConfig, Keypoint, PersonInstance,
    SceneAnnotation,
};
use synthteacher::geometry::Point;
use synthteacher::Result;

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("synthteacher_compose_example");
    std::fs::create_dir_all(&out).unwrap();
    let library = template_library(20, 7);

    // Purely synthetic: empty 640x640 backgrounds, many people per scene.
    let synthetic_config = CompositionConfig {
        lambda: 9.0,
        seed: 7,
        renders_per_background: 5,
        ..CompositionConfig::default()
    };
    let backgrounds: Vec<SceneAnnotation> =
        (0..4).map(|i| SceneAnnotation::empty(i, 640, 640)).collect();
    let (scenes, stats) = compose_dataset(&backgrounds, &library, &synthetic_config)?;
    println!(
        "synthetic: {} scenes, {} instances placed, {} dropped, mean count {:.2}",
        stats.scenes, stats.instances_placed, stats.instances_dropped, stats.mean_instances_requested
    );
    println!(
        "occlusion-ratio histogram (10 buckets): {:?}",
        stats.occlusion_ratio_histogram
    );
    let records: Vec<AnnotationRecord> = scenes.iter().map(AnnotationRecord::from_scene).collect();
    write_dataset(&records, &out.join("synthetic.jsonl"))?;

    // Mixed: superimpose a few synthetic people over a scene that already
    // has real (annotated) persons; their raw annotations stay intact.
    let mut background = SceneAnnotation::empty(0, 640, 640);
    background.camera_pitch_deg = 12.0;
    for (z, spot) in [Point::new(200.0, 320.0), Point::new(440.0, 300.0)]
        .iter()
        .enumerate()
    {
        let keypoints: Vec<Keypoint> = library[z]
            .keypoints
            .iter()
            .map(|p| Keypoint {
                x: spot.x + p.x * 250.0,
                y: spot.y + p.y * 250.0,
                visible: true,
            })
            .collect();
        let silhouette: Vec<Point> = library[z]
            .silhouette
            .iter()
            .map(|p| Point::new(spot.x + p.x * 250.0, spot.y + p.y * 250.0))
            .collect();
        let head_size = PersonInstance::head_size_from_keypoints(&keypoints, 0.6);
        background.persons.push(PersonInstance {
            keypoints,
            silhouette,
            is_synthetic: false,
            z_order: z,
            reference_point: *spot,
            head_size,
        });
    }
    background.recompute_visibility();

    let mixed_config = CompositionConfig {
        lambda: 4.0,
        keep_background_pitch: true,
        seed: 8,
        renders_per_background: 5,
        ..CompositionConfig::default()
    };
    let (mixed_scenes, mixed_stats) =
        compose_dataset(&[background], &library, &mixed_config)?;
    println!(
        "mixed: {} scenes over 1 background, {} synthetic instances added",
        mixed_stats.scenes, mixed_stats.instances_placed
    );
    for (i, scene) in mixed_scenes.iter().enumerate().take(2) {
        let real_visibility = scene.visibility_ratio(0)?;
        println!(
            "  scene {i}: real person 0 keeps {:.0}% of its keypoints visible",
            real_visibility * 100.0
        );
    }
    let records: Vec<AnnotationRecord> =
        mixed_scenes.iter().map(AnnotationRecord::from_scene).collect();
    write_dataset(&records, &out.join("mixed.jsonl"))?;

    let pgm = out.join("mixed_scene_0.pgm");
    write_pgm(&mixed_scenes[0], &pgm)?;
    println!("wrote datasets and {}", pgm.display());
    Ok(())
}
