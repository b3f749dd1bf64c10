//! Experiment drivers: the teacher-vs-uniform training loop, dataset
//! composition, evaluation, and grouping statistics.
//!
//! Every output under the run directory is a deterministic function of
//! `(config, seed)`; wall-clock timestamps live only in the `run_meta.json`
//! sidecar.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotations::{self, AnnotationRecord};
use crate::compositor::{self, SceneAnnotation};
use crate::config::{ComposeMode, RunConfig, RunMode};
use crate::error::{Error, Result};
use crate::grouping::{FeatureKind, GroupingSpec};
use crate::metrics::{self, EvalReport, PredictedPose, PredictionRecord};
use crate::reward::LossHistory;
use crate::rng;
use crate::sampler::{draw_batch, SamplingSchedule};
use crate::simplex::{pseudo_gt_update, GroupDistribution, UpdateParams};
use crate::student::{
    masked_loss_aggregate, BatchSample, OracleStudent, SampleLoss, Student,
};
use crate::teacher::{
    save_checkpoint, AdamOptimizer, StudentStateTracker, TeacherNet,
};

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Sampling distribution in effect this step (uniform in uniform mode).
    pub p_tilde: Vec<f64>,
    /// Latched group the synthetic half was drawn from.
    pub group: usize,
    pub reselected: bool,
    pub explored: bool,
    pub fallback: bool,
    /// Reward sign: +1 or -1.
    pub delta: i8,
    pub loss_synthetic: f64,
    pub loss_real: f64,
    pub window_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_loss: Option<f64>,
    pub skills: Vec<f64>,
}

/// End-of-run summary (also written as `summary.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub seed: u64,
    pub total_steps: usize,
    pub num_groups: usize,
    pub final_skills: Vec<f64>,
    pub final_difficulties: Vec<f64>,
    /// Difficulty-weighted mean of the oracle's noise-free final losses.
    pub weighted_final_loss: f64,
    /// Mean sampling distribution over the final `tail_steps` steps.
    pub mean_p_tilde_tail: Vec<f64>,
    pub tail_steps: usize,
    /// How often each group was latched (one count per step).
    pub group_step_counts: Vec<u64>,
    pub fallback_events: u64,
    pub exploration_reselections: u64,
    pub reselections: u64,
}

/// Full result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
    pub eval_report: EvalReport,
    pub out_dir: PathBuf,
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_meta(out_dir: &Path, command: &str, timestamps: (u64, u64)) -> Result<()> {
    #[derive(Serialize)]
    struct Meta<'a> {
        command: &'a str,
        started_unix_secs: u64,
        finished_unix_secs: u64,
    }
    write_json(
        &Meta {
            command,
            started_unix_secs: timestamps.0,
            finished_unix_secs: timestamps.1,
        },
        &out_dir.join("run_meta.json"),
    )
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Training pools: group-bucketed synthetic sample ids and a flat real pool
/// with per-sample group ids.
struct Pools {
    synthetic_by_group: Vec<Vec<usize>>,
    synthetic_groups: Vec<usize>,
    real_ids: Vec<usize>,
    real_groups: Vec<usize>,
}

impl Pools {
    fn abstract_pools(config: &RunConfig) -> Pools {
        let g = config.grouping.num_groups;
        let per_group = config.sampler.synthetic_pool_per_group;
        let mut synthetic_by_group = vec![Vec::new(); g];
        let mut synthetic_groups = Vec::with_capacity(g * per_group);
        for group in 0..g {
            for _ in 0..per_group {
                let id = synthetic_groups.len();
                synthetic_by_group[group].push(id);
                synthetic_groups.push(group);
            }
        }
        let mut rng = rng::seeded(config.seed, rng::stream::POOL_ASSIGNMENT);
        let real_groups: Vec<usize> = (0..config.sampler.real_pool_size)
            .map(|_| rng.random_range(0..g))
            .collect();
        Pools {
            synthetic_by_group,
            synthetic_groups,
            real_ids: (0..config.sampler.real_pool_size).collect(),
            real_groups,
        }
    }

    fn from_dataset(
        config: &RunConfig,
        spec: &GroupingSpec,
        synthetic: &[AnnotationRecord],
        real: Option<&[AnnotationRecord]>,
    ) -> Result<Pools> {
        let g = config.grouping.num_groups;
        let mut synthetic_by_group = vec![Vec::new(); g];
        let mut synthetic_groups = Vec::new();
        let mut real_groups = Vec::new();
        let mut push_person =
            |record: &AnnotationRecord, person_idx: usize, is_synth: bool| -> Result<()> {
                let person = &record.persons[person_idx];
                let feature = match spec.kind() {
                    FeatureKind::MinDistance => person.min_distance_px,
                    FeatureKind::CameraPitch => record.camera_pitch_deg,
                };
                let group = spec.assign_group(feature)?;
                if is_synth {
                    let id = synthetic_groups.len();
                    synthetic_by_group[group].push(id);
                    synthetic_groups.push(group);
                } else {
                    real_groups.push(group);
                }
                Ok(())
            };
        for record in synthetic {
            for i in 0..record.persons.len() {
                let is_synth = record.persons[i].is_synthetic;
                if is_synth || real.is_none() {
                    push_person(record, i, is_synth)?;
                }
            }
        }
        if let Some(real_records) = real {
            for record in real_records {
                for i in 0..record.persons.len() {
                    if !record.persons[i].is_synthetic {
                        push_person(record, i, false)?;
                    }
                }
            }
        }
        if synthetic_groups.is_empty() {
            return Err(Error::config(
                "data.synthetic_dataset: contains no synthetic persons",
            ));
        }
        if real_groups.is_empty() {
            // No annotated real persons anywhere; fall back to an abstract
            // real pool so the 50/50 batch contract still holds.
            let mut rng = rng::seeded(config.seed, rng::stream::POOL_ASSIGNMENT);
            real_groups = (0..config.sampler.real_pool_size)
                .map(|_| rng.random_range(0..g))
                .collect();
        }
        Ok(Pools {
            synthetic_by_group,
            synthetic_groups,
            real_ids: (0..real_groups.len()).collect(),
            real_groups,
        })
    }
}

/// Grouping spec for a run: fixed range for minimal distance, data-derived
/// interval for camera pitch.
fn build_spec(config: &RunConfig, eval_records: &[AnnotationRecord]) -> Result<GroupingSpec> {
    match config.grouping.kind {
        FeatureKind::MinDistance => GroupingSpec::min_distance(config.grouping.num_groups),
        FeatureKind::CameraPitch => {
            let pitches: Vec<f64> = eval_records.iter().map(|r| r.camera_pitch_deg).collect();
            Ok(GroupingSpec::from_pitch_values(&pitches, config.grouping.num_groups)?.spec)
        }
    }
}

/// Evaluation dataset: the configured synthetic dataset, or an internally
/// composed one derived from the run seed.
fn eval_dataset(config: &RunConfig) -> Result<Vec<AnnotationRecord>> {
    if let Some(path) = &config.data.synthetic_dataset {
        return annotations::read_dataset(path);
    }
    let library =
        compositor::template_library(config.compose.template_count, config.seed);
    let mut settings = config.compose.clone();
    settings.num_backgrounds = config.eval.eval_scenes;
    settings.renders_per_background = 1;
    let backgrounds: Vec<SceneAnnotation> = (0..settings.num_backgrounds)
        .map(|i| {
            SceneAnnotation::empty(i as u64, settings.canvas.0, settings.canvas.1)
        })
        .collect();
    let (scenes, _) = compositor::compose_dataset(
        &backgrounds,
        &library,
        &settings.composition_config(config.seed),
    )?;
    Ok(scenes.iter().map(AnnotationRecord::from_scene).collect())
}

/// Predict keypoints for every person with the oracle student's error
/// model: ground truth plus Gaussian noise proportional to the student's
/// residual difficulty for the person's group, scaled by head size.
pub fn oracle_predictions(
    student: &OracleStudent,
    records: &[AnnotationRecord],
    spec: &GroupingSpec,
    noise_gain: f64,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    let mut rng = rng::seeded(seed, rng::stream::PREDICTOR);
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let mut persons = Vec::with_capacity(record.persons.len());
        for person in &record.persons {
            let feature = match spec.kind() {
                FeatureKind::MinDistance => person.min_distance_px,
                FeatureKind::CameraPitch => record.camera_pitch_deg,
            };
            let group = spec.assign_group(feature)?;
            let residual = student.expected_loss(group);
            let sigma = noise_gain * residual * person.head_size;
            let keypoints = if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("valid sigma");
                person
                    .keypoints
                    .iter()
                    .map(|kp| {
                        crate::geometry::Point::new(
                            kp.x + normal.sample(&mut rng),
                            kp.y + normal.sample(&mut rng),
                        )
                    })
                    .collect()
            } else {
                person.keypoints.iter().map(|kp| kp.position()).collect()
            };
            persons.push(PredictedPose { keypoints });
        }
        out.push(PredictionRecord {
            scene_id: record.scene_id,
            persons,
        });
    }
    Ok(out)
}

/// Execute a full training run and write its artifacts.
///
/// Per step the loop: builds the student-state vector, queries the teacher
/// (or the uniform baseline) for a sampling distribution, draws a 50/50
/// batch with the latched group, trains the student, turns the synthetic
/// mean-loss-per-joint into a reward sign, shifts the pseudo ground truth,
/// and takes one KL gradient step on the teacher.
pub fn run_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let started = now_secs();
    let out_dir = config.out_dir.clone();
    create_out_dir(&out_dir)?;

    let num_groups = config.grouping.num_groups;
    let eval_records = eval_dataset(config)?;
    let spec = build_spec(config, &eval_records)?;
    let pools = if config.data.synthetic_dataset.is_some() {
        let synthetic = eval_records.clone();
        let real = match &config.data.real_dataset {
            Some(path) => Some(annotations::read_dataset(path)?),
            None => None,
        };
        Pools::from_dataset(config, &spec, &synthetic, real.as_deref())?
    } else {
        Pools::abstract_pools(config)
    };

    let mut student = OracleStudent::new(config.oracle.params.clone(), config.seed)?;
    // Every batch carries synthetic samples, so the feature extractor stays
    // frozen for the whole run (a no-op for the oracle student).
    student.set_backbone_frozen(true);
    let mut tracker = StudentStateTracker::new(num_groups, config.teacher.state_ema)?;
    let mut schedule = SamplingSchedule::new(
        config.teacher.epsilon,
        config.teacher.steps_per_group,
        config.seed,
    )?;
    let mut history = LossHistory::new(config.teacher.history_window)?;
    let mut teacher = match config.mode {
        RunMode::Teacher => Some((
            TeacherNet::new(
                tracker.dim(),
                config.teacher.hidden_dim,
                num_groups,
                config.seed,
            )?,
            AdamOptimizer::new(config.teacher.learning_rate, 0)?,
        )),
        RunMode::Uniform => None,
    };
    if let Some((net, opt)) = &mut teacher {
        *opt = AdamOptimizer::new(config.teacher.learning_rate, net.param_count())?;
    }
    let uniform = GroupDistribution::uniform(num_groups)?;

    let log_path = out_dir.join("train_log.jsonl");
    let log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);

    let mut steps: Vec<StepRecord> = Vec::with_capacity(config.total_steps);
    let mut group_step_counts = vec![0u64; num_groups];
    let mut fallback_events = 0u64;
    let mut reselections = 0u64;
    let mut exploration_reselections = 0u64;

    for step in 0..config.total_steps {
        if let Some(switch) = &config.oracle.difficulty_switch {
            if step == switch.at_step {
                student.set_difficulties(switch.difficulties.clone())?;
            }
        }

        let state = tracker.state_vector();
        let p_tilde = match &teacher {
            Some((net, _)) => net.forward(&state)?,
            None => uniform.clone(),
        };

        let drawn = draw_batch(
            &mut schedule,
            &p_tilde,
            &pools.real_ids,
            &pools.synthetic_by_group,
            config.sampler.batch_size,
        )?;
        if drawn.empty_group_fallback {
            fallback_events += 1;
        }
        if drawn.choice.reselected {
            reselections += 1;
            if drawn.choice.explored {
                exploration_reselections += 1;
            }
        }

        let mut batch: Vec<BatchSample> = Vec::with_capacity(config.sampler.batch_size);
        for &id in &drawn.spec.real_sample_ids {
            batch.push(BatchSample {
                group_id: pools.real_groups[id],
                is_synthetic: false,
            });
        }
        for &id in &drawn.spec.synthetic_sample_ids {
            batch.push(BatchSample {
                group_id: pools.synthetic_groups[id],
                is_synthetic: true,
            });
        }

        let losses = student.train_on(&batch)?;
        let per_sample_mean = |l: &SampleLoss| -> Result<f64> {
            let joints: Vec<(f64, bool)> = l.per_joint.iter().map(|&j| (j, true)).collect();
            crate::reward::mean_loss_per_joint(&joints)
        };
        let mut synthetic_means: Vec<(f64, bool)> = Vec::new();
        let mut real_sum = 0.0;
        let mut real_count = 0usize;
        let mut batch_sum = 0.0;
        for loss in &losses {
            let mean = per_sample_mean(loss)?;
            batch_sum += mean;
            if loss.is_synthetic {
                synthetic_means.push((mean, true));
            } else {
                real_sum += mean;
                real_count += 1;
            }
            tracker.observe_sample(loss.group_id, mean);
        }
        for loss in &losses {
            if loss.is_synthetic {
                tracker.observe_synthetic_draw(loss.group_id);
            }
        }
        tracker.observe_global(batch_sum / losses.len() as f64);

        let loss_synthetic = masked_loss_aggregate(&synthetic_means, config.mask)?;
        let loss_real = if real_count == 0 {
            0.0
        } else {
            real_sum / real_count as f64
        };

        let signal = history.evaluate_reward(loss_synthetic)?;

        // The teacher is trained once per decision: at the re-selection
        // step, where the reward compares the fresh group's loss against
        // the previous group's window. The pseudo ground truth for that
        // decision is pursued for a fixed number of gradient steps.
        let teacher_loss = match &mut teacher {
            Some((net, opt)) if drawn.choice.reselected => {
                let target = pseudo_gt_update(
                    &p_tilde,
                    drawn.choice.group,
                    UpdateParams::new(config.teacher.alpha, signal.delta)?,
                )?;
                let mut first_loss = 0.0;
                for k in 0..config.teacher.updates_per_selection {
                    let (loss, grads) = net.loss_and_gradients(&state, &target)?;
                    if k == 0 {
                        first_loss = loss;
                    }
                    opt.apply_update(net, &grads)?;
                }
                Some(first_loss)
            }
            _ => None,
        };

        group_step_counts[drawn.choice.group] += 1;
        let record = StepRecord {
            step,
            p_tilde: p_tilde.probs().to_vec(),
            group: drawn.choice.group,
            reselected: drawn.choice.reselected,
            explored: drawn.choice.explored,
            fallback: drawn.empty_group_fallback,
            delta: signal.delta.as_i8(),
            loss_synthetic,
            loss_real,
            window_mean: signal.window_mean,
            teacher_loss,
            skills: student.skills().to_vec(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::invalid(format!("log serialization failed: {e}")))?;
        log.write_all(line.as_bytes())
            .and_then(|_| log.write_all(b"\n"))
            .map_err(|e| Error::io(&log_path, e))?;
        steps.push(record);
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    // Difficulty-weighted mean of the final noise-free losses.
    let difficulties = student.difficulties().to_vec();
    let weight_sum: f64 = difficulties.iter().sum();
    let weighted_final_loss = (0..num_groups)
        .map(|g| difficulties[g] * student.expected_loss(g))
        .sum::<f64>()
        / weight_sum;

    let tail_steps = config.total_steps.min(500);
    let mut mean_p_tilde_tail = vec![0.0; num_groups];
    for record in &steps[config.total_steps - tail_steps..] {
        for (acc, p) in mean_p_tilde_tail.iter_mut().zip(&record.p_tilde) {
            *acc += p;
        }
    }
    for acc in &mut mean_p_tilde_tail {
        *acc /= tail_steps as f64;
    }

    let summary = RunSummary {
        mode: config.mode,
        seed: config.seed,
        total_steps: config.total_steps,
        num_groups,
        final_skills: student.skills().to_vec(),
        final_difficulties: difficulties,
        weighted_final_loss,
        mean_p_tilde_tail,
        tail_steps,
        group_step_counts,
        fallback_events,
        exploration_reselections,
        reselections,
    };
    write_json(&summary, &out_dir.join("summary.json"))?;

    if let Some((net, opt)) = &teacher {
        save_checkpoint(
            net,
            config.seed,
            opt.step_count(),
            &out_dir.join("teacher.ckpt"),
        )?;
    }

    let predictions = oracle_predictions(
        &student,
        &eval_records,
        &spec,
        config.eval.noise_gain,
        config.seed,
    )?;
    let eval_report = metrics::match_and_score(&predictions, &eval_records, &config.eval.config)?;
    write_json(&eval_report, &out_dir.join("eval_report.json"))?;
    fs::write(out_dir.join("eval_report.csv"), eval_report.to_csv())
        .map_err(|e| Error::io(out_dir.join("eval_report.csv"), e))?;

    write_meta(&out_dir, "train", (started, now_secs()))?;

    Ok(TrainOutcome {
        steps,
        summary,
        eval_report,
        out_dir,
    })
}

/// Result of `compose`: where the dataset went plus its statistics.
#[derive(Debug)]
pub struct ComposeOutcome {
    pub dataset_path: PathBuf,
    pub stats: compositor::CompositionStats,
}

/// Compose a dataset per the config and write it with its statistics.
pub fn run_compose(config: &RunConfig) -> Result<ComposeOutcome> {
    config.validate()?;
    let started = now_secs();
    let out_dir = config.out_dir.clone();
    create_out_dir(&out_dir)?;

    let settings = &config.compose;
    let backgrounds: Vec<SceneAnnotation> = match settings.mode {
        ComposeMode::Synthetic => (0..settings.num_backgrounds)
            .map(|i| SceneAnnotation::empty(i as u64, settings.canvas.0, settings.canvas.1))
            .collect(),
        ComposeMode::Mixed => {
            let path = settings.background_dataset.as_ref().ok_or_else(|| {
                Error::config("compose.background_dataset: required in mixed mode")
            })?;
            annotations::read_dataset(path)?
                .iter()
                .map(AnnotationRecord::to_scene)
                .collect()
        }
    };

    let library = compositor::template_library(settings.template_count, config.seed);
    let (scenes, stats) = compositor::compose_dataset(
        &backgrounds,
        &library,
        &settings.composition_config(config.seed),
    )?;

    let dataset_path = out_dir.join("dataset.jsonl");
    let records: Vec<AnnotationRecord> = scenes.iter().map(AnnotationRecord::from_scene).collect();
    annotations::write_dataset(&records, &dataset_path)?;
    write_json(&stats, &out_dir.join("compose_stats.json"))?;
    if settings.write_pgm {
        for scene in &scenes {
            compositor::write_pgm(scene, &out_dir.join(format!("scene_{:05}.pgm", scene.scene_id)))?;
        }
    }
    write_meta(&out_dir, "compose", (started, now_secs()))?;
    Ok(ComposeOutcome {
        dataset_path,
        stats,
    })
}

/// Evaluate stored predictions against a stored dataset and write the
/// report as JSON and CSV.
pub fn run_eval(
    config: &RunConfig,
    predictions_path: &Path,
    dataset_path: &Path,
) -> Result<EvalReport> {
    config.validate()?;
    let started = now_secs();
    let out_dir = config.out_dir.clone();
    create_out_dir(&out_dir)?;

    let ground_truth = annotations::read_dataset(dataset_path)?;
    let predictions = metrics::read_predictions(predictions_path)?;
    let report = metrics::match_and_score(&predictions, &ground_truth, &config.eval.config)?;
    write_json(&report, &out_dir.join("eval_report.json"))?;
    fs::write(out_dir.join("eval_report.csv"), report.to_csv())
        .map_err(|e| Error::io(out_dir.join("eval_report.csv"), e))?;
    write_meta(&out_dir, "eval", (started, now_secs()))?;
    Ok(report)
}

/// Per-grouping histogram of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupingStats {
    pub kind: FeatureKind,
    pub lower: f64,
    pub upper: f64,
    pub fallback: bool,
    pub histogram: Vec<u64>,
}

/// Output of `group-stats`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupStatsReport {
    pub num_groups: usize,
    pub persons_total: usize,
    pub synthetic_persons: usize,
    pub real_persons: usize,
    pub min_distance: GroupingStats,
    pub camera_pitch: GroupingStats,
}

/// Group a dataset under both feature kinds and report the histograms.
pub fn run_group_stats(config: &RunConfig, dataset_path: &Path) -> Result<GroupStatsReport> {
    config.validate()?;
    let started = now_secs();
    let out_dir = config.out_dir.clone();
    create_out_dir(&out_dir)?;

    let records = annotations::read_dataset(dataset_path)?;
    let n = config.grouping.num_groups;
    let md_spec = GroupingSpec::min_distance(n)?;
    let pitches: Vec<f64> = records.iter().map(|r| r.camera_pitch_deg).collect();
    let pitch_outcome = GroupingSpec::from_pitch_values(&pitches, n)?;

    let mut md_hist = vec![0u64; n];
    let mut pitch_hist = vec![0u64; n];
    let mut synthetic_persons = 0usize;
    let mut persons_total = 0usize;
    for record in &records {
        for person in &record.persons {
            persons_total += 1;
            if person.is_synthetic {
                synthetic_persons += 1;
            }
            md_hist[md_spec.assign_group(person.min_distance_px)?] += 1;
            pitch_hist[pitch_outcome.spec.assign_group(record.camera_pitch_deg)?] += 1;
        }
    }

    let report = GroupStatsReport {
        num_groups: n,
        persons_total,
        synthetic_persons,
        real_persons: persons_total - synthetic_persons,
        min_distance: GroupingStats {
            kind: FeatureKind::MinDistance,
            lower: md_spec.lower(),
            upper: md_spec.upper(),
            fallback: false,
            histogram: md_hist,
        },
        camera_pitch: GroupingStats {
            kind: FeatureKind::CameraPitch,
            lower: pitch_outcome.spec.lower(),
            upper: pitch_outcome.spec.upper(),
            fallback: pitch_outcome.fallback.is_some(),
            histogram: pitch_hist,
        },
    };
    write_json(&report, &out_dir.join("group_stats.json"))?;
    write_meta(&out_dir, "group-stats", (started, now_secs()))?;
    Ok(report)
}
