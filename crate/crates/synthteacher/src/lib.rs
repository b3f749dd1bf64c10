//! Curriculum sampling with a trainable adversarial teacher.
//!
//! A small feed-forward teacher network learns online which groups of
//! synthetic training data are hardest for a student and biases batch
//! sampling toward them. The teacher has no differentiable path through the
//! sampler, so it is trained by a reward scheme: when the synthetic-batch
//! loss meets or exceeds the windowed mean of recent losses, the probability
//! of the selected group is raised in a pseudo ground truth, and the teacher
//! takes KL-divergence gradient steps toward it. The crate also ships a 2D
//! synthetic-occlusion scene compositor with exact z-order visibility ground
//! truth, a line-delimited annotation format, an occlusion-binned keypoint
//! evaluation, and a simulated oracle student whose per-group difficulty is
//! known, so the teacher's targeting can be verified quantitatively.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! - **`train_teacher`** — full teacher-vs-uniform run against the oracle
//!   student; watch the sampling distribution lock onto the hard group.
//! - **`compose_dataset`** — synthetic and mixed dataset composition with
//!   occlusion statistics and a PGM raster dump.
//! - **`sampling_policy`** — epsilon-greedy selection, latching, 50/50
//!   batches, and the empty-group fallback.
//! - **`gradient_check`** — teacher-net analytic gradients vs central
//!   finite differences.
//! - **`occlusion_eval`** — binned keypoint scoring under increasing
//!   prediction noise.
//! - **`reward_dynamics`** — the reward sign and pseudo-ground-truth update
//!   on a hand-written loss sequence.
//!
//! ```bash
//! cargo run --example train_teacher
//! cargo run --example compose_dataset
//! ```
//!
//! A thin `synthteacher` binary exposes the same flows as `compose`,
//! `train`, `eval`, and `group-stats` subcommands driven by a JSON config
//! file; see the crate README.
//!
//! ## Module map
//!
//! - [`grouping`] — difficulty groups over sample features (minimal
//!   inter-person distance, camera pitch).
//! - [`simplex`] — distributions over groups, the pseudo-ground-truth
//!   update, KL divergence.
//! - [`teacher`] — the teacher network, its optimizer, checkpoints, and the
//!   student-state summary it consumes.
//! - [`reward`] — windowed loss history and the reward sign.
//! - [`sampler`] — epsilon-greedy latched group selection and batch
//!   composition.
//! - [`student`] — the student contract, the oracle student, loss masking.
//! - [`compositor`] — layered 2D scenes with exact keypoint visibility.
//! - [`annotations`] — dataset records and line-delimited JSON I/O.
//! - [`metrics`] — greedy keypoint matching and occlusion-binned reports.
//! - [`config`] / [`runner`] — experiment configuration and drivers.

pub mod annotations;
pub mod compositor;
pub mod config;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod metrics;
pub mod reward;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod simplex;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
pub use grouping::{FeatureKind, GroupingSpec};
pub use simplex::{GroupDistribution, RewardSign};
pub use student::{OracleStudent, Student};
pub use teacher::TeacherNet;
