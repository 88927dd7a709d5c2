//! Motion retargeting by per-sequence optimization of residual joint
//! rotations, balancing semantic preservation, limb interpenetration and
//! temporal consistency on skinned characters.

pub mod error;
pub mod io;
pub mod math;
pub mod metrics;
pub mod optimizer;
pub mod proximity;
pub mod scene;
pub mod semantic_loss;
pub mod skeleton;
pub mod skinning;
pub mod spatial_loss;
pub mod temporal_loss;

pub use error::{Error, Result};
pub use math::{Quat, Vec3};
pub use metrics::MetricsReport;
pub use optimizer::{
    compose_motion, loss_gradient, normalize_global, optimize_sequence, LimbConfig, OptimizerConfig, ResidualMotion,
    RetargetProblem, RetargetReport,
};
pub use proximity::ProximityIndex;
pub use scene::{generate_scene, Scene, SceneSpec};
pub use semantic_loss::{LossReport, LossWeights};
pub use skeleton::{Joint, JointOrientationField, Motion, Pose, Skeleton};
pub use skinning::{Influences, LimbSegmentation, PenetrationSample, SampleCounts, SkinnedCharacter};
pub use spatial_loss::NeighborSearch;
