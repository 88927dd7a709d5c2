//! Evaluation metrics: height-normalized joint error (global and
//! root-pinned), limb penetration rate, and trajectory curvature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{character_height, joint_trajectories, Motion, Skeleton};
use crate::skinning::{LimbSegmentation, PenetrationSample, SkinnedCharacter};
use crate::spatial_loss::{count_penetrating, NeighborSearch};

/// Column order of the results CSV.
pub const CSV_HEADER: &str = "sequence_id,mse,mse_local,pen_rate,curvature,wall_ms";

/// Joint names treated as limb joints for curvature when present.
pub const LIMB_JOINT_NAMES: [&str; 14] = [
    "LeftArm",
    "LeftForeArm",
    "LeftHand",
    "RightArm",
    "RightForeArm",
    "RightHand",
    "LeftUpLeg",
    "LeftLeg",
    "LeftFoot",
    "LeftToeBase",
    "RightUpLeg",
    "RightLeg",
    "RightFoot",
    "RightToeBase",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mse_local: f64,
    /// Percentage in `[0, 100]`.
    pub pen_rate: f64,
    pub curvature: f64,
    pub per_joint_curvature: Vec<(String, f64)>,
}

impl MetricsReport {
    /// `key=value` lines.
    pub fn to_kv_text(&self) -> String {
        let mut s = format!(
            "mse={}\nmse_local={}\npen_rate={}\ncurvature={}\n",
            self.mse, self.mse_local, self.pen_rate, self.curvature
        );
        for (name, c) in &self.per_joint_curvature {
            s.push_str(&format!("curvature.{name}={c}\n"));
        }
        s
    }

    pub fn csv_row(&self, sequence_id: &str, wall_ms: f64) -> String {
        format!(
            "{},{},{},{},{},{}",
            sequence_id, self.mse, self.mse_local, self.pen_rate, self.curvature, wall_ms
        )
    }
}

fn check_pair(pred: &Motion, gt: &Motion) -> Result<()> {
    if pred.frames() != gt.frames() || pred.joint_count() != gt.joint_count() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.frames(),
            pred.joint_count(),
            gt.frames(),
            gt.joint_count()
        )));
    }
    if pred.frames() == 0 {
        return Err(Error::Shape("empty motion".into()));
    }
    Ok(())
}

/// Mean squared joint-position error divided by the ground-truth character's
/// height.
pub fn mse(pred_skeleton: &Skeleton, pred: &Motion, gt_skeleton: &Skeleton, gt: &Motion) -> Result<f64> {
    check_pair(pred, gt)?;
    let h = character_height(gt_skeleton)?;
    let hp = character_height(pred_skeleton)?;
    if (h - hp).abs() > 1e-6 * h {
        return Err(Error::Shape(format!(
            "prediction and ground truth heights differ ({hp} vs {h})"
        )));
    }
    let a = joint_trajectories(pred_skeleton, pred)?;
    let b = joint_trajectories(gt_skeleton, gt)?;
    let sum: f64 = a
        .iter()
        .zip(&b)
        .flat_map(|(fa, fb)| fa.iter().zip(fb).map(|(x, y)| (*x - *y).norm_squared()))
        .sum();
    Ok(sum / (pred.frames() * pred.joint_count()) as f64 / h)
}

/// [`mse`] with both roots pinned at the origin.
pub fn local_mse(pred_skeleton: &Skeleton, pred: &Motion, gt_skeleton: &Skeleton, gt: &Motion) -> Result<f64> {
    mse(pred_skeleton, &pred.root_pinned(), gt_skeleton, &gt.root_pinned())
}

/// Percentage of limb vertices with signed depth above `threshold`, over all
/// frames, using the full limb and reference sets.
pub fn penetration_rate(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    motion: &Motion,
    threshold: f64,
) -> Result<f64> {
    penetration_rate_with(character, segmentation, motion, threshold, NeighborSearch::Tree)
}

pub fn penetration_rate_with(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    motion: &Motion,
    threshold: f64,
    search: NeighborSearch,
) -> Result<f64> {
    if segmentation.limbs.is_empty() || segmentation.limbs.iter().any(|l| l.vertices.is_empty()) {
        return Err(Error::Segmentation("empty limb set".into()));
    }
    if motion.frames() == 0 {
        return Err(Error::Motion("empty motion".into()));
    }
    let sample = PenetrationSample::exhaustive(segmentation, character);
    let (hits, total) = count_penetrating(character, &sample, motion, threshold, search)?;
    Ok(100.0 * hits as f64 / total as f64)
}

/// Limb joints present in `skeleton`; every joint when none of the
/// standard limb names appear.
pub fn limb_joint_indices(skeleton: &Skeleton) -> Vec<usize> {
    let named: Vec<usize> = LIMB_JOINT_NAMES.iter().filter_map(|n| skeleton.find(n)).collect();
    if named.is_empty() {
        (0..skeleton.len()).collect()
    } else {
        let mut named = named;
        named.sort_unstable();
        named
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub mean: f64,
    pub per_joint: Vec<(usize, f64)>,
}

/// Squared central second difference of each listed joint's trajectory,
/// averaged over interior frames and joints.
pub fn curvature(motion: &Motion, skeleton: &Skeleton, joints: &[usize]) -> Result<Curvature> {
    if motion.frames() < 3 {
        return Err(Error::Shape(format!(
            "curvature needs at least 3 frames, got {}",
            motion.frames()
        )));
    }
    if joints.is_empty() {
        return Err(Error::Shape("no joints selected for curvature".into()));
    }
    if let Some(&k) = joints.iter().find(|&&k| k >= skeleton.len()) {
        return Err(Error::Index {
            index: k,
            len: skeleton.len(),
        });
    }
    let frames = joint_trajectories(skeleton, motion)?;
    let interior = (motion.frames() - 2) as f64;
    let per_joint: Vec<(usize, f64)> = joints
        .iter()
        .map(|&k| {
            let s: f64 = frames
                .windows(3)
                .map(|w| (w[2][k] - w[1][k] * 2.0 + w[0][k]).norm_squared())
                .sum();
            (k, s / interior)
        })
        .collect();
    let mean = per_joint.iter().map(|(_, c)| c).sum::<f64>() / per_joint.len() as f64;
    Ok(Curvature { mean, per_joint })
}

/// All metrics of `pred` against `gt` on one character.
pub fn evaluate(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    pred: &Motion,
    gt: &Motion,
    threshold: f64,
) -> Result<MetricsReport> {
    let skel = &character.skeleton;
    let curv = curvature(pred, skel, &limb_joint_indices(skel))?;
    Ok(MetricsReport {
        mse: mse(skel, pred, skel, gt)?,
        mse_local: local_mse(skel, pred, skel, gt)?,
        pen_rate: penetration_rate(character, segmentation, pred, threshold)?,
        curvature: curv.mean,
        per_joint_curvature: curv
            .per_joint
            .iter()
            .map(|(k, c)| (skel.joint(*k).name.clone(), *c))
            .collect(),
    })
}
