//! Reconstruction, constraint and joint-orientation losses and their
//! weighted combination.
//!
//! Every term is mean-reduced over frames and joints so that weights carry
//! over between sequence lengths. Rotation differences compare
//! sign-canonicalized quaternions componentwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::skeleton::{pose_from_rotations, JointOrientationField, Motion, Skeleton};
use crate::skinning::{LimbSegmentation, PenetrationSample, SkinnedCharacter};
use crate::spatial_loss::limb_penetration_loss;
use crate::temporal_loss::temporal_consistency_loss;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub rec: f64,
    pub con: f64,
    pub lp: f64,
    pub tc: f64,
    pub j: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::FINAL
    }
}

impl LossWeights {
    pub const FINAL: LossWeights = LossWeights {
        rec: 0.1,
        con: 0.1,
        lp: 5.0,
        tc: 1.0,
        j: 1.0,
    };

    /// Smoothness-leaning preset: temporal weight doubled, penetration halved.
    pub const CURV: LossWeights = LossWeights {
        rec: 0.1,
        con: 0.1,
        lp: 2.5,
        tc: 2.0,
        j: 1.0,
    };

    pub const ZERO: LossWeights = LossWeights {
        rec: 0.0,
        con: 0.0,
        lp: 0.0,
        tc: 0.0,
        j: 0.0,
    };

    pub fn preset(name: &str) -> Option<LossWeights> {
        match name {
            "final" => Some(LossWeights::FINAL),
            "curv" => Some(LossWeights::CURV),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rec", self.rec),
            ("con", self.con),
            ("lp", self.lp),
            ("tc", self.tc),
            ("j", self.j),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight `{name}` = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Individual terms (absent when skipped) and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: Option<f64>,
    pub con: Option<f64>,
    pub lp: Option<f64>,
    pub tc: Option<f64>,
    pub j: Option<f64>,
    pub total: f64,
}

impl LossReport {
    /// Sum of `weight * term` over the present terms.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        [
            (self.rec, w.rec),
            (self.con, w.con),
            (self.lp, w.lp),
            (self.tc, w.tc),
            (self.j, w.j),
        ]
        .iter()
        .filter_map(|(t, w)| t.map(|t| t * w))
        .sum()
    }
}

fn check_same_shape(a: &Motion, b: &Motion) -> Result<()> {
    if a.frames() != b.frames() || a.joint_count() != b.joint_count() {
        return Err(Error::Shape(format!(
            "motions are {}x{} and {}x{}",
            a.frames(),
            a.joint_count(),
            b.frames(),
            b.joint_count()
        )));
    }
    if a.frames() == 0 {
        return Err(Error::Shape("empty motion".into()));
    }
    Ok(())
}

/// Mean squared rotation difference plus mean squared FK position
/// difference, both motions driven through `skeleton` with `global`'s root
/// translation.
fn pose_difference(a: &Motion, b: &Motion, skeleton: &Skeleton, global: &Motion) -> Result<f64> {
    check_same_shape(a, b)?;
    a.check_skeleton(skeleton)?;
    let n = (a.frames() * a.joint_count()) as f64;
    let mut rot = 0.0;
    let mut pos = 0.0;
    for t in 0..a.frames() {
        let root = global.translation(t);
        let pa = pose_from_rotations(skeleton, a.frame_rotations(t), root);
        let pb = pose_from_rotations(skeleton, b.frame_rotations(t), root);
        for (qa, qb) in a.frame_rotations(t).iter().zip(b.frame_rotations(t)) {
            rot += (qa.canonical() - qb.canonical()).norm_squared();
        }
        for (x, y) in pa.joint_positions.iter().zip(&pb.joint_positions) {
            pos += (*x - *y).norm_squared();
        }
    }
    Ok(rot / n + pos / n)
}

/// Rotation plus joint-position reconstruction error on the original
/// character. Both motions use `original`'s root translation.
pub fn reconstruction_loss(original: &Motion, reconstructed: &Motion, skeleton: &Skeleton) -> Result<f64> {
    pose_difference(original, reconstructed, skeleton, original)
}

/// Deviation of the retargeted motion from the source motion copied onto the
/// target skeleton. Both motions are posed on `target_skeleton` with the
/// retargeted motion's root translation; the source skeleton plays no part.
pub fn constraint_loss(source: &Motion, retargeted: &Motion, target_skeleton: &Skeleton) -> Result<f64> {
    pose_difference(source, retargeted, target_skeleton, retargeted)
}

/// Mean squared difference of the orientation vectors carried by each joint.
pub fn joint_orientation_loss(
    source: &Motion,
    retargeted: &Motion,
    skeleton_src: &Skeleton,
    skeleton_tgt: &Skeleton,
    field: &JointOrientationField,
) -> Result<f64> {
    check_same_shape(source, retargeted)?;
    source.check_skeleton(skeleton_src)?;
    retargeted.check_skeleton(skeleton_tgt)?;
    if field.vectors.len() != source.joint_count() {
        return Err(Error::Shape("orientation field length differs from joint count".into()));
    }
    let mut sum = 0.0;
    for t in 0..source.frames() {
        let a = pose_from_rotations(skeleton_src, source.frame_rotations(t), Vec3::ZERO);
        let b = pose_from_rotations(skeleton_tgt, retargeted.frame_rotations(t), Vec3::ZERO);
        for ((wa, wb), v) in a
            .joint_rotations_world
            .iter()
            .zip(&b.joint_rotations_world)
            .zip(&field.vectors)
        {
            sum += (wa.rotate(*v) - wb.rotate(*v)).norm_squared();
        }
    }
    Ok(sum / (source.frames() * source.joint_count()) as f64)
}

/// Everything the combined objective reads.
pub struct LossInputs<'a> {
    pub source: &'a Motion,
    pub source_skeleton: &'a Skeleton,
    pub target: &'a SkinnedCharacter,
    pub segmentation: &'a LimbSegmentation,
    pub sample: &'a PenetrationSample,
    pub retargeted: &'a Motion,
    pub field: &'a JointOrientationField,
    /// Set only when retargeting a character onto itself; the reconstruction
    /// term is evaluated against it.
    pub reconstruction: Option<&'a Motion>,
}

/// Weighted objective. Terms with zero weight are not evaluated; the
/// reconstruction term also needs `inputs.reconstruction`.
pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossReport> {
    weights.validate()?;
    let mut r = LossReport::default();
    if weights.rec > 0.0 {
        if let Some(rec) = inputs.reconstruction {
            r.rec = Some(reconstruction_loss(inputs.source, rec, inputs.source_skeleton)?);
        }
    }
    if weights.con > 0.0 {
        r.con = Some(constraint_loss(
            inputs.source,
            inputs.retargeted,
            &inputs.target.skeleton,
        )?);
    }
    if weights.lp > 0.0 {
        r.lp = Some(limb_penetration_loss(inputs.target, inputs.segmentation, inputs.sample, inputs.retargeted)?.total);
    }
    if weights.tc > 0.0 {
        r.tc = Some(temporal_consistency_loss(
            inputs.source_skeleton,
            inputs.source,
            &inputs.target.skeleton,
            inputs.retargeted,
        )?);
    }
    if weights.j > 0.0 {
        r.j = Some(joint_orientation_loss(
            inputs.source,
            inputs.retargeted,
            inputs.source_skeleton,
            &inputs.target.skeleton,
            inputs.field,
        )?);
    }
    r.total = r.weighted_sum(weights);
    Ok(r)
}

/// Sign-canonicalized unit copy of every rotation.
pub(crate) fn canonical_rotations(motion: &Motion) -> Vec<Quat> {
    motion
        .rotations()
        .iter()
        .map(|q| q.scale(1.0 / q.norm()).canonical())
        .collect()
}
