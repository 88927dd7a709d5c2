//! Joint hierarchies, motions and forward kinematics.
//!
//! Local rotations compose parent-then-local: the world rotation of joint `k`
//! is `world[parent(k)] * local[k]`, and its world position is the parent's
//! position plus the parent's world rotation applied to the joint's rest
//! offset. The root's world position is the frame's global translation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3, UNIT_TOLERANCE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest-pose offset from the parent joint. For the root this is its rest
    /// position.
    pub offset: Vec3,
    /// BVH `End Site` offset, kept for lossless round trips.
    #[serde(default)]
    pub end_site: Option<Vec3>,
}

impl Joint {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: Vec3) -> Self {
        Joint {
            name: name.into(),
            parent,
            offset,
            end_site: None,
        }
    }
}

/// Topologically sorted joint hierarchy with a single root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Skeleton("no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::Skeleton("joint 0 must be the root".into())),
                (_, None) => return Err(Error::Skeleton(format!("second root `{}` at index {i}", j.name))),
                (_, Some(p)) if p >= i => {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` (index {i}) has parent {p}; parents must precede children",
                        j.name
                    )))
                }
                _ => {}
            }
            if !j.offset.is_finite() {
                return Err(Error::Skeleton(format!("joint `{}` has a non-finite offset", j.name)));
            }
        }
        Ok(Skeleton { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, k: usize) -> &Joint {
        &self.joints[k]
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.joints[k].parent
    }

    pub fn offset(&self, k: usize) -> Vec3 {
        self.joints[k].offset
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.joints.iter().map(|j| j.name.as_str())
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn children(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints
            .iter()
            .enumerate()
            .filter(move |(_, j)| j.parent == Some(k))
            .map(|(i, _)| i)
    }

    /// Copy with every offset (root rest position included) multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Skeleton {
        let joints = self
            .joints
            .iter()
            .map(|j| Joint {
                offset: j.offset * s,
                end_site: j.end_site.map(|e| e * s),
                ..j.clone()
            })
            .collect();
        Skeleton { joints }
    }

    /// True when both skeletons have the same joint names and parents.
    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.len() == other.len()
            && self
                .joints
                .iter()
                .zip(&other.joints)
                .all(|(a, b)| a.name == b.name && a.parent == b.parent)
    }

    /// Rest-pose (T-pose) world positions, root at its rest offset.
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.len());
        for j in &self.joints {
            let p = match j.parent {
                None => j.offset,
                Some(p) => out[p] + j.offset,
            };
            out.push(p);
        }
        out
    }
}

/// Per-frame local joint rotations plus a per-frame global channel
/// `[tx, ty, tz, reserved]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    frames: usize,
    joints: usize,
    rotations: Vec<Quat>,
    global: Vec<[f64; 4]>,
    pub frame_rate: f64,
}

impl Motion {
    /// `rotations` is frame-major (`frames * joints` entries).
    pub fn new(joints: usize, rotations: Vec<Quat>, global: Vec<[f64; 4]>, frame_rate: f64) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Motion("zero joints".into()));
        }
        if rotations.len() % joints != 0 {
            return Err(Error::Shape(format!(
                "{} rotations is not a multiple of {joints} joints",
                rotations.len()
            )));
        }
        let frames = rotations.len() / joints;
        if global.len() != frames {
            return Err(Error::Shape(format!(
                "{} global rows for {frames} frames",
                global.len()
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Motion(format!("frame rate {frame_rate} must be positive")));
        }
        for (i, q) in rotations.iter().enumerate() {
            if !q.is_finite() {
                return Err(Error::Motion(format!(
                    "non-finite rotation at frame {}, joint {}",
                    i / joints,
                    i % joints
                )));
            }
            if !q.is_unit(UNIT_TOLERANCE) {
                return Err(Error::Motion(format!(
                    "rotation at frame {}, joint {} has norm {}",
                    i / joints,
                    i % joints,
                    q.norm()
                )));
            }
        }
        if global.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Motion("non-finite global channel".into()));
        }
        Ok(Motion {
            frames,
            joints,
            rotations,
            global,
            frame_rate,
        })
    }

    /// All-identity rotations with the root held at `root`.
    pub fn identity(frames: usize, joints: usize, root: Vec3, frame_rate: f64) -> Result<Self> {
        Motion::new(
            joints,
            vec![Quat::IDENTITY; frames * joints],
            vec![[root.x, root.y, root.z, 0.0]; frames],
            frame_rate,
        )
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn rotation(&self, frame: usize, joint: usize) -> Quat {
        self.rotations[frame * self.joints + joint]
    }

    pub fn frame_rotations(&self, frame: usize) -> &[Quat] {
        &self.rotations[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn rotations(&self) -> &[Quat] {
        &self.rotations
    }

    pub fn global(&self) -> &[[f64; 4]] {
        &self.global
    }

    pub fn translation(&self, frame: usize) -> Vec3 {
        let g = self.global[frame];
        Vec3::new(g[0], g[1], g[2])
    }

    /// Same rotations, new global channel.
    pub fn with_global(&self, global: Vec<[f64; 4]>) -> Result<Motion> {
        Motion::new(self.joints, self.rotations.clone(), global, self.frame_rate)
    }

    /// Same global channel, new rotations.
    pub fn with_rotations(&self, rotations: Vec<Quat>) -> Result<Motion> {
        Motion::new(self.joints, rotations, self.global.clone(), self.frame_rate)
    }

    /// Copy with the translation channels zeroed (root pinned at the origin).
    pub fn root_pinned(&self) -> Motion {
        let global = self.global.iter().map(|g| [0.0, 0.0, 0.0, g[3]]).collect();
        Motion { global, ..self.clone() }
    }

    /// Frames `start..end` as a new motion.
    pub fn slice(&self, start: usize, end: usize) -> Result<Motion> {
        if start > end || end > self.frames {
            return Err(Error::Index {
                index: end,
                len: self.frames,
            });
        }
        Motion::new(
            self.joints,
            self.rotations[start * self.joints..end * self.joints].to_vec(),
            self.global[start..end].to_vec(),
            self.frame_rate,
        )
    }

    /// Frames in reverse order.
    pub fn reversed(&self) -> Motion {
        let mut rotations = Vec::with_capacity(self.rotations.len());
        for t in (0..self.frames).rev() {
            rotations.extend_from_slice(self.frame_rotations(t));
        }
        let global = self.global.iter().rev().copied().collect();
        Motion {
            rotations,
            global,
            ..self.clone()
        }
    }

    pub(crate) fn check_skeleton(&self, skeleton: &Skeleton) -> Result<()> {
        if skeleton.len() != self.joints {
            return Err(Error::Shape(format!(
                "skeleton has {} joints, motion has {}",
                skeleton.len(),
                self.joints
            )));
        }
        Ok(())
    }
}

/// World-space joint positions and rotations for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub joint_positions: Vec<Vec3>,
    pub joint_rotations_world: Vec<Quat>,
}

/// Forward kinematics for one set of local rotations.
pub fn pose_from_rotations(skeleton: &Skeleton, local: &[Quat], root: Vec3) -> Pose {
    let n = skeleton.len();
    let mut positions = Vec::with_capacity(n);
    let mut rotations: Vec<Quat> = Vec::with_capacity(n);
    for (k, joint) in skeleton.joints.iter().enumerate() {
        match joint.parent {
            None => {
                positions.push(root);
                rotations.push(local[k]);
            }
            Some(p) => {
                let wp = rotations[p];
                positions.push(positions[p] + wp.rotate(joint.offset));
                rotations.push(wp.hamilton(local[k]));
            }
        }
    }
    Pose {
        joint_positions: positions,
        joint_rotations_world: rotations,
    }
}

pub fn forward_kinematics(skeleton: &Skeleton, motion: &Motion, frame: usize) -> Result<Pose> {
    motion.check_skeleton(skeleton)?;
    if frame >= motion.frames() {
        return Err(Error::Index {
            index: frame,
            len: motion.frames(),
        });
    }
    Ok(pose_from_rotations(
        skeleton,
        motion.frame_rotations(frame),
        motion.translation(frame),
    ))
}

/// Joint positions for every frame, frame-major.
pub fn joint_trajectories(skeleton: &Skeleton, motion: &Motion) -> Result<Vec<Vec<Vec3>>> {
    motion.check_skeleton(skeleton)?;
    Ok((0..motion.frames())
        .map(|t| pose_from_rotations(skeleton, motion.frame_rotations(t), motion.translation(t)).joint_positions)
        .collect())
}

/// Vertical extent of the rest-pose joint cloud.
pub fn character_height(skeleton: &Skeleton) -> Result<f64> {
    let rest = skeleton.rest_positions();
    let (lo, hi) = rest.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    });
    let h = hi - lo;
    if !(h > 1e-12) {
        return Err(Error::DegenerateSkeleton(format!("rest pose has vertical extent {h}")));
    }
    Ok(h)
}

/// One unit vector bound to each joint's local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOrientationField {
    pub vectors: Vec<Vec3>,
}

impl JointOrientationField {
    /// `(0, 0, 1)` on every joint.
    pub fn uniform(joints: usize) -> Self {
        JointOrientationField {
            vectors: vec![Vec3::Z; joints],
        }
    }

    pub fn new(vectors: Vec<Vec3>) -> Result<Self> {
        for (k, v) in vectors.iter().enumerate() {
            if !v.is_finite() || (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Shape(format!("orientation vector {k} is not unit")));
            }
        }
        Ok(JointOrientationField { vectors })
    }
}

/// Each joint's bound vector rotated by its world rotation, per frame.
pub fn propagate_orientation_field(
    skeleton: &Skeleton,
    motion: &Motion,
    field: &JointOrientationField,
) -> Result<Vec<Vec<Vec3>>> {
    motion.check_skeleton(skeleton)?;
    if field.vectors.len() != skeleton.len() {
        return Err(Error::Shape(format!(
            "orientation field has {} vectors for {} joints",
            field.vectors.len(),
            skeleton.len()
        )));
    }
    Ok((0..motion.frames())
        .map(|t| {
            let pose = pose_from_rotations(skeleton, motion.frame_rotations(t), motion.translation(t));
            pose.joint_rotations_world
                .iter()
                .zip(&field.vectors)
                .map(|(w, v)| w.rotate(*v))
                .collect()
        })
        .collect())
}
