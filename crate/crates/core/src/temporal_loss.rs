//! Trajectory self-normalization, pairwise motion matrices and the
//! temporal consistency loss.
//!
//! Each joint's world trajectory is translated and uniformly scaled into the
//! unit cube, so that the loss compares the shape of motion paths rather than
//! their size. The per-joint term is the mean over all `T^2` ordered frame
//! pairs of `|m_A(i,j) - m_B(i,j)|^2`, where `m(i,j) = c_j - c_i`. It is
//! evaluated in O(T) through
//! `sum_ij |d_j - d_i|^2 = 2T sum_t |d_t - mean(d)|^2` with `d_t = a_t - b_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::skeleton::{joint_trajectories, Motion, Skeleton};

/// Extents at or below this are treated as a static joint.
pub const DEGENERATE_EXTENT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrajectory {
    pub points: Vec<Vec3>,
    /// Largest per-axis extent of the input; 1 for a degenerate trajectory.
    pub scale: f64,
    /// Per-axis minimum of the input.
    pub offset: Vec3,
    pub degenerate: bool,
}

/// Extent of the bounding box and where its largest side comes from.
#[derive(Clone, Copy, Debug)]
struct Extent {
    scale: f64,
    axis: usize,
    argmin: usize,
    argmax: usize,
    min: Vec3,
}

fn extent(positions: &[Vec3]) -> Extent {
    let mut lo = [(f64::INFINITY, 0usize); 3];
    let mut hi = [(f64::NEG_INFINITY, 0usize); 3];
    for (t, p) in positions.iter().enumerate() {
        for a in 0..3 {
            if p[a] < lo[a].0 {
                lo[a] = (p[a], t);
            }
            if p[a] > hi[a].0 {
                hi[a] = (p[a], t);
            }
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a].0 - lo[a].0 > hi[axis].0 - lo[axis].0 {
            axis = a;
        }
    }
    Extent {
        scale: hi[axis].0 - lo[axis].0,
        axis,
        argmin: lo[axis].1,
        argmax: hi[axis].1,
        min: Vec3::new(lo[0].0, lo[1].0, lo[2].0),
    }
}

pub fn normalize_trajectory(positions: &[Vec3]) -> Result<NormalizedTrajectory> {
    if positions.len() < 2 {
        return Err(Error::Shape(format!(
            "trajectory needs at least 2 frames, got {}",
            positions.len()
        )));
    }
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric {
            term: "trajectory".into(),
        });
    }
    let e = extent(positions);
    if e.scale <= DEGENERATE_EXTENT {
        return Ok(NormalizedTrajectory {
            points: vec![Vec3::ZERO; positions.len()],
            scale: 1.0,
            offset: e.min,
            degenerate: true,
        });
    }
    Ok(NormalizedTrajectory {
        points: positions.iter().map(|p| (*p - e.min) / e.scale).collect(),
        scale: e.scale,
        offset: e.min,
        degenerate: false,
    })
}

/// `T x T` grid of displacement vectors between frames of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionMatrix {
    frames: usize,
    vectors: Vec<Vec3>,
}

impl MotionMatrix {
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Vector from frame `i` to frame `j`.
    pub fn get(&self, i: usize, j: usize) -> Vec3 {
        self.vectors[i * self.frames + j]
    }

    /// Sum of squared entrywise differences.
    pub fn squared_distance(&self, other: &MotionMatrix) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (*a - *b).norm_squared())
            .sum()
    }
}

pub fn motion_matrix(trajectory: &NormalizedTrajectory) -> MotionMatrix {
    let c = &trajectory.points;
    let t = c.len();
    let mut vectors = Vec::with_capacity(t * t);
    for i in 0..t {
        for j in 0..t {
            vectors.push(c[j] - c[i]);
        }
    }
    MotionMatrix { frames: t, vectors }
}

/// One joint's term: mean over ordered frame pairs of the squared difference
/// between the motion matrices of `source` (already normalized) and the
/// normalization of `positions`. When `grad` is given, the derivative with
/// respect to each position, scaled by `weight`, is added to it.
pub(crate) fn joint_term(
    source: &NormalizedTrajectory,
    positions: &[Vec3],
    weight: f64,
    grad: Option<&mut [Vec3]>,
) -> f64 {
    let n = positions.len();
    let e = extent(positions);
    let degenerate = e.scale <= DEGENERATE_EXTENT;
    let inv_s = if degenerate { 0.0 } else { 1.0 / e.scale };
    // b_t = (p_t - min) / s, computed exactly as in `normalize_trajectory` so
    // identical inputs give d_t == 0. The minimum cancels in every pair
    // difference and contributes nothing to the gradient.
    let d: Vec<Vec3> = source
        .points
        .iter()
        .zip(positions)
        .map(|(a, p)| if degenerate { *a } else { *a - (*p - e.min) / e.scale })
        .collect();
    let mean = d.iter().fold(Vec3::ZERO, |acc, v| acc + *v) / n as f64;
    let centered: Vec<Vec3> = d.iter().map(|v| *v - mean).collect();
    let value = 2.0 / n as f64 * centered.iter().map(|v| v.norm_squared()).sum::<f64>();

    if let Some(grad) = grad {
        if !degenerate {
            // dV/db_t = -(4/T)(d_t - mean).
            let scale = -4.0 / n as f64 * weight;
            let mut ds = 0.0;
            for (t, c) in centered.iter().enumerate() {
                let gb = *c * scale;
                grad[t] += gb * inv_s;
                ds -= gb.dot(positions[t] - e.min) * inv_s * inv_s;
            }
            let mut unit = [0.0; 3];
            unit[e.axis] = ds;
            let dv = Vec3::from_array(unit);
            grad[e.argmax] += dv;
            grad[e.argmin] -= dv;
        }
    }
    value
}

/// Per-joint world trajectories, joint-major.
pub(crate) fn per_joint(frames: &[Vec<Vec3>], joints: usize) -> Vec<Vec<Vec3>> {
    (0..joints).map(|k| frames.iter().map(|f| f[k]).collect()).collect()
}

pub fn temporal_consistency_loss(
    source_skeleton: &Skeleton,
    source: &Motion,
    target_skeleton: &Skeleton,
    target: &Motion,
) -> Result<f64> {
    if source.frames() != target.frames() || source.joint_count() != target.joint_count() {
        return Err(Error::Shape(format!(
            "source is {}x{}, target is {}x{}",
            source.frames(),
            source.joint_count(),
            target.frames(),
            target.joint_count()
        )));
    }
    if source.frames() < 2 {
        return Err(Error::Shape("temporal consistency needs at least 2 frames".into()));
    }
    let k = source.joint_count();
    let a = per_joint(&joint_trajectories(source_skeleton, source)?, k);
    let b = per_joint(&joint_trajectories(target_skeleton, target)?, k);
    let mut total = 0.0;
    for (ta, tb) in a.iter().zip(&b) {
        let na = normalize_trajectory(ta)?;
        if tb.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric {
                term: "temporal consistency".into(),
            });
        }
        total += joint_term(&na, tb, 0.0, None);
    }
    Ok(total / k as f64)
}

/// Mean squared displacement of joints between consecutive frames.
pub fn basic_smoothness_loss(motion: &Motion, skeleton: &Skeleton) -> Result<f64> {
    if motion.frames() < 2 {
        return Err(Error::Shape("smoothness needs at least 2 frames".into()));
    }
    let frames = joint_trajectories(skeleton, motion)?;
    let sum: f64 = frames
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (*b - *a).norm_squared())
                .sum::<f64>()
        })
        .sum();
    Ok(sum / ((motion.frames() - 1) * motion.joint_count()) as f64)
}
