//! Per-sequence retargeting by gradient descent on residual rotations.
//!
//! The retargeted motion is `Q_B = dQ (x) Q_A`, with one residual quaternion
//! per frame and joint. Residuals are stored as unconstrained 4-vectors and
//! normalized on use. The objective's gradient is derived by hand in reverse
//! mode through composition, forward kinematics, skinning and every loss
//! term, with nearest-neighbour correspondences of the penetration term held
//! fixed between refreshes.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::metrics::{self, MetricsReport};
use crate::proximity::signed_depth_against;
use crate::semantic_loss::{canonical_rotations, constraint_loss, LossReport, LossWeights};
use crate::skeleton::{character_height, pose_from_rotations, JointOrientationField, Motion, Pose, Skeleton};
use crate::skinning::{
    sample_points, segment_limbs, LimbJoints, LimbSegmentation, PenetrationSample, SampleCounts, SkinnedCharacter,
};
use crate::spatial_loss::{match_queries, pose_limbs, NeighborSearch};
use crate::temporal_loss::{joint_term, normalize_trajectory, per_joint, NormalizedTrajectory};

/// Residual rotations, one unconstrained 4-vector per frame and joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualMotion {
    frames: usize,
    joints: usize,
    params: Vec<Quat>,
}

impl ResidualMotion {
    pub fn identity(frames: usize, joints: usize) -> Self {
        ResidualMotion {
            frames,
            joints,
            params: vec![Quat::IDENTITY; frames * joints],
        }
    }

    pub fn from_params(frames: usize, joints: usize, params: Vec<Quat>) -> Result<Self> {
        if params.len() != frames * joints {
            return Err(Error::Shape(format!(
                "{} residual entries for {frames}x{joints}",
                params.len()
            )));
        }
        Ok(ResidualMotion { frames, joints, params })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn params(&self) -> &[Quat] {
        &self.params
    }

    /// Unit residual rotation at `(frame, joint)`.
    pub fn unit(&self, frame: usize, joint: usize) -> Result<Quat> {
        let q = self.params[frame * self.joints + joint];
        let n = q.norm();
        if !(n > crate::math::DEGENERATE_NORM) || !n.is_finite() {
            return Err(Error::DegenerateQuaternion { norm: n });
        }
        Ok(q.scale(1.0 / n))
    }

    fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|q| q.to_array()).collect()
    }

    fn set_flat(&mut self, v: &[f64]) {
        for (q, c) in self.params.iter_mut().zip(v.chunks_exact(4)) {
            *q = Quat::new(c[0], c[1], c[2], c[3]);
        }
    }
}

/// Scale root translations by `target_height / source_height`; the reserved
/// channel passes through.
pub fn normalize_global(global: &[[f64; 4]], source_height: f64, target_height: f64) -> Result<Vec<[f64; 4]>> {
    for h in [source_height, target_height] {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("character height {h} must be positive")));
        }
    }
    let r = target_height / source_height;
    Ok(global.iter().map(|g| [g[0] * r, g[1] * r, g[2] * r, g[3]]).collect())
}

/// `Q_B = normalize(dQ) (x) Q_A` entrywise, renormalized and
/// sign-canonicalized, with the global channel rescaled between heights.
pub fn compose_motion(
    residual: &ResidualMotion,
    source: &Motion,
    source_height: f64,
    target_height: f64,
) -> Result<Motion> {
    if residual.frames != source.frames() || residual.joints != source.joint_count() {
        return Err(Error::Shape(format!(
            "residual is {}x{}, source {}x{}",
            residual.frames,
            residual.joints,
            source.frames(),
            source.joint_count()
        )));
    }
    let mut rotations = Vec::with_capacity(residual.params.len());
    for t in 0..residual.frames {
        for k in 0..residual.joints {
            let u = residual.unit(t, k)?;
            rotations.push(u.hamilton(source.rotation(t, k)).normalized()?);
        }
    }
    let global = normalize_global(source.global(), source_height, target_height)?;
    Motion::new(source.joint_count(), rotations, global, source.frame_rate)
}

/// Nearest reference slot for every query, `[frame][limb][query]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondences {
    pub frames: Vec<Vec<Vec<usize>>>,
}

/// Everything the objective needs besides the residual, with the
/// residual-independent quantities precomputed.
pub struct RetargetProblem {
    source: Motion,
    source_skeleton: Skeleton,
    target: SkinnedCharacter,
    segmentation: LimbSegmentation,
    sample: PenetrationSample,
    field: JointOrientationField,
    target_global: Vec<[f64; 4]>,
    self_retarget: bool,
    source_units: Vec<Quat>,
    copy_positions: Vec<Vec<Vec3>>,
    source_orientations: Vec<Vec<Vec3>>,
    source_trajectories: Vec<NormalizedTrajectory>,
}

/// Composed rotation together with what its gradient needs.
struct Composed {
    rotation: Quat,
    unit: Quat,
    sign: f64,
    inv_norm: f64,
}

struct FrameState {
    composed: Vec<Composed>,
    pose: Pose,
    con: f64,
    j: f64,
    lp: f64,
    grad_world: Vec<Quat>,
    grad_pos: Vec<Vec3>,
    grad_local: Vec<Quat>,
}

impl RetargetProblem {
    /// `self_retarget` enables the reconstruction term and requires the
    /// source and target skeletons to be identical.
    pub fn new(
        source: Motion,
        source_skeleton: Skeleton,
        target: SkinnedCharacter,
        segmentation: LimbSegmentation,
        sample: PenetrationSample,
        field: JointOrientationField,
        self_retarget: bool,
    ) -> Result<Self> {
        source.check_skeleton(&source_skeleton)?;
        source.check_skeleton(&target.skeleton)?;
        if !source_skeleton.same_topology(&target.skeleton) {
            return Err(Error::Shape("source and target skeletons differ in topology".into()));
        }
        if self_retarget && source_skeleton != target.skeleton {
            return Err(Error::Shape("self-retargeting needs identical skeletons".into()));
        }
        if source.frames() < 2 {
            return Err(Error::Shape("retargeting needs at least 2 frames".into()));
        }
        if field.vectors.len() != source.joint_count() {
            return Err(Error::Shape("orientation field length differs from joint count".into()));
        }
        if sample.limbs.len() != segmentation.limbs.len()
            || sample
                .limbs
                .iter()
                .any(|l| l.query.indices.is_empty() || l.reference.indices.is_empty())
        {
            return Err(Error::Sampling("every limb needs query and reference samples".into()));
        }
        let hs = character_height(&source_skeleton)?;
        let ht = character_height(&target.skeleton)?;
        let target_global = normalize_global(source.global(), hs, ht)?;
        let source_units = canonical_rotations(&source);
        let k = source.joint_count();

        let mut copy_positions = Vec::with_capacity(source.frames());
        let mut source_orientations = Vec::with_capacity(source.frames());
        let mut source_frames = Vec::with_capacity(source.frames());
        for t in 0..source.frames() {
            let q = &source_units[t * k..(t + 1) * k];
            let g = target_global[t];
            let copy = pose_from_rotations(&target.skeleton, q, Vec3::new(g[0], g[1], g[2]));
            copy_positions.push(copy.joint_positions);
            source_orientations.push(
                copy.joint_rotations_world
                    .iter()
                    .zip(&field.vectors)
                    .map(|(w, v)| w.rotate(*v))
                    .collect(),
            );
            source_frames.push(pose_from_rotations(&source_skeleton, q, source.translation(t)).joint_positions);
        }
        let source_trajectories = per_joint(&source_frames, k)
            .iter()
            .map(|tr| normalize_trajectory(tr))
            .collect::<Result<_>>()?;

        Ok(RetargetProblem {
            source,
            source_skeleton,
            target,
            segmentation,
            sample,
            field,
            target_global,
            self_retarget,
            source_units,
            copy_positions,
            source_orientations,
            source_trajectories,
        })
    }

    /// Segment and sample `target` per `config`. The reconstruction term is
    /// enabled when both characters are identical.
    pub fn build(
        source: &Motion,
        source_char: &SkinnedCharacter,
        target: &SkinnedCharacter,
        config: &OptimizerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let segmentation = config.limbs.segment(target)?;
        let sample = sample_points(target, &segmentation, config.samples, config.seed)?;
        RetargetProblem::new(
            source.clone(),
            source_char.skeleton.clone(),
            target.clone(),
            segmentation,
            sample,
            JointOrientationField::uniform(source.joint_count()),
            source_char == target,
        )
    }

    pub fn frames(&self) -> usize {
        self.source.frames()
    }

    pub fn joint_count(&self) -> usize {
        self.source.joint_count()
    }

    pub fn source(&self) -> &Motion {
        &self.source
    }

    pub fn source_skeleton(&self) -> &Skeleton {
        &self.source_skeleton
    }

    pub fn target(&self) -> &SkinnedCharacter {
        &self.target
    }

    pub fn segmentation(&self) -> &LimbSegmentation {
        &self.segmentation
    }

    pub fn sample(&self) -> &PenetrationSample {
        &self.sample
    }

    pub fn field(&self) -> &JointOrientationField {
        &self.field
    }

    pub fn is_self_retarget(&self) -> bool {
        self.self_retarget
    }

    pub fn set_sample(&mut self, sample: PenetrationSample) -> Result<()> {
        if sample.limbs.len() != self.segmentation.limbs.len() {
            return Err(Error::Sampling("sample limb count differs from segmentation".into()));
        }
        self.sample = sample;
        Ok(())
    }

    /// The source motion copied onto the target (identity residual).
    pub fn copy_motion(&self) -> Result<Motion> {
        self.retargeted_motion(&ResidualMotion::identity(self.frames(), self.joint_count()))
    }

    fn check_residual(&self, residual: &ResidualMotion) -> Result<()> {
        if residual.frames != self.frames() || residual.joints != self.joint_count() {
            return Err(Error::Shape(format!(
                "residual is {}x{}, problem {}x{}",
                residual.frames,
                residual.joints,
                self.frames(),
                self.joint_count()
            )));
        }
        Ok(())
    }

    fn compose_frame(&self, residual: &ResidualMotion, t: usize) -> Result<Vec<Composed>> {
        let k = self.joint_count();
        (0..k)
            .map(|j| {
                let raw = residual.params[t * k + j];
                let n = raw.norm();
                if !(n > crate::math::DEGENERATE_NORM) || !n.is_finite() {
                    return Err(Error::DegenerateQuaternion { norm: n });
                }
                let unit = raw.scale(1.0 / n);
                let p = unit.hamilton(self.source_units[t * k + j]);
                let sign = p.canonical_sign();
                Ok(Composed {
                    rotation: p.scale(sign / p.norm()),
                    unit,
                    sign,
                    inv_norm: 1.0 / n,
                })
            })
            .collect()
    }

    fn root(&self, t: usize) -> Vec3 {
        let g = self.target_global[t];
        Vec3::new(g[0], g[1], g[2])
    }

    /// Retargeted motion `Q_B` with the height-normalized global channel.
    pub fn retargeted_motion(&self, residual: &ResidualMotion) -> Result<Motion> {
        self.check_residual(residual)?;
        let mut rotations = Vec::with_capacity(residual.params.len());
        for t in 0..self.frames() {
            rotations.extend(self.compose_frame(residual, t)?.into_iter().map(|c| c.rotation));
        }
        Motion::new(
            self.joint_count(),
            rotations,
            self.target_global.clone(),
            self.source.frame_rate,
        )
    }

    /// Nearest reference vertex of every sampled query under the current
    /// residual.
    pub fn correspondences(&self, residual: &ResidualMotion, search: NeighborSearch) -> Result<Correspondences> {
        self.check_residual(residual)?;
        let frames = (0..self.frames())
            .into_par_iter()
            .map(|t| {
                let rots: Vec<Quat> = self
                    .compose_frame(residual, t)?
                    .into_iter()
                    .map(|c| c.rotation)
                    .collect();
                let pose = pose_from_rotations(&self.target.skeleton, &rots, self.root(t));
                let posed = pose_limbs(&self.target, &pose, &self.sample);
                match_queries(&posed, search)
            })
            .collect::<Result<_>>()?;
        Ok(Correspondences { frames })
    }

    /// Objective value and, when `want_grad`, its gradient with respect to
    /// the raw residual parameters. Penetration depths use `corr`.
    pub fn evaluate(
        &self,
        residual: &ResidualMotion,
        corr: &Correspondences,
        weights: &LossWeights,
        want_grad: bool,
    ) -> Result<(LossReport, Option<Vec<Quat>>)> {
        weights.validate()?;
        self.check_residual(residual)?;
        let frames = self.frames();
        let k = self.joint_count();
        if corr.frames.len() != frames {
            return Err(Error::Shape("correspondences cover a different frame count".into()));
        }
        let use_rec = self.self_retarget && weights.rec > 0.0;
        let pose_weight = weights.con + if use_rec { weights.rec } else { 0.0 };
        let per_entry = 1.0 / (frames * k) as f64;
        let total_queries = self.sample.total_queries() as f64;
        let lp_scale = 1.0 / (frames as f64 * total_queries);

        let mut states: Vec<FrameState> = (0..frames)
            .into_par_iter()
            .map(|t| -> Result<FrameState> {
                let composed = self.compose_frame(residual, t)?;
                let rots: Vec<Quat> = composed.iter().map(|c| c.rotation).collect();
                let pose = pose_from_rotations(&self.target.skeleton, &rots, self.root(t));
                let mut st = FrameState {
                    composed,
                    pose,
                    con: 0.0,
                    j: 0.0,
                    lp: 0.0,
                    grad_world: vec![Quat::new(0.0, 0.0, 0.0, 0.0); k],
                    grad_pos: vec![Vec3::ZERO; k],
                    grad_local: vec![Quat::new(0.0, 0.0, 0.0, 0.0); k],
                };
                if pose_weight > 0.0 {
                    self.pose_term(t, &mut st, pose_weight * per_entry, want_grad);
                }
                if weights.j > 0.0 {
                    self.orientation_term(t, &mut st, weights.j * per_entry, want_grad);
                }
                if weights.lp > 0.0 {
                    self.penetration_term(&corr.frames[t], &mut st, weights.lp * lp_scale, want_grad)?;
                }
                Ok(st)
            })
            .collect::<Result<_>>()?;

        let mut report = LossReport::default();
        if weights.con > 0.0 {
            report.con = Some(states.iter().map(|s| s.con).sum::<f64>() * per_entry);
        }
        if use_rec {
            // Same skeleton and global channel: reconstruction equals the
            // constraint term's value.
            report.rec = Some(states.iter().map(|s| s.con).sum::<f64>() * per_entry);
        }
        if weights.j > 0.0 {
            report.j = Some(states.iter().map(|s| s.j).sum::<f64>() * per_entry);
        }
        if weights.lp > 0.0 {
            report.lp = Some(states.iter().map(|s| s.lp).sum::<f64>() * lp_scale);
        }
        if weights.tc > 0.0 {
            report.tc = Some(self.temporal_term(&mut states, weights.tc / k as f64, want_grad)? / k as f64);
        }
        report.total = report.weighted_sum(weights);
        if !report.total.is_finite() {
            let term = [
                ("con", report.con),
                ("lp", report.lp),
                ("tc", report.tc),
                ("j", report.j),
                ("rec", report.rec),
            ]
            .iter()
            .find(|(_, v)| v.is_some_and(|v| !v.is_finite()))
            .map_or("total", |(n, _)| *n);
            return Err(Error::Numeric { term: term.into() });
        }
        if !want_grad {
            return Ok((report, None));
        }

        let grads: Vec<Vec<Quat>> = states
            .into_par_iter()
            .enumerate()
            .map(|(t, st)| self.backprop_frame(t, st))
            .collect();
        let grad: Vec<Quat> = grads.into_iter().flatten().collect();
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                term: format!("gradient at frame {}, joint {}", i / k, i % k),
            });
        }
        Ok((report, Some(grad)))
    }

    /// Rotation and joint-position deviation from the copied source motion.
    fn pose_term(&self, t: usize, st: &mut FrameState, scale: f64, want_grad: bool) {
        let k = self.joint_count();
        let mut sum = 0.0;
        for j in 0..k {
            let dq = st.composed[j].rotation - self.source_units[t * k + j];
            let dp = st.pose.joint_positions[j] - self.copy_positions[t][j];
            sum += dq.norm_squared() + dp.norm_squared();
            if want_grad {
                st.grad_local[j] += dq.scale(2.0 * scale);
                st.grad_pos[j] += dp * (2.0 * scale);
            }
        }
        st.con = sum;
    }

    fn orientation_term(&self, t: usize, st: &mut FrameState, scale: f64, want_grad: bool) {
        let mut sum = 0.0;
        for (j, (w, v)) in st
            .pose
            .joint_rotations_world
            .iter()
            .zip(&self.field.vectors)
            .enumerate()
        {
            let d = w.rotate(*v) - self.source_orientations[t][j];
            sum += d.norm_squared();
            if want_grad {
                st.grad_world[j] += w.rotate_vjp(*v, d * (2.0 * scale));
            }
        }
        st.j = sum;
    }

    fn penetration_term(&self, matches: &[Vec<usize>], st: &mut FrameState, scale: f64, want_grad: bool) -> Result<()> {
        if matches.len() != self.sample.limbs.len() {
            return Err(Error::Shape("correspondences cover a different limb count".into()));
        }
        let ch = &self.target;
        let mut sum = 0.0;
        for (limb, m) in self.sample.limbs.iter().zip(matches) {
            if m.len() != limb.query.indices.len() {
                return Err(Error::Shape("correspondences cover a different query count".into()));
            }
            for (&qi, &slot) in limb.query.indices.iter().zip(m) {
                let ri = limb.reference.indices[slot];
                let e = ch.deform_vertex(&st.pose, qi);
                let er = ch.deform_vertex(&st.pose, ri);
                let raw_n = ch.deform_normal_unnormalized(&st.pose, ri);
                let len = raw_n.norm();
                let n = raw_n / len;
                let phi = signed_depth_against(e, er, n, slot).depth;
                if !phi.is_finite() {
                    return Err(Error::Numeric {
                        term: "limb penetration".into(),
                    });
                }
                if phi <= 0.0 {
                    continue;
                }
                sum += phi;
                if want_grad {
                    let g_e = n * (-scale);
                    let g_n = (er - e) * scale;
                    let g_raw = (g_n - n * n.dot(g_n)) / len;
                    self.skin_vjp(&mut *st, qi, g_e, None);
                    self.skin_vjp(&mut *st, ri, -g_e, Some(g_raw));
                }
            }
        }
        st.lp = sum;
        Ok(())
    }

    /// Adjoint of posed vertex `i` (and optionally its unnormalized normal)
    /// onto joint world rotations and positions.
    fn skin_vjp(&self, st: &mut FrameState, i: usize, g_pos: Vec3, g_normal: Option<Vec3>) {
        let ch = &self.target;
        let n0 = ch.normals()[i];
        for (k, w) in ch.influences()[i].iter() {
            let wk = st.pose.joint_rotations_world[k];
            st.grad_pos[k] += g_pos * w;
            let mut gq = wk.rotate_vjp(ch.bind_offset(i, k), g_pos * w);
            if let Some(gn) = g_normal {
                gq += wk.rotate_vjp(n0, gn * w);
            }
            st.grad_world[k] += gq;
        }
    }

    /// Sum over joints of the temporal term; gradients land in `grad_pos`.
    fn temporal_term(&self, states: &mut [FrameState], scale: f64, want_grad: bool) -> Result<f64> {
        let k = self.joint_count();
        let frames = states.len();
        let per: Vec<(f64, Vec<Vec3>)> = (0..k)
            .into_par_iter()
            .map(|j| {
                let traj: Vec<Vec3> = states.iter().map(|s| s.pose.joint_positions[j]).collect();
                if traj.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Numeric {
                        term: "temporal consistency".into(),
                    });
                }
                let mut g = vec![Vec3::ZERO; frames];
                let v = joint_term(
                    &self.source_trajectories[j],
                    &traj,
                    scale,
                    if want_grad { Some(&mut g) } else { None },
                );
                Ok((v, g))
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for (j, (v, g)) in per.into_iter().enumerate() {
            total += v;
            if want_grad {
                for (st, gt) in states.iter_mut().zip(g) {
                    st.grad_pos[j] += gt;
                }
            }
        }
        Ok(total)
    }

    /// Reverse pass through forward kinematics and residual composition.
    fn backprop_frame(&self, t: usize, mut st: FrameState) -> Vec<Quat> {
        let k = self.joint_count();
        let skel = &self.target.skeleton;
        for j in (0..k).rev() {
            let gw = st.grad_world[j];
            match skel.parent(j) {
                None => st.grad_local[j] += gw,
                Some(p) => {
                    let wp = st.pose.joint_rotations_world[p];
                    let gp = st.grad_pos[j];
                    st.grad_pos[p] += gp;
                    let from_pos = wp.rotate_vjp(skel.offset(j), gp);
                    let from_rot = Quat::hamilton_vjp_lhs(gw, st.composed[j].rotation);
                    st.grad_world[p] += from_pos + from_rot;
                    st.grad_local[j] += Quat::hamilton_vjp_rhs(gw, wp);
                }
            }
        }
        (0..k)
            .map(|j| {
                let c = &st.composed[j];
                let g_product = st.grad_local[j].scale(c.sign);
                let g_unit = Quat::hamilton_vjp_lhs(g_product, self.source_units[t * k + j]);
                (g_unit - c.unit.scale(c.unit.dot(g_unit))).scale(c.inv_norm)
            })
            .collect()
    }
}

/// Gradient of the objective with respect to the raw residual parameters.
pub fn loss_gradient(
    residual: &ResidualMotion,
    problem: &RetargetProblem,
    corr: &Correspondences,
    weights: &LossWeights,
) -> Result<Vec<Quat>> {
    Ok(problem
        .evaluate(residual, corr, weights, true)?
        .1
        .expect("gradient requested"))
}

/// Limb and exclusion joints by name, resolved against a skeleton.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbConfig {
    pub limbs: BTreeMap<String, Vec<String>>,
    pub excluded: Vec<String>,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for LimbConfig {
    fn default() -> Self {
        let limbs = [
            ("left_arm", names(&["LeftForeArm", "LeftHand"])),
            ("left_leg", names(&["LeftLeg", "LeftFoot", "LeftToeBase"])),
            ("right_arm", names(&["RightForeArm", "RightHand"])),
            ("right_leg", names(&["RightLeg", "RightFoot", "RightToeBase"])),
        ];
        LimbConfig {
            limbs: limbs.into_iter().map(|(n, j)| (n.to_string(), j)).collect(),
            excluded: names(&[
                "LeftShoulder",
                "LeftArm",
                "RightShoulder",
                "RightArm",
                "LeftUpLeg",
                "RightUpLeg",
            ]),
        }
    }
}

impl LimbConfig {
    pub fn resolve(&self, skeleton: &Skeleton) -> Result<(Vec<LimbJoints>, Vec<usize>)> {
        let find = |name: &String| {
            skeleton
                .find(name)
                .ok_or_else(|| Error::Config(format!("joint `{name}` is not in the skeleton")))
        };
        let limbs = self
            .limbs
            .iter()
            .map(|(name, joints)| {
                Ok(LimbJoints {
                    name: name.clone(),
                    joints: joints.iter().map(find).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let excluded = self.excluded.iter().map(find).collect::<Result<_>>()?;
        Ok((limbs, excluded))
    }

    pub fn segment(&self, character: &SkinnedCharacter) -> Result<LimbSegmentation> {
        let (limbs, excluded) = self.resolve(&character.skeleton)?;
        segment_limbs(character, &limbs, &excluded)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop when the relative change of the objective falls below this.
    pub tolerance: f64,
    /// Recompute nearest-neighbour correspondences every this many iterations.
    pub refresh_every: usize,
    /// Redraw vertex samples every this many iterations; 0 keeps one sample.
    pub resample_every: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub samples: SampleCounts,
    pub limbs: LimbConfig,
    /// Signed depth above which a vertex counts as penetrating in metrics.
    pub penetration_threshold: f64,
    pub search: NeighborSearch,
    /// Largest acceptable constraint term for the optimized motion.
    pub constraint_bound: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 0.005,
            iterations: 300,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tolerance: 1e-9,
            refresh_every: 1,
            resample_every: 0,
            seed: 0,
            weights: LossWeights::FINAL,
            samples: SampleCounts::default(),
            limbs: LimbConfig::default(),
            penetration_threshold: 0.0,
            search: NeighborSearch::Tree,
            constraint_bound: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!("step size {} must be positive", self.step_size)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iteration budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Config(
                "epsilon must be positive and tolerance nonnegative".into(),
            ));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("refresh_every must be at least 1".into()));
        }
        if self.samples.query == 0 || self.samples.reference == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if !(self.constraint_bound >= 0.0) {
            return Err(Error::Config("constraint bound must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: LossReport,
    /// Lowest total seen up to and including this iteration.
    pub best_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetargetReport {
    /// Best-iterate retargeted motion, global channel included.
    pub motion: Motion,
    pub residual: ResidualMotion,
    pub trace: Vec<TraceEntry>,
    pub best_iteration: usize,
    pub converged: bool,
    pub stop_reason: String,
    /// Copy baseline against itself.
    pub metrics_before: MetricsReport,
    /// Retargeted motion against the copy baseline.
    pub metrics_after: MetricsReport,
    /// Limb-joint curvature of the source motion on the source character.
    pub source_curvature: f64,
    /// Constraint term of the optimized motion, whatever its weight.
    pub constraint: f64,
    pub constraint_within_bound: bool,
    pub sampled_with_replacement: bool,
    pub wall_ms: f64,
}

impl RetargetReport {
    pub fn initial_loss(&self) -> &LossReport {
        &self.trace[0].loss
    }

    pub fn best_loss(&self) -> &LossReport {
        &self.trace[self.best_iteration].loss
    }
}

/// Retarget `source` (animating `source_char`) onto `target_char`,
/// starting from the copy motion.
pub fn optimize_sequence(
    source: &Motion,
    source_char: &SkinnedCharacter,
    target_char: &SkinnedCharacter,
    config: &OptimizerConfig,
) -> Result<RetargetReport> {
    let start = Instant::now();
    let problem = RetargetProblem::build(source, source_char, target_char, config)?;
    let initial = ResidualMotion::identity(problem.frames(), problem.joint_count());
    let mut report = optimize_problem(problem, initial, source_char, config)?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Divergence means exceeding ten times the larger of the initial loss and
/// this floor.
pub const DIVERGENCE_FLOOR: f64 = 1e-6;

/// Losses at or below this are an exact optimum; the optimizer stops there
/// instead of letting Adam's scale-free steps wander off it.
pub const ZERO_LOSS: f64 = 1e-20;

/// Optimize `problem` from an explicit initial residual.
pub fn optimize_problem(
    mut problem: RetargetProblem,
    initial_residual: ResidualMotion,
    source_char: &SkinnedCharacter,
    config: &OptimizerConfig,
) -> Result<RetargetReport> {
    config.validate()?;
    problem.check_residual(&initial_residual)?;
    let start = Instant::now();
    let target_char = problem.target().clone();
    let target_char = &target_char;
    let source = problem.source().clone();
    let source = &source;
    let mut replaced = problem.sample().any_with_replacement();

    let mut residual = initial_residual;
    let mut flat = residual.flat();
    let mut adam = Adam::new(flat.len(), config.step_size, config.beta1, config.beta2, config.epsilon);
    let mut corr = None;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut best: Option<(usize, f64, ResidualMotion)> = None;
    let mut converged = false;
    let mut stop_reason = "iteration budget exhausted".to_string();
    let mut initial = None;

    for it in 0..config.iterations {
        if config.resample_every > 0 && it > 0 && it % config.resample_every == 0 {
            let s = sample_points(
                target_char,
                problem.segmentation(),
                config.samples,
                config.seed.wrapping_add(it as u64),
            )?;
            replaced |= s.any_with_replacement();
            problem.set_sample(s)?;
            corr = None;
        }
        if corr.is_none() || it % config.refresh_every == 0 {
            corr = Some(problem.correspondences(&residual, config.search)?);
        }
        let (loss, grad) = problem.evaluate(&residual, corr.as_ref().unwrap(), &config.weights, true)?;
        let grad = grad.expect("gradient requested");
        let total = loss.total;
        let init = *initial.get_or_insert(total);
        if total > 10.0 * init.max(DIVERGENCE_FLOOR) {
            return Err(Error::Divergence {
                iteration: it,
                loss: total,
                initial: init,
            });
        }
        if best.as_ref().is_none_or(|(_, b, _)| total < *b) {
            best = Some((it, total, residual.clone()));
        }
        let prev = trace.last().map(|e| e.loss.total);
        trace.push(TraceEntry {
            iteration: it,
            loss,
            best_total: best.as_ref().unwrap().1,
        });

        if grad.iter().all(|g| g.norm_squared() == 0.0) {
            converged = true;
            stop_reason = "zero gradient".into();
            break;
        }
        if total <= ZERO_LOSS {
            converged = true;
            stop_reason = "loss at numerical zero".into();
            break;
        }
        if let Some(prev) = prev {
            let denom = prev.abs().max(1e-300);
            if (prev - total).abs() / denom < config.tolerance {
                converged = true;
                stop_reason = "relative loss change below tolerance".into();
                break;
            }
        }
        if it + 1 == config.iterations {
            break;
        }
        let g: Vec<f64> = grad.iter().flat_map(|q| q.to_array()).collect();
        adam.step(&mut flat, &g);
        residual.set_flat(&flat);
    }

    let (best_iteration, _, best_residual) = best.expect("at least one iteration");
    let motion = problem.retargeted_motion(&best_residual)?;
    let copy = problem.copy_motion()?;
    let threshold = config.penetration_threshold;
    let metrics_before = metrics::evaluate(target_char, problem.segmentation(), &copy, &copy, threshold)?;
    let metrics_after = metrics::evaluate(target_char, problem.segmentation(), &motion, &copy, threshold)?;
    let source_curvature = metrics::curvature(
        source,
        &source_char.skeleton,
        &metrics::limb_joint_indices(&source_char.skeleton),
    )?
    .mean;
    let constraint = constraint_loss(source, &motion, &target_char.skeleton)?;
    Ok(RetargetReport {
        motion,
        residual: best_residual,
        trace,
        best_iteration,
        converged,
        stop_reason,
        metrics_before,
        metrics_after,
        source_curvature,
        constraint,
        constraint_within_bound: constraint <= config.constraint_bound,
        sampled_with_replacement: replaced,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Joint;

    fn source_motion() -> Motion {
        let rots = vec![
            Quat::from_axis_angle(Vec3::new(1.0, 0.2, 0.0), 0.4),
            Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.3), -0.7),
            Quat::from_axis_angle(Vec3::new(0.5, 0.0, 1.0), 1.9),
            Quat::from_axis_angle(Vec3::Z, 0.1),
        ];
        Motion::new(2, rots, vec![[1.0, 2.0, 3.0, 0.5], [2.0, 0.0, -1.0, 0.25]], 30.0).unwrap()
    }

    #[test]
    fn identity_residual_reproduces_source() {
        let src = source_motion();
        let out = compose_motion(&ResidualMotion::identity(2, 2), &src, 1.0, 1.0).unwrap();
        for (a, b) in out.rotations().iter().zip(src.rotations()) {
            assert!((*a - b.canonical()).norm() < 1e-15);
        }
        assert_eq!(out.global(), src.global());
    }

    #[test]
    fn conjugate_residual_gives_identity() {
        let src = source_motion();
        let params = src.rotations().iter().map(|q| q.conjugate()).collect();
        let res = ResidualMotion::from_params(2, 2, params).unwrap();
        let out = compose_motion(&res, &src, 1.0, 1.0).unwrap();
        for q in out.rotations() {
            assert!((*q - Quat::IDENTITY).norm() < 1e-15);
        }
    }

    #[test]
    fn composition_matches_elementwise_product() {
        let src = source_motion();
        // Deliberately non-unit raw parameters.
        let params = vec![
            Quat::new(2.0, 0.3, -0.1, 0.4),
            Quat::new(0.1, 1.0, 0.2, -0.3),
            Quat::new(-0.5, 0.2, 0.9, 0.1),
            Quat::new(1.0, 1.0, 1.0, 1.0),
        ];
        let res = ResidualMotion::from_params(2, 2, params.clone()).unwrap();
        let out = compose_motion(&res, &src, 1.0, 1.0).unwrap();
        for (i, q) in out.rotations().iter().enumerate() {
            let oracle = crate::math::quat_multiply(params[i].normalized().unwrap(), src.rotations()[i]);
            assert!((*q - oracle.canonical()).norm() < 1e-12);
            assert!(q.w >= 0.0);
        }
        assert!(compose_motion(&ResidualMotion::identity(3, 2), &src, 1.0, 1.0).is_err());
    }

    #[test]
    fn global_normalization() {
        let g = vec![[2.0, 0.0, 4.0, 7.0]];
        assert_eq!(normalize_global(&g, 1.8, 1.8).unwrap(), g);
        assert_eq!(normalize_global(&g, 1.8, 0.9).unwrap(), vec![[1.0, 0.0, 2.0, 7.0]]);
        let there = normalize_global(&[[0.3, -1.7, 2.9, 0.1]], 1.7, 2.3).unwrap();
        let back = normalize_global(&there, 2.3, 1.7).unwrap();
        for (a, b) in back[0].iter().zip([0.3, -1.7, 2.9, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(normalize_global(&g, 0.0, 1.0).is_err());
        assert!(normalize_global(&g, 1.0, -2.0).is_err());
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig {
            step_size: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            iterations: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            refresh_every: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let json = r#"{"iterations": 5, "bogus": 1}"#;
        assert!(serde_json::from_str::<OptimizerConfig>(json).is_err());
    }

    #[test]
    fn limb_config_requires_known_joints() {
        let skel = Skeleton::new(vec![Joint::new("Hips", None, Vec3::ZERO)]).unwrap();
        assert!(matches!(LimbConfig::default().resolve(&skel), Err(Error::Config(_))));
    }
}
