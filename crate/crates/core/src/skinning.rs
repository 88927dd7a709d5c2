//! Skinned meshes, linear blend skinning, limb segmentation and seeded
//! vertex sampling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::skeleton::{Motion, Pose, Skeleton};

pub const MAX_INFLUENCES: usize = 4;
pub const WEIGHT_TOLERANCE: f64 = 1e-6;

/// Up to four `(joint, weight)` pairs for one vertex.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Influences {
    joints: [u32; MAX_INFLUENCES],
    weights: [f64; MAX_INFLUENCES],
    len: u8,
}

impl Influences {
    /// Zero weights are dropped. Fails on more than four nonzero entries or
    /// negative weights; the unit-sum check happens in [`SkinnedCharacter::new`].
    pub fn new(pairs: &[(usize, f64)]) -> Result<Self> {
        let mut out = Influences::default();
        for &(j, w) in pairs {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Weights(format!(
                    "weight {w} on joint {j} is negative or non-finite"
                )));
            }
            if w == 0.0 {
                continue;
            }
            if out.len as usize == MAX_INFLUENCES {
                return Err(Error::Weights(format!("more than {MAX_INFLUENCES} nonzero influences")));
            }
            out.joints[out.len as usize] = j as u32;
            out.weights[out.len as usize] = w;
            out.len += 1;
        }
        Ok(out)
    }

    pub fn single(joint: usize) -> Self {
        Influences::new(&[(joint, 1.0)]).unwrap()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(move |i| (self.joints[i] as usize, self.weights[i]))
    }

    pub fn sum(&self) -> f64 {
        self.iter().map(|(_, w)| w).sum()
    }

    /// Joint with the largest weight; ties go to the lowest joint index.
    pub fn dominant(&self) -> Option<usize> {
        self.iter()
            .fold(None, |best: Option<(usize, f64)>, (j, w)| match best {
                Some((bj, bw)) if bw > w || (bw == w && bj < j) => Some((bj, bw)),
                _ => Some((j, w)),
            })
            .map(|(j, _)| j)
    }
}

/// Rest-pose mesh bound to a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct SkinnedCharacter {
    pub skeleton: Skeleton,
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    influences: Vec<Influences>,
    bind: Vec<Vec3>,
}

impl SkinnedCharacter {
    pub fn new(
        skeleton: Skeleton,
        vertices: Vec<Vec3>,
        normals: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        influences: Vec<Influences>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if normals.len() != nv || influences.len() != nv {
            return Err(Error::Shape(format!(
                "{nv} vertices, {} normals, {} weight rows",
                normals.len(),
                influences.len()
            )));
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= nv)) {
            return Err(Error::Shape(format!("face {f:?} references a missing vertex")));
        }
        for (i, (v, n)) in vertices.iter().zip(&normals).enumerate() {
            if !v.is_finite() {
                return Err(Error::Shape(format!("vertex {i} is not finite")));
            }
            if !n.is_finite() || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!("normal {i} is not unit")));
            }
        }
        let k = skeleton.len();
        for (i, inf) in influences.iter().enumerate() {
            if let Some((j, _)) = inf.iter().find(|(j, _)| *j >= k) {
                return Err(Error::Weights(format!("vertex {i} references joint {j} of {k}")));
            }
            let s = inf.sum();
            if (s - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(Error::Weights(format!("vertex {i} weights sum to {s}")));
            }
        }
        let bind = skeleton.rest_positions();
        Ok(SkinnedCharacter {
            skeleton,
            vertices,
            normals,
            faces,
            influences,
            bind,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn influences(&self) -> &[Influences] {
        &self.influences
    }

    /// Rest-pose joint positions the mesh is bound to.
    pub fn bind_positions(&self) -> &[Vec3] {
        &self.bind
    }

    /// Vertex `i` offset from joint `k` in the rest pose.
    #[inline]
    pub(crate) fn bind_offset(&self, i: usize, k: usize) -> Vec3 {
        self.vertices[i] - self.bind[k]
    }

    /// Posed position of vertex `i`: `sum_k w_k (R_k (v - b_k) + P_k)`,
    /// evaluated as a displacement from `v` so the bind pose is exact.
    #[inline]
    pub fn deform_vertex(&self, pose: &Pose, i: usize) -> Vec3 {
        let mut shift = Vec3::ZERO;
        for (k, w) in self.influences[i].iter() {
            let x = self.bind_offset(i, k);
            let moved = pose.joint_rotations_world[k].rotate(x) - x + (pose.joint_positions[k] - self.bind[k]);
            shift += moved * w;
        }
        self.vertices[i] + shift
    }

    /// Normal of vertex `i` under the blended rotation, before renormalization.
    #[inline]
    pub fn deform_normal_unnormalized(&self, pose: &Pose, i: usize) -> Vec3 {
        let mut out = Vec3::ZERO;
        for (k, w) in self.influences[i].iter() {
            out += pose.joint_rotations_world[k].rotate(self.normals[i]) * w;
        }
        out
    }

    #[inline]
    pub fn deform_normal(&self, pose: &Pose, i: usize) -> Vec3 {
        self.deform_normal_unnormalized(pose, i).normalized()
    }

    /// Posed positions and normals for a subset of vertices.
    pub fn deform_subset(&self, pose: &Pose, indices: &[usize]) -> (Vec<Vec3>, Vec<Vec3>) {
        indices
            .iter()
            .map(|&i| (self.deform_vertex(pose, i), self.deform_normal(pose, i)))
            .unzip()
    }

    pub fn pose(&self, motion: &Motion, frame: usize) -> Result<Pose> {
        crate::skeleton::forward_kinematics(&self.skeleton, motion, frame)
    }
}

/// Deformed vertices and normals for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

pub fn lbs_deform(character: &SkinnedCharacter, motion: &Motion, frame: usize) -> Result<DeformedMesh> {
    let pose = character.pose(motion, frame)?;
    let all: Vec<usize> = (0..character.vertex_count()).collect();
    let (vertices, normals) = character.deform_subset(&pose, &all);
    if vertices.iter().chain(&normals).any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            term: "linear blend skinning".into(),
        });
    }
    Ok(DeformedMesh { vertices, normals })
}

/// Joint indices making up one limb.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimbJoints {
    pub name: String,
    pub joints: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limb {
    pub name: String,
    /// Query vertices: dominated by one of the limb's joints.
    pub vertices: Vec<usize>,
    /// Reference vertices: everything not in this limb and not excluded.
    pub reference: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimbSegmentation {
    pub limbs: Vec<Limb>,
    pub excluded: Vec<usize>,
}

impl LimbSegmentation {
    pub fn total_limb_vertices(&self) -> usize {
        self.limbs.iter().map(|l| l.vertices.len()).sum()
    }
}

/// Assign vertices to limbs by dominant skinning joint.
pub fn segment_limbs(
    character: &SkinnedCharacter,
    limb_joints: &[LimbJoints],
    excluded_joints: &[usize],
) -> Result<LimbSegmentation> {
    let k = character.skeleton.len();
    // joint -> owner: Some(limb index) or exclusion.
    #[derive(Clone, Copy, PartialEq)]
    enum Owner {
        Free,
        Limb(usize),
        Excluded,
    }
    let mut owner = vec![Owner::Free; k];
    for (li, limb) in limb_joints.iter().enumerate() {
        for &j in &limb.joints {
            if j >= k {
                return Err(Error::Segmentation(format!(
                    "limb `{}` references joint {j} of {k}",
                    limb.name
                )));
            }
            if owner[j] != Owner::Free {
                return Err(Error::Segmentation(format!(
                    "joint {j} (`{}`) is claimed twice",
                    character.skeleton.joint(j).name
                )));
            }
            owner[j] = Owner::Limb(li);
        }
    }
    for &j in excluded_joints {
        if j >= k {
            return Err(Error::Segmentation(format!("excluded joint {j} of {k}")));
        }
        match owner[j] {
            Owner::Limb(_) => {
                return Err(Error::Segmentation(format!(
                    "joint `{}` is both a limb joint and excluded",
                    character.skeleton.joint(j).name
                )))
            }
            _ => owner[j] = Owner::Excluded,
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); limb_joints.len()];
    let mut excluded = Vec::new();
    let mut vertex_owner = Vec::with_capacity(character.vertex_count());
    for (i, inf) in character.influences().iter().enumerate() {
        let o = inf.dominant().map_or(Owner::Free, |j| owner[j]);
        match o {
            Owner::Limb(li) => members[li].push(i),
            Owner::Excluded => excluded.push(i),
            Owner::Free => {}
        }
        vertex_owner.push(o);
    }

    let mut limbs = Vec::with_capacity(limb_joints.len());
    for (li, (spec, vertices)) in limb_joints.iter().zip(members).enumerate() {
        if vertices.is_empty() {
            return Err(Error::Segmentation(format!("limb `{}` has no vertices", spec.name)));
        }
        let reference: Vec<usize> = vertex_owner
            .iter()
            .enumerate()
            .filter(|(_, o)| !matches!(o, Owner::Excluded) && **o != Owner::Limb(li))
            .map(|(i, _)| i)
            .collect();
        if reference.is_empty() {
            return Err(Error::Segmentation(format!(
                "limb `{}` has no reference vertices",
                spec.name
            )));
        }
        limbs.push(Limb {
            name: spec.name.clone(),
            vertices,
            reference,
        });
    }
    Ok(LimbSegmentation { limbs, excluded })
}

/// Seeded subset of mesh vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub indices: Vec<usize>,
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub seed: u64,
    /// Set when the source set was smaller than the requested count.
    pub with_replacement: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub query: usize,
    pub reference: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            query: 400,
            reference: 4000,
        }
    }
}

/// Points sampled from the whole mesh for shape encoding.
pub const SHAPE_SAMPLE_COUNT: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimbSample {
    pub name: String,
    pub query: PointSample,
    pub reference: PointSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenetrationSample {
    pub limbs: Vec<LimbSample>,
    pub seed: u64,
}

impl PenetrationSample {
    pub fn total_queries(&self) -> usize {
        self.limbs.iter().map(|l| l.query.indices.len()).sum()
    }

    pub fn any_with_replacement(&self) -> bool {
        self.limbs
            .iter()
            .any(|l| l.query.with_replacement || l.reference.with_replacement)
    }

    /// Every limb uses its full query and reference sets.
    pub fn exhaustive(segmentation: &LimbSegmentation, character: &SkinnedCharacter) -> Self {
        let full = |set: &[usize]| build_sample(character, set.to_vec(), 0, false);
        PenetrationSample {
            limbs: segmentation
                .limbs
                .iter()
                .map(|l| LimbSample {
                    name: l.name.clone(),
                    query: full(&l.vertices),
                    reference: full(&l.reference),
                })
                .collect(),
            seed: 0,
        }
    }
}

fn build_sample(character: &SkinnedCharacter, indices: Vec<usize>, seed: u64, with_replacement: bool) -> PointSample {
    PointSample {
        positions: indices.iter().map(|&i| character.vertices()[i]).collect(),
        normals: indices.iter().map(|&i| character.normals()[i]).collect(),
        indices,
        seed,
        with_replacement,
    }
}

/// Draw `count` members of `set` uniformly. Without replacement when
/// possible; results are returned in set order. Falls back to drawing with
/// replacement (and says so) when `count > set.len()`.
pub fn sample_indices<R: Rng>(set: &[usize], count: usize, rng: &mut R) -> Result<(Vec<usize>, bool)> {
    if set.is_empty() {
        return Err(Error::Sampling("cannot sample from an empty set".into()));
    }
    if count >= set.len() {
        if count == set.len() {
            return Ok((set.to_vec(), false));
        }
        let mut picks: Vec<usize> = (0..count).map(|_| rng.gen_range(0..set.len())).collect();
        picks.sort_unstable();
        return Ok((picks.into_iter().map(|p| set[p]).collect(), true));
    }
    let mut picks = index::sample(rng, set.len(), count).into_vec();
    picks.sort_unstable();
    Ok((picks.into_iter().map(|p| set[p]).collect(), false))
}

/// Per-limb query and reference samples, reproducible from `seed`.
pub fn sample_points(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    counts: SampleCounts,
    seed: u64,
) -> Result<PenetrationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut limbs = Vec::with_capacity(segmentation.limbs.len());
    for limb in &segmentation.limbs {
        let (q, q_rep) = sample_indices(&limb.vertices, counts.query, &mut rng)
            .map_err(|e| Error::Sampling(format!("limb `{}` queries: {e}", limb.name)))?;
        let (r, r_rep) = sample_indices(&limb.reference, counts.reference, &mut rng)
            .map_err(|e| Error::Sampling(format!("limb `{}` references: {e}", limb.name)))?;
        limbs.push(LimbSample {
            name: limb.name.clone(),
            query: build_sample(character, q, seed, q_rep),
            reference: build_sample(character, r, seed, r_rep),
        });
    }
    Ok(PenetrationSample { limbs, seed })
}

/// `n` vertices drawn from the whole mesh.
pub fn sample_shape(character: &SkinnedCharacter, n: usize, seed: u64) -> Result<PointSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..character.vertex_count()).collect();
    let (idx, rep) = sample_indices(&all, n, &mut rng)?;
    Ok(build_sample(character, idx, seed, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::skeleton::Joint;
    use std::f64::consts::FRAC_PI_2;

    fn two_joint_character(vertices: Vec<Vec3>, influences: Vec<Influences>) -> SkinnedCharacter {
        let skel = Skeleton::new(vec![
            Joint::new("root", None, Vec3::ZERO),
            Joint::new("tip", Some(0), Vec3::new(1.0, 0.0, 0.0)),
        ])
        .unwrap();
        let normals = vec![Vec3::Y; vertices.len()];
        SkinnedCharacter::new(skel, vertices, normals, vec![], influences).unwrap()
    }

    #[test]
    fn bind_pose_reproduces_rest_mesh() {
        let verts = vec![Vec3::new(0.5, 0.1, 0.0), Vec3::new(1.5, -0.1, 0.2)];
        let infl = vec![Influences::new(&[(0, 0.7), (1, 0.3)]).unwrap(), Influences::single(1)];
        let c = two_joint_character(verts.clone(), infl);
        let m = Motion::identity(1, 2, Vec3::ZERO, 30.0).unwrap();
        let d = lbs_deform(&c, &m, 0).unwrap();
        assert_eq!(d.vertices, verts);
        assert_eq!(d.normals, vec![Vec3::Y; 2]);
    }

    #[test]
    fn rigid_binding_follows_joint() {
        let c = two_joint_character(vec![Vec3::new(1.5, 0.2, 0.0)], vec![Influences::single(1)]);
        let rz = Quat::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let m = Motion::new(2, vec![Quat::IDENTITY, rz], vec![[0.0; 4]], 30.0).unwrap();
        let d = lbs_deform(&c, &m, 0).unwrap();
        // Tip joint at (1,0,0), rotated 90 deg about z: offset (0.5,0.2,0) -> (-0.2,0.5,0).
        assert!((d.vertices[0] - Vec3::new(0.8, 0.5, 0.0)).norm() < 1e-15);
        assert!((d.normals[0] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn half_half_blend_is_midpoint_of_rigid_images() {
        let v = Vec3::new(1.0, 0.5, 0.0);
        let c = two_joint_character(vec![v], vec![Influences::new(&[(0, 0.5), (1, 0.5)]).unwrap()]);
        let rz = Quat::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let m = Motion::new(2, vec![Quat::IDENTITY, rz], vec![[0.0; 4]], 30.0).unwrap();
        let d = lbs_deform(&c, &m, 0).unwrap();
        // Root image: v itself. Tip image: (1,0,0) + Rz90 (0,0.5,0) = (0.5,0,0).
        let expect = (v + Vec3::new(0.5, 0.0, 0.0)) * 0.5;
        assert!((d.vertices[0] - expect).norm() < 1e-15);
        // Blended normal: (Y + (-X)) / 2, renormalized.
        let n = Vec3::new(-1.0, 1.0, 0.0).normalized();
        assert!((d.normals[0] - n).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        let skel = Skeleton::new(vec![Joint::new("r", None, Vec3::ZERO)]).unwrap();
        let bad = Influences::new(&[(0, 0.9)]).unwrap();
        let err = SkinnedCharacter::new(skel.clone(), vec![Vec3::ZERO], vec![Vec3::Y], vec![], vec![bad]);
        assert!(matches!(err, Err(Error::Weights(_))));
        assert!(Influences::new(&[(0, 0.2), (1, 0.2), (2, 0.2), (3, 0.2), (4, 0.2)]).is_err());
        assert!(Influences::new(&[(0, -0.1)]).is_err());
    }

    #[test]
    fn translation_commutes_with_skinning() {
        let c = two_joint_character(
            vec![Vec3::new(0.3, 0.2, 0.1), Vec3::new(1.2, 0.0, -0.3)],
            vec![Influences::new(&[(0, 0.4), (1, 0.6)]).unwrap(), Influences::single(1)],
        );
        let q0 = Quat::from_axis_angle(Vec3::new(1.0, 0.3, 0.0), 0.9);
        let q1 = Quat::from_axis_angle(Vec3::new(0.0, 0.3, 1.0), -0.4);
        let a = Motion::new(2, vec![q0, q1], vec![[0.0; 4]], 30.0).unwrap();
        let b = a.with_global(vec![[1.0, -2.0, 0.5, 0.0]]).unwrap();
        let da = lbs_deform(&c, &a, 0).unwrap();
        let db = lbs_deform(&c, &b, 0).unwrap();
        for (x, y) in da.vertices.iter().zip(&db.vertices) {
            assert!((*y - *x - Vec3::new(1.0, -2.0, 0.5)).norm() < 1e-12);
        }
        assert_eq!(da.normals, db.normals);
        for n in &da.normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    /// 50-vertex stick figure: joints root, l_upper, l_lower, r_upper, r_lower, torso.
    fn stick_figure() -> SkinnedCharacter {
        let skel = Skeleton::new(vec![
            Joint::new("root", None, Vec3::ZERO),
            Joint::new("l_upper", Some(0), Vec3::new(1.0, 0.0, 0.0)),
            Joint::new("l_lower", Some(1), Vec3::new(1.0, 0.0, 0.0)),
            Joint::new("r_upper", Some(0), Vec3::new(-1.0, 0.0, 0.0)),
            Joint::new("r_lower", Some(3), Vec3::new(-1.0, 0.0, 0.0)),
            Joint::new("torso", Some(0), Vec3::new(0.0, 1.0, 0.0)),
        ])
        .unwrap();
        // Hand labels: 0..10 torso, 10..18 left upper, 18..30 left lower,
        // 30..37 right upper, 37..50 right lower.
        let mut verts = Vec::new();
        let mut infl = Vec::new();
        for i in 0..50 {
            let (joint, x) = match i {
                0..=9 => (5, 0.0),
                10..=17 => (1, 1.5),
                18..=29 => (2, 2.5),
                30..=36 => (3, -1.5),
                _ => (4, -2.5),
            };
            verts.push(Vec3::new(x, 0.01 * i as f64, 0.0));
            // A secondary influence on the root, never dominant.
            infl.push(Influences::new(&[(joint, 0.8), (0, 0.2)]).unwrap());
        }
        let normals = vec![Vec3::Y; 50];
        SkinnedCharacter::new(skel, verts, normals, vec![], infl).unwrap()
    }

    #[test]
    fn segmentation_matches_hand_labels() {
        let c = stick_figure();
        let limbs = vec![
            LimbJoints {
                name: "left".into(),
                joints: vec![2],
            },
            LimbJoints {
                name: "right".into(),
                joints: vec![4],
            },
        ];
        let seg = segment_limbs(&c, &limbs, &[1, 3]).unwrap();
        assert_eq!(seg.limbs[0].vertices, (18..30).collect::<Vec<_>>());
        assert_eq!(seg.limbs[1].vertices, (37..50).collect::<Vec<_>>());
        assert_eq!(seg.excluded, (10..18).chain(30..37).collect::<Vec<_>>());
        // Torso vertices are references for both limbs; each limb references the other.
        let left_ref: Vec<usize> = (0..10).chain(37..50).collect();
        assert_eq!(seg.limbs[0].reference, left_ref);
        assert_eq!(seg.limbs[1].reference, (0..10).chain(18..30).collect::<Vec<_>>());

        // Partition: limbs, excluded and free vertices cover the mesh exactly once.
        let mut seen = vec![0; 50];
        for l in &seg.limbs {
            l.vertices.iter().for_each(|&i| seen[i] += 1);
        }
        seg.excluded.iter().for_each(|&i| seen[i] += 1);
        (0..10).for_each(|i| seen[i] += 1);
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn segmentation_errors() {
        let c = stick_figure();
        let empty = vec![LimbJoints {
            name: "nothing".into(),
            joints: vec![0],
        }];
        assert!(matches!(segment_limbs(&c, &empty, &[]), Err(Error::Segmentation(_))));
        let overlap = vec![
            LimbJoints {
                name: "a".into(),
                joints: vec![2],
            },
            LimbJoints {
                name: "b".into(),
                joints: vec![2, 4],
            },
        ];
        assert!(segment_limbs(&c, &overlap, &[]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_exhaustive_at_full_count() {
        let set: Vec<usize> = (100..160).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (full, rep) = sample_indices(&set, set.len(), &mut rng).unwrap();
        assert_eq!(full, set);
        assert!(!rep);

        let draw = |seed| sample_indices(&set, 17, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(draw(3), draw(3));
        let (picks, rep) = draw(3);
        assert!(!rep);
        let mut uniq = picks.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), 17);

        let (over, rep) = sample_indices(&set[..5], 12, &mut rng).unwrap();
        assert!(rep);
        assert_eq!(over.len(), 12);
        assert!(sample_indices(&[], 1, &mut rng).is_err());
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        // 10,000 draws of 10 from 100: each index included with p = 0.1.
        let set: Vec<usize> = (0..100).collect();
        let draws = 10_000;
        let mut counts = [0usize; 100];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..draws {
            for i in sample_indices(&set, 10, &mut rng).unwrap().0 {
                counts[i] += 1;
            }
        }
        let p = 0.1;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for (i, c) in counts.iter().enumerate() {
            let f = *c as f64 / draws as f64;
            assert!((f - p).abs() <= 3.0 * sigma, "index {i}: frequency {f}");
        }
    }

    #[test]
    fn limb_samples_respect_sets() {
        let c = stick_figure();
        let limbs = vec![
            LimbJoints {
                name: "left".into(),
                joints: vec![2],
            },
            LimbJoints {
                name: "right".into(),
                joints: vec![4],
            },
        ];
        let seg = segment_limbs(&c, &limbs, &[1, 3]).unwrap();
        let s = sample_points(&c, &seg, SampleCounts { query: 5, reference: 8 }, 11).unwrap();
        assert_eq!(
            s,
            sample_points(&c, &seg, SampleCounts { query: 5, reference: 8 }, 11).unwrap()
        );
        for (ls, l) in s.limbs.iter().zip(&seg.limbs) {
            assert!(ls.query.indices.iter().all(|i| l.vertices.contains(i)));
            assert!(ls.reference.indices.iter().all(|i| l.reference.contains(i)));
            assert_eq!(ls.query.positions[0], c.vertices()[ls.query.indices[0]]);
        }
        let shape = sample_shape(&c, 20, 1).unwrap();
        assert_eq!(shape.indices.len(), 20);
    }
}
