//! Synthetic humanoid scenes: a sphere torso, a sphere head and cylindrical
//! limbs on a 22-joint skeleton, animated with arm sweeps and a walk cycle.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::optimizer::LimbConfig;
use crate::skeleton::{Joint, Motion, Skeleton};
use crate::skinning::{Influences, SkinnedCharacter};

pub const SCENE_IDS: [&str; 2] = ["arm_sweep", "slim_to_fat"];

/// `n` points spread evenly over the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let a = golden * i as f64;
            Vec3::new(r * a.cos(), y, r * a.sin())
        })
        .collect()
}

/// Scene parameters. Angles are degrees of arm depression below the
/// horizontal T-pose; beyond 90 the arm swings across the body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub scene: String,
    /// Source torso radius, in `[0.1, 0.4]`.
    pub torso_radius: f64,
    /// Shoulder-to-fingertip length, in `[0.3, 1.0]`.
    pub limb_length: f64,
    /// Sweep range, each in `[-30, 150]`, `min <= max`.
    pub sweep_min_deg: f64,
    pub sweep_max_deg: f64,
    /// Elbow bend amplitude, in `[0, 90]`.
    pub elbow_flex_deg: f64,
    /// Target torso radius over the source's, in `[1, 3]`; `arm_sweep`
    /// ignores it.
    pub target_torso_scale: f64,
    /// In `[3, 10000]`.
    pub frames: usize,
    /// In `(0, 1000]`.
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec::arm_sweep()
    }
}

impl SceneSpec {
    pub fn arm_sweep() -> Self {
        SceneSpec {
            scene: "arm_sweep".into(),
            torso_radius: 0.2,
            limb_length: 0.6,
            sweep_min_deg: 20.0,
            sweep_max_deg: 105.0,
            elbow_flex_deg: 0.0,
            target_torso_scale: 1.0,
            frames: 60,
            frame_rate: 30.0,
            seed: 0,
        }
    }

    pub fn slim_to_fat() -> Self {
        SceneSpec {
            scene: "slim_to_fat".into(),
            torso_radius: 0.18,
            sweep_min_deg: 55.0,
            sweep_max_deg: 88.0,
            elbow_flex_deg: 20.0,
            target_torso_scale: 1.5,
            frames: 40,
            ..SceneSpec::arm_sweep()
        }
    }

    /// Defaults for a known scene id.
    pub fn for_scene(id: &str) -> Result<Self> {
        match id {
            "arm_sweep" => Ok(SceneSpec::arm_sweep()),
            "slim_to_fat" => Ok(SceneSpec::slim_to_fat()),
            other => Err(Error::UnknownScene(other.into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENE_IDS.contains(&self.scene.as_str()) {
            return Err(Error::UnknownScene(self.scene.clone()));
        }
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside [{lo}, {hi}]")))
            }
        };
        check("torso_radius", self.torso_radius, 0.1, 0.4)?;
        check("limb_length", self.limb_length, 0.3, 1.0)?;
        check("sweep_min_deg", self.sweep_min_deg, -30.0, 150.0)?;
        check("sweep_max_deg", self.sweep_max_deg, -30.0, 150.0)?;
        check("elbow_flex_deg", self.elbow_flex_deg, 0.0, 90.0)?;
        check("target_torso_scale", self.target_torso_scale, 1.0, 3.0)?;
        check("frame_rate", self.frame_rate, 1e-3, 1000.0)?;
        if self.sweep_min_deg > self.sweep_max_deg {
            return Err(Error::Config("sweep_min_deg exceeds sweep_max_deg".into()));
        }
        if !(3..=10_000).contains(&self.frames) {
            return Err(Error::Config(format!("frames = {} is outside [3, 10000]", self.frames)));
        }
        Ok(())
    }

    pub fn target_torso_radius(&self) -> f64 {
        if self.scene == "slim_to_fat" {
            self.torso_radius * self.target_torso_scale
        } else {
            self.torso_radius
        }
    }
}

/// Generated source and target assets.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub source: SkinnedCharacter,
    pub source_motion: Motion,
    pub target: SkinnedCharacter,
    pub limbs: LimbConfig,
    /// Rest-pose torso sphere center, rigidly bound to `Spine1`.
    pub torso_center: Vec3,
    pub source_torso_radius: f64,
    pub target_torso_radius: f64,
}

const HIP_HEIGHT: f64 = 0.95;
const SHOULDER_X: f64 = 0.22;
const SHOULDER_Y: f64 = 1.33;
const TORSO_CENTER_Y: f64 = 1.15;
const ARM_RADIUS: f64 = 0.04;
const LEG_RADIUS: f64 = 0.06;
const FOOT_RADIUS: f64 = 0.04;
const HEAD_RADIUS: f64 = 0.1;
const BLEND: f64 = 0.03;

/// Joint indices of the generated skeleton.
pub mod joints {
    pub const HIPS: usize = 0;
    pub const SPINE: usize = 1;
    pub const SPINE1: usize = 2;
    pub const SPINE2: usize = 3;
    pub const NECK: usize = 4;
    pub const HEAD: usize = 5;
    pub const LEFT_SHOULDER: usize = 6;
    pub const LEFT_ARM: usize = 7;
    pub const LEFT_FORE_ARM: usize = 8;
    pub const LEFT_HAND: usize = 9;
    pub const RIGHT_SHOULDER: usize = 10;
    pub const RIGHT_ARM: usize = 11;
    pub const RIGHT_FORE_ARM: usize = 12;
    pub const RIGHT_HAND: usize = 13;
    pub const LEFT_UP_LEG: usize = 14;
    pub const LEFT_LEG: usize = 15;
    pub const LEFT_FOOT: usize = 16;
    pub const LEFT_TOE_BASE: usize = 17;
    pub const RIGHT_UP_LEG: usize = 18;
    pub const RIGHT_LEG: usize = 19;
    pub const RIGHT_FOOT: usize = 20;
    pub const RIGHT_TOE_BASE: usize = 21;
}

/// Arm segment lengths (upper arm, forearm, hand) for a total limb length.
fn arm_segments(limb_length: f64) -> [f64; 3] {
    [0.45 * limb_length, 0.41 * limb_length, 0.14 * limb_length]
}

/// 22-joint humanoid in T-pose, y up, facing +z, left arm along +x.
pub fn humanoid_skeleton(limb_length: f64) -> Skeleton {
    let [upper, fore, hand] = arm_segments(limb_length);
    let v = Vec3::new;
    let mut js = vec![
        Joint::new("Hips", None, v(0.0, HIP_HEIGHT, 0.0)),
        Joint::new("Spine", Some(0), v(0.0, 0.1, 0.0)),
        Joint::new("Spine1", Some(1), v(0.0, 0.12, 0.0)),
        Joint::new("Spine2", Some(2), v(0.0, 0.12, 0.0)),
        Joint::new("Neck", Some(3), v(0.0, 0.14, 0.0)),
        Joint::new("Head", Some(4), v(0.0, 0.1, 0.0)),
    ];
    let spine2_y = HIP_HEIGHT + 0.34;
    for (side, sx) in [("Left", 1.0), ("Right", -1.0)] {
        let base = js.len();
        js.push(Joint::new(
            format!("{side}Shoulder"),
            Some(3),
            v(0.05 * sx, SHOULDER_Y - spine2_y, 0.0),
        ));
        js.push(Joint::new(
            format!("{side}Arm"),
            Some(base),
            v((SHOULDER_X - 0.05) * sx, 0.0, 0.0),
        ));
        js.push(Joint::new(
            format!("{side}ForeArm"),
            Some(base + 1),
            v(upper * sx, 0.0, 0.0),
        ));
        let mut h = Joint::new(format!("{side}Hand"), Some(base + 2), v(fore * sx, 0.0, 0.0));
        h.end_site = Some(v(hand * sx, 0.0, 0.0));
        js.push(h);
    }
    for (side, sx) in [("Left", 1.0), ("Right", -1.0)] {
        let base = js.len();
        js.push(Joint::new(format!("{side}UpLeg"), Some(0), v(0.1 * sx, -0.05, 0.0)));
        js.push(Joint::new(format!("{side}Leg"), Some(base), v(0.0, -0.42, 0.0)));
        js.push(Joint::new(format!("{side}Foot"), Some(base + 1), v(0.0, -0.4, 0.0)));
        let mut toe = Joint::new(format!("{side}ToeBase"), Some(base + 2), v(0.0, -0.04, 0.1));
        toe.end_site = Some(v(0.0, 0.0, 0.06));
        js.push(toe);
    }
    js[joints::HEAD].end_site = Some(v(0.0, 0.17, 0.0));
    Skeleton::new(js).expect("static humanoid is valid")
}

struct MeshBuilder {
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    influences: Vec<Influences>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder {
            vertices: Vec::new(),
            normals: Vec::new(),
            faces: Vec::new(),
            influences: Vec::new(),
        }
    }

    fn push(&mut self, p: Vec3, n: Vec3, w: Influences) -> usize {
        self.vertices.push(p);
        self.normals.push(n);
        self.influences.push(w);
        self.vertices.len() - 1
    }

    /// Latitude-longitude sphere bound rigidly to `joint`.
    fn sphere(&mut self, center: Vec3, radius: f64, rings: usize, segments: usize, joint: usize) {
        let w = Influences::single(joint);
        let top = self.push(center + Vec3::Y * radius, Vec3::Y, w);
        let mut ring_start = Vec::with_capacity(rings);
        for i in 1..rings {
            let theta = PI * i as f64 / rings as f64;
            ring_start.push(self.vertices.len());
            for j in 0..segments {
                let phi = TAU * j as f64 / segments as f64;
                let n = Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
                self.push(center + n * radius, n, w);
            }
        }
        let bottom = self.push(center - Vec3::Y * radius, -Vec3::Y, w);
        for j in 0..segments {
            let j1 = (j + 1) % segments;
            let first = ring_start[0];
            self.faces.push([top, first + j1, first + j]);
            let last = *ring_start.last().unwrap();
            self.faces.push([bottom, last + j, last + j1]);
        }
        for r in ring_start.windows(2) {
            for j in 0..segments {
                let j1 = (j + 1) % segments;
                self.faces.push([r[0] + j, r[0] + j1, r[1] + j]);
                self.faces.push([r[0] + j1, r[1] + j1, r[1] + j]);
            }
        }
    }

    /// Open cylinder from `a` along `axis` (unit) of length `len`; `weight`
    /// maps the distance along the axis to skinning influences.
    fn cylinder(
        &mut self,
        a: Vec3,
        axis: Vec3,
        len: f64,
        radius: f64,
        around: usize,
        along: usize,
        weight: &dyn Fn(f64) -> Influences,
    ) {
        let helper = if axis.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let u = axis.cross(helper).normalized();
        let v = axis.cross(u);
        let start = self.vertices.len();
        for i in 0..=along {
            let s = len * i as f64 / along as f64;
            let w = weight(s);
            for j in 0..around {
                let phi = TAU * j as f64 / around as f64;
                let n = u * phi.cos() + v * phi.sin();
                self.push(a + axis * s + n * radius, n, w);
            }
        }
        for i in 0..along {
            let r0 = start + i * around;
            let r1 = r0 + around;
            for j in 0..around {
                let j1 = (j + 1) % around;
                self.faces.push([r0 + j, r1 + j, r0 + j1]);
                self.faces.push([r0 + j1, r1 + j, r1 + j1]);
            }
        }
    }
}

/// Linear blend across each boundary between consecutive segments.
fn chain_weights(joints: &[usize], bounds: &[f64], s: f64) -> Influences {
    for (i, &b) in bounds.iter().enumerate() {
        if s < b - BLEND {
            return Influences::single(joints[i]);
        }
        if s <= b + BLEND {
            let t = (s - (b - BLEND)) / (2.0 * BLEND);
            return Influences::new(&[(joints[i], 1.0 - t), (joints[i + 1], t)]).unwrap();
        }
    }
    Influences::single(joints[joints.len() - 1])
}

/// Skinned humanoid with the given torso radius.
pub fn humanoid_character(torso_radius: f64, limb_length: f64) -> Result<SkinnedCharacter> {
    use joints::*;
    let skeleton = humanoid_skeleton(limb_length);
    let rest = skeleton.rest_positions();
    let mut m = MeshBuilder::new();
    m.sphere(Vec3::new(0.0, TORSO_CENTER_Y, 0.0), torso_radius, 44, 64, SPINE1);
    m.sphere(rest[HEAD] + Vec3::new(0.0, 0.08, 0.0), HEAD_RADIUS, 16, 24, HEAD);

    let [upper, fore, hand] = arm_segments(limb_length);
    for (sx, arm) in [(1.0, LEFT_ARM), (-1.0, RIGHT_ARM)] {
        let chain = [arm, arm + 1, arm + 2];
        let bounds = [upper, upper + fore];
        m.cylinder(rest[arm], Vec3::X * sx, upper + fore + hand, ARM_RADIUS, 20, 44, &|s| {
            chain_weights(&chain, &bounds, s)
        });
    }
    for up in [LEFT_UP_LEG, RIGHT_UP_LEG] {
        let thigh = rest[up].y - rest[up + 1].y;
        let shin = rest[up + 1].y - rest[up + 2].y;
        let chain = [up, up + 1];
        m.cylinder(rest[up], -Vec3::Y, thigh + shin, LEG_RADIUS, 20, 44, &|s| {
            chain_weights(&chain, &[thigh], s)
        });
        let foot = [up + 2, up + 3];
        let heel = rest[up + 2] + Vec3::new(0.0, -0.04, -0.04);
        m.cylinder(heel, Vec3::Z, 0.24, FOOT_RADIUS, 16, 10, &|s| {
            chain_weights(&foot, &[0.14], s)
        });
    }
    SkinnedCharacter::new(skeleton, m.vertices, m.normals, m.faces, m.influences)
}

fn sweep_angle(spec: &SceneSpec, t: usize) -> f64 {
    let u = t as f64 / (spec.frames - 1) as f64;
    let blend = 0.5 * (1.0 - (TAU * u).cos());
    (spec.sweep_min_deg + (spec.sweep_max_deg - spec.sweep_min_deg) * blend).to_radians()
}

/// Source motion: both arms sweep between the configured depressions while
/// the legs walk and the root moves forward.
pub fn scene_motion(spec: &SceneSpec) -> Result<Motion> {
    use joints::*;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase: f64 = rng.gen_range(0.0..TAU);
    let stride = 1.0 + rng.gen_range(-0.1..0.1);
    let k = 22;
    let mut rotations = Vec::with_capacity(spec.frames * k);
    let mut global = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let time = t as f64 / spec.frame_rate;
        let mut q = vec![Quat::IDENTITY; k];
        let sweep = sweep_angle(spec, t);
        q[LEFT_ARM] = Quat::from_axis_angle(Vec3::Z, -sweep);
        q[RIGHT_ARM] = Quat::from_axis_angle(Vec3::Z, sweep);
        let u = t as f64 / (spec.frames - 1) as f64;
        let flex = spec.elbow_flex_deg.to_radians() * 0.5 * (1.0 - (TAU * u).cos());
        q[LEFT_FORE_ARM] = Quat::from_axis_angle(Vec3::Y, -flex);
        q[RIGHT_FORE_ARM] = Quat::from_axis_angle(Vec3::Y, flex);
        let gait = TAU * stride * time + phase;
        for (up, sign) in [(LEFT_UP_LEG, 1.0), (RIGHT_UP_LEG, -1.0)] {
            let s = (gait).sin() * sign;
            q[up] = Quat::from_axis_angle(Vec3::X, -0.3 * s);
            q[up + 1] = Quat::from_axis_angle(Vec3::X, 0.4 * s.max(0.0));
        }
        rotations.extend(q);
        global.push([0.0, HIP_HEIGHT + 0.01 * (2.0 * gait).sin(), 0.6 * stride * time, 0.0]);
    }
    Motion::new(k, rotations, global, spec.frame_rate)
}

/// Build the scene described by `spec`; deterministic in its fields.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let source = humanoid_character(spec.torso_radius, spec.limb_length)?;
    let target_radius = spec.target_torso_radius();
    let target = if target_radius == spec.torso_radius {
        source.clone()
    } else {
        humanoid_character(target_radius, spec.limb_length)?
    };
    Ok(Scene {
        spec: spec.clone(),
        source_motion: scene_motion(spec)?,
        source,
        target,
        limbs: LimbConfig::default(),
        torso_center: Vec3::new(0.0, TORSO_CENTER_Y, 0.0),
        source_torso_radius: spec.torso_radius,
        target_torso_radius: target_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{character_height, joint_trajectories};

    #[test]
    fn fibonacci_points_are_unit_and_spread() {
        let pts = fibonacci_sphere(500);
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        let mean = pts.iter().fold(Vec3::ZERO, |a, p| a + *p) / 500.0;
        assert!(mean.norm() < 1e-2);
    }

    #[test]
    fn skeleton_layout() {
        let s = humanoid_skeleton(0.6);
        assert_eq!(s.len(), 22);
        assert_eq!(s.find("RightToeBase"), Some(joints::RIGHT_TOE_BASE));
        assert_eq!(s.find("LeftForeArm"), Some(joints::LEFT_FORE_ARM));
        let rest = s.rest_positions();
        assert!((rest[joints::LEFT_ARM] - Vec3::new(SHOULDER_X, SHOULDER_Y, 0.0)).norm() < 1e-12);
        assert!(character_height(&s).unwrap() > 1.4);
    }

    #[test]
    fn characters_are_valid_and_sized() {
        let c = humanoid_character(0.2, 0.6).unwrap();
        assert!(c.vertex_count() > 6000);
        let seg = LimbConfig::default().segment(&c).unwrap();
        assert_eq!(seg.limbs.len(), 4);
        for l in &seg.limbs {
            assert!(l.vertices.len() >= 400, "{} has {}", l.name, l.vertices.len());
            assert!(l.reference.len() >= 4000, "{} has {}", l.name, l.reference.len());
        }
    }

    #[test]
    fn arm_sweep_depression_follows_schedule() {
        let spec = SceneSpec::arm_sweep();
        let m = scene_motion(&spec).unwrap();
        let s = humanoid_skeleton(spec.limb_length);
        let traj = joint_trajectories(&s, &m).unwrap();
        for (t, frame) in traj.iter().enumerate() {
            let d = frame[joints::LEFT_FORE_ARM] - frame[joints::LEFT_ARM];
            let angle = (-d.y).atan2(d.x);
            assert!((angle - sweep_angle(&spec, t)).abs() < 1e-9);
        }
        assert!((sweep_angle(&spec, 0) - 20f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn determinism_and_validation() {
        let a = generate_scene(&SceneSpec::slim_to_fat()).unwrap();
        let b = generate_scene(&SceneSpec::slim_to_fat()).unwrap();
        assert_eq!(a, b);
        assert!(a.target_torso_radius > a.source_torso_radius);
        assert_eq!(a.source.skeleton, a.target.skeleton);
        let other = generate_scene(&SceneSpec {
            seed: 9,
            ..SceneSpec::slim_to_fat()
        })
        .unwrap();
        assert_ne!(a.source_motion, other.source_motion);
        assert!(matches!(SceneSpec::for_scene("nope"), Err(Error::UnknownScene(_))));
        let bad = SceneSpec {
            torso_radius: 2.0,
            ..SceneSpec::arm_sweep()
        };
        assert!(matches!(generate_scene(&bad), Err(Error::Config(_))));
        let inverted = SceneSpec {
            sweep_min_deg: 90.0,
            sweep_max_deg: 10.0,
            ..SceneSpec::arm_sweep()
        };
        assert!(generate_scene(&inverted).is_err());
    }
}
