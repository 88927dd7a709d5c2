//! Python bindings: skeletons, motions, skinned characters, synthetic
//! scenes, the retargeting optimizer and the evaluation metrics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use retarget_core::io as rio;
use retarget_core::skinning::sample_points;
use retarget_core::{metrics, skeleton, spatial_loss, temporal_loss};
use retarget_core::{Error, LossWeights, OptimizerConfig, Quat, Vec3};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } | Error::Numeric { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn xyz(v: Vec3) -> [f64; 3] {
    v.to_array()
}

/// Joint hierarchy with rest-pose offsets.
#[pyclass(module = "retarget", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Skeleton {
    inner: retarget_core::Skeleton,
}

#[pymethods]
impl Skeleton {
    /// `parents[k]` is `None` for the root or an index below `k`.
    #[new]
    fn new(names: Vec<String>, parents: Vec<Option<usize>>, offsets: Vec<[f64; 3]>) -> PyResult<Self> {
        if names.len() != parents.len() || names.len() != offsets.len() {
            return Err(PyValueError::new_err("names, parents and offsets differ in length"));
        }
        let joints = names
            .into_iter()
            .zip(parents)
            .zip(offsets)
            .map(|((n, p), o)| retarget_core::Joint::new(n, p, Vec3::from_array(o)))
            .collect();
        Ok(Skeleton {
            inner: retarget_core::Skeleton::new(joints).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().map(str::to_string).collect()
    }

    #[getter]
    fn parents(&self) -> Vec<Option<usize>> {
        (0..self.inner.len()).map(|k| self.inner.parent(k)).collect()
    }

    #[getter]
    fn offsets(&self) -> Vec<[f64; 3]> {
        (0..self.inner.len()).map(|k| xyz(self.inner.offset(k))).collect()
    }

    fn height(&self) -> PyResult<f64> {
        skeleton::character_height(&self.inner).map_err(to_py)
    }

    fn rest_positions(&self) -> Vec<[f64; 3]> {
        self.inner.rest_positions().into_iter().map(xyz).collect()
    }

    fn __repr__(&self) -> String {
        format!("Skeleton({} joints)", self.inner.len())
    }
}

/// Per-frame local joint rotations (w, x, y, z) and root channels.
#[pyclass(module = "retarget", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Motion {
    inner: retarget_core::Motion,
}

#[pymethods]
impl Motion {
    /// `rotations[t][k]` is a unit quaternion `[w, x, y, z]`; `translations[t]`
    /// is the root position.
    #[new]
    #[pyo3(signature = (rotations, translations, frame_rate = 30.0))]
    fn new(rotations: Vec<Vec<[f64; 4]>>, translations: Vec<[f64; 3]>, frame_rate: f64) -> PyResult<Self> {
        let joints = rotations.first().map_or(0, Vec::len);
        if rotations.iter().any(|r| r.len() != joints) {
            return Err(PyValueError::new_err("every frame needs the same number of joints"));
        }
        let flat = rotations.into_iter().flatten().map(Quat::from_array).collect();
        let global = translations.into_iter().map(|[x, y, z]| [x, y, z, 0.0]).collect();
        Ok(Motion {
            inner: retarget_core::Motion::new(joints, flat, global, frame_rate).map_err(to_py)?,
        })
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn joint_count(&self) -> usize {
        self.inner.joint_count()
    }

    #[getter]
    fn frame_rate(&self) -> f64 {
        self.inner.frame_rate
    }

    fn rotations(&self) -> Vec<Vec<[f64; 4]>> {
        (0..self.inner.frames())
            .map(|t| self.inner.frame_rotations(t).iter().map(|q| q.to_array()).collect())
            .collect()
    }

    fn translations(&self) -> Vec<[f64; 3]> {
        (0..self.inner.frames())
            .map(|t| xyz(self.inner.translation(t)))
            .collect()
    }

    /// World joint positions, `[frame][joint]`.
    fn joint_positions(&self, skeleton: &Skeleton) -> PyResult<Vec<Vec<[f64; 3]>>> {
        let frames = skeleton::joint_trajectories(&skeleton.inner, &self.inner).map_err(to_py)?;
        Ok(frames.into_iter().map(|f| f.into_iter().map(xyz).collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Motion({} frames x {} joints)",
            self.inner.frames(),
            self.inner.joint_count()
        )
    }
}

/// Rest-pose mesh bound to a skeleton with linear blend skinning.
#[pyclass(module = "retarget", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Character {
    inner: retarget_core::SkinnedCharacter,
    limbs: Option<retarget_core::LimbConfig>,
}

#[pymethods]
impl Character {
    /// Build from OBJ text and a weights sidecar (JSON text).
    #[staticmethod]
    fn from_files(skeleton: &Skeleton, obj: &str, weights: &str) -> PyResult<Self> {
        let mesh = rio::parse_obj(obj).map_err(to_py)?;
        let sidecar = rio::parse_weights(weights).map_err(to_py)?;
        let influences = sidecar.influences(&skeleton.inner).map_err(to_py)?;
        let inner = retarget_core::SkinnedCharacter::new(
            skeleton.inner.clone(),
            mesh.vertices,
            mesh.normals,
            mesh.faces,
            influences,
        )
        .map_err(to_py)?;
        Ok(Character {
            inner,
            limbs: sidecar.limb_config(),
        })
    }

    #[getter]
    fn skeleton(&self) -> Skeleton {
        Skeleton {
            inner: self.inner.skeleton.clone(),
        }
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices().iter().map(|v| xyz(*v)).collect()
    }

    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces().to_vec()
    }

    /// Skinned vertex positions at `frame`.
    fn deform(&self, motion: &Motion, frame: usize) -> PyResult<Vec<[f64; 3]>> {
        let mesh = retarget_core::skinning::lbs_deform(&self.inner, &motion.inner, frame).map_err(to_py)?;
        Ok(mesh.vertices.into_iter().map(xyz).collect())
    }

    fn to_obj(&self) -> String {
        rio::write_obj(&rio::ObjMesh {
            vertices: self.inner.vertices().to_vec(),
            normals: self.inner.normals().to_vec(),
            faces: self.inner.faces().to_vec(),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Character({} vertices, {} joints)",
            self.inner.vertex_count(),
            self.inner.skeleton.len()
        )
    }
}

impl Character {
    fn limb_config(&self) -> retarget_core::LimbConfig {
        self.limbs.clone().unwrap_or_default()
    }
}

/// Synthetic source/target pair with a source motion.
#[pyclass(module = "retarget", frozen, get_all)]
struct Scene {
    name: String,
    source: Py<Character>,
    target: Py<Character>,
    source_motion: Py<Motion>,
    source_torso_radius: f64,
    target_torso_radius: f64,
}

/// Optimizer outcome.
#[pyclass(module = "retarget", frozen, get_all)]
struct RetargetResult {
    motion: Py<Motion>,
    /// Total loss per iteration.
    trace: Vec<f64>,
    best_iteration: usize,
    converged: bool,
    stop_reason: String,
    pen_rate_before: f64,
    pen_rate_after: f64,
    curvature_before: f64,
    curvature_after: f64,
    source_curvature: f64,
    mse_local_after: f64,
    constraint: f64,
    constraint_within_bound: bool,
}

/// Parse BVH text into a skeleton and motion.
#[pyfunction]
fn parse_bvh(text: &str) -> PyResult<(Skeleton, Motion)> {
    let (s, m) = rio::parse_bvh(text).map_err(to_py)?;
    Ok((Skeleton { inner: s }, Motion { inner: m }))
}

#[pyfunction]
fn write_bvh(skeleton: &Skeleton, motion: &Motion) -> PyResult<String> {
    rio::write_bvh(&skeleton.inner, &motion.inner).map_err(to_py)
}

/// Generate `name` (`arm_sweep` or `slim_to_fat`) with optional parameter
/// overrides given as a JSON object string.
#[pyfunction]
#[pyo3(signature = (name, params = None))]
fn generate_scene(py: Python<'_>, name: &str, params: Option<&str>) -> PyResult<Scene> {
    let base = retarget_core::SceneSpec::for_scene(name).map_err(to_py)?;
    let spec = match params {
        None => base,
        Some(text) => {
            let mut merged = serde_json::to_value(&base).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            let overrides: serde_json::Value =
                serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
            match (&mut merged, overrides) {
                (serde_json::Value::Object(m), serde_json::Value::Object(o)) => m.extend(o),
                _ => return Err(PyValueError::new_err("params must be a JSON object")),
            }
            serde_json::from_value(merged).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
    };
    let scene = retarget_core::generate_scene(&spec).map_err(to_py)?;
    let wrap = |c: retarget_core::SkinnedCharacter| Character {
        inner: c,
        limbs: Some(scene.limbs.clone()),
    };
    Ok(Scene {
        name: spec.scene.clone(),
        source: Py::new(py, wrap(scene.source.clone()))?,
        target: Py::new(py, wrap(scene.target.clone()))?,
        source_motion: Py::new(
            py,
            Motion {
                inner: scene.source_motion.clone(),
            },
        )?,
        source_torso_radius: scene.source_torso_radius,
        target_torso_radius: scene.target_torso_radius,
    })
}

/// Optimize a residual motion that moves `source_motion` onto `target`.
/// `config` is run-configuration JSON (the `optimizer` section is used);
/// `preset` (`final` or `curv`) overrides its loss weights.
#[pyfunction(name = "retarget")]
#[pyo3(signature = (source_motion, source, target, config = None, preset = None))]
fn retarget_motion(
    py: Python<'_>,
    source_motion: &Motion,
    source: &Character,
    target: &Character,
    config: Option<&str>,
    preset: Option<&str>,
) -> PyResult<RetargetResult> {
    let mut cfg: OptimizerConfig = match config {
        Some(text) => rio::parse_config(text).map_err(to_py)?.optimizer,
        None => OptimizerConfig::default(),
    };
    if let Some(p) = preset {
        cfg.weights = LossWeights::preset(p).ok_or_else(|| PyValueError::new_err(format!("unknown preset `{p}`")))?;
    }
    if let Some(l) = &target.limbs {
        cfg.limbs = l.clone();
    }
    let (m, s, t) = (&source_motion.inner, &source.inner, &target.inner);
    let report = py
        .detach(|| retarget_core::optimize_sequence(m, s, t, &cfg))
        .map_err(to_py)?;
    Ok(RetargetResult {
        trace: report.trace.iter().map(|e| e.loss.total).collect(),
        best_iteration: report.best_iteration,
        converged: report.converged,
        stop_reason: report.stop_reason.clone(),
        pen_rate_before: report.metrics_before.pen_rate,
        pen_rate_after: report.metrics_after.pen_rate,
        curvature_before: report.metrics_before.curvature,
        curvature_after: report.metrics_after.curvature,
        source_curvature: report.source_curvature,
        mse_local_after: report.metrics_after.mse_local,
        constraint: report.constraint,
        constraint_within_bound: report.constraint_within_bound,
        motion: Py::new(py, Motion { inner: report.motion })?,
    })
}

/// MSE, root-pinned MSE, penetration rate and curvature of `pred` against
/// `gt` on `character`.
#[pyfunction]
#[pyo3(signature = (character, pred, gt, threshold = 0.0))]
fn evaluate(character: &Character, pred: &Motion, gt: &Motion, threshold: f64) -> PyResult<(f64, f64, f64, f64)> {
    let seg = character.limb_config().segment(&character.inner).map_err(to_py)?;
    let r = metrics::evaluate(&character.inner, &seg, &pred.inner, &gt.inner, threshold).map_err(to_py)?;
    Ok((r.mse, r.mse_local, r.pen_rate, r.curvature))
}

/// Limb penetration loss with `queries`/`references` sampled per limb.
#[pyfunction]
#[pyo3(signature = (character, motion, queries = 400, references = 4000, seed = 0, brute_force = false))]
fn penetration_loss(
    character: &Character,
    motion: &Motion,
    queries: usize,
    references: usize,
    seed: u64,
    brute_force: bool,
) -> PyResult<f64> {
    let seg = character.limb_config().segment(&character.inner).map_err(to_py)?;
    let counts = retarget_core::SampleCounts {
        query: queries,
        reference: references,
    };
    let sample = sample_points(&character.inner, &seg, counts, seed).map_err(to_py)?;
    let search = if brute_force {
        retarget_core::NeighborSearch::BruteForce
    } else {
        retarget_core::NeighborSearch::Tree
    };
    Ok(
        spatial_loss::limb_penetration_loss_with(&character.inner, &seg, &sample, &motion.inner, search)
            .map_err(to_py)?
            .total,
    )
}

#[pyfunction]
fn temporal_consistency_loss(
    source_skeleton: &Skeleton,
    source: &Motion,
    target_skeleton: &Skeleton,
    target: &Motion,
) -> PyResult<f64> {
    temporal_loss::temporal_consistency_loss(
        &source_skeleton.inner,
        &source.inner,
        &target_skeleton.inner,
        &target.inner,
    )
    .map_err(to_py)
}

#[pymodule]
fn retarget(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Skeleton>()?;
    m.add_class::<Motion>()?;
    m.add_class::<Character>()?;
    m.add_class::<Scene>()?;
    m.add_class::<RetargetResult>()?;
    m.add_function(wrap_pyfunction!(parse_bvh, m)?)?;
    m.add_function(wrap_pyfunction!(write_bvh, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(retarget_motion, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(penetration_loss, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_consistency_loss, m)?)?;
    Ok(())
}
