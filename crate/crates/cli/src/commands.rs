use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use retarget_core::io::{parse_bvh, parse_config, parse_obj, parse_weights, write_bvh, write_obj, write_weights};
use retarget_core::io::{ObjMesh, RunConfig, WeightsSidecar};
use retarget_core::metrics::{self, CSV_HEADER};
use retarget_core::skeleton::character_height;
use retarget_core::spatial_loss::benchmark_penetration;
use retarget_core::{
    generate_scene, optimize_sequence, Error, LimbConfig, LossReport, LossWeights, Motion, SampleCounts, SceneSpec,
    Skeleton, SkinnedCharacter,
};
use serde_json::{json, Value};

use crate::{BenchArgs, EvaluateArgs, Failure, RetargetArgs, SynthArgs};

type Outcome = Result<String, Failure>;

/// Divergence, non-finite values and I/O are runtime failures; everything
/// else is invalid input.
fn classify(context: &Path, e: Error) -> Failure {
    let message = format!("{}: {e}", context.display());
    match e {
        Error::Divergence { .. } | Error::Numeric { .. } | Error::Io(_) => Failure::Runtime(message),
        _ => Failure::Validation(message),
    }
}

fn core_failure(e: Error) -> Failure {
    match e {
        Error::Divergence { .. } | Error::Numeric { .. } | Error::Io(_) => Failure::Runtime(e.to_string()),
        _ => Failure::Validation(e.to_string()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_bvh(path: &Path) -> Result<(Skeleton, Motion), Failure> {
    parse_bvh(&read(path)?).map_err(|e| classify(path, e))
}

/// Skinned character from a rest-pose mesh and weight sidecar bound to
/// `skeleton`, plus the sidecar's limb table when it declares one.
fn load_character(
    skeleton: &Skeleton,
    obj: &Path,
    weights: &Path,
) -> Result<(SkinnedCharacter, Option<LimbConfig>), Failure> {
    let mesh = parse_obj(&read(obj)?).map_err(|e| classify(obj, e))?;
    let sidecar = parse_weights(&read(weights)?).map_err(|e| classify(weights, e))?;
    let influences = sidecar.influences(skeleton).map_err(|e| classify(weights, e))?;
    if influences.len() != mesh.vertices.len() {
        return Err(Failure::Validation(format!(
            "{} has {} weight rows but {} has {} vertices",
            weights.display(),
            influences.len(),
            obj.display(),
            mesh.vertices.len()
        )));
    }
    let character = SkinnedCharacter::new(skeleton.clone(), mesh.vertices, mesh.normals, mesh.faces, influences)
        .map_err(|e| classify(obj, e))?;
    Ok((character, sidecar.limb_config()))
}

fn loss_json(l: &LossReport) -> Value {
    json!({"rec": l.rec, "con": l.con, "lp": l.lp, "tc": l.tc, "j": l.j, "total": l.total})
}

pub fn retarget(a: RetargetArgs) -> Outcome {
    let (source_skeleton, source_motion) = load_bvh(&a.source_bvh)?;
    let target_skeleton = match &a.target_bvh {
        Some(p) => load_bvh(p)?.0,
        None => source_skeleton.clone(),
    };
    if target_skeleton.len() != source_skeleton.len() {
        return Err(Failure::Validation(format!(
            "source skeleton has {} joints, target {}",
            source_skeleton.len(),
            target_skeleton.len()
        )));
    }
    let (source_char, _) = load_character(&source_skeleton, &a.source_obj, &a.source_weights)?;
    let (target_char, limbs) = load_character(&target_skeleton, &a.target_obj, &a.target_weights)?;
    let run = match &a.config {
        Some(p) => parse_config(&read(p)?).map_err(|e| classify(p, e))?,
        None => RunConfig::default(),
    };
    let mut config = run.optimizer;
    if let Some(p) = a.preset {
        config.weights =
            LossWeights::preset(p.name()).ok_or_else(|| Failure::Validation(format!("unknown preset {}", p.name())))?;
    }
    if let Some(l) = limbs {
        config.limbs = l;
    }
    let report = optimize_sequence(&source_motion, &source_char, &target_char, &config).map_err(core_failure)?;
    let height = character_height(&target_skeleton).map_err(core_failure)?;
    write(
        &a.out_bvh,
        &write_bvh(&target_skeleton, &report.motion).map_err(core_failure)?,
    )?;
    let self_retarget = source_char == target_char;
    let doc = json!({
        "self_retarget": self_retarget,
        "target_height": height,
        "iterations": report.trace.len(),
        "best_iteration": report.best_iteration,
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "initial_loss": loss_json(report.initial_loss()),
        "best_loss": loss_json(report.best_loss()),
        "trace": report.trace.iter().map(|t| json!({
            "iteration": t.iteration,
            "loss": loss_json(&t.loss),
            "best_total": t.best_total,
        })).collect::<Vec<_>>(),
        "metrics_before": report.metrics_before,
        "metrics_after": report.metrics_after,
        "source_curvature": report.source_curvature,
        "constraint": report.constraint,
        "constraint_bound": config.constraint_bound,
        "constraint_within_bound": report.constraint_within_bound,
        "sampled_with_replacement": report.sampled_with_replacement,
        "weights": config.weights,
        "wall_ms": report.wall_ms,
    });
    write(
        &a.report,
        &serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?,
    )?;

    let (b, f) = (&report.metrics_before, &report.metrics_after);
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>14} {:>14}", "metric", "copy", "retargeted");
    let _ = writeln!(s, "{:<12} {:>14.6} {:>14.6}", "pen_rate", b.pen_rate, f.pen_rate);
    let _ = writeln!(s, "{:<12} {:>14.6e} {:>14.6e}", "curvature", b.curvature, f.curvature);
    let _ = writeln!(s, "{:<12} {:>14.6e} {:>14.6e}", "mse_local", b.mse_local, f.mse_local);
    let _ = writeln!(
        s,
        "{:<12} {:>14.6e} {:>14.6e}",
        "loss",
        report.initial_loss().total,
        report.best_loss().total
    );
    let _ = writeln!(
        s,
        "{} iterations ({}), {:.0} ms; wrote {} and {}",
        report.trace.len(),
        report.stop_reason,
        report.wall_ms,
        a.out_bvh.display(),
        a.report.display()
    );
    Ok(s)
}

pub fn evaluate(a: EvaluateArgs) -> Outcome {
    let start = Instant::now();
    let (pred_skeleton, pred) = load_bvh(&a.pred_bvh)?;
    let (gt_skeleton, gt) = load_bvh(&a.gt_bvh)?;
    if !pred_skeleton.same_topology(&gt_skeleton) {
        return Err(Failure::Validation(format!(
            "{} and {} have different skeleton topologies",
            a.pred_bvh.display(),
            a.gt_bvh.display()
        )));
    }
    if pred.frames() != gt.frames() {
        return Err(Failure::Validation(format!(
            "{} has {} frames, {} has {}",
            a.pred_bvh.display(),
            pred.frames(),
            a.gt_bvh.display(),
            gt.frames()
        )));
    }
    let (character, limbs) = load_character(&gt_skeleton, &a.obj, &a.weights)?;
    let segmentation = limbs
        .unwrap_or_default()
        .segment(&character)
        .map_err(|e| classify(&a.weights, e))?;
    let report = metrics::evaluate(&character, &segmentation, &pred, &gt, a.threshold).map_err(core_failure)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let sequence_id = a
        .pred_bvh
        .file_stem()
        .map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into_owned());
    let row = report.csv_row(&sequence_id, wall_ms);
    let csv_path = a.csv.clone().unwrap_or_else(|| a.report.with_extension("csv"));
    write(
        &a.report,
        &serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?,
    )?;
    write(&csv_path, &format!("{CSV_HEADER}\n{row}\n"))?;
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>14.6e}", "mse", report.mse);
    let _ = writeln!(s, "{:<10} {:>14.6e}", "mse_local", report.mse_local);
    let _ = writeln!(s, "{:<10} {:>14.6}", "pen_rate", report.pen_rate);
    let _ = writeln!(s, "{:<10} {:>14.6e}", "curvature", report.curvature);
    let _ = writeln!(s, "wrote {} and {}", a.report.display(), csv_path.display());
    Ok(s)
}

fn parse_sizes(text: &str) -> Result<Vec<SampleCounts>, Failure> {
    text.split(',')
        .map(|tier| {
            let bad = || Failure::Validation(format!("size tier `{tier}` is not QUERIESxREFERENCES"));
            let (q, r) = tier.trim().split_once(['x', 'X']).ok_or_else(bad)?;
            let query: usize = q.trim().parse().map_err(|_| bad())?;
            let reference: usize = r.trim().parse().map_err(|_| bad())?;
            if query == 0 || reference == 0 {
                return Err(Failure::Validation(format!("size tier `{tier}` has a zero count")));
            }
            Ok(SampleCounts { query, reference })
        })
        .collect()
}

pub fn bench(a: BenchArgs) -> Outcome {
    if a.repeats == 0 {
        return Err(Failure::Validation("--repeats must be at least 1".into()));
    }
    let tiers = parse_sizes(&a.sizes)?;
    let spec = SceneSpec::for_scene(&a.scene).map_err(core_failure)?;
    let scene = generate_scene(&spec).map_err(core_failure)?;
    let segmentation = scene.limbs.segment(&scene.target).map_err(core_failure)?;
    let mut csv = String::from("method,queries,references,mean_seconds,speedup,loss\n");
    let mut s = format!(
        "{:<12} {:>8} {:>10} {:>14} {:>9} {:>16}\n",
        "method", "queries", "references", "mean_seconds", "speedup", "loss"
    );
    for counts in tiers {
        let rows = benchmark_penetration(
            &scene.target,
            &segmentation,
            &scene.source_motion,
            counts,
            a.seed,
            a.repeats,
        )
        .map_err(core_failure)?;
        for r in rows {
            let method = match r.method {
                retarget_core::NeighborSearch::Tree => "tree",
                retarget_core::NeighborSearch::BruteForce => "brute_force",
            };
            let _ = writeln!(
                csv,
                "{method},{},{},{},{},{}",
                r.queries, r.references, r.mean_seconds, r.speedup, r.loss
            );
            let _ = writeln!(
                s,
                "{method:<12} {:>8} {:>10} {:>14.6} {:>9.2} {:>16.9e}",
                r.queries, r.references, r.mean_seconds, r.speedup, r.loss
            );
        }
    }
    write(&a.report, &csv)?;
    let _ = writeln!(s, "wrote {}", a.report.display());
    Ok(s)
}

/// Scene defaults for `scene`, overlaid with the keys of the params file.
fn scene_spec(scene: &str, params: Option<&PathBuf>) -> Result<SceneSpec, Failure> {
    let base = SceneSpec::for_scene(scene).map_err(core_failure)?;
    let Some(path) = params else { return Ok(base) };
    let overrides: Value =
        serde_json::from_str(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let Value::Object(overrides) = overrides else {
        return Err(Failure::Validation(format!(
            "{}: expected a JSON object",
            path.display()
        )));
    };
    if overrides.get("scene").is_some_and(|s| s.as_str() != Some(scene)) {
        return Err(Failure::Validation(format!(
            "{}: `scene` disagrees with --scene {scene}",
            path.display()
        )));
    }
    let mut merged = serde_json::to_value(&base).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Value::Object(m) = &mut merged {
        m.extend(overrides);
    }
    let spec: SceneSpec =
        serde_json::from_value(merged).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(|e| classify(path, e))?;
    Ok(spec)
}

fn mesh_of(character: &SkinnedCharacter) -> ObjMesh {
    ObjMesh {
        vertices: character.vertices().to_vec(),
        normals: character.normals().to_vec(),
        faces: character.faces().to_vec(),
    }
}

pub fn synth(a: SynthArgs) -> Outcome {
    let spec = scene_spec(&a.scene, a.params.as_ref())?;
    let scene = generate_scene(&spec).map_err(core_failure)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let weights = |c: &SkinnedCharacter| write_weights(&WeightsSidecar::from_character(c, &scene.limbs));
    let files = [
        (
            "source.bvh",
            write_bvh(&scene.source.skeleton, &scene.source_motion).map_err(core_failure)?,
        ),
        ("source.obj", write_obj(&mesh_of(&scene.source))),
        ("source_weights.json", weights(&scene.source).map_err(core_failure)?),
        ("target.obj", write_obj(&mesh_of(&scene.target))),
        ("target_weights.json", weights(&scene.target).map_err(core_failure)?),
    ];
    let mut s = String::new();
    for (name, contents) in &files {
        let path = a.out_dir.join(name);
        write(&path, contents)?;
        let _ = writeln!(s, "wrote {}", path.display());
    }
    let _ = writeln!(
        s,
        "scene {}: {} frames, torso radius {} -> {}",
        spec.scene, spec.frames, scene.source_torso_radius, scene.target_torso_radius
    );
    Ok(s)
}
