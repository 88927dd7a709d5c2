mod common;

use retarget_core::{generate_scene, optimize_sequence, Error, LossWeights, OptimizerConfig, SceneSpec};

fn scene(spec: SceneSpec) -> retarget_core::Scene {
    generate_scene(&SceneSpec { frames: 6, ..spec }).unwrap()
}

fn quick(iterations: usize) -> OptimizerConfig {
    OptimizerConfig {
        iterations,
        ..common::small_config(3)
    }
}

#[test]
fn zero_weights_stop_after_one_iteration_with_identity_residual() {
    let s = scene(SceneSpec::slim_to_fat());
    let config = OptimizerConfig {
        weights: LossWeights {
            rec: 0.0,
            con: 0.0,
            lp: 0.0,
            tc: 0.0,
            j: 0.0,
        },
        ..quick(50)
    };
    let r = optimize_sequence(&s.source_motion, &s.source, &s.target, &config).unwrap();
    assert_eq!(r.trace.len(), 1);
    assert!(r.converged);
    assert!(r.residual.params().iter().all(|q| q.to_array() == [1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn exact_self_retarget_start_is_kept() {
    let s = scene(SceneSpec {
        sweep_min_deg: 0.0,
        sweep_max_deg: 60.0,
        ..SceneSpec::arm_sweep()
    });
    let config = OptimizerConfig {
        weights: LossWeights {
            lp: 0.0,
            ..LossWeights::FINAL
        },
        ..quick(50)
    };
    let r = optimize_sequence(&s.source_motion, &s.source, &s.target, &config).unwrap();
    assert!(r.converged, "{}", r.stop_reason);
    assert_eq!(r.trace.len(), 1);
    assert!(r.initial_loss().rec.is_some());
    assert_eq!(r.metrics_after.mse_local, 0.0);
}

#[test]
fn huge_steps_diverge() {
    let s = scene(SceneSpec::slim_to_fat());
    let config = OptimizerConfig {
        step_size: 5.0,
        ..quick(30)
    };
    match optimize_sequence(&s.source_motion, &s.source, &s.target, &config) {
        Err(Error::Divergence { loss, initial, .. }) => assert!(loss > 10.0 * initial),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.stop_reason)),
    }
}

#[test]
fn trace_invariants_and_determinism() {
    let s = scene(SceneSpec::slim_to_fat());
    let config = quick(40);
    let a = optimize_sequence(&s.source_motion, &s.source, &s.target, &config).unwrap();
    let b = optimize_sequence(&s.source_motion, &s.source, &s.target, &config).unwrap();
    assert_eq!(a.motion, b.motion);
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.len() <= config.iterations);
    assert!(a.best_loss().total <= a.initial_loss().total || !a.converged);
    assert!(a.trace.windows(2).all(|w| w[1].best_total <= w[0].best_total));
    assert_eq!(a.best_loss().total, a.trace.last().unwrap().best_total);
    assert!(a.initial_loss().rec.is_none());
    assert!(a.metrics_after.pen_rate < a.metrics_before.pen_rate);
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let s = scene(SceneSpec::slim_to_fat());
    for config in [
        OptimizerConfig {
            iterations: 0,
            ..quick(1)
        },
        OptimizerConfig {
            step_size: f64::NAN,
            ..quick(1)
        },
        OptimizerConfig {
            refresh_every: 0,
            ..quick(1)
        },
    ] {
        assert!(matches!(
            optimize_sequence(&s.source_motion, &s.source, &s.target, &config),
            Err(Error::Config(_))
        ));
    }
}
