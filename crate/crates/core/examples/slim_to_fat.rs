//! Retarget the synthetic slim-to-fat scene and print before/after metrics.

use retarget_core::{generate_scene, optimize_sequence, LossWeights, OptimizerConfig, SceneSpec};

fn main() -> retarget_core::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "final".into());
    let scene = generate_scene(&SceneSpec::slim_to_fat())?;
    let config = OptimizerConfig {
        weights: LossWeights::preset(&preset)
            .ok_or_else(|| retarget_core::Error::Config(format!("unknown preset `{preset}`")))?,
        ..OptimizerConfig::default()
    };
    let report = optimize_sequence(&scene.source_motion, &scene.source, &scene.target, &config)?;
    let (b, a) = (&report.metrics_before, &report.metrics_after);
    println!("preset          {preset}");
    println!("iterations      {} ({})", report.trace.len(), report.stop_reason);
    println!(
        "loss            {:.6} -> {:.6}",
        report.initial_loss().total,
        report.best_loss().total
    );
    println!("pen_rate        {:.3} -> {:.3}", b.pen_rate, a.pen_rate);
    println!(
        "curvature       {:.3e} -> {:.3e} (source {:.3e})",
        b.curvature, a.curvature, report.source_curvature
    );
    println!("mse             {:.3e}", a.mse);
    println!("con             {:?}", report.best_loss().con);
    println!("wall            {:.0} ms", report.wall_ms);
    Ok(())
}
