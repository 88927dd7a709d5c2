#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retarget_core::optimizer::Correspondences;
use retarget_core::{
    generate_scene, LossWeights, NeighborSearch, OptimizerConfig, Quat, ResidualMotion, RetargetProblem, SampleCounts,
    Scene, SceneSpec,
};

pub fn small_config(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        samples: SampleCounts {
            query: 40,
            reference: 400,
        },
        seed,
        ..OptimizerConfig::default()
    }
}

/// Random unnormalized residual near the identity.
pub fn random_residual(frames: usize, joints: usize, spread: f64, rng: &mut ChaCha8Rng) -> ResidualMotion {
    let params = (0..frames * joints)
        .map(|_| {
            let q = Quat::new(
                1.0 + rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
            );
            q.scale(rng.gen_range(0.5..2.0))
        })
        .collect();
    ResidualMotion::from_params(frames, joints, params).unwrap()
}

pub struct GradientCase {
    pub analytic: f64,
    pub finite_difference: f64,
    pub lp: f64,
}

impl GradientCase {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.finite_difference.abs()).max(1e-12);
        (self.analytic - self.finite_difference).abs() / scale
    }
}

/// Scene `i` of the randomized gradient suite: alternating self-retarget
/// and slim-to-fat scenes with penetration, few frames, random residual.
pub fn gradient_case(i: u64, step: f64) -> GradientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
    let frames = rng.gen_range(3..6);
    let spec = if i % 2 == 0 {
        SceneSpec {
            sweep_min_deg: 70.0,
            sweep_max_deg: 112.0,
            frames,
            seed: i,
            ..SceneSpec::arm_sweep()
        }
    } else {
        SceneSpec {
            frames,
            seed: i,
            ..SceneSpec::slim_to_fat()
        }
    };
    let scene: Scene = generate_scene(&spec).unwrap();
    let problem = RetargetProblem::build(&scene.source_motion, &scene.source, &scene.target, &small_config(i)).unwrap();
    let residual = random_residual(frames, 22, 0.15, &mut rng);
    let weights = LossWeights {
        rec: rng.gen_range(0.05..1.0),
        con: rng.gen_range(0.05..1.0),
        lp: rng.gen_range(1.0..10.0),
        tc: rng.gen_range(0.5..2.0),
        j: rng.gen_range(0.5..2.0),
    };
    let corr: Correspondences = problem.correspondences(&residual, NeighborSearch::Tree).unwrap();
    let (report, grad) = problem.evaluate(&residual, &corr, &weights, true).unwrap();
    let grad = grad.unwrap();
    let dir: Vec<[f64; 4]> = (0..grad.len())
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let analytic: f64 = grad
        .iter()
        .zip(&dir)
        .map(|(g, d)| g.to_array().iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let shifted = |sign: f64| {
        let params = residual
            .params()
            .iter()
            .zip(&dir)
            .map(|(q, d)| {
                let a = q.to_array();
                Quat::new(
                    a[0] + sign * step * d[0],
                    a[1] + sign * step * d[1],
                    a[2] + sign * step * d[2],
                    a[3] + sign * step * d[3],
                )
            })
            .collect();
        let r = ResidualMotion::from_params(frames, 22, params).unwrap();
        problem.evaluate(&r, &corr, &weights, false).unwrap().0.total
    };
    let finite_difference = (shifted(1.0) - shifted(-1.0)) / (2.0 * step);
    GradientCase {
        analytic,
        finite_difference,
        lp: report.lp.unwrap_or(0.0),
    }
}
