//! Limb penetration loss over a motion sequence.
//!
//! For every frame the sampled query vertices of each limb and that limb's
//! sampled reference vertices are posed by linear blend skinning. Each query
//! is matched to its nearest posed reference vertex and scored by the signed
//! depth against that vertex's posed normal; positive depths are averaged
//! over the total query count and then over frames. Each limb's reference
//! set contains the body and the other limbs, so limb-limb contact counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::proximity::{nearest_brute_force, signed_depth_against, ProximityIndex};
use crate::skeleton::{pose_from_rotations, Motion, Pose};
use crate::skinning::{LimbSegmentation, PenetrationSample, SkinnedCharacter};

/// How nearest reference vertices are located.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSearch {
    #[default]
    Tree,
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenetrationBreakdown {
    /// `[limb][frame]` mean positive depth over that limb's queries.
    pub per_limb_frame: Vec<Vec<f64>>,
    pub total: f64,
    /// Query vertices with positive depth, summed over frames.
    pub penetrating: usize,
    pub queries_per_frame: usize,
}

/// Posed positions and normals of one limb's sampled vertices.
pub(crate) struct PosedLimb {
    pub queries: Vec<Vec3>,
    pub references: Vec<Vec3>,
    pub reference_normals: Vec<Vec3>,
}

/// Posed samples of every limb; each mesh vertex is skinned at most once.
pub(crate) fn pose_limbs(character: &SkinnedCharacter, pose: &Pose, sample: &PenetrationSample) -> Vec<PosedLimb> {
    let n = character.vertex_count();
    let mut positions: Vec<Option<Vec3>> = vec![None; n];
    let mut normals: Vec<Option<Vec3>> = vec![None; n];
    let mut out = Vec::with_capacity(sample.limbs.len());
    for limb in &sample.limbs {
        let mut position = |i: usize| *positions[i].get_or_insert_with(|| character.deform_vertex(pose, i));
        let queries = limb.query.indices.iter().map(|&i| position(i)).collect();
        let references = limb.reference.indices.iter().map(|&i| position(i)).collect();
        let reference_normals = limb
            .reference
            .indices
            .iter()
            .map(|&i| *normals[i].get_or_insert_with(|| character.deform_normal(pose, i)))
            .collect();
        out.push(PosedLimb {
            queries,
            references,
            reference_normals,
        });
    }
    out
}

/// Nearest reference slot (position within the limb's reference sample) for
/// every query of every limb.
pub(crate) fn match_queries(posed: &[PosedLimb], search: NeighborSearch) -> Result<Vec<Vec<usize>>> {
    posed
        .iter()
        .map(|limb| match search {
            NeighborSearch::Tree => {
                let index = ProximityIndex::build(limb.references.clone(), limb.reference_normals.clone())?;
                Ok(limb.queries.iter().map(|q| index.nearest(*q).0).collect())
            }
            NeighborSearch::BruteForce => {
                if limb.references.is_empty() {
                    return Err(Error::EmptyIndex("no reference points".into()));
                }
                Ok(limb
                    .queries
                    .iter()
                    .map(|q| nearest_brute_force(&limb.references, *q).0)
                    .collect())
            }
        })
        .collect()
}

struct FrameResult {
    per_limb_sum: Vec<f64>,
    penetrating: usize,
}

fn check_sample(segmentation: &LimbSegmentation, sample: &PenetrationSample) -> Result<()> {
    if sample.limbs.len() != segmentation.limbs.len() {
        return Err(Error::Shape(format!(
            "sample has {} limbs, segmentation {}",
            sample.limbs.len(),
            segmentation.limbs.len()
        )));
    }
    for (s, l) in sample.limbs.iter().zip(&segmentation.limbs) {
        if s.query.indices.is_empty() {
            return Err(Error::Sampling(format!("limb `{}` has an empty query sample", l.name)));
        }
        if s.reference.indices.is_empty() {
            return Err(Error::Sampling(format!(
                "limb `{}` has an empty reference sample",
                l.name
            )));
        }
    }
    Ok(())
}

/// Penetration loss with tree-indexed neighbour search.
pub fn limb_penetration_loss(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    sample: &PenetrationSample,
    motion: &Motion,
) -> Result<PenetrationBreakdown> {
    limb_penetration_loss_with(character, segmentation, sample, motion, NeighborSearch::Tree)
}

pub fn limb_penetration_loss_with(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    sample: &PenetrationSample,
    motion: &Motion,
    search: NeighborSearch,
) -> Result<PenetrationBreakdown> {
    motion.check_skeleton(&character.skeleton)?;
    check_sample(segmentation, sample)?;
    let frames = motion.frames();
    if frames == 0 {
        return Err(Error::Motion("penetration loss needs at least one frame".into()));
    }
    let results: Vec<FrameResult> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let pose = pose_from_rotations(&character.skeleton, motion.frame_rotations(t), motion.translation(t));
            let posed = pose_limbs(character, &pose, sample);
            let matches = match_queries(&posed, search)?;
            let mut per_limb_sum = Vec::with_capacity(posed.len());
            let mut penetrating = 0;
            for (limb, m) in posed.iter().zip(&matches) {
                let mut sum = 0.0;
                for (q, &r) in limb.queries.iter().zip(m) {
                    let phi = signed_depth_against(*q, limb.references[r], limb.reference_normals[r], r).depth;
                    if !phi.is_finite() {
                        return Err(Error::Numeric {
                            term: "limb penetration".into(),
                        });
                    }
                    if phi > 0.0 {
                        sum += phi;
                        penetrating += 1;
                    }
                }
                per_limb_sum.push(sum);
            }
            Ok(FrameResult {
                per_limb_sum,
                penetrating,
            })
        })
        .collect::<Result<_>>()?;

    let total_queries = sample.total_queries();
    let mut per_limb_frame = vec![vec![0.0; frames]; sample.limbs.len()];
    let mut total = 0.0;
    let mut penetrating = 0;
    for (t, r) in results.iter().enumerate() {
        for (l, s) in r.per_limb_sum.iter().enumerate() {
            per_limb_frame[l][t] = s / sample.limbs[l].query.indices.len() as f64;
        }
        total += r.per_limb_sum.iter().sum::<f64>() / total_queries as f64;
        penetrating += r.penetrating;
    }
    Ok(PenetrationBreakdown {
        per_limb_frame,
        total: total / frames as f64,
        penetrating,
        queries_per_frame: total_queries,
    })
}

/// Count of query vertices with depth above `threshold`, and the total query
/// count, over all frames.
pub(crate) fn count_penetrating(
    character: &SkinnedCharacter,
    sample: &PenetrationSample,
    motion: &Motion,
    threshold: f64,
    search: NeighborSearch,
) -> Result<(usize, usize)> {
    motion.check_skeleton(&character.skeleton)?;
    let counts: Vec<usize> = (0..motion.frames())
        .into_par_iter()
        .map(|t| {
            let pose = pose_from_rotations(&character.skeleton, motion.frame_rotations(t), motion.translation(t));
            let posed = pose_limbs(character, &pose, sample);
            let matches = match_queries(&posed, search)?;
            Ok(posed
                .iter()
                .zip(&matches)
                .map(|(limb, m)| {
                    limb.queries
                        .iter()
                        .zip(m)
                        .filter(|(q, &r)| {
                            signed_depth_against(**q, limb.references[r], limb.reference_normals[r], r).depth
                                > threshold
                        })
                        .count()
                })
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok((counts.iter().sum(), sample.total_queries() * motion.frames()))
}

/// One benchmark measurement of the penetration loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: NeighborSearch,
    /// Per limb.
    pub queries: usize,
    /// Per limb.
    pub references: usize,
    pub mean_seconds: f64,
    /// Brute-force time over this method's time.
    pub speedup: f64,
    pub loss: f64,
}

/// Time full penetration-loss evaluations with brute-force and tree search
/// on identical samples.
pub fn benchmark_penetration(
    character: &SkinnedCharacter,
    segmentation: &LimbSegmentation,
    motion: &Motion,
    counts: crate::skinning::SampleCounts,
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::Config("benchmark repeats must be at least 1".into()));
    }
    let sample = crate::skinning::sample_points(character, segmentation, counts, seed)?;
    let mut rows: Vec<BenchRow> = Vec::with_capacity(2);
    for method in [NeighborSearch::BruteForce, NeighborSearch::Tree] {
        let mut loss = 0.0;
        let start = std::time::Instant::now();
        for _ in 0..repeats {
            loss = limb_penetration_loss_with(character, segmentation, &sample, motion, method)?.total;
        }
        let mean_seconds = start.elapsed().as_secs_f64() / repeats as f64;
        rows.push(BenchRow {
            method,
            queries: counts.query,
            references: counts.reference,
            mean_seconds,
            speedup: rows.first().map_or(1.0, |b| b.mean_seconds / mean_seconds),
            loss,
        });
    }
    Ok(rows)
}
