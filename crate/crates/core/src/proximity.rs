//! Exact nearest-neighbour search over posed reference points and the
//! normal-based signed depth used by the penetration loss.
//!
//! Ties in distance are broken towards the lowest point index, and both the
//! tree and the brute-force scan use [`Vec3::distance_squared`], so the two
//! routes return identical answers bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Static k-d tree over a reference point set with per-point normals.
#[derive(Clone, Debug)]
pub struct ProximityIndex {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    /// Points in tree order with their original indices.
    sorted: Vec<(Vec3, u32)>,
    nodes: Vec<Node>,
}

/// Nearest reference point for a query and the signed depth against it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedDepthResult {
    pub nearest: usize,
    /// `query - nearest`.
    pub offset: Vec3,
    /// Positive inside the surface.
    pub depth: f64,
}

impl ProximityIndex {
    pub fn build(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyIndex("no reference points".into()));
        }
        if normals.len() != points.len() {
            return Err(Error::EmptyIndex(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric {
                term: "proximity index points".into(),
            });
        }
        let mut sorted: Vec<(Vec3, u32)> = points.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        let (lo, hi) = points.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)),
        );
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&mut sorted, 0, lo, hi, &mut nodes);
        Ok(ProximityIndex {
            points,
            normals,
            sorted,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        (best.0 as usize, best.1)
    }

    fn search(&self, node: usize, q: Vec3, best: &mut (u32, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &(p, i) in &self.sorted[start as usize..end as usize] {
                    let d = q.distance_squared(p);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, best);
                // `<=` keeps equal-distance candidates reachable for the tie-break.
                if diff * diff <= best.1 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }

    pub fn signed_depth(&self, query: Vec3) -> SignedDepthResult {
        let (nearest, _) = self.nearest(query);
        signed_depth_against(query, self.points[nearest], self.normals[nearest], nearest)
    }
}

/// Median split along the widest axis of the (loose) cell bounds.
fn build_node(items: &mut [(Vec3, u32)], base: u32, lo: Vec3, hi: Vec3, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    let len = items.len();
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: base,
            end: base + len as u32,
        });
        return id;
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = len / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let value = items[mid].0[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (mut left_hi, mut right_lo) = (hi, lo);
    set_axis(&mut left_hi, axis, value);
    set_axis(&mut right_lo, axis, value);
    let (l, r) = items.split_at_mut(mid);
    let left = build_node(l, base, lo, left_hi, nodes);
    let right = build_node(r, base + mid as u32, right_lo, hi, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    id
}

fn set_axis(v: &mut Vec3, axis: usize, value: f64) {
    match axis {
        0 => v.x = value,
        1 => v.y = value,
        _ => v.z = value,
    }
}

/// `phi = -(query - reference) . normal`, positive when the query lies
/// behind an outward-facing reference normal.
#[inline]
pub fn signed_depth_against(query: Vec3, reference: Vec3, normal: Vec3, nearest: usize) -> SignedDepthResult {
    let offset = query - reference;
    SignedDepthResult {
        nearest,
        offset,
        depth: -offset.dot(normal),
    }
}

/// O(N) scan with the same distance arithmetic and tie-break as the tree.
pub fn nearest_brute_force(points: &[Vec3], query: Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = query.distance_squared(*p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn build_index(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<ProximityIndex> {
    ProximityIndex::build(points, normals)
}

pub fn signed_depth(index: &ProximityIndex, query: Vec3) -> SignedDepthResult {
    index.signed_depth(query)
}

/// Mean of the two directed mean-squared nearest-neighbour distances.
pub fn chamfer_distance(set_a: &[Vec3], set_b: &[Vec3]) -> Result<f64> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::EmptyIndex("chamfer distance of an empty set".into()));
    }
    let directed = |from: &[Vec3], to: &[Vec3]| -> Result<f64> {
        let index = ProximityIndex::build(to.to_vec(), vec![Vec3::ZERO; to.len()])?;
        Ok(from.iter().map(|p| index.nearest(*p).1).sum::<f64>() / from.len() as f64)
    };
    Ok(0.5 * (directed(set_a, set_b)? + directed(set_b, set_a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn single_point_index() {
        let idx = build_index(vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::Y]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for q in random_points(&mut rng, 20) {
            assert_eq!(idx.nearest(q).0, 0);
        }
    }

    #[test]
    fn empty_or_mismatched_input_is_rejected() {
        assert!(build_index(vec![], vec![]).is_err());
        assert!(build_index(vec![Vec3::ZERO], vec![]).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 1000);
        let idx = build_index(pts.clone(), vec![Vec3::Z; pts.len()]).unwrap();
        for q in random_points(&mut rng, 1000) {
            assert_eq!(idx.nearest(q), nearest_brute_force(&pts, q));
        }
    }

    #[test]
    fn duplicates_resolve_to_lowest_index() {
        let mut pts = vec![Vec3::new(5.0, 5.0, 5.0); 30];
        pts.extend((0..30).map(|i| Vec3::new(i as f64, 0.0, 0.0)));
        pts.push(Vec3::new(5.0, 5.0, 5.0));
        let idx = build_index(pts.clone(), vec![Vec3::Z; pts.len()]).unwrap();
        assert_eq!(idx.nearest(Vec3::new(5.0, 5.0, 5.1)).0, 0);
        // Query equidistant from x=3 (index 33) and x=4 (index 34).
        assert_eq!(idx.nearest(Vec3::new(3.5, 0.0, 0.0)).0, 33);
    }

    #[test]
    fn signed_depth_on_sampled_sphere() {
        let pts = crate::scene::fibonacci_sphere(10_000);
        let idx = build_index(pts.clone(), pts.clone()).unwrap();
        let inside = signed_depth(&idx, Vec3::new(0.5, 0.0, 0.0));
        assert!((inside.depth - 0.5).abs() < 0.02, "{}", inside.depth);
        let outside = signed_depth(&idx, Vec3::new(0.0, 2.0, 0.0));
        assert!((outside.depth + 1.0).abs() < 0.02, "{}", outside.depth);
        let on = signed_depth(&idx, pts[123]);
        assert_eq!(on.depth, 0.0);
        assert_eq!(on.nearest, 123);
        assert!(inside.depth.abs() <= inside.offset.norm() + 1e-9);
    }

    #[test]
    fn chamfer_examples() {
        let a = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0)];
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer_distance(&[Vec3::ZERO], &[Vec3::X]).unwrap(), 1.0);
        assert!(chamfer_distance(&[], &a).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_points(&mut rng, 100);
        let b = random_points(&mut rng, 100);
        let directed = |from: &[Vec3], to: &[Vec3]| {
            from.iter()
                .map(|p| to.iter().map(|q| p.distance_squared(*q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / from.len() as f64
        };
        let oracle = 0.5 * (directed(&a, &b) + directed(&b, &a));
        assert!((chamfer_distance(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tree_equals_brute_force(seed in any::<u64>(), n in 1usize..3000, grid in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Grid-snapped coordinates produce many exact distance ties.
            let snap = |v: Vec3| if grid {
                Vec3::new((v.x * 4.0).round(), (v.y * 4.0).round(), (v.z * 4.0).round())
            } else { v };
            let pts: Vec<Vec3> = random_points(&mut rng, n).into_iter().map(snap).collect();
            let idx = build_index(pts.clone(), vec![Vec3::Z; n]).unwrap();
            for q in random_points(&mut rng, 200).into_iter().map(snap) {
                prop_assert_eq!(idx.nearest(q), nearest_brute_force(&pts, q));
            }
        }

        #[test]
        fn signed_depth_is_translation_equivariant(
            seed in any::<u64>(),
            shift in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 200);
            let normals: Vec<Vec3> = random_points(&mut rng, 200).into_iter().map(|n| n.normalized()).collect();
            let s = Vec3::new(shift.0, shift.1, shift.2);
            let a = build_index(pts.clone(), normals.clone()).unwrap();
            let b = build_index(pts.iter().map(|p| *p + s).collect(), normals).unwrap();
            for q in random_points(&mut rng, 50) {
                let da = a.signed_depth(q);
                let db = b.signed_depth(q + s);
                prop_assert!((da.depth - db.depth).abs() <= 1e-9);
                prop_assert!(da.depth.abs() <= da.offset.norm() + 1e-9);
            }
        }
    }
}
