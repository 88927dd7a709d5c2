//! Skinning-weight sidecar (JSON).
//!
//! ```json
//! {"joints": ["Hips", ...],
//!  "weights": [[[0, 1.0]], [[3, 0.25], [4, 0.75]], ...],
//!  "limbs": {"left_arm": ["LeftForeArm", "LeftHand"]},
//!  "excluded": ["LeftArm"]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::LimbConfig;
use crate::skeleton::Skeleton;
use crate::skinning::{Influences, SkinnedCharacter, WEIGHT_TOLERANCE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSidecar {
    pub joints: Vec<String>,
    pub weights: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    pub limbs: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub excluded: Vec<String>,
}

impl WeightsSidecar {
    pub fn from_character(character: &SkinnedCharacter, limbs: &LimbConfig) -> Self {
        WeightsSidecar {
            joints: character.skeleton.names().map(str::to_string).collect(),
            weights: character.influences().iter().map(|w| w.iter().collect()).collect(),
            limbs: limbs.limbs.clone(),
            excluded: limbs.excluded.clone(),
        }
    }

    /// Limb configuration, or `None` when the sidecar declares no limbs.
    pub fn limb_config(&self) -> Option<LimbConfig> {
        (!self.limbs.is_empty()).then(|| LimbConfig {
            limbs: self.limbs.clone(),
            excluded: self.excluded.clone(),
        })
    }

    /// Check against `skeleton` and convert the rows, remapping joint indices
    /// from sidecar order to skeleton order by name.
    pub fn influences(&self, skeleton: &Skeleton) -> Result<Vec<Influences>> {
        let map: Vec<usize> = self
            .joints
            .iter()
            .map(|n| {
                skeleton
                    .find(n)
                    .ok_or_else(|| Error::Weights(format!("joint `{n}` is not in the skeleton")))
            })
            .collect::<Result<_>>()?;
        for name in self.limbs.values().flatten().chain(&self.excluded) {
            if skeleton.find(name).is_none() {
                return Err(Error::Weights(format!("limb joint `{name}` is not in the skeleton")));
            }
        }
        self.weights
            .iter()
            .enumerate()
            .map(|(v, row)| {
                let pairs = row
                    .iter()
                    .map(|&(j, w)| {
                        map.get(j)
                            .map(|&k| (k, w))
                            .ok_or_else(|| Error::Weights(format!("vertex {v} references joint {j}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let inf = Influences::new(&pairs).map_err(|e| Error::Weights(format!("vertex {v}: {e}")))?;
                if (inf.sum() - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::Weights(format!("vertex {v} weights sum to {}", inf.sum())));
                }
                Ok(inf)
            })
            .collect()
    }
}

pub fn parse_weights(text: &str) -> Result<WeightsSidecar> {
    serde_json::from_str(text).map_err(|e| Error::parse("weights", e.line(), e.to_string()))
}

pub fn write_weights(sidecar: &WeightsSidecar) -> Result<String> {
    Ok(serde_json::to_string(sidecar)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::skeleton::Joint;

    fn skel() -> Skeleton {
        Skeleton::new(vec![
            Joint::new("a", None, Vec3::ZERO),
            Joint::new("b", Some(0), Vec3::Y),
        ])
        .unwrap()
    }

    #[test]
    fn joints_are_remapped_by_name() {
        let text = r#"{"joints": ["b", "a"], "weights": [[[0, 1.0]], [[1, 0.25], [0, 0.75]]]}"#;
        let s = parse_weights(text).unwrap();
        let inf = s.influences(&skel()).unwrap();
        assert_eq!(inf[0].iter().collect::<Vec<_>>(), vec![(1, 1.0)]);
        assert_eq!(inf[1].iter().collect::<Vec<_>>(), vec![(0, 0.25), (1, 0.75)]);
        assert!(s.limb_config().is_none());
    }

    #[test]
    fn rejects_bad_rows_and_names() {
        let sum = r#"{"joints": ["a", "b"], "weights": [[[0, 0.5]]]}"#;
        assert!(matches!(
            parse_weights(sum).unwrap().influences(&skel()),
            Err(Error::Weights(_))
        ));
        let name = r#"{"joints": ["a", "z"], "weights": [[[0, 1.0]]]}"#;
        assert!(parse_weights(name).unwrap().influences(&skel()).is_err());
        let limb = r#"{"joints": ["a"], "weights": [[[0, 1.0]]], "limbs": {"x": ["q"]}}"#;
        assert!(parse_weights(limb).unwrap().influences(&skel()).is_err());
        let unknown = r#"{"joints": [], "weights": [], "extra": 1}"#;
        assert!(matches!(parse_weights(unknown), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let text =
            r#"{"joints": ["a", "b"], "weights": [[[0, 0.1], [1, 0.9]]], "limbs": {"arm": ["b"]}, "excluded": ["a"]}"#;
        let s = parse_weights(text).unwrap();
        assert_eq!(parse_weights(&write_weights(&s).unwrap()).unwrap(), s);
    }
}
