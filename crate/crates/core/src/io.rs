//! JSON exchange formats for marginals, couplings and potentials.
//!
//! Masses are written with 17 significant digits so that a write/read cycle
//! reproduces every `f64` bit for bit.

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::solver::DualPotentials;
use crate::space::{Cell, Coupling, DiscreteMarginal};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalJson {
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl From<&DiscreteMarginal> for MarginalJson {
    fn from(m: &DiscreteMarginal) -> Self {
        MarginalJson { d: m.dim(), points: m.points().map(<[f64]>::to_vec).collect(), weights: m.weights().to_vec() }
    }
}

impl TryFrom<MarginalJson> for DiscreteMarginal {
    type Error = Error;

    fn try_from(m: MarginalJson) -> Result<Self> {
        if let Some(p) = m.points.iter().find(|p| p.len() != m.d) {
            return Err(Error::arg(format!("point {p:?} does not have dimension {}", m.d)));
        }
        DiscreteMarginal::new(m.points, m.weights)
    }
}

fn mass17<S: Serializer>(m: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{m:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryJson {
    pub idx: Cell,
    #[serde(serialize_with = "mass17")]
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingJson {
    pub entries: Vec<EntryJson>,
}

impl From<&Coupling> for CouplingJson {
    fn from(c: &Coupling) -> Self {
        CouplingJson { entries: c.entries().map(|(idx, mass)| EntryJson { idx: idx.clone(), mass }).collect() }
    }
}

impl CouplingJson {
    /// Rebuilds the coupling on a grid of the given shape.
    pub fn into_coupling(self, shape: Vec<usize>) -> Result<Coupling> {
        Coupling::new(shape, self.entries.into_iter().map(|e| (e.idx, e.mass)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialsJson {
    pub values: Vec<Vec<f64>>,
}

impl From<&DualPotentials> for PotentialsJson {
    fn from(p: &DualPotentials) -> Self {
        PotentialsJson { values: p.values().to_vec() }
    }
}

pub fn marginal_to_json(m: &DiscreteMarginal) -> String {
    serde_json::to_string_pretty(&MarginalJson::from(m)).expect("marginal serialization")
}

pub fn marginal_from_json(s: &str) -> Result<DiscreteMarginal> {
    serde_json::from_str::<MarginalJson>(s)?.try_into()
}

pub fn coupling_to_json(c: &Coupling) -> String {
    serde_json::to_string_pretty(&CouplingJson::from(c)).expect("coupling serialization")
}

pub fn coupling_from_json(s: &str, shape: Vec<usize>) -> Result<Coupling> {
    serde_json::from_str::<CouplingJson>(s)?.into_coupling(shape)
}

pub fn potentials_from_json(s: &str) -> Result<DualPotentials> {
    DualPotentials::new(serde_json::from_str::<PotentialsJson>(s)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_round_trip() {
        let m = DiscreteMarginal::new(vec![vec![0.1, -2.0], vec![1.0 / 3.0, 5e-300]], vec![0.3, 0.7]).unwrap();
        let back = marginal_from_json(&marginal_to_json(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn masses_have_seventeen_digits() {
        let c = Coupling::new(vec![3], [(vec![0], 1.0 / 3.0), (vec![1], 2.0 / 3.0)]).unwrap();
        let text = coupling_to_json(&c);
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert_eq!(coupling_from_json(&text, vec![3]).unwrap(), c);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let bad = r#"{"d": 2, "points": [[0.0]], "weights": [1.0]}"#;
        assert!(matches!(marginal_from_json(bad), Err(Error::Argument(_))));
        assert!(matches!(marginal_from_json("{"), Err(Error::Json(_))));
    }
}
