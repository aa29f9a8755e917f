//! One extreme feature vector per class: the member that is farthest, in
//! complete linkage, from the union of all other classes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub id: String,
    pub distance: f64,
    pub vector: Vec<f64>,
}

/// Serialized as `{class: {id, distance, vector}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtremeSet {
    pub by_class: BTreeMap<String, Extreme>,
}

impl ExtremeSet {
    pub fn get(&self, class: &str) -> Result<&Extreme> {
        self.by_class
            .get(class)
            .ok_or_else(|| Error::Labeling(format!("no extreme for class `{class}`")))
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.by_class.keys().map(String::as_str)
    }

    pub fn dim(&self) -> usize {
        self.by_class.values().next().map_or(0, |e| e.vector.len())
    }

    pub fn len(&self) -> usize {
        self.by_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_class.is_empty()
    }
}

fn validate(features: &[FeatureVector]) -> Result<BTreeMap<&str, Vec<usize>>> {
    let Some(first) = features.first() else {
        return Err(Error::EmptyDataset("no feature vectors".into()));
    };
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, fv) in features.iter().enumerate() {
        if fv.dim() != first.dim() {
            return Err(Error::LengthMismatch {
                left: first.dim(),
                right: fv.dim(),
            });
        }
        if let Some(j) = fv.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("feature {j} of `{}` is not finite", fv.id)));
        }
        members.entry(fv.label.as_str()).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::Labeling(format!(
            "extremes need at least two classes, found {}",
            members.len()
        )));
    }
    Ok(members)
}

/// Exact scan; the farthest-point distance of each vector is computed in
/// parallel and the argmax is reduced in index order.
pub fn derive_extremes(features: &[FeatureVector]) -> Result<ExtremeSet> {
    let members = validate(features)?;
    let mut by_class = BTreeMap::new();
    for (class, idx) in &members {
        let others: Vec<&[f64]> = features
            .iter()
            .filter(|fv| fv.label != *class)
            .map(|fv| fv.values.as_slice())
            .collect();
        let linkage: Vec<f64> = idx
            .par_iter()
            .map(|&i| {
                let v = &features[i].values;
                others
                    .iter()
                    .map(|w| squared_distance(v, w))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .sqrt()
            })
            .collect();
        let mut best = 0;
        for (k, &d) in linkage.iter().enumerate() {
            if d > linkage[best] {
                best = k;
            }
        }
        let fv = &features[idx[best]];
        by_class.insert(
            class.to_string(),
            Extreme {
                id: fv.id.clone(),
                distance: linkage[best],
                vector: fv.values.clone(),
            },
        );
    }
    Ok(ExtremeSet { by_class })
}
