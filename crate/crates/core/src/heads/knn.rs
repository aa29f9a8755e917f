//! Euclidean k-nearest-neighbour voting on standardized inputs.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, to_matrix, Standardizer};
use crate::error::{Error, Result};
use crate::extremes::squared_distance;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    /// Standardized training vectors.
    pub train: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

pub fn fit_knn<R: AsRef<[f64]>, L: AsRef<str>>(x: &[R], y: &[L], k: usize) -> Result<KnnModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset("kNN needs training vectors".into()));
    }
    if k == 0 || k > x.len() {
        return Err(Error::Config(format!("k = {k} must lie in 1..={}", x.len())));
    }
    let raw = to_matrix(x)?;
    let standardizer = Standardizer::fit(&raw);
    let train = standardizer.apply(&raw)?;
    let mut classes: Vec<String> = y.iter().map(|l| l.as_ref().to_string()).collect();
    classes.sort();
    classes.dedup();
    Ok(KnnModel {
        k,
        classes,
        standardizer,
        train: train.rows().into_iter().map(|r| r.to_vec()).collect(),
        labels: y.iter().map(|l| l.as_ref().to_string()).collect(),
    })
}

/// Predicted labels and per-class vote fractions (in `classes` order).
/// Distance ties go to the smaller training index, vote ties to the
/// smallest label.
pub fn knn_predict<R: AsRef<[f64]>>(model: &KnnModel, x: &[R]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if model.train.is_empty() {
        return Err(Error::EmptyDataset("kNN model has no training vectors".into()));
    }
    if x.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let q: Array2<f64> = model.standardizer.apply(&to_matrix(x)?)?;
    let rows: Vec<Vec<f64>> = q.rows().into_iter().map(|r| r.to_vec()).collect();
    let scores: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|query| {
            let mut d: Vec<(f64, usize)> = model
                .train
                .iter()
                .enumerate()
                .map(|(i, t)| (squared_distance(query, t), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; model.classes.len()];
            for &(_, i) in &d[..model.k] {
                let c = model
                    .classes
                    .binary_search(&model.labels[i])
                    .expect("training label is a known class");
                votes[c] += 1;
            }
            votes.into_iter().map(|v| v as f64 / model.k as f64).collect()
        })
        .collect();
    let labels = scores.iter().map(|s| model.classes[argmax(s)].clone()).collect();
    Ok((labels, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<&'static str>) {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.2],
            vec![1.0, 1.0],
            vec![0.9, 1.1],
            vec![1.1, 0.8],
            vec![5.0, 5.0],
        ];
        (x, vec!["neg", "neg", "pos", "pos", "pos", "neg"])
    }

    #[test]
    fn k1_reproduces_training_labels() {
        let (x, y) = data();
        let m = fit_knn(&x, &y, 1).unwrap();
        let (pred, _) = knn_predict(&m, &x).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn full_k_predicts_majority() {
        let (x, y) = data();
        let m = fit_knn(&x, &y, 6).unwrap();
        let (pred, scores) = knn_predict(&m, &[vec![1.0, 1.0], vec![-3.0, 9.0]]).unwrap();
        assert_eq!(pred, vec!["neg", "neg"]);
        assert_eq!(scores[0], vec![0.5, 0.5]);
    }

    #[test]
    fn five_nearest_vote() {
        let (x, y) = data();
        let m = fit_knn(&x, &y, 5).unwrap();
        let (pred, scores) = knn_predict(&m, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(pred[0], "pos");
        assert_eq!(scores[0], vec![0.4, 0.6]);
    }

    #[test]
    fn invalid_k() {
        let (x, y) = data();
        assert!(fit_knn(&x, &y, 0).is_err());
        assert!(fit_knn(&x, &y, 7).is_err());
        assert!(fit_knn::<Vec<f64>, &str>(&[], &[], 1).is_err());
    }
}
