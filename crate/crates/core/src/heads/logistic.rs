//! L2-regularized logistic regression (binary sigmoid or multinomial
//! softmax) fitted by full-batch gradient descent with backtracking.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{to_matrix, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-4,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogisticMode {
    /// One weight vector scoring `classes[1]`.
    Binary,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub classes: Vec<String>,
    pub mode: LogisticMode,
    /// K × d with K = 1 (binary) or C (multinomial).
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub standardizer: Standardizer,
    pub lambda: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

struct Problem<'a> {
    x: &'a Array2<f64>,
    /// Class index per row.
    y: &'a [usize],
    mode: LogisticMode,
    lambda: f64,
}

/// Parameters as K × (d + 1); the last column is the intercept.
impl Problem<'_> {
    fn logits(&self, theta: &Array2<f64>) -> Array2<f64> {
        let d = self.x.ncols();
        let w = theta.slice(ndarray::s![.., ..d]);
        let b = theta.column(d);
        self.x.dot(&w.t()) + b
    }

    fn loss_and_grad(&self, theta: &Array2<f64>) -> (f64, Array2<f64>) {
        let m = self.x.nrows() as f64;
        let d = self.x.ncols();
        let z = self.logits(theta);
        let mut resid = Array2::zeros(z.raw_dim());
        let mut ce = 0.0;
        match self.mode {
            LogisticMode::Binary => {
                for (i, &yi) in self.y.iter().enumerate() {
                    let zi = z[[i, 0]];
                    let t = yi as f64;
                    ce += softplus(zi) - t * zi;
                    resid[[i, 0]] = sigmoid(zi) - t;
                }
            }
            LogisticMode::Multinomial => {
                for (i, &yi) in self.y.iter().enumerate() {
                    let row = z.row(i);
                    let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                    let lse = mx + sum.ln();
                    ce += lse - row[yi];
                    for (k, r) in resid.row_mut(i).iter_mut().enumerate() {
                        *r = (row[k] - lse).exp() - if k == yi { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        let w = theta.slice(ndarray::s![.., ..d]);
        let reg = 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        let mut grad = Array2::zeros(theta.raw_dim());
        let gw = resid.t().dot(self.x) / m + &(&w * self.lambda);
        grad.slice_mut(ndarray::s![.., ..d]).assign(&gw);
        grad.column_mut(d).assign(&(resid.sum_axis(Axis(0)) / m));
        (ce / m + reg, grad)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Diagonal step scaling by the curvature bound of each block: 1/(¼ + λ)
/// for weights on standardized inputs, 4 for intercepts.
fn preconditioner(k: usize, d: usize, lambda: f64) -> Array2<f64> {
    Array2::from_shape_fn((k, d + 1), |(_, j)| if j < d { 1.0 / (0.25 + lambda) } else { 4.0 })
}

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

pub fn fit_logistic<R: AsRef<[f64]>, L: AsRef<str>>(x: &[R], y: &[L], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if !(cfg.lambda >= 0.0 && cfg.tol > 0.0) {
        return Err(Error::Config("logistic regression needs lambda >= 0 and tol > 0".into()));
    }
    let raw = to_matrix(x)?;
    let mut classes: Vec<String> = y.iter().map(|l| l.as_ref().to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Labeling(format!(
            "logistic regression needs at least two classes, found {}",
            classes.len()
        )));
    }
    let yi: Vec<usize> = y
        .iter()
        .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("class present"))
        .collect();
    let standardizer = Standardizer::fit(&raw);
    let xs = standardizer.apply(&raw)?;
    let mode = if classes.len() == 2 {
        LogisticMode::Binary
    } else {
        LogisticMode::Multinomial
    };
    let k = if mode == LogisticMode::Binary { 1 } else { classes.len() };
    let problem = Problem {
        x: &xs,
        y: &yi,
        mode,
        lambda: cfg.lambda,
    };
    let mut theta = Array2::<f64>::zeros((k, xs.ncols() + 1));
    let precond = preconditioner(k, xs.ncols(), cfg.lambda);
    let (mut loss, mut grad) = problem.loss_and_grad(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < cfg.tol {
            break;
        }
        iterations += 1;
        let direction = &grad * &precond;
        let decrease: f64 = (&grad * &direction).sum();
        let mut accepted = None;
        while step >= MIN_STEP {
            let cand = &theta - &(&direction * step);
            let (cl, cg) = problem.loss_and_grad(&cand);
            if cl <= loss - ARMIJO_C * step * decrease {
                accepted = Some((cand, cl, cg));
                break;
            }
            step *= 0.5;
        }
        let Some((t, l, g)) = accepted else { break };
        theta = t;
        loss = l;
        grad = g;
        step = (step * 2.0).min(1.0);
    }
    if !loss.is_finite() || theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingFailure {
            epoch: iterations,
            message: "logistic regression diverged".into(),
        });
    }
    let d = xs.ncols();
    Ok(LogisticModel {
        classes,
        mode,
        weights: theta.rows().into_iter().map(|r| r.slice(ndarray::s![..d]).to_vec()).collect(),
        intercepts: theta.column(d).to_vec(),
        standardizer,
        lambda: cfg.lambda,
        iterations,
        final_loss: loss,
    })
}

/// Probability rows in `model.classes` order.
pub fn predict_logistic<R: AsRef<[f64]>>(model: &LogisticModel, x: &[R]) -> Result<Vec<Vec<f64>>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let xs = model.standardizer.apply(&to_matrix(x)?)?;
    let w = Array2::from_shape_vec(
        (model.weights.len(), model.standardizer.dim()),
        model.weights.concat(),
    )
    .map_err(|_| Error::Config("logistic weights do not match the standardizer".into()))?;
    let z = xs.dot(&w.t()) + &Array1::from(model.intercepts.clone());
    Ok(z
        .rows()
        .into_iter()
        .map(|row| match model.mode {
            LogisticMode::Binary => {
                let p = sigmoid(row[0]);
                vec![1.0 - p, p]
            }
            LogisticMode::Multinomial => {
                let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let e: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            }
        })
        .collect())
}
