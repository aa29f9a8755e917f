//! LSTM, GRU and Elman RNN cells with batched forward passes and
//! backpropagation through time.
//!
//! Gate blocks are stacked along the rows of `w` (G·H × N), `u` (G·H × H)
//! and `b` (G·H). Block order: lstm `[i, f, o, g]`, gru `[z, r, n]`,
//! rnn `[h]`.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
    Rnn,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Lstm, CellKind::Gru, CellKind::Rnn];

    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
            CellKind::Rnn => 1,
        }
    }

    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["input", "forget", "output", "candidate"],
            CellKind::Gru => &["update", "reset", "candidate"],
            CellKind::Rnn => &["hidden"],
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Rnn => "rnn",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            "rnn" => Ok(CellKind::Rnn),
            other => Err(Error::Config(format!("unknown cell kind `{other}` (expected lstm, gru or rnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += a · bᵀ`
fn add_mul_t(out: &mut Array2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, a, &b.t(), 1.0, out);
}

/// `out += aᵀ · b`
fn add_t_mul(out: &mut ndarray::ArrayViewMut2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, out);
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.gate_count() * hidden_dim;
        CellParams {
            kind,
            w: Array2::zeros((g, input_dim)),
            u: Array2::zeros((g, hidden_dim)),
            b: Array1::zeros(g),
        }
    }

    /// Uniform(−1/√H, 1/√H) weights, zero biases, LSTM forget bias 1.
    pub fn init<R: Rng>(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        p.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        p.u.mapv_inplace(|_| rng.random_range(-bound..bound));
        if kind == CellKind::Lstm {
            p.b.slice_mut(s![hidden_dim..2 * hidden_dim]).fill(1.0);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.ncols()
    }

    /// `x` is B × τ × N; returns the cache holding every intermediate state.
    pub fn forward(&self, x: &Array3<f64>) -> Result<CellCache> {
        let (batch, tau, n) = x.dim();
        if n != self.input_dim() {
            return Err(Error::LengthMismatch {
                left: self.input_dim(),
                right: n,
            });
        }
        if tau == 0 {
            return Err(Error::TooShort { len: 0, min: 1 });
        }
        let h_dim = self.hidden_dim();
        let g = self.kind.gate_count() * h_dim;
        let mut hs = vec![Array2::zeros((batch, h_dim))];
        let mut cs = vec![Array2::zeros((batch, h_dim))];
        let mut acts = Vec::with_capacity(tau);
        for t in 0..tau {
            let xt = x.index_axis(Axis(1), t);
            let h_prev = &hs[t];
            let mut a = Array2::from_shape_fn((batch, g), |(_, j)| self.b[j]);
            add_mul_t(&mut a, &xt, &self.w.view());
            match self.kind {
                CellKind::Lstm => {
                    add_mul_t(&mut a, &h_prev.view(), &self.u.view());
                    for mut row in a.rows_mut() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = if j < 3 * h_dim { sigmoid(*v) } else { v.tanh() };
                        }
                    }
                    let i = a.slice(s![.., 0..h_dim]);
                    let f = a.slice(s![.., h_dim..2 * h_dim]);
                    let o = a.slice(s![.., 2 * h_dim..3 * h_dim]);
                    let gg = a.slice(s![.., 3 * h_dim..]);
                    let c = &f * &cs[t] + &i * &gg;
                    let h = &o * &c.mapv(f64::tanh);
                    cs.push(c);
                    hs.push(h);
                }
                CellKind::Gru => {
                    let zr = 0..2 * h_dim;
                    {
                        let mut a_zr = a.slice_mut(s![.., zr.clone()]);
                        general_mat_mul(1.0, &h_prev.view(), &self.u.slice(s![zr, ..]).t(), 1.0, &mut a_zr);
                        a_zr.mapv_inplace(sigmoid);
                    }
                    let q = &a.slice(s![.., h_dim..2 * h_dim]) * h_prev;
                    {
                        let mut a_n = a.slice_mut(s![.., 2 * h_dim..]);
                        general_mat_mul(1.0, &q.view(), &self.u.slice(s![2 * h_dim.., ..]).t(), 1.0, &mut a_n);
                        a_n.mapv_inplace(f64::tanh);
                    }
                    let z = a.slice(s![.., 0..h_dim]);
                    let nn = a.slice(s![.., 2 * h_dim..]);
                    let h = &nn + &(&z * &(h_prev - &nn));
                    hs.push(h);
                }
                CellKind::Rnn => {
                    add_mul_t(&mut a, &h_prev.view(), &self.u.view());
                    a.mapv_inplace(f64::tanh);
                    hs.push(a.clone());
                }
            }
            acts.push(a);
        }
        Ok(CellCache {
            x: x.clone(),
            hs,
            cs,
            acts,
        })
    }

    /// Gradients of all parameters given ∂L/∂h^τ (B × H).
    pub fn backward(&self, cache: &CellCache, dh_final: &Array2<f64>) -> Result<CellParams> {
        let (batch, tau, _) = cache.x.dim();
        let h_dim = self.hidden_dim();
        if dh_final.dim() != (batch, h_dim) || cache.acts.len() != tau {
            return Err(Error::Config(format!(
                "cache/batch mismatch: cache holds {batch} × {tau}, gradient is {:?}",
                dh_final.dim()
            )));
        }
        let mut grads = CellParams::zeros(self.kind, self.input_dim(), h_dim);
        let g = self.kind.gate_count() * h_dim;
        let mut dh = dh_final.clone();
        let mut dc = Array2::<f64>::zeros((batch, h_dim));
        for t in (0..tau).rev() {
            let xt = cache.x.index_axis(Axis(1), t);
            let h_prev = &cache.hs[t];
            let act = &cache.acts[t];
            let mut da = Array2::<f64>::zeros((batch, g));
            let mut dh_prev = Array2::<f64>::zeros((batch, h_dim));
            match self.kind {
                CellKind::Lstm => {
                    let c = &cache.cs[t + 1];
                    let c_prev = &cache.cs[t];
                    for r in 0..batch {
                        for j in 0..h_dim {
                            let (i, f, o, gg) = (act[[r, j]], act[[r, h_dim + j]], act[[r, 2 * h_dim + j]], act[[r, 3 * h_dim + j]]);
                            let tc = c[[r, j]].tanh();
                            let dcell = dc[[r, j]] + dh[[r, j]] * o * (1.0 - tc * tc);
                            da[[r, j]] = dcell * gg * i * (1.0 - i);
                            da[[r, h_dim + j]] = dcell * c_prev[[r, j]] * f * (1.0 - f);
                            da[[r, 2 * h_dim + j]] = dh[[r, j]] * tc * o * (1.0 - o);
                            da[[r, 3 * h_dim + j]] = dcell * i * (1.0 - gg * gg);
                            dc[[r, j]] = dcell * f;
                        }
                    }
                    add_t_mul(&mut grads.u.view_mut(), &da.view(), &h_prev.view());
                    general_mat_mul(1.0, &da, &self.u, 0.0, &mut dh_prev);
                }
                CellKind::Gru => {
                    for r in 0..batch {
                        for j in 0..h_dim {
                            let (z, n) = (act[[r, j]], act[[r, 2 * h_dim + j]]);
                            let d = dh[[r, j]];
                            dh_prev[[r, j]] = d * z;
                            da[[r, j]] = d * (h_prev[[r, j]] - n) * z * (1.0 - z);
                            da[[r, 2 * h_dim + j]] = d * (1.0 - z) * (1.0 - n * n);
                        }
                    }
                    let reset = act.slice(s![.., h_dim..2 * h_dim]);
                    let da_n = da.slice(s![.., 2 * h_dim..]).to_owned();
                    let q = &reset * h_prev;
                    add_t_mul(&mut grads.u.slice_mut(s![2 * h_dim.., ..]), &da_n.view(), &q.view());
                    let dq = da_n.dot(&self.u.slice(s![2 * h_dim.., ..]));
                    dh_prev += &(&dq * &reset);
                    let dr_pre = &dq * h_prev * reset * reset.mapv(|v| 1.0 - v);
                    da.slice_mut(s![.., h_dim..2 * h_dim]).assign(&dr_pre);
                    let da_zr = da.slice(s![.., 0..2 * h_dim]);
                    add_t_mul(&mut grads.u.slice_mut(s![0..2 * h_dim, ..]), &da_zr, &h_prev.view());
                    general_mat_mul(1.0, &da_zr, &self.u.slice(s![0..2 * h_dim, ..]), 1.0, &mut dh_prev);
                }
                CellKind::Rnn => {
                    da.assign(&(&dh * &act.mapv(|v| 1.0 - v * v)));
                    add_t_mul(&mut grads.u.view_mut(), &da.view(), &h_prev.view());
                    general_mat_mul(1.0, &da, &self.u, 0.0, &mut dh_prev);
                }
            }
            add_t_mul(&mut grads.w.view_mut(), &da.view(), &xt);
            grads.b += &da.sum_axis(Axis(0));
            dh = dh_prev;
        }
        Ok(grads)
    }
}

/// Intermediate states of one batched forward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    x: Array3<f64>,
    /// h^0 ..= h^τ
    hs: Vec<Array2<f64>>,
    /// LSTM cell states c^0 ..= c^τ; only c^0 for other kinds.
    cs: Vec<Array2<f64>>,
    /// Activated gate values per step (B × G·H).
    acts: Vec<Array2<f64>>,
}

impl CellCache {
    pub fn h_final(&self) -> &Array2<f64> {
        self.hs.last().expect("at least h^0")
    }

    pub fn batch_size(&self) -> usize {
        self.x.dim().0
    }
}
