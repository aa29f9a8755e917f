//! Random convolutional kernel transform. Each kernel convolves one
//! randomly chosen channel and contributes (PPV, max) features.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MvtsInstance;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_NUM_KERNELS: usize = 1000;
pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];

const KERNEL_STREAM: u64 = 0x524f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocketKernel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: bool,
    pub channel: usize,
}

impl RocketKernel {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn span(&self) -> usize {
        (self.len() - 1) * self.dilation
    }

    fn pad(&self) -> usize {
        if self.padding {
            self.span() / 2
        } else {
            0
        }
    }

    /// Dilated convolution with optional zero padding; `None` when the
    /// kernel does not fit the (padded) series.
    pub fn convolve(&self, series: &[f64]) -> Option<Vec<f64>> {
        let pad = self.pad();
        let padded = series.len() + 2 * pad;
        if self.is_empty() || padded <= self.span() {
            return None;
        }
        let out_len = padded - self.span();
        Some(
            (0..out_len)
                .map(|i| {
                    let mut acc = self.bias;
                    for (j, w) in self.weights.iter().enumerate() {
                        let pos = i + j * self.dilation;
                        if pos >= pad && pos - pad < series.len() {
                            acc += w * series[pos - pad];
                        }
                    }
                    acc
                })
                .collect(),
        )
    }
}

/// Fraction of strictly positive outputs and the maximum output.
pub fn ppv_and_max(outputs: &[f64]) -> (f64, f64) {
    if outputs.is_empty() {
        return (0.0, 0.0);
    }
    let pos = outputs.iter().filter(|&&v| v > 0.0).count();
    let max = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (pos as f64 / outputs.len() as f64, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocketTransform {
    pub kernels: Vec<RocketKernel>,
    pub seed: u64,
    pub input_length: usize,
    pub channels: usize,
}

impl RocketTransform {
    /// Lengths uniform over {7, 9, 11}, mean-centred Gaussian weights,
    /// bias U(−1, 1), dilation 2^U(0, log2((L−1)/(l−1))), padding with
    /// probability ½, channel uniform.
    pub fn new(num_kernels: usize, input_length: usize, channels: usize, seed: u64) -> Result<Self> {
        if num_kernels == 0 || input_length == 0 || channels == 0 {
            return Err(Error::Config("ROCKET needs >= 1 kernel, length and channel".into()));
        }
        let mut rng = stream_rng(seed, KERNEL_STREAM, 0);
        let kernels = (0..num_kernels)
            .map(|_| {
                let len = KERNEL_LENGTHS[rng.random_range(0..KERNEL_LENGTHS.len())];
                let mut weights: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mean = weights.iter().sum::<f64>() / len as f64;
                weights.iter_mut().for_each(|w| *w -= mean);
                let bias = rng.random_range(-1.0..1.0);
                let max_exp = if input_length > len {
                    ((input_length - 1) as f64 / (len - 1) as f64).log2().max(0.0)
                } else {
                    0.0
                };
                let dilation = 2f64.powf(rng.random_range(0.0..=max_exp)).floor() as usize;
                let padding = rng.random_bool(0.5);
                let channel = rng.random_range(0..channels);
                RocketKernel {
                    weights,
                    bias,
                    dilation: dilation.max(1),
                    padding,
                    channel,
                }
            })
            .collect();
        Ok(RocketTransform {
            kernels,
            seed,
            input_length,
            channels,
        })
    }

    pub fn num_features(&self) -> usize {
        2 * self.kernels.len()
    }

    /// Kernel-major (ppv, max) features and the number of kernels that
    /// did not fit and were emitted as (0, 0).
    pub fn transform(&self, instance: &MvtsInstance) -> Result<(Vec<f64>, usize)> {
        let (_, n) = instance.shape();
        if n != self.channels {
            return Err(Error::LengthMismatch {
                left: self.channels,
                right: n,
            });
        }
        let columns: Vec<Vec<f64>> = instance.values.columns().into_iter().map(|c| c.to_vec()).collect();
        let mut out = Vec::with_capacity(self.num_features());
        let mut skipped = 0;
        for k in &self.kernels {
            match k.convolve(&columns[k.channel]) {
                Some(o) => {
                    let (ppv, max) = ppv_and_max(&o);
                    out.push(ppv);
                    out.push(max);
                }
                None => {
                    skipped += 1;
                    out.push(0.0);
                    out.push(0.0);
                }
            }
        }
        Ok((out, skipped))
    }

    /// Features for every instance in order, plus the total skip count.
    pub fn transform_all(&self, instances: &[MvtsInstance]) -> Result<(Vec<Vec<f64>>, usize)> {
        let rows = instances
            .par_iter()
            .map(|i| self.transform(i))
            .collect::<Result<Vec<_>>>()?;
        let skipped = rows.iter().map(|r| r.1).sum();
        Ok((rows.into_iter().map(|r| r.0).collect(), skipped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn ppv_max_fixtures() {
        let (ppv, max) = ppv_and_max(&[-1.0, 2.0, 0.5]);
        assert!((ppv - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(max, 2.0);
        let k = RocketKernel {
            weights: vec![0.0; 7],
            bias: -1.0,
            dilation: 1,
            padding: false,
            channel: 0,
        };
        let out = k.convolve(&[3.0; 12]).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(ppv_and_max(&out), (0.0, -1.0));
    }

    #[test]
    fn convolution_by_hand() {
        let k = RocketKernel {
            weights: vec![1.0, -1.0, 2.0],
            bias: 0.5,
            dilation: 2,
            padding: true,
            channel: 0,
        };
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let out = k.convolve(&x).unwrap();
        assert_eq!(out, vec![5.5, 6.5, 8.5, -1.5, -1.5]);
        let no_pad = RocketKernel { padding: false, ..k };
        assert_eq!(no_pad.convolve(&x).unwrap(), vec![8.5]);
        assert!(no_pad.convolve(&x[..4]).is_none());
    }

    #[test]
    fn deterministic_and_shaped() {
        let a = RocketTransform::new(50, 64, 4, 3).unwrap();
        assert_eq!(a, RocketTransform::new(50, 64, 4, 3).unwrap());
        assert_ne!(a, RocketTransform::new(50, 64, 4, 4).unwrap());
        let inst = MvtsInstance::new("x", Array2::from_shape_fn((64, 4), |(t, c)| ((t * (c + 1)) as f64).sin()), "F");
        let (f, skipped) = a.transform(&inst).unwrap();
        assert_eq!(f.len(), 100);
        assert_eq!(skipped, 0);
        assert!(f.chunks(2).all(|c| (0.0..=1.0).contains(&c[0])));
        for k in &a.kernels {
            assert!(KERNEL_LENGTHS.contains(&k.len()));
            assert!(k.weights.iter().sum::<f64>().abs() < 1e-12);
            assert!((1 + k.span()) <= 64);
        }
    }

    #[test]
    fn short_series_kernels_are_skipped() {
        let t = RocketTransform::new(20, 64, 1, 1).unwrap();
        let inst = MvtsInstance::new("x", Array2::from_elem((3, 1), 1.0), "F");
        let (f, skipped) = t.transform(&inst).unwrap();
        assert_eq!(f.len(), 40);
        assert!(skipped > 0);
    }
}
