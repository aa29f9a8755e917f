//! The canonical 22-feature catch22 set.
//!
//! Every routine follows the reference C implementation operation by
//! operation (including its integer truncations and index conventions) so
//! that values agree with the published implementation to rounding error.
//! All features run on the series z-scored with the sample standard
//! deviation, as the reference driver does.

use std::f64::consts::E;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub const FEATURE_NAMES: [&str; 22] = [
    "DN_HistogramMode_5",
    "DN_HistogramMode_10",
    "CO_f1ecac",
    "CO_FirstMin_ac",
    "CO_HistogramAMI_even_2_5",
    "CO_trev_1_num",
    "MD_hrv_classic_pnn40",
    "SB_BinaryStats_mean_longstretch1",
    "SB_TransitionMatrix_3ac_sumdiagcov",
    "PD_PeriodicityWang_th0_01",
    "CO_Embed2_Dist_tau_d_expfit_meandiff",
    "IN_AutoMutualInfoStats_40_gaussian_fmmi",
    "FC_LocalSimple_mean1_tauresrat",
    "DN_OutlierInclude_p_001_mdrmd",
    "DN_OutlierInclude_n_001_mdrmd",
    "SP_Summaries_welch_rect_area_5_1",
    "SB_BinaryStats_diff_longstretch0",
    "SB_MotifThree_quantile_hh",
    "SC_FluctAnal_2_rsrangefit_50_1_logi_prop_r1",
    "SC_FluctAnal_2_dfa_50_1_2_logi_prop_r1",
    "SP_Summaries_welch_rect_centroid",
    "FC_LocalSimple_mean3_stderr",
];

/// Raw catch22 values for one series (not sanitized).
pub fn catch22_all(series: &[f64]) -> [f64; 22] {
    let y = zscore(series);
    let y = y.as_slice();
    let acf = autocorrelations(y);
    let first_zero = first_zero(&acf, y.len());
    [
        histogram_mode(y, 5),
        histogram_mode(y, 10),
        f1ecac(&acf, y.len()),
        first_min_ac(&acf, y.len()),
        histogram_ami_even_2_5(y),
        trev_1_num(y),
        hrv_classic_pnn40(y),
        binary_stats_mean_longstretch1(y),
        transition_matrix_3ac_sumdiagcov(y, first_zero),
        periodicity_wang_th0_01(y),
        embed2_dist_tau_d_expfit_meandiff(y, first_zero),
        auto_mutual_info_40_gaussian_fmmi(y),
        local_simple_mean1_tauresrat(y, first_zero),
        outlier_include_001_mdrmd(y, 1.0),
        outlier_include_001_mdrmd(y, -1.0),
        welch_rect(y, WelchSummary::Area5_1),
        binary_stats_diff_longstretch0(y),
        motif_three_quantile_hh(y),
        fluct_anal_2_50_1_logi_prop_r1(y, 1, Fluctuation::RsRange),
        fluct_anal_2_50_1_logi_prop_r1(y, 2, Fluctuation::Dfa),
        welch_rect(y, WelchSummary::Centroid),
        local_simple_mean_stderr(y, 3),
    ]
}

// ---------------------------------------------------------------------------
// shared statistics

pub(crate) fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Sample (n − 1) standard deviation.
pub(crate) fn stddev(a: &[f64]) -> f64 {
    let m = mean(a);
    (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a.len() as f64 - 1.0)).sqrt()
}

fn zscore(a: &[f64]) -> Vec<f64> {
    let m = mean(a);
    let sd = stddev(a);
    a.iter().map(|x| (x - m) / sd).collect()
}

fn max_of(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median(a: &[f64]) -> f64 {
    let b = sorted(a);
    let n = b.len();
    if n % 2 == 1 {
        b[n / 2]
    } else {
        (b[n / 2] + b[n / 2 - 1]) / 2.0
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Least-squares line; a singular design yields (0, 0).
fn linreg(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut sx, mut sx2, mut sxy, mut sy) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sx += xi;
        sx2 += xi * xi;
        sxy += xi * yi;
        sy += yi;
    }
    let denom = n * sx2 - sx * sx;
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    ((n * sxy - sx * sy) / denom, (sy * sx2 - sx * sxy) / denom)
}

/// Pearson correlation of `x[..n-lag]` against `x[lag..]`.
fn autocorr_lag(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (a, b) = (&x[..n], &x[lag..]);
    let (ma, mb) = (mean(a), mean(b));
    let (mut nom, mut da, mut db) = (0.0, 0.0, 0.0);
    for (&p, &q) in a.iter().zip(b) {
        nom += (p - ma) * (q - mb);
        da += (p - ma) * (p - ma);
        db += (q - mb) * (q - mb);
    }
    nom / (da * db).sqrt()
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Normalized autocorrelation at lags `0..len` computed through a zero-padded
/// FFT of length 2·nextpow2(len).
pub fn autocorrelations(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let nfft = next_pow2(n) << 1;
    let m = mean(y);
    let mut buf: Vec<Complex64> = y
        .iter()
        .map(|v| Complex64::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    fft.process(&mut buf);
    for c in buf.iter_mut() {
        *c *= c.conj();
    }
    fft.process(&mut buf);
    let divisor = buf[0];
    buf.iter().take(n).map(|c| (c / divisor).re).collect()
}

/// First lag at which the autocorrelation is no longer positive, capped at
/// `max_tau`.
fn first_zero(acf: &[f64], max_tau: usize) -> usize {
    let mut i = 0;
    while i < max_tau && acf.get(i).is_some_and(|&a| a > 0.0) {
        i += 1;
    }
    i
}

fn histcounts(y: &[f64], n_bins: usize) -> (Vec<usize>, Vec<f64>) {
    let (lo, hi) = (min_of(y), max_of(y));
    let step = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in y {
        // Truncation toward zero mirrors the C int conversion.
        let idx = ((v - lo) / step) as i64;
        let idx = idx.clamp(0, n_bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    let edges = (0..=n_bins).map(|i| i as f64 * step + lo).collect();
    (counts, edges)
}

/// Quantile with the midpoint interpolation used by coarse-graining.
fn quantile(sorted_y: &[f64], quant: f64) -> f64 {
    let n = sorted_y.len();
    let q = 0.5 / n as f64;
    if quant < q {
        return sorted_y[0];
    }
    if quant > 1.0 - q {
        return sorted_y[n - 1];
    }
    let idx = n as f64 * quant - 0.5;
    let left = idx.floor() as usize;
    let right = idx.ceil() as usize;
    if left == right {
        return sorted_y[left];
    }
    sorted_y[left] + (idx - left as f64) * (sorted_y[right] - sorted_y[left]) / (right - left) as f64
}

/// Symbols 1..=groups by equiprobable quantile bins.
fn coarsegrain_quantile(y: &[f64], groups: usize) -> Vec<usize> {
    let s = sorted(y);
    let step = 1.0 / groups as f64;
    let mut th = Vec::with_capacity(groups + 1);
    let mut q = 0.0;
    for _ in 0..=groups {
        th.push(quantile(&s, q));
        q += step;
    }
    th[0] -= 1.0;
    let mut labels = vec![0usize; y.len()];
    for i in 0..groups {
        for (label, &v) in labels.iter_mut().zip(y) {
            if v > th[i] && v <= th[i + 1] {
                *label = i + 1;
            }
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// distribution

fn histogram_mode(y: &[f64], n_bins: usize) -> f64 {
    let (counts, edges) = histcounts(y, n_bins);
    let mut max_count = 0usize;
    let mut num_maxs = 1usize;
    let mut out = 0.0;
    for i in 0..n_bins {
        let centre = (edges[i] + edges[i + 1]) * 0.5;
        if counts[i] > max_count {
            max_count = counts[i];
            num_maxs = 1;
            out = centre;
        } else if counts[i] == max_count {
            num_maxs += 1;
            out += centre;
        }
    }
    out / num_maxs as f64
}

fn outlier_include_001_mdrmd(y: &[f64], sign: f64) -> f64 {
    const INC: f64 = 0.01;
    let size = y.len();
    if y.iter().all(|&v| v == y[0]) {
        return 0.0;
    }
    let work: Vec<f64> = y.iter().map(|v| sign * v).collect();
    let tot = work.iter().filter(|&&v| v >= 0.0).count();
    let max_val = max_of(&work);
    if max_val < INC {
        return 0.0;
    }
    let n_thresh = (max_val / INC) as usize + 1;

    // 1-based positions of the values at or above each threshold.
    let above = |j: usize| -> Vec<f64> {
        let th = j as f64 * INC;
        work.iter()
            .enumerate()
            .filter(|(_, &v)| v >= th)
            .map(|(i, _)| (i + 1) as f64)
            .collect()
    };
    let counts: Vec<usize> = (0..n_thresh)
        .map(|j| work.iter().filter(|&&v| v >= j as f64 * INC).count())
        .collect();

    let mut mj = 0;
    for (j, &c) in counts.iter().enumerate() {
        if (c as f64 - 1.0) * 100.0 / tot as f64 > 2.0 {
            mj = j;
        }
    }
    // First threshold where the mean inter-exceedance gap is undefined.
    let fbi = counts.iter().position(|&c| c <= 1).unwrap_or(n_thresh - 1);
    let trim = mj.min(fbi);
    let half = size as f64 / 2.0;
    let medians: Vec<f64> = (0..=trim).map(|j| median(&above(j)) / half - 1.0).collect();
    median(&medians)
}

// ---------------------------------------------------------------------------
// linear autocorrelation

fn f1ecac(acf: &[f64], size: usize) -> f64 {
    let thresh = 1.0 / E;
    for i in 0..size.saturating_sub(2) {
        if acf[i + 1] < thresh {
            let m = acf[i + 1] - acf[i];
            let dy = thresh - acf[i];
            return i as f64 + dy / m;
        }
    }
    size as f64
}

fn first_min_ac(acf: &[f64], size: usize) -> f64 {
    for i in 1..size.saturating_sub(1) {
        if acf[i] < acf[i - 1] && acf[i] < acf[i + 1] {
            return i as f64;
        }
    }
    size as f64
}

fn trev_1_num(y: &[f64]) -> f64 {
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).powi(3)).collect();
    mean(&d)
}

fn welch_rect(y: &[f64], what: WelchSummary) -> f64 {
    let size = y.len();
    let nfft = next_pow2(size);
    let m = mean(y);
    // One segment spanning the whole series with a rectangular window.
    let mut buf: Vec<Complex64> = y
        .iter()
        .map(|v| Complex64::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let kmu = size as f64;
    let df = 1.0 / nfft as f64;
    let n_out = nfft / 2 + 1;
    #[allow(clippy::approx_constant)]
    let pi = 3.14159265359_f64;
    let mut w = Vec::with_capacity(n_out);
    let mut sw = Vec::with_capacity(n_out);
    for (i, c) in buf.iter().take(n_out).enumerate() {
        let mut p = c.norm().powi(2) / kmu;
        if i > 0 && i < n_out - 1 {
            p *= 2.0;
        }
        w.push(2.0 * pi * (i as f64 * df));
        let s = p / (2.0 * pi);
        if s.is_infinite() {
            return 0.0;
        }
        sw.push(s);
    }
    match what {
        WelchSummary::Centroid => {
            let mut cs = 0.0;
            let cumsum: Vec<f64> = sw
                .iter()
                .map(|s| {
                    cs += s;
                    cs
                })
                .collect();
            let thresh = cumsum[n_out - 1] * 0.5;
            cumsum
                .iter()
                .position(|&c| c > thresh)
                .map_or(0.0, |i| w[i])
        }
        WelchSummary::Area5_1 => {
            let dw = w[1] - w[0];
            sw.iter().take(n_out / 5).sum::<f64>() * dw
        }
    }
}

#[derive(Clone, Copy)]
enum WelchSummary {
    Centroid,
    Area5_1,
}

fn local_simple_residuals(y: &[f64], train_length: usize) -> Vec<f64> {
    (0..y.len() - train_length)
        .map(|i| {
            let est = y[i..i + train_length].iter().sum::<f64>() / train_length as f64;
            y[i + train_length] - est
        })
        .collect()
}

fn local_simple_mean1_tauresrat(y: &[f64], y_first_zero: usize) -> f64 {
    if y.len() <= 1 {
        return f64::NAN;
    }
    let res = local_simple_residuals(y, 1);
    let res_acf = autocorrelations(&res);
    first_zero(&res_acf, res.len()) as f64 / y_first_zero as f64
}

fn local_simple_mean_stderr(y: &[f64], train_length: usize) -> f64 {
    if y.len() <= train_length {
        return f64::NAN;
    }
    stddev(&local_simple_residuals(y, train_length))
}

// ---------------------------------------------------------------------------
// nonlinear autocorrelation

fn histogram_ami_even_2_5(y: &[f64]) -> f64 {
    const TAU: usize = 2;
    const BINS: usize = 5;
    if y.len() <= TAU {
        return f64::NAN;
    }
    let (lo, hi) = (min_of(y), max_of(y));
    let step = (hi - lo + 0.2) / BINS as f64;
    let edges: Vec<f64> = (0..=BINS).map(|i| lo + step * i as f64 - 0.1).collect();
    // Index of the first edge strictly above the value, minus one.
    let assign = |v: f64| edges.iter().position(|&e| v < e).unwrap_or(0).saturating_sub(1);

    let n = y.len() - TAU;
    let mut joint = [[0.0f64; BINS]; BINS];
    for i in 0..n {
        let a = assign(y[i]);
        let b = assign(y[i + TAU]);
        if a < BINS && b < BINS {
            joint[a][b] += 1.0;
        }
    }
    let total: f64 = joint.iter().flatten().sum();
    let mut pi = [0.0; BINS];
    let mut pj = [0.0; BINS];
    for a in 0..BINS {
        for b in 0..BINS {
            joint[a][b] /= total;
            pi[a] += joint[a][b];
            pj[b] += joint[a][b];
        }
    }
    let mut ami = 0.0;
    for a in 0..BINS {
        for b in 0..BINS {
            if joint[a][b] > 0.0 {
                ami += joint[a][b] * (joint[a][b] / (pi[a] * pj[b])).ln();
            }
        }
    }
    ami
}

fn auto_mutual_info_40_gaussian_fmmi(y: &[f64]) -> f64 {
    let max_tau = y.len().div_ceil(2);
    let tau = 40.min(max_tau);
    if tau < 3 {
        return tau as f64;
    }
    let ami: Vec<f64> = (1..=tau)
        .map(|lag| {
            let ac = autocorr_lag(y, lag);
            -0.5 * (1.0 - ac * ac).ln()
        })
        .collect();
    for i in 1..tau - 1 {
        if ami[i] < ami[i - 1] && ami[i] < ami[i + 1] {
            return i as f64;
        }
    }
    tau as f64
}

fn embed2_dist_tau_d_expfit_meandiff(y: &[f64], first_zero: usize) -> f64 {
    let size = y.len();
    let mut tau = first_zero;
    if tau as f64 > size as f64 / 10.0 {
        tau = size / 10;
    }
    if size < tau + 2 {
        return f64::NAN;
    }
    let d: Vec<f64> = (0..size - tau - 1)
        .map(|i| {
            let a = y[i + 1] - y[i];
            let b = y[i + tau] - y[i + tau + 1];
            (a * a + b * b).sqrt()
        })
        .collect();
    let l = mean(&d);
    let n_bins = num_bins_auto(&d);
    if n_bins == 0 {
        return 0.0;
    }
    let (counts, edges) = histcounts(&d, n_bins);
    let diffs: Vec<f64> = (0..n_bins)
        .map(|i| {
            let p = counts[i] as f64 / d.len() as f64;
            let expf = (-(edges[i] + edges[i + 1]) * 0.5 / l).exp() / l;
            (p - expf.max(0.0)).abs()
        })
        .collect();
    mean(&diffs)
}

fn num_bins_auto(y: &[f64]) -> usize {
    let sd = stddev(y);
    if !(sd >= 0.001) {
        return 0;
    }
    ((max_of(y) - min_of(y)) / (3.5 * sd / (y.len() as f64).powf(1.0 / 3.0))).ceil() as usize
}

fn periodicity_wang_th0_01(y: &[f64]) -> f64 {
    const TH: f64 = 0.01;
    let size = y.len();
    let acmax = size.div_ceil(3);
    // Fewer than four lags cannot hold a trough followed by a peak.
    if acmax < 4 {
        return 0.0;
    }
    let Some(spline) = spline_fit(y) else {
        return 0.0;
    };
    let sub: Vec<f64> = y.iter().zip(&spline).map(|(a, b)| a - b).collect();
    let acf: Vec<f64> = (1..=acmax)
        .map(|lag| {
            let m = size - lag;
            (0..m).map(|i| sub[i] * sub[i + lag]).sum::<f64>() / m as f64
        })
        .collect();

    let mut troughs = Vec::new();
    let mut peaks = Vec::new();
    for i in 1..acmax - 1 {
        let slope_in = acf[i] - acf[i - 1];
        let slope_out = acf[i + 1] - acf[i];
        if slope_in < 0.0 && slope_out > 0.0 {
            troughs.push(i);
        } else if slope_in > 0.0 && slope_out < 0.0 {
            peaks.push(i);
        }
    }
    for &peak in &peaks {
        let Some(&trough) = troughs.iter().take_while(|&&t| t < peak).last() else {
            continue;
        };
        if acf[peak] - acf[trough] < TH || acf[peak] < 0.0 {
            continue;
        }
        return peak as f64;
    }
    0.0
}

/// Least-squares cubic spline with breaks at 0, ⌊n/2⌋−1 and n−1 (two
/// pieces, C² at the interior break), evaluated at 0..n.
fn spline_fit(y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let last = (n - 1) as f64;
    let knot = ((n / 2) as f64 - 1.0) / last;
    let basis = |x: f64| {
        let t = x / last;
        let k = (t - knot).max(0.0);
        [1.0, t, t * t, t * t * t, k * k * k]
    };
    let a = DMatrix::from_fn(n, 5, |i, j| basis(i as f64)[j]);
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let fitted = a * coef;
    Some(fitted.iter().copied().collect())
}

// ---------------------------------------------------------------------------
// successive differences and symbolic statistics

fn hrv_classic_pnn40(y: &[f64]) -> f64 {
    let n = y.len() - 1;
    let hits = y.windows(2).filter(|w| (w[1] - w[0]).abs() * 1000.0 > 40.0).count();
    hits as f64 / n as f64
}

fn binary_stats_mean_longstretch1(y: &[f64]) -> f64 {
    let size = y.len();
    let m = mean(y);
    let bin: Vec<bool> = y[..size - 1].iter().map(|v| v - m > 0.0).collect();
    longest_stretch(&bin, false, size)
}

fn binary_stats_diff_longstretch0(y: &[f64]) -> f64 {
    let size = y.len();
    let bin: Vec<bool> = y.windows(2).map(|w| w[1] - w[0] >= 0.0).collect();
    longest_stretch(&bin, true, size)
}

/// Longest gap between consecutive occurrences of `breaker` in `bin`,
/// with the final position always closing a run.
fn longest_stretch(bin: &[bool], breaker: bool, size: usize) -> f64 {
    let mut best = 0usize;
    let mut last = 0usize;
    for (i, &b) in bin.iter().enumerate() {
        if b == breaker || i + 2 == size {
            best = best.max(i - last);
            last = i;
        }
    }
    best as f64
}

fn transition_matrix_3ac_sumdiagcov(y: &[f64], first_zero: usize) -> f64 {
    const GROUPS: usize = 3;
    if y.iter().all(|&v| v == y[0]) {
        return f64::NAN;
    }
    let tau = first_zero.max(1);
    let down: Vec<f64> = y.iter().step_by(tau).copied().collect();
    if down.len() < 2 {
        return f64::NAN;
    }
    let cg = coarsegrain_quantile(&down, GROUPS);
    let mut t = [[0.0f64; GROUPS]; GROUPS];
    for w in cg.windows(2) {
        t[w[0] - 1][w[1] - 1] += 1.0;
    }
    let scale = (down.len() - 1) as f64;
    let mut sum = 0.0;
    for col in 0..GROUPS {
        let c: Vec<f64> = t.iter().map(|row| row[col] / scale).collect();
        let m = mean(&c);
        sum += c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (GROUPS as f64 - 1.0);
    }
    sum
}

fn motif_three_quantile_hh(y: &[f64]) -> f64 {
    const ALPHABET: usize = 3;
    let size = y.len();
    let yt = coarsegrain_quantile(y, ALPHABET);
    let mut counts = [[0usize; ALPHABET]; ALPHABET];
    for w in yt.windows(2) {
        counts[w[0] - 1][w[1] - 1] += 1;
    }
    let mut hh = 0.0;
    for row in &counts {
        for &c in row {
            let p = c as f64 / (size as f64 - 1.0);
            if p > 0.0 {
                hh -= p * p.ln();
            }
        }
    }
    hh
}

// ---------------------------------------------------------------------------
// fluctuation scaling

#[derive(Clone, Copy, PartialEq)]
enum Fluctuation {
    RsRange,
    Dfa,
}

fn fluct_anal_2_50_1_logi_prop_r1(y: &[f64], lag: usize, how: Fluctuation) -> f64 {
    const STEPS: usize = 50;
    const MIN_POINTS: usize = 6;
    let size = y.len();
    let lin_low = 5f64.ln();
    let lin_high = ((size / 2) as f64).ln();
    let step = (lin_high - lin_low) / (STEPS - 1) as f64;
    let mut tau: Vec<i64> = (0..STEPS)
        .map(|i| (lin_low + i as f64 * step).exp().round() as i64)
        .collect();

    // Drop repeated scales in place, exactly as the reference loop does.
    let mut n_tau = STEPS;
    for i in 0..STEPS - 1 {
        while tau[i] == tau[i + 1] && i < n_tau - 1 {
            for j in i + 1..STEPS - 1 {
                tau[j] = tau[j + 1];
            }
            n_tau -= 1;
        }
    }
    if n_tau < 12 {
        return 0.0;
    }
    let tau: Vec<usize> = tau[..n_tau].iter().map(|&t| t as usize).collect();

    let size_cs = size / lag;
    let mut cs = Vec::with_capacity(size_cs);
    cs.push(y[0]);
    for i in 0..size_cs - 1 {
        cs.push(cs[i] + y[(i + 1) * lag]);
    }

    let x_reg: Vec<f64> = (1..=tau[n_tau - 1]).map(|v| v as f64).collect();
    let fluct: Vec<f64> = tau
        .iter()
        .map(|&t| {
            let n_buffer = size_cs / t;
            let mut acc = 0.0;
            for j in 0..n_buffer {
                let seg = &cs[j * t..(j + 1) * t];
                let (m, b) = linreg(&x_reg[..t], seg);
                let resid = seg.iter().enumerate().map(|(k, v)| v - (m * (k + 1) as f64 + b));
                match how {
                    Fluctuation::RsRange => {
                        let (lo, hi) = resid.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                            (lo.min(r), hi.max(r))
                        });
                        acc += (hi - lo).powi(2);
                    }
                    Fluctuation::Dfa => acc += resid.map(|r| r * r).sum::<f64>(),
                }
            }
            match how {
                Fluctuation::RsRange => (acc / n_buffer as f64).sqrt(),
                Fluctuation::Dfa => (acc / (n_buffer * t) as f64).sqrt(),
            }
        })
        .collect();

    let log_tt: Vec<f64> = tau.iter().map(|&t| (t as f64).ln()).collect();
    let log_ff: Vec<f64> = fluct.iter().map(|f| f.ln()).collect();
    let ntt = n_tau;
    let sserr: Vec<f64> = (MIN_POINTS..ntt - MIN_POINTS + 1)
        .map(|i| {
            let (m1, b1) = linreg(&log_tt[..i], &log_ff[..i]);
            let (m2, b2) = linreg(&log_tt[i - 1..], &log_ff[i - 1..]);
            let left: Vec<f64> = (0..i).map(|j| log_tt[j] * m1 + b1 - log_ff[j]).collect();
            let right: Vec<f64> = (i - 1..ntt).map(|j| log_tt[j] * m2 + b2 - log_ff[j]).collect();
            norm(&left) + norm(&right)
        })
        .collect();
    let minimum = min_of(&sserr);
    let first_min = sserr
        .iter()
        .position(|&s| s == minimum)
        .map_or(0.0, |i| (i + MIN_POINTS - 1) as f64);
    (first_min + 1.0) / ntt as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_midpoint_rule() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert!((quantile(&s, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn fft_autocorrelation_is_normalized() {
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let acf = autocorrelations(&y);
        assert_eq!(acf.len(), 5);
        assert!((acf[0] - 1.0).abs() < 1e-15);
        let m = mean(&y);
        let denom: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let lag1: f64 = (0..4).map(|i| (y[i] - m) * (y[i + 1] - m)).sum::<f64>() / denom;
        assert!((acf[1] - lag1).abs() < 1e-12);
    }

    #[test]
    fn longest_stretch_reference_quirks() {
        // The final position always closes a run.
        let bin = [true, true, true];
        assert_eq!(longest_stretch(&bin, false, 4), 2.0);
        let bin = [false, true, true, false];
        assert_eq!(longest_stretch(&bin, false, 5), 3.0);
    }

    #[test]
    fn spline_reproduces_cubic() {
        let y: Vec<f64> = (0..40).map(|i| 0.5 + 0.1 * i as f64 - 0.002 * (i * i) as f64).collect();
        let s = spline_fit(&y).unwrap();
        for (a, b) in y.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn motif_entropy_of_alternating_symbols() {
        // Period-3 ramp visits each symbol pair (1,2), (2,3), (3,1) equally.
        let y: Vec<f64> = (0..31).map(|i| (i % 3) as f64).collect();
        let h = motif_three_quantile_hh(&y);
        assert!((h - 3f64.ln()).abs() < 1e-12, "{h}");
    }
}
