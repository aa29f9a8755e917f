//! Confusion-matrix skill scores, rank-based ROC AUC, macro one-vs-rest
//! averaging and mean ± std aggregation across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `None` marks a metric whose denominator vanished; it renders as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub tss: Option<f64>,
    pub hss2: Option<f64>,
    pub f1: Option<f64>,
    pub gs: Option<f64>,
    pub roc_auc: Option<f64>,
    pub n: u64,
    pub positive_class: String,
}

/// Column order of the summary tables.
pub const METRIC_NAMES: [&str; 6] = ["accuracy", "tss", "hss2", "f1", "gs", "roc_auc"];

impl MetricReport {
    pub fn values(&self) -> [Option<f64>; 6] {
        [self.accuracy, self.tss, self.hss2, self.f1, self.gs, self.roc_auc]
    }
}

pub fn confusion<S: AsRef<str>, T: AsRef<str>>(truths: &[S], preds: &[T], positive_class: &str) -> Result<ConfusionCounts> {
    if truths.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: truths.len(),
            right: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset("no predictions to score".into()));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (t, p) in truths.iter().zip(preds) {
        match (t.as_ref() == positive_class, p.as_ref() == positive_class) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

pub fn skill_scores(c: ConfusionCounts, positive_class: &str) -> MetricReport {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let total = tp + fp + fn_ + tn;
    let tss = match (ratio(tp, tp + fn_), ratio(fp, fp + tn)) {
        (Some(tpr), Some(fpr)) => Some(tpr - fpr),
        _ => None,
    };
    let hss2 = ratio(
        2.0 * (tp * tn - fp * fn_),
        (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn),
    );
    let gs = ratio((tp + fp) * (tp + fn_), total).and_then(|ch| ratio(tp - ch, tp + fp + fn_ - ch));
    MetricReport {
        counts: c,
        accuracy: ratio(tp + tn, total),
        tss,
        hss2,
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
        gs,
        roc_auc: None,
        n: c.total(),
        positive_class: positive_class.to_string(),
    }
}

/// Mann–Whitney AUC with average ranks for tied scores. `None` unless both
/// classes are present.
pub fn roc_auc(scores: &[f64], is_positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != is_positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: is_positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidDataset("NaN score".into()));
    }
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    let n_neg = is_positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| is_positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// Skill scores plus AUC from per-instance positive-class scores.
pub fn binary_report<S: AsRef<str>, T: AsRef<str>>(
    truths: &[S],
    preds: &[T],
    scores: &[f64],
    positive_class: &str,
) -> Result<MetricReport> {
    let mut report = skill_scores(confusion(truths, preds, positive_class)?, positive_class);
    let is_pos: Vec<bool> = truths.iter().map(|t| t.as_ref() == positive_class).collect();
    report.roc_auc = roc_auc(scores, &is_pos)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroValue {
    pub value: Option<f64>,
    /// Number of classes whose value was undefined and left out.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub per_class: BTreeMap<String, MetricReport>,
    pub macro_average: BTreeMap<String, MacroValue>,
}

/// Each class in turn is positive. `scores[i][k]` is the score of
/// `classes[k]` for instance `i`.
pub fn macro_one_vs_rest<S: AsRef<str>, T: AsRef<str>>(
    truths: &[S],
    preds: &[T],
    classes: &[String],
    scores: &[Vec<f64>],
) -> Result<MacroReport> {
    if classes.len() < 2 {
        return Err(Error::Labeling("one-vs-rest needs at least two classes".into()));
    }
    if scores.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: truths.len(),
            right: scores.len(),
        });
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes.len()) {
        return Err(Error::LengthMismatch {
            left: classes.len(),
            right: row.len(),
        });
    }
    let mut per_class = BTreeMap::new();
    for (k, class) in classes.iter().enumerate() {
        let col: Vec<f64> = scores.iter().map(|r| r[k]).collect();
        per_class.insert(class.clone(), binary_report(truths, preds, &col, class)?);
    }
    let mut macro_average = BTreeMap::new();
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let defined: Vec<f64> = per_class.values().filter_map(|r| r.values()[m]).collect();
        let skipped = per_class.len() - defined.len();
        let value = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        macro_average.insert(name.to_string(), MacroValue { value, skipped });
    }
    Ok(MacroReport {
        per_class,
        macro_average,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub std_population: Option<f64>,
    pub std_sample: Option<f64>,
    pub n_defined: usize,
}

/// Mean with both population and sample standard deviations for every
/// metric, over the runs where it is defined.
pub fn aggregate(reports: &[MetricReport]) -> BTreeMap<String, Aggregate> {
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let xs: Vec<f64> = reports.iter().filter_map(|r| r.values()[m]).collect();
            let n = xs.len() as f64;
            let mean = ratio(xs.iter().sum(), n);
            let ss = mean.map(|mu| xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>());
            let agg = Aggregate {
                mean,
                std_population: ss.and_then(|s| ratio(s, n)).map(f64::sqrt),
                std_sample: ss.and_then(|s| ratio(s, n - 1.0)).filter(|_| xs.len() > 1).map(f64::sqrt),
                n_defined: xs.len(),
            };
            (name.to_string(), agg)
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

/// Aligned plain-text table, one row per named report.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<name_width$}", "method");
    for name in METRIC_NAMES {
        let _ = write!(out, "  {name:>9}");
    }
    out.push('\n');
    for (name, report) in rows {
        let _ = write!(out, "{name:<name_width$}");
        for v in report.values() {
            let _ = write!(out, "  {:>9}", cell(v));
        }
        out.push('\n');
    }
    out
}

/// CSV summary with one row per run; undefined values are left empty.
pub fn render_summary_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = format!("run,{}\n", METRIC_NAMES.join(","));
    for (name, report) in rows {
        out.push_str(name);
        for v in report.values() {
            out.push(',');
            if let Some(x) = v {
                let _ = write!(out, "{x}");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn confusion_enumeration() {
        let c = confusion(&["F", "F", "NF"], &["F", "NF", "NF"], "F").unwrap();
        assert_eq!(c, counts(1, 1, 0, 1));
        let s = confusion(&["F", "F", "NF"], &["F", "NF", "NF"], "NF").unwrap();
        assert_eq!((s.tp, s.fp, s.fn_, s.tn), (c.tn, c.fn_, c.fp, c.tp));
        assert!(confusion(&["F"], &["F", "F"], "F").is_err());
        assert!(confusion::<&str, &str>(&[], &[], "F").is_err());
    }

    #[test]
    fn hand_fixture() {
        let r = skill_scores(counts(3, 2, 10, 85), "F");
        assert!((r.tss.unwrap() - 0.494737).abs() < 1e-6);
        assert!((r.hss2.unwrap() - 470.0 / 1670.0).abs() < 1e-12);
        assert!((r.f1.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.gs.unwrap() - 2.35 / 14.35).abs() < 1e-12);
        assert_eq!(r.accuracy, Some(0.88));
    }

    #[test]
    fn perfect_and_majority() {
        let r = skill_scores(counts(10, 0, 0, 90), "F");
        assert_eq!((r.accuracy, r.tss, r.f1), (Some(1.0), Some(1.0), Some(1.0)));
        let r = skill_scores(counts(0, 5, 0, 95), "F");
        assert_eq!(r.tss, Some(0.0));
        assert_eq!(r.f1, Some(0.0));
    }

    #[test]
    fn undefined_markers() {
        let r = skill_scores(counts(0, 0, 0, 10), "F");
        assert_eq!(r.tss, None);
        assert_eq!(r.f1, None);
        assert_eq!(r.gs, None);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["tss"].is_null());
        assert_eq!(json["counts"]["fn"], 0);
    }

    #[test]
    fn auc_fixtures() {
        let auc = roc_auc(&[0.9, 0.4, 0.5, 0.1, 0.2], &[true, true, false, false, false]).unwrap();
        assert_eq!(auc, Some(5.0 / 6.0));
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, false]).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.3, 0.4], &[true, true]).unwrap(), None);
    }

    #[test]
    fn macro_binary_symmetry() {
        let truths = ["A", "A", "B", "B", "B"];
        let preds = ["A", "B", "B", "B", "A"];
        let p_a = [0.9, 0.3, 0.2, 0.4, 0.6];
        let scores: Vec<Vec<f64>> = p_a.iter().map(|&p| vec![p, 1.0 - p]).collect();
        let classes = vec!["A".to_string(), "B".to_string()];
        let m = macro_one_vs_rest(&truths, &preds, &classes, &scores).unwrap();
        let a = m.per_class["A"].roc_auc.unwrap();
        let b = m.per_class["B"].roc_auc.unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((m.macro_average["roc_auc"].value.unwrap() - a).abs() < 1e-12);
        assert!((m.per_class["A"].tss.unwrap() - m.per_class["B"].tss.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn macro_skips_undefined() {
        let truths = ["A", "B", "A", "B"];
        let preds = ["A", "B", "B", "B"];
        let classes = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let scores = vec![vec![0.5, 0.3, 0.2]; 4];
        let m = macro_one_vs_rest(&truths, &preds, &classes, &scores).unwrap();
        assert_eq!(m.per_class["C"].f1, None);
        assert_eq!(m.macro_average["f1"].skipped, 1);
        let fa = m.per_class["A"].f1.unwrap();
        let fb = m.per_class["B"].f1.unwrap();
        assert!((m.macro_average["f1"].value.unwrap() - (fa + fb) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_both_std_conventions() {
        let mk = |acc: f64| MetricReport {
            accuracy: Some(acc),
            ..skill_scores(counts(1, 1, 1, 1), "F")
        };
        let agg = aggregate(&[mk(0.5), mk(0.7), mk(0.9)]);
        let a = &agg["accuracy"];
        assert!((a.mean.unwrap() - 0.7).abs() < 1e-12);
        assert!((a.std_population.unwrap() - (0.08f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((a.std_sample.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(agg["roc_auc"].n_defined, 0);
        assert_eq!(agg["roc_auc"].mean, None);
    }

    #[test]
    fn table_layout() {
        let r = skill_scores(counts(3, 2, 10, 85), "F");
        let t = render_table(&[("excon".into(), r.clone())]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[1].contains("undefined"));
        let csv = render_summary_csv(&[("excon".into(), r)]);
        assert!(csv.starts_with("run,accuracy,tss,hss2,f1,gs,roc_auc\nexcon,0.88,"));
        assert!(csv.trim_end().ends_with(','));
    }
}
