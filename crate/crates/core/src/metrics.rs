//! Pixel-level parsing metrics: accuracy, foreground accuracy and
//! macro-averaged precision, recall and F1 from a confusion matrix.

use crate::error::{invalid, Result};
use crate::grid::LabelMap;

/// `counts[gt * K + pred]` pixel counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Pixels with ground truth `gt` predicted as `pred`.
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn gt_count(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn pred_count(&self, class: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, class)).sum()
    }

    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if !pred.same_extent(gt.width(), gt.height()) {
            return Err(invalid(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        pred.check_classes(self.classes)?;
        gt.check_classes(self.classes)?;
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            self.counts[g as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) -> Result<()> {
        if other.classes != self.classes {
            return Err(invalid("cannot merge confusions with different class counts"));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

pub fn confusion(pred: &LabelMap, gt: &LabelMap, classes: usize) -> Result<Confusion> {
    let mut c = Confusion::new(classes);
    c.add(pred, gt)?;
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricsOptions {
    pub background: usize,
    /// Include the background class in the macro averages.
    pub average_background: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            background: 0,
            average_background: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub fg_accuracy: f64,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// Classes entering the macro averages.
    pub included: Vec<bool>,
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(conf: &Confusion, opts: &MetricsOptions) -> Result<MetricsReport> {
    let total = conf.total();
    if total == 0 {
        return Err(invalid("no pixels accumulated"));
    }
    let k = conf.classes();
    if opts.background >= k {
        return Err(invalid("background class out of range"));
    }
    let accuracy = conf.trace() as f64 / total as f64;

    let bg = opts.background;
    let fg_total = total - conf.gt_count(bg);
    let fg_correct = conf.trace() - conf.get(bg, bg);
    let fg_accuracy = if fg_total == 0 {
        1.0
    } else {
        fg_correct as f64 / fg_total as f64
    };

    let mut precision = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    let mut included = Vec::with_capacity(k);
    for c in 0..k {
        let tp = conf.get(c, c);
        let (gt_n, pred_n) = (conf.gt_count(c), conf.pred_count(c));
        let p = ratio(tp, pred_n);
        let r = ratio(tp, gt_n);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        included.push(gt_n + pred_n > 0 && (opts.average_background || c != bg));
    }
    let mean = |v: &[f64]| {
        let (sum, n) = v
            .iter()
            .zip(&included)
            .filter(|(_, &inc)| inc)
            .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    Ok(MetricsReport {
        accuracy,
        fg_accuracy,
        avg_precision: mean(&precision),
        avg_recall: mean(&recall),
        avg_f1: mean(&f1),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        included,
        confusion: conf.clone(),
    })
}

/// CSV header: method label, one column per class, then the five summary metrics.
pub fn table_header(class_names: &[String]) -> String {
    let mut cols = vec!["method".to_string()];
    cols.extend(class_names.iter().cloned());
    cols.extend(
        ["accuracy", "fg_accuracy", "avg_precision", "avg_recall", "avg_f1"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// One CSV row for a report.
pub fn table_row(method: &str, report: &MetricsReport) -> String {
    let mut cols = vec![method.to_string()];
    cols.extend(report.per_class_f1.iter().map(|v| format!("{v:.4}")));
    cols.extend(
        [
            report.accuracy,
            report.fg_accuracy,
            report.avg_precision,
            report.avg_recall,
            report.avg_f1,
        ]
        .iter()
        .map(|v| format!("{v:.4}")),
    );
    cols.join(",")
}

/// Aggregates per-video reports by summing their confusions, and returns the
/// combined report with its CSV row.
pub fn report_table(
    method: &str,
    reports: &[MetricsReport],
    opts: &MetricsOptions,
) -> Result<(MetricsReport, String)> {
    let first = reports
        .first()
        .ok_or_else(|| invalid("no reports to aggregate"))?;
    let mut sum = Confusion::new(first.confusion.classes());
    for r in reports {
        sum.merge(&r.confusion)?;
    }
    let report = compute_metrics(&sum, opts)?;
    let row = table_row(method, &report);
    Ok((report, row))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(data: &[u8]) -> LabelMap {
        LabelMap::new(2, data.len() / 2, data.to_vec()).unwrap()
    }

    #[test]
    fn hand_counted_fixture() {
        let gt = lm(&[0, 0, 1, 1]);
        let pred = lm(&[0, 1, 1, 1]);
        let c = confusion(&pred, &gt, 2).unwrap();
        assert_eq!((c.get(0, 0), c.get(0, 1), c.get(1, 0), c.get(1, 1)), (1, 1, 0, 2));
        let m = compute_metrics(&c, &MetricsOptions::default()).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.fg_accuracy, 1.0);
        assert!((m.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class_f1[1] - 0.8).abs() < 1e-12);
        assert!((m.avg_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let gt = lm(&[0, 1, 2, 2, 1, 0]);
        let c = confusion(&gt, &gt, 4).unwrap();
        assert_eq!(c.gt_count(3), 0);
        let m = compute_metrics(&c, &MetricsOptions::default()).unwrap();
        for v in [m.accuracy, m.fg_accuracy, m.avg_precision, m.avg_recall, m.avg_f1] {
            assert_eq!(v, 1.0);
        }
        assert!(!m.included[3]);
    }

    #[test]
    fn background_only() {
        let gt = lm(&[0, 0, 0, 0]);
        let m = compute_metrics(&confusion(&gt, &gt, 3).unwrap(), &MetricsOptions::default())
            .unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.fg_accuracy, 1.0);
    }

    #[test]
    fn excluding_background_from_average() {
        let c = confusion(&lm(&[0, 1, 1, 1]), &lm(&[0, 0, 1, 1]), 2).unwrap();
        let opts = MetricsOptions {
            average_background: false,
            ..MetricsOptions::default()
        };
        let m = compute_metrics(&c, &opts).unwrap();
        assert!((m.avg_f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(confusion(&lm(&[0, 1]), &lm(&[0, 1, 0, 1]), 2).is_err());
        assert!(confusion(&lm(&[0, 2]), &lm(&[0, 1]), 2).is_err());
        assert!(compute_metrics(&Confusion::new(2), &MetricsOptions::default()).is_err());
    }

    #[test]
    fn table_aggregation() {
        let c = confusion(&lm(&[0, 1, 1, 1]), &lm(&[0, 0, 1, 1]), 2).unwrap();
        let r = compute_metrics(&c, &MetricsOptions::default()).unwrap();
        let (one, row) = report_table("x", std::slice::from_ref(&r), &MetricsOptions::default()).unwrap();
        assert_eq!(one, r);
        let (two, _) =
            report_table("x", &[r.clone(), r.clone()], &MetricsOptions::default()).unwrap();
        assert_eq!(two.avg_f1, r.avg_f1);
        assert_eq!(row, "x,0.6667,0.8000,0.7500,1.0000,0.8333,0.7500,0.7333");
        assert_eq!(
            table_header(&["bk".into(), "a".into()]),
            "method,bk,a,accuracy,fg_accuracy,avg_precision,avg_recall,avg_f1"
        );
    }
}
