//! Precision-recall evaluation of detection logs.
//!
//! Conventions, also recorded in the emitted report:
//! - a query counts toward the recall denominator only if it has at least one
//!   ground-truth partner older than the temporal gap;
//! - a fired detection is a true positive only if its query is in that
//!   denominator set and the retrieved frame lies within the ground-truth
//!   tolerance of one of the query's partners;
//! - precision at zero fired detections is 1 by convention.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::pipeline::LogRow;
use crate::scalar::Real;

/// One point of the precision-recall sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrPoint<T> {
    pub threshold: T,
    pub precision: T,
    pub recall: T,
}

/// Full evaluation output.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport<T> {
    pub curve: Vec<PrPoint<T>>,
    pub auc: T,
    /// Recall@N for N in {1, 5, 10}.
    pub recall_at: BTreeMap<usize, T>,
    pub max_precision_at_full_recall: T,
    pub max_recall_at_full_precision: T,
    pub mean_time_ms: f64,
    pub prt: T,
    pub omega: T,
    /// Size of the recall denominator: queries with an eligible partner.
    pub positive_queries: usize,
    /// Human-readable record of the evaluation conventions above.
    pub conventions: String,
}

/// Queries owning at least one ground-truth partner older than the temporal
/// gap; this is the recall denominator.
fn positive_queries<T: Real>(
    log: &[LogRow<T>],
    gt: &GroundTruth,
    temporal_gap: usize,
) -> BTreeSet<u32> {
    log.iter()
        .map(|row| row.query)
        .filter(|&q| {
            gt.partners(q)
                .iter()
                .any(|&p| q as i64 - p as i64 > temporal_gap as i64)
        })
        .collect()
}

/// Sweeps the decision threshold over the distinct best-candidate scores of
/// the log and reports precision/recall at each.
pub fn pr_curve<T: Real>(
    log: &[LogRow<T>],
    gt: &GroundTruth,
    temporal_gap: usize,
) -> Result<Vec<PrPoint<T>>> {
    if gt.positives.is_empty() {
        return Err(Error::Eval(
            "ground truth has no positive pairs; recall is undefined".into(),
        ));
    }
    let positives = positive_queries(log, gt, temporal_gap);
    if positives.is_empty() {
        return Err(Error::Eval(
            "no query has a ground-truth partner older than the temporal gap; recall is undefined"
                .into(),
        ));
    }
    let denom = positives.len();

    // Best candidate per query, regardless of the run's accept threshold.
    let detections: Vec<(u32, u32, T)> = log
        .iter()
        .filter_map(|row| row.ranked.first().map(|&(fid, s)| (row.query, fid, s)))
        .collect();

    let mut thresholds: Vec<T> = detections.iter().map(|&(_, _, s)| s).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();

    if thresholds.is_empty() {
        // No candidates anywhere: recall 0, precision 1 by convention.
        return Ok(vec![PrPoint {
            threshold: T::one(),
            precision: T::one(),
            recall: T::zero(),
        }]);
    }

    let mut curve = Vec::with_capacity(thresholds.len());
    for tau in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for &(q, r, s) in &detections {
            if s < tau {
                continue;
            }
            if positives.contains(&q) && gt.is_correct(q, r) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let fired = tp + fp;
        let precision = if fired == 0 {
            T::one()
        } else {
            T::from_usize(tp).unwrap() / T::from_usize(fired).unwrap()
        };
        let recall = T::from_usize(tp).unwrap() / T::from_usize(denom).unwrap();
        curve.push(PrPoint {
            threshold: tau,
            precision,
            recall,
        });
    }
    Ok(curve)
}

/// Fraction of denominator queries whose top-`n` ranked list contains a frame
/// within ground-truth tolerance.
pub fn recall_at_n<T: Real>(
    log: &[LogRow<T>],
    gt: &GroundTruth,
    temporal_gap: usize,
    n: usize,
) -> Result<T> {
    if gt.positives.is_empty() {
        return Err(Error::Eval(
            "ground truth has no positive pairs; recall is undefined".into(),
        ));
    }
    let positives = positive_queries(log, gt, temporal_gap);
    if positives.is_empty() {
        return Err(Error::Eval(
            "no query has a ground-truth partner older than the temporal gap; recall is undefined"
                .into(),
        ));
    }
    let mut hits = 0usize;
    for row in log {
        if !positives.contains(&row.query) {
            continue;
        }
        if row
            .ranked
            .iter()
            .take(n)
            .any(|&(fid, _)| gt.is_correct(row.query, fid))
        {
            hits += 1;
        }
    }
    Ok(T::from_usize(hits).unwrap() / T::from_usize(positives.len()).unwrap())
}

/// Trapezoidal area under the recall-sorted curve, extended to recall 0 at
/// the curve's maximum precision. Returns 0 for an empty curve.
pub fn auc<T: Real>(curve: &[PrPoint<T>]) -> T {
    if curve.is_empty() {
        return T::zero();
    }
    let mut points: Vec<(T, T)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let max_precision = curve
        .iter()
        .map(|p| p.precision)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let two = T::from_f64(2.0).unwrap();
    let mut area = T::zero();
    let mut prev = (T::zero(), max_precision);
    for &(r, p) in &points {
        area = area + (r - prev.0) * (p + prev.1) / two;
        prev = (r, p);
    }
    area
}

/// Composite precision-recall-time score `auc / (1 + omega * mean_time_s)`.
pub fn prt<T: Real>(auc_value: T, mean_time_s: T, omega: T) -> T {
    auc_value / (T::one() + omega * mean_time_s)
}

/// Runs the whole evaluation over a log and ground truth.
pub fn evaluate<T: Real>(
    log: &[LogRow<T>],
    gt: &GroundTruth,
    temporal_gap: usize,
    omega: T,
) -> Result<EvalReport<T>> {
    let curve = pr_curve(log, gt, temporal_gap)?;
    let auc_value = auc(&curve);
    let mut recall_at = BTreeMap::new();
    for n in [1usize, 5, 10] {
        recall_at.insert(n, recall_at_n(log, gt, temporal_gap, n)?);
    }
    let max_precision_at_full_recall = curve
        .iter()
        .filter(|p| p.recall == T::one())
        .map(|p| p.precision)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let max_recall_at_full_precision = curve
        .iter()
        .filter(|p| p.precision == T::one())
        .map(|p| p.recall)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let mean_time_ms = if log.is_empty() {
        0.0
    } else {
        log.iter().map(|r| r.elapsed_ms).sum::<f64>() / log.len() as f64
    };
    let prt_value = prt(
        auc_value,
        T::from_f64(mean_time_ms / 1e3).unwrap(),
        omega,
    );
    let positive_count = positive_queries(log, gt, temporal_gap).len();
    Ok(EvalReport {
        curve,
        auc: auc_value,
        recall_at,
        max_precision_at_full_recall,
        max_recall_at_full_precision,
        mean_time_ms,
        prt: prt_value,
        omega,
        positive_queries: positive_count,
        conventions: "recall denominator counts queries with a ground-truth partner older than \
                      the temporal gap; true positives require the query to be in that set; \
                      precision at zero detections is 1"
            .into(),
    })
}

/// `pr_curve.csv` contents: `threshold,precision,recall` per point.
pub fn pr_curve_csv<T: Real>(curve: &[PrPoint<T>]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    out
}

/// `summary.csv` contents: one header line plus one value line.
pub fn summary_csv<T: Real>(report: &EvalReport<T>) -> String {
    let zero = T::zero();
    let r1 = report.recall_at.get(&1).copied().unwrap_or(zero);
    let r5 = report.recall_at.get(&5).copied().unwrap_or(zero);
    let r10 = report.recall_at.get(&10).copied().unwrap_or(zero);
    format!(
        "auc,r_at_1,r_at_5,r_at_10,mean_time_ms,prt\n{},{},{},{},{},{}\n",
        report.auc, r1, r5, r10, report.mean_time_ms, report.prt
    )
}
