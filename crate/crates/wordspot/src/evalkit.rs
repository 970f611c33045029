//! Retrieval and localization metrics: precision/recall/F-measure, average
//! precision, PR curves, and span boundary error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spotting::SpotHypothesis;

/// An annotated keyword occurrence, in frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpan {
    pub line_id: String,
    pub start: usize,
    pub end: usize,
    pub keyword: String,
}

#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    pub iou_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_threshold > 0.0 && self.iou_threshold <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig("iou_threshold must be in (0, 1]".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub map: Option<f64>,
    pub mean_boundary_error: Option<f64>,
}

/// Interval intersection-over-union of [a1, b1) and [a2, b2).
pub fn interval_iou(a1: usize, b1: usize, a2: usize, b2: usize) -> f64 {
    let inter = b1.min(b2).saturating_sub(a1.max(a2)) as f64;
    let union = (b1.max(b2) - a1.min(a2)) as f64;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// (hypothesis index, truth index) pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy matching: hypotheses in their given (ranked) order each claim the
/// unclaimed truth with the best IoU on the same line and keyword; a claim
/// needs IoU at or above the threshold.
pub fn match_hypotheses(
    hyps: &[SpotHypothesis],
    keyword: &str,
    truths: &[GroundTruthSpan],
    cfg: MatchConfig,
) -> Result<MatchOutcome> {
    cfg.validate()?;
    let mut claimed = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (hi, h) in hyps.iter().enumerate() {
        let mut best = cfg.iou_threshold;
        let mut arg = None;
        for (ti, t) in truths.iter().enumerate() {
            if claimed[ti] || t.line_id != h.line_id || t.keyword != keyword {
                continue;
            }
            let iou = interval_iou(h.a, h.b, t.start, t.end);
            if iou >= best && arg.map_or(true, |a: usize| iou > interval_iou(
                h.a, h.b, truths[a].start, truths[a].end,
            )) {
                best = iou;
                arg = Some(ti);
            }
        }
        if let Some(ti) = arg {
            claimed[ti] = true;
            pairs.push((hi, ti));
        }
    }
    let relevant = truths.iter().filter(|t| t.keyword == keyword).count();
    let tp = pairs.len();
    Ok(MatchOutcome {
        tp,
        fp: hyps.len() - tp,
        fn_: relevant - tp,
        pairs,
    })
}

/// Precision, recall, and F-measure with the 0/0 → 0 convention.
pub fn precision_recall_f(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    (p, r, f_measure(p, r))
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Average precision of a ranked hypothesis list against the truths for one
/// keyword: the mean of precision values at each true-positive rank.
pub fn average_precision(
    ranked: &[SpotHypothesis],
    keyword: &str,
    truths: &[GroundTruthSpan],
    cfg: MatchConfig,
) -> Result<f64> {
    let relevant = truths.iter().filter(|t| t.keyword == keyword).count();
    if relevant == 0 {
        return Err(Error::InvalidConfig(format!(
            "keyword '{keyword}' has no ground truth"
        )));
    }
    let outcome = match_hypotheses(ranked, keyword, truths, cfg)?;
    let is_tp: Vec<bool> = {
        let mut v = vec![false; ranked.len()];
        for &(hi, _) in &outcome.pairs {
            v[hi] = true;
        }
        v
    };
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &tp) in is_tp.iter().enumerate() {
        if tp {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / relevant as f64)
}

/// Mean AP over keywords. Keywords with zero truths are excluded and listed.
pub fn mean_average_precision(
    ranked_per_keyword: &BTreeMap<String, Vec<SpotHypothesis>>,
    truths: &[GroundTruthSpan],
    cfg: MatchConfig,
) -> Result<(Option<f64>, Vec<String>)> {
    let mut aps = Vec::new();
    let mut excluded = Vec::new();
    for (kw, ranked) in ranked_per_keyword {
        if truths.iter().any(|t| &t.keyword == kw) {
            aps.push(average_precision(ranked, kw, truths, cfg)?);
        } else {
            excluded.push(kw.clone());
        }
    }
    let map = if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    };
    Ok((map, excluded))
}

/// One PR-curve sample.
#[derive(Debug, Clone, Copy)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Sweep an acceptance threshold over the scored hypotheses of one keyword.
pub fn pr_curve(
    scored: &[SpotHypothesis],
    keyword: &str,
    truths: &[GroundTruthSpan],
    cfg: MatchConfig,
    score_of: impl Fn(&SpotHypothesis) -> f64,
) -> Result<Vec<PrPoint>> {
    let mut thresholds: Vec<f64> = scored.iter().map(&score_of).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut points = Vec::with_capacity(thresholds.len());
    for &th in &thresholds {
        let kept: Vec<SpotHypothesis> = scored
            .iter()
            .filter(|h| score_of(h) >= th)
            .cloned()
            .collect();
        let o = match_hypotheses(&kept, keyword, truths, cfg)?;
        let (p, r, _) = precision_recall_f(o.tp, o.fp, o.fn_);
        points.push(PrPoint {
            threshold: th,
            precision: p,
            recall: r,
        });
    }
    Ok(points)
}

/// CSV rendering of a PR curve: threshold, precision, recall.
pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    out
}

/// Localization error of a predicted span against its ground truth, as a
/// percentage of the combined extent.
pub fn boundary_error(truth: (usize, usize), pred: (usize, usize)) -> f64 {
    let (gs, ge) = (truth.0 as f64, truth.1 as f64);
    let (ps, pe) = (pred.0 as f64, pred.1 as f64);
    let extent = (gs.min(ps) - ge.max(pe)).abs();
    ((gs - ps).abs() + (ge - pe).abs()) / extent * 100.0
}
