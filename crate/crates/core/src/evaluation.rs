//! Identification (ranking, CMC) and verification (ROC, error rates,
//! equal-error calibration) protocols, plus their CSV and SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{score, Metric, Rule};
use crate::template::Template;

/// Ranks use at most this many entries unless asked otherwise.
pub const DEFAULT_TOP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub rule: Rule,
    pub metric: Metric,
    /// Lower is better; `+inf` for comparisons that cannot succeed.
    pub score: f64,
}

impl MatchRecord {
    pub fn is_genuine(&self) -> bool {
        self.probe_id == self.gallery_id
    }
}

fn rank_order(a: &MatchRecord, b: &MatchRecord) -> std::cmp::Ordering {
    a.score.total_cmp(&b.score).then_with(|| a.gallery_id.cmp(&b.gallery_id))
}

/// Scores of `probe` against every gallery entry, best first; ties go to
/// the lexicographically smaller gallery id.
pub fn rank_gallery(
    probe: &Template,
    gallery: &[Template],
    rule: Rule,
    metric: Metric,
    config: &RunConfig,
) -> Result<Vec<MatchRecord>> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let mut records: Vec<MatchRecord> = gallery
        .par_iter()
        .map(|g| MatchRecord {
            probe_id: probe.subject_id.clone(),
            gallery_id: g.subject_id.clone(),
            rule,
            metric,
            score: score(probe, g, rule, metric, config),
        })
        .collect();
    records.sort_by(rank_order);
    Ok(records)
}

/// The `k` best gallery entries for `probe`.
pub fn identify(
    probe: &Template,
    gallery: &[Template],
    k: usize,
    rule: Rule,
    metric: Metric,
    config: &RunConfig,
) -> Result<Vec<MatchRecord>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut ranked = rank_gallery(probe, gallery, rule, metric, config)?;
    ranked.truncate(k);
    Ok(ranked)
}

/// Sorts already scored records into a ranking.
pub fn rank_records(mut records: Vec<MatchRecord>) -> Vec<MatchRecord> {
    records.sort_by(rank_order);
    records
}

/// One-based position of the probe's own subject in a ranking.
pub fn rank_of(ranking: &[MatchRecord]) -> Option<usize> {
    ranking.iter().position(MatchRecord::is_genuine).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    /// `(rank, identification rate)` for ranks `1..=gallery_size`.
    pub points: Vec<(usize, f64)>,
}

impl CmcCurve {
    pub fn rate_at(&self, rank: usize) -> f64 {
        self.points
            .iter()
            .rev()
            .find(|(r, _)| *r <= rank)
            .map_or(0.0, |p| p.1)
    }
}

/// Fraction of probes whose own subject appears at or above each rank.
pub fn cmc_curve(rankings: &[Vec<MatchRecord>], gallery_size: usize) -> CmcCurve {
    let mut counts = vec![0usize; gallery_size + 1];
    for r in rankings {
        if let Some(rank) = rank_of(r) {
            if rank <= gallery_size {
                counts[rank] += 1;
            }
        }
    }
    let n = rankings.len().max(1) as f64;
    let mut acc = 0;
    let points = (1..=gallery_size)
        .map(|rank| {
            acc += counts[rank];
            (rank, acc as f64 / n)
        })
        .collect();
    CmcCurve { points }
}

/// Outcome of one verification attempt against ground truth. `TrueNegative`
/// is a correctly rejected impostor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

impl Label {
    pub fn new(genuine: bool, accept: bool) -> Self {
        match (genuine, accept) {
            (true, true) => Label::TruePositive,
            (true, false) => Label::FalseNegative,
            (false, true) => Label::FalsePositive,
            (false, false) => Label::TrueNegative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::TruePositive => "TP",
            Label::FalsePositive => "FP",
            Label::TrueNegative => "TN",
            Label::FalseNegative => "FN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub score: f64,
    pub accept: bool,
    pub label: Label,
}

/// Accepts iff the score does not exceed `threshold`; the label compares
/// the decision with the subject ids.
pub fn verify(
    probe: &Template,
    claimed: &Template,
    threshold: f64,
    rule: Rule,
    metric: Metric,
    config: &RunConfig,
) -> Verification {
    let s = score(probe, claimed, rule, metric, config);
    let accept = s <= threshold;
    Verification {
        score: s,
        accept,
        label: Label::new(probe.subject_id == claimed.subject_id, accept),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Count of sorted values `<= t`.
fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|v| v.total_cmp(&t).is_le())
}

/// One point per distinct score used as the threshold, duplicates of an
/// earlier `(fpr, tpr)` dropped, in increasing threshold order.
pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyScores);
    }
    let (g, i) = (sorted(genuine), sorted(impostor));
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points: Vec<RocPoint> = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let p = RocPoint {
            fpr: count_le(&i, t) as f64 / i.len() as f64,
            tpr: count_le(&g, t) as f64 / g.len() as f64,
            threshold: t,
        };
        if points.last().map_or(true, |q| (q.fpr, q.tpr) != (p.fpr, p.tpr)) {
            points.push(p);
        }
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    /// Mean of false accept and false reject rates at `threshold`.
    pub eer: f64,
    pub false_accept: f64,
    pub false_reject: f64,
}

/// Error rates when accepting scores `<= threshold`.
pub fn error_rates(genuine: &[f64], impostor: &[f64], threshold: f64) -> (f64, f64) {
    let fa = impostor.iter().filter(|s| **s <= threshold).count() as f64 / impostor.len().max(1) as f64;
    let fr = genuine.iter().filter(|s| !(**s <= threshold)).count() as f64 / genuine.len().max(1) as f64;
    (fa, fr)
}

pub const MIN_CALIBRATION_PAIRS: usize = 10;

/// Threshold where false accepts and false rejects are closest, searched
/// over midpoints between consecutive distinct finite scores. Ties go to
/// the lower mean error, then the lower threshold.
pub fn equal_error(genuine: &[f64], impostor: &[f64]) -> Result<Calibration> {
    if genuine.len() < MIN_CALIBRATION_PAIRS || impostor.len() < MIN_CALIBRATION_PAIRS {
        return Err(Error::Protocol(format!(
            "calibration needs at least {MIN_CALIBRATION_PAIRS} genuine and {MIN_CALIBRATION_PAIRS} impostor scores, got {} and {}",
            genuine.len(),
            impostor.len()
        )));
    }
    let mut finite: Vec<f64> = genuine.iter().chain(impostor).copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    finite.dedup();
    let mut candidates = Vec::with_capacity(finite.len() + 1);
    match (finite.first(), finite.last()) {
        (Some(lo), Some(hi)) => {
            candidates.push(lo - 1.0);
            candidates.extend(finite.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            candidates.push(hi + 1.0);
        }
        _ => candidates.push(0.0),
    }
    let mut best: Option<Calibration> = None;
    for t in candidates {
        let (fa, fr) = error_rates(genuine, impostor, t);
        let c = Calibration {
            threshold: t,
            eer: 0.5 * (fa + fr),
            false_accept: fa,
            false_reject: fr,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let (gap, bgap) = ((fa - fr).abs(), (b.false_accept - b.false_reject).abs());
                gap < bgap || (gap == bgap && c.eer < b.eer)
            }
        };
        if better {
            best = Some(c);
        }
    }
    let best = best.expect("at least one candidate");
    if best.eer >= 0.5 {
        log::warn!("calibration scores do not separate genuine from impostor pairs");
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub rule: Rule,
    pub metric: Metric,
    /// Rank-1 identification rate in percent, when identification ran.
    pub rank1: Option<f64>,
    pub accuracy: f64,
    /// Accepted impostors, percent of impostor attempts.
    pub fp: f64,
    /// Rejected genuine attempts, percent of genuine attempts.
    pub tn: f64,
    pub note: &'static str,
}

/// Note on the fused-rule pair-count cell, which has no reference row.
pub const SUPPLEMENTARY: &str = "supplementary";

fn report_note(rule: Rule, metric: Metric) -> &'static str {
    if (rule, metric) == (Rule::Ds, Metric::Nn) {
        SUPPLEMENTARY
    } else {
        ""
    }
}

/// Verification error rates per rule and metric; a record is genuine when
/// probe and gallery ids agree. Cells without a threshold are skipped.
pub fn accuracy_report(records: &[MatchRecord], thresholds: &BTreeMap<(Rule, Metric), f64>) -> Vec<ReportRow> {
    let mut cells: BTreeMap<(Rule, Metric), (usize, usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let Some(&t) = thresholds.get(&(r.rule, r.metric)) else {
            continue;
        };
        let c = cells.entry((r.rule, r.metric)).or_default();
        let accept = r.score <= t;
        if r.is_genuine() {
            c.0 += 1;
            c.1 += usize::from(!accept);
        } else {
            c.2 += 1;
            c.3 += usize::from(accept);
        }
    }
    cells
        .into_iter()
        .map(|((rule, metric), (gen, rejected, imp, accepted))| {
            let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
            let (fp, tn) = (pct(accepted, imp), pct(rejected, gen));
            ReportRow {
                rule,
                metric,
                rank1: None,
                accuracy: 100.0 - 0.5 * (fp + tn),
                fp,
                tn,
                note: report_note(rule, metric),
            }
        })
        .collect()
}

pub fn scores_csv(records: &[MatchRecord]) -> String {
    let mut out = String::from("probe_id,gallery_id,rule,metric,score\n");
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.probe_id, r.gallery_id, r.rule, r.metric, r.score).unwrap();
    }
    out
}

pub fn cmc_csv(curve: &CmcCurve) -> String {
    let mut out = String::from("rank,rate\n");
    for (rank, rate) in &curve.points {
        writeln!(out, "{rank},{rate}").unwrap();
    }
    out
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold).unwrap();
    }
    out
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("rule,metric,rank1,accuracy,fp,tn,note\n");
    for r in rows {
        let rank1 = r.rank1.map(|v| format!("{v:.2}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.2},{:.2},{:.2},{}",
            r.rule, r.metric, rank1, r.accuracy, r.fp, r.tn, r.note
        )
        .unwrap();
    }
    out
}

/// Minimal line plot over the unit square of `(x, y)` points.
pub fn polyline_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 400.0;
    const H: f64 = 300.0;
    const M: f64 = 40.0;
    let (xmax, ymax) = points
        .iter()
        .fold((1.0f64, 1.0f64), |(a, b), p| (a.max(p.0), b.max(p.1)));
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| {
            let px = M + x / xmax * (W - 2.0 * M);
            let py = H - M - y / ymax * (H - 2.0 * M);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#).unwrap();
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0).unwrap();
    writeln!(
        out,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    )
    .unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 8.0).unwrap();
    writeln!(out, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{y_label}</text>"#, H / 2.0, H / 2.0).unwrap();
    writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, coords.join(" ")).unwrap();
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(probe: &str, gallery: &str, score: f64) -> MatchRecord {
        MatchRecord {
            probe_id: probe.into(),
            gallery_id: gallery.into(),
            rule: Rule::Concat,
            metric: Metric::Euclid,
            score,
        }
    }

    #[test]
    fn hand_ranking_order() {
        let r = rank_records(vec![rec("p", "g1", 0.2), rec("p", "g2", 0.5), rec("p", "g3", 0.1)]);
        let ids: Vec<&str> = r.iter().map(|m| m.gallery_id.as_str()).collect();
        assert_eq!(ids, ["g3", "g1", "g2"]);
        let tied = rank_records(vec![rec("p", "b", 0.1), rec("p", "a", 0.1), rec("p", "c", f64::INFINITY)]);
        assert_eq!(tied[0].gallery_id, "a");
        assert_eq!(tied[2].gallery_id, "c");
    }

    #[test]
    fn cmc_by_hand() {
        // Probe a found at rank 1, probe b at rank 3.
        let a = rank_records(vec![rec("a", "a", 0.1), rec("a", "b", 0.2), rec("a", "c", 0.3), rec("a", "d", 0.4)]);
        let b = rank_records(vec![rec("b", "a", 0.1), rec("b", "c", 0.2), rec("b", "b", 0.3), rec("b", "d", 0.4)]);
        let c = cmc_curve(&[a.clone(), b], 4);
        let rates: Vec<f64> = c.points.iter().map(|p| p.1).collect();
        assert_eq!(rates, [0.5, 0.5, 1.0, 1.0]);
        assert_eq!(c.rate_at(2), 0.5);
        let perfect = cmc_curve(&[a], 4);
        assert!(perfect.points.iter().all(|p| p.1 == 1.0));
    }

    #[test]
    fn roc_hand_list() {
        let c = roc_curve(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        let pts: Vec<(f64, f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr, p.threshold)).collect();
        assert_eq!(pts, [(0.0, 0.5, 0.1), (0.0, 1.0, 0.2), (0.5, 1.0, 0.3), (1.0, 1.0, 0.4)]);
        assert!(roc_curve(&[], &[0.1]).is_err());
    }

    #[test]
    fn equal_error_separable_and_identical() {
        let g: Vec<f64> = (0..10).map(|i| 0.1 + 0.01 * i as f64).collect();
        let i: Vec<f64> = (0..10).map(|k| 0.5 + 0.01 * k as f64).collect();
        let c = equal_error(&g, &i).unwrap();
        assert_eq!(c.eer, 0.0);
        assert!(c.threshold > 0.19 && c.threshold < 0.5);
        let same = equal_error(&g, &g).unwrap();
        assert_eq!(same.eer, 0.5);
        assert!(matches!(equal_error(&g[..3], &i), Err(Error::Protocol(_))));
    }

    #[test]
    fn accuracy_by_hand() {
        let mut records = Vec::new();
        for k in 0..100 {
            records.push(rec("s", "s", 0.1));
            records.push(rec("s", &format!("o{k}"), if k == 0 { 0.1 } else { 0.9 }));
        }
        let t = BTreeMap::from([((Rule::Concat, Metric::Euclid), 0.5)]);
        let rows = accuracy_report(&records, &t);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fp, 1.0);
        assert_eq!(rows[0].tn, 0.0);
        assert_eq!(rows[0].accuracy, 99.5);
        assert!(accuracy_report(&[], &t).is_empty());
        assert_eq!(report_csv(&[]), "rule,metric,rank1,accuracy,fp,tn,note\n");
    }

    #[test]
    fn labels() {
        assert_eq!(Label::new(true, true), Label::TruePositive);
        assert_eq!(Label::new(false, true), Label::FalsePositive);
        assert_eq!(Label::new(false, false).as_str(), "TN");
        assert_eq!(Label::new(true, false).as_str(), "FN");
    }
}
