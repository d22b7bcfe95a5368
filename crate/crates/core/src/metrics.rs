//! Group-fairness evaluation over scored predictions: rate-gap metrics,
//! three AUC-based metrics (each with a brute-force pairwise twin used for
//! cross-checking), bucketed distribution distances, and accuracy.
//!
//! All gap metrics return values on [0, 1]; percent-scale presentation is
//! the caller's business. Multi-group aggregation defaults to the worst
//! pair; `mean_adjacent` averages the gaps of adjacent group ids instead.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    /// score thresholded at 0.5
    pub pred: u8,
    pub label: u8,
    pub group: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    pub delta_ed: f64,
    pub intra_auc: f64,
    pub inter_auc: f64,
    pub gauc: f64,
    pub wd: f64,
    pub kl: f64,
}

impl MetricsReport {
    pub const METRIC_NAMES: [&'static str; 9] = [
        "acc", "delta_dp", "delta_eo", "delta_ed", "intra_auc", "inter_auc", "gauc", "wd", "kl",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.acc,
            self.delta_dp,
            self.delta_eo,
            self.delta_ed,
            self.intra_auc,
            self.inter_auc,
            self.gauc,
            self.wd,
            self.kl,
        ]
    }
}

/// How per-pair gaps combine across more than two groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Worst (largest) gap over all group pairs.
    #[default]
    MaxPairs,
    /// Mean gap over pairs of adjacent group ids (ascending order).
    MeanAdjacent,
}

/// `vals` maps a group pair (g < g') to its non-negative gap.
fn aggregate(agg: Aggregation, groups: &[u32], vals: &BTreeMap<(u32, u32), f64>) -> f64 {
    match agg {
        Aggregation::MaxPairs => vals.values().cloned().fold(0.0, f64::max),
        Aggregation::MeanAdjacent => {
            let adj: Vec<f64> = groups
                .windows(2)
                .map(|w| vals[&(w[0], w[1])])
                .collect();
            adj.iter().sum::<f64>() / adj.len() as f64
        }
    }
}

fn present_groups(examples: &[ScoredExample]) -> Vec<u32> {
    let mut gs: Vec<u32> = examples.iter().map(|e| e.group).collect();
    gs.sort_unstable();
    gs.dedup();
    gs
}

fn need_two_groups(groups: &[u32]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::UndefinedMetric {
            stratum: format!("need at least 2 groups, found {}", groups.len()),
        });
    }
    Ok(())
}

// ── accuracy and rate gaps ──

pub fn accuracy(examples: &[ScoredExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to score".into()));
    }
    let correct = examples.iter().filter(|e| e.pred == e.label).count();
    Ok(correct as f64 / examples.len() as f64)
}

struct GroupRates {
    pos_rate: f64,
    tpr: Option<f64>,
    fpr: Option<f64>,
}

fn rates_by_group(examples: &[ScoredExample], groups: &[u32]) -> BTreeMap<u32, GroupRates> {
    let mut out = BTreeMap::new();
    for &g in groups {
        let in_g: Vec<&ScoredExample> = examples.iter().filter(|e| e.group == g).collect();
        let pos_rate =
            in_g.iter().filter(|e| e.pred == 1).count() as f64 / in_g.len() as f64;
        let positives: Vec<&&ScoredExample> = in_g.iter().filter(|e| e.label == 1).collect();
        let negatives: Vec<&&ScoredExample> = in_g.iter().filter(|e| e.label == 0).collect();
        let tpr = (!positives.is_empty())
            .then(|| positives.iter().filter(|e| e.pred == 1).count() as f64 / positives.len() as f64);
        let fpr = (!negatives.is_empty())
            .then(|| negatives.iter().filter(|e| e.pred == 1).count() as f64 / negatives.len() as f64);
        out.insert(g, GroupRates { pos_rate, tpr, fpr });
    }
    out
}

/// Demographic-parity, equalized-opportunity and equalized-odds gaps.
/// The odds gap of a pair is the mean of its TPR and FPR gaps.
pub fn group_gap_metrics(examples: &[ScoredExample]) -> Result<(f64, f64, f64)> {
    group_gap_metrics_with(examples, Aggregation::MaxPairs)
}

pub fn group_gap_metrics_with(
    examples: &[ScoredExample],
    agg: Aggregation,
) -> Result<(f64, f64, f64)> {
    let groups = present_groups(examples);
    need_two_groups(&groups)?;
    let rates = rates_by_group(examples, &groups);
    for (&g, r) in &rates {
        if r.tpr.is_none() {
            return Err(Error::UndefinedMetric {
                stratum: format!("group {g} has no positive labels"),
            });
        }
        if r.fpr.is_none() {
            return Err(Error::UndefinedMetric {
                stratum: format!("group {g} has no negative labels"),
            });
        }
    }
    let mut dp = BTreeMap::new();
    let mut eo = BTreeMap::new();
    let mut ed = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        for &h in &groups[i + 1..] {
            let (a, b) = (&rates[&g], &rates[&h]);
            let tpr_gap = (a.tpr.unwrap() - b.tpr.unwrap()).abs();
            let fpr_gap = (a.fpr.unwrap() - b.fpr.unwrap()).abs();
            dp.insert((g, h), (a.pos_rate - b.pos_rate).abs());
            eo.insert((g, h), tpr_gap);
            ed.insert((g, h), 0.5 * (tpr_gap + fpr_gap));
        }
    }
    Ok((
        aggregate(agg, &groups, &dp),
        aggregate(agg, &groups, &eo),
        aggregate(agg, &groups, &ed),
    ))
}

// ── AUC ──

/// Rank-statistic AUC with midranks for ties: the probability a random
/// positive outscores a random negative, ties counted half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric {
            stratum: format!(
                "AUC needs both classes, got {} positives / {} negatives",
                pos.len(),
                neg.len()
            ),
        });
    }
    // (score, is_positive), sorted by score
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // midrank of the tie block [i, j): ranks are 1-based
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Brute-force twin of [`auc`]: literally counts the pairs. Quadratic; kept
/// as an always-available cross-check.
pub fn auc_pairwise(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric {
            stratum: "AUC needs both classes".into(),
        });
    }
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// The three AUC-style gaps:
/// - intra: gap between the groups' own-group AUCs;
/// - inter: gap between the two cross-group AUCs (positives of one group
///   against negatives of the other);
/// - gauc: how far group membership itself is rankable from scores,
///   `2 |AUC(scores_g, scores_g') - 1/2|`, labels ignored.
pub fn auc_fairness(examples: &[ScoredExample]) -> Result<(f64, f64, f64)> {
    auc_fairness_with(examples, Aggregation::MaxPairs)
}

pub fn auc_fairness_with(
    examples: &[ScoredExample],
    agg: Aggregation,
) -> Result<(f64, f64, f64)> {
    let groups = present_groups(examples);
    need_two_groups(&groups)?;
    let mut pos = BTreeMap::new();
    let mut neg = BTreeMap::new();
    let mut all = BTreeMap::new();
    for &g in &groups {
        let p: Vec<f64> =
            examples.iter().filter(|e| e.group == g && e.label == 1).map(|e| e.score).collect();
        let n: Vec<f64> =
            examples.iter().filter(|e| e.group == g && e.label == 0).map(|e| e.score).collect();
        let a: Vec<f64> = examples.iter().filter(|e| e.group == g).map(|e| e.score).collect();
        if p.is_empty() {
            return Err(Error::UndefinedMetric {
                stratum: format!("group {g} has no positive labels"),
            });
        }
        if n.is_empty() {
            return Err(Error::UndefinedMetric {
                stratum: format!("group {g} has no negative labels"),
            });
        }
        pos.insert(g, p);
        neg.insert(g, n);
        all.insert(g, a);
    }
    let mut intra = BTreeMap::new();
    let mut inter = BTreeMap::new();
    let mut gauc = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        for &h in &groups[i + 1..] {
            let own_g = auc(&pos[&g], &neg[&g])?;
            let own_h = auc(&pos[&h], &neg[&h])?;
            intra.insert((g, h), (own_g - own_h).abs());
            let cross_gh = auc(&pos[&g], &neg[&h])?;
            let cross_hg = auc(&pos[&h], &neg[&g])?;
            inter.insert((g, h), (cross_gh - cross_hg).abs());
            gauc.insert((g, h), 2.0 * (auc(&all[&g], &all[&h])? - 0.5).abs());
        }
    }
    Ok((
        aggregate(agg, &groups, &intra),
        aggregate(agg, &groups, &inter),
        aggregate(agg, &groups, &gauc),
    ))
}

// ── bucketed distribution distances ──

/// Wasserstein-1 between two probability histograms over equal-width
/// buckets, in units of the full range (so one bucket width contributes
/// 1/n_buckets).
pub fn wd_between_histograms(p: &[f64], q: &[f64]) -> f64 {
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        fp += a;
        fq += b;
        total += (fp - fq).abs();
    }
    total / p.len() as f64
}

/// KL(P || Q) with +1e-6 Laplace smoothing and renormalization on both
/// histograms (so empty buckets stay finite).
pub fn kl_between_histograms(p: &[f64], q: &[f64]) -> f64 {
    let smooth = |h: &[f64]| -> Vec<f64> {
        let z: f64 = h.iter().sum::<f64>() + 1e-6 * h.len() as f64;
        h.iter().map(|v| (v + 1e-6) / z).collect()
    };
    let ps = smooth(p);
    let qs = smooth(q);
    ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Bucketed per-group score distributions: pooled min-max normalization,
/// `n_buckets` equal-width bins, then the worst-pair (or adjacent-mean)
/// Wasserstein and KL distances. The Wasserstein side uses the raw
/// normalized histograms (point masses move exactly their bucket distance);
/// only KL is smoothed. All scores equal is defined as (0, 0).
pub fn dist_metrics(examples: &[ScoredExample], n_buckets: usize) -> Result<(f64, f64)> {
    dist_metrics_with(examples, n_buckets, Aggregation::MaxPairs)
}

pub fn dist_metrics_with(
    examples: &[ScoredExample],
    n_buckets: usize,
    agg: Aggregation,
) -> Result<(f64, f64)> {
    if n_buckets < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 buckets, got {n_buckets}"
        )));
    }
    if examples.iter().any(|e| !e.score.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let groups = present_groups(examples);
    need_two_groups(&groups)?;
    let lo = examples.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
    let hi = examples.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok((0.0, 0.0)); // degenerate pooled range
    }
    let mut hists: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &g in &groups {
        let mut h = vec![0.0; n_buckets];
        let mut count = 0usize;
        for e in examples.iter().filter(|e| e.group == g) {
            let z = (e.score - lo) / (hi - lo);
            let b = ((z * n_buckets as f64) as usize).min(n_buckets - 1);
            h[b] += 1.0;
            count += 1;
        }
        for v in h.iter_mut() {
            *v /= count as f64;
        }
        hists.insert(g, h);
    }
    let mut wd = BTreeMap::new();
    let mut kl = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        for &h in &groups[i + 1..] {
            wd.insert((g, h), wd_between_histograms(&hists[&g], &hists[&h]));
            kl.insert((g, h), kl_between_histograms(&hists[&g], &hists[&h]));
        }
    }
    Ok((aggregate(agg, &groups, &wd), aggregate(agg, &groups, &kl)))
}

/// Everything at once, with the default worst-pair aggregation.
pub fn compute_report(examples: &[ScoredExample], n_buckets: usize) -> Result<MetricsReport> {
    let acc = accuracy(examples)?;
    let (delta_dp, delta_eo, delta_ed) = group_gap_metrics(examples)?;
    let (intra_auc, inter_auc, gauc) = auc_fairness(examples)?;
    let (wd, kl) = dist_metrics(examples, n_buckets)?;
    Ok(MetricsReport { acc, delta_dp, delta_eo, delta_ed, intra_auc, inter_auc, gauc, wd, kl })
}

// ── CSV ──

/// Read `id,score,pred,label,group` rows.
pub fn read_scored_csv(path: &std::path::Path) -> Result<Vec<ScoredExample>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) =
        lines.next().ok_or_else(|| Error::Csv { line: 1, msg: "empty file".into() })?;
    if header.trim_end() != "id,score,pred,label,group" {
        return Err(Error::Csv {
            line: 1,
            msg: format!("header must be id,score,pred,label,group; got `{header}`"),
        });
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end();
        if row.is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Csv { line, msg: format!("expected 5 fields, got {}", f.len()) });
        }
        let parse_err = |what: &str, v: &str| Error::Csv {
            line,
            msg: format!("bad {what} `{v}`"),
        };
        f[0].parse::<u64>().map_err(|_| parse_err("id", f[0]))?;
        let score: f64 = f[1].parse().map_err(|_| parse_err("score", f[1]))?;
        let pred: u8 = match f[2] {
            "0" => 0,
            "1" => 1,
            v => return Err(parse_err("pred", v)),
        };
        let label: u8 = match f[3] {
            "0" => 0,
            "1" => 1,
            v => return Err(parse_err("label", v)),
        };
        let group: u32 = f[4].parse().map_err(|_| parse_err("group", f[4]))?;
        out.push(ScoredExample { score, pred, label, group });
    }
    if out.is_empty() {
        return Err(Error::Csv { line: 1, msg: "no data rows".into() });
    }
    Ok(out)
}

/// Write one `metric,value` row per metric.
pub fn write_report_csv(report: &MetricsReport, path: &std::path::Path) -> Result<()> {
    let mut out = String::from("metric,value\n");
    for (name, value) in MetricsReport::METRIC_NAMES.iter().zip(report.values()) {
        out.push_str(&format!("{name},{value}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
