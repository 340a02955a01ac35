//! Post-hoc analysis of experiment trials: trimming, medians, quartiles,
//! histograms and plot files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{EquilibriumSet, Vector};
use crate::records::{fmt_f64, TrialRecord};

/// Median with the midpoint average for even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    }
}

/// Linear-interpolation quantile on sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quartiles { q25: quantile_sorted(&v, 0.25), q50: median(&v)?, q75: quantile_sorted(&v, 0.75) })
}

/// Keeps the samples in the final `seconds` of the trial.
///
/// The window is half-open, `(t_end − seconds, t_end]`, so five seconds of a
/// 60 Hz trial is exactly 300 samples. A window at least as long as the
/// trial keeps everything.
pub fn trim_last_seconds(trial: &TrialRecord, seconds: f64) -> TrialRecord {
    let mut out = trial.clone();
    let (Some(first), Some(last)) = (trial.samples.first(), trial.samples.last()) else {
        return out;
    };
    if seconds >= last.t - first.t {
        return out;
    }
    let cutoff = last.t - seconds + 1e-9 * last.t.abs().max(1.0);
    out.samples.retain(|s| s.t > cutoff);
    out
}

/// Maps `h` back to the common frame (`s ⊙ h`) and resets the symmetry.
pub fn unmirror(trial: &TrialRecord) -> TrialRecord {
    let mut out = trial.clone();
    for s in &mut out.samples {
        for (x, sign) in s.h.iter_mut().zip(&trial.symmetry) {
            *x *= sign;
        }
    }
    out.symmetry = vec![1.0; trial.symmetry.len()];
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values outside `[edges[0], edges[last]]`.
    pub outside: usize,
}

/// `bins` equal-width edges on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Half-open bins `[e_i, e_{i+1})`, with the last bin closed on the right.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("histogram edges must be strictly increasing, at least two"));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    let mut outside = 0;
    for &x in values {
        if x == edges[bins] {
            counts[bins - 1] += 1;
            continue;
        }
        // First edge strictly greater than x.
        let k = edges.partition_point(|e| *e <= x);
        if k == 0 || k > bins {
            outside += 1;
        } else {
            counts[k - 1] += 1;
        }
    }
    Ok(Histogram { edges: edges.to_vec(), counts, outside })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CostStat {
    /// Quartiles of the per-trial median costs.
    #[default]
    TrialMedian,
    /// Quartiles of every pooled sample.
    PerSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub cost_stat: CostStat,
    pub histogram_edges: Vec<f64>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self { cost_stat: CostStat::TrialMedian, histogram_edges: uniform_edges(-1.0, 1.0, 40) }
    }
}

/// Per-dimension medians of one un-mirrored trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMedians {
    pub participant_key: String,
    pub trial_index: usize,
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    pub cost_h: f64,
    pub cost_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub trials: Vec<TrialMedians>,
    pub median_h: Vec<f64>,
    pub median_m: Vec<f64>,
    pub cost_quartiles_h: Quartiles,
    pub cost_quartiles_m: Quartiles,
    pub hist_h: Vec<Histogram>,
    pub hist_m: Vec<Histogram>,
    pub dist_h_ne: f64,
    pub dist_h_se: f64,
    pub dist_m_ne: f64,
    pub dist_m_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub nash_h: Vec<f64>,
    pub nash_m: Vec<f64>,
    pub stackelberg_h: Vec<f64>,
    pub stackelberg_m: Vec<f64>,
    pub cost_stat: CostStat,
    /// Ascending in `alpha`.
    pub per_alpha: Vec<AlphaSummary>,
}

fn column_medians(rows: impl Iterator<Item = Vec<f64>> + Clone, dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|d| median(&rows.clone().map(|r| r[d]).collect::<Vec<_>>()).unwrap_or(f64::NAN))
        .collect()
}

fn distance(a: &[f64], b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn trial_medians(t: &TrialRecord) -> TrialMedians {
    let (d_h, d_m) = (t.d_h(), t.d_m().unwrap_or(0));
    let col = |f: &dyn Fn(usize) -> f64| median(&(0..t.samples.len()).map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    TrialMedians {
        participant_key: t.participant_key.clone(),
        trial_index: t.trial_index,
        h: (0..d_h).map(|d| col(&|i| t.samples[i].h[d])).collect(),
        m: (0..d_m).map(|d| col(&|i| t.samples[i].m[d])).collect(),
        cost_h: col(&|i| t.samples[i].cost_h),
        cost_m: col(&|i| t.samples[i].cost_m),
    }
}

/// Per-rate summaries of a set of trials from one game.
///
/// Each trial is un-mirrored, reduced to per-dimension medians, and the
/// trial medians are then pooled per adaptation rate.
pub fn summarize(trials: &[TrialRecord], eq: &EquilibriumSet, options: &SummaryOptions) -> Result<SummaryStats> {
    let (d_h, d_m) = (eq.nash.h.len(), eq.nash.m.len());
    for t in trials {
        if t.samples.is_empty() {
            return Err(Error::invalid(format!("trial {} of {} has no samples", t.trial_index, t.participant_key)));
        }
        if t.d_h() != d_h || t.d_m() != Some(d_m) {
            return Err(Error::invalid(format!(
                "trial {} of {} is not from a {d_h}x{d_m} game",
                t.trial_index, t.participant_key
            )));
        }
    }
    let trials: Vec<TrialRecord> = trials.iter().map(unmirror).collect();
    let mut alphas: Vec<f64> = trials.iter().map(|t| t.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let mut per_alpha = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let group: Vec<&TrialRecord> = trials.iter().filter(|t| t.alpha == alpha).collect();
        let medians: Vec<TrialMedians> = group.iter().map(|t| trial_medians(t)).collect();
        let median_h = column_medians(medians.iter().map(|t| t.h.clone()), d_h);
        let median_m = column_medians(medians.iter().map(|t| t.m.clone()), d_m);

        let samples = || group.iter().flat_map(|t| t.samples.iter());
        let (costs_h, costs_m): (Vec<f64>, Vec<f64>) = match options.cost_stat {
            CostStat::TrialMedian => medians.iter().map(|t| (t.cost_h, t.cost_m)).unzip(),
            CostStat::PerSample => samples().map(|s| (s.cost_h, s.cost_m)).unzip(),
        };
        let hist = |get: &dyn Fn(&crate::records::Sample) -> f64| {
            histogram(&samples().map(get).collect::<Vec<_>>(), &options.histogram_edges)
        };
        let hist_h = (0..d_h).map(|d| hist(&|s| s.h[d])).collect::<Result<Vec<_>>>()?;
        let hist_m = (0..d_m).map(|d| hist(&|s| s.m[d])).collect::<Result<Vec<_>>>()?;

        per_alpha.push(AlphaSummary {
            alpha,
            dist_h_ne: distance(&median_h, &eq.nash.h),
            dist_h_se: distance(&median_h, &eq.stackelberg.h),
            dist_m_ne: distance(&median_m, &eq.nash.m),
            dist_m_se: distance(&median_m, &eq.stackelberg.m),
            cost_quartiles_h: quartiles(&costs_h).expect("group is non-empty"),
            cost_quartiles_m: quartiles(&costs_m).expect("group is non-empty"),
            trials: medians,
            median_h,
            median_m,
            hist_h,
            hist_m,
        });
    }
    let v = |x: &Vector| x.iter().copied().collect::<Vec<_>>();
    Ok(SummaryStats {
        nash_h: v(&eq.nash.h),
        nash_m: v(&eq.nash.m),
        stackelberg_h: v(&eq.stackelberg.h),
        stackelberg_m: v(&eq.stackelberg.m),
        cost_stat: options.cost_stat,
        per_alpha,
    })
}

/// Trims every trial to its last `seconds`, then summarizes.
pub fn summarize_last_seconds(
    trials: &[TrialRecord],
    seconds: f64,
    eq: &EquilibriumSet,
    options: &SummaryOptions,
) -> Result<SummaryStats> {
    let trimmed: Vec<TrialRecord> = trials.iter().map(|t| trim_last_seconds(t, seconds)).collect();
    summarize(&trimmed, eq, options)
}

fn alpha_tag(alpha: f64) -> String {
    format!("{alpha}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn header(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(",")
}

fn actions_csv(stats: &SummaryStats, a: &AlphaSummary) -> String {
    let (d_h, d_m) = (stats.nash_h.len(), stats.nash_m.len());
    let mut s = format!("kind,pubkey,trial_index,{},{}\n", header("h", d_h), header("m", d_m));
    for t in &a.trials {
        let _ = writeln!(s, "trial,{},{},{},{}", t.participant_key, t.trial_index, join(&t.h), join(&t.m));
    }
    let _ = writeln!(s, "median,,,{},{}", join(&a.median_h), join(&a.median_m));
    let _ = writeln!(s, "NE,,,{},{}", join(&stats.nash_h), join(&stats.nash_m));
    let _ = writeln!(s, "SE,,,{},{}", join(&stats.stackelberg_h), join(&stats.stackelberg_m));
    s
}

fn costs_csv(stats: &SummaryStats) -> String {
    let mut s = String::from("alpha,trials,cost_H_q25,cost_H_q50,cost_H_q75,cost_M_q25,cost_M_q50,cost_M_q75\n");
    for a in &stats.per_alpha {
        let (h, m) = (a.cost_quartiles_h, a.cost_quartiles_m);
        let _ = writeln!(
            s,
            "{},{},{}",
            alpha_tag(a.alpha),
            a.trials.len(),
            join(&[h.q25, h.q50, h.q75, m.q25, m.q50, m.q75])
        );
    }
    s
}

fn hist_csv(hists: &[Histogram]) -> String {
    let mut s = String::from("dim,bin_lo,bin_hi,count\n");
    for (d, h) in hists.iter().enumerate() {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{c}", d + 1, fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]));
        }
    }
    s
}

const SVG_SIZE: f64 = 400.0;
const SVG_PAD: f64 = 40.0;

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        SVG_PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (SVG_SIZE - 2.0 * SVG_PAD)
    }

    fn py(&self, y: f64) -> f64 {
        SVG_SIZE - SVG_PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (SVG_SIZE - 2.0 * SVG_PAD)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
            SVG_SIZE
        );
        let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let (l, r, t, b) = (SVG_PAD, SVG_SIZE - SVG_PAD, SVG_PAD, SVG_SIZE - SVG_PAD);
        let _ = writeln!(s, "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", r - l, b - t);
        let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>", SVG_SIZE / 2.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{xlabel}</text>", SVG_SIZE / 2.0, SVG_SIZE - 10.0);
        let _ = writeln!(
            s,
            "<text x=\"12\" y=\"{0}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 {0})\">{ylabel}</text>",
            SVG_SIZE / 2.0
        );
        for (v, label) in [(self.x.0, "lo"), (self.x.1, "hi")] {
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\" data-edge=\"{label}\">{v:.3}</text>",
                self.px(v),
                b + 14.0
            );
        }
        for v in [self.y.0, self.y.1] {
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"10\">{v:.3}</text>", l - 4.0, self.py(v) + 3.0);
        }
        s
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let span = (hi - lo).max(1e-6);
    (lo - 0.1 * span, hi + 0.1 * span)
}

/// Scatter of per-trial medians. Two-dimensional humans plot `h_1` against
/// `h_2`; otherwise `h_1` against `m_1`.
fn actions_svg(stats: &SummaryStats, a: &AlphaSummary) -> String {
    let two_d = stats.nash_h.len() >= 2;
    let point = |h: &[f64], m: &[f64]| if two_d { (h[0], h[1]) } else { (h[0], m[0]) };
    let mut pts: Vec<(f64, f64)> = a.trials.iter().map(|t| point(&t.h, &t.m)).collect();
    let ne = point(&stats.nash_h, &stats.nash_m);
    let se = point(&stats.stackelberg_h, &stats.stackelberg_m);
    pts.extend([ne, se]);
    let axes = Axes { x: padded_range(pts.iter().map(|p| p.0)), y: padded_range(pts.iter().map(|p| p.1)) };
    let (xl, yl) = if two_d { ("h_1", "h_2") } else { ("h_1", "m_1") };
    let mut s = axes.open(&format!("median actions, alpha = {}", alpha_tag(a.alpha)), xl, yl);
    for t in &a.trials {
        let (x, y) = point(&t.h, &t.m);
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>", axes.px(x), axes.py(y));
    }
    for ((x, y), label, color) in [(ne, "NE", "darkorange"), (se, "SE", "seagreen")] {
        let (px, py) = (axes.px(x), axes.py(y));
        let _ = writeln!(s, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"{color}\"/>", px - 4.0, py - 4.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{label}</text>", px + 6.0, py - 6.0);
    }
    s.push_str("</svg>\n");
    s
}

fn costs_svg(stats: &SummaryStats) -> String {
    let n = stats.per_alpha.len();
    let all = stats.per_alpha.iter().flat_map(|a| {
        [a.cost_quartiles_h.q25, a.cost_quartiles_h.q75, a.cost_quartiles_m.q25, a.cost_quartiles_m.q75]
    });
    let axes = Axes { x: (0.0, n as f64), y: padded_range(all) };
    let mut s = axes.open("cost quartiles by adaptation rate", "alpha", "cost");
    for (i, a) in stats.per_alpha.iter().enumerate() {
        for (k, q, color) in [(0.25, a.cost_quartiles_h, "steelblue"), (0.6, a.cost_quartiles_m, "indianred")] {
            let x0 = axes.px(i as f64 + k);
            let x1 = axes.px(i as f64 + k + 0.25);
            let (top, bottom) = (axes.py(q.q75), axes.py(q.q25));
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.5\" stroke=\"{color}\"/>",
                x1 - x0,
                (bottom - top).max(0.5)
            );
            let mid = axes.py(q.q50);
            let _ = writeln!(s, "<line x1=\"{x0:.2}\" x2=\"{x1:.2}\" y1=\"{mid:.2}\" y2=\"{mid:.2}\" stroke=\"black\"/>");
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            axes.px(i as f64 + 0.5),
            SVG_SIZE - SVG_PAD + 26.0,
            alpha_tag(a.alpha)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn hist_svg(player: &str, a: &AlphaSummary, hists: &[Histogram]) -> String {
    let edges = &hists[0].edges;
    let max = hists.iter().flat_map(|h| h.counts.iter()).copied().max().unwrap_or(0).max(1);
    let axes = Axes { x: (edges[0], edges[edges.len() - 1]), y: (0.0, max as f64) };
    let mut s = axes.open(&format!("{player} actions, alpha = {}", alpha_tag(a.alpha)), "action", "count");
    let colors = ["steelblue", "indianred", "seagreen", "darkorange"];
    for (d, h) in hists.iter().enumerate() {
        let color = colors[d % colors.len()];
        for (i, &c) in h.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
            let (x0, x1) = (axes.px(h.edges[i]), axes.px(h.edges[i + 1]));
            let top = axes.py(c as f64);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.5\"/>",
                x1 - x0,
                axes.py(0.0) - top
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes plot-ready CSV tables and SVG renderings into `out_dir`:
///
/// * `actions_median_{alpha}.csv` / `.svg`: per-trial medians, pooled median,
///   NE and SE;
/// * `costs_box.csv` / `.svg`: cost quartiles per rate;
/// * `hist_{H|M}_{alpha}.csv` / `.svg`: action histograms.
///
/// Returns the written paths in order.
pub fn emit_plots(stats: &SummaryStats, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if stats.per_alpha.is_empty() {
        return Err(Error::invalid("no trials to plot"));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    for a in &stats.per_alpha {
        let tag = alpha_tag(a.alpha);
        put(format!("actions_median_{tag}.csv"), actions_csv(stats, a))?;
        put(format!("actions_median_{tag}.svg"), actions_svg(stats, a))?;
        for (player, hists) in [("H", &a.hist_h), ("M", &a.hist_m)] {
            put(format!("hist_{player}_{tag}.csv"), hist_csv(hists))?;
            put(format!("hist_{player}_{tag}.svg"), hist_svg(player, a, hists))?;
        }
    }
    put("costs_box.csv".into(), costs_csv(stats))?;
    put("costs_box.svg".into(), costs_svg(stats))?;
    Ok(written)
}
