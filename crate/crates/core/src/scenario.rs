//! Line-level what-if analysis on a solved selection.
//!
//! Lines whose share of remaining open stops falls below a threshold are
//! deleted; stops served only by deleted lines close, and each zone's slack
//! against its access bound is recomputed on what is left.

use std::io::Write;

use num_traits::{Signed, Zero};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::evaluate::StopSelection;
use crate::instance::{Instance, Line};
use crate::metrics::{csv_err, MetricsBundle};
use crate::rational::{scaled, serde_rational, to_f64, Rational};

pub const DEFAULT_MIN_LINE_SIZE: usize = 10;
pub const DEFAULT_BIN_COUNT: usize = 20;

/// When a kept stop closes because of deleted lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemovalRule {
    /// Only when every analyzed line through it is deleted.
    #[default]
    AllLinesDeleted,
    /// As soon as one analyzed line through it is deleted.
    AnyLineDeleted,
}

/// Open-stop share of one analyzed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineShare {
    pub line: usize,
    pub open: usize,
    pub size: usize,
    pub p_ros: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioResult {
    pub t: Rational,
    pub min_line_size: usize,
    pub rule: RemovalRule,
    /// Indices of lines with more than `min_line_size` distinct stops.
    pub analyzed: Vec<usize>,
    pub kept_lines: Vec<usize>,
    pub deleted_lines: Vec<usize>,
    /// Stops still open, ascending index.
    pub v_s: Vec<usize>,
    /// `k[u] * d_acc(u) - min access over v_s`; `None` when nothing is open.
    pub uf: Vec<Option<Rational>>,
    pub violated: Vec<usize>,
    pub p_ros: Vec<LineShare>,
}

/// Open-stop shares for analyzed lines (distinct stop count strictly above `min_line_size`).
pub fn line_percentages(selection: &StopSelection, lines: &[Line], min_line_size: usize) -> Vec<LineShare> {
    lines
        .iter()
        .enumerate()
        .filter_map(|(i, line)| {
            let stops = line.unique_stops();
            if stops.len() <= min_line_size {
                return None;
            }
            let open = stops.iter().filter(|&&s| selection.contains(s)).count();
            Some(LineShare { line: i, open, size: stops.len(), p_ros: Rational::new(open as i64, stops.len() as i64) })
        })
        .collect()
}

/// Resolves `{id, stops: [stop ids]}` line records against an instance.
pub fn parse_lines(inst: &Instance, value: &Value) -> Result<Vec<Line>> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawLine {
        id: String,
        stops: Vec<String>,
    }
    let array = value.get("lines").unwrap_or(value);
    let raw: Vec<RawLine> = serde_json::from_value(array.clone())?;
    raw.into_iter()
        .map(|l| {
            if l.stops.is_empty() {
                return Err(Error::Validation(format!("line {} has no stops", l.id)));
            }
            Ok(Line { stops: inst.resolve_stops(&l.stops)?, id: l.id })
        })
        .collect()
}

fn check_threshold(t: Rational) -> Result<()> {
    if t.is_negative() || t > Rational::from_integer(1) {
        return Err(Error::Validation(format!("threshold {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn build_scenario(
    selection: &StopSelection,
    lines: &[Line],
    t: Rational,
    min_line_size: usize,
    metrics: &MetricsBundle,
) -> Result<ScenarioResult> {
    build_scenario_with(selection, lines, t, min_line_size, metrics, RemovalRule::default())
}

pub fn build_scenario_with(
    selection: &StopSelection,
    lines: &[Line],
    t: Rational,
    min_line_size: usize,
    metrics: &MetricsBundle,
    rule: RemovalRule,
) -> Result<ScenarioResult> {
    check_threshold(t)?;
    let shares = line_percentages(selection, lines, min_line_size);
    Ok(scenario_from_shares(selection, lines, &shares, t, min_line_size, metrics, rule))
}

/// One scenario per threshold, sharing the line shares. Thresholds must be ascending.
pub fn scenario_sweep(
    selection: &StopSelection,
    lines: &[Line],
    thresholds: &[Rational],
    min_line_size: usize,
    metrics: &MetricsBundle,
) -> Result<Vec<ScenarioResult>> {
    scenario_sweep_with(selection, lines, thresholds, min_line_size, metrics, RemovalRule::default())
}

pub fn scenario_sweep_with(
    selection: &StopSelection,
    lines: &[Line],
    thresholds: &[Rational],
    min_line_size: usize,
    metrics: &MetricsBundle,
    rule: RemovalRule,
) -> Result<Vec<ScenarioResult>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation("thresholds must be ascending".into()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let shares = line_percentages(selection, lines, min_line_size);
    Ok(thresholds
        .iter()
        .map(|&t| scenario_from_shares(selection, lines, &shares, t, min_line_size, metrics, rule))
        .collect())
}

fn scenario_from_shares(
    selection: &StopSelection,
    lines: &[Line],
    shares: &[LineShare],
    t: Rational,
    min_line_size: usize,
    metrics: &MetricsBundle,
    rule: RemovalRule,
) -> ScenarioResult {
    let n_t = metrics.n_stops();
    let mut on_kept = vec![false; n_t];
    let mut on_deleted = vec![false; n_t];
    let (mut kept_lines, mut deleted_lines) = (Vec::new(), Vec::new());
    for share in shares {
        let keep = share.p_ros >= t;
        let marks = if keep { &mut on_kept } else { &mut on_deleted };
        for s in &lines[share.line].stops {
            marks[*s] = true;
        }
        if keep { &mut kept_lines } else { &mut deleted_lines }.push(share.line);
    }
    let closes = |s: usize| match rule {
        RemovalRule::AllLinesDeleted => on_deleted[s] && !on_kept[s],
        RemovalRule::AnyLineDeleted => on_deleted[s],
    };
    let v_s: Vec<usize> = selection.kept.iter().copied().filter(|&s| !closes(s)).collect();

    let uf: Vec<Option<Rational>> = (0..metrics.n_zones())
        .map(|u| {
            let nearest = v_s.iter().map(|&v| metrics.access(u, v)).min()?;
            Some(scaled(metrics.k(u), metrics.d_acc[u]) - Rational::from_integer(nearest))
        })
        .collect();
    let violated = (0..uf.len()).filter(|&u| uf[u].is_none_or(|x| x.is_negative())).collect();
    ScenarioResult {
        t,
        min_line_size,
        rule,
        analyzed: shares.iter().map(|s| s.line).collect(),
        kept_lines,
        deleted_lines,
        v_s,
        uf,
        violated,
        p_ros: shares.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Histogram {
    pub bins: Vec<Bin>,
    /// Values that are the negative-infinity sentinel.
    pub unreachable: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.unreachable
    }
}

/// Equal-width bins over `[min, max]` of the finite values; a single bin when
/// all finite values coincide. `None` entries go to the unreachable bucket.
pub fn histogram(values: &[Option<Rational>], bin_count: usize) -> Histogram {
    let finite: Vec<Rational> = values.iter().flatten().copied().collect();
    let unreachable = values.len() - finite.len();
    let (Some(&lo), Some(&hi)) = (finite.iter().min(), finite.iter().max()) else {
        return Histogram { bins: Vec::new(), unreachable };
    };
    if lo == hi {
        return Histogram { bins: vec![Bin { lower: to_f64(lo), count: finite.len() }], unreachable };
    }
    let bins = bin_count.max(1);
    let width = (hi - lo) / Rational::from_integer(bins as i64);
    let mut counts = vec![0usize; bins];
    for x in finite {
        let idx = ((x - lo) / width).floor().to_integer() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    Histogram {
        bins: counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| Bin { lower: to_f64(lo + width * Rational::from_integer(i as i64)), count })
            .collect(),
        unreachable,
    }
}

impl ScenarioResult {
    pub fn uf_histogram(&self, bin_count: usize) -> Histogram {
        histogram(&self.uf, bin_count)
    }

    pub fn p_ros_histogram(&self, bin_count: usize) -> Histogram {
        let values: Vec<Option<Rational>> = self.p_ros.iter().map(|s| Some(s.p_ros)).collect();
        histogram(&values, bin_count)
    }

    pub fn to_json(&self, metrics: &MetricsBundle, bin_count: usize) -> Value {
        let inst = &metrics.instance;
        let line_ids = |ls: &[usize]| ls.iter().map(|&l| inst.lines[l].id.clone()).collect::<Vec<_>>();
        let mut v_s = self.v_s.clone();
        metrics.sort_by_id(&mut v_s);
        let mut uf = Map::new();
        for (u, value) in self.uf.iter().enumerate() {
            let v = value.map_or_else(|| json!("neg_inf"), serde_rational::to_json);
            uf.insert(metrics.zone_id(u).to_string(), v);
        }
        let mut p_ros = Map::new();
        for s in &self.p_ros {
            p_ros.insert(inst.lines[s.line].id.clone(), serde_rational::to_json(s.p_ros));
        }
        json!({
            "t": serde_rational::to_json(self.t),
            "min_line_size": self.min_line_size,
            "strict": self.rule == RemovalRule::AnyLineDeleted,
            "analyzed": line_ids(&self.analyzed),
            "kept_lines": line_ids(&self.kept_lines),
            "deleted_lines": line_ids(&self.deleted_lines),
            "v_s": v_s.iter().map(|&v| metrics.stop_id(v)).collect::<Vec<_>>(),
            "violated": self.violated.iter().map(|&u| metrics.zone_id(u)).collect::<Vec<_>>(),
            "uf": uf,
            "p_ros": p_ros,
            "histograms": {
                "uf": self.uf_histogram(bin_count),
                "p_ros": self.p_ros_histogram(bin_count),
            },
        })
    }

    /// CSV rows `zone_id,uf` with `neg_inf` for the sentinel.
    pub fn write_uf_csv<W: Write>(&self, metrics: &MetricsBundle, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["zone_id", "uf", "violated"]).map_err(csv_err)?;
        for (u, value) in self.uf.iter().enumerate() {
            let text = value.map_or_else(|| "neg_inf".to_string(), rational_text);
            let violated = value.is_none_or(|x| x.is_negative());
            w.write_record([metrics.zone_id(u), &text, if violated { "1" } else { "0" }])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV rows `line_id,open,size,p_ros,status`.
    pub fn write_p_ros_csv<W: Write>(&self, metrics: &MetricsBundle, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["line_id", "open", "size", "p_ros", "status"]).map_err(csv_err)?;
        for s in &self.p_ros {
            let status = if self.deleted_lines.contains(&s.line) { "deleted" } else { "kept" };
            w.write_record([
                metrics.instance.lines[s.line].id.as_str(),
                &s.open.to_string(),
                &s.size.to_string(),
                &rational_text(s.p_ros),
                status,
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rational_text(value: Rational) -> String {
    if value.is_integer() {
        value.to_integer().to_string()
    } else if value.is_zero() {
        "0".into()
    } else {
        crate::rational::to_decimal_string(value).unwrap_or_else(|| format!("{}/{}", value.numer(), value.denom()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{evaluate_ids, evaluate_selection};
    use crate::instance::load_instance_str;
    use crate::metrics::compute_metrics;
    use crate::synth::{self, RandomSpec};
    use num_rational::Ratio;
    use proptest::prelude::*;

    const T1: &str = include_str!("../tests/fixtures/t1.json");

    fn t1_middle() -> (MetricsBundle, StopSelection) {
        let inst = synth::with_p_elim(&load_instance_str(T1).unwrap(), Ratio::new(3, 5));
        let m = compute_metrics(inst).unwrap();
        let sel = evaluate_ids(&m, &["v2"]).unwrap();
        (m, sel)
    }

    #[test]
    fn t1_percentages() {
        let (m, sel) = t1_middle();
        let shares = line_percentages(&sel, &m.instance.lines, 1);
        assert_eq!(shares.iter().map(|s| s.p_ros).collect::<Vec<_>>(), vec![Ratio::new(1, 2); 2]);
        assert!(line_percentages(&sel, &m.instance.lines, 2).is_empty());
        let all = evaluate_selection(&m, &[0, 1, 2]).unwrap();
        assert!(line_percentages(&all, &m.instance.lines, 0).iter().all(|s| s.p_ros == Ratio::from_integer(1)));
    }

    #[test]
    fn t1_scenarios() {
        let (m, sel) = t1_middle();
        let lines = &m.instance.lines;
        let s = build_scenario(&sel, lines, Ratio::new(2, 5), 1, &m).unwrap();
        assert!(s.deleted_lines.is_empty());
        assert_eq!(s.v_s, vec![1]);
        assert_eq!(s.uf, vec![Some(Ratio::from_integer(0)); 2]);
        assert!(s.violated.is_empty());

        let s = build_scenario(&sel, lines, Ratio::new(3, 5), 1, &m).unwrap();
        assert_eq!(s.deleted_lines, vec![0, 1]);
        assert!(s.v_s.is_empty());
        assert_eq!(s.uf, vec![None, None]);
        assert_eq!(s.violated, vec![0, 1]);
        let json = s.to_json(&m, DEFAULT_BIN_COUNT);
        assert_eq!(json["uf"]["u1"], "neg_inf");
        assert_eq!(json["histograms"]["uf"]["unreachable"], 2);
        assert_eq!(json["histograms"]["uf"]["bins"], json!([]));

        let sweep = scenario_sweep(&sel, lines, &[Ratio::new(2, 5), Ratio::new(3, 5)], 1, &m).unwrap();
        assert_eq!(sweep.iter().map(|s| s.deleted_lines.len()).collect::<Vec<_>>(), vec![0, 2]);
        assert!(scenario_sweep(&sel, lines, &[Ratio::new(3, 5), Ratio::new(2, 5)], 1, &m).is_err());
        assert!(build_scenario(&sel, lines, Ratio::new(3, 2), 1, &m).is_err());
    }

    #[test]
    fn strict_rule_closes_shared_stops() {
        let text = T1.replace(r#"{"p_elim": 0.3"#, r#"{"p_elim": 0"#);
        let m = compute_metrics(load_instance_str(&text).unwrap()).unwrap();
        // l1 = [v1, v2] fully open, l2 = [v2, v3] half open
        let sel = evaluate_ids(&m, &["v1", "v2"]).unwrap();
        let lines = &m.instance.lines;
        let t = Ratio::new(3, 4);
        let lenient = build_scenario(&sel, lines, t, 1, &m).unwrap();
        assert_eq!(lenient.deleted_lines, vec![1]);
        assert_eq!(lenient.v_s, vec![0, 1]);
        let strict = build_scenario_with(&sel, lines, t, 1, &m, RemovalRule::AnyLineDeleted).unwrap();
        assert_eq!(strict.v_s, vec![0]);
    }

    #[test]
    fn stops_off_analyzed_lines_survive() {
        let (m, sel) = t1_middle();
        let s = build_scenario(&sel, &m.instance.lines, Ratio::from_integer(1), 5, &m).unwrap();
        assert!(s.analyzed.is_empty());
        assert_eq!(s.v_s, sel.kept);
    }

    #[test]
    fn histogram_examples() {
        let ints = |v: &[i64]| v.iter().map(|&x| Some(Ratio::from_integer(x))).collect::<Vec<_>>();
        let h = histogram(&ints(&[0, 0]), 1);
        assert_eq!(h.bins, vec![Bin { lower: 0.0, count: 2 }]);
        assert_eq!(histogram(&[], 5), Histogram::default());
        let h = histogram(&ints(&[1, 2, 3, 4]), 2);
        assert_eq!(h.bins, vec![Bin { lower: 1.0, count: 2 }, Bin { lower: 2.5, count: 2 }]);
        let h = histogram(&[None, Some(Ratio::from_integer(3))], 4);
        assert_eq!((h.unreachable, h.total()), (1, 2));
    }

    #[test]
    fn csv_tables() {
        let (m, sel) = t1_middle();
        let s = build_scenario(&sel, &m.instance.lines, Ratio::new(3, 5), 1, &m).unwrap();
        let mut out = Vec::new();
        s.write_uf_csv(&m, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "zone_id,uf,violated\nu1,neg_inf,1\nu2,neg_inf,1\n");
        let mut out = Vec::new();
        s.write_p_ros_csv(&m, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "line_id,open,size,p_ros,status\nl1,1,2,0.5,deleted\nl2,1,2,0.5,deleted\n"
        );
    }

    #[test]
    fn parse_lines_resolves_ids() {
        let (m, _) = t1_middle();
        let lines = parse_lines(&m.instance, &json!([{"id": "a", "stops": ["v3", "v1", "v3"]}])).unwrap();
        assert_eq!(lines[0].stops, vec![2, 0, 2]);
        assert_eq!(lines[0].unique_stops().len(), 2);
        assert!(parse_lines(&m.instance, &json!([{"id": "a", "stops": ["v9"]}])).is_err());
    }

    proptest! {
        #[test]
        fn histogram_counts_everything(values in proptest::collection::vec(proptest::option::of(-50i64..50), 0..40), bins in 1usize..8) {
            let values: Vec<Option<Rational>> = values.into_iter().map(|v| v.map(Ratio::from_integer)).collect();
            let h = histogram(&values, bins);
            prop_assert_eq!(h.total(), values.len());
            prop_assert!(h.bins.len() <= bins);
        }

        #[test]
        fn sweeps_are_monotone(seed in 0u64..5000, mask in 1u16..) {
            let m = compute_metrics(synth::random_instance(seed, &RandomSpec { lines: 6, ..RandomSpec::default() })).unwrap();
            let kept: Vec<usize> = (0..m.n_stops()).filter(|&v| mask >> v & 1 == 1).collect();
            prop_assume!(!kept.is_empty());
            let sel = evaluate_selection(&m, &kept).unwrap();
            let ts: Vec<Rational> = (0..=10).map(|i| Ratio::new(i, 10)).collect();
            let sweep = scenario_sweep(&sel, &m.instance.lines, &ts, 1, &m).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[0].deleted_lines.iter().all(|l| w[1].deleted_lines.contains(l)));
                prop_assert!(w[0].violated.iter().all(|u| w[1].violated.contains(u)));
                prop_assert!(w[1].v_s.iter().all(|v| w[0].v_s.contains(v)));
            }
            for s in &sweep {
                prop_assert!(s.v_s.iter().all(|v| sel.contains(*v)));
                let mut both: Vec<usize> = s.kept_lines.iter().chain(&s.deleted_lines).copied().collect();
                both.sort_unstable();
                prop_assert_eq!(both, s.analyzed.clone());
                for (u, value) in s.uf.iter().enumerate() {
                    let ok = s.v_s.iter().any(|&v| m.within_access_bound(u, m.access(u, v)));
                    prop_assert_eq!(value.is_some_and(|x| !x.is_negative()), ok);
                }
            }
        }
    }
}
