use std::collections::{BTreeMap, BTreeSet};

use super::penalty::PenaltyLookup;
use super::timeline::{chamber_slice, SegmentSpan, Timeline};
use super::{FeatureBlock, FeatureError, FeatureGroup};
use crate::ingest::{CodedEvent, Run, VoltageDip};
use crate::linalg::DenseMatrix;
use crate::preprocess::PruneReport;

/// Per-run values of the four counter columns within one segment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CounterRow {
    pub count: f64,
    pub weighted: f64,
    pub gradient_sum: f64,
    pub gradient_max: f64,
}

/// Counters for every run of `span`. Events are those of the span's chamber
/// (sorted by time); only events inside the span and at or before each run's end
/// are counted.
pub fn span_counters<E: CodedEvent>(
    chamber: &str,
    events: &[E],
    runs: &[Run],
    span: &SegmentSpan,
    penalties: &impl PenaltyLookup,
    window_runs: usize,
) -> Vec<CounterRow> {
    let lo = events.partition_point(|e| e.time() < span.start);
    let hi = events.partition_point(|e| e.time() < span.end);
    let events = &events[lo..hi];

    let mut next = 0;
    let mut count = 0.0;
    let mut weighted = 0.0;
    let mut cumulative = Vec::with_capacity(span.runs.len());
    let mut increments = Vec::with_capacity(span.runs.len());
    let mut out = Vec::with_capacity(span.runs.len());
    for (p, &r) in span.runs.iter().enumerate() {
        let end = runs[r].end();
        let before = weighted;
        while next < events.len() && events[next].time() <= end {
            count += 1.0;
            weighted += 1.0 + penalties.penalty(chamber, events[next].code());
            next += 1;
        }
        cumulative.push(weighted);
        increments.push(weighted - before);
        let from = (p + 1).saturating_sub(window_runs);
        let base = if from == 0 { 0.0 } else { cumulative[from - 1] };
        let gradient_max = increments[from..=p]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(CounterRow {
            count,
            weighted,
            gradient_sum: weighted - base,
            gradient_max,
        });
    }
    out
}

fn spans_for_rows<'t>(
    timeline: &'t Timeline,
    rows: &[usize],
) -> Result<BTreeMap<usize, &'t SegmentSpan>, FeatureError> {
    let mut spans = BTreeMap::new();
    for &r in rows {
        let (span, _) = timeline.position(r).ok_or(FeatureError::UnknownRun(r))?;
        spans.insert(span.segment, span);
    }
    Ok(spans)
}

/// Raw and penalty-weighted cumulative event counters with windowed gradients.
#[allow(clippy::too_many_arguments)]
pub fn counter_features<E: CodedEvent>(
    group: FeatureGroup,
    prefix: &str,
    events: &[E],
    runs: &[Run],
    timeline: &Timeline,
    penalties: &impl PenaltyLookup,
    window_runs: usize,
    rows: &[usize],
) -> Result<FeatureBlock, FeatureError> {
    let mut per_run: BTreeMap<usize, CounterRow> = BTreeMap::new();
    for span in spans_for_rows(timeline, rows)?.into_values() {
        let chamber = &runs[span.runs[0]].chamber_id;
        let evs = chamber_slice(events, chamber);
        let vals = span_counters(chamber, evs, runs, span, penalties, window_runs);
        per_run.extend(span.runs.iter().copied().zip(vals));
    }
    let mut data = Vec::with_capacity(rows.len() * 4);
    for r in rows {
        let c = per_run[r];
        data.extend([c.count, c.weighted, c.gradient_sum, c.gradient_max]);
    }
    Ok(FeatureBlock {
        group,
        names: ["count", "weighted", "gradient_sum", "gradient_max"]
            .iter()
            .map(|n| format!("{prefix}_{n}"))
            .collect(),
        data: DenseMatrix::from_row_major(rows.len(), 4, data),
    })
}

pub const OTHER_RECIPE: &str = "other";

/// Recipe shares over the trailing `window_runs` runs of the segment, plus the
/// number of recipe switches between consecutive runs in that window.
pub fn recipe_mix_features(
    runs: &[Run],
    timeline: &Timeline,
    known_recipes: &[String],
    window_runs: usize,
    rows: &[usize],
) -> Result<FeatureBlock, FeatureError> {
    let width = known_recipes.len() + 2;
    let slot: BTreeMap<&str, usize> = known_recipes
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();
    let mut data = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        let (span, p) = timeline.position(r).ok_or(FeatureError::UnknownRun(r))?;
        let window = &span.runs[(p + 1).saturating_sub(window_runs)..=p];
        let mut counts = vec![0.0; width];
        for &w in window {
            let k = slot
                .get(runs[w].recipe_id.as_str())
                .copied()
                .unwrap_or(known_recipes.len());
            counts[k] += 1.0;
        }
        let n = window.len() as f64;
        for c in counts.iter_mut().take(width - 1) {
            *c /= n;
        }
        counts[width - 1] = window
            .windows(2)
            .filter(|w| runs[w[0]].recipe_id != runs[w[1]].recipe_id)
            .count() as f64;
        data.extend(counts);
    }
    let mut names: Vec<String> = known_recipes.iter().map(|r| format!("mix_{r}")).collect();
    names.push(format!("mix_{OTHER_RECIPE}"));
    names.push("recipe_changes".into());
    Ok(FeatureBlock {
        group: FeatureGroup::ApcR,
        names,
        data: DenseMatrix::from_row_major(rows.len(), width, data),
    })
}

/// Count and largest magnitude of voltage dips between the start of the trailing
/// window and the end of each run. Zero when none occurred.
pub fn dip_features(
    dips: &[VoltageDip],
    runs: &[Run],
    timeline: &Timeline,
    window_runs: usize,
    rows: &[usize],
) -> Result<FeatureBlock, FeatureError> {
    let mut data = Vec::with_capacity(rows.len() * 2);
    for &r in rows {
        let (span, p) = timeline.position(r).ok_or(FeatureError::UnknownRun(r))?;
        let first = span.runs[(p + 1).saturating_sub(window_runs)];
        let from = runs[first].start;
        let to = runs[r].end();
        let evs = chamber_slice(dips, &runs[r].chamber_id);
        let lo = evs.partition_point(|d| d.time < from);
        let hi = evs.partition_point(|d| d.time <= to);
        let hits = &evs[lo..hi];
        let max = hits.iter().map(|d| d.magnitude).fold(0.0, f64::max);
        data.extend([hits.len() as f64, max]);
    }
    Ok(FeatureBlock {
        group: FeatureGroup::Dips,
        names: vec!["dip_count".into(), "dip_max".into()],
        data: DenseMatrix::from_row_major(rows.len(), 2, data),
    })
}

/// Positions in `prune.kept` of sensors guarded by at least one limit, together
/// with limit sensors that were pruned away (they are not substituted).
pub fn apcv_columns(
    prune: &PruneReport,
    limit_map: &BTreeMap<String, String>,
) -> Result<(Vec<usize>, Vec<String>), FeatureError> {
    let limited: BTreeSet<&str> = limit_map.values().map(String::as_str).collect();
    let idx: Vec<usize> = prune
        .kept
        .iter()
        .enumerate()
        .filter(|(_, s)| limited.contains(s.as_str()))
        .map(|(i, _)| i)
        .collect();
    let pruned: Vec<String> = limited
        .iter()
        .filter(|s| !prune.is_kept(s))
        .map(|s| s.to_string())
        .collect();
    if idx.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    Ok((idx, pruned))
}

/// APC sensors with defined limits, selected from a standardized and pruned
/// matrix whose columns follow `prune.kept`.
pub fn apcv_features(
    matrix: &DenseMatrix<f64>,
    prune: &PruneReport,
    limit_map: &BTreeMap<String, String>,
) -> Result<FeatureBlock, FeatureError> {
    let (idx, _) = apcv_columns(prune, limit_map)?;
    Ok(FeatureBlock {
        group: FeatureGroup::ApcV,
        names: idx.iter().map(|&i| format!("apc_{}", prune.kept[i])).collect(),
        data: matrix.select_columns(&idx),
    })
}
