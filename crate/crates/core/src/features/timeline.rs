use std::collections::BTreeMap;

use crate::ingest::{ChamberEvent, Run};
use crate::labeling::{Segment, SegmentKind};

/// Time span of one segment and its runs in start order.
#[derive(Debug, Clone)]
pub struct SegmentSpan {
    pub segment: usize,
    pub start: f64,
    pub end: f64,
    pub runs: Vec<usize>,
    starts: Vec<f64>,
}

/// Lookup structure mapping (chamber, time) to the segment and run in effect.
#[derive(Debug, Clone)]
pub struct Timeline {
    chambers: BTreeMap<String, Vec<SegmentSpan>>,
    /// run index → (chamber, span index, position within span)
    run_pos: BTreeMap<usize, (String, usize, usize)>,
}

impl Timeline {
    pub fn new(runs: &[Run], segments: &[Segment]) -> Self {
        let mut chambers: BTreeMap<String, Vec<SegmentSpan>> = BTreeMap::new();
        for (i, s) in segments.iter().enumerate() {
            let start = if s.kind == SegmentKind::Leading {
                f64::NEG_INFINITY
            } else {
                s.start
            };
            chambers.entry(s.chamber_id.clone()).or_default().push(SegmentSpan {
                segment: i,
                start,
                end: s.breakdown_time.unwrap_or(f64::INFINITY),
                starts: s.runs.iter().map(|&r| runs[r].start).collect(),
                runs: s.runs.clone(),
            });
        }
        let mut run_pos = BTreeMap::new();
        for (chamber, spans) in chambers.iter_mut() {
            spans.sort_by(|a, b| a.start.total_cmp(&b.start));
            for (si, span) in spans.iter().enumerate() {
                for (p, &r) in span.runs.iter().enumerate() {
                    run_pos.insert(r, (chamber.clone(), si, p));
                }
            }
        }
        Self { chambers, run_pos }
    }

    pub fn spans(&self, chamber: &str) -> &[SegmentSpan] {
        self.chambers.get(chamber).map_or(&[], Vec::as_slice)
    }

    pub fn chambers(&self) -> impl Iterator<Item = (&String, &Vec<SegmentSpan>)> {
        self.chambers.iter()
    }

    /// Span containing `run` and the run's position within it.
    pub fn position(&self, run: usize) -> Option<(&SegmentSpan, usize)> {
        let (c, si, p) = self.run_pos.get(&run)?;
        Some((&self.chambers[c][*si], *p))
    }

    /// Latest run of the event's segment starting at or before the event.
    pub fn attach<E: ChamberEvent>(&self, event: &E) -> Option<usize> {
        let spans = self.chambers.get(event.chamber())?;
        let t = event.time();
        let si = spans.partition_point(|s| s.start <= t).checked_sub(1)?;
        let span = &spans[si];
        if t >= span.end {
            return None;
        }
        let p = span.starts.partition_point(|&s| s <= t).checked_sub(1)?;
        Some(span.runs[p])
    }
}

/// Events of one chamber, assuming the slice is sorted by (chamber, time).
pub fn chamber_slice<'a, E: ChamberEvent>(events: &'a [E], chamber: &str) -> &'a [E] {
    let lo = events.partition_point(|e| e.chamber() < chamber);
    let hi = events.partition_point(|e| e.chamber() <= chamber);
    &events[lo..hi]
}
