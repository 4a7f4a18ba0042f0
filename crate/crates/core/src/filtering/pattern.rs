use crate::error::{Error, Result};
use crate::numerics::TimeGrid;

/// What is known about the output on windows without continuous observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GapMode {
    /// Only `dy` on observed windows; gaps carry no information.
    IncrementsOnly,
    /// `y` itself is observed, so each gap contributes `Δy = y(t2) - y(t1)`.
    ProcessValues,
    /// The signal drops out (`C = 0`) on gaps while the output noise is still recorded.
    SignalLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Availability {
    Observed,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub state: Availability,
}

impl Interval {
    pub fn observed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            state: Availability::Observed,
        }
    }

    pub fn gap(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            state: Availability::Gap,
        }
    }
}

/// Ordered availability intervals tiling the horizon, plus the gap mode.
///
/// An empty interval list means the whole horizon is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPattern {
    mode: GapMode,
    intervals: Vec<Interval>,
}

/// Contiguous run of steps `from..to` (node indices) with one availability state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub from: usize,
    pub to: usize,
    pub observed: bool,
}

impl ObservationPattern {
    /// Validates ordering and contiguity and merges adjacent intervals with equal state.
    pub fn new(mode: GapMode, intervals: Vec<Interval>) -> Result<Self> {
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            if !(iv.start < iv.end) || !iv.start.is_finite() || !iv.end.is_finite() {
                return Err(Error::Invalid(format!(
                    "interval [{}, {}] is empty or not finite",
                    iv.start, iv.end
                )));
            }
            match merged.last_mut() {
                Some(prev) => {
                    let tol = 1e-9 * prev.end.abs().max(1.0);
                    if (iv.start - prev.end).abs() > tol {
                        return Err(Error::Invalid(format!(
                            "intervals must be contiguous: {} then {}",
                            prev.end, iv.start
                        )));
                    }
                    if prev.state == iv.state {
                        prev.end = iv.end;
                    } else {
                        merged.push(iv);
                    }
                }
                None => merged.push(iv),
            }
        }
        Ok(Self {
            mode,
            intervals: merged,
        })
    }

    pub fn fully_observed(mode: GapMode) -> Self {
        Self {
            mode,
            intervals: Vec::new(),
        }
    }

    pub fn mode(&self) -> GapMode {
        self.mode
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn with_mode(&self, mode: GapMode) -> Self {
        Self {
            mode,
            intervals: self.intervals.clone(),
        }
    }

    /// Maps the intervals onto `grid`, checking that they tile it with node endpoints.
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Layout> {
        let segments = if self.intervals.is_empty() {
            vec![Segment {
                from: 0,
                to: grid.steps(),
                observed: true,
            }]
        } else {
            let first = self.intervals.first().unwrap();
            let last = self.intervals.last().unwrap();
            let to_node = |t: f64| {
                grid.node(t).map_err(|_| {
                    Error::PatternMismatch(format!(
                        "interval endpoint {t} is not a grid node (h = {})",
                        grid.h()
                    ))
                })
            };
            if to_node(first.start)? != 0 || to_node(last.end)? != grid.steps() {
                return Err(Error::PatternMismatch(format!(
                    "intervals cover [{}, {}] but the horizon is [{}, {}]",
                    first.start,
                    last.end,
                    grid.t0(),
                    grid.t_end()
                )));
            }
            self.intervals
                .iter()
                .map(|iv| {
                    Ok(Segment {
                        from: to_node(iv.start)?,
                        to: to_node(iv.end)?,
                        observed: iv.state == Availability::Observed,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        if let Some(s) = segments.iter().find(|s| s.from >= s.to) {
            return Err(Error::PatternMismatch(format!(
                "interval between nodes {} and {} is shorter than one step",
                s.from, s.to
            )));
        }
        let mut observed = vec![false; grid.steps()];
        for s in &segments {
            observed[s.from..s.to].iter_mut().for_each(|o| *o = s.observed);
        }
        Ok(Layout {
            mode: self.mode,
            segments,
            observed,
        })
    }
}

/// A pattern resolved onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    mode: GapMode,
    segments: Vec<Segment>,
    observed: Vec<bool>,
}

impl Layout {
    pub fn mode(&self) -> GapMode {
        self.mode
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn steps(&self) -> usize {
        self.observed.len()
    }

    pub fn step_observed(&self, k: usize) -> bool {
        self.observed[k]
    }

    /// Per-step flags: true where the output carries the signal.
    pub fn observed_steps(&self) -> &[bool] {
        &self.observed
    }

    /// Whether a step adjacent to node `k` is observed.
    pub fn node_available(&self, k: usize) -> bool {
        (k > 0 && self.observed[k - 1]) || (k < self.observed.len() && self.observed[k])
    }

    /// Whether the filters run their data update on step `k`.
    pub fn step_active(&self, k: usize) -> bool {
        self.mode == GapMode::SignalLoss || self.observed[k]
    }

    /// Gaps whose aggregated increment `Δy` is part of the record.
    ///
    /// Only in `ProcessValues` mode, and only for gaps ending at an observed window:
    /// a trailing gap has no observed `y` at its end. A leading gap uses `y(t0) = 0`.
    pub fn delta_y_gaps(&self) -> Vec<Segment> {
        if self.mode != GapMode::ProcessValues {
            return Vec::new();
        }
        let steps = self.steps();
        self.segments
            .iter()
            .filter(|s| !s.observed && s.to < steps)
            .copied()
            .collect()
    }
}
