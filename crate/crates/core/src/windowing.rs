//! Chronological data splitting and overlapping lookback/horizon windows.

use std::ops::Range;

use crate::error::{Error, Result};

pub const DEFAULT_LOOKBACK: usize = 512;
pub const DEFAULT_HORIZON: usize = 48;
pub const DEFAULT_STRIDE: usize = 1;

/// Train/validation/test fractions, defaulting to 70/20/10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.7,
            val_frac: 0.2,
            test_frac: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = SplitSpec {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, frac) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if frac.is_nan() || frac <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {frac}")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split", format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Contiguous, ordered, disjoint index ranges covering [0, length).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits [0, length) chronologically; boundaries round down.
pub fn chronological_split(length: usize, spec: &SplitSpec) -> Result<SplitRanges> {
    spec.validate()?;
    if length < 10 {
        return Err(Error::SeriesTooShort {
            got: length,
            needed: 10,
            context: "chronological_split".to_string(),
        });
    }
    // The 1e-6 nudge absorbs representation error in fraction sums
    // (0.7 + 0.2 prints as 0.9 but sits just below it) without
    // disturbing genuine floor behavior for decimal fractions.
    let boundary = |frac: f64| (frac * length as f64 + 1e-6).floor() as usize;
    let train_end = boundary(spec.train_frac);
    let val_end = boundary(spec.train_frac + spec.val_frac);
    Ok(SplitRanges {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..length,
    })
}

/// One sliding window: a lookback input range feeding a forecast target range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub input: Range<usize>,
    pub target: Range<usize>,
}

/// All windows over a segment at a given lookback, horizon, and stride.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub windows: Vec<Window>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Enumerates windows over [0, segment_length).
///
/// Window i covers input [i*stride, i*stride + L) and target
/// [i*stride + L, i*stride + L + H). A segment shorter than L + H
/// yields an empty set rather than an error.
pub fn make_windows(
    segment_length: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowSet> {
    for (name, v) in [("lookback", lookback), ("horizon", horizon), ("stride", stride)] {
        if v == 0 {
            return Err(Error::invalid(name, "must be >= 1"));
        }
    }
    let mut windows = Vec::new();
    if segment_length >= lookback + horizon {
        let count = (segment_length - lookback - horizon) / stride + 1;
        windows.reserve(count);
        for i in 0..count {
            let start = i * stride;
            windows.push(Window {
                input: start..start + lookback,
                target: start + lookback..start + lookback + horizon,
            });
        }
    }
    Ok(WindowSet {
        lookback,
        horizon,
        stride,
        windows,
    })
}

/// Windows for one split segment, in absolute series indices.
///
/// Targets always lie inside the segment. By default inputs must too;
/// with `warmup_overlap` the lookback may reach up to L steps left of
/// the segment start (into earlier data) so the first H-sized days of
/// the segment become forecastable.
pub fn segment_windows(
    segment: &Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
    warmup_overlap: bool,
) -> Result<WindowSet> {
    if !warmup_overlap {
        let mut set = make_windows(segment.len(), lookback, horizon, stride)?;
        for w in &mut set.windows {
            w.input = w.input.start + segment.start..w.input.end + segment.start;
            w.target = w.target.start + segment.start..w.target.end + segment.start;
        }
        return Ok(set);
    }
    // Warm-up: inputs may begin up to `lookback` steps before the segment.
    let earliest = segment.start.saturating_sub(lookback);
    let mut set = make_windows(segment.end - earliest, lookback, horizon, stride)?;
    set.windows.retain(|w| w.target.start + earliest >= segment.start);
    for w in &mut set.windows {
        w.input = w.input.start + earliest..w.input.end + earliest;
        w.target = w.target.start + earliest..w.target.end + earliest;
    }
    Ok(set)
}
