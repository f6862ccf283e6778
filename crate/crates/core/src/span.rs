//! Sample-domain and frame-domain spans of an inserted clip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open sample interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSpan {
    pub start: usize,
    pub end: usize,
}

impl SampleSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid_input(format!("empty span [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, start: usize, end: usize) -> usize {
        self.end.min(end).saturating_sub(self.start.max(start))
    }
}

/// Inclusive frame interval `[start, end]` of a fake clip; the target of the
/// span-discovery head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanTarget {
    pub start: usize,
    pub end: usize,
}

impl SpanTarget {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::invalid_input(format!(
                "span start {start} after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_within(&self, frames: usize) -> Result<()> {
        if self.end >= frames || self.start > self.end {
            return Err(Error::invalid_input(format!(
                "span [{}, {}] outside {frames} frames",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Map a sample span onto the inclusive frame span of a centered STFT with the given
/// hop, clipped to the last of `frames` frames.
pub fn span_to_frames(span: SampleSpan, hop: usize, frames: usize) -> Result<SpanTarget> {
    if span.is_empty() {
        return Err(Error::invalid_input(format!(
            "empty span [{}, {})",
            span.start, span.end
        )));
    }
    if hop == 0 || frames == 0 {
        return Err(Error::invalid_input("hop and frame count must be positive"));
    }
    let last = frames - 1;
    let start = (span.start / hop).min(last);
    let end = ((span.end - 1) / hop).min(last);
    SpanTarget::new(start, end)
}
