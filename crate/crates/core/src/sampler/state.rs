use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series_space::LatentState;

/// Changepoint positions on a series of length `t_len`.
///
/// A changepoint `tau` starts a new segment at time `tau`, so positions lie in
/// `2..=t_len`. Segments are `[tau_{j-1}, tau_j - 1]` with `tau_0 = 1` and
/// `tau_{k+1} = t_len + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segmentation {
    pub t_len: usize,
    pub tau: Vec<usize>,
}

impl Segmentation {
    pub fn new(t_len: usize, tau: Vec<usize>) -> Result<Self> {
        if t_len == 0 {
            return Err(Error::Domain("series length must be positive".into()));
        }
        let mut prev = 1;
        for &t in &tau {
            if t <= prev || t > t_len {
                return Err(Error::Domain(format!(
                    "changepoints {tau:?} are not strictly increasing within 2..={t_len}"
                )));
            }
            prev = t;
        }
        Ok(Self { t_len, tau })
    }

    pub fn k(&self) -> usize {
        self.tau.len()
    }

    /// Inclusive 1-based `(start, end)` of every segment.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.tau.len() + 1);
        let mut start = 1;
        for &t in &self.tau {
            out.push((start, t - 1));
            start = t;
        }
        out.push((start, self.t_len));
        out
    }
}

/// One segment of a chain state with its cached log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentState {
    pub start: usize,
    pub end: usize,
    pub latent: LatentState,
    pub loglik: f64,
}

impl SegmentState {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn m(&self) -> usize {
        self.latent.m
    }
}

/// Full sampler state: contiguous segments covering `1..=t_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub t_len: usize,
    pub segments: Vec<SegmentState>,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.segments.len() - 1
    }

    pub fn tau(&self) -> Vec<usize> {
        self.segments[1..].iter().map(|s| s.start).collect()
    }

    pub fn segmentation(&self) -> Segmentation {
        Segmentation {
            t_len: self.t_len,
            tau: self.tau(),
        }
    }

    pub fn orders(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.m()).collect()
    }

    /// Index of the segment containing time `t`.
    pub fn segment_at(&self, t: usize) -> usize {
        self.segments.partition_point(|s| s.end < t)
    }

    /// Checks the tiling invariants.
    pub fn check_layout(&self) -> Result<()> {
        let mut next = 1;
        for s in &self.segments {
            if s.start != next || s.end < s.start || s.latent.gamma.len() != s.latent.m {
                return Err(Error::Invariant(format!(
                    "segment [{}, {}] breaks the tiling at {next}",
                    s.start, s.end
                )));
            }
            next = s.end + 1;
        }
        if next != self.t_len + 1 {
            return Err(Error::Invariant(format!(
                "segments end at {} instead of {}",
                next - 1,
                self.t_len
            )));
        }
        Ok(())
    }
}
