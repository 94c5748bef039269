//! Probability-weighted partitions of a unit time window.
//!
//! Window `N` is the half-open interval `(N, N+1]`. A [`WindowPartition`]
//! splits it (or, after a mid-window collapse, its tail `(start, N+1]`) into
//! disjoint half-open sub-intervals. Each sub-interval is owned by one label
//! and a label's total length equals its probability times the span length.
//!
//! Internally a partition is a strictly increasing boundary list plus one
//! owner per gap, so neighbouring intervals share their boundary value and
//! disjointness and coverage hold by construction.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hilbert::Label;
use crate::rng;

/// Tolerance for measure and coverage audits.
pub const MEASURE_TOLERANCE: f64 = 1e-9;
/// Largest accepted deviation of a probability vector's sum from one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// Half-open interval `(lo, hi]` in dimensionless time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SubInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty interval ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lo < u && u <= self.hi
    }

    /// Length of the intersection with `(lo, hi]`.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerKind {
    /// One interval per label, ascending label order.
    Contiguous,
    /// Two labels laid out as `(N, N+o]` for label 1, then label 0 for its
    /// full quota, then label 1 again up to `N+1`.
    PaperTwoOutcome { offset: f64 },
    /// Each label's quota split into at most `max_subintervals` pieces, then
    /// interleaved by a seeded shuffle.
    SeededRandom,
}

/// Rule choosing the free interval endpoints inside a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    pub max_subintervals: usize,
    pub seed: u64,
}

impl Default for SchedulerSpec {
    fn default() -> Self {
        Self::contiguous()
    }
}

impl SchedulerSpec {
    pub fn contiguous() -> Self {
        Self { kind: SchedulerKind::Contiguous, max_subintervals: 1, seed: 0 }
    }

    pub fn paper_two_outcome(offset: f64) -> Self {
        Self { kind: SchedulerKind::PaperTwoOutcome { offset }, max_subintervals: 2, seed: 0 }
    }

    pub fn seeded_random(max_subintervals: usize, seed: u64) -> Self {
        Self { kind: SchedulerKind::SeededRandom, max_subintervals, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_subintervals == 0 {
            return Err(Error::InvalidScheduler("max_subintervals must be at least 1".into()));
        }
        if let SchedulerKind::PaperTwoOutcome { offset } = self.kind {
            if !(0.0..=1.0).contains(&offset) {
                return Err(Error::InvalidScheduler(format!("offset {offset} outside [0, 1]")));
            }
            if self.max_subintervals < 2 {
                return Err(Error::InvalidScheduler("paper-two-outcome needs max_subintervals >= 2".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SchedulerKind::Contiguous => "contiguous",
            SchedulerKind::PaperTwoOutcome { .. } => "paper-two-outcome",
            SchedulerKind::SeededRandom => "seeded-random",
        }
    }
}

/// Partition of `(start, end]` with `end = window_index + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPartition {
    window_index: u64,
    probabilities: Vec<f64>,
    /// Boundaries relative to the span, `0 = rel[0] < ... < rel[m] = 1`.
    rel: Vec<f64>,
    boundaries: Vec<f64>,
    owners: Vec<usize>,
}

/// Partition of the full window `(N, N+1]`.
pub fn build_partition(
    probabilities: &[f64],
    window_index: u64,
    scheduler: &SchedulerSpec,
) -> Result<WindowPartition> {
    build_partition_from(probabilities, window_index, window_index as f64, scheduler)
}

/// Partition of the window tail `(start, N+1]`, each label receiving
/// `p_k * (N + 1 - start)`.
pub fn build_partition_from(
    probabilities: &[f64],
    window_index: u64,
    start: f64,
    scheduler: &SchedulerSpec,
) -> Result<WindowPartition> {
    scheduler.validate()?;
    let probabilities = normalized_probabilities(probabilities)?;
    let end = window_index as f64 + 1.0;
    if !(start >= window_index as f64 && start < end) {
        return Err(Error::InvalidArgument(format!(
            "span start {start} outside window {window_index}"
        )));
    }
    let pieces = match scheduler.kind {
        SchedulerKind::Contiguous => contiguous_pieces(&probabilities),
        SchedulerKind::PaperTwoOutcome { offset } => {
            two_outcome_pieces(&probabilities, offset / (end - start))?
        }
        SchedulerKind::SeededRandom => {
            let stream = rng::mix64(window_index) ^ start.to_bits();
            let mut rng = rng::stream(scheduler.seed, stream);
            random_pieces(&probabilities, scheduler.max_subintervals, &mut rng)
        }
    };
    Ok(WindowPartition::from_pieces(window_index, start, probabilities, &pieces))
}

fn normalized_probabilities(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some(bad) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidProbabilities(format!("entry {bad} is not a probability")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::InvalidProbabilities(format!("entries sum to {sum}")));
    }
    Ok(p.iter().map(|x| x / sum).collect())
}

fn contiguous_pieces(p: &[f64]) -> Vec<(usize, f64)> {
    p.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(k, &x)| (k, x)).collect()
}

/// `offset` is relative to the span length; it is clamped so that label 0
/// always fits.
fn two_outcome_pieces(p: &[f64], offset: f64) -> Result<Vec<(usize, f64)>> {
    if p.len() != 2 {
        return Err(Error::InvalidScheduler(format!(
            "paper-two-outcome needs exactly 2 labels, got {}",
            p.len()
        )));
    }
    let quota = p[0];
    let lead = offset.min(1.0 - quota).max(0.0);
    let tail = (1.0 - lead - quota).max(0.0);
    Ok([(1, lead), (0, quota), (1, tail)].into_iter().filter(|(_, x)| *x > 0.0).collect())
}

fn random_pieces<R: Rng>(p: &[f64], max_pieces: usize, rng: &mut R) -> Vec<(usize, f64)> {
    let mut pieces = Vec::new();
    for (k, &quota) in p.iter().enumerate() {
        if quota <= 0.0 {
            continue;
        }
        let n = rng.gen_range(1..=max_pieces);
        // Weights in (0, 1] so no piece is empty.
        let weights: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        pieces.extend(weights.iter().map(|w| (k, quota * w / total)));
    }
    pieces.shuffle(rng);
    pieces
}

impl WindowPartition {
    fn from_pieces(window_index: u64, start: f64, probabilities: Vec<f64>, pieces: &[(usize, f64)]) -> Self {
        let end = window_index as f64 + 1.0;
        let len = end - start;
        // Adjacent pieces of one label form a single interval.
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(pieces.len());
        for &(owner, frac) in pieces {
            match merged.last_mut() {
                Some(last) if last.0 == owner => last.1 += frac,
                _ => merged.push((owner, frac)),
            }
        }
        let mut rel = vec![0.0];
        let mut boundaries = vec![start];
        let mut owners = Vec::with_capacity(merged.len());
        let mut cumulative = 0.0;
        for (i, &(owner, frac)) in merged.iter().enumerate() {
            cumulative += frac;
            let last = i + 1 == merged.len();
            // The final boundary is sealed to the window end; rounding
            // residue goes to the last interval.
            let r = if last { 1.0 } else { cumulative.min(1.0) };
            let hi = if last { end } else { start + r * len };
            if hi > *boundaries.last().unwrap() {
                rel.push(r);
                boundaries.push(hi);
                owners.push(owner);
            }
        }
        if *boundaries.last().unwrap() < end {
            // Only reachable when every tail piece was too small to store.
            if let Some(o) = owners.last().copied() {
                rel.push(1.0);
                boundaries.push(end);
                owners.push(o);
            }
        }
        Self { window_index, probabilities, rel, boundaries, owners }
    }

    /// Assembles a partition from raw boundaries without validation. Used to
    /// build fixtures and to exercise [`WindowPartition::audit`].
    pub fn from_raw_parts(
        window_index: u64,
        probabilities: Vec<f64>,
        boundaries: Vec<f64>,
        owners: Vec<usize>,
    ) -> Self {
        let start = boundaries.first().copied().unwrap_or(window_index as f64);
        let len = window_index as f64 + 1.0 - start;
        let rel = boundaries.iter().map(|b| (b - start) / len).collect();
        Self { window_index, probabilities, rel, boundaries, owners }
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        self.window_index as f64 + 1.0
    }

    /// Length of the partitioned span (1 for a full window).
    pub fn span_len(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn is_full_window(&self) -> bool {
        self.start() == self.window_index as f64
    }

    /// Probabilities the partition was built from, renormalized to sum to 1.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn num_labels(&self) -> usize {
        self.probabilities.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    /// Every stored interval with its owning label, in time order.
    pub fn timeline(&self) -> impl Iterator<Item = (SubInterval, usize)> + '_ {
        self.owners.iter().enumerate().map(|(i, &k)| {
            (SubInterval { lo: self.boundaries[i], hi: self.boundaries[i + 1] }, k)
        })
    }

    /// Sub-intervals owned by `label`, in time order.
    pub fn intervals(&self, label: usize) -> Result<Vec<SubInterval>> {
        self.check_label(label)?;
        Ok(self.timeline().filter(|(_, k)| *k == label).map(|(iv, _)| iv).collect())
    }

    pub fn contains(&self, u: f64) -> bool {
        self.start() < u && u <= self.end()
    }

    fn check_window(&self, u: f64) -> Result<()> {
        if !self.contains(u) {
            return Err(Error::OutsideWindow { u, lo: self.start(), hi: self.end() });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_labels() {
            return Err(Error::LabelOutOfRange { label, labels: self.num_labels() });
        }
        Ok(())
    }

    /// Position of the stored interval containing `u`.
    fn slot(&self, u: f64) -> Result<usize> {
        self.check_window(u)?;
        // First boundary >= u closes the interval containing u.
        let j = self.boundaries.partition_point(|&b| b < u);
        Ok(j - 1)
    }

    /// The unique label owning instant `u`.
    pub fn active_label(&self, u: f64) -> Result<usize> {
        Ok(self.owners[self.slot(u)?])
    }

    /// The interval containing `u` and its owner.
    pub fn active_interval(&self, u: f64) -> Result<(SubInterval, usize)> {
        let i = self.slot(u)?;
        Ok((SubInterval { lo: self.boundaries[i], hi: self.boundaries[i + 1] }, self.owners[i]))
    }

    /// Indicator `S_label(u)`.
    pub fn step_function(&self, label: usize, u: f64) -> Result<u8> {
        self.check_label(label)?;
        Ok(u8::from(self.active_label(u)? == label))
    }

    /// Total length of `label`'s sub-intervals.
    pub fn interval_measure(&self, label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(self.timeline().filter(|(_, k)| *k == label).map(|(iv, _)| iv.len()).sum())
    }

    /// Number of stored sub-intervals per label.
    pub fn subinterval_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels()];
        for &k in &self.owners {
            counts[k] += 1;
        }
        counts
    }

    /// The same layout on full window `window_index`.
    pub fn shifted_to(&self, window_index: u64) -> Result<WindowPartition> {
        if !self.is_full_window() {
            return Err(Error::InvalidArgument("only full-window partitions can be shifted".into()));
        }
        let n = window_index as f64;
        let last = self.rel.len() - 1;
        let boundaries = self
            .rel
            .iter()
            .enumerate()
            .map(|(i, &r)| if i == last { n + 1.0 } else { n + r })
            .collect();
        Ok(WindowPartition {
            window_index,
            probabilities: self.probabilities.clone(),
            rel: self.rel.clone(),
            boundaries,
            owners: self.owners.clone(),
        })
    }

    /// Copies a window-0 partition to window `n`: `t(N) = N + t(0)`.
    pub fn periodic_extend(&self, n: u64) -> Result<WindowPartition> {
        if self.window_index != 0 || !self.is_full_window() {
            return Err(Error::InvalidArgument(
                "periodic extension starts from a full window-0 partition".into(),
            ));
        }
        self.shifted_to(n)
    }

    /// Checks ordering, disjointness, coverage and per-label measure.
    pub fn audit(&self) -> Result<()> {
        let b = &self.boundaries;
        if b.len() != self.owners.len() + 1 || self.owners.is_empty() {
            return Err(Error::Invariant("partition boundary/owner count mismatch".into()));
        }
        if let Some(&k) = self.owners.iter().find(|&&k| k >= self.num_labels()) {
            return Err(Error::Invariant(format!("interval owned by unknown label {k}")));
        }
        if let Some(w) = b.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Invariant(format!(
                "disjointness: boundaries {} and {} are not increasing",
                w[0], w[1]
            )));
        }
        let start_gap = (b[0] - self.start()).abs();
        let end_gap = (self.end() - b[b.len() - 1]).abs();
        if b[0] < self.window_index as f64 || start_gap + end_gap > MEASURE_TOLERANCE {
            return Err(Error::Invariant(format!(
                "coverage: span ({}, {}] leaves gap {:e} in window {}",
                b[0],
                b[b.len() - 1],
                start_gap + end_gap,
                self.window_index
            )));
        }
        let len = self.span_len();
        for k in 0..self.num_labels() {
            let m = self.interval_measure(k)?;
            let expected = self.probabilities[k] * len;
            if (m - expected).abs() > MEASURE_TOLERANCE {
                return Err(Error::Invariant(format!(
                    "measure: label {k} has length {m}, expected {expected}"
                )));
            }
        }
        Ok(())
    }
}

/// Writes `window_index,label,lo,hi` records sorted by `lo`. When `labels` is
/// given, label indices are replaced by their multi-index form.
pub fn write_partition_dump<W: Write>(
    out: &mut W,
    partition: &WindowPartition,
    labels: Option<&[Label]>,
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(out, "window_index,label,lo,hi")?;
    }
    for (iv, k) in partition.timeline() {
        let label = match labels {
            Some(l) => l[k].to_string(),
            None => k.to_string(),
        };
        writeln!(out, "{},{},{},{}", partition.window_index(), label, iv.lo, iv.hi)?;
    }
    Ok(())
}
