//! Window averages, Born-rule sampling and sub-window correlations.
//!
//! Averages are exact interval arithmetic over the piecewise-constant step and
//! value functions. Monte Carlo is used only where instants are drawn at
//! random; draws come in fixed-size chunks, each from its own derived
//! ChaCha8 stream, so results are identical for any number of threads.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{Csco, Label};
use crate::microstate::JumpTrajectory;
use crate::partition::WindowPartition;
use crate::rng;

/// Draws per independent random sub-stream.
pub const CHUNK_SIZE: u64 = 1 << 16;

/// `<S_label>` over the partition's span.
pub fn window_average_step(p: &WindowPartition, label: usize) -> Result<f64> {
    Ok(p.interval_measure(label)? / p.span_len())
}

/// `<O(u)>` over the partition's span for one member observable.
pub fn window_average_value(p: &WindowPartition, csco: &Csco, member: usize) -> Result<f64> {
    csco.check_member(member)?;
    if csco.dim() != p.num_labels() {
        return Err(Error::DimensionMismatch { expected: csco.dim(), found: p.num_labels() });
    }
    let integral: f64 = p.timeline().map(|(iv, k)| iv.len() * csco.eigenvalues()[k][member]).sum();
    Ok(integral / p.span_len())
}

/// Label frequencies from uniformly random instants.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub labels: Vec<Label>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub estimates: Vec<f64>,
    /// Binomial standard error from the estimate, `sqrt(p(1-p)/n)`.
    pub stderr: Vec<f64>,
    /// Interval measures of the sampled window.
    pub exact: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_counts(labels: Vec<Label>, counts: Vec<u64>, exact: Vec<f64>) -> Self {
        let total: u64 = counts.iter().sum();
        let n = total.max(1) as f64;
        let estimates: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let stderr = estimates.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        Self { labels, counts, total, estimates, stderr, exact }
    }

    /// Largest `|estimate - exact|` in units of the binomial standard error
    /// computed from the exact probability.
    pub fn max_z_score(&self) -> f64 {
        let n = self.total as f64;
        self.estimates
            .iter()
            .zip(&self.exact)
            .map(|(e, p)| {
                let sigma = (p * (1.0 - p) / n).sqrt();
                if sigma == 0.0 {
                    if e == p { 0.0 } else { f64::INFINITY }
                } else {
                    (e - p).abs() / sigma
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Counts draws that land on each label, chunked over derived sub-streams.
pub(crate) fn chunked_counts<F>(n_samples: u64, seed: u64, labels: usize, draw: F) -> Vec<u64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> usize + Sync,
{
    let chunks = n_samples.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, c);
            let n = CHUNK_SIZE.min(n_samples - c * CHUNK_SIZE);
            let mut counts = vec![0u64; labels];
            for _ in 0..n {
                counts[draw(&mut rng)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; labels],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Records the active label at `n_samples` uniform instants in `window`.
pub fn sample_born(traj: &JumpTrajectory, window: u64, n_samples: u64, seed: u64) -> Result<EmpiricalDistribution> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let p = traj.window(window)?;
    let (lo, hi) = (p.start(), p.end());
    let d = p.num_labels();
    let counts = chunked_counts(n_samples, seed, d, |rng| {
        let u = rng::uniform_left_open(rng, lo, hi);
        p.active_label(u).expect("draw lies inside the window")
    });
    let exact = (0..d).map(|k| p.interval_measure(k)).collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalDistribution::from_counts(traj.csco().labels().to_vec(), counts, exact))
}

/// Exact integral of the value function over `(alpha, alpha + 1]`.
pub fn offset_window_average(traj: &JumpTrajectory, alpha: f64, member: usize) -> Result<f64> {
    traj.csco().check_member(member)?;
    let end = traj.windows_covered() as f64;
    if !(alpha >= 0.0 && alpha + 1.0 <= end) {
        return Err(Error::InvalidArgument(format!(
            "offset window ({alpha}, {}] outside trajectory (0, {end}]",
            alpha + 1.0
        )));
    }
    let (lo, hi) = (alpha, alpha + 1.0);
    let first = alpha.floor() as usize;
    let last = ((hi.ceil() as usize).min(traj.windows_covered() as usize)).max(first + 1);
    let mut integral = 0.0;
    for p in &traj.partitions()[first..last] {
        for (iv, k) in p.timeline() {
            integral += iv.overlap(lo, hi) * traj.csco().eigenvalues()[k][member];
        }
    }
    Ok(integral)
}

/// Monte Carlo estimate of the probability that the active label at `u`
/// equals the one at `u + delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub delta: f64,
    pub same: u64,
    pub pairs: u64,
    pub fraction: f64,
    pub stderr: f64,
}

/// Base instants cover whole windows, `(0, W - ceil(delta)]`, so the shifted
/// instant stays inside the trajectory and every window is weighted equally.
fn check_delta(traj: &JumpTrajectory, delta: f64) -> Result<f64> {
    let end = traj.windows_covered() as f64;
    if !(delta >= 0.0) || end - delta.ceil() < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} leaves no whole window of base instants in a {end}-window trajectory"
        )));
    }
    Ok(end - delta.ceil())
}

/// Reads the trajectory at base instants uniform in `(0, W - ceil(delta)]` and at
/// the same instants shifted by `delta`.
pub fn sub_tau_correlation(traj: &JumpTrajectory, delta: f64, n_pairs: u64, seed: u64) -> Result<CorrelationEstimate> {
    let top = check_delta(traj, delta)?;
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
    }
    let counts = chunked_counts(n_pairs, seed, 2, |rng| {
        let u = rng::uniform_left_open(rng, 0.0, top);
        let a = traj.active_label(u).expect("base inside trajectory");
        let b = traj.active_label(u + delta).expect("shifted instant inside trajectory");
        usize::from(a == b)
    });
    let same = counts[1];
    let fraction = same as f64 / n_pairs as f64;
    Ok(CorrelationEstimate {
        delta,
        same,
        pairs: n_pairs,
        fraction,
        stderr: (fraction * (1.0 - fraction) / n_pairs as f64).sqrt(),
    })
}

/// Exact measure fraction of base instants in `(0, W - ceil(delta)]` whose label
/// matches the label `delta` later.
pub fn exact_same_outcome_fraction(traj: &JumpTrajectory, delta: f64) -> Result<f64> {
    let top = check_delta(traj, delta)?;
    let mut cuts: Vec<f64> = vec![0.0, top];
    for e in traj.events() {
        for b in [e.interval.hi, e.interval.hi - delta] {
            if b > 0.0 && b < top {
                cuts.push(b);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut same = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if traj.active_label(mid)? == traj.active_label(mid + delta)? {
            same += w[1] - w[0];
        }
    }
    Ok(same / top)
}

/// One row of the statistics output.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRecord {
    pub experiment: String,
    pub label: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub exact: Option<f64>,
}

impl StatRecord {
    pub fn deviation(&self) -> Option<f64> {
        self.exact.map(|x| self.estimate - x)
    }
}

pub fn distribution_records(experiment: &str, dist: &EmpiricalDistribution) -> Vec<StatRecord> {
    (0..dist.labels.len())
        .map(|k| StatRecord {
            experiment: experiment.to_string(),
            label: dist.labels[k].to_string(),
            estimate: dist.estimates[k],
            stderr: Some(dist.stderr[k]),
            exact: Some(dist.exact[k]),
        })
        .collect()
}

/// Writes `experiment,label,estimate,stderr,exact,deviation` rows; missing
/// values are left empty.
pub fn write_stats<W: Write>(out: &mut W, records: &[StatRecord]) -> io::Result<()> {
    fn opt(x: Option<f64>) -> String {
        // `+ 0.0` folds negative zero into zero.
        x.map(|v| (v + 0.0).to_string()).unwrap_or_default()
    }
    writeln!(out, "experiment,label,estimate,stderr,exact,deviation")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment,
            r.label,
            r.estimate + 0.0,
            opt(r.stderr),
            opt(r.exact),
            opt(r.deviation())
        )?;
    }
    Ok(())
}
