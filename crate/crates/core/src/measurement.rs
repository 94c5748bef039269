//! Measurement, collapse and re-partitioning.
//!
//! A measurement of a CSCO at instant `u` returns the label its microstate
//! holds at `u`. The state is then replaced by that basis vector and every
//! CSCO partition is rebuilt from the new state. A collapse inside window `N`
//! partitions the tail `(u, N+1]` in proportion to the new probabilities.
//!
//! The system is a value: every operation returns a new snapshot.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{born_probabilities, check_dim, evolve, Csco, Hamiltonian, Label, QuantumState, C64};
use crate::partition::{build_partition, build_partition_from, SchedulerSpec, WindowPartition};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub time: f64,
    pub csco_id: String,
    pub outcome_index: usize,
    pub outcome_label: Label,
    pub outcome_eigenvalues: Vec<f64>,
    pub pre_state: QuantumState,
    pub post_state: QuantumState,
}

#[derive(Debug)]
struct Setup {
    hamiltonian: Hamiltonian,
    cscos: Vec<Csco>,
    schedulers: Vec<SchedulerSpec>,
    conserved: Vec<bool>,
}

/// State, dynamics and one current partition per CSCO.
#[derive(Debug, Clone)]
pub struct SystemUnderObservation {
    setup: Arc<Setup>,
    state: QuantumState,
    current_time: f64,
    partitions: Vec<WindowPartition>,
    history: Vec<MeasurementRecord>,
    renormalizations: usize,
}

impl SystemUnderObservation {
    /// System at `u = 0` with window-0 partitions built from `state`.
    pub fn new(
        state: QuantumState,
        hamiltonian: Hamiltonian,
        cscos: Vec<Csco>,
        schedulers: Vec<SchedulerSpec>,
    ) -> Result<Self> {
        if cscos.is_empty() {
            return Err(Error::InvalidArgument("at least one CSCO is required".into()));
        }
        if schedulers.len() != cscos.len() {
            return Err(Error::InvalidArgument(format!(
                "{} CSCOs but {} schedulers",
                cscos.len(),
                schedulers.len()
            )));
        }
        check_dim(hamiltonian.dim(), state.dim())?;
        for (i, c) in cscos.iter().enumerate() {
            check_dim(state.dim(), c.dim())?;
            if cscos[..i].iter().any(|o| o.id() == c.id()) {
                return Err(Error::InvalidArgument(format!("duplicate CSCO id `{}`", c.id())));
            }
        }
        for s in &schedulers {
            s.validate()?;
        }
        let conserved = cscos.iter().map(|c| c.is_conserved_by(&hamiltonian)).collect();
        let setup = Arc::new(Setup { hamiltonian, cscos, schedulers, conserved });
        let partitions = build_all(&setup, &state, 0, 0.0)?;
        Ok(Self { setup, state, current_time: 0.0, partitions, history: Vec::new(), renormalizations: 0 })
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn current_time(&self) -> f64 {
        self.current_time
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.setup.hamiltonian
    }

    pub fn cscos(&self) -> &[Csco] {
        &self.setup.cscos
    }

    pub fn history(&self) -> &[MeasurementRecord] {
        &self.history
    }

    pub fn renormalizations(&self) -> usize {
        self.renormalizations
    }

    pub fn csco_index(&self, id: &str) -> Result<usize> {
        self.setup
            .cscos
            .iter()
            .position(|c| c.id() == id)
            .ok_or_else(|| Error::UnknownCsco(id.to_string()))
    }

    pub fn partition(&self, csco_id: &str) -> Result<&WindowPartition> {
        Ok(&self.partitions[self.csco_index(csco_id)?])
    }

    pub fn partitions(&self) -> &[WindowPartition] {
        &self.partitions
    }

    fn span_end(&self) -> f64 {
        self.partitions[0].end()
    }

    fn evolved(&self, du: f64) -> Result<(QuantumState, usize)> {
        let psi = evolve(&self.state, &self.setup.hamiltonian, du)?;
        let r = usize::from(psi.was_renormalized());
        Ok((psi, r))
    }

    /// Evolves to `u_target`, rebuilding partitions on window crossings from
    /// the state at the new window's start.
    pub fn advance(&self, u_target: f64) -> Result<Self> {
        if !(u_target >= self.current_time) || !u_target.is_finite() {
            return Err(Error::BackwardTime { requested: u_target, current: self.current_time });
        }
        let mut next = self.clone();
        if u_target > self.span_end() {
            let window = u_target.ceil() as u64 - 1;
            let start = window as f64;
            let (psi_start, r0) = self.evolved(start - self.current_time)?;
            let mut partitions = Vec::with_capacity(self.partitions.len());
            for (j, old) in self.partitions.iter().enumerate() {
                let p = if self.setup.conserved[j] && old.is_full_window() {
                    old.shifted_to(window)?
                } else {
                    let probs = born_probabilities(&psi_start, &self.setup.cscos[j])?;
                    build_partition(&probs, window, &self.setup.schedulers[j])?
                };
                partitions.push(p);
            }
            let psi = evolve(&psi_start, &self.setup.hamiltonian, u_target - start)?;
            next.renormalizations += r0 + usize::from(psi.was_renormalized());
            next.state = psi;
            next.partitions = partitions;
        } else {
            let (psi, r) = self.evolved(u_target - self.current_time)?;
            next.renormalizations += r;
            next.state = psi;
        }
        next.current_time = u_target;
        Ok(next)
    }

    /// Measures `csco_id` at `u`: reads the active label, collapses the state
    /// onto that basis vector and re-partitions every CSCO.
    pub fn measure(&self, csco_id: &str, u: f64) -> Result<(MeasurementRecord, Self)> {
        let j = self.csco_index(csco_id)?;
        let mut sys = self.advance(u)?;
        let partition = &sys.partitions[j];
        let csco = &sys.setup.cscos[j];
        let k = partition.active_label(u)?;
        let window = partition.window_index();
        let post = QuantumState::from_unit(csco.vector(k)?)?;
        let record = MeasurementRecord {
            time: u,
            csco_id: csco.id().to_string(),
            outcome_index: k,
            outcome_label: csco.labels()[k].clone(),
            outcome_eigenvalues: csco.eigenvalues()[k].clone(),
            pre_state: sys.state.clone(),
            post_state: post.clone(),
        };
        sys.partitions = if u < window as f64 + 1.0 {
            build_all(&sys.setup, &post, window, u)?
        } else {
            // Collapse on the window's right edge: the next window starts now.
            build_all(&sys.setup, &post, window + 1, u)?
        };
        sys.state = post;
        sys.history.push(record.clone());
        Ok((record, sys))
    }
}

fn build_all(setup: &Setup, state: &QuantumState, window: u64, start: f64) -> Result<Vec<WindowPartition>> {
    setup
        .cscos
        .iter()
        .zip(&setup.schedulers)
        .map(|(c, s)| build_partition_from(&born_probabilities(state, c)?, window, start, s))
        .collect()
}

/// `sum_k S_k(u) |O_k><O_k|`.
pub fn measurement_operator(p: &WindowPartition, csco: &Csco, u: f64) -> Result<DMatrix<C64>> {
    check_dim(csco.dim(), p.num_labels())?;
    let v = csco.vector(p.active_label(u)?)?;
    Ok(&v * v.adjoint())
}

/// `<O_k|psi> |O_k>` for the label active at `u`; not renormalized.
pub fn measurement_operator_apply(
    state: &QuantumState,
    p: &WindowPartition,
    csco: &Csco,
    u: f64,
) -> Result<DVector<C64>> {
    check_dim(csco.dim(), state.dim())?;
    Ok(measurement_operator(p, csco, u)? * state.amplitudes())
}

/// When a step's measurement happens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    At(f64),
    /// Uniform over `(lo, hi]`, drawn per run.
    Uniform { lo: f64, hi: f64 },
}

impl TimeSpec {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            TimeSpec::At(u) => (u, u),
            TimeSpec::Uniform { lo, hi } => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStep {
    pub csco_id: String,
    pub time: TimeSpec,
}

fn validate_sequence(sys: &SystemUnderObservation, steps: &[MeasurementStep]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::InvalidArgument("empty measurement sequence".into()));
    }
    let mut prev_hi: Option<f64> = None;
    for (i, s) in steps.iter().enumerate() {
        sys.csco_index(&s.csco_id)?;
        let (lo, hi) = s.time.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
            return Err(Error::InvalidArgument(format!("step {i}: bad time range ({lo}, {hi}]")));
        }
        if let TimeSpec::Uniform { lo, hi } = s.time {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("step {i}: empty time range ({lo}, {hi}]")));
            }
        }
        if let Some(p) = prev_hi {
            // Draws are left-open, so a range may start where the last ended.
            let ok = match s.time {
                TimeSpec::At(u) => u > p,
                TimeSpec::Uniform { lo, .. } => lo >= p,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("step {i}: measurement times must increase")));
            }
        }
        prev_hi = Some(hi);
    }
    Ok(())
}

/// Times and outcome label indices of one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub times: Vec<f64>,
    pub outcomes: Vec<usize>,
}

/// Joint distribution of outcome sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub steps: Vec<MeasurementStep>,
    pub counts: BTreeMap<Vec<usize>, u64>,
    pub runs: u64,
}

impl JointDistribution {
    pub fn frequency(&self, outcomes: &[usize]) -> f64 {
        self.counts.get(outcomes).copied().unwrap_or(0) as f64 / self.runs as f64
    }

    /// Reorders steps by CSCO id (stable) and permutes every outcome key to
    /// match, so that two orderings of the same measurements compare by
    /// observable rather than by position.
    pub fn aligned(&self) -> JointDistribution {
        let mut order: Vec<usize> = (0..self.steps.len()).collect();
        order.sort_by(|&a, &b| self.steps[a].csco_id.cmp(&self.steps[b].csco_id));
        let mut counts = BTreeMap::new();
        for (k, &c) in &self.counts {
            *counts.entry(order.iter().map(|&i| k[i]).collect()).or_insert(0) += c;
        }
        JointDistribution { steps: order.iter().map(|&i| self.steps[i].clone()).collect(), counts, runs: self.runs }
    }
}

/// Half the L1 distance between two outcome-sequence distributions.
pub fn total_variation(a: &JointDistribution, b: &JointDistribution) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<usize>> = a.counts.keys().chain(b.counts.keys()).collect();
    0.5 * keys.into_iter().map(|k| (a.frequency(k) - b.frequency(k)).abs()).sum::<f64>()
}

/// Runs the protocol `n_runs` times from `initial`, drawing random step times
/// from run-specific streams of `seed`.
pub fn sequential_experiment(
    initial: &SystemUnderObservation,
    steps: &[MeasurementStep],
    n_runs: u64,
    seed: u64,
) -> Result<(JointDistribution, Vec<RunOutcome>)> {
    validate_sequence(initial, steps)?;
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be at least 1".into()));
    }
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rng::stream(seed, run);
            let mut sys = initial.clone();
            let mut out = RunOutcome { times: Vec::with_capacity(steps.len()), outcomes: Vec::with_capacity(steps.len()) };
            for s in steps {
                let u = match s.time {
                    TimeSpec::At(u) => u,
                    TimeSpec::Uniform { lo, hi } => rng::uniform_left_open(&mut rng, lo, hi),
                };
                let (record, next) = sys.measure(&s.csco_id, u)?;
                out.times.push(u);
                out.outcomes.push(record.outcome_index);
                sys = next;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    for r in &runs {
        *counts.entry(r.outcomes.clone()).or_insert(0) += 1;
    }
    Ok((JointDistribution { steps: steps.to_vec(), counts, runs: n_runs }, runs))
}

fn outcome_key(sys: &SystemUnderObservation, steps: &[MeasurementStep], outcomes: &[usize]) -> String {
    steps
        .iter()
        .zip(outcomes)
        .map(|(s, &k)| {
            let c = &sys.cscos()[sys.csco_index(&s.csco_id).expect("validated")];
            format!("{}={}", s.csco_id, c.labels()[k])
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Writes `run_id,step,u,csco_id,outcome_label,eigenvalue_0,...` rows.
pub fn write_measurement_log<W: Write>(
    out: &mut W,
    sys: &SystemUnderObservation,
    steps: &[MeasurementStep],
    runs: &[RunOutcome],
) -> io::Result<()> {
    let members = sys.cscos().iter().map(Csco::members).max().unwrap_or(0);
    write!(out, "run_id,step,u,csco_id,outcome_label")?;
    for m in 0..members {
        write!(out, ",eigenvalue_{m}")?;
    }
    writeln!(out)?;
    for (run_id, r) in runs.iter().enumerate() {
        for (step, (s, (&u, &k))) in steps.iter().zip(r.times.iter().zip(&r.outcomes)).enumerate() {
            let c = &sys.cscos()[sys.csco_index(&s.csco_id).expect("validated")];
            write!(out, "{run_id},{step},{u},{},{}", s.csco_id, c.labels()[k])?;
            for m in 0..members {
                match c.eigenvalues()[k].get(m) {
                    Some(x) => write!(out, ",{x}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Writes `sequence,outcomes,count,frequency` rows for each distribution.
pub fn write_joint_summary<W: Write>(
    out: &mut W,
    sys: &SystemUnderObservation,
    dists: &[JointDistribution],
) -> io::Result<()> {
    writeln!(out, "sequence,outcomes,count,frequency")?;
    for (i, d) in dists.iter().enumerate() {
        for (k, &count) in &d.counts {
            writeln!(out, "{i},{},{count},{}", outcome_key(sys, &d.steps, k), count as f64 / d.runs as f64)?;
        }
    }
    Ok(())
}
