//! Microstate snapshots, the value function and jump trajectories.
//!
//! At every instant the microstate of a CSCO is the basis vector whose label
//! owns that instant in the current window partition. Across windows it jumps
//! between basis vectors; a [`JumpTrajectory`] records that piecewise history.

use std::io::{self, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hilbert::{born_probabilities, check_dim, evolve, Csco, Hamiltonian, Label, QuantumState, C64};
use crate::partition::{build_partition, SchedulerSpec, SubInterval, WindowPartition, MEASURE_TOLERANCE};

/// Default cap on eagerly computed trajectory windows.
pub const DEFAULT_MAX_WINDOWS: u64 = 10_000;

/// The microstate `|M(u)>` of one CSCO at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrostateSnapshot {
    pub csco_id: String,
    pub time: f64,
    pub label_index: usize,
    pub label: Label,
    pub eigenvalues: Vec<f64>,
    pub basis_vector: DVector<C64>,
}

impl MicrostateSnapshot {
    /// `<O_k|M(u)>`, which is `S_k(u)` for an orthonormal basis.
    pub fn overlap(&self, csco: &Csco, label: usize) -> Result<C64> {
        Ok(csco.vector(label)?.dotc(&self.basis_vector))
    }
}

fn check_partition(p: &WindowPartition, csco: &Csco) -> Result<()> {
    check_dim(csco.dim(), p.num_labels())
}

pub fn microstate_at(p: &WindowPartition, csco: &Csco, u: f64) -> Result<MicrostateSnapshot> {
    check_partition(p, csco)?;
    let k = p.active_label(u)?;
    Ok(MicrostateSnapshot {
        csco_id: csco.id().to_string(),
        time: u,
        label_index: k,
        label: csco.labels()[k].clone(),
        eigenvalues: csco.eigenvalues()[k].clone(),
        basis_vector: csco.vector(k)?,
    })
}

/// Eigenvalue of the selected member for the label active at `u`.
pub fn value_function(p: &WindowPartition, csco: &Csco, member: usize, u: f64) -> Result<f64> {
    check_partition(p, csco)?;
    csco.eigenvalue(p.active_label(u)?, member)
}

/// `O_label(u) |O_label>`: the eigenvalue times the basis vector while the
/// label is active, the zero vector otherwise.
pub fn apply_value_operator(
    p: &WindowPartition,
    csco: &Csco,
    member: usize,
    label: usize,
    u: f64,
) -> Result<DVector<C64>> {
    check_partition(p, csco)?;
    let step = p.step_function(label, u)?;
    let value = csco.eigenvalue(label, member)?;
    let v = csco.vector(label)?;
    Ok(v * C64::new(f64::from(step) * value, 0.0))
}

/// One piece of a trajectory: label `label_index` is active on `interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub window: u64,
    pub interval: SubInterval,
    pub label_index: usize,
    pub label: Label,
    pub eigenvalues: Vec<f64>,
}

/// Microstate history of one CSCO over windows `0..windows_covered`.
#[derive(Debug, Clone)]
pub struct JumpTrajectory {
    csco: Csco,
    events: Vec<JumpEvent>,
    partitions: Vec<WindowPartition>,
    renormalizations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub max_windows: u64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { max_windows: DEFAULT_MAX_WINDOWS }
    }
}

/// Builds the jump trajectory of `csco` for `windows` consecutive windows.
///
/// Window `N` is partitioned from the Born probabilities of `psi(N)`. When the
/// Hamiltonian conserves every label projector the window-0 layout is reused
/// shifted by `N`.
pub fn trajectory(
    state0: &QuantumState,
    hamiltonian: &Hamiltonian,
    csco: &Csco,
    scheduler: &SchedulerSpec,
    windows: u64,
) -> Result<JumpTrajectory> {
    trajectory_with(state0, hamiltonian, csco, scheduler, windows, TrajectoryOptions::default())
}

pub fn trajectory_with(
    state0: &QuantumState,
    hamiltonian: &Hamiltonian,
    csco: &Csco,
    scheduler: &SchedulerSpec,
    windows: u64,
    options: TrajectoryOptions,
) -> Result<JumpTrajectory> {
    if windows == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one window".into()));
    }
    if windows > options.max_windows {
        return Err(Error::InvalidArgument(format!(
            "{windows} windows exceeds the cap of {}",
            options.max_windows
        )));
    }
    check_dim(csco.dim(), state0.dim())?;
    let conserved = csco.is_conserved_by(hamiltonian);
    let mut partitions: Vec<WindowPartition> = Vec::with_capacity(windows as usize);
    let mut renormalizations = 0;
    for n in 0..windows {
        let partition = if conserved && n > 0 {
            partitions[0].shifted_to(n)?
        } else {
            // Evolve from the initial state each time rather than chaining.
            let psi = evolve(state0, hamiltonian, n as f64)?;
            if psi.was_renormalized() {
                renormalizations += 1;
            }
            build_partition(&born_probabilities(&psi, csco)?, n, scheduler)?
        };
        partitions.push(partition);
    }
    Ok(JumpTrajectory::from_partitions(csco.clone(), partitions, renormalizations))
}

impl JumpTrajectory {
    /// Assembles a trajectory from consecutive full-window partitions.
    pub fn from_partitions(csco: Csco, partitions: Vec<WindowPartition>, renormalizations: usize) -> Self {
        let mut events = Vec::new();
        for p in &partitions {
            for (interval, k) in p.timeline() {
                events.push(JumpEvent {
                    window: p.window_index(),
                    interval,
                    label_index: k,
                    label: csco.labels()[k].clone(),
                    eigenvalues: csco.eigenvalues()[k].clone(),
                });
            }
        }
        Self { csco, events, partitions, renormalizations }
    }

    pub fn csco(&self) -> &Csco {
        &self.csco
    }

    pub fn csco_id(&self) -> &str {
        self.csco.id()
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn partitions(&self) -> &[WindowPartition] {
        &self.partitions
    }

    pub fn windows_covered(&self) -> u64 {
        self.partitions.len() as u64
    }

    /// Evolution steps whose norm drift forced a renormalization.
    pub fn renormalizations(&self) -> usize {
        self.renormalizations
    }

    pub fn window(&self, n: u64) -> Result<&WindowPartition> {
        self.partitions
            .get(n as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("window {n} not in trajectory")))
    }

    /// Window containing instant `u`, i.e. `ceil(u) - 1`.
    pub fn window_of(&self, u: f64) -> Result<u64> {
        let end = self.windows_covered() as f64;
        if !(u > 0.0 && u <= end) {
            return Err(Error::OutsideWindow { u, lo: 0.0, hi: end });
        }
        Ok(u.ceil() as u64 - 1)
    }

    pub fn active_label(&self, u: f64) -> Result<usize> {
        self.partitions[self.window_of(u)? as usize].active_label(u)
    }

    pub fn value_at(&self, u: f64, member: usize) -> Result<f64> {
        self.csco.eigenvalue(self.active_label(u)?, member)
    }

    pub fn microstate_at(&self, u: f64) -> Result<MicrostateSnapshot> {
        microstate_at(&self.partitions[self.window_of(u)? as usize], &self.csco, u)
    }

    /// Checks that events tile `(0, windows]` and that each window's per-label
    /// durations match its Born probabilities.
    pub fn audit(&self) -> Result<()> {
        let mut cursor = 0.0;
        for e in &self.events {
            if e.interval.lo != cursor || !(e.interval.hi > e.interval.lo) {
                return Err(Error::Invariant(format!(
                    "tiling: event ({}, {}] does not continue from {cursor}",
                    e.interval.lo, e.interval.hi
                )));
            }
            cursor = e.interval.hi;
        }
        if cursor != self.windows_covered() as f64 {
            return Err(Error::Invariant(format!("tiling: events end at {cursor}")));
        }
        for p in &self.partitions {
            p.audit()?;
            if (p.span_len() - 1.0).abs() > MEASURE_TOLERANCE {
                return Err(Error::Invariant("trajectory window is not a full window".into()));
            }
        }
        Ok(())
    }
}

/// Writes `window,label,lo,hi,eigenvalue_0,...` records in time order.
pub fn write_trajectory_dump<W: Write>(out: &mut W, traj: &JumpTrajectory) -> io::Result<()> {
    write!(out, "window,label,lo,hi")?;
    for m in 0..traj.csco().members() {
        write!(out, ",eigenvalue_{m}")?;
    }
    writeln!(out)?;
    for e in traj.events() {
        write!(out, "{},{},{},{}", e.window, e.label, e.interval.lo, e.interval.hi)?;
        for x in &e.eigenvalues {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
