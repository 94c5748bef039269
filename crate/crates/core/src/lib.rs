//! Finite-dimensional simulation of quantum statistics as ergodic averages of
//! microstates.
//!
//! Each unit time window `(N, N+1]` (time is measured in Compton times) is
//! split into disjoint half-open sub-intervals, one family per eigen-label of a
//! complete set of commuting observables, with total length per label equal to
//! that label's Born probability at the window start. The microstate is the
//! basis vector whose label owns the current instant. Time averages over a
//! window then reproduce quantum expectation values exactly, and sampling at
//! uniformly random instants reproduces the Born rule.
//!
//! Modules, bottom-up:
//!
//! * [`hilbert`]: states, Hamiltonians, CSCOs, Born probabilities, evolution.
//! * [`partition`]: window partitions and the schedulers that lay them out.
//! * [`microstate`]: snapshots, value function and jump trajectories.
//! * [`ergodic`]: exact window averages and Monte Carlo statistics.
//! * [`measurement`]: the collapse-and-repartition protocol.
//! * [`qgrid`]: Planck-cell position probabilities on a sampled wavefunction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ergodic;
pub mod hilbert;
pub mod measurement;
pub mod microstate;
pub mod partition;
pub mod qgrid;
pub mod rng;

pub use error::{Error, Result};
pub use hilbert::{Csco, Hamiltonian, Label, PhysicalScales, QuantumState, C64};
pub use partition::{SchedulerKind, SchedulerSpec, SubInterval, WindowPartition};
