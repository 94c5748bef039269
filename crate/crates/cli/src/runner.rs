//! Executes experiment blocks and writes their artifacts.
//!
//! Every block renders its files into memory first. Files reach the output
//! directory only after all blocks succeed; on any failure a `FAILED` marker
//! is written instead.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ergodic_core::ergodic::{
    distribution_records, exact_same_outcome_fraction, offset_window_average, sample_born, sub_tau_correlation,
    write_stats, StatRecord,
};
use ergodic_core::hilbert::{born_probabilities, evolve, expectation};
use ergodic_core::measurement::{
    sequential_experiment, total_variation, write_joint_summary, write_measurement_log, JointDistribution,
    MeasurementStep, SystemUnderObservation, TimeSpec,
};
use ergodic_core::microstate::{trajectory, write_trajectory_dump, JumpTrajectory};
use ergodic_core::partition::write_partition_dump;
use ergodic_core::qgrid::{position_partition, write_cell_probabilities};
use ergodic_core::rng::derive_seed;
use ergodic_core::{Label, WindowPartition};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RawExperiment, RawStep, Scenario};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `output_dir`.
    pub out_dir: Option<PathBuf>,
    /// Treat any state renormalization as an invariant violation.
    pub strict_float: bool,
    /// Run experiment blocks concurrently. Blocks never share state, so the
    /// artifacts are the same as a sequential run.
    pub parallel_blocks: bool,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub renormalizations: usize,
}

#[derive(Serialize)]
struct ManifestArtifact<'a> {
    name: &'a str,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct ManifestSeed<'a> {
    source: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    config: String,
    config_sha256: String,
    seeds: Vec<ManifestSeed<'a>>,
    renormalizations: usize,
    artifacts: Vec<ManifestArtifact<'a>>,
    generated_at: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

struct BlockOutput {
    artifacts: Vec<Artifact>,
    renormalizations: usize,
}

fn audited(t: JumpTrajectory) -> Result<JumpTrajectory, CliError> {
    t.audit().map_err(|e| CliError::Invariant(format!("trajectory {}: {e}", t.csco_id())))?;
    Ok(t)
}

fn build_trajectory(s: &Scenario, csco: &str, windows: u64) -> Result<JumpTrajectory, CliError> {
    let k = s.csco_index(csco).expect("validated");
    audited(trajectory(&s.state, &s.hamiltonian, &s.cscos[k], &s.schedulers[k], windows)?)
}

fn stats(name: String, records: &[StatRecord]) -> Artifact {
    Artifact { name, bytes: render(|w| write_stats(w, records)) }
}

fn record(experiment: &str, label: String, estimate: f64, stderr: Option<f64>, exact: Option<f64>) -> StatRecord {
    StatRecord { experiment: experiment.to_string(), label, estimate, stderr, exact }
}

fn steps(raw: &[RawStep]) -> Vec<MeasurementStep> {
    raw.iter()
        .map(|s| MeasurementStep {
            csco_id: s.csco.clone(),
            time: match (s.at, s.range) {
                (Some(u), _) => TimeSpec::At(u),
                (None, Some([lo, hi])) => TimeSpec::Uniform { lo, hi },
                (None, None) => unreachable!("validated"),
            },
        })
        .collect()
}

/// Upper bound on the standard error of a total-variation estimate between two
/// independent multinomial samples.
pub fn tv_stderr_bound(a: &JointDistribution, b: &JointDistribution) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<usize>> = a.counts.keys().chain(b.counts.keys()).collect();
    let var = |d: &JointDistribution, k: &[usize]| {
        let p = d.frequency(k);
        p * (1.0 - p) / d.runs as f64
    };
    0.5 * keys.into_iter().map(|k| (var(a, k) + var(b, k)).sqrt()).sum::<f64>()
}

fn run_block(s: &Scenario, index: usize) -> Result<BlockOutput, CliError> {
    let e = &s.experiments[index];
    let id = e.id();
    let mut renormalizations = 0;
    let artifacts = match e {
        RawExperiment::Trajectory { csco, windows, .. } => {
            let t = build_trajectory(s, csco, *windows)?;
            renormalizations += t.renormalizations();
            let mut records = Vec::new();
            for (n, p) in t.partitions().iter().enumerate() {
                let born = born_probabilities(&evolve(&s.state, &s.hamiltonian, n as f64)?, t.csco())?;
                for (k, label) in t.csco().labels().iter().enumerate() {
                    records.push(record(id, format!("{n}/{label}"), p.interval_measure(k)?, None, Some(born[k])));
                }
            }
            vec![
                Artifact { name: format!("{id}.trajectory.csv"), bytes: render(|w| write_trajectory_dump(w, &t)) },
                stats(format!("{id}.measures.csv"), &records),
            ]
        }
        RawExperiment::BornSampling { csco, window, samples, seed, .. } => {
            let t = build_trajectory(s, csco, window + 1)?;
            renormalizations += t.renormalizations();
            let dist = sample_born(&t, *window, *samples, *seed)?;
            vec![stats(format!("{id}.stats.csv"), &distribution_records(id, &dist))]
        }
        RawExperiment::OffsetAverage { csco, member, alphas, .. } => {
            let top = alphas.iter().fold(0.0f64, |m, &a| m.max(a));
            let t = build_trajectory(s, csco, (top + 1.0).ceil() as u64)?;
            renormalizations += t.renormalizations();
            let mut records = Vec::new();
            for &a in alphas {
                let avg = offset_window_average(&t, a, *member)?;
                let inst = expectation(&evolve(&s.state, &s.hamiltonian, a)?, t.csco(), *member)?;
                records.push(record(id, format!("alpha={a}"), avg, None, Some(inst)));
            }
            vec![stats(format!("{id}.stats.csv"), &records)]
        }
        RawExperiment::SubTau { csco, windows, deltas, pairs, seed, .. } => {
            let t = build_trajectory(s, csco, *windows)?;
            renormalizations += t.renormalizations();
            let mut records = Vec::new();
            for (i, &delta) in deltas.iter().enumerate() {
                let est = sub_tau_correlation(&t, delta, *pairs, derive_seed(*seed, i as u64))?;
                let exact = exact_same_outcome_fraction(&t, delta)?;
                records.push(record(id, format!("delta={delta}"), est.fraction, Some(est.stderr), Some(exact)));
            }
            vec![stats(format!("{id}.stats.csv"), &records)]
        }
        RawExperiment::SequentialMeasurement { runs, seed, log, sequences, .. } => {
            let sys = SystemUnderObservation::new(
                s.state.clone(),
                s.hamiltonian.clone(),
                s.cscos.clone(),
                s.schedulers.clone(),
            )?;
            let mut out = Vec::new();
            let mut dists = Vec::new();
            for (i, seq) in sequences.iter().enumerate() {
                let st = steps(seq);
                let (dist, outcomes) = sequential_experiment(&sys, &st, *runs, derive_seed(*seed, i as u64))?;
                if *log {
                    out.push(Artifact {
                        name: format!("{id}.seq{i}.log.csv"),
                        bytes: render(|w| write_measurement_log(w, &sys, &st, &outcomes)),
                    });
                }
                dists.push(dist);
            }
            out.push(Artifact { name: format!("{id}.joint.csv"), bytes: render(|w| write_joint_summary(w, &sys, &dists)) });
            let mut records = Vec::new();
            for i in 0..dists.len() {
                for j in i + 1..dists.len() {
                    let (a, b) = (dists[i].aligned(), dists[j].aligned());
                    let tv = total_variation(&a, &b);
                    records.push(record(id, format!("tv/{i}-{j}"), tv, Some(tv_stderr_bound(&a, &b)), None));
                }
            }
            if !records.is_empty() {
                out.push(stats(format!("{id}.stats.csv"), &records));
            }
            out
        }
        RawExperiment::Qgrid { k_center, window, scheduler, .. } => {
            let wf = s.grids[index].as_ref().expect("validated");
            let spec = scheduler.to_spec();
            let pp = position_partition(wf, *k_center, *window, &spec)?;
            pp.partition.audit().map_err(|e| CliError::Invariant(format!("qgrid {id}: {e}")))?;
            let labels: Vec<Label> = pp.cells.iter().map(|&c| Label::single(c)).collect();
            vec![
                Artifact { name: format!("{id}.cells.csv"), bytes: render(|w| write_cell_probabilities(w, &pp.probabilities)) },
                Artifact {
                    name: format!("{id}.partition.csv"),
                    bytes: render(|w| write_partition_dump(w, &pp.partition, Some(&labels), true)),
                },
            ]
        }
    };
    Ok(BlockOutput { artifacts, renormalizations })
}

/// Runs every block and returns the artifacts in block order, without
/// touching the filesystem.
pub fn execute(s: &Scenario, opts: &RunOptions) -> Result<(Vec<Artifact>, usize), CliError> {
    let results: Vec<Result<BlockOutput, CliError>> = if opts.parallel_blocks {
        (0..s.experiments.len()).into_par_iter().map(|i| run_block(s, i)).collect()
    } else {
        // Stop at the first failure.
        let mut v = Vec::new();
        for i in 0..s.experiments.len() {
            let r = run_block(s, i);
            let failed = r.is_err();
            v.push(r);
            if failed {
                break;
            }
        }
        v
    };
    let mut artifacts = Vec::new();
    let mut renormalizations = 0;
    for (i, r) in results.into_iter().enumerate() {
        let out = r.map_err(|e| match e {
            CliError::Invariant(m) => CliError::Invariant(format!("experiment {}: {m}", s.experiments[i].id())),
            other => other,
        })?;
        artifacts.extend(out.artifacts);
        renormalizations += out.renormalizations;
    }
    if opts.strict_float && renormalizations > 0 {
        return Err(CliError::Invariant(format!(
            "strict-float: {renormalizations} state renormalization event(s)"
        )));
    }
    Ok((artifacts, renormalizations))
}

pub fn resolve_out_dir(s: &Scenario, opts: &RunOptions) -> PathBuf {
    if let Some(d) = &opts.out_dir {
        return d.clone();
    }
    let base = s.source.parent().unwrap_or(Path::new("."));
    match &s.output_dir {
        Some(d) => base.join(d),
        None => {
            let stem = s.source.file_stem().and_then(|x| x.to_str()).unwrap_or("scenario");
            PathBuf::from("output").join(stem)
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_failure(dir: &Path, err: &CliError) {
    // Best effort: the error itself is what gets reported.
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join(FAILED_MARKER), format!("exit {}\n{err}\n", err.exit_code()));
}

fn write_outputs(s: &Scenario, dir: &Path, artifacts: &[Artifact], renormalizations: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
    }
    for a in artifacts {
        let p = dir.join(&a.name);
        fs::write(&p, &a.bytes).map_err(|e| io_err(&p, e))?;
    }
    let seeds = s.seeds();
    let manifest = Manifest {
        tool: "ergodic",
        version: env!("CARGO_PKG_VERSION"),
        rng: "chacha8; splitmix64 sub-seeds",
        config: s.source.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        config_sha256: sha256_hex(s.config_text.as_bytes()),
        seeds: seeds.iter().map(|(k, v)| ManifestSeed { source: k, seed: *v }).collect(),
        renormalizations,
        artifacts: artifacts
            .iter()
            .map(|a| ManifestArtifact { name: &a.name, sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() })
            .collect(),
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let p = dir.join(MANIFEST);
    fs::write(&p, json).map_err(|e| io_err(&p, e))
}

/// Runs a parsed scenario and writes its artifacts plus `manifest.json`.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunReport, CliError> {
    let dir = resolve_out_dir(s, opts);
    let result = execute(s, opts).and_then(|(artifacts, renorm)| {
        write_outputs(s, &dir, &artifacts, renorm)?;
        Ok(RunReport { out_dir: dir.clone(), artifacts: artifacts.into_iter().map(|a| a.name).collect(), renormalizations: renorm })
    });
    if let Err(e) = &result {
        write_failure(&dir, e);
    }
    result
}

/// Partition of `csco_id` for window `n`, laid out as a trajectory would.
pub fn partition_for_window(s: &Scenario, csco_id: &str, n: u64) -> Result<WindowPartition, CliError> {
    let k = s
        .csco_index(csco_id)
        .ok_or_else(|| CliError::Parse(format!("--csco: unknown CSCO id {csco_id:?}")))?;
    let (csco, sched) = (&s.cscos[k], &s.schedulers[k]);
    let p = if csco.is_conserved_by(&s.hamiltonian) {
        let p0 = ergodic_core::partition::build_partition(&born_probabilities(&s.state, csco)?, 0, sched)?;
        p0.shifted_to(n)?
    } else {
        let psi = evolve(&s.state, &s.hamiltonian, n as f64)?;
        ergodic_core::partition::build_partition(&born_probabilities(&psi, csco)?, n, sched)?
    };
    p.audit()?;
    Ok(p)
}
