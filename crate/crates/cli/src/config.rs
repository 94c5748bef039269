//! Scenario configuration: TOML with complex-number literals.
//!
//! Parsing happens in two passes. `toml` + serde reject syntax errors and
//! unknown keys (with line and column); [`Scenario::from_raw`] then builds the
//! core objects and reports semantic errors by field path. Nothing runs until
//! both passes succeed.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ergodic_core::qgrid::{parse_grid_samples, GridWavefunction};
use ergodic_core::{Csco, Hamiltonian, Label, QuantumState, SchedulerSpec, C64};
use nalgebra::DMatrix;
use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::CliError;

/// A complex literal: a TOML number or a string such as `"0.5-2i"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexLit(pub C64);

/// Parses `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i` (whitespace ignored).
pub fn parse_complex(text: &str) -> Result<C64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("invalid complex literal {text:?}");
    if s.is_empty() {
        return Err(bad());
    }
    let finite = |x: f64| if x.is_finite() { Ok(x) } else { Err(bad()) };
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().map_err(|_| bad()).and_then(finite).map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(j) => (&body[..j], &body[j..]),
        None => ("", body),
    };
    let re = if re.is_empty() { 0.0 } else { re.parse::<f64>().map_err(|_| bad()).and_then(finite)? };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse::<f64>().map_err(|_| bad()).and_then(finite)?,
    };
    Ok(C64::new(re, im))
}

impl<'de> Deserialize<'de> for ComplexLit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ComplexLit;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a complex literal string like \"1-0.5i\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ComplexLit, E> {
                Ok(ComplexLit(C64::new(v as f64, 0.0)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ComplexLit, E> {
                Ok(ComplexLit(C64::new(v as f64, 0.0)))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ComplexLit, E> {
                Ok(ComplexLit(C64::new(v, 0.0)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ComplexLit, E> {
                parse_complex(v).map(ComplexLit).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dimension: usize,
    pub initial_state: Vec<ComplexLit>,
    /// Rows of the matrix; omitted means H = 0.
    pub hamiltonian: Option<Vec<Vec<ComplexLit>>>,
    pub output_dir: Option<String>,
    #[serde(rename = "csco")]
    pub cscos: Vec<RawCsco>,
    #[serde(rename = "experiment", default)]
    pub experiments: Vec<RawExperiment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCsco {
    pub id: String,
    /// One entry per eigenvector; each is normalized on load. Omitted means
    /// the computational basis.
    pub eigenvectors: Option<Vec<Vec<ComplexLit>>>,
    pub labels: Option<Vec<Vec<i64>>>,
    pub eigenvalues: Vec<Vec<f64>>,
    #[serde(default)]
    pub scheduler: RawScheduler,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawScheduler {
    #[default]
    Contiguous,
    PaperTwoOutcome {
        offset: f64,
    },
    SeededRandom {
        max_subintervals: usize,
        seed: u64,
    },
}

impl RawScheduler {
    pub fn to_spec(&self) -> SchedulerSpec {
        match *self {
            RawScheduler::Contiguous => SchedulerSpec::contiguous(),
            RawScheduler::PaperTwoOutcome { offset } => SchedulerSpec::paper_two_outcome(offset),
            RawScheduler::SeededRandom { max_subintervals, seed } => {
                SchedulerSpec::seeded_random(max_subintervals, seed)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    pub csco: String,
    /// Fixed measurement time.
    pub at: Option<f64>,
    /// Uniform measurement time over `(lo, hi]`.
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGaussian {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawExperiment {
    Trajectory {
        id: String,
        csco: String,
        windows: u64,
    },
    BornSampling {
        id: String,
        csco: String,
        #[serde(default)]
        window: u64,
        samples: u64,
        seed: u64,
    },
    OffsetAverage {
        id: String,
        csco: String,
        #[serde(default)]
        member: usize,
        alphas: Vec<f64>,
    },
    SubTau {
        id: String,
        csco: String,
        windows: u64,
        deltas: Vec<f64>,
        pairs: u64,
        seed: u64,
    },
    SequentialMeasurement {
        id: String,
        runs: u64,
        seed: u64,
        #[serde(default = "default_true")]
        log: bool,
        sequences: Vec<Vec<RawStep>>,
    },
    Qgrid {
        id: String,
        planck_step: f64,
        compton_wavelength: f64,
        spacing: f64,
        #[serde(default)]
        cell_origin: f64,
        #[serde(default)]
        k_center: i64,
        #[serde(default)]
        window: u64,
        #[serde(default)]
        scheduler: RawScheduler,
        /// Path to `position re im` rows, relative to the config file.
        samples_file: Option<String>,
        gaussian: Option<RawGaussian>,
    },
}

fn default_true() -> bool {
    true
}

impl RawExperiment {
    pub fn id(&self) -> &str {
        match self {
            RawExperiment::Trajectory { id, .. }
            | RawExperiment::BornSampling { id, .. }
            | RawExperiment::OffsetAverage { id, .. }
            | RawExperiment::SubTau { id, .. }
            | RawExperiment::SequentialMeasurement { id, .. }
            | RawExperiment::Qgrid { id, .. } => id,
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub source: PathBuf,
    pub config_text: String,
    pub state: QuantumState,
    pub hamiltonian: Hamiltonian,
    pub cscos: Vec<Csco>,
    pub schedulers: Vec<SchedulerSpec>,
    pub experiments: Vec<RawExperiment>,
    /// Sampled wavefunctions for qgrid blocks, by experiment index.
    pub grids: Vec<Option<GridWavefunction>>,
    pub output_dir: Option<PathBuf>,
}

fn field_err(path: impl fmt::Display, msg: impl fmt::Display) -> CliError {
    CliError::Parse(format!("{path}: {msg}"))
}

fn complex_vec(v: &[ComplexLit]) -> Vec<C64> {
    v.iter().map(|c| c.0).collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| CliError::Parse(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        Self::from_raw(raw, text, path)
    }

    pub fn from_raw(raw: RawConfig, text: &str, path: &Path) -> Result<Self, CliError> {
        let d = raw.dimension;
        if d < 1 {
            return Err(field_err("dimension", "must be at least 1"));
        }
        if raw.initial_state.len() != d {
            return Err(field_err(
                "initial_state",
                format!("expected {d} amplitudes, found {}", raw.initial_state.len()),
            ));
        }
        let state = QuantumState::from_slice(&complex_vec(&raw.initial_state))
            .map_err(|e| field_err("initial_state", e))?;
        let hamiltonian = match &raw.hamiltonian {
            None => Hamiltonian::zero(d),
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(field_err("hamiltonian", format!("expected a {d}x{d} matrix")));
                }
                let m = DMatrix::from_fn(d, d, |i, j| rows[i][j].0);
                Hamiltonian::new(m).map_err(|e| field_err("hamiltonian", e))?
            }
        };

        if raw.cscos.is_empty() {
            return Err(field_err("csco", "at least one [[csco]] block is required"));
        }
        let mut cscos = Vec::with_capacity(raw.cscos.len());
        let mut schedulers = Vec::with_capacity(raw.cscos.len());
        let mut ids = BTreeSet::new();
        for (i, c) in raw.cscos.iter().enumerate() {
            let at = format!("csco[{i}] ({})", c.id);
            if !ids.insert(c.id.as_str()) {
                return Err(field_err(format!("{at}.id"), "duplicate CSCO id"));
            }
            let basis = match &c.eigenvectors {
                None => DMatrix::identity(d, d),
                Some(vecs) => {
                    if vecs.len() != d || vecs.iter().any(|v| v.len() != d) {
                        return Err(field_err(format!("{at}.eigenvectors"), format!("expected {d} vectors of length {d}")));
                    }
                    let mut m = DMatrix::from_fn(d, d, |r, col| vecs[col][r].0);
                    for (k, mut col) in m.column_iter_mut().enumerate() {
                        let n = col.norm();
                        if n == 0.0 {
                            return Err(field_err(format!("{at}.eigenvectors[{k}]"), "zero vector"));
                        }
                        col.unscale_mut(n);
                    }
                    m
                }
            };
            let labels = match &c.labels {
                None => (0..d as i64).map(Label::single).collect(),
                Some(l) => {
                    if l.len() != d {
                        return Err(field_err(format!("{at}.labels"), format!("expected {d} labels")));
                    }
                    l.iter().cloned().map(Label).collect()
                }
            };
            if c.eigenvalues.len() != d {
                return Err(field_err(format!("{at}.eigenvalues"), format!("expected {d} tuples")));
            }
            let csco = Csco::new(c.id.clone(), basis, labels, c.eigenvalues.clone())
                .map_err(|e| field_err(&at, e))?;
            let spec = c.scheduler.to_spec();
            spec.validate().map_err(|e| field_err(format!("{at}.scheduler"), e))?;
            if matches!(c.scheduler, RawScheduler::PaperTwoOutcome { .. }) && d != 2 {
                return Err(field_err(format!("{at}.scheduler"), "paper-two-outcome needs exactly two labels"));
            }
            cscos.push(csco);
            schedulers.push(spec);
        }

        let csco_of = |at: &str, id: &str| -> Result<usize, CliError> {
            cscos
                .iter()
                .position(|c| c.id() == id)
                .ok_or_else(|| field_err(format!("{at}.csco"), format!("unknown CSCO id {id:?}")))
        };
        let mut exp_ids = BTreeSet::new();
        let mut grids = Vec::with_capacity(raw.experiments.len());
        let base = path.parent().unwrap_or(Path::new("."));
        for (i, e) in raw.experiments.iter().enumerate() {
            let at = format!("experiment[{i}] ({})", e.id());
            let id_ok = !e.id().is_empty()
                && e.id().chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !id_ok {
                return Err(field_err(format!("{at}.id"), "use letters, digits, '-' or '_'"));
            }
            if !exp_ids.insert(e.id()) {
                return Err(field_err(format!("{at}.id"), "duplicate experiment id"));
            }
            let mut grid = None;
            match e {
                RawExperiment::Trajectory { csco, windows, .. } => {
                    csco_of(&at, csco)?;
                    check_windows(&at, *windows)?;
                }
                RawExperiment::BornSampling { csco, window, samples, .. } => {
                    csco_of(&at, csco)?;
                    check_windows(&at, window.saturating_add(1))?;
                    if *samples == 0 {
                        return Err(field_err(format!("{at}.samples"), "must be at least 1"));
                    }
                }
                RawExperiment::OffsetAverage { csco, member, alphas, .. } => {
                    let k = csco_of(&at, csco)?;
                    cscos[k].check_member(*member).map_err(|e| field_err(format!("{at}.member"), e))?;
                    if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                        return Err(field_err(format!("{at}.alphas"), "need one or more finite alphas >= 0"));
                    }
                    let top = alphas.iter().fold(0.0f64, |m, &a| m.max(a));
                    check_windows(&at, (top + 1.0).ceil() as u64)?;
                }
                RawExperiment::SubTau { csco, windows, deltas, pairs, .. } => {
                    csco_of(&at, csco)?;
                    check_windows(&at, *windows)?;
                    if deltas.is_empty() || deltas.iter().any(|x| !(*x >= 0.0 && x.ceil() < *windows as f64)) {
                        return Err(field_err(format!("{at}.deltas"), format!("each delta must satisfy 0 <= delta <= {}", windows - 1)));
                    }
                    if *pairs == 0 {
                        return Err(field_err(format!("{at}.pairs"), "must be at least 1"));
                    }
                }
                RawExperiment::SequentialMeasurement { runs, sequences, .. } => {
                    if *runs == 0 {
                        return Err(field_err(format!("{at}.runs"), "must be at least 1"));
                    }
                    if sequences.is_empty() {
                        return Err(field_err(format!("{at}.sequences"), "need at least one sequence"));
                    }
                    for (s, seq) in sequences.iter().enumerate() {
                        if seq.is_empty() {
                            return Err(field_err(format!("{at}.sequences[{s}]"), "empty sequence"));
                        }
                        let mut prev = 0.0f64;
                        for (j, step) in seq.iter().enumerate() {
                            let sat = format!("{at}.sequences[{s}][{j}]");
                            csco_of(&sat, &step.csco)?;
                            let (lo, hi) = match (step.at, step.range) {
                                (Some(u), None) => (u, u),
                                (None, Some([lo, hi])) if lo < hi => (lo, hi),
                                (None, Some(_)) => return Err(field_err(format!("{sat}.range"), "need lo < hi")),
                                _ => return Err(field_err(&sat, "give exactly one of `at` or `range`")),
                            };
                            let ok = if step.at.is_some() { lo > prev } else { lo >= prev };
                            if !(ok && hi.is_finite()) {
                                return Err(field_err(&sat, "measurement times must be positive and increasing"));
                            }
                            prev = hi;
                        }
                    }
                }
                RawExperiment::Qgrid {
                    planck_step,
                    compton_wavelength,
                    spacing,
                    cell_origin,
                    k_center,
                    scheduler,
                    samples_file,
                    gaussian,
                    ..
                } => {
                    scheduler.to_spec().validate().map_err(|e| field_err(format!("{at}.scheduler"), e))?;
                    if matches!(scheduler, RawScheduler::PaperTwoOutcome { .. }) {
                        return Err(field_err(format!("{at}.scheduler"), "paper-two-outcome needs exactly two labels"));
                    }
                    let wf = match (samples_file, gaussian) {
                        (Some(file), None) => {
                            let p = base.join(file);
                            let text = std::fs::read_to_string(&p)
                                .map_err(|e| CliError::Io(format!("{at}.samples_file: {}: {e}", p.display())))?;
                            let (origin, h, samples) =
                                parse_grid_samples(&text).map_err(|e| field_err(format!("{at}.samples_file"), e))?;
                            if (h - spacing).abs() > 1e-6 * spacing {
                                return Err(field_err(format!("{at}.spacing"), format!("file spacing is {h}")));
                            }
                            GridWavefunction::new(origin, h, samples, *planck_step, *compton_wavelength, *cell_origin)
                        }
                        (None, Some(g)) => {
                            if !(g.width > 0.0 && g.lo < g.hi) {
                                return Err(field_err(format!("{at}.gaussian"), "need width > 0 and lo < hi"));
                            }
                            let n = ((g.hi - g.lo) / spacing).round() as usize + 1;
                            let g = g.clone();
                            let norm = (2.0 * std::f64::consts::PI * g.width * g.width).powf(-0.25);
                            let f = move |q: f64| {
                                let x = q - g.center;
                                C64::from_polar(norm * (-x * x / (4.0 * g.width * g.width)).exp(), g.momentum * q)
                            };
                            GridWavefunction::from_fn(f, g.lo, *spacing, n, *planck_step, *compton_wavelength, *cell_origin)
                        }
                        _ => return Err(field_err(&at, "give exactly one of `samples_file` or `gaussian`")),
                    }
                    .map_err(|e| field_err(&at, e))?;
                    wf.window_mass(*k_center).map_err(|e| field_err(format!("{at}.k_center"), e))?;
                    grid = Some(wf);
                }
            }
            grids.push(grid);
        }

        Ok(Scenario {
            source: path.to_path_buf(),
            config_text: text.to_string(),
            state,
            hamiltonian,
            cscos,
            schedulers,
            experiments: raw.experiments,
            grids,
            output_dir: raw.output_dir.map(PathBuf::from),
        })
    }

    pub fn csco_index(&self, id: &str) -> Option<usize> {
        self.cscos.iter().position(|c| c.id() == id)
    }

    /// Every seed in the scenario, as `(where, seed)`.
    pub fn seeds(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for (c, s) in self.cscos.iter().zip(&self.schedulers) {
            if matches!(s.kind, ergodic_core::SchedulerKind::SeededRandom) {
                out.push((format!("csco.{}.scheduler", c.id()), s.seed));
            }
        }
        for e in &self.experiments {
            match e {
                RawExperiment::BornSampling { id, seed, .. }
                | RawExperiment::SubTau { id, seed, .. }
                | RawExperiment::SequentialMeasurement { id, seed, .. } => {
                    out.push((format!("experiment.{id}"), *seed));
                }
                RawExperiment::Qgrid { id, scheduler: RawScheduler::SeededRandom { seed, .. }, .. } => {
                    out.push((format!("experiment.{id}.scheduler"), *seed));
                }
                _ => {}
            }
        }
        out
    }
}

fn check_windows(at: &str, windows: u64) -> Result<(), CliError> {
    if windows == 0 || windows > ergodic_core::microstate::DEFAULT_MAX_WINDOWS {
        return Err(field_err(
            format!("{at}.windows"),
            format!("must lie in 1..={}", ergodic_core::microstate::DEFAULT_MAX_WINDOWS),
        ));
    }
    Ok(())
}
