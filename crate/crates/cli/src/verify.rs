//! Invariant batteries for every module, with worst-case deviations.

use std::fmt::Write as _;
use std::io::{self, Write};

use ergodic_core::ergodic::{exact_same_outcome_fraction, sub_tau_correlation, window_average_step, window_average_value};
use ergodic_core::hilbert::{born_probabilities, evolve, expectation};
use ergodic_core::measurement::SystemUnderObservation;
use ergodic_core::microstate::trajectory;
use ergodic_core::partition::build_partition;
use ergodic_core::qgrid::GridWavefunction;
use ergodic_core::rng::stream;
use ergodic_core::{Csco, Hamiltonian, Label, QuantumState, SchedulerSpec, WindowPartition, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SUITE_SEED: u64 = 0x5eed_e4c0;

/// Corruption applied to one partition of the sweep, to exercise the checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Coverage,
    Disjointness,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub cases: u64,
    pub worst: f64,
    /// Inputs of the first failing case.
    pub failure: Option<String>,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, tolerance, cases: 0, worst: 0.0, failure: None }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    fn observe(&mut self, deviation: f64, inputs: impl FnOnce() -> String) {
        self.cases += 1;
        if deviation.is_nan() || deviation > self.worst {
            self.worst = deviation;
        }
        if (deviation.is_nan() || deviation > self.tolerance) && self.failure.is_none() {
            self.failure = Some(inputs());
        }
    }

    fn error(&mut self, inputs: String) {
        self.cases += 1;
        self.worst = f64::NAN;
        self.failure.get_or_insert(inputs);
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<C64> {
    (0..d).map(|_| C64::new(gauss(rng), gauss(rng))).collect()
}

fn random_hamiltonian(rng: &mut ChaCha8Rng, d: usize) -> Hamiltonian {
    let a = DMatrix::from_fn(d, d, |_, _| C64::new(gauss(rng), gauss(rng)));
    Hamiltonian::new((&a + a.adjoint()) * C64::new(0.5, 0.0)).expect("hermitian by construction")
}

fn random_csco(rng: &mut ChaCha8Rng, d: usize) -> Csco {
    let a = DMatrix::from_fn(d, d, |_, _| C64::new(gauss(rng), gauss(rng)));
    let labels = (0..d as i64).map(Label::single).collect();
    let eigenvalues = (0..d).map(|_| vec![gauss(rng)]).collect();
    Csco::new("r", a.qr().q(), labels, eigenvalues).expect("unitary by construction")
}

fn random_probabilities(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..d).map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen() }).collect();
    if p.iter().all(|&x| x == 0.0) {
        p[0] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

fn scheduler_for(case: u64, d: usize) -> SchedulerSpec {
    match case % 3 {
        0 => SchedulerSpec::contiguous(),
        1 if d == 2 => SchedulerSpec::paper_two_outcome(0.25),
        _ => SchedulerSpec::seeded_random(4, case),
    }
}

fn hilbert_checks() -> Vec<CheckResult> {
    let mut unitarity = CheckResult::new("hilbert.unitarity", 1e-9);
    let mut composition = CheckResult::new("hilbert.composition", 1e-8);
    let mut completeness = CheckResult::new("hilbert.born-completeness", 1e-10);
    let mut sandwich = CheckResult::new("hilbert.expectation-sandwich", 1e-10);
    for case in 0..200u64 {
        let mut rng = stream(SUITE_SEED, case);
        let d = rng.gen_range(2..=12);
        let amps = random_vector(&mut rng, d);
        let psi = QuantumState::from_slice(&amps).expect("nonzero");
        let h = random_hamiltonian(&mut rng, d);
        let csco = random_csco(&mut rng, d);
        let (a, b) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let inputs = || format!("suite seed {SUITE_SEED:#x}, case {case}, d = {d}, du = ({a}, {b})");

        let raw = h.propagator(a) * psi.amplitudes();
        unitarity.observe((raw.norm() - 1.0).abs(), inputs);
        match (evolve(&psi, &h, a).and_then(|x| evolve(&x, &h, b)), evolve(&psi, &h, a + b)) {
            (Ok(x), Ok(y)) => composition.observe((x.amplitudes() - y.amplitudes()).camax(), inputs),
            (Err(e), _) | (_, Err(e)) => composition.error(format!("{}: {e}", inputs())),
        }
        let p = born_probabilities(&psi, &csco).expect("dimensions match");
        completeness.observe((p.iter().sum::<f64>() - 1.0).abs(), inputs);
        let o = csco.observable(0).expect("member 0");
        let direct = psi.amplitudes().dotc(&(&o * psi.amplitudes())).re;
        sandwich.observe((expectation(&psi, &csco, 0).expect("member 0") - direct).abs(), inputs);
    }
    vec![unitarity, composition, completeness, sandwich]
}

fn corrupt(p: &WindowPartition, fault: Fault) -> WindowPartition {
    let n = p.window_index() as f64;
    match fault {
        Fault::Coverage => {
            let mut b = p.boundaries().to_vec();
            let last = b.len() - 1;
            b[last] = b[last - 1] + 0.5 * (b[last] - b[last - 1]);
            WindowPartition::from_raw_parts(p.window_index(), p.probabilities().to_vec(), b, p.owners().to_vec())
        }
        Fault::Disjointness => WindowPartition::from_raw_parts(
            p.window_index(),
            vec![0.5, 0.5],
            vec![n, n + 0.6, n + 0.4, n + 1.0],
            vec![0, 1, 0],
        ),
    }
}

fn partition_checks(fault: Option<Fault>) -> Vec<CheckResult> {
    let mut disjoint = CheckResult::new("partition.disjointness", 0.0);
    let mut coverage = CheckResult::new("partition.coverage", 1e-9);
    let mut measure = CheckResult::new("partition.measure", 1e-9);
    let mut completeness = CheckResult::new("step.completeness", 0.0);
    let mut idempotency = CheckResult::new("step.idempotency", 0.0);
    for case in 0..1000u64 {
        let mut rng = stream(SUITE_SEED ^ 1, case);
        let d = rng.gen_range(2..=16);
        let probs = random_probabilities(&mut rng, d);
        let window = rng.gen_range(0..10_000u64);
        let sched = scheduler_for(case, d);
        let inputs = || format!("case {case}, window {window}, scheduler {:?}, probabilities {probs:?}", sched);
        let mut p = match build_partition(&probs, window, &sched) {
            Ok(p) => p,
            Err(e) => {
                measure.error(format!("{}: {e}", inputs()));
                continue;
            }
        };
        if case == 17 {
            if let Some(f) = fault {
                p = corrupt(&p, f);
            }
        }
        let b = p.boundaries();
        let overlap = b
            .windows(2)
            .map(|w| if w[1] > w[0] { 0.0 } else { w[0] - w[1] + f64::MIN_POSITIVE })
            .fold(0.0, f64::max);
        let shape = if p.owners().len() + 1 == b.len() { 0.0 } else { 1.0 };
        disjoint.observe(overlap.max(shape), inputs);
        coverage.observe((b[0] - p.start()).abs() + (b[b.len() - 1] - p.end()).abs(), inputs);
        let mut len = vec![0.0; p.num_labels()];
        for (w, &k) in b.windows(2).zip(p.owners()) {
            len[k] += (w[1] - w[0]).max(0.0);
        }
        let worst = len.iter().zip(p.probabilities()).map(|(l, q)| (l - q * p.span_len()).abs()).fold(0.0, f64::max);
        measure.observe(worst, inputs);

        if case % 5 == 0 {
            let mut bad_sum = 0.0;
            let mut bad_idem = 0.0;
            for _ in 0..200 {
                let u = p.start() + (1.0 - rng.gen::<f64>()) * p.span_len();
                let s: Vec<u8> = (0..d).map(|k| p.step_function(k, u).unwrap_or(2)).collect();
                if s.iter().map(|&x| x as u32).sum::<u32>() != 1 {
                    bad_sum += 1.0;
                }
                for j in 0..d {
                    for k in 0..d {
                        let want = if j == k { s[j] } else { 0 };
                        if s[j] * s[k] != want {
                            bad_idem += 1.0;
                        }
                    }
                }
            }
            completeness.observe(bad_sum, inputs);
            idempotency.observe(bad_idem, inputs);
        }
    }
    vec![disjoint, coverage, measure, completeness, idempotency]
}

fn ergodic_checks() -> Vec<CheckResult> {
    let mut born = CheckResult::new("ergodic.born-exact", 1e-9);
    let mut value = CheckResult::new("ergodic.value-exact", 1e-9);
    let mut zero = CheckResult::new("ergodic.sub-tau-delta-zero", 0.0);
    for case in 0..300u64 {
        let mut rng = stream(SUITE_SEED ^ 2, case);
        let d = rng.gen_range(2..=8);
        let psi = QuantumState::from_slice(&random_vector(&mut rng, d)).expect("nonzero");
        let h = random_hamiltonian(&mut rng, d);
        let csco = random_csco(&mut rng, d);
        let n = rng.gen_range(0..50u64);
        let sched = scheduler_for(case, d);
        let inputs = || format!("case {case}, d = {d}, window {n}, scheduler {sched:?}");
        let result = (|| -> ergodic_core::Result<(f64, f64)> {
            let psi_n = evolve(&psi, &h, n as f64)?;
            let probs = born_probabilities(&psi_n, &csco)?;
            let p = build_partition(&probs, n, &sched)?;
            let mut worst = 0.0f64;
            for (k, q) in probs.iter().enumerate() {
                worst = worst.max((window_average_step(&p, k)? - q).abs());
            }
            Ok((worst, (window_average_value(&p, &csco, 0)? - expectation(&psi_n, &csco, 0)?).abs()))
        })();
        match result {
            Ok((b, v)) => {
                born.observe(b, inputs);
                value.observe(v, inputs);
            }
            Err(e) => born.error(format!("{}: {e}", inputs())),
        }
        if case % 30 == 0 {
            let r = trajectory(&psi, &h, &csco, &sched, 3).and_then(|t| {
                let exact = exact_same_outcome_fraction(&t, 0.0)?;
                let mc = sub_tau_correlation(&t, 0.0, 1000, case)?.fraction;
                Ok((1.0 - exact).abs().max((1.0 - mc).abs()))
            });
            match r {
                Ok(dev) => zero.observe(dev, inputs),
                Err(e) => zero.error(format!("{}: {e}", inputs())),
            }
        }
    }
    vec![born, value, zero]
}

fn periodicity_check() -> CheckResult {
    let mut check = CheckResult::new("microstate.conserved-periodicity", 0.0);
    for case in 0..10u64 {
        let mut rng = stream(SUITE_SEED ^ 3, case);
        let d = rng.gen_range(2..=6);
        let energies: Vec<C64> = (0..d).map(|_| C64::new(gauss(&mut rng), 0.0)).collect();
        let h = Hamiltonian::new(DMatrix::from_diagonal(&DVector::from_vec(energies))).expect("diagonal");
        let csco = Csco::computational("z", (0..d).map(|k| vec![k as f64]).collect()).expect("valid");
        let psi = QuantumState::from_slice(&random_vector(&mut rng, d)).expect("nonzero");
        let sched = SchedulerSpec::seeded_random(3, case);
        let inputs = || format!("case {case}, d = {d}, scheduler {sched:?}");
        match trajectory(&psi, &h, &csco, &sched, 1001) {
            Ok(t) => {
                let p0 = &t.partitions()[0];
                for (n, p) in t.partitions().iter().enumerate() {
                    let mut dev = if p.owners() == p0.owners() { 0.0 } else { 1.0 };
                    for (a, b) in p.boundaries().iter().zip(p0.boundaries()) {
                        dev = f64::max(dev, (a - (b + n as f64)).abs());
                    }
                    check.observe(dev, || format!("{}, window {n}", inputs()));
                }
            }
            Err(e) => check.error(format!("{}: {e}", inputs())),
        }
    }
    check
}

fn measurement_check() -> CheckResult {
    let mut check = CheckResult::new("measurement.collapse-idempotency", 1e-12);
    for case in 0..200u64 {
        let mut rng = stream(SUITE_SEED ^ 4, case);
        let d = rng.gen_range(2..=8);
        let psi = QuantumState::from_slice(&random_vector(&mut rng, d)).expect("nonzero");
        let csco = random_csco(&mut rng, d);
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = u1 + (1.0 - rng.gen::<f64>()) * 3.0;
        let inputs = || format!("case {case}, d = {d}, times ({u1}, {u2})");
        let r = SystemUnderObservation::new(psi, Hamiltonian::zero(d), vec![csco], vec![SchedulerSpec::seeded_random(3, case)])
            .and_then(|sys| {
                let (a, sys) = sys.measure("r", u1)?;
                let (b, _) = sys.measure("r", u2)?;
                let same = if a.outcome_index == b.outcome_index { 0.0 } else { 1.0 };
                Ok(f64::max(same, (a.post_state.amplitudes() - b.post_state.amplitudes()).camax()))
            });
        match r {
            Ok(dev) => check.observe(dev, inputs),
            Err(e) => check.error(format!("{}: {e}", inputs())),
        }
    }
    check
}

fn qgrid_checks() -> Vec<CheckResult> {
    let mut norm = CheckResult::new("qgrid.normalization", 1e-8);
    let mut refine = CheckResult::new("qgrid.refinement", 1e-8);
    for case in 0..8u64 {
        let mut rng = stream(SUITE_SEED ^ 5, case);
        let lambda = [3.0, 5.0, 7.0][case as usize % 3];
        let center = rng.gen_range(-0.5..0.5);
        let width = rng.gen_range(0.3..0.6) * lambda;
        let k = rng.gen_range(-2..=2i64);
        let inputs = || format!("case {case}, lambda {lambda}, centre {center}, width {width}, k {k}");
        let probs = |per_cell: usize| -> ergodic_core::Result<Vec<f64>> {
            let h = 1.0 / per_cell as f64;
            let lo = -(lambda + 8.0);
            let n = (2.0 * (lambda + 8.0) / h).round() as usize + 1;
            let f = |q: f64| {
                let x = q - center;
                C64::from_polar((-x * x / (4.0 * width * width)).exp(), 0.7 * q)
            };
            let wf = GridWavefunction::from_fn(f, lo, h, n, 1.0, lambda, 0.0)?;
            Ok(wf.cell_probabilities(k)?.iter().map(|c| c.probability).collect())
        };
        match (probs(32), probs(64)) {
            (Ok(a), Ok(b)) => {
                norm.observe((a.iter().sum::<f64>() - 1.0).abs(), inputs);
                refine.observe(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max), inputs);
            }
            (Err(e), _) | (_, Err(e)) => norm.error(format!("{}: {e}", inputs())),
        }
    }
    vec![norm, refine]
}

/// Runs every battery. `fault` corrupts one partition of the sweep.
pub fn run_suite(fault: Option<Fault>) -> Vec<CheckResult> {
    let mut out = hilbert_checks();
    out.extend(partition_checks(fault));
    out.extend(ergodic_checks());
    out.push(periodicity_check());
    out.push(measurement_check());
    out.extend(qgrid_checks());
    out
}

pub fn format_report(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{status}  {:<34} cases={:<6} worst={:<10.3e} tol={:.0e}",
            r.name, r.cases, r.worst, r.tolerance
        );
        if let Some(f) = &r.failure {
            let _ = writeln!(s, "      reproduce: {f}");
        }
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(s, "{} checks, {failed} failed", results.len());
    s
}

/// Prints the report and returns the process exit code.
pub fn verify<W: Write>(out: &mut W, fault: Option<Fault>) -> io::Result<i32> {
    let results = run_suite(fault);
    out.write_all(format_report(&results).as_bytes())?;
    Ok(if results.iter().all(CheckResult::passed) { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let results = run_suite(None);
        let report = format_report(&results);
        assert!(results.iter().all(CheckResult::passed), "{report}");
        for r in &results {
            if r.name.starts_with("ergodic.") {
                assert!(r.worst <= 1e-9, "{report}");
            }
        }
    }

    #[test]
    fn injected_coverage_fault_is_flagged() {
        let results = run_suite(Some(Fault::Coverage));
        let failed: Vec<_> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
        assert!(failed.contains(&"partition.coverage"), "{failed:?}");
        let report = format_report(&results);
        assert!(report.contains("reproduce: case 17"), "{report}");
    }

    #[test]
    fn injected_overlap_is_flagged() {
        let results = run_suite(Some(Fault::Disjointness));
        assert!(results.iter().any(|r| r.name == "partition.disjointness" && !r.passed()));
    }
}
