//! Planck-cell position probabilities.
//!
//! Positions are grouped into cells `[q_k, q_k + l_P)` with `q_k = q_0 + k l_P`.
//! For a window centred on cell `k` (width `lambda`, the Compton wavelength)
//! the wavefunction is renormalized to unit mass on the window, and each cell
//! inside it gets `Pr(q_j)`, its share of that mass. The resulting probability
//! vector drives an ordinary time partition with cell indices as labels.
//!
//! `lambda / l_P` must be an odd integer so the window is exactly the centre
//! cell plus the same number of whole cells on either side. Cell masses use
//! the composite trapezoid rule on the sample grid refined by one Richardson
//! step, which needs an even number of samples per cell.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::partition::{build_partition, SchedulerSpec, WindowPartition};

/// Coarsest allowed sample spacing, as a fraction of the Planck step.
pub const MIN_SAMPLES_PER_CELL: usize = 16;
/// Window masses below this are rejected.
pub const MIN_WINDOW_MASS: f64 = 1e-300;

const ALIGN_TOLERANCE: f64 = 1e-9;

/// Wavefunction sampled on a uniform grid `origin + i * spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    origin: f64,
    spacing: f64,
    samples: Vec<C64>,
    planck_step: f64,
    compton_wavelength: f64,
    cell_origin: f64,
    samples_per_cell: usize,
    cells_per_window: usize,
    /// Grid index of `cell_origin`.
    cell_origin_index: i64,
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= ALIGN_TOLERANCE * x.abs().max(1.0)).then_some(r as i64)
}

impl GridWavefunction {
    pub fn new(
        origin: f64,
        spacing: f64,
        samples: Vec<C64>,
        planck_step: f64,
        compton_wavelength: f64,
        cell_origin: f64,
    ) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) || !origin.is_finite() || !cell_origin.is_finite() {
            return Err(Error::InvalidGrid(format!("bad grid origin/spacing ({origin}, {spacing})")));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidGrid("need at least two samples".into()));
        }
        if !(planck_step > 0.0) || !(compton_wavelength >= planck_step) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < planck_step <= compton_wavelength (got {planck_step}, {compton_wavelength})"
            )));
        }
        let per_cell = near_integer(planck_step / spacing)
            .filter(|&r| r > 0)
            .ok_or_else(|| Error::InvalidGrid("planck_step is not a whole number of grid spacings".into()))?
            as usize;
        if per_cell < MIN_SAMPLES_PER_CELL {
            return Err(Error::InvalidGrid(format!(
                "spacing {spacing} exceeds planck_step / {MIN_SAMPLES_PER_CELL}"
            )));
        }
        if !per_cell.is_multiple_of(2) {
            return Err(Error::InvalidGrid("planck_step / spacing must be even".into()));
        }
        let cells = near_integer(compton_wavelength / planck_step)
            .filter(|&m| m > 0 && m % 2 == 1)
            .ok_or_else(|| {
                Error::InvalidGrid("compton_wavelength / planck_step must be an odd integer".into())
            })? as usize;
        let cell_origin_index = near_integer((cell_origin - origin) / spacing)
            .ok_or_else(|| Error::InvalidGrid("cell origin does not fall on a grid node".into()))?;
        Ok(Self {
            origin,
            spacing,
            samples,
            planck_step,
            compton_wavelength,
            cell_origin,
            samples_per_cell: per_cell,
            cells_per_window: cells,
            cell_origin_index,
        })
    }

    /// Samples `f` at `n` grid nodes starting from `origin`.
    pub fn from_fn<F: Fn(f64) -> C64>(
        f: F,
        origin: f64,
        spacing: f64,
        n: usize,
        planck_step: f64,
        compton_wavelength: f64,
        cell_origin: f64,
    ) -> Result<Self> {
        let samples = (0..n).map(|i| f(origin + i as f64 * spacing)).collect();
        Self::new(origin, spacing, samples, planck_step, compton_wavelength, cell_origin)
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn planck_step(&self) -> f64 {
        self.planck_step
    }

    pub fn compton_wavelength(&self) -> f64 {
        self.compton_wavelength
    }

    pub fn cells_per_window(&self) -> usize {
        self.cells_per_window
    }

    /// Left edge `q_k` of cell `k`.
    pub fn cell_lo(&self, k: i64) -> f64 {
        self.cell_origin + k as f64 * self.planck_step
    }

    /// Cells `k - (m-1)/2 ..= k + (m-1)/2` of the window centred on cell `k`.
    pub fn window_cells(&self, k_center: i64) -> std::ops::RangeInclusive<i64> {
        let half = (self.cells_per_window as i64 - 1) / 2;
        k_center - half..=k_center + half
    }

    fn node_range(&self, k: i64) -> Result<(usize, usize)> {
        let first = self.cell_origin_index + k * self.samples_per_cell as i64;
        let last = first + self.samples_per_cell as i64;
        if first < 0 || last > self.samples.len() as i64 - 1 {
            return Err(Error::InvalidGrid(format!("cell {k} extends beyond the sampled grid")));
        }
        Ok((first as usize, last as usize))
    }

    /// `integral |psi|^2` over cell `k`.
    pub fn cell_mass(&self, k: i64) -> Result<f64> {
        let (a, b) = self.node_range(k)?;
        let density: Vec<f64> = self.samples[a..=b].iter().map(|z| z.norm_sqr()).collect();
        Ok(richardson_trapezoid(&density, self.spacing))
    }

    /// `integral |psi|^2` over the window centred on cell `k`.
    pub fn window_mass(&self, k_center: i64) -> Result<f64> {
        self.window_cells(k_center).map(|k| self.cell_mass(k)).sum()
    }

    /// This wavefunction scaled to unit mass on the window centred on `k`.
    pub fn window_renormalize(&self, k_center: i64) -> Result<GridWavefunction> {
        let mass = self.window_mass(k_center)?;
        if !(mass >= MIN_WINDOW_MASS) {
            return Err(Error::InvalidGrid(format!("window mass {mass:e} too small to renormalize")));
        }
        let scale = C64::new(mass.sqrt().recip(), 0.0);
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z *= scale);
        Ok(out)
    }

    /// `Pr(q_cell)` under the wavefunction renormalized on `k_center`'s window.
    pub fn planck_cell_probability(&self, k_center: i64, cell: i64) -> Result<f64> {
        if !self.window_cells(k_center).contains(&cell) {
            return Err(Error::InvalidArgument(format!("cell {cell} outside window centred on {k_center}")));
        }
        let mass = self.window_mass(k_center)?;
        if !(mass >= MIN_WINDOW_MASS) {
            return Err(Error::InvalidGrid(format!("window mass {mass:e} too small to renormalize")));
        }
        Ok(self.cell_mass(cell)? / mass)
    }

    /// `Pr` for every cell of the window centred on `k_center`.
    pub fn cell_probabilities(&self, k_center: i64) -> Result<Vec<CellProbability>> {
        let masses = self
            .window_cells(k_center)
            .map(|k| Ok((k, self.cell_mass(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = masses.iter().map(|(_, m)| m).sum();
        if !(total >= MIN_WINDOW_MASS) {
            return Err(Error::InvalidGrid(format!("window mass {total:e} too small to renormalize")));
        }
        Ok(masses
            .into_iter()
            .map(|(cell, m)| CellProbability {
                cell,
                q_lo: self.cell_lo(cell),
                q_hi: self.cell_lo(cell + 1),
                probability: m / total,
            })
            .collect())
    }
}

/// Trapezoid on step `h`, refined with the step-`2h` estimate.
fn richardson_trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    debug_assert!(n.is_multiple_of(2));
    let fine = h * (f[1..n].iter().sum::<f64>() + 0.5 * (f[0] + f[n]));
    let coarse = 2.0 * h * (f[2..n].iter().step_by(2).sum::<f64>() + 0.5 * (f[0] + f[n]));
    (4.0 * fine - coarse) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbability {
    pub cell: i64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub probability: f64,
}

/// A time partition whose labels are Planck cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionPartition {
    /// Cell index for each partition label.
    pub cells: Vec<i64>,
    pub probabilities: Vec<CellProbability>,
    pub partition: WindowPartition,
}

pub fn position_partition(
    wf: &GridWavefunction,
    k_center: i64,
    window_index: u64,
    scheduler: &SchedulerSpec,
) -> Result<PositionPartition> {
    let probabilities = wf.cell_probabilities(k_center)?;
    let p: Vec<f64> = probabilities.iter().map(|c| c.probability).collect();
    let partition = build_partition(&p, window_index, scheduler)?;
    Ok(PositionPartition { cells: probabilities.iter().map(|c| c.cell).collect(), probabilities, partition })
}

/// Writes `cell_index,q_lo,q_hi,probability` rows.
pub fn write_cell_probabilities<W: Write>(out: &mut W, cells: &[CellProbability]) -> io::Result<()> {
    writeln!(out, "cell_index,q_lo,q_hi,probability")?;
    for c in cells {
        writeln!(out, "{},{},{},{}", c.cell, c.q_lo, c.q_hi, c.probability)?;
    }
    Ok(())
}

/// Parses `position re im` rows (whitespace or comma separated, `#` comments)
/// and checks that positions are uniformly spaced. Returns
/// `(origin, spacing, samples)`.
pub fn parse_grid_samples(text: &str) -> Result<(f64, f64, Vec<C64>)> {
    let mut positions = Vec::new();
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 3 {
            return Err(Error::InvalidGrid(format!("line {}: expected 3 columns, found {}", lineno + 1, fields.len())));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidGrid(format!("line {}: {e}", lineno + 1)))?;
        positions.push(nums[0]);
        samples.push(C64::new(nums[1], nums[2]));
    }
    if positions.len() < 2 {
        return Err(Error::InvalidGrid("need at least two samples".into()));
    }
    let origin = positions[0];
    let spacing = (positions[positions.len() - 1] - origin) / (positions.len() - 1) as f64;
    if !(spacing > 0.0) {
        return Err(Error::InvalidGrid("positions must increase".into()));
    }
    for (i, &x) in positions.iter().enumerate() {
        if (x - (origin + i as f64 * spacing)).abs() > 1e-6 * spacing {
            return Err(Error::InvalidGrid(format!("sample {i} at {x} breaks uniform spacing {spacing}")));
        }
    }
    Ok((origin, spacing, samples))
}
