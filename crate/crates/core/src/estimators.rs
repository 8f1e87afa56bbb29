//! Statistical baselines for comparison: MUSIC pseudo-spectrum and the
//! deterministic single-source Cramér–Rao bound for azimuth.
//!
//! Both operate on an analytically expected covariance
//! R = σ_s²·a·a^H + σ_n²·I instead of random snapshots, so every result is
//! deterministic and reproducible. The SNR is referenced to the mean per-port
//! received power over the grid, mean_k(‖x_k‖²/P); that convention is part of
//! the public contract. A seeded snapshot simulator ([`sampled_covariance`])
//! is available when sample-covariance behavior is wanted; given the same
//! seed it is just as reproducible.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::farfield::{FarFieldSet, Polarization};
use crate::geometry::{great_circle_distance, Direction, DoAGrid};
use crate::numerics::{compensated_sum, format_g17, hermitian_dot, hermitian_eigen, norm_squared};
use crate::uncertainty::{MatrixKind, MeasurementMatrix};

/// Regularizer in the MUSIC denominator; keeps noiseless spectra finite
/// without moving peak locations (spectra are compared after normalization).
pub const MUSIC_EPSILON: f64 = 1e-12;

/// Default central-difference step for the steering derivative, degrees.
pub const DEFAULT_FD_STEP_DEG: f64 = 0.1;

/// Single-source evaluation scenario.
#[derive(Clone, Copy, Debug)]
pub struct SourceScenario {
    source_doa: Direction,
    polarization: Polarization,
    snr_db: f64,
    snapshot_count: u32,
    signal_power: f64,
}

impl SourceScenario {
    /// Scenario with θ-polarization, one snapshot, and unit signal power.
    pub fn new(source_doa: Direction, snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::invalid("SNR must be finite"));
        }
        Ok(Self {
            source_doa,
            polarization: Polarization::Theta,
            snr_db,
            snapshot_count: 1,
            signal_power: 1.0,
        })
    }

    /// Replaces the sampled polarization.
    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    /// Replaces the snapshot count (must be at least 1).
    pub fn with_snapshot_count(mut self, count: u32) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("snapshot count must be at least 1"));
        }
        self.snapshot_count = count;
        Ok(self)
    }

    /// Replaces the linear signal power (finite, non-negative).
    pub fn with_signal_power(mut self, power: f64) -> Result<Self> {
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::invalid("signal power must be finite and non-negative"));
        }
        self.signal_power = power;
        Ok(self)
    }

    /// Where the single source radiates from.
    pub fn source_doa(&self) -> Direction {
        self.source_doa
    }

    /// Which field component the ports receive.
    pub fn polarization(&self) -> Polarization {
        self.polarization
    }

    /// Signal-to-noise ratio in dB.
    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    /// Number of snapshots N.
    pub fn snapshot_count(&self) -> u32 {
        self.snapshot_count
    }

    /// Linear signal power σ_s².
    pub fn signal_power(&self) -> f64 {
        self.signal_power
    }
}

/// Noise variance σ_n² = P̄ · 10^(−SNR/10) with P̄ the mean per-port received
/// power over all grid DoAs.
pub fn noise_variance(matrix: &MeasurementMatrix, scenario: &SourceScenario) -> f64 {
    let k = matrix.direction_count();
    let p = matrix.entry_count() as f64;
    let norms: Vec<f64> = (0..k).map(|i| norm_squared(&matrix.column(i))).collect();
    let mean = compensated_sum(norms) / (k as f64 * p);
    mean * 10f64.powf(-scenario.snr_db / 10.0)
}

/// Expected covariance R = σ_s²·a·a^H + σ_n²·I with a the steering column at
/// the grid DoA nearest the source. Exactly Hermitian by construction.
pub fn expected_covariance(
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
) -> Result<Array2<Complex64>> {
    if matrix.polarization() != scenario.polarization {
        return Err(Error::invalid(
            "scenario polarization does not match the measurement matrix",
        ));
    }
    let k = matrix.grid().nearest_index(scenario.source_doa);
    let a = matrix.column(k);
    if norm_squared(&a) == 0.0 {
        return Err(Error::degenerate(format!(
            "zero steering vector at the source DoA {}",
            matrix.grid().directions()[k]
        )));
    }
    let sn = noise_variance(matrix, scenario);
    let ss = scenario.signal_power;
    let p = matrix.entry_count();
    let mut r = Array2::zeros((p, p));
    for i in 0..p {
        r[(i, i)] = Complex64::new(ss * a[i].norm_sqr() + sn, 0.0);
        for j in i + 1..p {
            let v = a[i] * a[j].conj() * ss;
            r[(i, j)] = v;
            r[(j, i)] = v.conj();
        }
    }
    Ok(r)
}

/// Sample covariance R̂ = (1/N)·Σ_t x_t·x_t^H from N simulated snapshots
/// x_t = a·s_t + n_t, with s_t ~ CN(0, σ_s²) and n_t ~ CN(0, σ_n²·I) drawn
/// from a seeded generator. The Monte-Carlo counterpart of
/// [`expected_covariance`]: identical seeds give bit-identical matrices, and
/// R̂ converges to R as the snapshot count grows. Exactly Hermitian with a
/// real diagonal because mirrored entries accumulate conjugate terms.
pub fn sampled_covariance(
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
    seed: u64,
) -> Result<Array2<Complex64>> {
    if matrix.polarization() != scenario.polarization {
        return Err(Error::invalid(
            "scenario polarization does not match the measurement matrix",
        ));
    }
    let k = matrix.grid().nearest_index(scenario.source_doa);
    let a = matrix.column(k);
    if norm_squared(&a) == 0.0 {
        return Err(Error::degenerate(format!(
            "zero steering vector at the source DoA {}",
            matrix.grid().directions()[k]
        )));
    }
    let signal_scale = (scenario.signal_power / 2.0).sqrt();
    let noise_scale = (noise_variance(matrix, scenario) / 2.0).sqrt();
    let p = matrix.entry_count();
    let n = scenario.snapshot_count as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |scale: f64| -> Complex64 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * scale, im * scale)
    };

    let mut r: Array2<Complex64> = Array2::zeros((p, p));
    let mut x = vec![Complex64::new(0.0, 0.0); p];
    for _ in 0..n {
        let s = draw(signal_scale);
        for (xi, &ai) in x.iter_mut().zip(&a) {
            *xi = ai * s + draw(noise_scale);
        }
        for i in 0..p {
            for j in 0..p {
                r[(i, j)] += x[i] * x[j].conj();
            }
        }
    }
    let inv = 1.0 / n as f64;
    r.mapv_inplace(|v| v * inv);
    Ok(r)
}

/// MUSIC pseudo-spectrum over a DoA grid, peak-normalized to 0 dB.
#[derive(Clone, Debug)]
pub struct MusicSpectrum {
    linear: Vec<f64>,
    db: Vec<f64>,
    peak_index: usize,
    grid: DoAGrid,
}

impl MusicSpectrum {
    /// Linear spectrum values per grid DoA.
    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Spectrum in dB, normalized so the peak is exactly 0.
    pub fn db(&self) -> &[f64] {
        &self.db
    }

    /// Grid index of the global peak (first on ties).
    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    /// The grid the spectrum lives on.
    pub fn grid(&self) -> &DoAGrid {
        &self.grid
    }

    /// Strongest spectrum point outside an exclusion radius around
    /// `reference` (typically the source DoA): the secondary-peak probe.
    /// Returns `(grid index, dB value)`; `None` when no grid DoA lies outside
    /// the radius.
    pub fn secondary_peak(&self, reference: Direction, exclusion_radius: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, d) in self.grid.directions().iter().enumerate() {
            if great_circle_distance(reference, *d) <= exclusion_radius {
                continue;
            }
            if best.is_none_or(|(_, v)| self.db[i] > v) {
                best = Some((i, self.db[i]));
            }
        }
        best
    }

    /// Writes the spectrum as `theta_deg,phi_deg,value` rows (dB values) in
    /// grid order.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        save_grid_map_csv(path, &self.grid, &self.db)
    }
}

/// Writes one scalar per grid DoA as `theta_deg,phi_deg,value` rows.
pub fn save_grid_map_csv(path: impl AsRef<Path>, grid: &DoAGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::invalid(format!(
            "map holds {} values but the grid has {} directions",
            values.len(),
            grid.len()
        )));
    }
    let mut out = String::from("theta_deg,phi_deg,value\n");
    for (d, v) in grid.directions().iter().zip(values) {
        out.push_str(&format!(
            "{},{},{}\n",
            format_g17(d.theta_deg()),
            format_g17(d.phi_deg()),
            format_g17(*v)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// MUSIC spectrum for a single source (model order 1): eigendecomposes the
/// expected covariance, projects unit-normalized steering columns onto the
/// noise subspace, and reports 1/(projection + ε) normalized to a 0 dB peak.
pub fn music_spectrum(matrix: &MeasurementMatrix, scenario: &SourceScenario) -> Result<MusicSpectrum> {
    let r = expected_covariance(matrix, scenario)?;
    music_spectrum_from_covariance(matrix, &r)
}

/// [`music_spectrum`] on a caller-supplied Hermitian covariance — e.g. a
/// seeded [`sampled_covariance`] — instead of the analytic one.
pub fn music_spectrum_from_covariance(
    matrix: &MeasurementMatrix,
    r: &Array2<Complex64>,
) -> Result<MusicSpectrum> {
    let p = matrix.entry_count();
    if p < 2 {
        return Err(Error::invalid(
            "MUSIC needs more ports than the model order (1)",
        ));
    }
    if r.dim() != (p, p) {
        return Err(Error::invalid(format!(
            "covariance is {:?}, expected ({p}, {p})",
            r.dim()
        )));
    }
    let (evals, evecs) = hermitian_eigen(r);
    let lmax = evals[0];
    if lmax <= 0.0 || lmax.is_nan() {
        return Err(Error::degenerate("covariance has no positive eigenvalue"));
    }
    // Model order 1: the subspace split sits between the largest eigenvalue
    // and the rest; an ambiguous split has no usable noise subspace.
    if evals[0] - evals[1] < 1e-12 * lmax {
        return Err(Error::degenerate(
            "eigenvalue gap below 1e-12 of the largest eigenvalue: signal/noise subspace split \
             is ambiguous",
        ));
    }
    let noise: Vec<Vec<Complex64>> = (1..p).map(|c| evecs.column(c).to_vec()).collect();

    let k = matrix.direction_count();
    let linear: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let a = matrix.column(i);
            let n = norm_squared(&a);
            if n == 0.0 {
                return Err(Error::degenerate(format!(
                    "zero steering vector at DoA {} (grid index {i})",
                    matrix.grid().directions()[i]
                )));
            }
            let inv = 1.0 / n.sqrt();
            let unit: Vec<Complex64> = a.iter().map(|&v| v * inv).collect();
            let proj: Vec<f64> = noise
                .iter()
                .map(|v| hermitian_dot(v, &unit).norm_sqr())
                .collect();
            Ok(1.0 / (compensated_sum(proj) + MUSIC_EPSILON))
        })
        .collect::<Result<_>>()?;

    let mut peak_index = 0;
    for (i, &v) in linear.iter().enumerate() {
        if v > linear[peak_index] {
            peak_index = i;
        }
    }
    let peak = linear[peak_index];
    let db: Vec<f64> = linear.iter().map(|&v| 10.0 * (v / peak).log10()).collect();
    Ok(MusicSpectrum {
        linear,
        db,
        peak_index,
        grid: matrix.grid().clone(),
    })
}

/// Steering vector sampled directly from the set (continuous interpolation),
/// with the same per-row scaling the measurement-matrix kind implies.
fn steering_at(
    set: &FarFieldSet,
    kind: MatrixKind,
    d: Direction,
    polarization: Polarization,
) -> Result<Vec<Complex64>> {
    let mut v: Vec<Complex64> = (0..set.len())
        .map(|n| set.sample(n, d, polarization))
        .collect::<Result<_>>()?;
    if kind == MatrixKind::CmRealized {
        for (value, entry) in v.iter_mut().zip(set.entries()) {
            let lambda = entry.eigenvalue().ok_or_else(|| {
                Error::validation(format!(
                    "kind realized requires an eigenvalue on every entry; {:?} has none",
                    entry.name()
                ))
            })?;
            *value /= Complex64::new(1.0, lambda);
        }
    }
    Ok(v)
}

fn check_crb_inputs(
    set: &FarFieldSet,
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
    step_deg: f64,
) -> Result<()> {
    if !(step_deg.is_finite() && step_deg > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if matrix.polarization() != scenario.polarization {
        return Err(Error::invalid(
            "scenario polarization does not match the measurement matrix",
        ));
    }
    if set.len() != matrix.entry_count() {
        return Err(Error::invalid(format!(
            "set has {} entries but the matrix has {} rows",
            set.len(),
            matrix.entry_count()
        )));
    }
    if scenario.signal_power <= 0.0 {
        return Err(Error::degenerate("CRB is undefined for zero signal power"));
    }
    Ok(())
}

fn crb_at(
    set: &FarFieldSet,
    kind: MatrixKind,
    scenario: &SourceScenario,
    noise_var: f64,
    doa: Direction,
    step_deg: f64,
) -> Result<f64> {
    let a = steering_at(set, kind, doa, scenario.polarization)?;
    let na = norm_squared(&a);
    if na == 0.0 {
        return Err(Error::degenerate(format!("zero steering vector at {doa}")));
    }
    let h = step_deg.to_radians();
    let plus = steering_at(
        set,
        kind,
        Direction::new(doa.theta(), doa.phi() + h)?,
        scenario.polarization,
    )?;
    let minus = steering_at(
        set,
        kind,
        Direction::new(doa.theta(), doa.phi() - h)?,
        scenario.polarization,
    )?;
    let d: Vec<Complex64> = plus
        .iter()
        .zip(&minus)
        .map(|(&p, &m)| (p - m) / (2.0 * h))
        .collect();
    // d^H P⊥_a d = ‖d‖² − |a^H d|²/‖a‖².
    let proj = norm_squared(&d) - hermitian_dot(&a, &d).norm_sqr() / na;
    if proj < 1e-15 {
        return Err(Error::degenerate(format!(
            "azimuth is unidentifiable at {doa}: steering derivative has no component outside \
             the steering direction"
        )));
    }
    let crb_rad2 = noise_var
        / (2.0 * f64::from(scenario.snapshot_count) * scenario.signal_power * proj);
    Ok(crb_rad2 * (180.0 / std::f64::consts::PI).powi(2))
}

/// Deterministic single-source CRB for the azimuth estimate at the scenario's
/// source DoA, in deg². The steering derivative comes from central finite
/// differences on the interpolated steering field.
pub fn crb_phi(
    set: &FarFieldSet,
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
) -> Result<f64> {
    crb_phi_with_step(set, matrix, scenario, DEFAULT_FD_STEP_DEG)
}

/// [`crb_phi`] with an explicit finite-difference step (degrees), exposed for
/// convergence studies.
pub fn crb_phi_with_step(
    set: &FarFieldSet,
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
    step_deg: f64,
) -> Result<f64> {
    check_crb_inputs(set, matrix, scenario, step_deg)?;
    let sn = noise_variance(matrix, scenario);
    crb_at(set, matrix.kind(), scenario, sn, scenario.source_doa, step_deg)
}

/// CRB map over every grid DoA (deg² each), parallel per direction with
/// deterministic placement.
pub fn crb_phi_map(
    set: &FarFieldSet,
    matrix: &MeasurementMatrix,
    scenario: &SourceScenario,
) -> Result<Vec<f64>> {
    check_crb_inputs(set, matrix, scenario, DEFAULT_FD_STEP_DEG)?;
    let sn = noise_variance(matrix, scenario);
    matrix
        .grid()
        .directions()
        .par_iter()
        .map(|&d| crb_at(set, matrix.kind(), scenario, sn, d, DEFAULT_FD_STEP_DEG))
        .collect()
}

/// Converts a CRB variance in deg² to the display unit deg/100 (the standard
/// deviation in hundredths of a degree).
pub fn crb_display_deg_per_100(crb_deg2: f64) -> f64 {
    crb_deg2.sqrt() * 100.0
}
