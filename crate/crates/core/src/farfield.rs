//! Data model, file I/O, interpolation, and normalization bookkeeping for
//! sets of complex far-field patterns (antenna ports or characteristic modes).
//!
//! A set stores one complex matrix per vector component per entry, sampled on
//! a uniform θ×φ raster over the upper hemisphere (or full sphere). Values are
//! dimensionless normalized fields; the normalization tag is metadata asserted
//! by the producer and never converted.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::numerics::{compensated_sum, format_g17, uniform_quadrature_weights, Accumulator};

/// Relative tolerance for raster bookkeeping (step divisibility, coverage).
const RASTER_TOL: f64 = 1e-9;

/// Field component selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarization {
    /// θ-component (vertical polarization over a ground plane).
    Theta,
    /// φ-component (horizontal polarization).
    Phi,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::Theta => "theta",
            Polarization::Phi => "phi",
        })
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(Polarization::Theta),
            "phi" => Ok(Polarization::Phi),
            other => Err(Error::invalid(format!("unknown polarization {other:?}"))),
        }
    }
}

/// Declared normalization of the stored pattern values.
///
/// The tag is carried, validated (cm-directivity requires eigenvalues), and
/// echoed — never converted, since conversion would need efficiency and
/// mismatch data the file format does not carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Directivity,
    Gain,
    RealizedGain,
    CmDirectivity,
}

impl Normalization {
    /// Canonical string form used in manifests.
    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::Directivity => "directivity",
            Normalization::Gain => "gain",
            Normalization::RealizedGain => "realized-gain",
            Normalization::CmDirectivity => "cm-directivity",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directivity" => Ok(Normalization::Directivity),
            "gain" => Ok(Normalization::Gain),
            "realized-gain" => Ok(Normalization::RealizedGain),
            "cm-directivity" => Ok(Normalization::CmDirectivity),
            other => Err(Error::validation(format!(
                "unknown normalization {other:?} (expected directivity, gain, realized-gain, or cm-directivity)"
            ))),
        }
    }
}

/// Uniform angular raster: θ from `theta_start_deg` in `theta_count` steps of
/// `theta_step_deg`, φ likewise with an implied periodic wrap at 360°.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Raster {
    theta_start_deg: f64,
    theta_step_deg: f64,
    theta_count: usize,
    phi_start_deg: f64,
    phi_step_deg: f64,
    phi_count: usize,
}

impl Raster {
    /// Builds and validates a raster. θ must start at 0° and stop at 90°
    /// (ground-plane data) or 180° (full sphere); φ must start at 0° and tile
    /// the full revolution (`step × count = 360°`).
    pub fn new(
        theta_start_deg: f64,
        theta_stop_deg: f64,
        theta_step_deg: f64,
        phi_start_deg: f64,
        phi_step_deg: f64,
        phi_count: usize,
    ) -> Result<Self> {
        if theta_step_deg <= 0.0 || !theta_step_deg.is_finite() {
            return Err(Error::validation("theta step must be positive"));
        }
        if theta_start_deg.abs() > RASTER_TOL {
            return Err(Error::validation("theta raster must start at 0 deg"));
        }
        let span = theta_stop_deg - theta_start_deg;
        if (span - 90.0).abs() > RASTER_TOL && (span - 180.0).abs() > RASTER_TOL {
            return Err(Error::validation(
                "theta raster must cover [0, 90] deg (hemisphere) or [0, 180] deg (full sphere)",
            ));
        }
        let steps = span / theta_step_deg;
        if (steps - steps.round()).abs() > RASTER_TOL * steps.max(1.0) {
            return Err(Error::validation(
                "theta span must be an integer multiple of the step",
            ));
        }
        let theta_count = steps.round() as usize + 1;
        if theta_count < 2 {
            return Err(Error::validation("theta raster needs at least 2 samples"));
        }
        if phi_step_deg <= 0.0 || !phi_step_deg.is_finite() {
            return Err(Error::validation("phi step must be positive"));
        }
        if phi_start_deg.abs() > RASTER_TOL {
            return Err(Error::validation("phi raster must start at 0 deg"));
        }
        if phi_count < 2 {
            return Err(Error::validation("phi raster needs at least 2 samples"));
        }
        let revolution = phi_step_deg * phi_count as f64;
        if (revolution - 360.0).abs() > RASTER_TOL * 360.0 {
            return Err(Error::validation(
                "phi step times count must equal 360 deg (periodic raster)",
            ));
        }
        Ok(Self {
            theta_start_deg,
            theta_step_deg,
            theta_count,
            phi_start_deg,
            phi_step_deg,
            phi_count,
        })
    }

    /// Uniform hemisphere/full-sphere raster with equal θ and φ steps.
    pub fn uniform(step_deg: f64, full_sphere: bool) -> Result<Self> {
        let stop = if full_sphere { 180.0 } else { 90.0 };
        let count = (360.0 / step_deg).round() as usize;
        Self::new(0.0, stop, step_deg, 0.0, step_deg, count)
    }

    /// Number of θ samples.
    pub fn theta_count(&self) -> usize {
        self.theta_count
    }

    /// Number of φ samples.
    pub fn phi_count(&self) -> usize {
        self.phi_count
    }

    /// θ step in degrees.
    pub fn theta_step_deg(&self) -> f64 {
        self.theta_step_deg
    }

    /// φ step in degrees.
    pub fn phi_step_deg(&self) -> f64 {
        self.phi_step_deg
    }

    /// Last θ sample in degrees (90 or 180).
    pub fn theta_stop_deg(&self) -> f64 {
        self.theta_start_deg + self.theta_step_deg * (self.theta_count - 1) as f64
    }

    /// θ sample positions, radians, ascending.
    pub fn theta_samples(&self) -> Vec<f64> {
        (0..self.theta_count)
            .map(|i| (self.theta_start_deg + self.theta_step_deg * i as f64).to_radians())
            .collect()
    }

    /// φ sample positions, radians, ascending in `[0, 2π)`.
    pub fn phi_samples(&self) -> Vec<f64> {
        (0..self.phi_count)
            .map(|j| (self.phi_start_deg + self.phi_step_deg * j as f64).to_radians())
            .collect()
    }

    /// True when the raster covers the full sphere.
    pub fn is_full_sphere(&self) -> bool {
        (self.theta_stop_deg() - 180.0).abs() <= RASTER_TOL
    }
}

/// One named far-field pattern: complex θ- and φ-component matrices of shape
/// `theta_count × phi_count`, plus an optional real eigenvalue for
/// characteristic modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternEntry {
    name: String,
    e_theta: Array2<Complex64>,
    e_phi: Array2<Complex64>,
    eigenvalue: Option<f64>,
}

impl PatternEntry {
    /// Builds an entry; dimension and finiteness checks happen when the entry
    /// joins a [`FarFieldSet`].
    pub fn new(
        name: impl Into<String>,
        e_theta: Array2<Complex64>,
        e_phi: Array2<Complex64>,
        eigenvalue: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            e_theta,
            e_phi,
            eigenvalue,
        }
    }

    /// Entry label.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The same samples under a different label.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// θ-component samples.
    pub fn e_theta(&self) -> &Array2<Complex64> {
        &self.e_theta
    }

    /// φ-component samples.
    pub fn e_phi(&self) -> &Array2<Complex64> {
        &self.e_phi
    }

    /// Characteristic-mode eigenvalue, when the entry carries one.
    pub fn eigenvalue(&self) -> Option<f64> {
        self.eigenvalue
    }

    fn component(&self, pol: Polarization) -> &Array2<Complex64> {
        match pol {
            Polarization::Theta => &self.e_theta,
            Polarization::Phi => &self.e_phi,
        }
    }
}

/// An ordered, validated collection of far-field patterns on one raster at one
/// frequency. Immutable after construction; safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldSet {
    entries: Vec<PatternEntry>,
    raster: Raster,
    theta_samples: Vec<f64>,
    phi_samples: Vec<f64>,
    normalization: Normalization,
    frequency_hz: f64,
}

impl FarFieldSet {
    /// Validates and assembles a set: matching dimensions, finite values,
    /// unique names, and eigenvalues on every entry when the normalization is
    /// cm-directivity.
    pub fn new(
        raster: Raster,
        normalization: Normalization,
        frequency_hz: f64,
        entries: Vec<PatternEntry>,
    ) -> Result<Self> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::validation("frequency must be positive and finite"));
        }
        if entries.is_empty() {
            return Err(Error::validation("a far-field set needs at least one entry"));
        }
        let shape = (raster.theta_count(), raster.phi_count());
        let mut names = BTreeSet::new();
        for e in &entries {
            if e.name.is_empty() {
                return Err(Error::validation("entry names must be non-empty"));
            }
            if !names.insert(e.name.clone()) {
                return Err(Error::validation(format!("duplicate entry name {:?}", e.name)));
            }
            for (label, arr) in [("e_theta", &e.e_theta), ("e_phi", &e.e_phi)] {
                if arr.dim() != shape {
                    return Err(Error::validation(format!(
                        "entry {:?}: {label} is {}x{}, raster requires {}x{}",
                        e.name,
                        arr.nrows(),
                        arr.ncols(),
                        shape.0,
                        shape.1
                    )));
                }
                if arr.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::validation(format!(
                        "entry {:?}: {label} contains non-finite values",
                        e.name
                    )));
                }
            }
            if let Some(ev) = e.eigenvalue {
                if !ev.is_finite() {
                    return Err(Error::validation(format!(
                        "entry {:?}: eigenvalue must be finite",
                        e.name
                    )));
                }
            }
            if normalization == Normalization::CmDirectivity && e.eigenvalue.is_none() {
                return Err(Error::validation(format!(
                    "normalization cm-directivity requires an eigenvalue on every entry; {:?} has none",
                    e.name
                )));
            }
        }
        Ok(Self {
            theta_samples: raster.theta_samples(),
            phi_samples: raster.phi_samples(),
            entries,
            raster,
            normalization,
            frequency_hz,
        })
    }

    /// Number of entries P.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when the set holds no entries (never constructible).
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in manifest order.
    pub fn entries(&self) -> &[PatternEntry] {
        &self.entries
    }

    /// Entry by index.
    pub fn entry(&self, index: usize) -> Result<&PatternEntry> {
        self.entries
            .get(index)
            .ok_or_else(|| Error::invalid(format!("entry index {index} out of range")))
    }

    /// The angular raster.
    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    /// θ samples, radians, ascending.
    pub fn theta_samples(&self) -> &[f64] {
        &self.theta_samples
    }

    /// φ samples, radians, ascending in `[0, 2π)`.
    pub fn phi_samples(&self) -> &[f64] {
        &self.phi_samples
    }

    /// Declared normalization.
    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Operating frequency, Hz.
    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    /// Bilinear interpolation of one entry's field component at direction `d`.
    ///
    /// Real and imaginary parts interpolate independently; φ wraps across the
    /// 2π seam; a query exactly on a stored node reproduces the stored value
    /// bit-exactly. Directions outside the sampled θ range (beyond 1e−9 rad of
    /// slack for conversion rounding) are errors, never zeros.
    pub fn sample(&self, entry_index: usize, d: Direction, pol: Polarization) -> Result<Complex64> {
        let entry = self.entry(entry_index)?;
        let values = entry.component(pol);
        let ts = &self.theta_samples;
        let n = ts.len();
        let lo = ts[0];
        let hi = ts[n - 1];
        let mut theta = d.theta();
        if theta < lo - 1e-9 || theta > hi + 1e-9 {
            return Err(Error::invalid(format!(
                "direction {d} lies outside the sampled theta range [{:.4}, {:.4}] deg",
                lo.to_degrees(),
                hi.to_degrees()
            )));
        }
        theta = theta.clamp(lo, hi);
        // Last cell also serves queries exactly at the upper bound (t = 1).
        let i = ts.partition_point(|s| *s <= theta).saturating_sub(1).min(n - 2);
        let t = (theta - ts[i]) / (ts[i + 1] - ts[i]);

        let ps = &self.phi_samples;
        let pc = ps.len();
        let phi = d.phi();
        let j = ps.partition_point(|s| *s <= phi).saturating_sub(1);
        let j_next = (j + 1) % pc;
        // The wrap cell's width comes from the nominal step; interior cells
        // use the actual sample difference.
        let width = if j + 1 < pc {
            ps[j + 1] - ps[j]
        } else {
            self.raster.phi_step_deg().to_radians()
        };
        let u = (phi - ps[j]) / width;

        let v00 = values[(i, j)];
        let v10 = values[(i + 1, j)];
        let v01 = values[(i, j_next)];
        let v11 = values[(i + 1, j_next)];
        Ok((v00 * (1.0 - t) + v10 * t) * (1.0 - u) + (v01 * (1.0 - t) + v11 * t) * u)
    }

    /// Total radiated power of one entry: quadrature of `|F_θ|² + |F_φ|²`
    /// with the sin θ Jacobian over the sampled region.
    ///
    /// φ rows are summed in ascending value order with compensation, so the
    /// result is exactly invariant under any permutation of φ columns
    /// (rotation invariance holds bit-for-bit).
    pub fn radiated_power(&self, entry_index: usize) -> Result<f64> {
        let entry = self.entry(entry_index)?;
        let tw = uniform_quadrature_weights(&self.theta_samples);
        let h_phi = TAU / self.phi_samples.len() as f64;
        let mut total = Accumulator::new();
        let mut row_terms = vec![0.0; self.phi_samples.len()];
        for (i, (&theta, &wt)) in self.theta_samples.iter().zip(&tw).enumerate() {
            for (j, term) in row_terms.iter_mut().enumerate() {
                *term = entry.e_theta[(i, j)].norm_sqr() + entry.e_phi[(i, j)].norm_sqr();
            }
            let mut sorted = row_terms.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let row = compensated_sum(sorted);
            total.add(wt * theta.sin() * row * h_phi);
        }
        Ok(total.value())
    }

    /// Rotates every pattern about the z axis by `steps` φ-samples: the value
    /// formerly at column `j` moves to column `j + steps` (mod count). Pure
    /// column permutation; metadata unchanged.
    pub fn rotate_about_z(&self, steps: i64) -> FarFieldSet {
        let pc = self.phi_samples.len() as i64;
        let shift = steps.rem_euclid(pc);
        let rotate = |arr: &Array2<Complex64>| {
            let mut out = arr.clone();
            for i in 0..arr.nrows() {
                for j in 0..arr.ncols() {
                    let src = (j as i64 - shift).rem_euclid(pc) as usize;
                    out[(i, j)] = arr[(i, src)];
                }
            }
            out
        };
        let entries = self
            .entries
            .iter()
            .map(|e| PatternEntry {
                name: e.name.clone(),
                e_theta: rotate(&e.e_theta),
                e_phi: rotate(&e.e_phi),
                eigenvalue: e.eigenvalue,
            })
            .collect();
        FarFieldSet {
            entries,
            raster: self.raster,
            theta_samples: self.theta_samples.clone(),
            phi_samples: self.phi_samples.clone(),
            normalization: self.normalization,
            frequency_hz: self.frequency_hz,
        }
    }

    /// Returns a copy with every stored field value multiplied by `factor`.
    pub fn scale(&self, factor: Complex64) -> FarFieldSet {
        let entries = self
            .entries
            .iter()
            .map(|e| PatternEntry {
                name: e.name.clone(),
                e_theta: e.e_theta.mapv(|z| z * factor),
                e_phi: e.e_phi.mapv(|z| z * factor),
                eigenvalue: e.eigenvalue,
            })
            .collect();
        FarFieldSet {
            entries,
            raster: self.raster,
            theta_samples: self.theta_samples.clone(),
            phi_samples: self.phi_samples.clone(),
            normalization: self.normalization,
            frequency_hz: self.frequency_hz,
        }
    }

    /// Returns a copy with entry eigenvalues replaced (`None` clears).
    pub fn with_eigenvalues(&self, eigenvalues: Vec<Option<f64>>) -> Result<FarFieldSet> {
        if eigenvalues.len() != self.entries.len() {
            return Err(Error::invalid(format!(
                "{} eigenvalues for {} entries",
                eigenvalues.len(),
                self.entries.len()
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(eigenvalues)
            .map(|(e, ev)| PatternEntry {
                name: e.name.clone(),
                e_theta: e.e_theta.clone(),
                e_phi: e.e_phi.clone(),
                eigenvalue: ev,
            })
            .collect();
        FarFieldSet::new(self.raster, self.normalization, self.frequency_hz, entries)
    }
}

// ---------------------------------------------------------------------------
// Manifest + CSV persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ThetaSpecJson {
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Serialize, Deserialize)]
struct PhiSpecJson {
    start: f64,
    step: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    name: String,
    file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eigenvalue: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    frequency_hz: f64,
    normalization: String,
    theta_deg: ThetaSpecJson,
    phi_deg: PhiSpecJson,
    entries: Vec<EntryJson>,
}

const ENTRY_CSV_HEADER: &str = "theta_deg,phi_deg,re_etheta,im_etheta,re_ephi,im_ephi";

fn entry_file_name(name: &str) -> String {
    let sanitized: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{sanitized}.csv")
}

/// Loads a far-field set from a JSON manifest; entry CSV paths resolve
/// relative to the manifest's directory. Everything is validated: raster
/// consistency, per-row angles, dimensions, finiteness.
pub fn load_farfield_set(manifest_path: impl AsRef<Path>) -> Result<FarFieldSet> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: ManifestJson = serde_json::from_str(&text)?;
    let normalization: Normalization = manifest.normalization.parse()?;
    let raster = Raster::new(
        manifest.theta_deg.start,
        manifest.theta_deg.stop,
        manifest.theta_deg.step,
        manifest.phi_deg.start,
        manifest.phi_deg.step,
        manifest.phi_deg.count,
    )?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for spec in &manifest.entries {
        let path = base.join(&spec.file);
        let (e_theta, e_phi) = load_entry_csv(&path, &raster, &spec.name)?;
        entries.push(PatternEntry::new(
            spec.name.clone(),
            e_theta,
            e_phi,
            spec.eigenvalue,
        ));
    }
    FarFieldSet::new(raster, normalization, manifest.frequency_hz, entries)
}

fn load_entry_csv(
    path: &Path,
    raster: &Raster,
    entry_name: &str,
) -> Result<(Array2<Complex64>, Array2<Complex64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("entry {entry_name:?}: {}: {e}", path.display()),
        ))
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != ENTRY_CSV_HEADER {
        return Err(Error::validation(format!(
            "entry {entry_name:?}: unexpected CSV header {header:?}"
        )));
    }
    let (tc, pc) = (raster.theta_count(), raster.phi_count());
    let expected_rows = tc * pc;
    let mut e_theta = Vec::with_capacity(expected_rows);
    let mut e_phi = Vec::with_capacity(expected_rows);
    let mut row = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut grab = |what: &str| -> Result<f64> {
            let field = fields.next().ok_or_else(|| {
                Error::validation(format!(
                    "entry {entry_name:?} row {}: missing {what}",
                    lineno + 2
                ))
            })?;
            field.trim().parse::<f64>().map_err(|_| {
                Error::validation(format!(
                    "entry {entry_name:?} row {}: cannot parse {what} from {field:?}",
                    lineno + 2
                ))
            })
        };
        let theta_deg = grab("theta_deg")?;
        let phi_deg = grab("phi_deg")?;
        let (ti, pj) = (row / pc, row % pc);
        if ti >= tc {
            return Err(Error::validation(format!(
                "entry {entry_name:?}: more rows than the {tc}x{pc} raster holds"
            )));
        }
        let want_theta = raster.theta_step_deg() * ti as f64;
        let want_phi = raster.phi_step_deg() * pj as f64;
        if (theta_deg - want_theta).abs() > 1e-6 || (phi_deg - want_phi).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "entry {entry_name:?} row {}: angles ({theta_deg}, {phi_deg}) do not match the \
                 row-major raster position ({want_theta}, {want_phi})",
                lineno + 2
            )));
        }
        e_theta.push(Complex64::new(grab("re_etheta")?, grab("im_etheta")?));
        e_phi.push(Complex64::new(grab("re_ephi")?, grab("im_ephi")?));
        row += 1;
    }
    if row != expected_rows {
        return Err(Error::validation(format!(
            "entry {entry_name:?}: {row} data rows, raster requires {expected_rows}"
        )));
    }
    let e_theta = Array2::from_shape_vec((tc, pc), e_theta).expect("counted shape");
    let e_phi = Array2::from_shape_vec((tc, pc), e_phi).expect("counted shape");
    Ok((e_theta, e_phi))
}

/// Saves a set as `manifest.json` plus one CSV per entry in `dir`, creating
/// the directory if needed. Returns the manifest path. Numeric fields carry
/// 17 significant digits, so a reload reproduces every value bit-exactly.
pub fn save_farfield_set(set: &FarFieldSet, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let raster = set.raster();
    let mut file_names = BTreeSet::new();
    let mut entries_json = Vec::with_capacity(set.len());
    for e in set.entries() {
        let file = entry_file_name(e.name());
        if !file_names.insert(file.clone()) {
            return Err(Error::validation(format!(
                "entry names {:?} collide after filename sanitization",
                e.name()
            )));
        }
        let mut csv = String::with_capacity(64 * raster.theta_count() * raster.phi_count());
        csv.push_str(ENTRY_CSV_HEADER);
        csv.push('\n');
        for ti in 0..raster.theta_count() {
            let theta_deg = raster.theta_step_deg() * ti as f64;
            for pj in 0..raster.phi_count() {
                let phi_deg = raster.phi_step_deg() * pj as f64;
                let et = e.e_theta()[(ti, pj)];
                let ep = e.e_phi()[(ti, pj)];
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    format_g17(theta_deg),
                    format_g17(phi_deg),
                    format_g17(et.re),
                    format_g17(et.im),
                    format_g17(ep.re),
                    format_g17(ep.im)
                ));
            }
        }
        std::fs::write(dir.join(&file), csv)?;
        entries_json.push(EntryJson {
            name: e.name().to_string(),
            file,
            eigenvalue: e.eigenvalue(),
        });
    }
    let manifest = ManifestJson {
        frequency_hz: set.frequency_hz(),
        normalization: set.normalization().as_str().to_string(),
        theta_deg: ThetaSpecJson {
            start: 0.0,
            stop: raster.theta_stop_deg(),
            step: raster.theta_step_deg(),
        },
        phi_deg: PhiSpecJson {
            start: 0.0,
            step: raster.phi_step_deg(),
            count: raster.phi_count(),
        },
        entries: entries_json,
    };
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest_path)
}
