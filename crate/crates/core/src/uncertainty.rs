//! Measurement-matrix assembly, correlation, the uncertainty parameter, the
//! double-sorted uncertainty matrix, distance weighting, the scalar KPI, and
//! automated ambiguity detection.
//!
//! For columns x_α, x_β of the measurement matrix the correlation is
//! ρ_{α,β} = x_α^H x_β / (‖x_α‖‖x_β‖) and the uncertainty parameter is
//! u_{α,β} = |ρ_{α,β}| / (‖x_α‖‖x_β‖), stored as a magnitude. Low u means the
//! two directions are well distinguishable with high received power; the KPI
//! is the inverse mean of the distance-weighted uncertainty matrix, reported
//! in dB (higher is better).

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farfield::{FarFieldSet, Polarization};
use crate::geometry::{great_circle_distance, sort_reference_order, Direction, DoAGrid};
use crate::numerics::{compensated_sum, format_g17, hermitian_dot, norm_squared};

/// How measurement-matrix values relate to the source far-field set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// Port patterns used exactly as tagged by their normalization.
    PortAsTagged,
    /// Characteristic-mode far fields used as stored (directivity-type).
    CmDirectivity,
    /// Mode rows scaled by 1/(1 + jλ): modal significance included, analogous
    /// to realized gain.
    CmRealized,
}

impl MatrixKind {
    /// Canonical string form used in configs and reports.
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixKind::PortAsTagged => "port",
            MatrixKind::CmDirectivity => "directivity",
            MatrixKind::CmRealized => "realized",
        }
    }
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "port" => Ok(MatrixKind::PortAsTagged),
            "directivity" => Ok(MatrixKind::CmDirectivity),
            "realized" => Ok(MatrixKind::CmRealized),
            other => Err(Error::invalid(format!(
                "unknown matrix kind {other:?} (expected port, directivity, or realized)"
            ))),
        }
    }
}

impl Serialize for MatrixKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// The double great-circle sorting of a grid: column order (references by
/// distance to the north pole) and per-column row orders (test DoAs by
/// distance to the column's reference). Derived from the grid alone, so one
/// instance can serve every uncertainty matrix computed on that grid.
#[derive(Clone, Debug)]
pub struct GridSorting {
    column_reference_perm: Vec<usize>,
    row_perms: Vec<Vec<usize>>,
}

impl GridSorting {
    /// Maps sorted column index → grid index of the reference DoA.
    pub fn column_reference_perm(&self) -> &[usize] {
        &self.column_reference_perm
    }

    /// Per sorted column: maps sorted row index → grid index of the test DoA.
    pub fn row_perms(&self) -> &[Vec<usize>] {
        &self.row_perms
    }
}

/// Computes the double sorting of a grid. Ties break by ascending φ, then by
/// grid index, so the result is unique.
pub fn grid_sorting(grid: &DoAGrid) -> GridSorting {
    let k = grid.len();
    let dirs = grid.directions();
    let column_reference_perm = sort_reference_order(grid);
    let row_perms: Vec<Vec<usize>> = column_reference_perm
        .par_iter()
        .map(|&alpha| {
            let reference = dirs[alpha];
            let mut order: Vec<usize> = (0..k).collect();
            let keys: Vec<(f64, f64)> = dirs
                .iter()
                .map(|d| (great_circle_distance(reference, *d), d.phi()))
                .collect();
            order.sort_by(|&a, &b| {
                keys[a]
                    .0
                    .partial_cmp(&keys[b].0)
                    .unwrap()
                    .then(keys[a].1.partial_cmp(&keys[b].1).unwrap())
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    GridSorting {
        column_reference_perm,
        row_perms,
    }
}

fn sorted_weight_from_perms(
    grid: &DoAGrid,
    column_reference_perm: &[usize],
    row_perms: &[Vec<usize>],
) -> Array2<f64> {
    let k = grid.len();
    let dirs = grid.directions();
    let mut w = Array2::<f64>::zeros((k, k));
    for (s, &alpha) in column_reference_perm.iter().enumerate() {
        for (r, &beta) in row_perms[s].iter().enumerate() {
            w[(r, s)] = linear_weight(great_circle_distance(dirs[alpha], dirs[beta]));
        }
    }
    w
}

/// Distance-weight matrix under a precomputed sorting; identical to
/// [`UncertaintyMatrix::weight_matrix`] for any matrix sharing that sorting.
pub fn sorted_weight_matrix(grid: &DoAGrid, sorting: &GridSorting) -> Array2<f64> {
    sorted_weight_from_perms(grid, &sorting.column_reference_perm, &sorting.row_perms)
}

/// P×K complex matrix whose column k stacks every entry's sampled far-field
/// value at grid direction k. Owns a copy of the grid it was sampled on.
#[derive(Clone, Debug)]
pub struct MeasurementMatrix {
    values: Array2<Complex64>,
    grid: DoAGrid,
    polarization: Polarization,
    kind: MatrixKind,
    entry_names: Vec<String>,
}

impl MeasurementMatrix {
    /// Wraps precomputed values, validating dimensions. Columns must follow
    /// grid order; rows follow `entry_names`.
    pub fn from_values(
        values: Array2<Complex64>,
        grid: DoAGrid,
        polarization: Polarization,
        kind: MatrixKind,
        entry_names: Vec<String>,
    ) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::validation(format!(
                "matrix has {} columns but the grid holds {} directions",
                values.ncols(),
                grid.len()
            )));
        }
        if values.nrows() != entry_names.len() {
            return Err(Error::validation(format!(
                "matrix has {} rows but {} entry names were given",
                values.nrows(),
                entry_names.len()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::validation("measurement matrix needs at least one row"));
        }
        Ok(Self {
            values,
            grid,
            polarization,
            kind,
            entry_names,
        })
    }

    /// Number of entries (rows) P.
    pub fn entry_count(&self) -> usize {
        self.values.nrows()
    }

    /// Number of directions (columns) K.
    pub fn direction_count(&self) -> usize {
        self.values.ncols()
    }

    /// The sampled values, P×K.
    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    /// The DoA grid the columns follow.
    pub fn grid(&self) -> &DoAGrid {
        &self.grid
    }

    /// Sampled field component.
    pub fn polarization(&self) -> Polarization {
        self.polarization
    }

    /// Value interpretation.
    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Row labels.
    pub fn entry_names(&self) -> &[String] {
        &self.entry_names
    }

    /// Column k as an owned contiguous vector.
    pub fn column(&self, k: usize) -> Vec<Complex64> {
        self.values.column(k).to_vec()
    }

    /// A new matrix keeping only the given rows (ascending, deduplicated
    /// indices required).
    pub fn row_subset(&self, rows: &[usize]) -> Result<MeasurementMatrix> {
        if rows.is_empty() {
            return Err(Error::invalid("row subset must be non-empty"));
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("row subset indices must be strictly increasing"));
        }
        if *rows.last().unwrap() >= self.entry_count() {
            return Err(Error::invalid(format!(
                "row index {} out of range for {} entries",
                rows.last().unwrap(),
                self.entry_count()
            )));
        }
        let mut values = Array2::zeros((rows.len(), self.direction_count()));
        for (dst, &src) in rows.iter().enumerate() {
            values.row_mut(dst).assign(&self.values.row(src));
        }
        let entry_names = rows.iter().map(|&r| self.entry_names[r].clone()).collect();
        Ok(MeasurementMatrix {
            values,
            grid: self.grid.clone(),
            polarization: self.polarization,
            kind: self.kind,
            entry_names,
        })
    }

    /// Correlation ρ_{α,β} = x_α^H x_β / (‖x_α‖‖x_β‖). Exactly 1 for α = β;
    /// conjugate-symmetric in its arguments.
    pub fn correlation(&self, alpha: usize, beta: usize) -> Result<Complex64> {
        self.check_column(alpha)?;
        self.check_column(beta)?;
        if alpha == beta {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let (xa, xb) = (self.column(alpha), self.column(beta));
        let (na, nb) = (self.column_norm_sq(alpha)?, self.column_norm_sq(beta)?);
        Ok(hermitian_dot(&xa, &xb) / (na.sqrt() * nb.sqrt()))
    }

    /// Uncertainty parameter u_{α,β} = |ρ_{α,β}| / (‖x_α‖‖x_β‖), with the
    /// self term u_{α,α} = 1/‖x_α‖².
    pub fn uncertainty(&self, alpha: usize, beta: usize) -> Result<f64> {
        self.check_column(alpha)?;
        self.check_column(beta)?;
        let na = self.column_norm_sq(alpha)?;
        if alpha == beta {
            return Ok(1.0 / na);
        }
        let nb = self.column_norm_sq(beta)?;
        let dot = hermitian_dot(&self.column(alpha), &self.column(beta));
        Ok(dot.norm() / (na * nb))
    }

    fn check_column(&self, k: usize) -> Result<()> {
        if k >= self.direction_count() {
            return Err(Error::invalid(format!(
                "column index {k} out of range for {} directions",
                self.direction_count()
            )));
        }
        Ok(())
    }

    fn column_norm_sq(&self, k: usize) -> Result<f64> {
        let nsq = norm_squared(&self.column(k));
        if nsq == 0.0 {
            return Err(Error::degenerate(format!(
                "zero-norm measurement column at DoA {} (grid index {k}): the system receives \
                 nothing from this direction",
                self.grid.directions()[k]
            )));
        }
        Ok(nsq)
    }

    /// Computes the full double-sorted uncertainty matrix with retained
    /// permutations. Parallelized over column pairs; results are bit-identical
    /// for any worker count.
    pub fn uncertainty_matrix(&self) -> Result<UncertaintyMatrix> {
        self.uncertainty_matrix_with_sorting(&grid_sorting(&self.grid))
    }

    /// [`Self::uncertainty_matrix`] with a precomputed grid sorting, for
    /// callers evaluating many matrices on the same grid.
    pub fn uncertainty_matrix_with_sorting(&self, sorting: &GridSorting) -> Result<UncertaintyMatrix> {
        let k = self.direction_count();
        if sorting.column_reference_perm.len() != k || sorting.row_perms.len() != k {
            return Err(Error::invalid(format!(
                "grid sorting was built for {} directions, matrix has {k}",
                sorting.column_reference_perm.len()
            )));
        }
        let columns: Vec<Vec<Complex64>> = (0..k).map(|i| self.column(i)).collect();
        let mut norms_sq = Vec::with_capacity(k);
        for (i, col) in columns.iter().enumerate() {
            let nsq = norm_squared(col);
            if nsq == 0.0 {
                return Err(Error::degenerate(format!(
                    "zero-norm measurement column at DoA {} (grid index {i}): the system \
                     receives nothing from this direction",
                    self.grid.directions()[i]
                )));
            }
            norms_sq.push(nsq);
        }

        // Upper triangle in parallel; each (i, j) value is independent, so
        // placement (not summation order) determines the result.
        let upper: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                (i + 1..k)
                    .map(|j| {
                        let dot = hermitian_dot(&columns[i], &columns[j]);
                        dot.norm() / (norms_sq[i] * norms_sq[j])
                    })
                    .collect()
            })
            .collect();
        let mut unsorted = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            unsorted[(i, i)] = 1.0 / norms_sq[i];
            for (off, &u) in upper[i].iter().enumerate() {
                let j = i + 1 + off;
                unsorted[(i, j)] = u;
                unsorted[(j, i)] = u;
            }
        }

        let mut values = Array2::<f64>::zeros((k, k));
        for (s, &alpha) in sorting.column_reference_perm.iter().enumerate() {
            for (r, &beta) in sorting.row_perms[s].iter().enumerate() {
                values[(r, s)] = unsorted[(beta, alpha)];
            }
        }
        let self_terms: Vec<f64> = (0..k).map(|i| unsorted[(i, i)]).collect();

        Ok(UncertaintyMatrix {
            values,
            column_reference_perm: sorting.column_reference_perm.clone(),
            row_perms: sorting.row_perms.clone(),
            self_terms,
            grid: self.grid.clone(),
        })
    }
}

/// Samples every entry of a far-field set at every grid direction (Fig.-2
/// style layout: one column per DoA). For `CmRealized`, row p is scaled by
/// 1/(1 + jλ_p); eigenvalues are then mandatory.
pub fn assemble_measurement_matrix(
    set: &FarFieldSet,
    grid: &DoAGrid,
    polarization: Polarization,
    kind: MatrixKind,
) -> Result<MeasurementMatrix> {
    let p = set.len();
    let k = grid.len();
    let mut row_scales = vec![Complex64::new(1.0, 0.0); p];
    if kind == MatrixKind::CmRealized {
        for (i, e) in set.entries().iter().enumerate() {
            let lambda = e.eigenvalue().ok_or_else(|| {
                Error::validation(format!(
                    "kind realized requires an eigenvalue on every entry; {:?} has none",
                    e.name()
                ))
            })?;
            row_scales[i] = Complex64::new(1.0, 0.0) / Complex64::new(1.0, lambda);
        }
    }

    // Columns in parallel; each is an independent interpolation task.
    let columns: Vec<Vec<Complex64>> = grid
        .directions()
        .par_iter()
        .map(|&d| -> Result<Vec<Complex64>> {
            (0..p)
                .map(|e| Ok(set.sample(e, d, polarization)? * row_scales[e]))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut values = Array2::zeros((p, k));
    for (kk, col) in columns.iter().enumerate() {
        for (pp, &v) in col.iter().enumerate() {
            values[(pp, kk)] = v;
        }
    }
    let entry_names = set.entries().iter().map(|e| e.name().to_string()).collect();
    MeasurementMatrix::from_values(values, grid.clone(), polarization, kind, entry_names)
}

/// K×K uncertainty values under the double great-circle sorting: columns
/// ordered by their reference DoA's distance to the north pole, rows within
/// each column by ascending distance to that column's reference DoA. The
/// permutations that produced the sorting are retained, so the original
/// grid-indexed matrix is recoverable bit-exactly.
#[derive(Clone, Debug)]
pub struct UncertaintyMatrix {
    values: Array2<f64>,
    column_reference_perm: Vec<usize>,
    row_perms: Vec<Vec<usize>>,
    self_terms: Vec<f64>,
    grid: DoAGrid,
}

impl UncertaintyMatrix {
    /// Matrix dimension K.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Sorted values; entry (r, s) is u between sorted column s's reference
    /// DoA and its r-th nearest test DoA.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Maps sorted column index → grid index of the reference DoA.
    pub fn column_reference_perm(&self) -> &[usize] {
        &self.column_reference_perm
    }

    /// Per sorted column: maps sorted row index → grid index of the test DoA.
    pub fn row_perms(&self) -> &[Vec<usize>] {
        &self.row_perms
    }

    /// Self terms u_{α,α} = 1/‖x_α‖² indexed by grid direction.
    pub fn self_terms(&self) -> &[f64] {
        &self.self_terms
    }

    /// The grid the matrix was computed on.
    pub fn grid(&self) -> &DoAGrid {
        &self.grid
    }

    /// Reconstructs the unsorted grid-indexed symmetric matrix bit-exactly by
    /// inverting the stored permutations.
    pub fn unsorted(&self) -> Array2<f64> {
        let k = self.dim();
        let mut out = Array2::<f64>::zeros((k, k));
        for (s, &alpha) in self.column_reference_perm.iter().enumerate() {
            for (r, &beta) in self.row_perms[s].iter().enumerate() {
                out[(beta, alpha)] = self.values[(r, s)];
            }
        }
        out
    }

    /// The uncertainty vector of one reference DoA in grid order:
    /// u_{α,β} for all β, α fixed.
    pub fn vector_for_reference(&self, grid_index: usize) -> Result<Vec<f64>> {
        let s = self
            .column_reference_perm
            .iter()
            .position(|&a| a == grid_index)
            .ok_or_else(|| Error::invalid(format!("grid index {grid_index} out of range")))?;
        let k = self.dim();
        let mut out = vec![0.0; k];
        for (r, &beta) in self.row_perms[s].iter().enumerate() {
            out[beta] = self.values[(r, s)];
        }
        Ok(out)
    }

    /// Writes the sorted matrix as plain CSV (K rows × K columns, 17
    /// significant digits, no header).
    pub fn save_sorted_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let k = self.dim();
        let mut out = String::new();
        for r in 0..k {
            let row: Vec<String> = (0..k).map(|s| format_g17(self.values[(r, s)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Writes the two permutation side files: the column reference permutation
    /// (`sorted_col,grid_index`) and the per-column row permutations
    /// (`sorted_row` then one grid index per sorted column).
    pub fn save_permutations(
        &self,
        column_path: impl AsRef<Path>,
        rows_path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut cols = String::from("sorted_col,grid_index\n");
        for (s, &alpha) in self.column_reference_perm.iter().enumerate() {
            cols.push_str(&format!("{s},{alpha}\n"));
        }
        std::fs::write(column_path, cols)?;

        let k = self.dim();
        let mut rows = String::from("sorted_row");
        for s in 0..k {
            rows.push_str(&format!(",col{s}"));
        }
        rows.push('\n');
        for r in 0..k {
            rows.push_str(&r.to_string());
            for s in 0..k {
                rows.push_str(&format!(",{}", self.row_perms[s][r]));
            }
            rows.push('\n');
        }
        std::fs::write(rows_path, rows)?;
        Ok(())
    }

    /// Writes one reference DoA's uncertainty vector as
    /// `theta_deg,phi_deg,u` rows in grid order (heatmap-ready).
    pub fn save_vector_csv(&self, path: impl AsRef<Path>, grid_index: usize) -> Result<()> {
        let vec = self.vector_for_reference(grid_index)?;
        let mut out = String::from("theta_deg,phi_deg,u\n");
        for (d, u) in self.grid.directions().iter().zip(&vec) {
            out.push_str(&format!(
                "{},{},{}\n",
                format_g17(d.theta_deg()),
                format_g17(d.phi_deg()),
                format_g17(*u)
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Distance-weight matrix under the same double sorting: entry (r, s) is
    /// δ_gc(reference_s, test_r) / π ∈ [0, 1], exactly 0 where test equals
    /// reference.
    pub fn weight_matrix(&self) -> Array2<f64> {
        sorted_weight_from_perms(&self.grid, &self.column_reference_perm, &self.row_perms)
    }

    /// Detects ambiguities: for each reference DoA α, test DoAs β outside the
    /// exclusion radius whose norm-balanced uncertainty
    /// u_{α,β}/√(u_{α,α}u_{β,β}) = |ρ_{α,β}| is a local maximum over the
    /// 6-nearest-neighbor structure of the grid and reaches
    /// `relative_threshold` times the (balanced) self term.
    ///
    /// The balanced landscape makes the rule independent of per-direction
    /// received power, so weakly received rim directions cannot masquerade as
    /// ambiguities of a well-received reference; reported values still carry
    /// the raw u alongside |ρ|.
    pub fn detect_ambiguities(&self, params: &AmbiguityParams) -> Result<AmbiguityReport> {
        self.detect_ambiguities_with_neighbors(params, &self.grid.neighbor_table(6))
    }

    /// [`Self::detect_ambiguities`] with a precomputed neighbor table (one
    /// entry per grid DoA), for callers scanning many matrices on one grid.
    pub fn detect_ambiguities_with_neighbors(
        &self,
        params: &AmbiguityParams,
        neighbors: &[Vec<usize>],
    ) -> Result<AmbiguityReport> {
        if params.exclusion_radius <= 0.0 || params.exclusion_radius.is_nan() {
            return Err(Error::invalid("exclusion radius must be positive"));
        }
        let t = params.relative_threshold;
        if t <= 0.0 || t > 1.0 || t.is_nan() {
            return Err(Error::invalid("relative threshold must lie in (0, 1]"));
        }
        let k = self.dim();
        if neighbors.len() != k {
            return Err(Error::invalid(format!(
                "neighbor table covers {} directions, matrix has {k}",
                neighbors.len()
            )));
        }
        let unsorted = self.unsorted();
        let dirs = self.grid.directions();

        // Balanced landscape |ρ| from u and the self terms.
        let balanced = |alpha: usize, beta: usize| -> f64 {
            unsorted[(alpha, beta)] / (self.self_terms[alpha] * self.self_terms[beta]).sqrt()
        };

        let per_reference: Vec<Vec<AmbiguityFinding>> = (0..k)
            .into_par_iter()
            .map(|alpha| {
                let mut findings = Vec::new();
                for beta in 0..k {
                    if beta == alpha {
                        continue;
                    }
                    let distance = great_circle_distance(dirs[alpha], dirs[beta]);
                    if distance <= params.exclusion_radius {
                        continue;
                    }
                    let v = balanced(alpha, beta);
                    if v < params.relative_threshold {
                        continue;
                    }
                    if neighbors[beta].iter().all(|&n| v >= balanced(alpha, n)) {
                        findings.push(AmbiguityFinding {
                            reference_index: alpha,
                            test_index: beta,
                            test_doa: dirs[beta],
                            u_value: unsorted[(alpha, beta)],
                            correlation_magnitude: v,
                            distance_rad: distance,
                        });
                    }
                }
                findings
            })
            .collect();
        Ok(AmbiguityReport { per_reference })
    }
}

/// Linear distance weighting w(δ) = δ/π: zero at coincidence, one at the
/// antipode, one half at a quarter turn.
pub fn linear_weight(distance_rad: f64) -> f64 {
    distance_rad / PI
}

/// Scalar KPI: inverse of the mean weighted uncertainty,
/// `[(1/K²) Σ_{r,s} u_{r,s} · w_{r,s}]⁻¹`. The sum runs in fixed
/// column-major sorted order with compensated accumulation, so the result is
/// bit-reproducible. Errors when the weighted sum vanishes.
pub fn kpi(u: &UncertaintyMatrix, w: &Array2<f64>) -> Result<Kpi> {
    let k = u.dim();
    if w.dim() != (k, k) {
        return Err(Error::invalid(format!(
            "weight matrix is {:?}, expected ({k}, {k})",
            w.dim()
        )));
    }
    let mut terms = Vec::with_capacity(k * k);
    for s in 0..k {
        for r in 0..k {
            terms.push(u.values()[(r, s)] * w[(r, s)]);
        }
    }
    let mean = compensated_sum(terms) / (k * k) as f64;
    if mean <= 0.0 {
        return Err(Error::degenerate(
            "weighted uncertainty sum vanished (degenerate single-DoA grid?)",
        ));
    }
    let linear = 1.0 / mean;
    Ok(Kpi {
        linear,
        db: 10.0 * linear.log10(),
    })
}

/// KPI value in linear and decibel form.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Kpi {
    /// Inverse mean weighted uncertainty.
    pub linear: f64,
    /// `10·log₁₀(linear)`.
    pub db: f64,
}

/// Ambiguity-detector settings.
#[derive(Clone, Copy, Debug)]
pub struct AmbiguityParams {
    /// Great-circle radius around each reference DoA to ignore, radians.
    pub exclusion_radius: f64,
    /// Fraction of the (balanced) self term a local maximum must reach.
    pub relative_threshold: f64,
}

impl Default for AmbiguityParams {
    fn default() -> Self {
        Self {
            exclusion_radius: 30f64.to_radians(),
            relative_threshold: 0.5,
        }
    }
}

/// One detected ambiguity: a test DoA far from the reference that the system
/// cannot distinguish from it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AmbiguityFinding {
    /// Grid index of the reference DoA.
    pub reference_index: usize,
    /// Grid index of the ambiguous test DoA.
    pub test_index: usize,
    /// The ambiguous test DoA.
    #[serde(serialize_with = "serialize_direction")]
    pub test_doa: Direction,
    /// Raw uncertainty u between reference and test.
    pub u_value: f64,
    /// Norm-balanced uncertainty |ρ| between reference and test.
    pub correlation_magnitude: f64,
    /// Great-circle separation, radians.
    pub distance_rad: f64,
}

fn serialize_direction<S: serde::Serializer>(d: &Direction, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("Direction", 2)?;
    st.serialize_field("theta_deg", &d.theta_deg())?;
    st.serialize_field("phi_deg", &d.phi_deg())?;
    st.end()
}

/// Ambiguity findings grouped per reference DoA (indexed like the grid).
#[derive(Clone, Debug, Serialize)]
pub struct AmbiguityReport {
    per_reference: Vec<Vec<AmbiguityFinding>>,
}

impl AmbiguityReport {
    /// Findings for each reference DoA, grid-indexed.
    pub fn per_reference(&self) -> &[Vec<AmbiguityFinding>] {
        &self.per_reference
    }

    /// Total number of findings across all references.
    pub fn total_count(&self) -> usize {
        self.per_reference.iter().map(Vec::len).sum()
    }

    /// References with no findings at all.
    pub fn clean_reference_count(&self) -> usize {
        self.per_reference.iter().filter(|f| f.is_empty()).count()
    }

    /// Writes all findings as CSV rows.
    pub fn save_csv(&self, path: impl AsRef<Path>, grid: &DoAGrid) -> Result<()> {
        let mut out = String::from(
            "reference_index,ref_theta_deg,ref_phi_deg,test_index,test_theta_deg,test_phi_deg,u,correlation_magnitude,distance_deg\n",
        );
        for findings in &self.per_reference {
            for f in findings {
                let r = grid.directions()[f.reference_index];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    f.reference_index,
                    format_g17(r.theta_deg()),
                    format_g17(r.phi_deg()),
                    f.test_index,
                    format_g17(f.test_doa.theta_deg()),
                    format_g17(f.test_doa.phi_deg()),
                    format_g17(f.u_value),
                    format_g17(f.correlation_magnitude),
                    format_g17(f.distance_rad.to_degrees())
                ));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_cap_grid;
    use crate::synth::{canonical_mode_set, synth_uca, UcaSpec};

    /// Tiny grid with equal weights for toy matrices.
    fn toy_grid(dirs_deg: &[(f64, f64)]) -> DoAGrid {
        let dirs: Vec<Direction> = dirs_deg
            .iter()
            .map(|&(t, p)| Direction::from_degrees(t, p).unwrap())
            .collect();
        let cap = 2.0 * PI * (45f64.to_radians().cos() - 0.0);
        let w = cap / dirs.len() as f64;
        DoAGrid::from_parts(dirs, vec![w; dirs_deg.len()], 45f64.to_radians(), PI / 2.0).unwrap()
    }

    fn toy_matrix(cols: &[[Complex64; 2]], dirs_deg: &[(f64, f64)]) -> MeasurementMatrix {
        let grid = toy_grid(dirs_deg);
        let mut values = Array2::zeros((2, cols.len()));
        for (k, col) in cols.iter().enumerate() {
            values[(0, k)] = col[0];
            values[(1, k)] = col[1];
        }
        MeasurementMatrix::from_values(
            values,
            grid,
            Polarization::Theta,
            MatrixKind::PortAsTagged,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn correlation_of_identical_columns_is_one() {
        let m = toy_matrix(
            &[[c(1.0, 0.5), c(-0.3, 0.2)], [c(1.0, 0.5), c(-0.3, 0.2)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        let rho = m.correlation(0, 1).unwrap();
        assert!((rho - c(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(m.correlation(0, 0).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn correlation_of_orthogonal_columns_is_zero() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        assert_eq!(m.correlation(0, 1).unwrap(), c(0.0, 0.0));
        let m2 = toy_matrix(
            &[[c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(-1.0, 0.0)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        assert_eq!(m2.correlation(0, 1).unwrap().norm(), 0.0);
    }

    #[test]
    fn self_uncertainty_is_inverse_received_power() {
        let m = toy_matrix(
            &[[c(2.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        assert_eq!(m.uncertainty(0, 0).unwrap(), 0.25);
        assert_eq!(m.uncertainty(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn uncertainty_scaling_laws_are_exact_for_exact_factors() {
        let cols = [[c(0.7, -0.4), c(1.1, 0.3)], [c(-0.2, 0.9), c(0.5, -0.6)]];
        let dirs = [(50.0, 10.0), (70.0, 200.0)];
        let m = toy_matrix(&cols, &dirs);
        // c = 2: u divides by exactly 4.
        let scaled2: Vec<[Complex64; 2]> = cols.iter().map(|col| [col[0] * 2.0, col[1] * 2.0]).collect();
        let m2 = toy_matrix(&scaled2, &dirs);
        for (a, b) in [(0, 0), (0, 1), (1, 1)] {
            assert_eq!(m2.uncertainty(a, b).unwrap(), m.uncertainty(a, b).unwrap() / 4.0);
        }
        // c = j: |c| = 1, u unchanged bit-exactly.
        let j = c(0.0, 1.0);
        let scaledj: Vec<[Complex64; 2]> = cols.iter().map(|col| [col[0] * j, col[1] * j]).collect();
        let mj = toy_matrix(&scaledj, &dirs);
        for (a, b) in [(0, 0), (0, 1), (1, 1)] {
            assert_eq!(mj.uncertainty(a, b).unwrap(), m.uncertainty(a, b).unwrap());
        }
        // General complex c: 1/|c|² law within rounding.
        let g = c(1.7, 0.3);
        let scaledg: Vec<[Complex64; 2]> = cols.iter().map(|col| [col[0] * g, col[1] * g]).collect();
        let mg = toy_matrix(&scaledg, &dirs);
        for (a, b) in [(0, 0), (0, 1), (1, 1)] {
            let expect = m.uncertainty(a, b).unwrap() / g.norm_sqr();
            let got = mg.uncertainty(a, b).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect.max(1e-300));
        }
    }

    #[test]
    fn uncertainty_is_exactly_symmetric() {
        let m = toy_matrix(
            &[[c(0.3, -1.7), c(2.2, 0.4)], [c(-0.9, 0.05), c(1.3, -2.6)]],
            &[(50.0, 10.0), (70.0, 200.0)],
        );
        assert_eq!(m.uncertainty(0, 1).unwrap(), m.uncertainty(1, 0).unwrap());
        let r01 = m.correlation(0, 1).unwrap();
        let r10 = m.correlation(1, 0).unwrap();
        assert_eq!(r01.re, r10.re);
        assert_eq!(r01.im, -r10.im);
    }

    #[test]
    fn zero_norm_column_is_a_degeneracy_error() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        let err = m.uncertainty_matrix().unwrap_err().to_string();
        assert!(err.contains("zero-norm"), "got: {err}");
        assert!(err.contains("grid index 1"), "got: {err}");
    }

    #[test]
    fn sorted_matrix_leads_every_column_with_its_self_term() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.4, 0.1)], [c(0.2, -0.3), c(1.5, 0.0)]],
            &[(50.0, 10.0), (70.0, 200.0)],
        );
        let u = m.uncertainty_matrix().unwrap();
        for (s, &alpha) in u.column_reference_perm().iter().enumerate() {
            assert_eq!(u.values()[(0, s)], u.self_terms()[alpha]);
            assert_eq!(u.row_perms()[s][0], alpha);
        }
    }

    #[test]
    fn orthogonal_equal_norm_columns_give_diagonal_structure() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            &[(50.0, 10.0), (70.0, 200.0)],
        );
        let u = m.uncertainty_matrix().unwrap();
        // First row: self terms (both 1); second row: zero cross terms.
        assert_eq!(u.values()[(0, 0)], 1.0);
        assert_eq!(u.values()[(0, 1)], 1.0);
        assert_eq!(u.values()[(1, 0)], 0.0);
        assert_eq!(u.values()[(1, 1)], 0.0);
    }

    #[test]
    fn unsorting_recovers_the_grid_indexed_matrix_bit_exactly() {
        let set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap().with_step_deg(3.0).unwrap())
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 60).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let unsorted = u.unsorted();
        for i in 0..grid.len() {
            for jj in 0..grid.len() {
                assert_eq!(unsorted[(i, jj)], m.uncertainty(i, jj).unwrap());
            }
        }
    }

    #[test]
    fn weight_endpoints_are_exact() {
        assert_eq!(linear_weight(0.0), 0.0);
        assert_eq!(linear_weight(PI), 1.0);
        assert_eq!(linear_weight(PI / 2.0), 0.5);
    }

    #[test]
    fn weight_matrix_is_zero_at_the_reference_and_bounded() {
        let set = synth_uca(&UcaSpec::new(4, 0.4, 0.25).unwrap().with_step_deg(5.0).unwrap())
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 40).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let w = u.weight_matrix();
        for s in 0..u.dim() {
            assert_eq!(w[(0, s)], 0.0, "reference row must carry zero weight");
            for r in 0..u.dim() {
                assert!((0.0..=1.0).contains(&w[(r, s)]));
            }
        }
    }

    #[test]
    fn kpi_matches_the_constant_case_closed_form() {
        // Identical unit columns: every u = 1, so KPI = 1/mean(w).
        let dirs = [(60.0, 0.0), (60.0, 180.0)];
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
            &dirs,
        );
        let u = m.uncertainty_matrix().unwrap();
        let w = u.weight_matrix();
        let delta = great_circle_distance(
            Direction::from_degrees(60.0, 0.0).unwrap(),
            Direction::from_degrees(60.0, 180.0).unwrap(),
        );
        let mean_w = 2.0 * linear_weight(delta) / 4.0;
        let got = kpi(&u, &w).unwrap();
        assert!((got.linear - 1.0 / mean_w).abs() < 1e-12 / mean_w);
        assert!((got.db - 10.0 * (1.0 / mean_w).log10()).abs() < 1e-12);
    }

    #[test]
    fn kpi_errors_when_all_weighted_terms_vanish() {
        // Orthogonal columns leave only diagonal u, which the weights zero out.
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            &[(60.0, 0.0), (60.0, 180.0)],
        );
        let u = m.uncertainty_matrix().unwrap();
        let w = u.weight_matrix();
        assert!(matches!(kpi(&u, &w), Err(Error::Degenerate(_))));
    }

    #[test]
    fn kpi_is_bit_identical_under_entry_reordering() {
        let set = canonical_mode_set(2.0, false).unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 80).unwrap();
        // Reorder entries {VED, MDX, MDY, ZTH} → {MDY, VED, MDX, ZTH}.
        let reordered = crate::farfield::FarFieldSet::new(
            *set.raster(),
            set.normalization(),
            set.frequency_hz(),
            vec![
                set.entries()[2].clone(),
                set.entries()[0].clone(),
                set.entries()[1].clone(),
                set.entries()[3].clone(),
            ],
        )
        .unwrap();
        let kpi_of = |s: &crate::farfield::FarFieldSet| {
            let m = assemble_measurement_matrix(s, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
                .unwrap();
            let u = m.uncertainty_matrix().unwrap();
            let w = u.weight_matrix();
            kpi(&u, &w).unwrap()
        };
        let a = kpi_of(&set);
        let b = kpi_of(&reordered);
        assert_eq!(a.linear, b.linear, "KPI must not depend on entry order");
        assert_eq!(a.db, b.db);
    }

    #[test]
    fn realized_kind_with_zero_eigenvalues_matches_directivity() {
        let set = canonical_mode_set(5.0, false).unwrap(); // eigenvalues all 0
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 30).unwrap();
        let md = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap();
        let mr = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmRealized)
            .unwrap();
        assert_eq!(md.values(), mr.values());
    }

    #[test]
    fn realized_kind_scales_rows_by_modal_significance() {
        let set = canonical_mode_set(5.0, false)
            .unwrap()
            .with_eigenvalues(vec![Some(1.0), Some(0.0), Some(0.0), Some(0.0)])
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 30).unwrap();
        let md = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap();
        let mr = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmRealized)
            .unwrap();
        // |1/(1+j)| = 1/√2 on row 0; other rows untouched.
        for k in 0..grid.len() {
            let expect = md.values()[(0, k)] / Complex64::new(1.0, 1.0);
            assert!((mr.values()[(0, k)] - expect).norm() < 1e-15);
            assert_eq!(mr.values()[(1, k)], md.values()[(1, k)]);
        }
    }

    #[test]
    fn realized_kind_requires_eigenvalues() {
        let set = synth_uca(&UcaSpec::new(4, 0.4, 0.25).unwrap().with_step_deg(10.0).unwrap())
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 20).unwrap();
        let err = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmRealized);
        assert!(err.is_err());
    }

    #[test]
    fn canonical_matrix_matches_closed_forms_at_grid_nodes() {
        let set = canonical_mode_set(1.0, false).unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 250).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap();
        for (k, d) in grid.directions().iter().enumerate() {
            let expected = [d.theta().sin(), d.phi().sin(), d.phi().cos(), 0.0];
            for (p, &e) in expected.iter().enumerate() {
                let got = m.values()[(p, k)];
                assert!(
                    (got.re - e).abs() < 1e-4 && got.im.abs() < 1e-15,
                    "entry {p} at DoA {k}: got {got}, expected {e}"
                );
            }
        }
    }

    #[test]
    fn detector_rejects_invalid_parameters() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.4, 0.0)], [c(0.2, 0.0), c(1.0, 0.0)]],
            &[(50.0, 10.0), (70.0, 200.0)],
        );
        let u = m.uncertainty_matrix().unwrap();
        assert!(u
            .detect_ambiguities(&AmbiguityParams {
                exclusion_radius: 0.0,
                relative_threshold: 0.5
            })
            .is_err());
        assert!(u
            .detect_ambiguities(&AmbiguityParams {
                exclusion_radius: 0.5,
                relative_threshold: 1.5
            })
            .is_err());
    }

    #[test]
    fn orthogonal_toy_matrix_has_no_ambiguities() {
        let m = toy_matrix(
            &[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            &[(50.0, 10.0), (70.0, 200.0)],
        );
        let u = m.uncertainty_matrix().unwrap();
        let report = u.detect_ambiguities(&AmbiguityParams::default()).unwrap();
        assert_eq!(report.total_count(), 0);
    }

    #[test]
    fn wide_uca_shows_the_mirror_ambiguity_in_the_sorted_column() {
        // 0.6λ hexagonal ring: the sorted column of reference (80°, 90°) must
        // show a secondary maximum in its far half exceeding half the self
        // term.
        let set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap()).unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 250).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let alpha = grid.nearest_index(Direction::from_degrees(80.0, 90.0).unwrap());
        let s = u
            .column_reference_perm()
            .iter()
            .position(|&a| a == alpha)
            .unwrap();
        let k = u.dim();
        let self_term = u.self_terms()[alpha];
        let far_max = (k / 2..k)
            .map(|r| u.values()[(r, s)])
            .fold(f64::MIN, f64::max);
        assert!(
            far_max > 0.5 * self_term,
            "far-half max {far_max} vs self term {self_term}"
        );
    }

    #[test]
    fn wide_uca_mirror_ambiguity_is_detected_near_opposite_azimuth() {
        let set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap()).unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 250).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let report = u.detect_ambiguities(&AmbiguityParams::default()).unwrap();
        assert!(report.total_count() > 0);
        let alpha = grid.nearest_index(Direction::from_degrees(80.0, 90.0).unwrap());
        let findings = &report.per_reference()[alpha];
        assert!(
            findings.iter().any(|f| {
                let dphi = (f.test_doa.phi_deg() - 270.0).abs();
                dphi.min(360.0 - dphi) <= 10.0
            }),
            "expected a finding near phi = 270 deg, got {findings:?}"
        );
    }

    #[test]
    fn report_csv_lists_every_finding() {
        let set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap().with_step_deg(2.0).unwrap())
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 100).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let report = u.detect_ambiguities(&AmbiguityParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("amb.csv");
        report.save_csv(&path, &grid).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), report.total_count() + 1);
    }

    #[test]
    fn sorted_csv_and_permutations_round_trip_dimensions() {
        let set = synth_uca(&UcaSpec::new(4, 0.4, 0.25).unwrap().with_step_deg(5.0).unwrap())
            .unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 25).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        let dir = tempfile::tempdir().unwrap();
        u.save_sorted_csv(dir.path().join("u.csv")).unwrap();
        u.save_permutations(dir.path().join("cols.csv"), dir.path().join("rows.csv"))
            .unwrap();
        u.save_vector_csv(dir.path().join("vec.csv"), 0).unwrap();
        let udata = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
        assert_eq!(udata.lines().count(), 25);
        assert_eq!(udata.lines().next().unwrap().split(',').count(), 25);
        let vec = std::fs::read_to_string(dir.path().join("vec.csv")).unwrap();
        assert_eq!(vec.lines().count(), 26);
    }

    #[test]
    fn row_subset_preserves_columns_and_names() {
        let set = canonical_mode_set(5.0, false).unwrap();
        let grid = generate_cap_grid(45f64.to_radians(), PI / 2.0, 30).unwrap();
        let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap();
        let sub = m.row_subset(&[0, 2]).unwrap();
        assert_eq!(sub.entry_names(), &["VED".to_string(), "MDY".to_string()]);
        for k in 0..grid.len() {
            assert_eq!(sub.values()[(0, k)], m.values()[(0, k)]);
            assert_eq!(sub.values()[(1, k)], m.values()[(2, k)]);
        }
        assert!(m.row_subset(&[2, 0]).is_err());
        assert!(m.row_subset(&[]).is_err());
        assert!(m.row_subset(&[9]).is_err());
    }
}
