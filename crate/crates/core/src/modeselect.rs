//! Exhaustive mode-subset enumeration, KPI ranking, best-set-per-cardinality
//! tables, and degeneracy detection.
//!
//! The full P×K measurement matrix is assembled once; every subset is then a
//! row selection of it. Grid-derived structures (double sorting, weight
//! matrix, neighbor table) are likewise computed once and shared, so the
//! per-subset cost is the uncertainty matrix itself. Subsets are evaluated in
//! parallel and merged in a fixed order (ascending size, lexicographic within
//! each size), so output is bit-reproducible for any worker count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farfield::{FarFieldSet, Polarization};
use crate::geometry::DoAGrid;
use crate::numerics::format_g17;
use crate::uncertainty::{
    assemble_measurement_matrix, grid_sorting, kpi, sorted_weight_matrix, AmbiguityParams,
    MatrixKind,
};

/// Largest entry count the exhaustive sweep accepts (2^20 subsets).
pub const MAX_ENUMERABLE_ENTRIES: usize = 20;

/// Default KPI tolerance for degeneracy grouping and co-maximal brackets, dB.
pub const DEFAULT_DEGENERACY_TOLERANCE_DB: f64 = 0.05;

/// One evaluated subset: which entries it keeps, its KPI, and how many
/// ambiguities its uncertainty matrix shows.
#[derive(Clone, Debug, Serialize)]
pub struct SubsetResult {
    /// Strictly increasing entry indices into the source set.
    pub entry_indices: Vec<usize>,
    /// Scalar KPI of the subset's uncertainty matrix, dB.
    pub kpi_db: f64,
    /// Value interpretation the matrix was assembled with.
    pub kind: MatrixKind,
    /// Total ambiguity findings reported by the detector.
    pub ambiguity_count: usize,
}

/// A subset that could not be scored: some grid DoA receives nothing from
/// the selected entries.
#[derive(Clone, Debug, Serialize)]
pub struct SkippedSubset {
    /// Strictly increasing entry indices into the source set.
    pub entry_indices: Vec<usize>,
    /// Why the subset has no KPI.
    pub reason: String,
}

/// Outcome of an exhaustive sweep: scored subsets in deterministic order plus
/// the subsets that had to be set aside.
#[derive(Clone, Debug, Serialize)]
pub struct SubsetEnumeration {
    results: Vec<SubsetResult>,
    skipped: Vec<SkippedSubset>,
}

impl SubsetEnumeration {
    /// Scored subsets, ascending size and lexicographic within each size.
    pub fn results(&self) -> &[SubsetResult] {
        &self.results
    }

    /// Subsets excluded from scoring, same ordering, with reasons.
    pub fn skipped(&self) -> &[SkippedSubset] {
        &self.skipped
    }

    /// Writes scored subsets as CSV rows `size,indices,kpi_db,ambiguities`,
    /// with indices joined by `-` (e.g. `0-2-3`).
    pub fn save_results_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("size,indices,kpi_db,ambiguities\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.entry_indices.len(),
                join_indices(&r.entry_indices),
                format_g17(r.kpi_db),
                r.ambiguity_count
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

/// All index combinations of the given size in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size == 0 || size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that still has room, reset the tail.
        let mut pos = size;
        while pos > 0 && idx[pos - 1] == n - size + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        idx[pos - 1] += 1;
        for j in pos..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Scores every entry subset with min_size ≤ |subset| ≤ max_size: assembles
/// the full measurement matrix once, evaluates each subset's uncertainty
/// matrix, KPI, and ambiguity count, and reports subsets whose matrix has an
/// all-zero column as skipped instead of failing the sweep.
pub fn enumerate_subsets(
    set: &FarFieldSet,
    grid: &DoAGrid,
    polarization: Polarization,
    kind: MatrixKind,
    min_size: usize,
    max_size: usize,
    params: &AmbiguityParams,
) -> Result<SubsetEnumeration> {
    let n = set.len();
    if n > MAX_ENUMERABLE_ENTRIES {
        return Err(Error::invalid(format!(
            "exhaustive enumeration is capped at {MAX_ENUMERABLE_ENTRIES} entries, set has {n}"
        )));
    }
    if !(1 <= min_size && min_size <= max_size && max_size <= n) {
        return Err(Error::invalid(format!(
            "subset sizes must satisfy 1 <= min <= max <= {n}, got {min_size}..={max_size}"
        )));
    }

    let full = assemble_measurement_matrix(set, grid, polarization, kind)?;
    let sorting = grid_sorting(grid);
    let weights = sorted_weight_matrix(grid, &sorting);
    let neighbors = grid.neighbor_table(6);

    let subsets: Vec<Vec<usize>> = (min_size..=max_size)
        .flat_map(|size| combinations(n, size))
        .collect();

    enum Scored {
        Ok(SubsetResult),
        Skipped(SkippedSubset),
    }

    let evaluated: Vec<Scored> = subsets
        .par_iter()
        .map(|indices| -> Result<Scored> {
            let sub = full.row_subset(indices)?;
            match sub.uncertainty_matrix_with_sorting(&sorting) {
                Ok(u) => {
                    let value = kpi(&u, &weights)?;
                    let report = u.detect_ambiguities_with_neighbors(params, &neighbors)?;
                    Ok(Scored::Ok(SubsetResult {
                        entry_indices: indices.clone(),
                        kpi_db: value.db,
                        kind,
                        ambiguity_count: report.total_count(),
                    }))
                }
                Err(Error::Degenerate(reason)) => Ok(Scored::Skipped(SkippedSubset {
                    entry_indices: indices.clone(),
                    reason,
                })),
                Err(other) => Err(other),
            }
        })
        .collect::<Result<_>>()?;

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for item in evaluated {
        match item {
            Scored::Ok(r) => results.push(r),
            Scored::Skipped(s) => skipped.push(s),
        }
    }
    Ok(SubsetEnumeration { results, skipped })
}

/// Best subsets of one cardinality: the maximum KPI and every subset whose
/// KPI is within the bracket tolerance of it.
#[derive(Clone, Debug, Serialize)]
pub struct CardinalityBest {
    /// Subset size this row describes.
    pub size: usize,
    /// The maximal KPI at this size, dB.
    pub kpi_db: f64,
    /// Co-maximal subsets (KPI ≥ max − tolerance), lexicographic.
    pub subsets: Vec<Vec<usize>>,
}

/// Per cardinality, the maximal-KPI subset together with every subset within
/// `tolerance_db` of that maximum (bracket notation of near-ties).
pub fn best_per_cardinality(
    results: &[SubsetResult],
    tolerance_db: f64,
) -> Result<Vec<CardinalityBest>> {
    if results.is_empty() {
        return Err(Error::invalid("no subset results to rank"));
    }
    if !(tolerance_db.is_finite() && tolerance_db >= 0.0) {
        return Err(Error::invalid("bracket tolerance must be finite and non-negative"));
    }
    let mut by_size: BTreeMap<usize, Vec<&SubsetResult>> = BTreeMap::new();
    for r in results {
        by_size.entry(r.entry_indices.len()).or_default().push(r);
    }
    Ok(by_size
        .into_iter()
        .map(|(size, rows)| {
            let best = rows.iter().map(|r| r.kpi_db).fold(f64::MIN, f64::max);
            let mut subsets: Vec<Vec<usize>> = rows
                .iter()
                .filter(|r| r.kpi_db >= best - tolerance_db)
                .map(|r| r.entry_indices.clone())
                .collect();
            subsets.sort();
            CardinalityBest {
                size,
                kpi_db: best,
                subsets,
            }
        })
        .collect())
}

/// A group of same-size subsets with indistinguishable KPIs related by
/// single-entry swaps: evidence of degenerate (interchangeable) entries.
#[derive(Clone, Debug, Serialize)]
pub struct DegenerateGroup {
    /// Subset size shared by the group.
    pub size: usize,
    /// The grouped subsets, lexicographic.
    pub subsets: Vec<Vec<usize>>,
}

/// True when the sorted index sets differ in exactly one element each way.
fn is_single_swap(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let (mut i, mut j, mut only_a) = (0usize, 0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            i += 1;
            j += 1;
        } else if a[i] < b[j] {
            only_a += 1;
            i += 1;
        } else {
            j += 1;
        }
    }
    only_a + (a.len() - i) == 1
}

/// Groups same-size subsets whose KPIs differ by at most `tolerance_db` and
/// that are connected by single-entry swaps (transitively). Groups with a
/// single member are not reported.
pub fn detect_degenerate_sets(
    results: &[SubsetResult],
    tolerance_db: f64,
) -> Result<Vec<DegenerateGroup>> {
    if !(tolerance_db.is_finite() && tolerance_db >= 0.0) {
        return Err(Error::invalid("degeneracy tolerance must be finite and non-negative"));
    }
    let n = results.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&results[i], &results[j]);
            if a.entry_indices.len() != b.entry_indices.len() {
                continue;
            }
            if (a.kpi_db - b.kpi_db).abs() > tolerance_db {
                continue;
            }
            if !is_single_swap(&a.entry_indices, &b.entry_indices) {
                continue;
            }
            let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    for (i, result) in results.iter().enumerate() {
        let root = find(&mut parent, i);
        groups
            .entry(root)
            .or_default()
            .push(result.entry_indices.clone());
    }
    let mut out: Vec<DegenerateGroup> = groups
        .into_values()
        .filter(|members| members.len() >= 2)
        .map(|mut members| {
            members.sort();
            DegenerateGroup {
                size: members[0].len(),
                subsets: members,
            }
        })
        .collect();
    out.sort_by(|a, b| a.size.cmp(&b.size).then_with(|| a.subsets.cmp(&b.subsets)));
    Ok(out)
}

/// Table-style summary of a sweep: ranked bests per cardinality plus the
/// degeneracy groups, ready for JSON export.
#[derive(Clone, Debug, Serialize)]
pub struct SelectionSummary {
    /// Value interpretation of the underlying matrices.
    pub kind: MatrixKind,
    /// Best subsets per size.
    pub best_per_cardinality: Vec<CardinalityBest>,
    /// Degenerate groups found at the same tolerance.
    pub degenerate_groups: Vec<DegenerateGroup>,
    /// Subsets that could not be scored.
    pub skipped: Vec<SkippedSubset>,
}

/// Builds the summary of an enumeration at one tolerance.
pub fn summarize(
    enumeration: &SubsetEnumeration,
    kind: MatrixKind,
    tolerance_db: f64,
) -> Result<SelectionSummary> {
    Ok(SelectionSummary {
        kind,
        best_per_cardinality: best_per_cardinality(enumeration.results(), tolerance_db)?,
        degenerate_groups: detect_degenerate_sets(enumeration.results(), tolerance_db)?,
        skipped: enumeration.skipped().to_vec(),
    })
}
