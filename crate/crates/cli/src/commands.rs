//! Command implementations: thin wrappers over the library that resolve
//! configuration, run one pipeline, and emit CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use df_eval_core::estimators::{
    crb_display_deg_per_100, crb_phi_map, music_spectrum, music_spectrum_from_covariance,
    sampled_covariance, save_grid_map_csv,
};
use df_eval_core::farfield::{load_farfield_set, save_farfield_set, FarFieldSet, Raster};
use df_eval_core::geometry::Direction;
use df_eval_core::incident::estimate_incident_field;
use df_eval_core::modeselect::{enumerate_subsets, summarize};
use df_eval_core::synth::{canonical_mode_set, synth_uca, UcaSpec};
use df_eval_core::uncertainty::{assemble_measurement_matrix, kpi, Kpi, MeasurementMatrix};
use df_eval_core::{Error, Result};

use crate::config::RunConfig;

/// Reproducibility record every command leaves behind. The timestamp is the
/// only non-deterministic byte in any run: it lives here, under its own key.
#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    timestamp_utc: String,
    config: &'a RunConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_run_record(out: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let record = RunRecord {
        command,
        timestamp_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
        config,
    };
    write_json(&out.join("run.json"), &record)
}

fn prepare_output(out: &Path, command: &str, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    write_run_record(out, command, config)
}

fn load_set(path: &Path) -> Result<FarFieldSet> {
    load_farfield_set(path)
}

fn assemble(config: &RunConfig, set: &FarFieldSet) -> Result<MeasurementMatrix> {
    let grid = config.build_grid()?;
    assemble_measurement_matrix(set, &grid, config.polarization()?, config.matrix_kind()?)
}

/// `synth uca`: generate the circular monopole array and write it as a
/// far-field manifest plus per-entry CSVs.
pub fn synth_uca_cmd(
    config: &RunConfig,
    out: &Path,
    elements: usize,
    spacing: f64,
    length: f64,
    step_deg: Option<f64>,
    frequency_hz: Option<f64>,
) -> Result<()> {
    let mut spec = UcaSpec::new(elements, spacing, length)?;
    if let Some(s) = step_deg {
        spec = spec.with_step_deg(s)?;
    }
    if let Some(f) = frequency_hz {
        spec = spec.with_frequency_hz(f)?;
    }
    let set = synth_uca(&spec)?;
    prepare_output(out, "synth-uca", config)?;
    let manifest = save_farfield_set(&set, out)?;
    println!("wrote {}-entry set: {}", set.len(), manifest.display());
    Ok(())
}

/// `synth modes`: generate a named preset mode set.
pub fn synth_modes_cmd(
    config: &RunConfig,
    out: &Path,
    preset: &str,
    step_deg: f64,
    hemisphere: bool,
) -> Result<()> {
    let set = match preset {
        "canonical" => canonical_mode_set(step_deg, !hemisphere)?,
        other => {
            return Err(Error::invalid(format!(
                "unknown preset {other:?}; available: canonical"
            )))
        }
    };
    prepare_output(out, "synth-modes", config)?;
    let manifest = save_farfield_set(&set, out)?;
    println!("wrote {}-entry set: {}", set.len(), manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct AmbiguitySummary {
    count: usize,
    clean_references: usize,
    exclusion_radius_deg: f64,
    relative_threshold: f64,
}

#[derive(Serialize)]
struct EvaluationRecord<'a> {
    kind: &'a str,
    polarization: &'a str,
    entry_names: &'a [String],
    direction_count: usize,
    kpi: Kpi,
    ambiguities: AmbiguitySummary,
}

/// `evaluate`: the full uncertainty pipeline — sorted matrix, permutations,
/// per-reference vectors, KPI, and the ambiguity report.
pub fn evaluate_cmd(
    config: &RunConfig,
    out: &Path,
    set_path: &Path,
    references: &[Direction],
) -> Result<()> {
    let set = load_set(set_path)?;
    let matrix = assemble(config, &set)?;
    let u = matrix.uncertainty_matrix()?;
    prepare_output(out, "evaluate", config)?;

    let emit = &config.emit;
    if emit.sorted_matrix {
        u.save_sorted_csv(out.join("uncertainty_sorted.csv"))?;
    }
    if emit.permutations {
        u.save_permutations(
            out.join("permutation_columns.csv"),
            out.join("permutation_rows.csv"),
        )?;
    }
    if emit.vectors {
        for reference in references {
            let index = u.grid().nearest_index(*reference);
            u.save_vector_csv(
                out.join(format!("uncertainty_vector_{index:04}.csv")),
                index,
            )?;
        }
    }

    let kpi_value = kpi(&u, &u.weight_matrix())?;
    let report = u.detect_ambiguities(&config.ambiguity_params())?;
    if emit.ambiguities {
        report.save_csv(out.join("ambiguities.csv"), u.grid())?;
    }
    if emit.kpi {
        let record = EvaluationRecord {
            kind: matrix.kind().as_str(),
            polarization: &config.polarization,
            entry_names: matrix.entry_names(),
            direction_count: matrix.direction_count(),
            kpi: kpi_value,
            ambiguities: AmbiguitySummary {
                count: report.total_count(),
                clean_references: report.clean_reference_count(),
                exclusion_radius_deg: config.ambiguity.exclusion_radius_deg,
                relative_threshold: config.ambiguity.relative_threshold,
            },
        };
        write_json(&out.join("evaluation.json"), &record)?;
    }
    println!(
        "KPI {:.3} dB; {} ambiguities over {} DoAs ({} clean references)",
        kpi_value.db,
        report.total_count(),
        matrix.direction_count(),
        report.clean_reference_count()
    );
    Ok(())
}

/// `modeselect`: exhaustive subset sweep with ranked bests and degeneracy
/// groups.
pub fn modeselect_cmd(
    config: &RunConfig,
    out: &Path,
    set_path: &Path,
    min_size: usize,
    max_size: Option<usize>,
    tolerance_db: f64,
) -> Result<()> {
    let set = load_set(set_path)?;
    let grid = config.build_grid()?;
    let enumeration = enumerate_subsets(
        &set,
        &grid,
        config.polarization()?,
        config.matrix_kind()?,
        min_size,
        max_size.unwrap_or_else(|| set.len()),
        &config.ambiguity_params(),
    )?;
    let summary = summarize(&enumeration, config.matrix_kind()?, tolerance_db)?;
    prepare_output(out, "modeselect", config)?;
    enumeration.save_results_csv(out.join("subsets.csv"))?;
    write_json(&out.join("selection.json"), &summary)?;
    println!(
        "scored {} subsets ({} skipped); best per size written to selection.json",
        enumeration.results().len(),
        enumeration.skipped().len()
    );
    Ok(())
}

#[derive(Serialize)]
struct CoefficientRecord<'a> {
    name: &'a str,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct DirectionRecord {
    theta_deg: f64,
    phi_deg: f64,
}

#[derive(Serialize)]
struct IncidentRecord<'a> {
    reference: DirectionRecord,
    polarization: &'a str,
    coefficients: Vec<CoefficientRecord<'a>>,
    peak: DirectionRecord,
    peak_magnitude: f64,
}

/// `incident`: estimate the incident field for one reference DoA and write
/// the pattern plus its coefficients and peak.
pub fn incident_cmd(
    config: &RunConfig,
    out: &Path,
    set_path: &Path,
    reference: Direction,
    step_deg: Option<f64>,
) -> Result<()> {
    let set = load_set(set_path)?;
    let step = step_deg.unwrap_or_else(|| set.raster().theta_step_deg());
    let raster = Raster::uniform(step, set.raster().is_full_sphere())?;
    let estimate = estimate_incident_field(&set, reference, config.polarization()?, &raster)?;
    prepare_output(out, "incident", config)?;
    estimate.save_csv(out.join("incident.csv"))?;

    let (peak, magnitude) = estimate.peak_direction();
    let record = IncidentRecord {
        reference: DirectionRecord {
            theta_deg: reference.theta_deg(),
            phi_deg: reference.phi_deg(),
        },
        polarization: &config.polarization,
        coefficients: set
            .entries()
            .iter()
            .zip(estimate.coefficients())
            .map(|(e, c)| CoefficientRecord {
                name: e.name(),
                re: c.re,
                im: c.im,
            })
            .collect(),
        peak: DirectionRecord {
            theta_deg: peak.theta_deg(),
            phi_deg: peak.phi_deg(),
        },
        peak_magnitude: magnitude,
    };
    write_json(&out.join("incident.json"), &record)?;
    println!(
        "incident-field peak {:.6} at ({:.2}, {:.2}) deg",
        magnitude,
        peak.theta_deg(),
        peak.phi_deg()
    );
    Ok(())
}

#[derive(Serialize)]
struct PeakRecord {
    index: usize,
    theta_deg: f64,
    phi_deg: f64,
    db: f64,
}

#[derive(Serialize)]
struct MusicRecord {
    source: DirectionRecord,
    snr_db: f64,
    snapshots: u32,
    covariance: &'static str,
    seed: Option<u64>,
    peak: PeakRecord,
    secondary: Option<PeakRecord>,
    secondary_exclusion_radius_deg: f64,
}

/// `music`: pseudo-spectrum over the grid, analytic covariance by default or
/// seeded snapshot simulation with `--seed`.
pub fn music_cmd(
    config: &RunConfig,
    out: &Path,
    set_path: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let set = load_set(set_path)?;
    let matrix = assemble(config, &set)?;
    let scenario = config.build_scenario()?;
    let spectrum = match seed {
        None => music_spectrum(&matrix, &scenario)?,
        Some(s) => {
            let r = sampled_covariance(&matrix, &scenario, s)?;
            music_spectrum_from_covariance(&matrix, &r)?
        }
    };
    prepare_output(out, "music", config)?;
    spectrum.save_csv(out.join("music.csv"))?;

    let peak_at = |index: usize, db: f64| {
        let d = matrix.grid().directions()[index];
        PeakRecord {
            index,
            theta_deg: d.theta_deg(),
            phi_deg: d.phi_deg(),
            db,
        }
    };
    let exclusion = config.ambiguity.exclusion_radius_deg;
    let secondary = spectrum
        .secondary_peak(scenario.source_doa(), exclusion.to_radians())
        .map(|(i, db)| peak_at(i, db));
    let record = MusicRecord {
        source: DirectionRecord {
            theta_deg: scenario.source_doa().theta_deg(),
            phi_deg: scenario.source_doa().phi_deg(),
        },
        snr_db: scenario.snr_db(),
        snapshots: scenario.snapshot_count(),
        covariance: if seed.is_some() { "sampled" } else { "expected" },
        seed,
        peak: peak_at(spectrum.peak_index(), 0.0),
        secondary,
        secondary_exclusion_radius_deg: exclusion,
    };
    let summary = match &record.secondary {
        Some(s) => format!(
            "; strongest off-source value {:.2} dB at ({:.2}, {:.2}) deg",
            s.db, s.theta_deg, s.phi_deg
        ),
        None => String::new(),
    };
    println!(
        "spectrum peak at ({:.2}, {:.2}) deg{summary}",
        record.peak.theta_deg, record.peak.phi_deg
    );
    write_json(&out.join("music.json"), &record)?;
    Ok(())
}

#[derive(Serialize)]
struct CrbRecord {
    snr_db: f64,
    snapshots: u32,
    signal_power: f64,
    min_deg2: f64,
    max_deg2: f64,
    min_display_deg_per_100: f64,
    max_display_deg_per_100: f64,
}

/// `crb`: azimuth Cramér–Rao bound over every grid DoA, in squared degrees.
pub fn crb_cmd(config: &RunConfig, out: &Path, set_path: &Path) -> Result<()> {
    let set = load_set(set_path)?;
    let matrix = assemble(config, &set)?;
    let scenario = config.build_scenario()?;
    let map = crb_phi_map(&set, &matrix, &scenario)?;
    prepare_output(out, "crb", config)?;
    save_grid_map_csv(out.join("crb.csv"), matrix.grid(), &map)?;

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &map {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let record = CrbRecord {
        snr_db: scenario.snr_db(),
        snapshots: scenario.snapshot_count(),
        signal_power: scenario.signal_power(),
        min_deg2: lo,
        max_deg2: hi,
        min_display_deg_per_100: crb_display_deg_per_100(lo),
        max_display_deg_per_100: crb_display_deg_per_100(hi),
    };
    write_json(&out.join("crb.json"), &record)?;
    println!(
        "CRB range [{:.4}, {:.4}] deg^2 over {} DoAs",
        lo,
        hi,
        map.len()
    );
    Ok(())
}

/// `grid`: write the DoA grid itself for inspection or reuse.
pub fn grid_cmd(config: &RunConfig, out: &Path) -> Result<()> {
    let grid = config.build_grid()?;
    prepare_output(out, "grid", config)?;
    grid.save_csv(out.join("grid.csv"))?;
    let (lo, hi) = grid.theta_bounds();
    println!(
        "{} DoAs over theta [{:.2}, {:.2}] deg",
        grid.len(),
        lo.to_degrees(),
        hi.to_degrees()
    );
    Ok(())
}

/// Resolved output directory for a command: flag, else config.
pub fn resolve_out(config: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from(&config.output_dir))
}
