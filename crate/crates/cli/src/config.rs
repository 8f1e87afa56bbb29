//! Run configuration: JSON file format, defaults, and flag merging.
//!
//! Precedence is flags > config file > defaults. Every command echoes the
//! fully resolved configuration into `run.json` in its output directory, so a
//! run can be reproduced from its artifacts alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use df_eval_core::estimators::SourceScenario;
use df_eval_core::farfield::Polarization;
use df_eval_core::geometry::{generate_cap_grid, Direction, DoAGrid};
use df_eval_core::uncertainty::{AmbiguityParams, MatrixKind};
use df_eval_core::{Error, Result};

/// DoA grid parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Lower colatitude bound of the evaluation cap, degrees.
    pub theta_min_deg: f64,
    /// Upper colatitude bound, degrees.
    pub theta_max_deg: f64,
    /// Approximate number of grid DoAs (area-balanced placement decides the
    /// exact count).
    pub target_count: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            theta_min_deg: 45.0,
            theta_max_deg: 90.0,
            target_count: 250,
        }
    }
}

/// Ambiguity-detector parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbiguityConfig {
    /// Great-circle radius around the reference to ignore, degrees.
    pub exclusion_radius_deg: f64,
    /// Fraction of the balanced self term a local maximum must reach, (0, 1].
    pub relative_threshold: f64,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        Self {
            exclusion_radius_deg: 30.0,
            relative_threshold: 0.5,
        }
    }
}

/// Single-source estimator scenario parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Source colatitude, degrees.
    pub source_theta_deg: f64,
    /// Source azimuth, degrees.
    pub source_phi_deg: f64,
    /// Signal-to-noise ratio, dB.
    pub snr_db: f64,
    /// Snapshot count N.
    pub snapshots: u32,
    /// Linear signal power σ_s².
    pub signal_power: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            source_theta_deg: 80.0,
            source_phi_deg: 90.0,
            snr_db: 0.0,
            snapshots: 1,
            signal_power: 1.0,
        }
    }
}

/// Which artifacts `evaluate` writes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitConfig {
    /// Sorted uncertainty matrix CSV.
    pub sorted_matrix: bool,
    /// Column/row permutation CSVs.
    pub permutations: bool,
    /// Per-reference uncertainty-vector CSVs.
    pub vectors: bool,
    /// KPI + ambiguity summary JSON.
    pub kpi: bool,
    /// Full ambiguity findings CSV.
    pub ambiguities: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self {
            sorted_matrix: true,
            permutations: true,
            vectors: true,
            kpi: true,
            ambiguities: true,
        }
    }
}

/// Fully resolvable run configuration. Defaults reproduce the reference
/// setup: θ ∈ [45°, 90°], roughly 250 DoAs, θ-polarization, linear distance
/// weighting.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// DoA grid parameters.
    pub grid: GridConfig,
    /// Sampled field component: `"theta"` or `"phi"`.
    pub polarization: String,
    /// Matrix value interpretation: `"port"`, `"directivity"`, `"realized"`.
    pub kind: String,
    /// Distance weighting; only `"linear"` is defined.
    pub weighting: String,
    /// Ambiguity-detector parameters.
    pub ambiguity: AmbiguityConfig,
    /// Estimator scenario parameters.
    pub scenario: ScenarioConfig,
    /// Output directory (overridden by `--out`).
    pub output_dir: String,
    /// Artifact switches for `evaluate`.
    pub emit: EmitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            polarization: "theta".into(),
            kind: "port".into(),
            weighting: "linear".into(),
            ambiguity: AmbiguityConfig::default(),
            scenario: ScenarioConfig::default(),
            output_dir: "out".into(),
            emit: EmitConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads a config file, or the defaults when no path is given. File
    /// problems are configuration errors: unknown keys and malformed JSON are
    /// rejected rather than silently ignored.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!("invalid config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.weighting != "linear" {
            return Err(Error::invalid(format!(
                "unknown weighting {:?}; only \"linear\" is defined",
                self.weighting
            )));
        }
        Ok(())
    }

    /// Parsed polarization.
    pub fn polarization(&self) -> Result<Polarization> {
        self.polarization.parse()
    }

    /// Parsed matrix kind.
    pub fn matrix_kind(&self) -> Result<MatrixKind> {
        self.kind.parse()
    }

    /// Builds the DoA grid these parameters describe.
    pub fn build_grid(&self) -> Result<DoAGrid> {
        generate_cap_grid(
            self.grid.theta_min_deg.to_radians(),
            self.grid.theta_max_deg.to_radians(),
            self.grid.target_count,
        )
    }

    /// Detector parameters in radians.
    pub fn ambiguity_params(&self) -> AmbiguityParams {
        AmbiguityParams {
            exclusion_radius: self.ambiguity.exclusion_radius_deg.to_radians(),
            relative_threshold: self.ambiguity.relative_threshold,
        }
    }

    /// Builds the estimator scenario (source DoA, SNR, snapshots, power).
    pub fn build_scenario(&self) -> Result<SourceScenario> {
        let doa = Direction::from_degrees(
            self.scenario.source_theta_deg,
            self.scenario.source_phi_deg,
        )?;
        SourceScenario::new(doa, self.scenario.snr_db)?
            .with_polarization(self.polarization()?)
            .with_snapshot_count(self.scenario.snapshots)?
            .with_signal_power(self.scenario.signal_power)
    }
}
