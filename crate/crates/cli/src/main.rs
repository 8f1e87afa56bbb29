//! `df-eval`: deterministic evaluation of multi-port direction-finding
//! antenna systems from sampled far-field data.
//!
//! Subcommands generate test sets (`synth`), run the uncertainty pipeline
//! (`evaluate`), sweep entry subsets (`modeselect`), and provide estimation
//! baselines (`incident`, `music`, `crb`, `grid`). Options resolve as
//! flags > config file > defaults; every run echoes its resolved
//! configuration to `run.json`. Outputs are byte-identical across reruns and
//! worker counts (`DF_EVAL_THREADS` changes speed, never results).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
//! 4 numeric degeneracy.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use df_eval_core::geometry::Direction;
use df_eval_core::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "df-eval", version, about = "Deterministic direction-finding evaluation")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (default: config `output_dir`, "out").
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// DoA grid overrides.
#[derive(Args, Clone, Copy, Default)]
struct GridArgs {
    /// Lower colatitude bound of the evaluation cap, degrees.
    #[arg(long, value_name = "DEG")]
    theta_min: Option<f64>,

    /// Upper colatitude bound, degrees.
    #[arg(long, value_name = "DEG")]
    theta_max: Option<f64>,

    /// Approximate number of grid DoAs.
    #[arg(long, value_name = "N")]
    target_count: Option<usize>,
}

/// Measurement-matrix overrides.
#[derive(Args, Clone, Default)]
struct MatrixArgs {
    /// Value interpretation: port | directivity | realized.
    #[arg(long)]
    kind: Option<String>,

    /// Sampled field component: theta | phi.
    #[arg(long)]
    polarization: Option<String>,
}

/// Ambiguity-detector overrides.
#[derive(Args, Clone, Copy, Default)]
struct DetectorArgs {
    /// Exclusion radius around each reference, degrees.
    #[arg(long, value_name = "DEG")]
    exclusion_deg: Option<f64>,

    /// Relative correlation threshold in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
}

/// Estimator-scenario overrides.
#[derive(Args, Clone, Default)]
struct ScenarioArgs {
    /// Source DoA as colatitude and azimuth, degrees.
    #[arg(long, num_args = 2, value_names = ["THETA_DEG", "PHI_DEG"])]
    source: Option<Vec<f64>>,

    /// Signal-to-noise ratio, dB.
    #[arg(long, value_name = "DB")]
    snr: Option<f64>,

    /// Snapshot count.
    #[arg(long, value_name = "N")]
    snapshots: Option<u32>,

    /// Linear signal power.
    #[arg(long, value_name = "POWER")]
    signal_power: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate far-field sets.
    #[command(subcommand)]
    Synth(SynthCommand),

    /// Uncertainty pipeline: sorted matrix, permutations, KPI, ambiguities.
    Evaluate {
        /// Far-field manifest to evaluate.
        #[arg(long = "set", value_name = "MANIFEST")]
        set: PathBuf,

        /// Reference DoA for an uncertainty-vector CSV (repeatable).
        #[arg(long = "ref", num_args = 2, value_names = ["THETA_DEG", "PHI_DEG"], action = clap::ArgAction::Append)]
        references: Vec<f64>,

        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        matrix: MatrixArgs,
        #[command(flatten)]
        detector: DetectorArgs,
    },

    /// Exhaustive subset sweep with ranked bests and degeneracy groups.
    Modeselect {
        /// Far-field manifest to sweep.
        #[arg(long = "set", value_name = "MANIFEST")]
        set: PathBuf,

        /// Smallest subset size.
        #[arg(long, default_value_t = 1)]
        min_size: usize,

        /// Largest subset size (default: all entries).
        #[arg(long)]
        max_size: Option<usize>,

        /// KPI tolerance for ties and degeneracy grouping, dB.
        #[arg(long, default_value_t = df_eval_core::modeselect::DEFAULT_DEGENERACY_TOLERANCE_DB)]
        tolerance_db: f64,

        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        matrix: MatrixArgs,
        #[command(flatten)]
        detector: DetectorArgs,
    },

    /// Estimate the incident field for one reference DoA.
    Incident {
        /// Far-field manifest to use.
        #[arg(long = "set", value_name = "MANIFEST")]
        set: PathBuf,

        /// Reference DoA as colatitude and azimuth, degrees.
        #[arg(long = "ref", num_args = 2, value_names = ["THETA_DEG", "PHI_DEG"], required = true)]
        reference: Vec<f64>,

        /// Output raster step, degrees (default: the set's own step).
        #[arg(long, value_name = "DEG")]
        step: Option<f64>,

        #[command(flatten)]
        matrix: MatrixArgs,
    },

    /// MUSIC pseudo-spectrum over the DoA grid.
    Music {
        /// Far-field manifest to use.
        #[arg(long = "set", value_name = "MANIFEST")]
        set: PathBuf,

        /// Simulate snapshots with this seed instead of the analytic
        /// covariance.
        #[arg(long)]
        seed: Option<u64>,

        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        matrix: MatrixArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },

    /// Azimuth Cramér–Rao bound over every grid DoA.
    Crb {
        /// Far-field manifest to use.
        #[arg(long = "set", value_name = "MANIFEST")]
        set: PathBuf,

        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        matrix: MatrixArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },

    /// Write the DoA grid itself.
    Grid {
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Uniform circular array of vertical monopoles.
    Uca {
        /// Number of elements.
        #[arg(long)]
        elements: usize,

        /// Neighbor spacing in wavelengths.
        #[arg(long)]
        spacing: f64,

        /// Monopole length in wavelengths.
        #[arg(long)]
        length: f64,

        /// Raster step, degrees.
        #[arg(long, value_name = "DEG")]
        step: Option<f64>,

        /// Design frequency, Hz.
        #[arg(long, value_name = "HZ")]
        frequency_hz: Option<f64>,
    },

    /// Preset mode sets.
    Modes {
        /// Preset name (canonical: VED, MDX, MDY, ZTH).
        #[arg(long, default_value = "canonical")]
        preset: String,

        /// Raster step, degrees.
        #[arg(long, value_name = "DEG", default_value_t = 1.0)]
        step: f64,

        /// Restrict the raster to the upper hemisphere.
        #[arg(long)]
        hemisphere: bool,
    },
}

impl RunConfig {
    fn apply_grid(&mut self, args: &GridArgs) {
        if let Some(v) = args.theta_min {
            self.grid.theta_min_deg = v;
        }
        if let Some(v) = args.theta_max {
            self.grid.theta_max_deg = v;
        }
        if let Some(v) = args.target_count {
            self.grid.target_count = v;
        }
    }

    fn apply_matrix(&mut self, args: &MatrixArgs) {
        if let Some(v) = &args.kind {
            self.kind = v.clone();
        }
        if let Some(v) = &args.polarization {
            self.polarization = v.clone();
        }
    }

    fn apply_detector(&mut self, args: &DetectorArgs) {
        if let Some(v) = args.exclusion_deg {
            self.ambiguity.exclusion_radius_deg = v;
        }
        if let Some(v) = args.threshold {
            self.ambiguity.relative_threshold = v;
        }
    }

    fn apply_scenario(&mut self, args: &ScenarioArgs) -> Result<()> {
        if let Some(pair) = &args.source {
            let [theta, phi] = pair.as_slice() else {
                return Err(Error::invalid("--source takes exactly two angles"));
            };
            self.scenario.source_theta_deg = *theta;
            self.scenario.source_phi_deg = *phi;
        }
        if let Some(v) = args.snr {
            self.scenario.snr_db = v;
        }
        if let Some(v) = args.snapshots {
            self.scenario.snapshots = v;
        }
        if let Some(v) = args.signal_power {
            self.scenario.signal_power = v;
        }
        Ok(())
    }
}

/// Parses repeatable `--ref θ φ` pairs into directions.
fn parse_references(values: &[f64]) -> Result<Vec<Direction>> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::invalid("--ref takes angle pairs"));
    }
    values
        .chunks_exact(2)
        .map(|p| Direction::from_degrees(p[0], p[1]))
        .collect()
}

/// Applies `DF_EVAL_THREADS` before any parallel work. The cap changes only
/// how fast answers arrive; merge orders are fixed, so results are
/// bit-identical at any setting.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DF_EVAL_THREADS") else {
        return Ok(());
    };
    let count: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            Error::invalid(format!(
                "DF_EVAL_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(count)
        .build_global()
        .map_err(|e| Error::invalid(format!("cannot apply DF_EVAL_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let Cli {
        config: config_path,
        out: out_flag,
        command,
    } = cli;
    let mut config = RunConfig::load(config_path.as_deref())?;

    match command {
        Command::Synth(synth) => {
            let out = commands::resolve_out(&config, out_flag);
            match synth {
                SynthCommand::Uca {
                    elements,
                    spacing,
                    length,
                    step,
                    frequency_hz,
                } => commands::synth_uca_cmd(
                    &config, &out, elements, spacing, length, step, frequency_hz,
                ),
                SynthCommand::Modes {
                    preset,
                    step,
                    hemisphere,
                } => commands::synth_modes_cmd(&config, &out, &preset, step, hemisphere),
            }
        }
        Command::Evaluate {
            set,
            references,
            grid,
            matrix,
            detector,
        } => {
            config.apply_grid(&grid);
            config.apply_matrix(&matrix);
            config.apply_detector(&detector);
            let references = parse_references(&references)?;
            let out = commands::resolve_out(&config, out_flag);
            commands::evaluate_cmd(&config, &out, &set, &references)
        }
        Command::Modeselect {
            set,
            min_size,
            max_size,
            tolerance_db,
            grid,
            matrix,
            detector,
        } => {
            config.apply_grid(&grid);
            config.apply_matrix(&matrix);
            config.apply_detector(&detector);
            let out = commands::resolve_out(&config, out_flag);
            commands::modeselect_cmd(&config, &out, &set, min_size, max_size, tolerance_db)
        }
        Command::Incident {
            set,
            reference,
            step,
            matrix,
        } => {
            config.apply_matrix(&matrix);
            let reference = parse_references(&reference)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::invalid("--ref is required"))?;
            let out = commands::resolve_out(&config, out_flag);
            commands::incident_cmd(&config, &out, &set, reference, step)
        }
        Command::Music {
            set,
            seed,
            grid,
            matrix,
            scenario,
        } => {
            config.apply_grid(&grid);
            config.apply_matrix(&matrix);
            config.apply_scenario(&scenario)?;
            let out = commands::resolve_out(&config, out_flag);
            commands::music_cmd(&config, &out, &set, seed)
        }
        Command::Crb {
            set,
            grid,
            matrix,
            scenario,
        } => {
            config.apply_grid(&grid);
            config.apply_matrix(&matrix);
            config.apply_scenario(&scenario)?;
            let out = commands::resolve_out(&config, out_flag);
            commands::crb_cmd(&config, &out, &set)
        }
        Command::Grid { grid } => {
            config.apply_grid(&grid);
            let out = commands::resolve_out(&config, out_flag);
            commands::grid_cmd(&config, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("df-eval: {e}");
            let code: u8 = match e {
                Error::InvalidArgument(_) => 2,
                Error::Validation(_) | Error::Io(_) | Error::Json(_) => 3,
                Error::Degenerate(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}
