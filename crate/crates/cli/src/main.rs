//! `spinsqz`: reproducible runs of the hybrid squeezing model, the estimators
//! and the tomography chain.

mod commands;
mod config;
mod error;
mod provenance;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spinsqz_core::experiments::{AxisScale, AxisSpec, LinearRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "spinsqz",
    version,
    about = "Spin-ensemble resonator squeezing model, estimators and tomography"
)]
pub struct Cli {
    /// JSON run configuration; omitted sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for grid evaluation (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write a gnuplot script next to grid outputs.
    #[arg(long, global = true)]
    pub gnuplot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// |S11| over probe detuning × spin-resonator detuning.
    Spectrum {
        /// Probe detuning from f_r, `min:max:points` in Hz.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        probe: Option<LinearRange>,
        /// Spin-resonator detuning, `min:max:points` in Hz.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        detuning: Option<LinearRange>,
    },
    /// Transfer efficiency |t|² over two swept rates.
    Efficiency {
        /// `name:min:max[:points[:log]]`, name one of kappa_ext, kappa_int, g_eff, gamma_s.
        #[arg(long, value_parser = parse_axis)]
        x: Option<AxisSpec>,
        #[arg(long, value_parser = parse_axis)]
        y: Option<AxisSpec>,
    },
    /// Squeezing after the hybrid for each row of a reference table.
    Predict {
        /// CSV with columns pump_power, sigma_sq, sigma_as.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// `all` or one of off_resonant, resonator_resonant, fully_resonant.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Parameter estimation from measured data.
    Fit {
        #[command(subcommand)]
        kind: FitKind,
    },
    /// Gaussian state reconstruction from I/Q samples.
    Tomo {
        /// Binary (IQSAMP01) or CSV (header I,Q) samples.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Calibration JSON as written by `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Gain and added noise from a temperature sweep.
    Calibrate {
        /// CSV with columns temperature_k, variance_v2.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Detection frequency, Hz; defaults to f_r.
        #[arg(long)]
        freq: Option<f64>,
        /// Loss between the attenuator and the HEMT, dB.
        #[arg(long, default_value_t = spinsqz_core::tomography::DEFAULT_PATH_LOSS_DB)]
        path_loss_db: f64,
    },
    /// ³¹P donor spin Hamiltonian.
    Spin {
        #[command(subcommand)]
        kind: SpinKind,
    },
    /// Seeded synthetic data in the formats the other commands read.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Debug, Subcommand)]
pub enum FitKind {
    /// Resonator circle fit; CSV columns freq, re, im.
    Circle {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Spin coupling and linewidth; CSV columns detuning, freq, re, im.
    Spins {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Resonator rates `f_r:kappa:kappa_ext` in Hz; defaults to the config.
        #[arg(long)]
        rates: Option<String>,
        /// Fit |S11| only (for background-corrected magnitudes).
        #[arg(long)]
        magnitude: bool,
    },
    /// Inversion recovery; CSV columns delay, area[, error].
    T1 {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Hahn-echo decay; CSV columns delay, area[, error].
    T2 {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Echo area; CSV columns time, amplitude.
    Echo {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SpinKind {
    /// Eigenfrequencies at one field, or a sweep `min:max:points`.
    Levels {
        #[arg(long, allow_hyphen_values = true, conflicts_with = "fields")]
        field: Option<f64>,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        fields: Option<LinearRange>,
    },
    /// Field at which a transition reaches a frequency.
    Resonance {
        #[arg(long)]
        freq: f64,
        /// `from->to` with labels dd, du, ud, uu.
        #[arg(long, default_value = "dd->ud")]
        transition: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Reflection spectrum with a cable background.
    Circle {
        #[arg(long, default_value_t = 40.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Half-width of the frequency window, Hz.
        #[arg(long, default_value_t = 20e6)]
        span: f64,
    },
    /// Spectrum map over spin-resonator detuning.
    Spins {
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    T1 {
        #[arg(long, default_value_t = 0.003)]
        noise: f64,
    },
    T2 {
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    Echo {
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// Squeezed I/Q samples plus the calibration that produced them.
    Iq {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Squeezing below vacuum, dB.
        #[arg(long, default_value_t = 3.0)]
        squeezing_db: f64,
        /// Anti-squeezing above vacuum, dB.
        #[arg(long, default_value_t = 6.0)]
        anti_squeezing_db: f64,
        /// Squeezed-axis angle, degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        angle_deg: f64,
        /// Write CSV instead of the binary format.
        #[arg(long)]
        csv: bool,
    },
    /// Thermal-source variance sweep.
    Planck {
        #[arg(long, default_value_t = 1e-3)]
        noise: f64,
    },
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a number"))
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a point count"))
}

/// `min:max:points`.
pub fn parse_range(s: &str) -> Result<LinearRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, points] = parts[..] else {
        return Err(format!("expected min:max:points, got `{s}`"));
    };
    LinearRange::new(parse_f64(min)?, parse_f64(max)?, parse_usize(points)?).map_err(|e| e.to_string())
}

/// `name:min:max[:points[:linear|log]]`.
pub fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(3..=5).contains(&parts.len()) {
        return Err(format!("expected name:min:max[:points[:log]], got `{s}`"));
    }
    let name = parts[0].parse().map_err(|e: spinsqz_core::Error| e.to_string())?;
    let points = match parts.get(3) {
        Some(p) => parse_usize(p)?,
        None => spinsqz_core::experiments::DEFAULT_GRID_POINTS,
    };
    let scale = match parts.get(4).map(|s| s.trim()) {
        None | Some("linear") => AxisScale::Linear,
        Some("log") => AxisScale::Log,
        Some(other) => return Err(format!("unknown axis scale `{other}`")),
    };
    let axis = AxisSpec {
        name,
        min: parse_f64(parts[1])?,
        max: parse_f64(parts[2])?,
        points,
        scale,
    };
    axis.validate().map_err(|e| e.to_string())?;
    Ok(axis)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPINSQZ_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinsqz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinsqz_core::experiments::SweepParam;

    #[test]
    fn axis_syntax() {
        let a = parse_axis("kappa_int:100:1e6:51:log").unwrap();
        assert_eq!(a.name, SweepParam::KappaInt);
        assert_eq!((a.points, a.scale), (51, AxisScale::Log));
        assert_eq!(parse_axis("g_eff:0:2e6").unwrap().points, 201);
        assert!(parse_axis("kappa:0:1").unwrap_err().contains("not one of"));
        assert!(parse_axis("g_eff:0:1:5:cubic").is_err());
        assert!(parse_axis("g_eff:1:0").is_err());
    }

    #[test]
    fn range_syntax() {
        let r = parse_range("-5e6:5e6:21").unwrap();
        assert_eq!((r.min, r.max, r.points), (-5e6, 5e6, 21));
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
